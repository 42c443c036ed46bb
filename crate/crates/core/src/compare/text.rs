//! String similarity metrics. All functions work on Unicode scalar values,
//! are symmetric and return a score in `[0, 1]` with 1 for equal inputs.

use std::collections::{BTreeMap, BTreeSet};

fn chars(s: &str) -> Vec<char> {
    s.chars().collect()
}

fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn exact(a: &str, b: &str) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Plain edit distance over chars, two-row dynamic programming.
pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let a = chars(a);
    let b = chars(b);
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`.
pub fn levenshtein(a: &str, b: &str) -> f64 {
    let max = a.chars().count().max(b.chars().count());
    if max == 0 {
        return 1.0;
    }
    1.0 - levenshtein_distance(a, b) as f64 / max as f64
}

/// Optimal string alignment distance (adjacent transpositions count once).
pub fn osa_distance(a: &str, b: &str) -> usize {
    let a = chars(a);
    let b = chars(b);
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut v = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                v = v.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = v;
        }
    }
    d[n][m]
}

pub fn damerau_levenshtein(a: &str, b: &str) -> f64 {
    let max = a.chars().count().max(b.chars().count());
    if max == 0 {
        return 1.0;
    }
    1.0 - osa_distance(a, b) as f64 / max as f64
}

pub fn jaro(a: &str, b: &str) -> f64 {
    // Greedy matching is order dependent; fixing the argument order makes
    // the metric symmetric.
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let a = chars(a);
    let b = chars(b);
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == *ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let a_seq = a.iter().zip(&a_matched).filter(|(_, m)| **m).map(|(c, _)| c);
    let b_seq = b.iter().zip(&b_matched).filter(|(_, m)| **m).map(|(c, _)| c);
    let half_transpositions = a_seq.zip(b_seq).filter(|(x, y)| x != y).count();
    let m = matches as f64;
    let t = (half_transpositions / 2) as f64;
    ((m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0).min(1.0)
}

/// Jaro with the Winkler prefix bonus (scale 0.1, prefix capped at 4).
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let j = jaro(a, b);
    let prefix = a
        .chars()
        .zip(b.chars())
        .take_while(|(x, y)| x == y)
        .take(4)
        .count() as f64;
    (j + prefix * 0.1 * (1.0 - j)).min(1.0)
}

fn token_set(s: &str) -> BTreeSet<&str> {
    tokens(s).into_iter().collect()
}

pub fn jaccard(a: &str, b: &str) -> f64 {
    let (x, y) = (token_set(a), token_set(b));
    ratio(x.intersection(&y).count(), x.union(&y).count())
}

pub fn dice(a: &str, b: &str) -> f64 {
    let (x, y) = (token_set(a), token_set(b));
    ratio(2 * x.intersection(&y).count(), x.len() + y.len())
}

/// Overlap coefficient `|A ∩ B| / min(|A|, |B|)`.
pub fn overlap(a: &str, b: &str) -> f64 {
    let (x, y) = (token_set(a), token_set(b));
    if x.is_empty() && y.is_empty() {
        return 1.0;
    }
    if x.is_empty() || y.is_empty() {
        return 0.0;
    }
    ratio(x.intersection(&y).count(), x.len().min(y.len()))
}

/// Cosine of raw token-count vectors.
pub fn cosine(a: &str, b: &str) -> f64 {
    fn count(s: &str) -> BTreeMap<&str, u64> {
        let mut m = BTreeMap::new();
        for t in tokens(s) {
            *m.entry(t).or_default() += 1;
        }
        m
    }
    let (x, y) = (count(a), count(b));
    if x.is_empty() && y.is_empty() {
        return 1.0;
    }
    if x.is_empty() || y.is_empty() {
        return 0.0;
    }
    let dot: u64 = x.iter().map(|(t, c)| c * y.get(t).copied().unwrap_or(0)).sum();
    let nx: u64 = x.values().map(|c| c * c).sum();
    let ny: u64 = y.values().map(|c| c * c).sum();
    (dot as f64 / ((nx * ny) as f64).sqrt()).min(1.0)
}

fn qgrams(s: &str, q: usize) -> BTreeSet<Vec<char>> {
    let c = chars(s);
    if c.len() <= q {
        return BTreeSet::from([c]);
    }
    c.windows(q).map(<[char]>::to_vec).collect()
}

/// Jaccard similarity of the character q-gram sets. Strings no longer than
/// `q` form a single gram.
pub fn qgram(a: &str, b: &str, q: usize) -> f64 {
    let q = q.max(1);
    let (x, y) = (qgrams(a, q), qgrams(b, q));
    ratio(x.intersection(&y).count(), x.union(&y).count())
}

pub fn longest_common_substring(a: &str, b: &str) -> usize {
    let a = chars(a);
    let b = chars(b);
    let mut best = 0;
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for ca in &a {
        for (j, cb) in b.iter().enumerate() {
            curr[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(curr[j + 1]);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    best
}

/// Longest common substring length over the longer length.
pub fn lcs_substring(a: &str, b: &str) -> f64 {
    let max = a.chars().count().max(b.chars().count());
    ratio(longest_common_substring(a, b), max)
}

pub fn longest_common_subsequence(a: &str, b: &str) -> usize {
    let a = chars(a);
    let b = chars(b);
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for ca in &a {
        for (j, cb) in b.iter().enumerate() {
            curr[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

pub fn lcs_subsequence(a: &str, b: &str) -> f64 {
    let max = a.chars().count().max(b.chars().count());
    ratio(longest_common_subsequence(a, b), max)
}

pub fn prefix(a: &str, b: &str) -> f64 {
    let common = a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count();
    ratio(common, a.chars().count().max(b.chars().count()))
}

pub fn suffix(a: &str, b: &str) -> f64 {
    let common = a
        .chars()
        .rev()
        .zip(b.chars().rev())
        .take_while(|(x, y)| x == y)
        .count();
    ratio(common, a.chars().count().max(b.chars().count()))
}

fn monge_elkan_directed(x: &[&str], y: &[&str]) -> f64 {
    let total: f64 = x
        .iter()
        .map(|tx| y.iter().map(|ty| jaro_winkler(tx, ty)).fold(0.0, f64::max))
        .sum();
    total / x.len() as f64
}

/// Symmetrised Monge-Elkan over whitespace tokens with Jaro-Winkler inside.
pub fn monge_elkan(a: &str, b: &str) -> f64 {
    let (x, y) = (tokens(a), tokens(b));
    if x.is_empty() && y.is_empty() {
        return 1.0;
    }
    if x.is_empty() || y.is_empty() {
        return 0.0;
    }
    ((monge_elkan_directed(&x, &y) + monge_elkan_directed(&y, &x)) / 2.0).min(1.0)
}

/// `1 - |a - b| / max(|a|, |b|)` on parsed numbers; exact match on text that
/// does not parse.
pub fn numeric(a: &str, b: &str) -> f64 {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => numeric_values(x, y),
        _ => exact(a, b),
    }
}

pub fn numeric_values(x: f64, y: f64) -> f64 {
    if x == y {
        return 1.0;
    }
    let scale = x.abs().max(y.abs());
    (1.0 - (x - y).abs() / scale).clamp(0.0, 1.0)
}
