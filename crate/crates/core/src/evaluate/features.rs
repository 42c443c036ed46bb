use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport, GoldStandard};
use crate::compare::{Comparator, Leaf};
use crate::ingest::Dataset;
use crate::model::{Entity, ValueKind, Verdict};
use crate::normalize::{Cleaner, CleanerChain};

/// Below this ratio of distinct values a property is flagged.
const DISCRIMINATIVE_MIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureRow {
    pub property: String,
    /// Share of entities with at least one value.
    pub fill_rate: f64,
    /// Distinct values per entity carrying the property.
    pub distinctness: f64,
    pub non_discriminative: bool,
    /// Comparator used for the standalone score.
    pub comparator: String,
    /// Cut that maximises standalone f1; absent if no labeled pair is
    /// comparable on this property.
    pub best_threshold: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Default single-leaf comparator for a property, chosen by value kind.
fn default_leaf(property: &str, kind: ValueKind) -> Leaf {
    let chain = CleanerChain::new;
    match kind {
        ValueKind::Url => Leaf::new(property, Comparator::Exact)
            .with_cleaners(chain(vec![Cleaner::UrlNormalize])),
        ValueKind::Geopoint => Leaf::new(property, Comparator::Geo(250.0)),
        ValueKind::Number => Leaf::new(property, Comparator::Numeric),
        ValueKind::Timestamp => Leaf::new(property, Comparator::Temporal(86_400.0)),
        ValueKind::Text => Leaf::new(property, Comparator::Levenshtein).with_cleaners(chain(vec![
            Cleaner::Lowercase,
            Cleaner::StripAccents,
            Cleaner::CollapseWhitespace,
            Cleaner::Trim,
        ])),
    }
}

fn dominant_kind(entities: &[Entity], property: &str) -> ValueKind {
    let mut counts: Vec<(ValueKind, usize)> = Vec::new();
    for v in entities.iter().flat_map(|e| e.values(property)) {
        match counts.iter_mut().find(|(k, _)| *k == v.kind()) {
            Some((_, n)) => *n += 1,
            None => counts.push((v.kind(), 1)),
        }
    }
    counts
        .into_iter()
        .max_by_key(|(_, n)| *n)
        .map(|(k, _)| k)
        .unwrap_or(ValueKind::Text)
}

/// Fill rate, distinctness and standalone f1 for every property of the
/// dataset, in order of first appearance.
///
/// The standalone score sweeps a single default leaf over the labeled same
/// and different pairs; a pair where either side lacks the property is never
/// accepted. Among equal f1 the lowest threshold wins.
pub fn feature_report(dataset: &Dataset, gold: &GoldStandard) -> Result<Vec<FeatureRow>, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let by_id: HashMap<&str, &Entity> = dataset
        .entities
        .iter()
        .map(|e| (e.id.as_str(), e))
        .collect();
    let labeled: Vec<(&Entity, &Entity, bool)> = gold
        .labels()
        .filter(|l| matches!(l.verdict, Verdict::Same | Verdict::Different))
        .filter_map(|l| {
            let a = by_id.get(l.pair.a().as_str())?;
            let b = by_id.get(l.pair.b().as_str())?;
            Some((*a, *b, l.verdict == Verdict::Same))
        })
        .collect();
    let same_total = labeled.iter().filter(|(_, _, s)| *s).count() as u64;
    let n = dataset.len().max(1) as f64;

    let mut rows = Vec::new();
    for property in dataset.properties() {
        let carriers: Vec<&Entity> = dataset.entities.iter().filter(|e| e.has(property)).collect();
        let distinct: HashSet<_> = carriers
            .iter()
            .flat_map(|e| e.values(property).iter().map(|v| v.key()))
            .collect();
        let distinctness = if carriers.is_empty() {
            0.0
        } else {
            distinct.len() as f64 / carriers.len() as f64
        };

        let leaf = default_leaf(property, dominant_kind(&dataset.entities, property));
        let mut scored: Vec<(f64, bool)> = labeled
            .iter()
            .filter_map(|(a, b, same)| {
                leaf.score_values(&leaf.clean(a), &leaf.clean(b))
                    .map(|s| (s, *same))
            })
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0));

        // Walk cuts from high to low; the report at a cut counts every pair
        // scoring at least that much.
        let mut best: Option<(f64, EvalReport)> = None;
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut i = 0;
        while i < scored.len() {
            let cut = scored[i].0;
            while i < scored.len() && scored[i].0 == cut {
                if scored[i].1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            let report = EvalReport::from_counts(tp, fp, same_total - tp);
            if best.as_ref().is_none_or(|(_, b)| report.f1 >= b.f1) {
                best = Some((cut, report));
            }
        }
        let report = best.map(|(_, r)| r).unwrap_or_default();
        rows.push(FeatureRow {
            property: property.to_string(),
            fill_rate: carriers.len() as f64 / n,
            distinctness,
            non_discriminative: distinct.len() <= 1 || distinctness < DISCRIMINATIVE_MIN,
            comparator: leaf.comparator.to_string(),
            best_threshold: best.map(|(t, _)| t),
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
        });
    }
    Ok(rows)
}
