//! Candidate-pair generation.
//!
//! A [`Blocker`] indexes a slice of entities once and then streams candidate
//! pairs as index pairs `(i, j)` with `i < j`. Pairs are never collected, so
//! memory is bounded by block sizes rather than by the number of pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Entity, GeoPoint, Value};
use crate::normalize::CleanerChain;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlockingError {
    #[error("unknown key function {0:?}")]
    UnknownKey(String),
    #[error("key function {name:?}: {reason}")]
    BadParameter { name: String, reason: String },
    #[error("window must be at least 2, got {0}")]
    Window(usize),
    #[error("strategy {0} needs at least one key function")]
    MissingKey(Strategy),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    Naive,
    #[serde(alias = "standard-blocking")]
    Standard,
    SortedNeighborhood,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Naive => "naive",
            Strategy::Standard => "standard",
            Strategy::SortedNeighborhood => "sorted-neighborhood",
        })
    }
}

/// Derives blocking keys from an entity. Written in configuration as
/// `name-prefix(4)`, `geohash(6)` or `url-host`, optionally followed by a
/// property name: `name-prefix(3, label)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum KeyFunction {
    NamePrefix { k: usize, property: String },
    Geohash { precision: usize, property: String },
    UrlHost { property: String },
}

impl KeyFunction {
    pub const CATALOG: &'static [&'static str] = &["name-prefix", "geohash", "url-host"];

    pub fn name_prefix(k: usize) -> Self {
        KeyFunction::NamePrefix {
            k,
            property: "name".into(),
        }
    }

    pub fn geohash(precision: usize) -> Self {
        KeyFunction::Geohash {
            precision,
            property: "geo".into(),
        }
    }

    pub fn url_host() -> Self {
        KeyFunction::UrlHost {
            property: "url".into(),
        }
    }

    pub fn property(&self) -> &str {
        match self {
            KeyFunction::NamePrefix { property, .. }
            | KeyFunction::Geohash { property, .. }
            | KeyFunction::UrlHost { property } => property,
        }
    }

    /// All keys of one entity, sorted and deduplicated. Multi-valued
    /// properties give one key per value.
    pub fn keys(&self, entity: &Entity) -> Vec<String> {
        let values = entity.values(self.property());
        let mut out: Vec<String> = match self {
            KeyFunction::NamePrefix { k, .. } => name_chain()
                .clean_values(values)
                .iter()
                .filter_map(|v| v.value.as_text().map(|s| s.chars().take(*k).collect()))
                .collect(),
            KeyFunction::Geohash { precision, .. } => values
                .iter()
                .filter_map(|v| match v.value {
                    Value::Geopoint(g) if !g.is_null_island() => Some(geohash(g, *precision)),
                    _ => None,
                })
                .collect(),
            KeyFunction::UrlHost { .. } => values
                .iter()
                .filter_map(|v| v.value.as_text().and_then(url_host))
                .collect(),
        };
        out.retain(|k| !k.is_empty());
        out.sort();
        out.dedup();
        out
    }
}

fn name_chain() -> CleanerChain {
    CleanerChain::parse([
        "lowercase",
        "strip-accents",
        "strip-punctuation",
        "collapse-whitespace",
    ])
    .expect("built-in chain")
}

impl FromStr for KeyFunction {
    type Err = BlockingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, params) = match s.find('(') {
            Some(open) if s.ends_with(')') => (&s[..open], &s[open + 1..s.len() - 1]),
            _ => (s, ""),
        };
        let params: Vec<&str> = params
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .collect();
        let bad = |reason: &str| BlockingError::BadParameter {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        let number = |default: usize| -> Result<usize, BlockingError> {
            match params.first() {
                None => Ok(default),
                Some(p) => p
                    .parse::<usize>()
                    .ok()
                    .filter(|n| *n > 0)
                    .ok_or_else(|| bad("expected a positive integer")),
            }
        };
        let property = |index: usize, default: &str| {
            params.get(index).map_or(default.to_string(), |p| p.to_string())
        };
        if params.len() > 2 {
            return Err(bad("too many parameters"));
        }
        match name {
            "name-prefix" => Ok(KeyFunction::NamePrefix {
                k: number(4)?,
                property: property(1, "name"),
            }),
            "geohash" => {
                let precision = number(6)?;
                if precision > 12 {
                    return Err(bad("precision must be at most 12"));
                }
                Ok(KeyFunction::Geohash {
                    precision,
                    property: property(1, "geo"),
                })
            }
            "url-host" => {
                if params.len() > 1 {
                    return Err(bad("takes at most a property name"));
                }
                Ok(KeyFunction::UrlHost {
                    property: property(0, "url"),
                })
            }
            _ => Err(BlockingError::UnknownKey(s.to_string())),
        }
    }
}

impl fmt::Display for KeyFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyFunction::NamePrefix { k, property } if property == "name" => {
                write!(f, "name-prefix({k})")
            }
            KeyFunction::NamePrefix { k, property } => write!(f, "name-prefix({k}, {property})"),
            KeyFunction::Geohash {
                precision,
                property,
            } if property == "geo" => write!(f, "geohash({precision})"),
            KeyFunction::Geohash {
                precision,
                property,
            } => write!(f, "geohash({precision}, {property})"),
            KeyFunction::UrlHost { property } if property == "url" => f.write_str("url-host"),
            KeyFunction::UrlHost { property } => write!(f, "url-host({property})"),
        }
    }
}

impl Serialize for KeyFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KeyFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

const GEOHASH_ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

/// Standard base-32 geohash.
pub fn geohash(point: GeoPoint, precision: usize) -> String {
    let (mut lat, mut lon) = ((-90.0f64, 90.0f64), (-180.0f64, 180.0f64));
    let mut out = String::with_capacity(precision);
    let (mut bits, mut ch, mut even) = (0, 0usize, true);
    while out.len() < precision {
        let (range, v) = if even {
            (&mut lon, point.lon())
        } else {
            (&mut lat, point.lat())
        };
        let mid = (range.0 + range.1) / 2.0;
        ch <<= 1;
        if v >= mid {
            ch |= 1;
            range.0 = mid;
        } else {
            range.1 = mid;
        }
        even = !even;
        bits += 1;
        if bits == 5 {
            out.push(GEOHASH_ALPHABET[ch] as char);
            bits = 0;
            ch = 0;
        }
    }
    out
}

/// Lowercased host of a URL without `www.`; `None` if there is no host.
pub fn url_host(url: &str) -> Option<String> {
    let s = url.trim();
    let s = s.split_once("://").map_or(s, |(_, rest)| rest);
    let host = s
        .split(['/', '?', '#'])
        .next()
        .unwrap_or("")
        .rsplit('@')
        .next()
        .unwrap_or("");
    let host = host.split(':').next().unwrap_or("").to_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host);
    (!host.is_empty()).then(|| host.to_string())
}

/// What standard blocking does with entities that yield no key.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unkeyed {
    /// Left out of candidate generation.
    #[default]
    Exclude,
    /// Compared with each other in one extra block.
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BlockingSpec {
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub keys: Vec<KeyFunction>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub unkeyed: Unkeyed,
}

fn default_window() -> usize {
    10
}

impl Default for BlockingSpec {
    fn default() -> Self {
        Self::naive()
    }
}

impl BlockingSpec {
    pub fn naive() -> Self {
        Self {
            strategy: Strategy::Naive,
            keys: Vec::new(),
            window: default_window(),
            unkeyed: Unkeyed::Exclude,
        }
    }

    pub fn standard(keys: Vec<KeyFunction>) -> Self {
        Self {
            strategy: Strategy::Standard,
            keys,
            ..Self::naive()
        }
    }

    pub fn sorted_neighborhood(keys: Vec<KeyFunction>, window: usize) -> Self {
        Self {
            strategy: Strategy::SortedNeighborhood,
            keys,
            window,
            ..Self::naive()
        }
    }

    pub fn validate(&self) -> Result<(), BlockingError> {
        if self.window < 2 {
            return Err(BlockingError::Window(self.window));
        }
        if self.strategy != Strategy::Naive && self.keys.is_empty() {
            return Err(BlockingError::MissingKey(self.strategy));
        }
        Ok(())
    }

    /// Properties the key functions read.
    pub fn properties(&self) -> impl Iterator<Item = &str> {
        self.keys.iter().map(KeyFunction::property)
    }
}

/// Candidate index over a slice of entities.
pub struct Blocker {
    n: usize,
    /// Entities in `0..split` come from one dataset and `split..n` from the
    /// other; only pairs across the split are produced. `split == n` for
    /// single-dataset runs.
    split: usize,
    index: Index,
    unkeyed: usize,
}

enum Index {
    Naive,
    Standard {
        /// Interned keys per entity, ascending.
        keys: Vec<Vec<u32>>,
        /// Member lists per interned key, ascending by entity index.
        blocks: Vec<Vec<u32>>,
    },
    Sorted {
        window: usize,
        /// One sort order per key function.
        orders: Vec<Vec<u32>>,
        /// `positions[pass][entity]` is the entity's place in that order.
        positions: Vec<Vec<u32>>,
    },
}

impl Blocker {
    pub fn new(spec: &BlockingSpec, entities: &[&Entity]) -> Result<Self, BlockingError> {
        Self::build(spec, entities, entities.len())
    }

    /// Index for linkage: `entities[..split]` against `entities[split..]`.
    pub fn across(
        spec: &BlockingSpec,
        entities: &[&Entity],
        split: usize,
    ) -> Result<Self, BlockingError> {
        Self::build(spec, entities, split.min(entities.len()))
    }

    fn build(spec: &BlockingSpec, entities: &[&Entity], split: usize) -> Result<Self, BlockingError> {
        spec.validate()?;
        let n = entities.len();
        assert!(n < u32::MAX as usize, "too many entities");
        let mut unkeyed = 0;
        let index = match spec.strategy {
            Strategy::Naive => Index::Naive,
            Strategy::Standard => {
                let raw: Vec<Vec<String>> = entities
                    .iter()
                    .map(|e| {
                        let mut keys = Vec::new();
                        for (f, func) in spec.keys.iter().enumerate() {
                            keys.extend(func.keys(e).into_iter().map(|k| format!("{f}:{k}")));
                        }
                        keys
                    })
                    .collect();
                // Interned ids follow key order so "smallest shared key" is
                // well defined and stable.
                let mut ids: BTreeMap<&str, u32> = BTreeMap::new();
                for keys in &raw {
                    for k in keys {
                        ids.entry(k.as_str()).or_insert(0);
                    }
                }
                for (i, id) in ids.values_mut().enumerate() {
                    *id = i as u32;
                }
                let unkeyed_id = ids.len() as u32;
                let mut keys: Vec<Vec<u32>> = Vec::with_capacity(n);
                for k in &raw {
                    let mut v: Vec<u32> = k.iter().map(|k| ids[k.as_str()]).collect();
                    v.sort_unstable();
                    v.dedup();
                    if v.is_empty() {
                        unkeyed += 1;
                        if spec.unkeyed == Unkeyed::Block {
                            v.push(unkeyed_id);
                        }
                    }
                    keys.push(v);
                }
                let mut blocks = vec![Vec::new(); ids.len() + 1];
                for (e, ks) in keys.iter().enumerate() {
                    for k in ks {
                        blocks[*k as usize].push(e as u32);
                    }
                }
                Index::Standard { keys, blocks }
            }
            Strategy::SortedNeighborhood => {
                let mut orders = Vec::new();
                let mut positions = Vec::new();
                for func in &spec.keys {
                    let sort_keys: Vec<String> = entities
                        .iter()
                        .map(|e| func.keys(e).into_iter().next().unwrap_or_default())
                        .collect();
                    let mut order: Vec<u32> = (0..n as u32).collect();
                    order.sort_by(|&a, &b| {
                        let (a, b) = (a as usize, b as usize);
                        sort_keys[a]
                            .cmp(&sort_keys[b])
                            .then_with(|| entities[a].id.cmp(&entities[b].id))
                    });
                    let mut pos = vec![0u32; n];
                    for (p, &e) in order.iter().enumerate() {
                        pos[e as usize] = p as u32;
                    }
                    orders.push(order);
                    positions.push(pos);
                }
                Index::Sorted {
                    window: spec.window,
                    orders,
                    positions,
                }
            }
        };
        Ok(Self {
            n,
            split,
            index,
            unkeyed,
        })
    }

    /// Entities for which no key function produced a key.
    pub fn unkeyed(&self) -> usize {
        self.unkeyed
    }

    fn linkage(&self) -> bool {
        self.split < self.n
    }

    fn crosses(&self, i: usize, j: usize) -> bool {
        !self.linkage() || ((i < self.split) != (j < self.split))
    }

    /// Upper bound on the number of pairs [`Blocker::pairs`] yields; exact
    /// for naive and single-key strategies.
    pub fn estimate(&self) -> u64 {
        let choose2 = |m: u64| m * m.saturating_sub(1) / 2;
        match &self.index {
            Index::Naive if self.linkage() => {
                self.split as u64 * (self.n - self.split) as u64
            }
            Index::Naive => choose2(self.n as u64),
            Index::Standard { blocks, .. } => blocks.iter().map(|b| choose2(b.len() as u64)).sum(),
            Index::Sorted { window, orders, .. } => {
                let n = self.n as u64;
                let w = (*window as u64 - 1).min(n.saturating_sub(1));
                // Each position pairs with up to w successors.
                let per_pass = w * n - w * (w + 1) / 2;
                per_pass * orders.len() as u64
            }
        }
    }

    /// Streams every candidate pair exactly once, as `(i, j)` with `i < j`.
    pub fn pairs(&self) -> Box<dyn Iterator<Item = (usize, usize)> + Send + '_> {
        match &self.index {
            Index::Naive if self.linkage() => {
                let (split, n) = (self.split, self.n);
                Box::new((0..split).flat_map(move |i| (split..n).map(move |j| (i, j))))
            }
            Index::Naive => {
                let n = self.n;
                Box::new((0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j))))
            }
            Index::Standard { keys, blocks } => Box::new(
                blocks
                    .iter()
                    .enumerate()
                    .flat_map(move |(block_id, members)| {
                        let block_id = block_id as u32;
                        (0..members.len()).flat_map(move |x| {
                            let a = members[x];
                            members[x + 1..].iter().filter_map(move |&b| {
                                let (i, j) = (a as usize, b as usize);
                                (self.crosses(i, j)
                                    && smallest_shared(&keys[i], &keys[j]) == Some(block_id))
                                .then_some((i, j))
                            })
                        })
                    }),
            ),
            Index::Sorted {
                window,
                orders,
                positions,
            } => {
                let w = *window;
                Box::new(orders.iter().enumerate().flat_map(move |(pass, order)| {
                    (0..order.len()).flat_map(move |p| {
                        let end = (p + w).min(order.len());
                        (p + 1..end).filter_map(move |q| {
                            let (x, y) = (order[p] as usize, order[q] as usize);
                            let (i, j) = (x.min(y), x.max(y));
                            // A pair already produced by an earlier pass is skipped.
                            let seen = positions[..pass].iter().any(|pos| {
                                (pos[i] as i64 - pos[j] as i64).unsigned_abs() < w as u64
                            });
                            (!seen && self.crosses(i, j)).then_some((i, j))
                        })
                    })
                }))
            }
        }
    }
}

fn smallest_shared(a: &[u32], b: &[u32]) -> Option<u32> {
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => return Some(a[x]),
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityId, PropertyValue};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn entity(id: &str, name: &str) -> Entity {
        Entity::new(EntityId::new(id).unwrap(), "R").with("name", PropertyValue::text(name))
    }

    fn pair_set(blocker: &Blocker) -> BTreeSet<(usize, usize)> {
        let v: Vec<_> = blocker.pairs().collect();
        let set: BTreeSet<_> = v.iter().copied().collect();
        assert_eq!(v.len(), set.len(), "duplicate pair emitted");
        set
    }

    fn naive_set(n: usize) -> BTreeSet<(usize, usize)> {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    }

    #[test]
    fn naive_counts() {
        let es: Vec<Entity> = (0..495).map(|i| entity(&format!("e{i:03}"), "x")).collect();
        let refs: Vec<&Entity> = es.iter().collect();
        let b = Blocker::new(&BlockingSpec::naive(), &refs).unwrap();
        assert_eq!(b.pairs().count(), 122_265);
        assert_eq!(b.estimate(), 122_265);
        let one = Blocker::new(&BlockingSpec::naive(), &refs[..1]).unwrap();
        assert_eq!(one.pairs().count(), 0);
        let three = Blocker::new(&BlockingSpec::naive(), &refs[..3]).unwrap();
        assert_eq!(pair_set(&three), naive_set(3));
    }

    #[test]
    fn standard_shared_block() {
        let es = [entity("a", "Kone"), entity("b", "Kone"), entity("c", "Ktwo")];
        let refs: Vec<&Entity> = es.iter().collect();
        let spec = BlockingSpec::standard(vec![KeyFunction::name_prefix(4)]);
        let b = Blocker::new(&spec, &refs).unwrap();
        assert_eq!(pair_set(&b), BTreeSet::from([(0, 1)]));

        let distinct = [entity("a", "one"), entity("b", "two")];
        let refs: Vec<&Entity> = distinct.iter().collect();
        assert_eq!(Blocker::new(&spec, &refs).unwrap().pairs().count(), 0);
    }

    #[test]
    fn unkeyed_handling() {
        let es = [
            Entity::new(EntityId::new("a").unwrap(), "R").with("url", PropertyValue::url("x")),
            Entity::new(EntityId::new("b").unwrap(), "R").with("url", PropertyValue::url("y")),
            entity("c", "name"),
        ];
        let refs: Vec<&Entity> = es.iter().collect();
        let mut spec = BlockingSpec::standard(vec![KeyFunction::name_prefix(4)]);
        let b = Blocker::new(&spec, &refs).unwrap();
        assert_eq!(b.unkeyed(), 2);
        assert_eq!(b.pairs().count(), 0);
        spec.unkeyed = Unkeyed::Block;
        let b = Blocker::new(&spec, &refs).unwrap();
        assert_eq!(pair_set(&b), BTreeSet::from([(0, 1)]));
    }

    #[test]
    fn sorted_neighborhood_window_three() {
        let es: Vec<Entity> = ["a", "b", "c", "d", "e"]
            .iter()
            .map(|s| entity(s, s))
            .collect();
        let refs: Vec<&Entity> = es.iter().collect();
        let spec = BlockingSpec::sorted_neighborhood(vec![KeyFunction::name_prefix(4)], 3);
        let got = pair_set(&Blocker::new(&spec, &refs).unwrap());
        let expected = BTreeSet::from([(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]);
        assert_eq!(got, expected);

        let chain = BlockingSpec::sorted_neighborhood(vec![KeyFunction::name_prefix(4)], 2);
        assert_eq!(Blocker::new(&chain, &refs).unwrap().pairs().count(), 4);
        assert!(BlockingSpec::sorted_neighborhood(vec![KeyFunction::name_prefix(4)], 1)
            .validate()
            .is_err());
    }

    #[test]
    fn linkage_only_crosses() {
        let es: Vec<Entity> = ["a", "b", "c", "d"].iter().map(|s| entity(s, "same")).collect();
        let refs: Vec<&Entity> = es.iter().collect();
        for spec in [
            BlockingSpec::naive(),
            BlockingSpec::standard(vec![KeyFunction::name_prefix(4)]),
            BlockingSpec::sorted_neighborhood(vec![KeyFunction::name_prefix(4)], 4),
        ] {
            let b = Blocker::across(&spec, &refs, 2).unwrap();
            assert_eq!(
                pair_set(&b),
                BTreeSet::from([(0, 2), (0, 3), (1, 2), (1, 3)]),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn geohash_reference() {
        let p = GeoPoint::new(57.64911, 10.40744).unwrap();
        assert_eq!(geohash(p, 11), "u4pruydqqvj");
        assert_eq!(geohash(GeoPoint::new(47.040537, 10.609275).unwrap(), 6).len(), 6);
    }

    #[test]
    fn url_hosts() {
        assert_eq!(url_host("https://www.Hugos.at/menu?x=1").as_deref(), Some("hugos.at"));
        assert_eq!(url_host("hugos.at:8080").as_deref(), Some("hugos.at"));
        assert_eq!(url_host("http://user@host.example/").as_deref(), Some("host.example"));
        assert_eq!(url_host("https://"), None);
    }

    #[test]
    fn key_function_syntax() {
        for s in ["name-prefix(4)", "name-prefix(3, label)", "geohash(6)", "url-host", "url-host(homepage)"] {
            let f: KeyFunction = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("geohash(13)".parse::<KeyFunction>().is_err());
        assert!("name-prefix(0)".parse::<KeyFunction>().is_err());
        assert!("soundex".parse::<KeyFunction>().is_err());
        let spec: BlockingSpec =
            toml::from_str("strategy = \"standard\"\nkeys = [\"geohash(5)\", \"url-host\"]").unwrap();
        assert_eq!(spec.keys.len(), 2);
        assert!(toml::from_str::<BlockingSpec>("strategy = \"standard\"")
            .unwrap()
            .validate()
            .is_err());
    }

    fn names() -> impl proptest::strategy::Strategy<Value = Vec<Vec<String>>> {
        prop::collection::vec(prop::collection::vec("[abc]{1,3}", 0..3), 1..25)
    }

    fn build(names: &[Vec<String>]) -> Vec<Entity> {
        names
            .iter()
            .enumerate()
            .map(|(i, ns)| {
                let mut e = Entity::new(EntityId::new(format!("e{i:02}")).unwrap(), "R")
                    .with("url", PropertyValue::url("u"));
                for n in ns {
                    e.push("name", PropertyValue::text(n.clone()));
                }
                e
            })
            .collect()
    }

    proptest! {
        #[test]
        fn standard_matches_union_of_block_products(names in names(), k in 1usize..3) {
            let es = build(&names);
            let refs: Vec<&Entity> = es.iter().collect();
            let func = KeyFunction::name_prefix(k);
            let b = Blocker::new(&BlockingSpec::standard(vec![func.clone()]), &refs).unwrap();
            let got = pair_set(&b);
            let mut blocks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for (i, e) in es.iter().enumerate() {
                for key in func.keys(e) {
                    blocks.entry(key).or_default().push(i);
                }
            }
            let mut expected = BTreeSet::new();
            for members in blocks.values() {
                for x in 0..members.len() {
                    for y in x + 1..members.len() {
                        expected.insert((members[x], members[y]));
                    }
                }
            }
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn multi_key_standard_is_union(names in names()) {
            let es = build(&names);
            let refs: Vec<&Entity> = es.iter().collect();
            let keys = vec![KeyFunction::name_prefix(1), KeyFunction::name_prefix(2)];
            let both = pair_set(&Blocker::new(&BlockingSpec::standard(keys.clone()), &refs).unwrap());
            let mut union = BTreeSet::new();
            for k in keys {
                union.extend(pair_set(&Blocker::new(&BlockingSpec::standard(vec![k]), &refs).unwrap()));
            }
            prop_assert_eq!(both, union);
        }

        #[test]
        fn sorted_neighborhood_containment(names in names(), window in 2usize..30) {
            let es = build(&names);
            let refs: Vec<&Entity> = es.iter().collect();
            let keys = vec![KeyFunction::name_prefix(2), KeyFunction::url_host()];
            let spec = BlockingSpec::sorted_neighborhood(keys, window);
            let b = Blocker::new(&spec, &refs).unwrap();
            let got = pair_set(&b);
            prop_assert!(got.len() as u64 <= b.estimate());
            let naive = naive_set(es.len());
            prop_assert!(got.is_subset(&naive));
            if window >= es.len() {
                prop_assert_eq!(got, naive);
            }
        }
    }
}
