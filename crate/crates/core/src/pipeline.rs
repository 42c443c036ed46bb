//! Clean, block, compare and threshold: turns datasets into scored
//! `SameAsAssertion`s.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocking::{Blocker, BlockingError, BlockingSpec};
use crate::compare::{ComparatorTree, Leaf, LeafSource};
use crate::ingest::Dataset;
use crate::model::{canonical_pair, Entity, PropertyValue, SameAsAssertion};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Blocking(#[from] BlockingError),
    #[error("results file line {line}: {message}")]
    Results { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Dedup,
    Linkage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MatchConfig {
    pub tree: ComparatorTree,
    #[serde(default)]
    pub blocking: BlockingSpec,
    pub accept_threshold: f64,
    /// Pairs with fewer leaves where both sides have a value are rejected.
    #[serde(default = "default_min_leaves")]
    pub min_comparable_leaves: usize,
    #[serde(default)]
    pub mode: Mode,
}

fn default_min_leaves() -> usize {
    2
}

impl MatchConfig {
    pub fn new(tree: ComparatorTree, accept_threshold: f64) -> Self {
        Self {
            tree,
            blocking: BlockingSpec::naive(),
            accept_threshold,
            min_comparable_leaves: default_min_leaves(),
            mode: Mode::Dedup,
        }
    }

    pub fn with_blocking(mut self, blocking: BlockingSpec) -> Self {
        self.blocking = blocking;
        self
    }

    pub fn with_min_leaves(mut self, min: usize) -> Self {
        self.min_comparable_leaves = min;
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..=1.0).contains(&self.accept_threshold) {
            return Err(PipelineError::Config(format!(
                "acceptThreshold must lie in [0, 1], got {}",
                self.accept_threshold
            )));
        }
        if self.min_comparable_leaves == 0 {
            return Err(PipelineError::Config(
                "minComparableLeaves must be at least 1".into(),
            ));
        }
        self.blocking.validate()?;
        Ok(())
    }

    /// Fails if a leaf or key function reads a property no entity has.
    fn check_properties(&self, entities: &[&Entity]) -> Result<(), PipelineError> {
        let known: BTreeSet<&str> = entities
            .iter()
            .flat_map(|e| e.properties.keys().map(String::as_str))
            .collect();
        let leaves = self.tree.leaves();
        let used = leaves
            .iter()
            .map(|l| l.property.as_str())
            .chain(self.blocking.properties());
        let unknown: BTreeSet<&str> = used.filter(|p| !known.contains(p)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(format!(
                "unknown properties: {}",
                unknown.into_iter().collect::<Vec<_>>().join(", ")
            )))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub candidate_count: u64,
    pub scored_count: u64,
    pub accepted_count: u64,
    pub wall_time_seconds: f64,
    /// Stage name and seconds, in execution order.
    pub stage_timings: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

/// Progress callback: `(pairs scored so far, estimated total)`.
pub type Progress<'a> = &'a (dyn Fn(u64, u64) + Sync);

/// Scores every candidate pair within one dataset.
pub fn run_dedup(
    dataset: &Dataset,
    config: &MatchConfig,
) -> Result<(Vec<SameAsAssertion>, RunReport), PipelineError> {
    run_dedup_observed(dataset, config, &|_, _| {})
}

pub fn run_dedup_observed(
    dataset: &Dataset,
    config: &MatchConfig,
    progress: Progress<'_>,
) -> Result<(Vec<SameAsAssertion>, RunReport), PipelineError> {
    let entities: Vec<&Entity> = dataset.entities.iter().collect();
    run(&entities, None, config, progress)
}

/// Scores only pairs with one entity from each dataset.
pub fn run_linkage(
    left: &Dataset,
    right: &Dataset,
    config: &MatchConfig,
) -> Result<(Vec<SameAsAssertion>, RunReport), PipelineError> {
    run_linkage_observed(left, right, config, &|_, _| {})
}

pub fn run_linkage_observed(
    left: &Dataset,
    right: &Dataset,
    config: &MatchConfig,
    progress: Progress<'_>,
) -> Result<(Vec<SameAsAssertion>, RunReport), PipelineError> {
    let entities: Vec<&Entity> = left.entities.iter().chain(&right.entities).collect();
    run(&entities, Some(left.len()), config, progress)
}

/// Cleaned values per leaf and entity, computed once per run, viewed for one
/// pair of entity indices.
struct CleanedPair<'c> {
    cleaned: &'c [Vec<Vec<PropertyValue>>],
    pair: (usize, usize),
}

impl LeafSource for CleanedPair<'_> {
    fn score(&self, index: usize, leaf: &Leaf) -> Option<f64> {
        let per_entity = &self.cleaned[index];
        leaf.score_values(&per_entity[self.pair.0], &per_entity[self.pair.1])
    }
}

fn clean_all(tree: &ComparatorTree, entities: &[&Entity]) -> Vec<Vec<Vec<PropertyValue>>> {
    tree.leaves()
        .iter()
        .map(|leaf| entities.par_iter().map(|e| leaf.clean(e)).collect())
        .collect()
}

fn run(
    entities: &[&Entity],
    split: Option<usize>,
    config: &MatchConfig,
    progress: Progress<'_>,
) -> Result<(Vec<SameAsAssertion>, RunReport), PipelineError> {
    let started = Instant::now();
    config.validate()?;
    let mut report = RunReport::default();
    if entities.is_empty() {
        log::warn!("run: empty input, nothing to compare");
        report.warnings.push("empty dataset: nothing to compare".into());
        return Ok((Vec::new(), report));
    }
    config.check_properties(entities)?;
    if config.mode == Mode::Linkage && split.is_none() {
        report
            .warnings
            .push("linkage mode with a single dataset; running deduplication".into());
    }

    let stage = Instant::now();
    log::info!("clean: {} entities, {} leaves", entities.len(), config.tree.leaves().len());
    let cleaned = clean_all(&config.tree, entities);
    report.stage_timings.push(("clean".into(), stage.elapsed().as_secs_f64()));

    let stage = Instant::now();
    let blocker = match split {
        Some(split) => Blocker::across(&config.blocking, entities, split)?,
        None => Blocker::new(&config.blocking, entities)?,
    };
    if blocker.unkeyed() > 0 {
        let w = format!("{} entities yield no blocking key", blocker.unkeyed());
        log::warn!("block: {w}");
        report.warnings.push(w);
    }
    let estimate = blocker.estimate();
    log::info!(
        "block: {} strategy, at most {estimate} candidate pairs",
        config.blocking.strategy
    );
    report.stage_timings.push(("block".into(), stage.elapsed().as_secs_f64()));

    let stage = Instant::now();
    let scored = AtomicU64::new(0);
    let collisions = AtomicU64::new(0);
    let mut accepted: Vec<SameAsAssertion> = blocker
        .pairs()
        .par_bridge()
        .filter_map(|(i, j)| {
            let n = scored.fetch_add(1, Ordering::Relaxed) + 1;
            if n % 65_536 == 0 {
                progress(n, estimate);
            }
            let score = config.tree.evaluate_with(&CleanedPair {
                cleaned: &cleaned,
                pair: (i, j),
            });
            if score.comparable_leaves < config.min_comparable_leaves
                || score.sim < config.accept_threshold
            {
                return None;
            }
            let Ok(pair) = canonical_pair(entities[i].id.clone(), entities[j].id.clone()) else {
                collisions.fetch_add(1, Ordering::Relaxed);
                return None;
            };
            let mut a = SameAsAssertion::new(pair, score.sim).expect("tree scores lie in [0, 1]");
            a.per_property = score.per_property;
            Some(a)
        })
        .collect();
    let scored = scored.into_inner();
    progress(scored, estimate.max(scored));
    report.stage_timings.push(("score".into(), stage.elapsed().as_secs_f64()));
    let collisions = collisions.into_inner();
    if collisions > 0 {
        report
            .warnings
            .push(format!("{collisions} accepted pairs joined two entities with the same id"));
    }

    let stage = Instant::now();
    accepted.par_sort_unstable_by(|x, y| x.pair.cmp(&y.pair));
    report.stage_timings.push(("assemble".into(), stage.elapsed().as_secs_f64()));

    report.candidate_count = scored;
    report.scored_count = scored;
    report.accepted_count = accepted.len() as u64;
    report.wall_time_seconds = started.elapsed().as_secs_f64();
    log::info!(
        "done: {} candidates scored, {} accepted at {} in {:.3}s",
        report.scored_count,
        report.accepted_count,
        config.accept_threshold,
        report.wall_time_seconds
    );
    Ok((accepted, report))
}

/// Writes assertions as JSON lines, one `{idA, idB, sim, perProperty,
/// verdict}` record per line.
pub fn write_assertions<W: Write>(assertions: &[SameAsAssertion], mut out: W) -> std::io::Result<()> {
    for a in assertions {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_assertions<R: BufRead>(input: R) -> Result<Vec<SameAsAssertion>, PipelineError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let a: SameAsAssertion = serde_json::from_str(&line).map_err(|e| PipelineError::Results {
            line: n + 1,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&a.sim) {
            return Err(PipelineError::Results {
                line: n + 1,
                message: format!("sim {} outside [0, 1]", a.sim),
            });
        }
        out.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocking::KeyFunction;
    use crate::compare::{Combinator, Comparator, Node};
    use crate::model::{EntityId, GeoPoint};
    use proptest::prelude::*;

    fn restaurant(id: &str, name: &str, lat: f64, lon: f64) -> Entity {
        Entity::new(EntityId::new(id).unwrap(), "Restaurant")
            .with("name", PropertyValue::text(name))
            .with("geo", PropertyValue::geo(GeoPoint::new(lat, lon).unwrap()))
    }

    fn config(threshold: f64) -> MatchConfig {
        let tree = ComparatorTree::new(Node::combine(
            Combinator::Wavg,
            vec![
                Node::leaf(Leaf::new("name", Comparator::JaroWinkler)),
                Node::leaf(Leaf::new("geo", Comparator::Geo(500.0))),
            ],
        ))
        .unwrap();
        MatchConfig::new(tree, threshold)
    }

    fn dataset(entities: Vec<Entity>) -> Dataset {
        Dataset::new("d", "test", entities).unwrap()
    }

    #[test]
    fn clone_detection() {
        let d = dataset(vec![
            restaurant("a", "Hugo's Bar", 47.0, 10.6),
            restaurant("b", "Hugo's Bar", 47.0, 10.6),
        ]);
        let (out, report) = run_dedup(&d, &config(0.9)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].sim, 1.0);
        assert_eq!(out[0].per_property.len(), 2);
        assert_eq!(report.candidate_count, 1);
        assert_eq!(report.accepted_count, 1);
        let stages: Vec<&str> = report.stage_timings.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(stages, ["clean", "block", "score", "assemble"]);
    }

    #[test]
    fn strictest_gate() {
        let d = dataset(vec![
            restaurant("a", "Hugo's Bar", 47.0, 10.6),
            restaurant("b", "Hugos Bar", 47.0, 10.6),
        ]);
        assert!(run_dedup(&d, &config(1.0)).unwrap().0.is_empty());
    }

    #[test]
    fn min_comparable_leaves_gate() {
        let d = dataset(vec![
            Entity::new(EntityId::new("a").unwrap(), "R").with("name", PropertyValue::text("X")),
            restaurant("b", "X", 47.0, 10.6),
        ]);
        assert!(run_dedup(&d, &config(0.5)).unwrap().0.is_empty());
        assert_eq!(run_dedup(&d, &config(0.5).with_min_leaves(1)).unwrap().0.len(), 1);
    }

    #[test]
    fn empty_dataset_warns() {
        let (out, report) = run_dedup(&dataset(vec![]), &config(0.5)).unwrap();
        assert!(out.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn unknown_property_is_config_error() {
        let d = dataset(vec![restaurant("a", "X", 47.0, 10.6)]);
        let tree = ComparatorTree::new(Node::leaf(Leaf::new("phone", Comparator::Exact))).unwrap();
        let r = run_dedup(&d, &MatchConfig::new(tree, 0.5));
        assert!(matches!(r, Err(PipelineError::Config(m)) if m.contains("phone")));
    }

    #[test]
    fn linkage_cases() {
        let left = dataset(vec![restaurant("x", "Hugo's Bar", 47.0, 10.6)]);
        let right = dataset(vec![restaurant("y", "Hugo's Bar", 47.0, 10.6)]);
        assert_eq!(run_linkage(&left, &right, &config(0.9)).unwrap().0.len(), 1);
        let empty = dataset(vec![]);
        assert!(run_linkage(&empty, &empty, &config(0.9)).unwrap().0.is_empty());
    }

    #[test]
    fn linkage_planted_match() {
        let left = dataset(vec![
            restaurant("a1", "Gasthof Post", 47.10, 10.60),
            restaurant("a2", "Pizzeria Roma", 47.30, 11.00),
        ]);
        let right = dataset(vec![
            restaurant("b1", "Gasthof Posst", 47.1001, 10.6001),
            restaurant("b2", "Cafe Central", 47.50, 11.40),
        ]);
        let (out, _) = run_linkage(&left, &right, &config(0.9)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].pair.a().as_str(), out[0].pair.b().as_str()), ("a1", "b1"));
        assert!(out[0].sim > 0.9 && out[0].sim < 1.0);
    }

    #[test]
    fn results_round_trip() {
        let d = dataset(vec![
            restaurant("a", "Hugo's Bar", 47.0, 10.6),
            restaurant("b", "Hugo's Bar", 47.0, 10.6),
        ]);
        let (out, _) = run_dedup(&d, &config(0.5)).unwrap();
        let mut buf = Vec::new();
        write_assertions(&out, &mut buf).unwrap();
        assert!(std::str::from_utf8(&buf).unwrap().starts_with("{\"idA\":\"a\",\"idB\":\"b\",\"sim\":1.0,"));
        assert_eq!(read_assertions(buf.as_slice()).unwrap(), out);
        assert!(read_assertions("{\"idA\":\"a\",\"idB\":\"a\",\"sim\":1,\"perProperty\":{}}".as_bytes()).is_err());
    }

    #[test]
    fn config_toml() {
        let c: MatchConfig = toml::from_str(
            r#"
acceptThreshold = 0.8
[tree]
op = "and"
children = [
  { property = "name", comparator = "jaro-winkler", threshold = 0.7 },
  { property = "geo", comparator = "geo(300)" },
]
[blocking]
strategy = "sorted-neighborhood"
keys = ["name-prefix(3)"]
window = 5
"#,
        )
        .unwrap();
        assert_eq!(c.min_comparable_leaves, 2);
        assert_eq!(c.blocking.window, 5);
        assert!(c.validate().is_ok());
    }

    fn small_dataset() -> impl proptest::strategy::Strategy<Value = Dataset> {
        let names = prop::sample::select(vec!["Hugo's Bar", "Hugos Bar", "Bar Hugo", "Post", "Gasthof Post", "Posthof"]);
        prop::collection::vec((names, 0u8..4, 0u8..4), 2..20).prop_map(|rows| {
            let entities = rows
                .into_iter()
                .enumerate()
                .map(|(i, (n, dlat, dlon))| {
                    restaurant(&format!("e{i:02}"), n, 47.0 + dlat as f64 * 0.001, 10.6 + dlon as f64 * 0.001)
                })
                .collect();
            Dataset::new("d", "t", entities).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn threshold_monotone_and_deterministic(d in small_dataset(), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let (a_lo, _) = run_dedup(&d, &config(lo)).unwrap();
            let (a_hi, _) = run_dedup(&d, &config(hi)).unwrap();
            let lo_set: BTreeSet<_> = a_lo.iter().map(|a| a.pair.clone()).collect();
            prop_assert!(a_hi.iter().all(|a| lo_set.contains(&a.pair)));
            prop_assert_eq!(run_dedup(&d, &config(lo)).unwrap().0, a_lo);
        }

        #[test]
        fn blocked_accepted_within_naive(d in small_dataset(), window in 2usize..6) {
            let naive = run_dedup(&d, &config(0.6)).unwrap().0;
            for spec in [
                BlockingSpec::standard(vec![KeyFunction::name_prefix(3), KeyFunction::geohash(7)]),
                BlockingSpec::sorted_neighborhood(vec![KeyFunction::name_prefix(4)], window),
            ] {
                let (blocked, report) = run_dedup(&d, &config(0.6).with_blocking(spec)).unwrap();
                prop_assert!(report.accepted_count <= report.scored_count);
                prop_assert!(report.scored_count <= report.candidate_count);
                prop_assert!(blocked.iter().all(|a| naive.contains(a)));
            }
        }
    }
}
