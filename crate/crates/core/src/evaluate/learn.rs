//! Genetic search over matching configurations.
//!
//! A genome holds one gene per candidate property (on/off, comparator,
//! cleaner chain, weight, leaf threshold) followed by the global genes
//! (combinator, accept threshold, minimum comparable leaves, blocking).
//! Fitness is the f1 of the decoded configuration against the gold standard.
//! Leaf scores for every candidate pair are computed once per (property,
//! comparator, cleaner chain) and shared by all genomes.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport, GoldStandard, Tally, World};
use crate::blocking::{Blocker, BlockingSpec};
use crate::compare::{
    Combinator, Comparator, ComparatorTree, Leaf, LeafSource, MissingPolicy, Node, NodeKind,
};
use crate::ingest::Dataset;
use crate::model::{Entity, PropertyValue, ValueKind, Verdict};
use crate::normalize::{Cleaner, CleanerChain};
use crate::pipeline::{MatchConfig, Mode};

/// Options the learner may pick for one property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PropertyChoices {
    pub property: String,
    pub comparators: Vec<Comparator>,
    #[serde(default = "plain_chain")]
    pub cleaner_chains: Vec<CleanerChain>,
    #[serde(default)]
    pub missing: MissingPolicy,
}

fn plain_chain() -> Vec<CleanerChain> {
    vec![CleanerChain::default()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SearchSpace {
    pub properties: Vec<PropertyChoices>,
    #[serde(default = "all_combinators")]
    pub combinators: Vec<Combinator>,
    #[serde(default = "default_weight_range")]
    pub weight_range: (f64, f64),
    /// Range of per-leaf thresholds (used by AND).
    #[serde(default = "default_threshold_range")]
    pub threshold_range: (f64, f64),
    #[serde(default = "default_threshold_range")]
    pub accept_range: (f64, f64),
    #[serde(default = "default_min_leaves")]
    pub min_comparable_leaves: Vec<usize>,
    #[serde(default = "default_blocking")]
    pub blocking: Vec<BlockingSpec>,
}

fn all_combinators() -> Vec<Combinator> {
    vec![
        Combinator::And,
        Combinator::Wavg,
        Combinator::Min,
        Combinator::Max,
        Combinator::Or,
    ]
}

fn default_weight_range() -> (f64, f64) {
    (0.5, 3.0)
}

fn default_threshold_range() -> (f64, f64) {
    (0.5, 1.0)
}

fn default_min_leaves() -> Vec<usize> {
    vec![1, 2]
}

fn default_blocking() -> Vec<BlockingSpec> {
    vec![BlockingSpec::naive()]
}

fn chain(steps: &[Cleaner]) -> CleanerChain {
    CleanerChain::new(steps.to_vec())
}

impl SearchSpace {
    /// A space over every property of the dataset, with comparators and
    /// cleaners suited to each property's dominant value kind.
    pub fn for_dataset(dataset: &Dataset) -> Self {
        let properties = dataset
            .properties()
            .into_iter()
            .map(|p| {
                let mut kinds: HashMap<ValueKind, usize> = HashMap::new();
                for v in dataset.entities.iter().flat_map(|e| e.values(p)) {
                    *kinds.entry(v.kind()).or_default() += 1;
                }
                let kind = kinds
                    .into_iter()
                    .max_by_key(|(k, n)| (*n, *k as u8))
                    .map(|(k, _)| k)
                    .unwrap_or(ValueKind::Text);
                let (comparators, cleaner_chains) = match kind {
                    ValueKind::Text => (
                        vec![
                            Comparator::Levenshtein,
                            Comparator::JaroWinkler,
                            Comparator::Jaccard,
                            Comparator::MongeElkan,
                        ],
                        vec![
                            chain(&[Cleaner::Lowercase, Cleaner::Trim]),
                            chain(&[
                                Cleaner::Lowercase,
                                Cleaner::StripAccents,
                                Cleaner::StripPunctuation,
                                Cleaner::StripCountrySuffix,
                                Cleaner::OrdinalToDigit,
                                Cleaner::CollapseWhitespace,
                                Cleaner::Trim,
                            ]),
                        ],
                    ),
                    ValueKind::Url => (
                        vec![Comparator::Exact, Comparator::Levenshtein],
                        vec![chain(&[Cleaner::UrlNormalize]), CleanerChain::default()],
                    ),
                    ValueKind::Geopoint => (
                        vec![Comparator::Geo(100.0), Comparator::Geo(250.0), Comparator::Geo(1000.0)],
                        vec![chain(&[Cleaner::GeoSentinelScrub])],
                    ),
                    ValueKind::Number => (vec![Comparator::Numeric], plain_chain()),
                    ValueKind::Timestamp => (vec![Comparator::Temporal(86_400.0)], plain_chain()),
                };
                PropertyChoices {
                    property: p.to_string(),
                    comparators,
                    cleaner_chains,
                    missing: MissingPolicy::Ignore,
                }
            })
            .collect();
        Self {
            properties,
            combinators: all_combinators(),
            weight_range: default_weight_range(),
            threshold_range: default_threshold_range(),
            accept_range: default_threshold_range(),
            min_comparable_leaves: default_min_leaves(),
            blocking: default_blocking(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Invalid(m));
        if self.properties.is_empty() {
            return bad("search space has no properties".into());
        }
        let mut seen = BTreeSet::new();
        for p in &self.properties {
            if !seen.insert(p.property.as_str()) {
                return bad(format!("property {} listed twice", p.property));
            }
            if p.comparators.is_empty() || p.cleaner_chains.is_empty() {
                return bad(format!("property {} has no comparator or cleaner choice", p.property));
            }
            for c in &p.comparators {
                c.validate().map_err(|e| EvalError::Invalid(e.to_string()))?;
            }
        }
        if self.combinators.is_empty() || self.min_comparable_leaves.is_empty() || self.blocking.is_empty() {
            return bad("combinators, minComparableLeaves and blocking need at least one option".into());
        }
        if self.min_comparable_leaves.contains(&0) {
            return bad("minComparableLeaves options must be at least 1".into());
        }
        let (wl, wh) = self.weight_range;
        if !(wl.is_finite() && wh.is_finite() && 0.0 < wl && wl <= wh) {
            return bad(format!("weight range {wl}..{wh} is invalid"));
        }
        for (name, (lo, hi)) in [("threshold", self.threshold_range), ("accept", self.accept_range)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad(format!("{name} range {lo}..{hi} is invalid"));
            }
        }
        for b in &self.blocking {
            b.validate().map_err(|e| EvalError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Widens the space so that `config` can be encoded.
    pub fn include(&mut self, config: &MatchConfig) -> Result<(), EvalError> {
        let (op, children) = shape(config)?;
        push_unique(&mut self.combinators, op);
        for child in children {
            let NodeKind::Leaf(leaf) = &child.kind else {
                unreachable!("shape only admits leaves");
            };
            let slot = match self.properties.iter().position(|p| p.property == leaf.property) {
                Some(i) => i,
                None => {
                    self.properties.push(PropertyChoices {
                        property: leaf.property.clone(),
                        comparators: Vec::new(),
                        cleaner_chains: Vec::new(),
                        missing: leaf.missing,
                    });
                    self.properties.len() - 1
                }
            };
            let p = &mut self.properties[slot];
            push_unique(&mut p.comparators, leaf.comparator.clone());
            push_unique(&mut p.cleaner_chains, leaf.cleaners.clone());
            p.missing = leaf.missing;
            self.weight_range = widen(self.weight_range, child.weight);
            self.threshold_range = widen(self.threshold_range, child.threshold);
        }
        self.accept_range = widen(self.accept_range, config.accept_threshold);
        push_unique(&mut self.min_comparable_leaves, config.min_comparable_leaves);
        push_unique(&mut self.blocking, config.blocking.clone());
        Ok(())
    }

    /// Encodes a configuration whose root is a leaf or a combinator over
    /// leaves on distinct properties, all within this space.
    pub fn encode(&self, config: &MatchConfig) -> Result<Genome, EvalError> {
        let (op, children) = shape(config)?;
        let missing = |what: &str| EvalError::Invalid(format!("{what} is outside the search space"));
        fn index_of<T: PartialEq>(haystack: &[T], needle: &T) -> Option<usize> {
            haystack.iter().position(|x| x == needle)
        }
        let mut leaves: Vec<LeafGene> = self
            .properties
            .iter()
            .map(|_| LeafGene {
                enabled: false,
                comparator: 0,
                cleaners: 0,
                weight: 1.0_f64.clamp(self.weight_range.0, self.weight_range.1),
                threshold: self.threshold_range.0,
            })
            .collect();
        for child in children {
            let NodeKind::Leaf(leaf) = &child.kind else {
                unreachable!("shape only admits leaves");
            };
            let slot = self
                .properties
                .iter()
                .position(|p| p.property == leaf.property)
                .ok_or_else(|| missing(&leaf.property))?;
            let p = &self.properties[slot];
            if p.missing != leaf.missing {
                return Err(missing("missing-value policy"));
            }
            leaves[slot] = LeafGene {
                enabled: true,
                comparator: index_of(&p.comparators, &leaf.comparator).ok_or_else(|| missing("comparator"))?,
                cleaners: index_of(&p.cleaner_chains, &leaf.cleaners).ok_or_else(|| missing("cleaner chain"))?,
                weight: child.weight,
                threshold: child.threshold,
            };
        }
        Ok(Genome {
            leaves,
            combinator: index_of(&self.combinators, &op).ok_or_else(|| missing("combinator"))?,
            accept: config.accept_threshold,
            min_leaves: index_of(&self.min_comparable_leaves, &config.min_comparable_leaves).ok_or_else(|| missing("minComparableLeaves"))?,
            blocking: index_of(&self.blocking, &config.blocking).ok_or_else(|| missing("blocking"))?,
        })
    }

    /// Builds the configuration a genome stands for. A single enabled leaf
    /// under WAVG, MIN, MAX or OR becomes a bare leaf, which scores the same.
    pub fn decode(&self, genome: &Genome) -> MatchConfig {
        let op = self.combinators[genome.combinator];
        let mut children: Vec<Node> = genome
            .leaves
            .iter()
            .zip(&self.properties)
            .filter(|(g, _)| g.enabled)
            .map(|(g, p)| {
                let mut leaf = Leaf::new(&p.property, p.comparators[g.comparator].clone())
                    .with_cleaners(p.cleaner_chains[g.cleaners].clone());
                leaf.missing = p.missing;
                Node::leaf(leaf).weight(g.weight).threshold(g.threshold)
            })
            .collect();
        let root = if children.len() == 1 && op != Combinator::And {
            children.pop().expect("one child")
        } else {
            Node::combine(op, children)
        };
        MatchConfig {
            tree: ComparatorTree::new(root).expect("genes stay within validated ranges"),
            blocking: self.blocking[genome.blocking].clone(),
            accept_threshold: genome.accept,
            min_comparable_leaves: self.min_comparable_leaves[genome.min_leaves],
            mode: Mode::Dedup,
        }
    }

    fn random_genome(&self, rng: &mut ChaCha8Rng) -> Genome {
        let mut g = Genome {
            leaves: self
                .properties
                .iter()
                .map(|p| LeafGene {
                    enabled: rng.random_bool(0.5),
                    comparator: rng.random_range(0..p.comparators.len()),
                    cleaners: rng.random_range(0..p.cleaner_chains.len()),
                    weight: draw(rng, self.weight_range),
                    threshold: draw(rng, self.threshold_range),
                })
                .collect(),
            combinator: rng.random_range(0..self.combinators.len()),
            accept: draw(rng, self.accept_range),
            min_leaves: rng.random_range(0..self.min_comparable_leaves.len()),
            blocking: rng.random_range(0..self.blocking.len()),
        };
        g.repair(rng);
        g
    }

    fn mutate(&self, g: &mut Genome, rate: f64, rng: &mut ChaCha8Rng) {
        for (gene, p) in g.leaves.iter_mut().zip(&self.properties) {
            if rng.random_bool(rate) {
                gene.enabled = !gene.enabled;
            }
            if rng.random_bool(rate) {
                gene.comparator = rng.random_range(0..p.comparators.len());
            }
            if rng.random_bool(rate) {
                gene.cleaners = rng.random_range(0..p.cleaner_chains.len());
            }
            if rng.random_bool(rate) {
                gene.weight = draw(rng, self.weight_range);
            }
            if rng.random_bool(rate) {
                gene.threshold = draw(rng, self.threshold_range);
            }
        }
        if rng.random_bool(rate) {
            g.combinator = rng.random_range(0..self.combinators.len());
        }
        if rng.random_bool(rate) {
            g.accept = draw(rng, self.accept_range);
        }
        if rng.random_bool(rate) {
            g.min_leaves = rng.random_range(0..self.min_comparable_leaves.len());
        }
        if rng.random_bool(rate) {
            g.blocking = rng.random_range(0..self.blocking.len());
        }
        g.repair(rng);
    }
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

fn widen((lo, hi): (f64, f64), x: f64) -> (f64, f64) {
    (lo.min(x), hi.max(x))
}

/// Uniform draw rounded to two decimals, kept inside the range.
fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    let x = ((rng.random_range(lo..=hi)) * 100.0).round() / 100.0;
    x.clamp(lo, hi)
}

/// Splits an encodable config into its combinator and leaf nodes; a bare
/// leaf counts as WAVG over one child.
fn shape(config: &MatchConfig) -> Result<(Combinator, Vec<&Node>), EvalError> {
    let root = config.tree.root();
    let (op, children): (Combinator, Vec<&Node>) = match &root.kind {
        NodeKind::Leaf(_) => (Combinator::Wavg, vec![root]),
        NodeKind::Combine { op, children } => (*op, children.iter().collect()),
    };
    let mut seen = BTreeSet::new();
    for c in &children {
        match &c.kind {
            NodeKind::Leaf(l) if seen.insert(l.property.as_str()) => {}
            NodeKind::Leaf(l) => {
                return Err(EvalError::Invalid(format!(
                    "property {} appears in two leaves; the learner allows one leaf per property",
                    l.property
                )))
            }
            NodeKind::Combine { .. } => {
                return Err(EvalError::Invalid(
                    "the learner only encodes trees of depth two".into(),
                ))
            }
        }
    }
    Ok((op, children))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LeafGene {
    pub enabled: bool,
    pub comparator: usize,
    pub cleaners: usize,
    pub weight: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Genome {
    pub leaves: Vec<LeafGene>,
    pub combinator: usize,
    pub accept: f64,
    pub min_leaves: usize,
    pub blocking: usize,
}

impl Genome {
    /// A genome with no enabled leaf gets one.
    fn repair(&mut self, rng: &mut ChaCha8Rng) {
        if !self.leaves.iter().any(|l| l.enabled) {
            let i = rng.random_range(0..self.leaves.len());
            self.leaves[i].enabled = true;
        }
    }

    /// Single-point crossover over gene slots: the leaf genes, then the four
    /// global genes.
    fn crossover(&self, other: &Genome, point: usize) -> (Genome, Genome) {
        let (mut x, mut y) = (self.clone(), other.clone());
        let n = self.leaves.len();
        for slot in point..n + 4 {
            match slot.checked_sub(n) {
                None => std::mem::swap(&mut x.leaves[slot], &mut y.leaves[slot]),
                Some(0) => std::mem::swap(&mut x.combinator, &mut y.combinator),
                Some(1) => std::mem::swap(&mut x.accept, &mut y.accept),
                Some(2) => std::mem::swap(&mut x.min_leaves, &mut y.min_leaves),
                Some(_) => std::mem::swap(&mut x.blocking, &mut y.blocking),
            }
        }
        (x, y)
    }

    fn cache_keys(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.leaves
            .iter()
            .enumerate()
            .filter(|(_, g)| g.enabled)
            .map(|(p, g)| (p, g.comparator, g.cleaners))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    #[serde(default)]
    pub random_seed: u64,
    /// Defaults to [`SearchSpace::for_dataset`].
    #[serde(default)]
    pub search_space: Option<SearchSpace>,
    #[serde(default = "default_tournament")]
    pub tournament_size: usize,
    #[serde(default)]
    pub world: World,
    /// Configurations placed in the initial population; the space is widened
    /// to hold them.
    #[serde(default)]
    pub seed_configs: Vec<MatchConfig>,
}

fn default_tournament() -> usize {
    3
}

impl GaParams {
    pub fn new(population_size: usize, generations: usize, random_seed: u64) -> Self {
        Self {
            population_size,
            generations,
            mutation_rate: 0.1,
            crossover_rate: 0.7,
            random_seed,
            search_space: None,
            tournament_size: default_tournament(),
            world: World::Open,
            seed_configs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Invalid(m.into()));
        if self.population_size < 2 {
            return bad("populationSize must be at least 2");
        }
        if self.generations < 1 {
            return bad("generations must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) || !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad("mutationRate and crossoverRate must lie in [0, 1]");
        }
        if self.tournament_size == 0 {
            return bad("tournamentSize must be at least 1");
        }
        if self.seed_configs.len() > self.population_size {
            return bad("more seed configs than population slots");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnOutcome {
    pub best: MatchConfig,
    pub report: EvalReport,
    /// Best fitness seen up to and including each generation; the first
    /// entry is the initial population.
    pub fitness_trace: Vec<f64>,
    pub search_space: SearchSpace,
}

/// Candidate pairs, their gold verdicts and lazily filled leaf-score tables.
struct Arena<'a> {
    entities: Vec<&'a Entity>,
    space: &'a SearchSpace,
    pairs: Vec<(u32, u32)>,
    verdicts: Vec<Option<Verdict>>,
    /// Per blocking option, which pairs it generates.
    membership: Vec<Option<Vec<bool>>>,
    gold_same: u64,
    gold_different: u64,
    world: World,
    cleaned: HashMap<(usize, usize), Vec<Vec<PropertyValue>>>,
    /// NaN marks "not comparable".
    scores: HashMap<(usize, usize, usize), Vec<f64>>,
}

impl<'a> Arena<'a> {
    fn new(dataset: &'a Dataset, gold: &GoldStandard, space: &'a SearchSpace, world: World) -> Result<Self, EvalError> {
        let entities: Vec<&Entity> = dataset.entities.iter().collect();
        let mut all: BTreeSet<(u32, u32)> = BTreeSet::new();
        let mut generated: Vec<Option<BTreeSet<(u32, u32)>>> = Vec::new();
        for spec in &space.blocking {
            let blocker = Blocker::new(spec, &entities).map_err(|e| EvalError::Invalid(e.to_string()))?;
            let set: BTreeSet<(u32, u32)> = blocker.pairs().map(|(i, j)| (i as u32, j as u32)).collect();
            all.extend(&set);
            generated.push(if spec.strategy == crate::blocking::Strategy::Naive {
                None
            } else {
                Some(set)
            });
        }
        let pairs: Vec<(u32, u32)> = all.into_iter().collect();
        let membership = generated
            .into_iter()
            .map(|set| set.map(|s| pairs.iter().map(|p| s.contains(p)).collect()))
            .collect();
        let index: HashMap<&str, u32> = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i as u32))
            .collect();
        let mut labeled: HashMap<(u32, u32), Verdict> = HashMap::new();
        for l in gold.labels() {
            if let (Some(&a), Some(&b)) = (index.get(l.pair.a().as_str()), index.get(l.pair.b().as_str())) {
                labeled.insert((a.min(b), a.max(b)), l.verdict);
            }
        }
        let verdicts = pairs.iter().map(|p| labeled.get(p).copied()).collect();
        Ok(Self {
            entities,
            space,
            pairs,
            verdicts,
            membership,
            gold_same: gold.count(Verdict::Same) as u64,
            gold_different: gold.count(Verdict::Different) as u64,
            world,
            cleaned: HashMap::new(),
            scores: HashMap::new(),
        })
    }

    fn leaf(&self, (p, c, k): (usize, usize, usize)) -> Leaf {
        let choices = &self.space.properties[p];
        Leaf::new(&choices.property, choices.comparators[c].clone())
            .with_cleaners(choices.cleaner_chains[k].clone())
    }

    fn prepare<'g>(&mut self, genomes: impl IntoIterator<Item = &'g Genome>) {
        let keys: BTreeSet<(usize, usize, usize)> = genomes.into_iter().flat_map(Genome::cache_keys).collect();
        for key in keys {
            if self.scores.contains_key(&key) {
                continue;
            }
            let leaf = self.leaf(key);
            let entities = &self.entities;
            let cleaned = self
                .cleaned
                .entry((key.0, key.2))
                .or_insert_with(|| entities.par_iter().map(|e| leaf.clean(e)).collect());
            let table = self
                .pairs
                .par_iter()
                .map(|&(i, j)| {
                    leaf.score_values(&cleaned[i as usize], &cleaned[j as usize])
                        .unwrap_or(f64::NAN)
                })
                .collect();
            self.scores.insert(key, table);
        }
    }

    fn evaluate(&self, genome: &Genome, config: &MatchConfig) -> EvalReport {
        let tables: Vec<&[f64]> = genome
            .cache_keys()
            .map(|k| self.scores[&k].as_slice())
            .collect();
        let member = self.membership[genome.blocking].as_deref();
        let mut tally = Tally::default();
        for (n, verdict) in self.verdicts.iter().enumerate() {
            if member.is_some_and(|m| !m[n]) {
                continue;
            }
            let (sim, comparable) = config.tree.sim_with(&Cached { tables: &tables, pair: n });
            if comparable >= config.min_comparable_leaves && sim >= config.accept_threshold {
                tally.add(*verdict, self.world);
            }
        }
        tally.report(self.gold_same, self.gold_different, self.world)
    }
}

struct Cached<'t> {
    tables: &'t [&'t [f64]],
    pair: usize,
}

impl LeafSource for Cached<'_> {
    fn score(&self, index: usize, _leaf: &Leaf) -> Option<f64> {
        let s = self.tables[index][self.pair];
        (!s.is_nan()).then_some(s)
    }
}

fn tournament(fitness: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] > fitness[best] {
            best = c;
        }
    }
    best
}

fn argmax(fitness: &[f64]) -> usize {
    let mut best = 0;
    for (i, f) in fitness.iter().enumerate() {
        if *f > fitness[best] {
            best = i;
        }
    }
    best
}

/// Searches for the configuration with the highest f1 against `gold`.
///
/// Generation 0 is the seed configurations plus random genomes. Each later
/// generation keeps the best genome unchanged and fills the rest with
/// tournament-selected parents, crossed over and mutated. Fitness is
/// evaluated in parallel; all random draws come from one seeded generator,
/// so a seed fixes the whole run.
pub fn learn_config(dataset: &Dataset, gold: &GoldStandard, params: &GaParams) -> Result<LearnOutcome, EvalError> {
    params.validate()?;
    if gold.count(Verdict::Same) == 0 || gold.count(Verdict::Different) == 0 {
        return Err(EvalError::DegenerateGold);
    }
    let mut space = params
        .search_space
        .clone()
        .unwrap_or_else(|| SearchSpace::for_dataset(dataset));
    for c in &params.seed_configs {
        c.validate()?;
        space.include(c)?;
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.random_seed);
    let mut arena = Arena::new(dataset, gold, &space, params.world)?;

    let mut population: Vec<Genome> = params
        .seed_configs
        .iter()
        .map(|c| space.encode(c))
        .collect::<Result<_, _>>()?;
    while population.len() < params.population_size {
        population.push(space.random_genome(&mut rng));
    }

    let evaluate = |population: &[Genome], arena: &mut Arena| -> Vec<EvalReport> {
        arena.prepare(population);
        let arena = &*arena;
        population
            .par_iter()
            .map(|g| arena.evaluate(g, &space.decode(g)))
            .collect()
    };

    let mut reports = evaluate(&population, &mut arena);
    let mut fitness: Vec<f64> = reports.iter().map(|r| r.f1).collect();
    let mut best = argmax(&fitness);
    let mut best_genome = population[best].clone();
    let mut best_report = reports[best];
    let mut trace = vec![best_report.f1];
    log::info!("learn: generation 0 best f1 {:.4}", best_report.f1);

    for generation in 1..params.generations {
        let mut next = vec![best_genome.clone()];
        while next.len() < params.population_size {
            let a = &population[tournament(&fitness, params.tournament_size, &mut rng)];
            let b = &population[tournament(&fitness, params.tournament_size, &mut rng)];
            let (mut x, mut y) = if rng.random_bool(params.crossover_rate) {
                let point = rng.random_range(1..a.leaves.len() + 4);
                a.crossover(b, point)
            } else {
                (a.clone(), b.clone())
            };
            space.mutate(&mut x, params.mutation_rate, &mut rng);
            space.mutate(&mut y, params.mutation_rate, &mut rng);
            next.push(x);
            if next.len() < params.population_size {
                next.push(y);
            }
        }
        population = next;
        reports = evaluate(&population, &mut arena);
        fitness = reports.iter().map(|r| r.f1).collect();
        best = argmax(&fitness);
        if fitness[best] > best_report.f1 {
            best_genome = population[best].clone();
            best_report = reports[best];
        }
        trace.push(best_report.f1);
        log::info!("learn: generation {generation} best f1 {:.4}", best_report.f1);
    }

    Ok(LearnOutcome {
        best: space.decode(&best_genome),
        report: best_report,
        fitness_trace: trace,
        search_space: space.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::score;
    use crate::pipeline::run_dedup;
    use crate::synthetic::{generate_synthetic, SyntheticSpec};

    fn name_only() -> MatchConfig {
        let leaf = Leaf::new("name", Comparator::Levenshtein)
            .with_cleaners(chain(&[Cleaner::Lowercase, Cleaner::Trim]));
        MatchConfig::new(ComparatorTree::new(Node::leaf(leaf)).unwrap(), 0.9).with_min_leaves(1)
    }

    fn small() -> (Dataset, GoldStandard) {
        generate_synthetic(&SyntheticSpec::new(120, 12, 5)).unwrap()
    }

    #[test]
    fn encode_decode_round_trip() {
        let (d, _) = small();
        let mut space = SearchSpace::for_dataset(&d);
        let config = name_only();
        space.include(&config).unwrap();
        assert_eq!(space.decode(&space.encode(&config).unwrap()), config);

        let children = vec![
            Node::leaf(Leaf::new("name", Comparator::JaroWinkler).with_cleaners(chain(&[Cleaner::Lowercase, Cleaner::Trim])))
                .weight(2.0)
                .threshold(0.8),
            Node::leaf(Leaf::new("geo", Comparator::Geo(250.0)).with_cleaners(chain(&[Cleaner::GeoSentinelScrub]))),
        ];
        let and = MatchConfig::new(ComparatorTree::new(Node::combine(Combinator::And, children)).unwrap(), 0.7);
        let ordered = space.decode(&space.encode(&and).unwrap());
        assert_eq!(ordered.tree.leaves().len(), 2);
        assert_eq!(ordered.accept_threshold, 0.7);
    }

    #[test]
    fn fitness_equals_pipeline_score() {
        let (d, g) = small();
        let space = SearchSpace::for_dataset(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut arena = Arena::new(&d, &g, &space, World::Closed).unwrap();
        let genomes: Vec<Genome> = (0..12).map(|_| space.random_genome(&mut rng)).collect();
        arena.prepare(&genomes);
        for genome in &genomes {
            let config = space.decode(genome);
            let (accepted, _) = run_dedup(&d, &config).unwrap();
            let direct = score(accepted.iter().map(|a| &a.pair), &g, World::Closed).unwrap();
            assert_eq!(arena.evaluate(genome, &config), direct);
        }
    }

    #[test]
    fn elitism_and_determinism() {
        let (d, g) = small();
        let mut params = GaParams::new(8, 5, 11);
        params.world = World::Closed;
        params.seed_configs = vec![name_only()];
        let first = learn_config(&d, &g, &params).unwrap();
        assert!(first.fitness_trace.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(first, learn_config(&d, &g, &params).unwrap());

        let (accepted, _) = run_dedup(&d, &name_only()).unwrap();
        let baseline = score(accepted.iter().map(|a| &a.pair), &g, World::Closed).unwrap();
        params.generations = 1;
        let one = learn_config(&d, &g, &params).unwrap();
        assert!(one.report.f1 >= baseline.f1);
    }

    #[test]
    fn frozen_operators_keep_trace_constant() {
        let (d, g) = small();
        let mut params = GaParams::new(6, 6, 3);
        params.mutation_rate = 0.0;
        params.crossover_rate = 0.0;
        params.seed_configs = vec![name_only()];
        let out = learn_config(&d, &g, &params).unwrap();
        assert!(out.fitness_trace.iter().all(|f| *f == out.fitness_trace[0]));
    }

    #[test]
    fn rejects_bad_inputs() {
        let (d, g) = small();
        assert!(learn_config(&d, &g, &GaParams::new(1, 3, 0)).is_err());
        assert!(learn_config(&d, &g, &GaParams::new(4, 0, 0)).is_err());
        let only_same: GoldStandard = {
            let mut x = GoldStandard::new();
            let l = g.pairs_with(Verdict::Same).next().unwrap();
            x.record(l.a().clone(), l.b().clone(), Verdict::Same, "t", 0).unwrap();
            x
        };
        assert!(matches!(
            learn_config(&d, &only_same, &GaParams::new(4, 2, 0)),
            Err(EvalError::DegenerateGold)
        ));
    }
}
