use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Comparator, CompareError};
use crate::model::{Entity, PropertyValue};
use crate::normalize::CleanerChain;

/// What a leaf reports when either entity lacks the property.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// The leaf is left out of its parent's aggregation.
    #[default]
    Ignore,
    /// The leaf scores 0.
    Pessimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combinator {
    /// Weighted average if every child reaches its own threshold, else 0.
    And,
    Or,
    Min,
    Max,
    /// Weight-normalised mean.
    Wavg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub property: String,
    pub cleaners: CleanerChain,
    pub comparator: Comparator,
    pub missing: MissingPolicy,
}

impl Leaf {
    pub fn new(property: impl Into<String>, comparator: Comparator) -> Self {
        Self {
            property: property.into(),
            cleaners: CleanerChain::default(),
            comparator,
            missing: MissingPolicy::Ignore,
        }
    }

    pub fn with_cleaners(mut self, cleaners: CleanerChain) -> Self {
        self.cleaners = cleaners;
        self
    }

    /// Best score over the cross product of two already-cleaned value lists;
    /// `None` if either side is empty.
    pub fn score_values(&self, a: &[PropertyValue], b: &[PropertyValue]) -> Option<f64> {
        if a.is_empty() || b.is_empty() {
            return None;
        }
        let mut best = 0.0f64;
        for va in a {
            for vb in b {
                best = best.max(self.comparator.compare(&va.value, &vb.value));
                if best >= 1.0 {
                    return Some(1.0);
                }
            }
        }
        Some(best)
    }

    pub fn clean(&self, entity: &Entity) -> Vec<PropertyValue> {
        self.cleaners.clean_values(entity.values(&self.property))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Leaf(Leaf),
    Combine {
        op: Combinator,
        children: Vec<Node>,
    },
}

/// A tree node plus the weight and threshold its parent uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NodeDef", into = "NodeDef")]
pub struct Node {
    pub kind: NodeKind,
    pub weight: f64,
    pub threshold: f64,
}

impl Node {
    pub fn leaf(leaf: Leaf) -> Self {
        Self {
            kind: NodeKind::Leaf(leaf),
            weight: 1.0,
            threshold: 0.0,
        }
    }

    pub fn combine(op: Combinator, children: Vec<Node>) -> Self {
        Self {
            kind: NodeKind::Combine { op, children },
            weight: 1.0,
            threshold: 0.0,
        }
    }

    pub fn weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    fn validate(&self) -> Result<(), CompareError> {
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(CompareError::InvalidTree(format!(
                "weight must be > 0, got {}",
                self.weight
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CompareError::InvalidTree(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        match &self.kind {
            NodeKind::Leaf(leaf) => {
                if leaf.property.is_empty() {
                    return Err(CompareError::InvalidTree("leaf without property".into()));
                }
                leaf.comparator.validate()
            }
            NodeKind::Combine { children, .. } => {
                if children.is_empty() {
                    return Err(CompareError::InvalidTree("combinator without children".into()));
                }
                children.iter().try_for_each(Node::validate)
            }
        }
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Leaf>) {
        match &self.kind {
            NodeKind::Leaf(leaf) => out.push(leaf),
            NodeKind::Combine { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }
}

/// Supplies leaf scores during evaluation. Leaves are addressed by their
/// depth-first index.
pub trait LeafSource {
    fn score(&self, index: usize, leaf: &Leaf) -> Option<f64>;
}

/// Scores leaves by cleaning and comparing two entities on the fly.
struct EntityPair<'a> {
    a: &'a Entity,
    b: &'a Entity,
}

impl LeafSource for EntityPair<'_> {
    fn score(&self, _index: usize, leaf: &Leaf) -> Option<f64> {
        leaf.score_values(&leaf.clean(self.a), &leaf.clean(self.b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TreeScore {
    pub sim: f64,
    /// Best leaf score per property, comparable leaves only.
    pub per_property: BTreeMap<String, f64>,
    /// Leaves where both entities had at least one value.
    pub comparable_leaves: usize,
}

/// A validated comparator tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Node", into = "Node")]
pub struct ComparatorTree {
    root: Node,
}

impl ComparatorTree {
    pub fn new(root: Node) -> Result<Self, CompareError> {
        root.validate()?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Leaves in depth-first order; positions are the indices passed to
    /// [`LeafSource::score`].
    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    pub fn evaluate(&self, a: &Entity, b: &Entity) -> TreeScore {
        self.evaluate_with(&EntityPair { a, b })
    }

    pub fn evaluate_with<S: LeafSource + ?Sized>(&self, source: &S) -> TreeScore {
        let mut state = EvalState {
            source,
            next_leaf: 0,
            per_property: Some(BTreeMap::new()),
            comparable: 0,
        };
        let sim = state.node(&self.root).unwrap_or(0.0);
        TreeScore {
            sim,
            per_property: state.per_property.unwrap_or_default(),
            comparable_leaves: state.comparable,
        }
    }

    /// Root similarity and comparable-leaf count only; same numbers as
    /// [`Self::evaluate_with`] without building the per-property map.
    pub fn sim_with<S: LeafSource + ?Sized>(&self, source: &S) -> (f64, usize) {
        let mut state = EvalState {
            source,
            next_leaf: 0,
            per_property: None,
            comparable: 0,
        };
        let sim = state.node(&self.root).unwrap_or(0.0);
        (sim, state.comparable)
    }
}

impl TryFrom<Node> for ComparatorTree {
    type Error = CompareError;

    fn try_from(root: Node) -> Result<Self, Self::Error> {
        Self::new(root)
    }
}

impl From<ComparatorTree> for Node {
    fn from(tree: ComparatorTree) -> Self {
        tree.root
    }
}

struct EvalState<'s, S: ?Sized> {
    source: &'s S,
    next_leaf: usize,
    per_property: Option<BTreeMap<String, f64>>,
    comparable: usize,
}

impl<S: LeafSource + ?Sized> EvalState<'_, S> {
    fn node(&mut self, node: &Node) -> Option<f64> {
        match &node.kind {
            NodeKind::Leaf(leaf) => {
                let index = self.next_leaf;
                self.next_leaf += 1;
                match self.source.score(index, leaf) {
                    Some(s) => {
                        let s = s.clamp(0.0, 1.0);
                        self.comparable += 1;
                        if let Some(map) = &mut self.per_property {
                            let slot = map.entry(leaf.property.clone()).or_insert(s);
                            *slot = slot.max(s);
                        }
                        Some(s)
                    }
                    None => match leaf.missing {
                        MissingPolicy::Ignore => None,
                        MissingPolicy::Pessimistic => Some(0.0),
                    },
                }
            }
            NodeKind::Combine { op, children } => {
                // Every child is visited so leaf indices stay aligned.
                let scored: Vec<(f64, &Node)> = children
                    .iter()
                    .filter_map(|c| self.node(c).map(|s| (s, c)))
                    .collect();
                if scored.is_empty() {
                    return None;
                }
                Some(combine(*op, &scored))
            }
        }
    }
}

fn combine(op: Combinator, scored: &[(f64, &Node)]) -> f64 {
    match op {
        Combinator::Min => scored.iter().map(|(s, _)| *s).fold(1.0, f64::min),
        Combinator::Max | Combinator::Or => scored.iter().map(|(s, _)| *s).fold(0.0, f64::max),
        Combinator::Wavg => weighted_mean(scored),
        Combinator::And => {
            if scored.iter().all(|(s, n)| *s >= n.threshold) {
                weighted_mean(scored)
            } else {
                0.0
            }
        }
    }
}

fn weighted_mean(scored: &[(f64, &Node)]) -> f64 {
    let num = exact_sum(scored.iter().map(|(s, n)| s * n.weight));
    let den = exact_sum(scored.iter().map(|(_, n)| n.weight));
    (num / den).clamp(0.0, 1.0)
}

/// Correctly rounded floating-point sum (Shewchuk partials with a final
/// half-even correction). The result does not depend on summation order and
/// is monotone in every term.
pub(crate) fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Flat, human-editable form of a node used in configuration files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    op: Option<Combinator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    children: Option<Vec<Node>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    property: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comparator: Option<Comparator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cleaners: Option<CleanerChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    missing: Option<MissingPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
}

impl TryFrom<NodeDef> for Node {
    type Error = CompareError;

    fn try_from(def: NodeDef) -> Result<Self, Self::Error> {
        let kind = match (def.op, def.children, def.property, def.comparator) {
            (Some(op), Some(children), None, None) => {
                if def.cleaners.is_some() || def.missing.is_some() {
                    return Err(CompareError::InvalidTree(
                        "cleaners/missing belong on leaves, not combinators".into(),
                    ));
                }
                NodeKind::Combine { op, children }
            }
            (None, None, Some(property), Some(comparator)) => NodeKind::Leaf(Leaf {
                property,
                cleaners: def.cleaners.unwrap_or_default(),
                comparator,
                missing: def.missing.unwrap_or_default(),
            }),
            _ => {
                return Err(CompareError::InvalidTree(
                    "a node needs either `op` + `children` or `property` + `comparator`".into(),
                ))
            }
        };
        let node = Node {
            kind,
            weight: def.weight.unwrap_or(1.0),
            threshold: def.threshold.unwrap_or(0.0),
        };
        node.validate()?;
        Ok(node)
    }
}

impl From<Node> for NodeDef {
    fn from(node: Node) -> Self {
        let mut def = NodeDef {
            weight: Some(node.weight),
            threshold: Some(node.threshold),
            ..NodeDef::default()
        };
        match node.kind {
            NodeKind::Leaf(leaf) => {
                def.property = Some(leaf.property);
                def.comparator = Some(leaf.comparator);
                def.cleaners = (!leaf.cleaners.is_empty()).then_some(leaf.cleaners);
                def.missing = Some(leaf.missing);
            }
            NodeKind::Combine { op, children } => {
                def.op = Some(op);
                def.children = Some(children);
            }
        }
        def
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityId, GeoPoint};
    use proptest::prelude::*;

    /// Leaf scores fixed up front, indexed depth-first.
    struct Fixed(Vec<Option<f64>>);

    impl LeafSource for Fixed {
        fn score(&self, index: usize, _leaf: &Leaf) -> Option<f64> {
            self.0[index]
        }
    }

    fn leaf(property: &str) -> Node {
        Node::leaf(Leaf::new(property, Comparator::Exact))
    }

    fn tree(op: Combinator, children: Vec<Node>) -> ComparatorTree {
        ComparatorTree::new(Node::combine(op, children)).unwrap()
    }

    #[test]
    fn and_all_pass() {
        let t = tree(
            Combinator::And,
            vec![leaf("a").threshold(0.5), leaf("b").threshold(0.5)],
        );
        assert_eq!(t.evaluate_with(&Fixed(vec![Some(1.0), Some(1.0)])).sim, 1.0);
    }

    #[test]
    fn and_gate_fails() {
        let t = tree(
            Combinator::And,
            vec![leaf("a").threshold(0.5), leaf("b").threshold(0.5)],
        );
        assert_eq!(t.evaluate_with(&Fixed(vec![Some(0.4), Some(1.0)])).sim, 0.0);
    }

    #[test]
    fn lattice_ops() {
        let s = Fixed(vec![Some(0.2), Some(0.9)]);
        assert_eq!(tree(Combinator::Min, vec![leaf("a"), leaf("b")]).evaluate_with(&s).sim, 0.2);
        assert_eq!(tree(Combinator::Max, vec![leaf("a"), leaf("b")]).evaluate_with(&s).sim, 0.9);
        assert_eq!(tree(Combinator::Or, vec![leaf("a"), leaf("b")]).evaluate_with(&s).sim, 0.9);
    }

    #[test]
    fn wavg_weights() {
        let t = tree(Combinator::Wavg, vec![leaf("a").weight(3.0), leaf("b")]);
        let s = t.evaluate_with(&Fixed(vec![Some(1.0), Some(0.0)]));
        assert_eq!(s.sim, 0.75);
        assert_eq!(s.comparable_leaves, 2);
    }

    #[test]
    fn missing_policies() {
        let ignore = tree(Combinator::Wavg, vec![leaf("a"), leaf("b")]);
        let s = ignore.evaluate_with(&Fixed(vec![Some(0.8), None]));
        assert_eq!(s.sim, 0.8);
        assert_eq!(s.comparable_leaves, 1);
        assert_eq!(s.per_property.len(), 1);

        let mut pessimistic = Leaf::new("b", Comparator::Exact);
        pessimistic.missing = MissingPolicy::Pessimistic;
        let t = tree(Combinator::Wavg, vec![leaf("a"), Node::leaf(pessimistic)]);
        let s = t.evaluate_with(&Fixed(vec![Some(0.8), None]));
        assert!((s.sim - 0.4).abs() < 1e-12);
        assert_eq!(s.comparable_leaves, 1);

        let s = ignore.evaluate_with(&Fixed(vec![None, None]));
        assert_eq!(s.sim, 0.0);
        assert_eq!(s.comparable_leaves, 0);
    }

    #[test]
    fn nested_indices_stay_aligned() {
        let t = tree(
            Combinator::Max,
            vec![
                Node::combine(Combinator::Min, vec![leaf("a"), leaf("b")]),
                leaf("c"),
            ],
        );
        let s = t.evaluate_with(&Fixed(vec![None, Some(0.3), Some(0.1)]));
        assert_eq!(s.sim, 0.3);
        assert_eq!(s.per_property["b"], 0.3);
        assert_eq!(s.per_property["c"], 0.1);
    }

    #[test]
    fn evaluates_entities_with_multi_values() {
        let ea = Entity::new(EntityId::new("a").unwrap(), "R")
            .with("name", PropertyValue::text("HUGO'S BAR"))
            .with("name", PropertyValue::text("Hugos"))
            .with("geo", PropertyValue::geo(GeoPoint::new(47.0, 10.6).unwrap()));
        let eb = Entity::new(EntityId::new("b").unwrap(), "R")
            .with("name", PropertyValue::text("hugo's bar"))
            .with("geo", PropertyValue::geo(GeoPoint::new(47.0, 10.6).unwrap()));
        let name = Leaf::new("name", Comparator::Levenshtein)
            .with_cleaners(CleanerChain::parse(["lowercase"]).unwrap());
        let t = tree(
            Combinator::And,
            vec![
                Node::leaf(name).threshold(0.8),
                Node::leaf(Leaf::new("geo", Comparator::Geo(100.0))).threshold(0.5),
            ],
        );
        let s = t.evaluate(&ea, &eb);
        assert_eq!(s.sim, 1.0);
        assert_eq!(s.comparable_leaves, 2);
    }

    #[test]
    fn invalid_trees_rejected() {
        assert!(ComparatorTree::new(Node::combine(Combinator::And, vec![])).is_err());
        assert!(ComparatorTree::new(leaf("a").weight(0.0)).is_err());
        assert!(ComparatorTree::new(leaf("a").threshold(1.5)).is_err());
    }

    #[test]
    fn config_form_round_trips() {
        let text = r#"
op = "and"
children = [
  { property = "name", comparator = "qgram(3)", cleaners = ["lowercase"], threshold = 0.7 },
  { property = "geo", comparator = "geo(500)", weight = 2.0, threshold = 0.5 },
]
"#;
        let tree: ComparatorTree = toml::from_str(text).unwrap();
        assert_eq!(tree.leaves().len(), 2);
        assert_eq!(tree.leaves()[0].comparator, Comparator::QGram(3));
        let back: ComparatorTree = toml::from_str(&toml::to_string(&tree).unwrap()).unwrap();
        assert_eq!(back, tree);

        let bad = r#"property = "name""#;
        assert!(toml::from_str::<ComparatorTree>(bad).is_err());
    }

    #[test]
    fn exact_sum_is_order_free() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(exact_sum(xs), 2.0);
        assert_eq!(exact_sum([0.1, 0.2, 0.3]), exact_sum([0.3, 0.2, 0.1]));
    }

    fn children_strategy() -> impl Strategy<Value = Vec<(f64, f64, bool)>> {
        prop::collection::vec((0.0f64..=1.0, 0.1f64..5.0, any::<bool>()), 1..6)
    }

    fn build(op: Combinator, spec: &[(f64, f64, bool)]) -> (ComparatorTree, Fixed) {
        let children = spec
            .iter()
            .enumerate()
            .map(|(i, (_, w, _))| leaf(&format!("p{i}")).weight(*w).threshold(0.5))
            .collect();
        let scores = spec
            .iter()
            .map(|(s, _, present)| present.then_some(*s))
            .collect();
        (tree(op, children), Fixed(scores))
    }

    proptest! {
        #[test]
        fn permutation_invariance(spec in children_strategy(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = spec.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            for op in [Combinator::And, Combinator::Or, Combinator::Min, Combinator::Max, Combinator::Wavg] {
                let (t1, s1) = build(op, &spec);
                let (t2, s2) = build(op, &shuffled);
                prop_assert_eq!(t1.evaluate_with(&s1).sim, t2.evaluate_with(&s2).sim);
            }
        }

        #[test]
        fn wavg_is_monotone(spec in children_strategy(), pick in any::<prop::sample::Index>(), bump in 0.0f64..1.0) {
            let (t, s) = build(Combinator::Wavg, &spec);
            let before = t.evaluate_with(&s).sim;
            let mut raised = s.0.clone();
            let i = pick.index(raised.len());
            raised[i] = raised[i].map(|v| (v + bump).min(1.0));
            let after = t.evaluate_with(&Fixed(raised)).sim;
            prop_assert!(after >= before, "{after} < {before}");
        }

        #[test]
        fn root_in_unit_interval(spec in children_strategy()) {
            for op in [Combinator::And, Combinator::Or, Combinator::Min, Combinator::Max, Combinator::Wavg] {
                let (t, s) = build(op, &spec);
                let sim = t.evaluate_with(&s).sim;
                prop_assert!((0.0..=1.0).contains(&sim));
            }
        }
    }
}
