//! Merges the members of an equivalence class into one entity, one fusion
//! function per property, and records every decision.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compare::exact_sum;
use crate::model::{
    DecidedBy, Entity, EntityId, EquivalenceSet, GeoPoint, PropertyValue, Provenance, Value,
    ValueKey, ValueKind,
};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("fusion policy error: {0}")]
    Policy(String),
    #[error("class member {0} not found")]
    MissingMember(String),
    #[error("override rejected: {0}")]
    Override(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionFunction {
    /// Keeps every distinct value whose quality reaches the threshold.
    Filter,
    /// Mean of numbers, or component-wise mean of geopoints.
    Average,
    /// Most frequent value.
    Voting,
    /// Most recently ingested value.
    Latest,
    /// Voting among the values of the first listed source that has any.
    PreferSource,
    /// Value with the longest lexical form.
    Longest,
    /// Every distinct value.
    Union,
}

impl FusionFunction {
    pub fn single_valued(self) -> bool {
        !matches!(self, FusionFunction::Filter | FusionFunction::Union)
    }
}

impl std::fmt::Display for FusionFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionFunction::Filter => "filter",
            FusionFunction::Average => "average",
            FusionFunction::Voting => "voting",
            FusionFunction::Latest => "latest",
            FusionFunction::PreferSource => "prefer-source",
            FusionFunction::Longest => "longest",
            FusionFunction::Union => "union",
        })
    }
}

/// A fusion function with its parameters. In config files either a bare
/// function name or a table `{ function, sources, qualityThreshold }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RuleDef")]
#[serde(rename_all = "camelCase")]
pub struct Rule {
    pub function: FusionFunction,
    /// Source preference order for `prefer-source`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
    /// Overrides the policy-wide threshold for `filter`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_threshold: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RuleDef {
    Name(FusionFunction),
    #[serde(rename_all = "camelCase")]
    Full {
        function: FusionFunction,
        #[serde(default)]
        sources: Vec<String>,
        #[serde(default)]
        quality_threshold: Option<f64>,
    },
}

impl From<RuleDef> for Rule {
    fn from(def: RuleDef) -> Self {
        match def {
            RuleDef::Name(function) => Rule::new(function),
            RuleDef::Full {
                function,
                sources,
                quality_threshold,
            } => Rule {
                function,
                sources,
                quality_threshold,
            },
        }
    }
}

impl Rule {
    pub fn new(function: FusionFunction) -> Self {
        Self {
            function,
            sources: Vec::new(),
            quality_threshold: None,
        }
    }

    pub fn prefer_sources<I: IntoIterator<Item = S>, S: Into<String>>(sources: I) -> Self {
        Self {
            function: FusionFunction::PreferSource,
            sources: sources.into_iter().map(Into::into).collect(),
            quality_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FusionPolicy {
    #[serde(default)]
    pub per_property: BTreeMap<String, Rule>,
    /// Properties allowed at most one value. Without a rule they are voted.
    #[serde(default)]
    pub unique_props: BTreeSet<String>,
    #[serde(default = "default_quality_threshold")]
    pub quality_threshold: f64,
}

fn default_quality_threshold() -> f64 {
    0.5
}

impl Default for FusionPolicy {
    fn default() -> Self {
        Self {
            per_property: BTreeMap::new(),
            unique_props: BTreeSet::new(),
            quality_threshold: default_quality_threshold(),
        }
    }
}

impl FusionPolicy {
    pub fn with(mut self, property: impl Into<String>, rule: Rule) -> Self {
        self.per_property.insert(property.into(), rule);
        self
    }

    pub fn unique(mut self, property: impl Into<String>) -> Self {
        self.unique_props.insert(property.into());
        self
    }

    pub fn rule_for(&self, property: &str) -> Rule {
        match self.per_property.get(property) {
            Some(rule) => rule.clone(),
            None if self.unique_props.contains(property) => Rule::new(FusionFunction::Voting),
            None => Rule::new(FusionFunction::Union),
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::Policy(m));
        if !(0.0..=1.0).contains(&self.quality_threshold) {
            return bad(format!("qualityThreshold {} outside [0, 1]", self.quality_threshold));
        }
        for (property, rule) in &self.per_property {
            if self.unique_props.contains(property) && !rule.function.single_valued() {
                return bad(format!(
                    "unique property {property} needs a single-valued function, not {}",
                    rule.function
                ));
            }
            if rule.function == FusionFunction::PreferSource && rule.sources.is_empty() {
                return bad(format!("prefer-source on {property} lists no sources"));
            }
            if let Some(t) = rule.quality_threshold {
                if !(0.0..=1.0).contains(&t) {
                    return bad(format!("qualityThreshold {t} on {property} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// [`Self::validate`] plus kind checks: `average` only over numbers or
    /// only over geopoints.
    pub fn validate_for(&self, entities: &[Entity]) -> Result<(), FusionError> {
        self.validate()?;
        for (property, rule) in &self.per_property {
            if rule.function != FusionFunction::Average {
                continue;
            }
            let kinds: BTreeSet<ValueKind> = entities
                .iter()
                .flat_map(|e| e.values(property))
                .map(PropertyValue::kind)
                .collect();
            average_kind(property, &kinds)?;
        }
        Ok(())
    }
}

fn average_kind(property: &str, kinds: &BTreeSet<ValueKind>) -> Result<Option<ValueKind>, FusionError> {
    match kinds.iter().collect::<Vec<_>>().as_slice() {
        [] => Ok(None),
        [k @ (ValueKind::Number | ValueKind::Geopoint)] => Ok(Some(**k)),
        _ => Err(FusionError::Policy(format!(
            "average on {property} needs only numbers or only geopoints, found {}",
            kinds.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Decision {
    pub property: String,
    pub inputs: Vec<PropertyValue>,
    /// Fusion function name, or `override`.
    pub function: String,
    pub output: Vec<PropertyValue>,
    pub rationale: String,
    #[serde(default)]
    pub decided_by: DecidedBy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FusedEntity {
    pub id: EntityId,
    pub members: Vec<EntityId>,
    #[serde(rename = "type")]
    pub class: String,
    pub properties: BTreeMap<String, Vec<PropertyValue>>,
    pub decisions: Vec<Decision>,
    /// Unique properties whose value was settled only by lexical order;
    /// they await a human decision.
    pub unresolved: BTreeSet<String>,
}

impl FusedEntity {
    pub fn to_entity(&self) -> Entity {
        Entity {
            id: self.id.clone(),
            class: self.class.clone(),
            properties: self
                .properties
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect::<IndexMap<_, _>>(),
        }
    }
}

/// Id of the fused entity for a class: `urn:fused:` and the member ids
/// joined by `+`.
pub fn fused_id(members: &BTreeSet<EntityId>) -> EntityId {
    let joined: Vec<&str> = members.iter().map(EntityId::as_str).collect();
    EntityId::new(format!("urn:fused:{}", joined.join("+"))).expect("non-empty")
}

/// Preference among individual values: higher quality, then newer, then
/// lexical key, then source and raw text.
fn precedence(a: &PropertyValue, b: &PropertyValue) -> Ordering {
    b.effective_quality()
        .total_cmp(&a.effective_quality())
        .then(b.provenance.ingested_at.cmp(&a.provenance.ingested_at))
        .then_with(|| a.key().cmp(&b.key()))
        .then_with(|| a.provenance.source.cmp(&b.provenance.source))
        .then_with(|| a.raw.cmp(&b.raw))
}

struct Group<'v> {
    count: usize,
    /// Highest quality among the occurrences.
    quality: f64,
    /// Newest ingestion time among the occurrences.
    newest: i64,
    best: &'v PropertyValue,
}

/// Distinct values with multiplicity, ordered by key; each group is
/// represented by its preferred occurrence.
fn groups(values: &[PropertyValue]) -> Vec<Group<'_>> {
    let mut by_key: BTreeMap<ValueKey, Group<'_>> = BTreeMap::new();
    for v in values {
        let g = by_key.entry(v.key()).or_insert(Group {
            count: 0,
            quality: f64::NEG_INFINITY,
            newest: i64::MIN,
            best: v,
        });
        g.count += 1;
        g.quality = g.quality.max(v.effective_quality());
        g.newest = g.newest.max(v.provenance.ingested_at);
        if precedence(v, g.best) == Ordering::Less {
            g.best = v;
        }
    }
    by_key.into_values().collect()
}

/// Result of one fusion function.
struct Outcome {
    output: Vec<PropertyValue>,
    rationale: String,
    /// The choice fell to lexical order alone.
    lexical_tie: bool,
}

fn voting(values: &[PropertyValue]) -> Outcome {
    let gs = groups(values);
    let cmp = |a: &Group, b: &Group| {
        b.count
            .cmp(&a.count)
            .then(b.quality.total_cmp(&a.quality))
            .then(b.newest.cmp(&a.newest))
    };
    // Groups are in key order, so the first best-ranked group is the
    // lexically smallest.
    let Some(winner) = gs.iter().min_by(|a, b| cmp(a, b)) else {
        return Outcome {
            output: Vec::new(),
            rationale: "no values".into(),
            lexical_tie: false,
        };
    };
    let ties = gs.iter().filter(|g| cmp(g, winner) == Ordering::Equal).count();
    Outcome {
        output: vec![winner.best.clone()],
        rationale: format!(
            "{} of {} values{}",
            winner.count,
            values.len(),
            if ties > 1 { format!(", tied with {} others, lexical order", ties - 1) } else { String::new() }
        ),
        lexical_tie: ties > 1,
    }
}

/// The occurrence with the greatest `key`, [`precedence`] breaking ties.
fn pick_by<K: Ord>(values: &[PropertyValue], key: impl Fn(&PropertyValue) -> K, what: &str) -> Outcome {
    let Some(winner) = values
        .iter()
        .min_by(|a, b| key(b).cmp(&key(a)).then_with(|| precedence(a, b)))
    else {
        return Outcome {
            output: Vec::new(),
            rationale: "no values".into(),
            lexical_tie: false,
        };
    };
    let tied: BTreeSet<ValueKey> = values
        .iter()
        .filter(|v| {
            key(v) == key(winner)
                && v.effective_quality() == winner.effective_quality()
                && v.provenance.ingested_at == winner.provenance.ingested_at
        })
        .map(PropertyValue::key)
        .collect();
    Outcome {
        output: vec![winner.clone()],
        rationale: what.to_string(),
        lexical_tie: tied.len() > 1,
    }
}

fn average(property: &str, values: &[PropertyValue]) -> Result<Outcome, FusionError> {
    let kinds: BTreeSet<ValueKind> = values.iter().map(PropertyValue::kind).collect();
    let n = values.len() as f64;
    let newest = values.iter().map(|v| v.provenance.ingested_at).max().unwrap_or(0);
    let provenance = Provenance::new("fusion", newest);
    let output = match average_kind(property, &kinds)? {
        None => Vec::new(),
        Some(ValueKind::Number) => {
            let mean = exact_sum(values.iter().map(|v| match v.value {
                Value::Number(x) => x,
                _ => unreachable!("kinds checked"),
            })) / n;
            vec![PropertyValue::number(mean).with_provenance(provenance)]
        }
        Some(_) => {
            let component = |f: fn(&GeoPoint) -> f64| {
                exact_sum(values.iter().map(|v| match &v.value {
                    Value::Geopoint(g) => f(g),
                    _ => unreachable!("kinds checked"),
                })) / n
            };
            let point = GeoPoint::new(component(GeoPoint::lat), component(GeoPoint::lon))
                .expect("mean of valid coordinates is valid");
            vec![PropertyValue::geo(point).with_provenance(provenance)]
        }
    };
    Ok(Outcome {
        output,
        rationale: format!("mean of {} values", values.len()),
        lexical_tie: false,
    })
}

fn apply(property: &str, rule: &Rule, policy: &FusionPolicy, values: &[PropertyValue]) -> Result<Outcome, FusionError> {
    Ok(match rule.function {
        FusionFunction::Voting => voting(values),
        FusionFunction::Average => average(property, values)?,
        FusionFunction::Latest => pick_by(values, |v| v.provenance.ingested_at, "most recently ingested"),
        FusionFunction::Longest => pick_by(values, |v| v.value.lexical().chars().count(), "longest value"),
        FusionFunction::Filter => {
            let threshold = rule.quality_threshold.unwrap_or(policy.quality_threshold);
            let kept: Vec<PropertyValue> = groups(values)
                .into_iter()
                .filter(|g| g.best.effective_quality() >= threshold)
                .map(|g| g.best.clone())
                .collect();
            Outcome {
                rationale: format!("{} distinct values with quality >= {threshold}", kept.len()),
                output: kept,
                lexical_tie: false,
            }
        }
        FusionFunction::Union => {
            let all: Vec<PropertyValue> = groups(values).into_iter().map(|g| g.best.clone()).collect();
            Outcome {
                rationale: format!("{} distinct values", all.len()),
                output: all,
                lexical_tie: false,
            }
        }
        FusionFunction::PreferSource => {
            let preferred = rule.sources.iter().find_map(|s| {
                let from: Vec<PropertyValue> = values
                    .iter()
                    .filter(|v| &v.provenance.source == s)
                    .cloned()
                    .collect();
                (!from.is_empty()).then_some((s, from))
            });
            match preferred {
                Some((source, from)) => {
                    let mut o = voting(&from);
                    o.rationale = format!("source {source}: {}", o.rationale);
                    o
                }
                None => {
                    let mut o = voting(values);
                    o.rationale = format!("no preferred source present; {}", o.rationale);
                    o
                }
            }
        }
    })
}

/// Fuses one class. `members` must hold exactly the entities of the class,
/// in any order.
pub fn fuse_class(
    class: &EquivalenceSet,
    members: &[&Entity],
    policy: &FusionPolicy,
) -> Result<FusedEntity, FusionError> {
    policy.validate()?;
    let by_id: HashMap<&EntityId, &Entity> = members.iter().map(|e| (&e.id, *e)).collect();
    let ordered: Vec<&Entity> = class
        .members()
        .iter()
        .map(|id| by_id.get(id).copied().ok_or_else(|| FusionError::MissingMember(id.to_string())))
        .collect::<Result<_, _>>()?;

    let mut inputs: BTreeMap<&str, Vec<PropertyValue>> = BTreeMap::new();
    for e in &ordered {
        for (property, values) in &e.properties {
            inputs.entry(property).or_default().extend(values.iter().cloned());
        }
    }

    let mut class_votes: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &ordered {
        *class_votes.entry(&e.class).or_default() += 1;
    }
    let class_name = class_votes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(c, _)| c.to_string())
        .unwrap_or_default();

    let mut fused = FusedEntity {
        id: fused_id(class.members()),
        members: class.members().iter().cloned().collect(),
        class: class_name,
        properties: BTreeMap::new(),
        decisions: Vec::new(),
        unresolved: BTreeSet::new(),
    };
    for (property, values) in inputs {
        let rule = policy.rule_for(property);
        let outcome = apply(property, &rule, policy, &values)?;
        if policy.unique_props.contains(property) && (outcome.lexical_tie || outcome.output.len() > 1) {
            fused.unresolved.insert(property.to_string());
        }
        if !outcome.output.is_empty() {
            fused.properties.insert(property.to_string(), outcome.output.clone());
        }
        fused.decisions.push(Decision {
            property: property.to_string(),
            inputs: values,
            function: rule.function.to_string(),
            output: outcome.output,
            rationale: outcome.rationale,
            decided_by: DecidedBy::Threshold,
            operator: None,
        });
    }
    Ok(fused)
}

/// Fuses every class against one entity list, in parallel; output order
/// follows `classes`.
pub fn fuse_classes(
    classes: &[EquivalenceSet],
    entities: &[Entity],
    policy: &FusionPolicy,
) -> Result<Vec<FusedEntity>, FusionError> {
    policy.validate_for(entities)?;
    let by_id: HashMap<&EntityId, &Entity> = entities.iter().map(|e| (&e.id, e)).collect();
    classes
        .par_iter()
        .map(|class| {
            let members: Vec<&Entity> = class
                .members()
                .iter()
                .map(|id| by_id.get(id).copied().ok_or_else(|| FusionError::MissingMember(id.to_string())))
                .collect::<Result<_, _>>()?;
            fuse_class(class, &members, policy)
        })
        .collect()
}

/// A human choice for one property. `value` is the raw or lexical form of
/// one of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Override {
    pub property: String,
    pub value: String,
    pub operator: String,
}

/// Replaces function outputs by values chosen from the inputs and logs each
/// choice as a human decision.
pub fn resolve_overrides(fused: &FusedEntity, overrides: &[Override]) -> Result<FusedEntity, FusionError> {
    let mut out = fused.clone();
    for o in overrides {
        let decision = fused
            .decisions
            .iter()
            .find(|d| d.property == o.property && d.decided_by == DecidedBy::Threshold)
            .ok_or_else(|| FusionError::Override(format!("no property {} in the fused entity", o.property)))?;
        let chosen = decision
            .inputs
            .iter()
            .filter(|v| v.raw == o.value || v.value.lexical() == o.value)
            .min_by(|a, b| precedence(a, b))
            .ok_or_else(|| {
                FusionError::Override(format!("{:?} is not an input value of {}", o.value, o.property))
            })?;
        out.properties.insert(o.property.clone(), vec![chosen.clone()]);
        out.unresolved.remove(&o.property);
        out.decisions.push(Decision {
            property: o.property.clone(),
            inputs: decision.inputs.clone(),
            function: "override".into(),
            output: vec![chosen.clone()],
            rationale: format!("chosen by {}", o.operator),
            decided_by: DecidedBy::Human,
            operator: Some(o.operator.clone()),
        });
    }
    Ok(out)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct LogRecord<'a> {
    entity: &'a EntityId,
    #[serde(flatten)]
    decision: &'a Decision,
}

/// Writes the decision log: one JSON record per decision, tagged with the
/// fused entity id.
pub fn write_decision_log<W: Write>(fused: &[FusedEntity], mut out: W) -> Result<(), FusionError> {
    for f in fused {
        for d in &f.decisions {
            serde_json::to_writer(&mut out, &LogRecord { entity: &f.id, decision: d })
                .map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}
