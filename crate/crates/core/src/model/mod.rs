//! Domain types shared by every stage of the engine.
//!
//! An [`Entity`] is an identifier plus a multi-valued property map. Pairs of
//! entities are always handled through [`Pair`], which stores the two ids in
//! canonical (lexicographic) order so that symmetry of `isSameAs` is a
//! structural property rather than something callers must remember.

mod closure;
mod violations;

pub use closure::{
    equivalence_classes, equivalence_classes_from_pairs, EquivalenceSet, UnionFind,
};
pub use violations::{detect_violations, ConstraintViolation, EntityIndex};

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("entity id must not be empty")]
    EmptyId,
    #[error("self-pair ({0}, {0}): reflexive pairs are implicit and never stored")]
    SelfPair(EntityId),
    #[error("assertion references unknown entity {0}")]
    DanglingId(EntityId),
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("quality {0} outside [0, 1]")]
    Quality(f64),
    #[error("similarity {0} outside [0, 1]")]
    Similarity(f64),
    #[error("property {property:?} on {entity} has an empty raw value")]
    EmptyRaw { entity: EntityId, property: String },
    #[error("property {property:?} on {entity} has an empty value list")]
    EmptyProperty { entity: EntityId, property: String },
    #[error("entity {0} has no properties")]
    NoProperties(EntityId),
}

/// Identifier of an entity: an IRI or any other opaque non-empty string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(value: impl Into<String>) -> Result<Self, ModelError> {
        let value = value.into();
        if value.is_empty() {
            return Err(ModelError::EmptyId);
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EntityId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl TryFrom<&str> for EntityId {
    type Error = ModelError;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> Self {
        id.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeo")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawGeo {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawGeo> for GeoPoint {
    type Error = ModelError;

    fn try_from(raw: RawGeo) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, ModelError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(ModelError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(ModelError::Longitude(lon));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// `(0, 0)` is how several sources encode "no coordinates".
    pub fn is_null_island(&self) -> bool {
        self.lat == 0.0 && self.lon == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Text,
    Number,
    Url,
    Geopoint,
    Timestamp,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Text => "text",
            ValueKind::Number => "number",
            ValueKind::Url => "url",
            ValueKind::Geopoint => "geopoint",
            ValueKind::Timestamp => "timestamp",
        })
    }
}

/// Typed content of a property value. Timestamps are Unix seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Value {
    Text(String),
    Number(f64),
    Url(String),
    Geopoint(GeoPoint),
    Timestamp(i64),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Text(_) => ValueKind::Text,
            Value::Number(_) => ValueKind::Number,
            Value::Url(_) => ValueKind::Url,
            Value::Geopoint(_) => ValueKind::Geopoint,
            Value::Timestamp(_) => ValueKind::Timestamp,
        }
    }

    /// Lexical form of the typed content (not necessarily the raw input).
    pub fn lexical(&self) -> Cow<'_, str> {
        match self {
            Value::Text(s) | Value::Url(s) => Cow::Borrowed(s),
            Value::Number(n) => Cow::Owned(n.to_string()),
            Value::Geopoint(g) => Cow::Owned(format!("{},{}", g.lat, g.lon)),
            Value::Timestamp(t) => Cow::Owned(t.to_string()),
        }
    }

    /// Equality key: two values are "the same value" iff their keys match.
    pub fn key(&self) -> ValueKey {
        ValueKey {
            kind: self.kind(),
            lexical: self.lexical().into_owned(),
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) | Value::Url(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueKey {
    pub kind: ValueKind,
    pub lexical: String,
}

/// Where a value came from and when it was ingested (Unix seconds).
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub ingested_at: i64,
}

impl Provenance {
    pub fn new(source: impl Into<String>, ingested_at: i64) -> Self {
        Self {
            source: source.into(),
            ingested_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyValue {
    pub value: Value,
    /// Original lexical form as read from the source. Cleaners never touch it.
    pub raw: String,
    #[serde(default)]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
}

impl PropertyValue {
    pub fn new(value: Value, raw: impl Into<String>) -> Self {
        Self {
            value,
            raw: raw.into(),
            provenance: Provenance::default(),
            quality: None,
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        let s = s.into();
        Self::new(Value::Text(s.clone()), s)
    }

    pub fn url(s: impl Into<String>) -> Self {
        let s = s.into();
        Self::new(Value::Url(s.clone()), s)
    }

    pub fn number(n: f64) -> Self {
        Self::new(Value::Number(n), n.to_string())
    }

    pub fn geo(point: GeoPoint) -> Self {
        Self::new(
            Value::Geopoint(point),
            format!("{},{}", point.lat(), point.lon()),
        )
    }

    pub fn timestamp(t: i64) -> Self {
        Self::new(Value::Timestamp(t), t.to_string())
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn with_quality(mut self, quality: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&quality) {
            return Err(ModelError::Quality(quality));
        }
        self.quality = Some(quality);
        Ok(self)
    }

    pub fn kind(&self) -> ValueKind {
        self.value.kind()
    }

    /// Quality with the documented default of 1.0 for unscored values.
    pub fn effective_quality(&self) -> f64 {
        self.quality.unwrap_or(1.0)
    }

    pub fn key(&self) -> ValueKey {
        self.value.key()
    }

    /// Replaces the typed content, keeping raw form and provenance.
    pub fn with_value(&self, value: Value) -> Self {
        Self {
            value,
            raw: self.raw.clone(),
            provenance: self.provenance.clone(),
            quality: self.quality,
        }
    }
}

/// The unit of comparison: an id, a class name and a multi-valued property map.
///
/// Property keys keep insertion order so that merged aliases retain the order
/// of their source columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    #[serde(rename = "type")]
    pub class: String,
    pub properties: IndexMap<String, Vec<PropertyValue>>,
}

impl Entity {
    pub fn new(id: EntityId, class: impl Into<String>) -> Self {
        Self {
            id,
            class: class.into(),
            properties: IndexMap::new(),
        }
    }

    pub fn with(mut self, property: impl Into<String>, value: PropertyValue) -> Self {
        self.push(property, value);
        self
    }

    pub fn push(&mut self, property: impl Into<String>, value: PropertyValue) {
        self.properties
            .entry(property.into())
            .or_default()
            .push(value);
    }

    pub fn values(&self, property: &str) -> &[PropertyValue] {
        self.properties
            .get(property)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn has(&self, property: &str) -> bool {
        !self.values(property).is_empty()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.properties.is_empty() {
            return Err(ModelError::NoProperties(self.id.clone()));
        }
        for (property, values) in &self.properties {
            if values.is_empty() {
                return Err(ModelError::EmptyProperty {
                    entity: self.id.clone(),
                    property: property.clone(),
                });
            }
            for v in values {
                if v.raw.is_empty() {
                    return Err(ModelError::EmptyRaw {
                        entity: self.id.clone(),
                        property: property.clone(),
                    });
                }
                if let Some(q) = v.quality {
                    if !(0.0..=1.0).contains(&q) {
                        return Err(ModelError::Quality(q));
                    }
                }
            }
        }
        Ok(())
    }
}

/// An unordered pair of distinct ids, stored smaller-id-first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPair")]
pub struct Pair {
    #[serde(rename = "idA")]
    a: EntityId,
    #[serde(rename = "idB")]
    b: EntityId,
}

#[derive(Deserialize)]
struct RawPair {
    #[serde(rename = "idA")]
    a: EntityId,
    #[serde(rename = "idB")]
    b: EntityId,
}

impl TryFrom<RawPair> for Pair {
    type Error = ModelError;

    fn try_from(raw: RawPair) -> Result<Self, Self::Error> {
        canonical_pair(raw.a, raw.b)
    }
}

impl Pair {
    pub fn a(&self) -> &EntityId {
        &self.a
    }

    pub fn b(&self) -> &EntityId {
        &self.b
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        &self.a == id || &self.b == id
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

/// Orders two distinct ids lexicographically.
pub fn canonical_pair(a: EntityId, b: EntityId) -> Result<Pair, ModelError> {
    match a.cmp(&b) {
        std::cmp::Ordering::Less => Ok(Pair { a, b }),
        std::cmp::Ordering::Greater => Ok(Pair { a: b, b: a }),
        std::cmp::Ordering::Equal => Err(ModelError::SelfPair(a)),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    #[default]
    Unlabeled,
    Same,
    Different,
    Related,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Unlabeled => "unlabeled",
            Verdict::Same => "same",
            Verdict::Different => "different",
            Verdict::Related => "related",
        })
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unlabeled" => Ok(Verdict::Unlabeled),
            "same" | "y" | "yes" => Ok(Verdict::Same),
            "different" | "n" | "no" => Ok(Verdict::Different),
            "related" | "r" => Ok(Verdict::Related),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecidedBy {
    #[default]
    Threshold,
    Human,
}

impl DecidedBy {
    fn is_threshold(&self) -> bool {
        matches!(self, DecidedBy::Threshold)
    }
}

/// A scored candidate pair. Serializes as the result-file record
/// `{idA, idB, sim, perProperty, verdict}`; `decidedBy` is only written for
/// human decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SameAsAssertion {
    #[serde(flatten)]
    pub pair: Pair,
    pub sim: f64,
    pub per_property: BTreeMap<String, f64>,
    #[serde(default)]
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "DecidedBy::is_threshold")]
    pub decided_by: DecidedBy,
}

impl SameAsAssertion {
    pub fn new(pair: Pair, sim: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&sim) {
            return Err(ModelError::Similarity(sim));
        }
        Ok(Self {
            pair,
            sim,
            per_property: BTreeMap::new(),
            verdict: Verdict::Unlabeled,
            decided_by: DecidedBy::Threshold,
        })
    }

    pub fn confirmed(pair: Pair) -> Self {
        Self {
            pair,
            sim: 1.0,
            per_property: BTreeMap::new(),
            verdict: Verdict::Same,
            decided_by: DecidedBy::Human,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    #[test]
    fn canonical_pair_orders_ids() {
        let p = canonical_pair(id("x2"), id("x1")).unwrap();
        assert_eq!((p.a().as_str(), p.b().as_str()), ("x1", "x2"));
        let q = canonical_pair(id("x1"), id("x2")).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn canonical_pair_rejects_self_pair() {
        assert_eq!(
            canonical_pair(id("x1"), id("x1")),
            Err(ModelError::SelfPair(id("x1")))
        );
    }

    #[test]
    fn empty_id_rejected() {
        assert_eq!(EntityId::new(""), Err(ModelError::EmptyId));
    }

    #[test]
    fn geo_bounds() {
        assert!(GeoPoint::new(47.040537, 10.609275).is_ok());
        assert!(GeoPoint::new(90.1, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(0.0, 0.0).unwrap().is_null_island());
    }

    #[test]
    fn entity_without_properties_is_invalid() {
        let e = Entity::new(id("a"), "Restaurant");
        assert!(matches!(e.validate(), Err(ModelError::NoProperties(_))));
        let e = e.with("name", PropertyValue::text("Hugo's"));
        assert!(e.validate().is_ok());
    }

    #[test]
    fn pair_deserialization_canonicalizes() {
        let p: Pair = serde_json::from_str(r#"{"idA":"b","idB":"a"}"#).unwrap();
        assert_eq!(p.a().as_str(), "a");
        assert!(serde_json::from_str::<Pair>(r#"{"idA":"a","idB":"a"}"#).is_err());
    }

    #[test]
    fn assertion_record_shape() {
        let mut a = SameAsAssertion::new(canonical_pair(id("b"), id("a")).unwrap(), 0.5).unwrap();
        a.per_property.insert("name".into(), 0.5);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(
            json,
            r#"{"idA":"a","idB":"b","sim":0.5,"perProperty":{"name":0.5},"verdict":"unlabeled"}"#
        );
        let back: SameAsAssertion = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn similarity_out_of_range() {
        let p = canonical_pair(id("a"), id("b")).unwrap();
        assert!(SameAsAssertion::new(p, 1.5).is_err());
    }
}
