//! Reading entities from CSV and RDF, and renaming source properties to
//! canonical names.

mod rdf;
mod table;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Entity, EntityId, GeoPoint, ModelError, PropertyValue, Provenance, Value};

pub use rdf::{parse_rdf, write_ntriples, RdfSyntax};
pub use table::{parse_csv, write_csv};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid mapping: {0}")]
    Mapping(String),
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: u64, message: String },
    #[error("duplicate entity id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// How a raw cell or literal is read for a canonical property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeHint {
    Text,
    Number,
    Url,
    Timestamp,
    /// Latitude half of the mapping's geo property.
    Latitude,
    /// Longitude half of the mapping's geo property.
    Longitude,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SchemaMapping {
    /// Source column or predicate to canonical property. Predicate keys may
    /// be full IRIs or compact `prefix:local` names.
    #[serde(default)]
    pub aliases: IndexMap<String, String>,
    #[serde(default)]
    pub type_hints: BTreeMap<String, TypeHint>,
    /// Where latitude/longitude halves end up.
    #[serde(default = "default_geo")]
    pub geo_property: String,
    /// Treat a `(0, 0)` coordinate as missing.
    #[serde(default = "default_true")]
    pub zero_geo_missing: bool,
    /// Predicates whose object node is flattened onto the subject.
    #[serde(default)]
    pub nested: BTreeSet<String>,
    /// Class for entities without an explicit type.
    #[serde(default = "default_class")]
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_column: Option<String>,
    /// CSV column holding a quality score for every value of the row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_column: Option<String>,
    /// Extra prefixes for compact alias keys.
    #[serde(default)]
    pub prefixes: BTreeMap<String, String>,
}

fn default_geo() -> String {
    "geo".into()
}

fn default_true() -> bool {
    true
}

fn default_class() -> String {
    "Thing".into()
}

impl Default for SchemaMapping {
    fn default() -> Self {
        Self {
            aliases: IndexMap::new(),
            type_hints: BTreeMap::new(),
            geo_property: default_geo(),
            zero_geo_missing: true,
            nested: BTreeSet::new(),
            class: default_class(),
            class_column: None,
            quality_column: None,
            prefixes: BTreeMap::new(),
        }
    }
}

const WELL_KNOWN_PREFIXES: &[(&str, &str)] = &[
    ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
    ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
    ("xsd", "http://www.w3.org/2001/XMLSchema#"),
    ("schema", "http://schema.org/"),
    ("schema", "https://schema.org/"),
    ("dc", "http://purl.org/dc/elements/1.1/"),
    ("dcterms", "http://purl.org/dc/terms/"),
    ("purl", "http://purl.org/dc/terms/"),
    ("geo", "http://www.w3.org/2003/01/geo/wgs84_pos#"),
];

impl SchemaMapping {
    /// The five-property restaurant schema: name, url, street address and a
    /// merged geo coordinate, plus telephone.
    pub fn restaurants() -> Self {
        let mut m = Self {
            class: "Restaurant".into(),
            ..Self::default()
        };
        for (from, to) in [
            ("schema:name", "name"),
            ("rdfs:label", "name"),
            ("purl:title", "name"),
            ("dc:title", "name"),
            ("schema:url", "url"),
            ("schema:streetAddress", "streetAddress"),
            ("schema:address", "streetAddress"),
            ("schema:latitude", "latitude"),
            ("geo:lat", "latitude"),
            ("schema:longitude", "longitude"),
            ("geo:long", "longitude"),
            ("schema:telephone", "telephone"),
        ] {
            m.aliases.insert(from.into(), to.into());
        }
        m.type_hints.insert("url".into(), TypeHint::Url);
        m.type_hints.insert("latitude".into(), TypeHint::Latitude);
        m.type_hints.insert("longitude".into(), TypeHint::Longitude);
        m.nested.insert("schema:address".into());
        m.nested.insert("schema:geo".into());
        m
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        for (from, to) in &self.aliases {
            if from.is_empty() || to.is_empty() {
                return Err(IngestError::Mapping(format!(
                    "empty name in alias {from:?} -> {to:?}"
                )));
            }
            if let Some(next) = self.aliases.get(to) {
                if next != to {
                    return Err(IngestError::Mapping(format!(
                        "canonical name {to:?} is itself aliased to {next:?}"
                    )));
                }
            }
        }
        if self.geo_property.is_empty() {
            return Err(IngestError::Mapping("empty geo property".into()));
        }
        let geo_parts = self
            .type_hints
            .values()
            .filter(|h| matches!(h, TypeHint::Latitude | TypeHint::Longitude))
            .count();
        if geo_parts > 0 && self.type_hints.contains_key(&self.geo_property) {
            return Err(IngestError::Mapping(format!(
                "geo property {:?} must not carry its own type hint",
                self.geo_property
            )));
        }
        Ok(())
    }

    /// Canonical name for a CSV column or an already-expanded key.
    pub fn canonical<'a>(&'a self, key: &'a str) -> &'a str {
        self.aliases.get(key).map_or(key, String::as_str)
    }

    pub fn hint(&self, canonical: &str) -> Option<TypeHint> {
        self.type_hints.get(canonical).copied()
    }

    /// Lookup table for full predicate IRIs, given the document's own
    /// prefix declarations.
    fn resolver(&self, document_prefixes: &HashMap<String, String>) -> Resolver {
        let mut prefixes: Vec<(String, String)> = WELL_KNOWN_PREFIXES
            .iter()
            .map(|(p, iri)| (p.to_string(), iri.to_string()))
            .collect();
        prefixes.extend(self.prefixes.iter().map(|(p, i)| (p.clone(), i.clone())));
        prefixes.extend(document_prefixes.iter().map(|(p, i)| (p.clone(), i.clone())));
        let expand = |key: &str| -> Vec<String> {
            let mut out = vec![key.to_string()];
            if let Some((pfx, local)) = key.split_once(':') {
                if !local.starts_with("//") {
                    for (p, iri) in &prefixes {
                        if p == pfx {
                            out.push(format!("{iri}{local}"));
                        }
                    }
                }
            }
            out
        };
        let mut aliases = HashMap::new();
        for (from, to) in &self.aliases {
            for key in expand(from) {
                aliases.entry(key).or_insert_with(|| to.clone());
            }
        }
        let nested = self.nested.iter().flat_map(|k| expand(k)).collect();
        Resolver { aliases, nested }
    }
}

struct Resolver {
    aliases: HashMap<String, String>,
    nested: HashSet<String>,
}

impl Resolver {
    fn canonical(&self, predicate: &str) -> Option<&str> {
        self.aliases.get(predicate).map(String::as_str)
    }

    fn is_nested(&self, predicate: &str) -> bool {
        self.nested.contains(predicate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Dataset {
    pub id: String,
    pub source_label: String,
    pub entities: Vec<Entity>,
}

impl Dataset {
    pub fn new(
        id: impl Into<String>,
        source_label: impl Into<String>,
        entities: Vec<Entity>,
    ) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        for e in &entities {
            e.validate()?;
            if !seen.insert(e.id.as_str()) {
                return Err(IngestError::DuplicateId(e.id.to_string()));
            }
        }
        Ok(Self {
            id: id.into(),
            source_label: source_label.into(),
            entities,
        })
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.iter().find(|e| &e.id == id)
    }

    /// Canonical property names in order of first appearance.
    pub fn properties(&self) -> Vec<&str> {
        let mut seen = IndexMap::new();
        for e in &self.entities {
            for k in e.properties.keys() {
                seen.entry(k.as_str()).or_insert(());
            }
        }
        seen.into_keys().collect()
    }
}

/// A rejected CSV row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RowError {
    pub line: u64,
    pub problem: RowProblem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum RowProblem {
    ColumnCount { expected: usize, found: usize },
    Value { column: String, reason: String },
    MissingId,
    DuplicateId { id: String },
    NoProperties,
    Malformed { reason: String },
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: ", self.line)?;
        match &self.problem {
            RowProblem::ColumnCount { expected, found } => {
                write!(f, "expected {expected} columns, found {found}")
            }
            RowProblem::Value { column, reason } => {
                write!(f, "column {column:?}: {reason}")
            }
            RowProblem::MissingId => f.write_str("empty id"),
            RowProblem::DuplicateId { id } => write!(f, "duplicate id {id:?}"),
            RowProblem::NoProperties => f.write_str("row has no property values"),
            RowProblem::Malformed { reason } => f.write_str(reason),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReport {
    /// Data rows (CSV) or subjects (RDF) seen.
    pub records: usize,
    pub entities: usize,
    pub rejected: Vec<RowError>,
    /// Unmapped predicates and how many triples used them.
    pub dropped_predicates: BTreeMap<String, usize>,
    /// Coordinates dropped as the `(0, 0)` sentinel.
    pub zero_geo: usize,
    pub warnings: Vec<String>,
}

impl IngestReport {
    fn log(&self, what: &str) {
        log::info!(
            "{what}: {} records, {} entities, {} rejected, {} dropped predicates",
            self.records,
            self.entities,
            self.rejected.len(),
            self.dropped_predicates.values().sum::<usize>()
        );
        for w in &self.warnings {
            log::warn!("{what}: {w}");
        }
    }
}

/// A value read under a type hint; coordinates come in halves.
enum Coerced {
    Value(Value),
    Latitude(f64),
    Longitude(f64),
}

fn coerce(hint: Option<TypeHint>, text: &str) -> Result<Coerced, String> {
    let number = || {
        text.trim()
            .parse::<f64>()
            .ok()
            .filter(|n| n.is_finite())
            .ok_or_else(|| format!("{text:?} is not a number"))
    };
    Ok(match hint {
        None | Some(TypeHint::Text) => Coerced::Value(Value::Text(text.to_string())),
        Some(TypeHint::Url) => Coerced::Value(Value::Url(text.to_string())),
        Some(TypeHint::Number) => Coerced::Value(Value::Number(number()?)),
        Some(TypeHint::Timestamp) => Coerced::Value(Value::Timestamp(
            parse_timestamp(text).ok_or_else(|| format!("{text:?} is not a timestamp"))?,
        )),
        Some(TypeHint::Latitude) => Coerced::Latitude(number()?),
        Some(TypeHint::Longitude) => Coerced::Longitude(number()?),
    })
}

/// Unix seconds, RFC 3339 or a plain `YYYY-MM-DD` date (midnight UTC).
pub fn parse_timestamp(text: &str) -> Option<i64> {
    let t = text.trim();
    if let Ok(n) = t.parse::<i64>() {
        return Some(n);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(t) {
        return Some(dt.timestamp());
    }
    chrono::NaiveDate::parse_from_str(t, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

/// Collects latitude/longitude halves of one record and pairs them in order.
#[derive(Default)]
struct GeoHalves {
    lat: Vec<(f64, String)>,
    lon: Vec<(f64, String)>,
}

impl GeoHalves {
    /// Merged values, the number of `(0, 0)` points dropped, and problems.
    fn finish(
        self,
        zero_missing: bool,
    ) -> (Vec<(GeoPoint, String)>, usize, Vec<String>) {
        let mut out = Vec::new();
        let mut zero = 0;
        let mut problems = Vec::new();
        if self.lat.len() != self.lon.len() {
            problems.push(format!(
                "{} latitude and {} longitude values; unpaired halves dropped",
                self.lat.len(),
                self.lon.len()
            ));
        }
        for ((lat, lat_raw), (lon, lon_raw)) in self.lat.into_iter().zip(self.lon) {
            if zero_missing && lat == 0.0 && lon == 0.0 {
                zero += 1;
                continue;
            }
            match GeoPoint::new(lat, lon) {
                Ok(p) => out.push((p, format!("{lat_raw},{lon_raw}"))),
                Err(e) => problems.push(e.to_string()),
            }
        }
        (out, zero, problems)
    }
}

/// Renames every property to its canonical name. Values of aliases that
/// meet under one name are concatenated in the entity's property order.
pub fn apply_mapping(dataset: &Dataset, mapping: &SchemaMapping) -> Dataset {
    let entities = dataset
        .entities
        .iter()
        .map(|e| {
            let mut properties: IndexMap<String, Vec<PropertyValue>> = IndexMap::new();
            for (k, vs) in &e.properties {
                properties
                    .entry(mapping.canonical(k).to_string())
                    .or_default()
                    .extend(vs.iter().cloned());
            }
            Entity {
                id: e.id.clone(),
                class: e.class.clone(),
                properties,
            }
        })
        .collect();
    Dataset {
        id: dataset.id.clone(),
        source_label: dataset.source_label.clone(),
        entities,
    }
}

fn value_with(value: Value, raw: String, provenance: &Provenance) -> PropertyValue {
    PropertyValue::new(value, raw).with_provenance(provenance.clone())
}
