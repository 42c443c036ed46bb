//! Similarity metrics and the comparator tree that combines them.
//!
//! Comparators are written in configuration as `name` or `name(param)`, e.g.
//! `"jaro-winkler"`, `"qgram(3)"` or `"geo(500)"` (scale in metres).

pub mod spatial;
pub mod text;
mod tree;

pub use tree::{
    Combinator, ComparatorTree, Leaf, LeafSource, MissingPolicy, Node, NodeKind, TreeScore,
};
pub(crate) use tree::exact_sum;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GeoPoint, Value};
use spatial::BoundingBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("unknown comparator {0:?}")]
    UnknownComparator(String),
    #[error("comparator {name:?}: {reason}")]
    BadParameter { name: String, reason: String },
    #[error("invalid comparator tree: {0}")]
    InvalidTree(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    String,
    Vector,
    Pointset,
    Temporal,
    Topological,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Comparator {
    Exact,
    Levenshtein,
    DamerauLevenshtein,
    Jaro,
    JaroWinkler,
    Jaccard,
    Dice,
    Overlap,
    Cosine,
    QGram(usize),
    LcsSubstring,
    LcsSubsequence,
    Prefix,
    Suffix,
    MongeElkan,
    Numeric,
    /// Linear decay of Euclidean distance over the given scale.
    Euclidean(f64),
    /// Linear decay of great-circle distance over the given scale in metres.
    Geo(f64),
    /// Linear decay of time difference over the given scale in seconds.
    Temporal(f64),
    BoxOverlap,
}

impl Comparator {
    pub const CATALOG: &'static [&'static str] = &[
        "exact",
        "levenshtein",
        "damerau-levenshtein",
        "jaro",
        "jaro-winkler",
        "jaccard",
        "dice",
        "overlap",
        "cosine",
        "qgram",
        "lcs-substring",
        "lcs-subsequence",
        "prefix",
        "suffix",
        "monge-elkan",
        "numeric",
        "euclidean",
        "geo",
        "temporal",
        "box-overlap",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Comparator::Exact => "exact",
            Comparator::Levenshtein => "levenshtein",
            Comparator::DamerauLevenshtein => "damerau-levenshtein",
            Comparator::Jaro => "jaro",
            Comparator::JaroWinkler => "jaro-winkler",
            Comparator::Jaccard => "jaccard",
            Comparator::Dice => "dice",
            Comparator::Overlap => "overlap",
            Comparator::Cosine => "cosine",
            Comparator::QGram(_) => "qgram",
            Comparator::LcsSubstring => "lcs-substring",
            Comparator::LcsSubsequence => "lcs-subsequence",
            Comparator::Prefix => "prefix",
            Comparator::Suffix => "suffix",
            Comparator::MongeElkan => "monge-elkan",
            Comparator::Numeric => "numeric",
            Comparator::Euclidean(_) => "euclidean",
            Comparator::Geo(_) => "geo",
            Comparator::Temporal(_) => "temporal",
            Comparator::BoxOverlap => "box-overlap",
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Comparator::Cosine | Comparator::Euclidean(_) => Family::Vector,
            Comparator::Geo(_) => Family::Pointset,
            Comparator::Temporal(_) => Family::Temporal,
            Comparator::BoxOverlap => Family::Topological,
            _ => Family::String,
        }
    }

    /// Scores two values in `[0, 1]`.
    ///
    /// String metrics read the lexical form of any value kind. Spatial and
    /// temporal comparators fall back to exact lexical equality when a value
    /// cannot be interpreted in their domain.
    pub fn compare(&self, a: &Value, b: &Value) -> f64 {
        match self {
            Comparator::Geo(scale) => match (as_geo(a), as_geo(b)) {
                (Some(x), Some(y)) => spatial::compare_geo(x, y, *scale),
                _ => lexical_exact(a, b),
            },
            Comparator::Temporal(scale) => match (as_seconds(a), as_seconds(b)) {
                (Some(x), Some(y)) => spatial::compare_temporal(x, y, *scale),
                _ => lexical_exact(a, b),
            },
            Comparator::Euclidean(scale) => match (as_vector(a), as_vector(b)) {
                (Some(x), Some(y)) => spatial::compare_euclidean(&x, &y, *scale)
                    .unwrap_or_else(|| lexical_exact(a, b)),
                _ => lexical_exact(a, b),
            },
            Comparator::BoxOverlap => match (as_box(a), as_box(b)) {
                (Some(x), Some(y)) => spatial::compare_boxes(x, y),
                _ => lexical_exact(a, b),
            },
            Comparator::Numeric => match (a, b) {
                (Value::Number(x), Value::Number(y)) => text::numeric_values(*x, *y),
                _ => text::numeric(&a.lexical(), &b.lexical()),
            },
            _ => compare_text(self, &a.lexical(), &b.lexical()),
        }
    }

    pub fn validate(&self) -> Result<(), CompareError> {
        let bad = |reason: &str| CompareError::BadParameter {
            name: self.name().into(),
            reason: reason.into(),
        };
        match self {
            Comparator::QGram(0) => Err(bad("q must be at least 1")),
            Comparator::Euclidean(s) | Comparator::Geo(s) | Comparator::Temporal(s)
                if !(s.is_finite() && *s > 0.0) =>
            {
                Err(bad("scale must be a positive number"))
            }
            _ => Ok(()),
        }
    }
}

/// Scores two strings with a string or vector-space metric. Spatial
/// comparators interpret the strings in their own domain.
pub fn compare_text(metric: &Comparator, a: &str, b: &str) -> f64 {
    match metric {
        Comparator::Exact => text::exact(a, b),
        Comparator::Levenshtein => text::levenshtein(a, b),
        Comparator::DamerauLevenshtein => text::damerau_levenshtein(a, b),
        Comparator::Jaro => text::jaro(a, b),
        Comparator::JaroWinkler => text::jaro_winkler(a, b),
        Comparator::Jaccard => text::jaccard(a, b),
        Comparator::Dice => text::dice(a, b),
        Comparator::Overlap => text::overlap(a, b),
        Comparator::Cosine => text::cosine(a, b),
        Comparator::QGram(q) => text::qgram(a, b, *q),
        Comparator::LcsSubstring => text::lcs_substring(a, b),
        Comparator::LcsSubsequence => text::lcs_subsequence(a, b),
        Comparator::Prefix => text::prefix(a, b),
        Comparator::Suffix => text::suffix(a, b),
        Comparator::MongeElkan => text::monge_elkan(a, b),
        Comparator::Numeric => text::numeric(a, b),
        other => other.compare(&Value::Text(a.to_string()), &Value::Text(b.to_string())),
    }
}

fn lexical_exact(a: &Value, b: &Value) -> f64 {
    text::exact(&a.lexical(), &b.lexical())
}

fn parse_floats(s: &str) -> Option<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

fn as_geo(v: &Value) -> Option<GeoPoint> {
    match v {
        Value::Geopoint(g) => Some(*g),
        Value::Text(s) => match parse_floats(s)?[..] {
            [lat, lon] => GeoPoint::new(lat, lon).ok(),
            _ => None,
        },
        _ => None,
    }
}

fn as_seconds(v: &Value) -> Option<i64> {
    match v {
        Value::Timestamp(t) => Some(*t),
        Value::Number(n) if n.fract() == 0.0 => Some(*n as i64),
        _ => None,
    }
}

fn as_vector(v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::Number(n) => Some(vec![*n]),
        Value::Geopoint(g) => Some(vec![g.lat(), g.lon()]),
        Value::Timestamp(t) => Some(vec![*t as f64]),
        Value::Text(s) => parse_floats(s),
        Value::Url(_) => None,
    }
}

fn as_box(v: &Value) -> Option<BoundingBox> {
    match v {
        Value::Geopoint(g) => Some(BoundingBox::point(*g)),
        Value::Text(s) => BoundingBox::parse(s),
        _ => None,
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Comparator::QGram(q) => write!(f, "qgram({q})"),
            Comparator::Euclidean(s) | Comparator::Geo(s) | Comparator::Temporal(s) => {
                write!(f, "{}({s})", self.name())
            }
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for Comparator {
    type Err = CompareError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let spec = spec.trim();
        let (name, param) = match spec.find('(') {
            Some(open) if spec.ends_with(')') => {
                (spec[..open].trim(), Some(spec[open + 1..spec.len() - 1].trim()))
            }
            _ => (spec, None),
        };
        let bad = |reason: String| CompareError::BadParameter {
            name: name.to_string(),
            reason,
        };
        let plain = |c: Comparator| match param {
            None => Ok(c),
            Some(_) => Err(bad("takes no parameter".into())),
        };
        let scale = |default: f64| -> Result<f64, CompareError> {
            param
                .map(|p| p.parse::<f64>().map_err(|e| bad(e.to_string())))
                .transpose()
                .map(|v| v.unwrap_or(default))
        };
        let c = match name {
            "exact" => plain(Comparator::Exact)?,
            "levenshtein" => plain(Comparator::Levenshtein)?,
            "damerau-levenshtein" => plain(Comparator::DamerauLevenshtein)?,
            "jaro" => plain(Comparator::Jaro)?,
            "jaro-winkler" => plain(Comparator::JaroWinkler)?,
            "jaccard" => plain(Comparator::Jaccard)?,
            "dice" => plain(Comparator::Dice)?,
            "overlap" => plain(Comparator::Overlap)?,
            "cosine" => plain(Comparator::Cosine)?,
            "qgram" => Comparator::QGram(
                param
                    .map(|p| p.parse::<usize>().map_err(|e| bad(e.to_string())))
                    .transpose()?
                    .unwrap_or(2),
            ),
            "lcs-substring" => plain(Comparator::LcsSubstring)?,
            "lcs-subsequence" => plain(Comparator::LcsSubsequence)?,
            "prefix" => plain(Comparator::Prefix)?,
            "suffix" => plain(Comparator::Suffix)?,
            "monge-elkan" => plain(Comparator::MongeElkan)?,
            "numeric" => plain(Comparator::Numeric)?,
            "euclidean" => Comparator::Euclidean(scale(1.0)?),
            "geo" => Comparator::Geo(scale(1000.0)?),
            "temporal" => Comparator::Temporal(scale(86_400.0)?),
            "box-overlap" => plain(Comparator::BoxOverlap)?,
            other => return Err(CompareError::UnknownComparator(other.to_string())),
        };
        c.validate()?;
        Ok(c)
    }
}

impl TryFrom<String> for Comparator {
    type Error = CompareError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Comparator> for String {
    fn from(c: Comparator) -> Self {
        c.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_comparators() -> Vec<Comparator> {
        Comparator::CATALOG.iter().map(|n| n.parse().unwrap()).collect()
    }

    #[test]
    fn catalog_parses_and_round_trips() {
        assert!(Comparator::CATALOG.len() >= 20);
        for c in all_comparators() {
            let back: Comparator = c.to_string().parse().unwrap();
            assert_eq!(back, c);
        }
        assert_eq!("qgram(3)".parse::<Comparator>().unwrap(), Comparator::QGram(3));
        assert_eq!("geo(500)".parse::<Comparator>().unwrap(), Comparator::Geo(500.0));
        assert!("geo(-1)".parse::<Comparator>().is_err());
        assert!("qgram(0)".parse::<Comparator>().is_err());
        assert!("soundex".parse::<Comparator>().is_err());
        assert!("jaro(2)".parse::<Comparator>().is_err());
    }

    #[test]
    fn families_cover_all_five() {
        let families: std::collections::HashSet<_> =
            all_comparators().iter().map(Comparator::family).collect();
        assert_eq!(families.len(), 5);
    }

    #[test]
    fn qgram_after_token_sort() {
        use crate::model::PropertyValue;
        use crate::normalize::CleanerChain;
        let chain = CleanerChain::parse(["token-sort"]).unwrap();
        let a = &chain.clean(&PropertyValue::text("HUGO'S BAR"))[0];
        let b = &chain.clean(&PropertyValue::text("BAR HUGO'S"))[0];
        assert_eq!(Comparator::QGram(2).compare(&a.value, &b.value), 1.0);
        assert_eq!(Comparator::Jaccard.compare(&a.value, &b.value), 1.0);
    }

    #[test]
    fn geo_against_independent_haversine() {
        // Spherical law of cosines as a second route to the same distance.
        let (lat1, lon1, lat2, lon2) = (47.0f64, 10.6f64, 47.0f64, 10.61f64);
        let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
        let dl = (lon2 - lon1).to_radians();
        let central = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).acos();
        let oracle_m = spatial::EARTH_RADIUS_M * central;
        let expected = 1.0 - oracle_m / 2000.0;
        let a = Value::Geopoint(GeoPoint::new(lat1, lon1).unwrap());
        let b = Value::Geopoint(GeoPoint::new(lat2, lon2).unwrap());
        let got = Comparator::Geo(2000.0).compare(&a, &b);
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
        // about 758 m apart
        assert!((oracle_m - 758.3).abs() < 1.0, "{oracle_m}");
    }

    #[test]
    fn mismatched_kinds_fall_back_to_lexical_equality() {
        let g = Comparator::Geo(100.0);
        let t = Value::Text("not a point".into());
        assert_eq!(g.compare(&t, &t), 1.0);
        assert_eq!(g.compare(&t, &Value::Text("x".into())), 0.0);
        let parsed = Value::Text("47.0, 10.6".into());
        let point = Value::Geopoint(GeoPoint::new(47.0, 10.6).unwrap());
        assert_eq!(g.compare(&parsed, &point), 1.0);
    }

    fn any_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            "[a-zA-Z' ]{0,12}".prop_map(Value::Text),
            "\\PC{0,8}".prop_map(Value::Text),
            (-1e6f64..1e6).prop_map(Value::Number),
            (-90.0f64..90.0, -180.0f64..180.0)
                .prop_map(|(a, b)| Value::Geopoint(GeoPoint::new(a, b).unwrap())),
            (-1_000_000i64..1_000_000).prop_map(Value::Timestamp),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn metrics_are_symmetric_bounded_and_reflexive(a in any_value(), b in any_value()) {
            for c in all_comparators() {
                let ab = c.compare(&a, &b);
                let ba = c.compare(&b, &a);
                prop_assert!((0.0..=1.0).contains(&ab), "{c}: {ab}");
                prop_assert_eq!(ab, ba, "{} asymmetric", c);
                prop_assert_eq!(c.compare(&a, &a), 1.0, "{} identity", c);
            }
        }

        #[test]
        fn geo_symmetric_and_bounded(
            lat1 in -90.0f64..90.0, lon1 in -180.0f64..180.0,
            lat2 in -90.0f64..90.0, lon2 in -180.0f64..180.0,
            scale in 1.0f64..1e7,
        ) {
            let a = GeoPoint::new(lat1, lon1).unwrap();
            let b = GeoPoint::new(lat2, lon2).unwrap();
            let s = spatial::compare_geo(a, b, scale);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, spatial::compare_geo(b, a, scale));
        }
    }
}
