//! Cleaner functions applied to property values before comparison.
//!
//! Cleaners are addressed by name in configuration (`"lowercase"`,
//! `"alias-split(;)"`); an unknown name fails when the chain is built, never
//! when it is applied. Text cleaners act on `text` and `url` values and leave
//! other kinds untouched. Every built-in cleaner is idempotent.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::model::{PropertyValue, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("unknown cleaner {0:?}")]
    UnknownCleaner(String),
    #[error("cleaner {name:?}: {reason}")]
    BadParameter { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cleaner {
    Lowercase,
    Uppercase,
    Trim,
    CollapseWhitespace,
    StripPunctuation,
    StripAccents,
    DigitsOnly,
    /// `+CC` becomes `00CC`, then everything but digits is dropped.
    PhoneNormalize,
    /// Coerces text to a number; unparseable text is scrubbed.
    NumberParse,
    /// English number words one to twenty become digits.
    OrdinalToDigit,
    /// Leading house-number tokens move behind the street tokens.
    AddressTokenReorder,
    TokenSort,
    /// Drops trailing `, XX` / `, XXX` country codes.
    StripCountrySuffix,
    /// A `(0, 0)` geopoint is removed.
    GeoSentinelScrub,
    /// Drops scheme, `www.` and trailing slashes; lowercases.
    UrlNormalize,
    /// Joins all values of the property into one, separated by the parameter.
    AliasConcat(String),
    /// Splits every value on the parameter.
    AliasSplit(String),
}

impl Cleaner {
    /// Names of every registered cleaner.
    pub const CATALOG: &'static [&'static str] = &[
        "lowercase",
        "uppercase",
        "trim",
        "collapse-whitespace",
        "strip-punctuation",
        "strip-accents",
        "digits-only",
        "phone-normalize",
        "number-parse",
        "ordinal-to-digit",
        "address-token-reorder",
        "token-sort",
        "strip-country-suffix",
        "geo-sentinel-scrub",
        "url-normalize",
        "alias-concat",
        "alias-split",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Cleaner::Lowercase => "lowercase",
            Cleaner::Uppercase => "uppercase",
            Cleaner::Trim => "trim",
            Cleaner::CollapseWhitespace => "collapse-whitespace",
            Cleaner::StripPunctuation => "strip-punctuation",
            Cleaner::StripAccents => "strip-accents",
            Cleaner::DigitsOnly => "digits-only",
            Cleaner::PhoneNormalize => "phone-normalize",
            Cleaner::NumberParse => "number-parse",
            Cleaner::OrdinalToDigit => "ordinal-to-digit",
            Cleaner::AddressTokenReorder => "address-token-reorder",
            Cleaner::TokenSort => "token-sort",
            Cleaner::StripCountrySuffix => "strip-country-suffix",
            Cleaner::GeoSentinelScrub => "geo-sentinel-scrub",
            Cleaner::UrlNormalize => "url-normalize",
            Cleaner::AliasConcat(_) => "alias-concat",
            Cleaner::AliasSplit(_) => "alias-split",
        }
    }

    /// Whether the cleaner may change the value kind.
    pub fn is_kind_coercion(&self) -> bool {
        matches!(self, Cleaner::NumberParse)
    }

    fn is_list_level(&self) -> bool {
        matches!(self, Cleaner::AliasConcat(_) | Cleaner::AliasSplit(_))
    }

    /// Applies a value-level cleaner. `None` means the value was scrubbed.
    fn apply_one(&self, v: &PropertyValue) -> Option<PropertyValue> {
        match self {
            Cleaner::GeoSentinelScrub => match &v.value {
                Value::Geopoint(g) if g.is_null_island() => None,
                _ => Some(v.clone()),
            },
            Cleaner::NumberParse => match &v.value {
                Value::Text(s) | Value::Url(s) => {
                    parse_number(s).map(|n| v.with_value(Value::Number(n)))
                }
                _ => Some(v.clone()),
            },
            _ => match &v.value {
                Value::Text(s) => non_empty(self.transform(s)).map(|t| v.with_value(Value::Text(t))),
                Value::Url(s) => non_empty(self.transform(s)).map(|t| v.with_value(Value::Url(t))),
                _ => Some(v.clone()),
            },
        }
    }

    fn transform(&self, s: &str) -> String {
        match self {
            Cleaner::Lowercase => s.to_lowercase(),
            Cleaner::Uppercase => s.to_uppercase(),
            Cleaner::Trim => s.trim().to_string(),
            Cleaner::CollapseWhitespace => collapse(s),
            Cleaner::StripPunctuation => s
                .chars()
                .filter(|c| c.is_alphanumeric() || c.is_whitespace())
                .collect(),
            Cleaner::StripAccents => s.nfd().filter(|c| !is_combining_mark(*c)).collect(),
            Cleaner::DigitsOnly => s.chars().filter(char::is_ascii_digit).collect(),
            Cleaner::PhoneNormalize => {
                let t = s.trim();
                let t = match t.strip_prefix('+') {
                    Some(rest) => format!("00{rest}"),
                    None => t.to_string(),
                };
                t.chars().filter(char::is_ascii_digit).collect()
            }
            Cleaner::OrdinalToDigit => number_words_to_digits(s),
            Cleaner::AddressTokenReorder => reorder_house_number(s),
            Cleaner::TokenSort => {
                let mut tokens: Vec<&str> = s.split_whitespace().collect();
                tokens.sort_unstable();
                tokens.join(" ")
            }
            Cleaner::StripCountrySuffix => strip_country_suffix(s),
            Cleaner::UrlNormalize => normalize_url(s),
            Cleaner::GeoSentinelScrub
            | Cleaner::NumberParse
            | Cleaner::AliasConcat(_)
            | Cleaner::AliasSplit(_) => s.to_string(),
        }
    }

    fn apply_list(&self, values: Vec<PropertyValue>) -> Vec<PropertyValue> {
        match self {
            Cleaner::AliasConcat(sep) => {
                if values.len() <= 1 {
                    return values;
                }
                let joined = values
                    .iter()
                    .map(|v| v.value.lexical().into_owned())
                    .collect::<Vec<_>>()
                    .join(sep);
                vec![values[0].with_value(Value::Text(joined))]
            }
            Cleaner::AliasSplit(sep) => values
                .into_iter()
                .flat_map(|v| match &v.value {
                    Value::Text(s) if s.contains(sep.as_str()) => s
                        .split(sep.as_str())
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(|p| v.with_value(Value::Text(p.to_string())))
                        .collect(),
                    _ => vec![v],
                })
                .collect(),
            _ => values.iter().filter_map(|v| self.apply_one(v)).collect(),
        }
    }
}

fn non_empty(s: String) -> Option<String> {
    (!s.is_empty()).then_some(s)
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_number(s: &str) -> Option<f64> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
    let compact = if compact.contains(',') && !compact.contains('.') {
        compact.replace(',', ".")
    } else {
        compact
    };
    compact.parse::<f64>().ok().filter(|n| n.is_finite())
}

const NUMBER_WORDS: [&str; 20] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
    "twenty",
];

fn number_words_to_digits(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if !word.is_empty() {
            let lower = word.to_lowercase();
            match NUMBER_WORDS.iter().position(|w| *w == lower) {
                Some(i) => out.push_str(&(i + 1).to_string()),
                None => out.push_str(word),
            }
            word.clear();
        }
    };
    for c in s.chars() {
        if c.is_alphabetic() {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.push(c);
        }
    }
    flush(&mut word, &mut out);
    out
}

fn reorder_house_number(s: &str) -> String {
    let tokens: Vec<&str> = s.split_whitespace().collect();
    let leading = tokens
        .iter()
        .take_while(|t| t.starts_with(|c: char| c.is_ascii_digit()))
        .count();
    if leading == 0 || leading == tokens.len() {
        return tokens.join(" ");
    }
    tokens[leading..]
        .iter()
        .chain(&tokens[..leading])
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

fn strip_country_suffix(s: &str) -> String {
    let mut current = s.trim_end();
    while let Some(idx) = current.rfind(',') {
        let suffix = current[idx + 1..].trim();
        let is_code = (2..=3).contains(&suffix.len()) && suffix.chars().all(|c| c.is_ascii_uppercase());
        if !is_code {
            break;
        }
        current = current[..idx].trim_end();
    }
    current.to_string()
}

fn normalize_url(s: &str) -> String {
    let mut current = s.trim().to_lowercase();
    loop {
        let before = current.len();
        for prefix in ["https://", "http://", "www."] {
            if let Some(rest) = current.strip_prefix(prefix) {
                current = rest.to_string();
            }
        }
        while current.ends_with('/') {
            current.pop();
        }
        if current.len() == before {
            return current;
        }
    }
}

impl fmt::Display for Cleaner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cleaner::AliasConcat(sep) | Cleaner::AliasSplit(sep) => {
                write!(f, "{}({})", self.name(), sep)
            }
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for Cleaner {
    type Err = NormalizeError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let spec = spec.trim();
        let (name, param) = match spec.find('(') {
            Some(open) if spec.ends_with(')') => (&spec[..open], Some(&spec[open + 1..spec.len() - 1])),
            _ => (spec, None),
        };
        let no_param = |c: Cleaner| match param {
            None => Ok(c),
            Some(_) => Err(NormalizeError::BadParameter {
                name: name.to_string(),
                reason: "takes no parameter".into(),
            }),
        };
        let separator = |default: &str| -> Result<String, NormalizeError> {
            let sep = param.unwrap_or(default);
            if sep.is_empty() {
                return Err(NormalizeError::BadParameter {
                    name: name.to_string(),
                    reason: "separator must not be empty".into(),
                });
            }
            Ok(sep.to_string())
        };
        match name {
            "lowercase" => no_param(Cleaner::Lowercase),
            "uppercase" => no_param(Cleaner::Uppercase),
            "trim" => no_param(Cleaner::Trim),
            "collapse-whitespace" => no_param(Cleaner::CollapseWhitespace),
            "strip-punctuation" => no_param(Cleaner::StripPunctuation),
            "strip-accents" => no_param(Cleaner::StripAccents),
            "digits-only" => no_param(Cleaner::DigitsOnly),
            "phone-normalize" => no_param(Cleaner::PhoneNormalize),
            "number-parse" => no_param(Cleaner::NumberParse),
            "ordinal-to-digit" => no_param(Cleaner::OrdinalToDigit),
            "address-token-reorder" => no_param(Cleaner::AddressTokenReorder),
            "token-sort" => no_param(Cleaner::TokenSort),
            "strip-country-suffix" => no_param(Cleaner::StripCountrySuffix),
            "geo-sentinel-scrub" => no_param(Cleaner::GeoSentinelScrub),
            "url-normalize" => no_param(Cleaner::UrlNormalize),
            "alias-concat" => Ok(Cleaner::AliasConcat(separator(" ")?)),
            "alias-split" => Ok(Cleaner::AliasSplit(separator("|")?)),
            other => Err(NormalizeError::UnknownCleaner(other.to_string())),
        }
    }
}

/// An ordered list of cleaners, applied left to right.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CleanerChain {
    steps: Vec<Cleaner>,
}

impl CleanerChain {
    pub fn new(steps: Vec<Cleaner>) -> Self {
        Self { steps }
    }

    pub fn parse<I, S>(names: I) -> Result<Self, NormalizeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let steps = names
            .into_iter()
            .map(|n| n.as_ref().parse())
            .collect::<Result<_, _>>()?;
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[Cleaner] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Cleans one value. The result is empty when the value was scrubbed and
    /// may hold several values when the chain contains `alias-split`.
    pub fn clean(&self, value: &PropertyValue) -> Vec<PropertyValue> {
        if self.steps.iter().all(|c| !c.is_list_level()) {
            let mut current = value.clone();
            for step in &self.steps {
                match step.apply_one(&current) {
                    Some(next) => current = next,
                    None => return Vec::new(),
                }
            }
            return vec![current];
        }
        self.clean_values(std::slice::from_ref(value))
    }

    /// Cleans the full value list of one property.
    pub fn clean_values(&self, values: &[PropertyValue]) -> Vec<PropertyValue> {
        self.steps
            .iter()
            .fold(values.to_vec(), |acc, step| step.apply_list(acc))
    }
}

impl TryFrom<Vec<String>> for CleanerChain {
    type Error = NormalizeError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::parse(names)
    }
}

impl From<CleanerChain> for Vec<String> {
    fn from(chain: CleanerChain) -> Self {
        chain.steps.iter().map(ToString::to_string).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeoPoint;

    fn run(spec: &str, input: &str) -> Option<String> {
        let chain = CleanerChain::parse([spec]).unwrap();
        chain
            .clean(&PropertyValue::text(input))
            .first()
            .map(|v| v.value.lexical().into_owned())
    }

    #[test]
    fn phone_prefix() {
        assert_eq!(run("phone-normalize", "+43 512 9011").as_deref(), Some("00435129011"));
        assert_eq!(run("phone-normalize", "0043 512 9011").as_deref(), Some("00435129011"));
        assert_eq!(run("phone-normalize", "tel."), None);
    }

    #[test]
    fn case_folding() {
        assert_eq!(run("lowercase", "HUGO'S BAR").as_deref(), Some("hugo's bar"));
        assert_eq!(run("uppercase", "hugo's bar").as_deref(), Some("HUGO'S BAR"));
    }

    #[test]
    fn token_sort_makes_reordered_tokens_equal() {
        assert_eq!(run("token-sort", "BAR HUGO'S"), run("token-sort", "HUGO'S BAR"));
        assert_eq!(run("token-sort", "HUGO'S BAR").as_deref(), Some("BAR HUGO'S"));
    }

    #[test]
    fn address_variants_converge() {
        let chain = CleanerChain::parse([
            "ordinal-to-digit",
            "address-token-reorder",
            "lowercase",
            "strip-punctuation",
        ])
        .unwrap();
        let clean = |s: &str| chain.clean(&PropertyValue::text(s))[0].value.lexical().into_owned();
        assert_eq!(clean("11 Str. Herrenanger"), "str herrenanger 11");
        assert_eq!(clean("Str. Herrenanger Eleven"), "str herrenanger 11");
    }

    #[test]
    fn country_suffix() {
        assert_eq!(run("strip-country-suffix", "Serfaus, AT").as_deref(), Some("Serfaus"));
        assert_eq!(run("strip-country-suffix", "Serfaus").as_deref(), Some("Serfaus"));
        assert_eq!(run("strip-country-suffix", "Serfaus, Tirol").as_deref(), Some("Serfaus, Tirol"));
        assert_eq!(run("strip-country-suffix", ", AT"), None);
    }

    #[test]
    fn accents_and_punctuation() {
        assert_eq!(run("strip-accents", "Café Zürich").as_deref(), Some("Cafe Zurich"));
        assert_eq!(run("strip-punctuation", "Hugo's Bar!").as_deref(), Some("Hugos Bar"));
        assert_eq!(run("collapse-whitespace", "  a \t b  ").as_deref(), Some("a b"));
        assert_eq!(run("trim", "  a b ").as_deref(), Some("a b"));
        assert_eq!(run("digits-only", "A-6100 Seefeld").as_deref(), Some("6100"));
    }

    #[test]
    fn url_normalize() {
        assert_eq!(
            run("url-normalize", "HTTPS://www.Seespitz.at/").as_deref(),
            Some("seespitz.at")
        );
    }

    #[test]
    fn number_parse_coerces_kind() {
        let chain = CleanerChain::parse(["number-parse"]).unwrap();
        let out = chain.clean(&PropertyValue::text("47,1"));
        assert_eq!(out[0].value, Value::Number(47.1));
        assert_eq!(out[0].raw, "47,1");
        assert!(chain.clean(&PropertyValue::text("n/a")).is_empty());
    }

    #[test]
    fn geo_sentinel() {
        let chain = CleanerChain::parse(["geo-sentinel-scrub"]).unwrap();
        let zero = PropertyValue::geo(GeoPoint::new(0.0, 0.0).unwrap());
        let real = PropertyValue::geo(GeoPoint::new(47.040537, 10.609275).unwrap());
        assert!(chain.clean(&zero).is_empty());
        assert_eq!(chain.clean(&real), vec![real.clone()]);
        let lat_only = PropertyValue::geo(GeoPoint::new(0.0, 10.0).unwrap());
        assert_eq!(chain.clean(&lat_only).len(), 1);
    }

    #[test]
    fn alias_concat_and_split() {
        let concat = CleanerChain::parse(["alias-concat(; )"]).unwrap();
        let values = [PropertyValue::text("a"), PropertyValue::text("b")];
        let joined = concat.clean_values(&values);
        assert_eq!(joined.len(), 1);
        assert_eq!(joined[0].value, Value::Text("a; b".into()));

        let split = CleanerChain::parse(["alias-split(;)"]).unwrap();
        let parts = split.clean(&PropertyValue::text("a; b;;c"));
        let lex: Vec<_> = parts.iter().map(|v| v.value.lexical().into_owned()).collect();
        assert_eq!(lex, ["a", "b", "c"]);
    }

    #[test]
    fn text_cleaners_leave_other_kinds_alone() {
        let chain = CleanerChain::parse(["lowercase", "digits-only"]).unwrap();
        let n = PropertyValue::number(3.5);
        assert_eq!(chain.clean(&n), vec![n.clone()]);
    }

    #[test]
    fn unknown_cleaner_fails_at_build_time() {
        assert_eq!(
            CleanerChain::parse(["lowercase", "soundex"]),
            Err(NormalizeError::UnknownCleaner("soundex".into()))
        );
        assert!(CleanerChain::parse(["lowercase(x)"]).is_err());
        assert!(CleanerChain::parse(["alias-split()"]).is_err());
    }

    #[test]
    fn catalog_has_at_least_fifteen_entries_and_all_parse() {
        assert!(Cleaner::CATALOG.len() >= 15);
        for name in Cleaner::CATALOG {
            let c: Cleaner = name.parse().unwrap();
            assert_eq!(c.name(), *name);
        }
    }

    #[test]
    fn chain_serde_uses_names() {
        let chain = CleanerChain::parse(["lowercase", "alias-split(;)"]).unwrap();
        let json = serde_json::to_string(&chain).unwrap();
        assert_eq!(json, r#"["lowercase","alias-split(;)"]"#);
        let back: CleanerChain = serde_json::from_str(&json).unwrap();
        assert_eq!(back, chain);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_cleaner() -> impl Strategy<Value = Cleaner> {
            prop::sample::select(Cleaner::CATALOG.to_vec())
                .prop_map(|n| n.parse::<Cleaner>().unwrap())
        }

        proptest! {
            #[test]
            fn every_cleaner_is_idempotent(c in any_cleaner(), s in "\\PC{0,24}") {
                let chain = CleanerChain::new(vec![c]);
                let once = chain.clean(&PropertyValue::text(s));
                let twice = chain.clean_values(&once);
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn idempotent_on_ascii_words(c in any_cleaner(), s in "[A-Za-z0-9 ,.'+|]{0,30}") {
                let chain = CleanerChain::new(vec![c]);
                let once = chain.clean(&PropertyValue::text(s));
                let twice = chain.clean_values(&once);
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn deterministic(c in any_cleaner(), s in "\\PC{0,24}") {
                let chain = CleanerChain::new(vec![c]);
                prop_assert_eq!(chain.clean(&PropertyValue::text(s.clone())), chain.clean(&PropertyValue::text(s)));
            }

            #[test]
            fn geo_scrub_iff_null_island(lat in -90.0f64..90.0, lon in -180.0f64..180.0, zero_lat: bool, zero_lon: bool) {
                let lat = if zero_lat { 0.0 } else { lat };
                let lon = if zero_lon { 0.0 } else { lon };
                let v = PropertyValue::geo(GeoPoint::new(lat, lon).unwrap());
                let out = CleanerChain::new(vec![Cleaner::GeoSentinelScrub]).clean(&v);
                prop_assert_eq!(out.is_empty(), lat == 0.0 && lon == 0.0);
            }
        }
    }
}
