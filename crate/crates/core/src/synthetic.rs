//! Synthetic restaurant benchmark with planted, corrupted duplicates and a
//! closed-world gold standard.
//!
//! Base entities live in villages. Names are built from a small vocabulary,
//! so a few names recur in different villages; those pairs are hard negatives
//! that only location or address can separate. Some restaurants share a
//! building with another one: same address, almost the same position and a
//! name that differs only in its kind word. Each planted duplicate copies
//! a base entity, jitters its position and applies one or two corruptions.
//! A duplicate never has both its name and its street corrupted, so exact
//! matching on the untouched fields finds every planted pair.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::GoldStandard;
use crate::ingest::Dataset;
use crate::model::{Entity, EntityId, GeoPoint, PropertyValue, Provenance, Verdict};

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid spec: {0}")]
    Spec(String),
}

/// Relative weights of the corruption kinds applied to planted duplicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ErrorMix {
    #[serde(default)]
    pub typo: f64,
    #[serde(default)]
    pub address_permutation: f64,
    #[serde(default)]
    pub country_suffix: f64,
    #[serde(default)]
    pub missing_geo: f64,
    #[serde(default)]
    pub property_alias: f64,
    #[serde(default)]
    pub value_conflict: f64,
}

impl Default for ErrorMix {
    fn default() -> Self {
        Self {
            typo: 1.0,
            address_permutation: 1.0,
            country_suffix: 1.0,
            missing_geo: 1.0,
            property_alias: 1.0,
            value_conflict: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Corruption {
    Typo,
    AddressPermutation,
    CountrySuffix,
    MissingGeo,
    PropertyAlias,
    ValueConflict,
}

impl ErrorMix {
    fn weighted(&self) -> [(Corruption, f64); 6] {
        [
            (Corruption::Typo, self.typo),
            (Corruption::AddressPermutation, self.address_permutation),
            (Corruption::CountrySuffix, self.country_suffix),
            (Corruption::MissingGeo, self.missing_geo),
            (Corruption::PropertyAlias, self.property_alias),
            (Corruption::ValueConflict, self.value_conflict),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SyntheticSpec {
    pub entity_count: usize,
    pub duplicate_count: usize,
    #[serde(default)]
    pub error_mix: ErrorMix,
    #[serde(default)]
    pub random_seed: u64,
}

impl SyntheticSpec {
    pub fn new(entity_count: usize, duplicate_count: usize, random_seed: u64) -> Self {
        Self {
            entity_count,
            duplicate_count,
            error_mix: ErrorMix::default(),
            random_seed,
        }
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.duplicate_count > self.entity_count {
            return Err(SyntheticError::Spec(format!(
                "duplicateCount {} exceeds entityCount {}",
                self.duplicate_count, self.entity_count
            )));
        }
        let weights = self.error_mix.weighted();
        if weights.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(SyntheticError::Spec("error weights must be finite and >= 0".into()));
        }
        if self.duplicate_count > 0 && weights.iter().all(|(_, w)| *w == 0.0) {
            return Err(SyntheticError::Spec("all error weights are zero".into()));
        }
        Ok(())
    }
}

const KNOWN_VILLAGES: [(&str, f64, f64); 3] = [
    ("Serfaus", 47.0394, 10.6043),
    ("Mayrhofen", 47.1667, 11.8667),
    ("Seefeld", 47.3297, 11.1875),
];
const VILLAGE_HEADS: [&str; 10] = [
    "Ober", "Unter", "Hinter", "Vorder", "Nieder", "Hoch", "Kirch", "Brand", "Matt", "Wies",
];
const VILLAGE_TAILS: [&str; 10] = [
    "au", "tal", "dorf", "berg", "egg", "bach", "feld", "hofen", "wald", "stein",
];
const KINDS: [&str; 12] = [
    "Gasthof", "Hotel", "Restaurant", "Pizzeria", "Café", "Bar", "Stube", "Alm", "Hütte",
    "Bistro", "Wirtshaus", "Konditorei",
];
const ROOTS: [&str; 32] = [
    "Alpen", "See", "Berg", "Wald", "Sonnen", "Edel", "Adler", "Hirsch", "Gams", "Stern",
    "Kronen", "Post", "Linden", "Rosen", "Tiroler", "Kaiser", "Enzian", "Almrausch", "Schnee",
    "Gletscher", "Bären", "Löwen", "Zirben", "Lärchen", "Bergkristall", "Edelweiß", "Falken",
    "Murmel", "Tannen", "Quell", "Jäger", "Wiesen",
];
const SUFFIXES: [&str; 12] = [
    "hof", "blick", "rose", "stube", "spitz", "eck", "garten", "haus", "quelle", "hang",
    "heim", "",
];
const PEOPLE: [&str; 16] = [
    "Hugo", "Anna", "Toni", "Sepp", "Maria", "Luis", "Franz", "Vroni", "Hansi", "Resi", "Max",
    "Leni", "Gabi", "Peter", "Klara", "Otto",
];
const STREETS: [&str; 16] = [
    "Dorfstraße", "Bahnhofstraße", "Kirchgasse", "Herrenanger", "Am Anger", "Sonnenweg",
    "Gampenweg", "Untere Dorfstraße", "Hauptplatz", "Schulweg", "Waldweg", "Almweg",
    "Lärchenweg", "Innweg", "Postgasse", "Mühlweg",
];
const NAME_QUALIFIERS: [&str; 5] = [", Restaurant", " & Bar", " Superior", "****", " Tirol"];

#[derive(Debug, Clone)]
struct Village {
    name: String,
    lat: f64,
    lon: f64,
}

fn villages(count: usize, rng: &mut ChaCha8Rng) -> Vec<Village> {
    let mut out: Vec<Village> = KNOWN_VILLAGES
        .iter()
        .map(|(n, lat, lon)| Village {
            name: (*n).to_string(),
            lat: *lat,
            lon: *lon,
        })
        .collect();
    while out.len() < count {
        let base = format!(
            "{}{}",
            VILLAGE_HEADS.choose(rng).expect("non-empty"),
            VILLAGE_TAILS.choose(rng).expect("non-empty")
        );
        let name = if out.iter().any(|v| v.name == base) {
            format!("{base} {}", out.len())
        } else {
            base
        };
        out.push(Village {
            name,
            lat: rng.random_range(46.9..47.6),
            lon: rng.random_range(10.2..12.8),
        });
    }
    out.truncate(count);
    out
}

fn noun(rng: &mut ChaCha8Rng) -> String {
    let root = ROOTS.choose(rng).expect("non-empty");
    let suffix = SUFFIXES.choose(rng).expect("non-empty");
    format!("{root}{suffix}")
}

fn restaurant_name(rng: &mut ChaCha8Rng) -> String {
    let kind = KINDS.choose(rng).expect("non-empty");
    match rng.random_range(0..100) {
        0..45 => format!("{kind} {}", noun(rng)),
        45..70 => format!("{} {kind}", noun(rng)),
        70..85 => format!("{}'s {kind}", PEOPLE.choose(rng).expect("non-empty")),
        _ => noun(rng),
    }
}

/// Swaps the kind word of a name for another one, or appends one.
fn sibling_name(name: &str, rng: &mut ChaCha8Rng) -> String {
    let other = loop {
        let k = KINDS.choose(rng).expect("non-empty");
        if !name.split(' ').any(|w| w == *k) {
            break *k;
        }
    };
    let words: Vec<&str> = name.split(' ').collect();
    match words.iter().position(|w| KINDS.contains(w)) {
        Some(i) => {
            let mut words = words.clone();
            words[i] = other;
            words.join(" ")
        }
        None => format!("{name} {other}"),
    }
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.to_lowercase().chars() {
        match c {
            'ä' => out.push_str("ae"),
            'ö' => out.push_str("oe"),
            'ü' => out.push_str("ue"),
            'ß' => out.push_str("ss"),
            'é' => out.push('e'),
            c if c.is_ascii_alphanumeric() => out.push(c),
            _ => {
                if !out.ends_with('-') && !out.is_empty() {
                    out.push('-');
                }
            }
        }
    }
    out.trim_end_matches('-').to_string()
}

/// Moves `(lat, lon)` by `metres` in direction `bearing` (radians); flat
/// approximation, adequate at village scale.
fn offset(lat: f64, lon: f64, metres: f64, bearing: f64) -> GeoPoint {
    const M_PER_DEG: f64 = 111_320.0;
    let dlat = metres * bearing.cos() / M_PER_DEG;
    let dlon = metres * bearing.sin() / (M_PER_DEG * lat.to_radians().cos());
    let round = |x: f64| (x * 1e6).round() / 1e6;
    GeoPoint::new(round(lat + dlat), round(lon + dlon)).expect("offset stays in range")
}

fn number_words(n: u32) -> String {
    const ONES: [&str; 20] = [
        "Zero", "One", "Two", "Three", "Four", "Five", "Six", "Seven", "Eight", "Nine", "Ten",
        "Eleven", "Twelve", "Thirteen", "Fourteen", "Fifteen", "Sixteen", "Seventeen",
        "Eighteen", "Nineteen",
    ];
    const TENS: [&str; 10] = [
        "", "", "Twenty", "Thirty", "Forty", "Fifty", "Sixty", "Seventy", "Eighty", "Ninety",
    ];
    match n {
        0..20 => ONES[n as usize].to_string(),
        20..100 if n % 10 == 0 => TENS[(n / 10) as usize].to_string(),
        20..100 => format!("{}-{}", TENS[(n / 10) as usize], ONES[(n % 10) as usize]),
        _ => n.to_string(),
    }
}

fn permute_address(street: &str, number: u32, rng: &mut ChaCha8Rng) -> String {
    let abbreviated = street.strip_suffix("straße").map(|s| format!("{s}str."));
    match rng.random_range(0..3) {
        0 => format!("{} {street}", number),
        1 if street.ends_with("straße") => {
            let spelled = street.replace("straße", "strasse");
            format!("{spelled} {}", number_words(number))
        }
        1 => format!("Strasse {street} {}", number_words(number)),
        _ => match abbreviated {
            Some(short) => format!("{short} {number}"),
            None => format!("Str. {street} {number}"),
        },
    }
}

fn typo(name: &str, rng: &mut ChaCha8Rng) -> String {
    if name.contains('\'') && rng.random_bool(0.5) {
        return name.replacen('\'', "", 1);
    }
    let chars: Vec<char> = name.chars().collect();
    let letters: Vec<usize> = (1..chars.len()).filter(|&i| chars[i].is_alphabetic()).collect();
    let Some(&i) = letters.choose(rng) else {
        return format!("{name}x");
    };
    let mut out = chars.clone();
    match rng.random_range(0..4) {
        0 if i + 1 < out.len() && out[i] != out[i + 1] => out.swap(i, i + 1),
        1 => {
            out.remove(i);
        }
        2 => out.insert(i, chars[i]),
        _ => {
            let replacement = if chars[i] == 'e' { 'a' } else { 'e' };
            out[i] = replacement;
        }
    }
    let typo: String = out.into_iter().collect();
    if typo == name {
        format!("{name}e")
    } else {
        typo
    }
}

struct Base {
    name: String,
    village: usize,
    street: &'static str,
    number: u32,
    url: Option<String>,
    telephone: Option<String>,
    geo: Option<GeoPoint>,
    quality: f64,
}

fn entity_from(base: &Base, villages: &[Village], provenance: Provenance, id: EntityId) -> Entity {
    let pv = |v: PropertyValue| {
        v.with_provenance(provenance.clone())
            .with_quality(base.quality)
            .expect("quality in range")
    };
    let mut e = Entity::new(id, "Restaurant")
        .with("name", pv(PropertyValue::text(&base.name)))
        .with(
            "streetAddress",
            pv(PropertyValue::text(format!("{} {}", base.street, base.number))),
        )
        .with(
            "addressLocality",
            pv(PropertyValue::text(&villages[base.village].name)),
        );
    if let Some(url) = &base.url {
        e.push("url", pv(PropertyValue::url(url)));
    }
    if let Some(tel) = &base.telephone {
        e.push("telephone", pv(PropertyValue::text(tel)));
    }
    if let Some(geo) = base.geo {
        e.push("geo", pv(PropertyValue::geo(geo)));
    }
    e
}

/// Draws one or two corruption kinds. Name and street corruptions exclude
/// each other; a value conflict hits the url if `conflict_on_url`, else the
/// name.
fn draw_corruptions(mix: &ErrorMix, conflict_on_url: bool, rng: &mut ChaCha8Rng) -> Vec<Corruption> {
    let wanted = if rng.random_bool(0.4) { 2 } else { 1 };
    let mut chosen: Vec<Corruption> = Vec::new();
    let touches_name = |c: Corruption| {
        matches!(c, Corruption::Typo | Corruption::PropertyAlias)
            || (c == Corruption::ValueConflict && !conflict_on_url)
    };
    for _ in 0..16 {
        if chosen.len() == wanted {
            break;
        }
        let name_hit = chosen.iter().any(|&c| touches_name(c));
        let street_hit = chosen.contains(&Corruption::AddressPermutation);
        let options: Vec<(Corruption, f64)> = mix
            .weighted()
            .into_iter()
            .filter(|(c, w)| {
                *w > 0.0
                    && !chosen.contains(c)
                    && !(street_hit && touches_name(*c))
                    && !(name_hit && *c == Corruption::AddressPermutation)
            })
            .collect();
        let Ok(&(c, _)) = options.choose_weighted(rng, |(_, w)| *w) else {
            break;
        };
        chosen.push(c);
    }
    chosen
}

/// Generates `entityCount` base entities plus `duplicateCount` corrupted
/// copies, with ids shuffled so they reveal nothing about origin.
///
/// The gold standard labels every planted pair `same` and `2 * duplicates +
/// 10` other pairs `different`, same-name pairs from different villages
/// first. Pairs outside the gold standard are different too, so closed-world
/// scoring is exact.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, GoldStandard), SyntheticError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.random_seed);
    let n = spec.entity_count;
    let village_count = 3.max(n.div_ceil(150));
    let villages = villages(village_count, &mut rng);

    let mut used: Vec<HashSet<String>> = vec![HashSet::new(); village_count];
    let mut bases: Vec<Base> = Vec::with_capacity(n);
    let mut siblings: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        let village = i % village_count;
        let v = &villages[village];
        // A second restaurant in the same building as an earlier one: shared
        // name token, same address, nearly the same position.
        if i >= village_count && rng.random_bool(0.06) {
            let host = i - village_count * rng.random_range(1..=(i / village_count).min(20));
            let name = sibling_name(&bases[host].name, &mut rng);
            if !used[village].contains(&name) {
                used[village].insert(name.clone());
                let h = &bases[host];
                let geo = h.geo.map(|g| offset(g.lat(), g.lon(), rng.random_range(0.0..8.0), rng.random_range(0.0..std::f64::consts::TAU)));
                let url = Some(format!("https://www.{}-{}.at/", slug(&name), slug(&v.name)));
                let (street, number, telephone) = (h.street, h.number, h.telephone.clone());
                bases.push(Base {
                    name,
                    village,
                    street,
                    number,
                    url,
                    telephone,
                    geo,
                    quality: (rng.random_range(0.6..1.0f64) * 100.0).round() / 100.0,
                });
                siblings.push((host, i));
                continue;
            }
        }
        let mut name = None;
        if i > village_count && rng.random_bool(0.08) {
            let other = &bases[rng.random_range(0..bases.len())];
            if other.village != village && !used[village].contains(&other.name) {
                name = Some(other.name.clone());
            }
        }
        let name = name.unwrap_or_else(|| loop {
            let candidate = restaurant_name(&mut rng);
            if !used[village].contains(&candidate) {
                break candidate;
            }
        });
        used[village].insert(name.clone());
        let url = rng
            .random_bool(0.9)
            .then(|| format!("https://www.{}-{}.at/", slug(&name), slug(&v.name)));
        let telephone = rng
            .random_bool(0.6)
            .then(|| format!("+43 5{:03} {:05}", rng.random_range(200..800), rng.random_range(0..100_000)));
        let geo = rng.random_bool(0.95).then(|| {
            let r = 1200.0 * rng.random::<f64>().sqrt();
            offset(v.lat, v.lon, r, rng.random_range(0.0..std::f64::consts::TAU))
        });
        bases.push(Base {
            name,
            village,
            street: STREETS.choose(&mut rng).expect("non-empty"),
            number: rng.random_range(1..60),
            url,
            telephone,
            geo,
            quality: (rng.random_range(0.6..1.0f64) * 100.0).round() / 100.0,
        });
    }

    let total = n + spec.duplicate_count;
    let mut ids: Vec<usize> = (0..total).collect();
    ids.shuffle(&mut rng);
    let id_of = |slot: usize| EntityId::new(format!("r{:05}", ids[slot])).expect("non-empty");

    let mut entities: Vec<Entity> = bases
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let prov = Provenance::new("listing", 1_500_000_000 + 60 * i as i64);
            entity_from(b, &villages, prov, id_of(i))
        })
        .collect();

    let mut originals: Vec<usize> = (0..n).collect();
    originals.shuffle(&mut rng);
    originals.truncate(spec.duplicate_count);
    let mut gold = GoldStandard::new();
    for (k, &orig) in originals.iter().enumerate() {
        let base = &bases[orig];
        let conflict_on_url = base.url.is_some() && rng.random_bool(0.5);
        let mut corruptions = draw_corruptions(&spec.error_mix, conflict_on_url, &mut rng);
        // Renaming the name property goes last so edits still find it.
        corruptions.sort_by_key(|c| *c == Corruption::PropertyAlias);
        let prov = Provenance::new("review-site", 1_600_000_000 + 60 * k as i64);
        let quality = (rng.random_range(0.3..0.9f64) * 100.0).round() / 100.0;
        let copy = Base {
            name: base.name.clone(),
            village: base.village,
            street: base.street,
            number: base.number,
            url: base.url.clone(),
            telephone: base.telephone.clone(),
            geo: base.geo.map(|g| {
                let metres = rng.random_range(3.0..40.0);
                offset(g.lat(), g.lon(), metres, rng.random_range(0.0..std::f64::consts::TAU))
            }),
            quality,
        };
        let id = id_of(n + k);
        let mut dup = entity_from(&copy, &villages, prov.clone(), id.clone());
        let pv = |s: String| {
            PropertyValue::text(s)
                .with_provenance(prov.clone())
                .with_quality(quality)
                .expect("quality in range")
        };
        for c in corruptions {
            match c {
                Corruption::Typo => {
                    let name = dup.values("name")[0].raw.clone();
                    dup.properties.insert("name".into(), vec![pv(typo(&name, &mut rng))]);
                }
                Corruption::AddressPermutation => {
                    let s = permute_address(copy.street, copy.number, &mut rng);
                    dup.properties.insert("streetAddress".into(), vec![pv(s)]);
                }
                Corruption::CountrySuffix => {
                    let suffix = if rng.random_bool(0.5) { ", AT" } else { ", Austria" };
                    let s = format!("{}{suffix}", villages[copy.village].name);
                    dup.properties.insert("addressLocality".into(), vec![pv(s)]);
                }
                Corruption::MissingGeo => {
                    dup.properties.shift_remove("geo");
                }
                Corruption::PropertyAlias => {
                    if let Some(values) = dup.properties.shift_remove("name") {
                        dup.properties.insert("label".into(), values);
                    }
                }
                Corruption::ValueConflict => match copy.url.as_ref().filter(|_| conflict_on_url) {
                    Some(url) => {
                        let other = url.replace("https://www.", "https://").replace(".at/", "-tirol.com/");
                        let value = PropertyValue::url(other)
                            .with_provenance(prov.clone())
                            .with_quality(quality)
                            .expect("quality in range");
                        dup.properties.insert("url".into(), vec![value]);
                    }
                    None => {
                        let q = NAME_QUALIFIERS.choose(&mut rng).expect("non-empty");
                        let name = dup.values("name")[0].raw.clone();
                        dup.properties.insert("name".into(), vec![pv(format!("{name}{q}"))]);
                    }
                },
            }
        }
        entities.push(dup);
        gold.record(id_of(orig), id, Verdict::Same, "generator", 0)
            .expect("distinct ids");
    }

    // Hard negatives first: the same name in different villages, and
    // restaurants sharing a building.
    let want_different = 2 * spec.duplicate_count + 10;
    let planted: BTreeSet<(usize, usize)> = originals
        .iter()
        .enumerate()
        .map(|(k, &o)| (o, n + k))
        .collect();
    let mut by_name: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
    for (i, b) in bases.iter().enumerate() {
        by_name.entry(b.name.as_str()).or_default().push(i);
    }
    let mut different: Vec<(usize, usize)> = by_name
        .values()
        .filter(|v| v.len() > 1)
        .flat_map(|v| v.windows(2).map(|w| (w[0], w[1])))
        .chain(siblings)
        .collect();
    different.shuffle(&mut rng);
    different.truncate(want_different / 2);
    let mut chosen: BTreeSet<(usize, usize)> = different.iter().copied().collect();
    let mut attempts = 0;
    while chosen.len() < want_different && total >= 2 && attempts < 100 * want_different {
        attempts += 1;
        let i = rng.random_range(0..total);
        let j = rng.random_range(0..total);
        let key = (i.min(j), i.max(j));
        if i == j || planted.contains(&key) || chosen.contains(&key) {
            continue;
        }
        // Two copies of one base entity would be a duplicate pair too.
        let origin = |s: usize| if s < n { s } else { originals[s - n] };
        if origin(i) == origin(j) {
            continue;
        }
        chosen.insert(key);
        different.push(key);
    }
    for (i, j) in different {
        gold.record(id_of(i), id_of(j), Verdict::Different, "generator", 0)
            .expect("distinct ids");
    }

    entities.sort_by(|a, b| a.id.cmp(&b.id));
    let dataset = Dataset::new(
        format!("synthetic-{}-{}-{}", n, spec.duplicate_count, spec.random_seed),
        "synthetic",
        entities,
    )
    .expect("generator output is valid");
    Ok((dataset, gold))
}
