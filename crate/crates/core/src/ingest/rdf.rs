use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use indexmap::IndexMap;
use rio_api::formatter::TriplesFormatter;
use rio_api::model::{Literal, NamedNode, Subject, Term, Triple};
use rio_api::parser::{ParseError, TriplesParser};
use rio_turtle::{NTriplesFormatter, NTriplesParser, TurtleError, TurtleParser};
use serde::{Deserialize, Serialize};

use super::{
    coerce, value_with, Coerced, Dataset, GeoHalves, IngestError, IngestReport, Resolver,
    SchemaMapping, TypeHint,
};
use crate::model::{Entity, EntityId, Provenance, Value};

const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RdfSyntax {
    Ntriples,
    Turtle,
}

#[derive(Debug, Clone, PartialEq)]
enum Object {
    Node(String),
    Literal { value: String, datatype: Option<String> },
}

struct Statement {
    subject: String,
    predicate: String,
    object: Object,
}

fn subject_key(s: &Subject<'_>) -> Option<String> {
    match s {
        Subject::NamedNode(n) => Some(n.iri.to_string()),
        Subject::BlankNode(b) => Some(format!("_:{}", b.id)),
        Subject::Triple(_) => None,
    }
}

/// Reads N-Triples or Turtle into entities.
///
/// Every IRI subject that is not itself the target of a nested predicate
/// becomes an entity. Objects of nested predicates (for instance a postal
/// address node) are flattened onto their subject; nesting beyond one level
/// is skipped with a warning. Predicates without an alias are dropped and
/// counted in the report.
pub fn parse_rdf<R: Read>(
    mut input: R,
    syntax: RdfSyntax,
    mapping: &SchemaMapping,
    source: &Provenance,
) -> Result<(Dataset, IngestReport), IngestError> {
    mapping.validate()?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut statements = Vec::new();
    let mut report = IngestReport::default();
    let mut on_triple = |t: Triple<'_>| -> Result<(), TurtleError> {
        let (Some(subject), object) = (subject_key(&t.subject), &t.object) else {
            return Ok(());
        };
        let object = match object {
            Term::NamedNode(n) => Object::Node(n.iri.to_string()),
            Term::BlankNode(b) => Object::Node(format!("_:{}", b.id)),
            Term::Literal(Literal::Simple { value })
            | Term::Literal(Literal::LanguageTaggedString { value, .. }) => Object::Literal {
                value: value.to_string(),
                datatype: None,
            },
            Term::Literal(Literal::Typed { value, datatype }) => Object::Literal {
                value: value.to_string(),
                datatype: Some(datatype.iri.to_string()),
            },
            Term::Triple(_) => return Ok(()),
        };
        statements.push(Statement {
            subject,
            predicate: t.predicate.iri.to_string(),
            object,
        });
        Ok(())
    };
    let document_prefixes = match syntax {
        RdfSyntax::Ntriples => {
            let mut p = NTriplesParser::new(bytes.as_slice());
            p.parse_all(&mut on_triple)
                .map_err(|e| syntax_error(&bytes, &e))?;
            HashMap::new()
        }
        RdfSyntax::Turtle => {
            let mut p = TurtleParser::new(bytes.as_slice(), None);
            p.parse_all(&mut on_triple)
                .map_err(|e| syntax_error(&bytes, &e))?;
            p.prefixes().clone()
        }
    };
    let resolver = mapping.resolver(&document_prefixes);

    let mut by_subject: IndexMap<&str, Vec<&Statement>> = IndexMap::new();
    for s in &statements {
        by_subject.entry(s.subject.as_str()).or_default().push(s);
    }
    let nested_targets: BTreeSet<&str> = statements
        .iter()
        .filter(|s| resolver.is_nested(&s.predicate))
        .filter_map(|s| match &s.object {
            Object::Node(n) => Some(n.as_str()),
            Object::Literal { .. } => None,
        })
        .collect();

    let mut entities = Vec::new();
    for (subject, triples) in &by_subject {
        if nested_targets.contains(subject) {
            continue;
        }
        report.records += 1;
        if subject.starts_with("_:") {
            report
                .warnings
                .push(format!("blank node {subject} has no stable id; skipped"));
            continue;
        }
        let mut builder = EntityBuilder::new(subject, mapping, source);
        for t in triples {
            if t.predicate == RDF_TYPE {
                if let Object::Node(class) = &t.object {
                    builder.class.get_or_insert_with(|| local_name(class).to_string());
                }
                continue;
            }
            match (&t.object, resolver.is_nested(&t.predicate)) {
                (Object::Node(node), true) => {
                    for inner in by_subject.get(node.as_str()).into_iter().flatten() {
                        if inner.predicate == RDF_TYPE {
                            continue;
                        }
                        if resolver.is_nested(&inner.predicate)
                            && matches!(inner.object, Object::Node(_))
                        {
                            report.warnings.push(format!(
                                "{subject}: {} nests more than one level; triple skipped",
                                inner.predicate
                            ));
                            continue;
                        }
                        builder.add(inner, &resolver, &mut report);
                    }
                }
                _ => builder.add(t, &resolver, &mut report),
            }
        }
        if let Some(entity) = builder.finish(&mut report) {
            entities.push(entity);
        }
    }
    report.entities = entities.len();
    report.log("rdf");
    let dataset = Dataset::new(source.source.clone(), source.source.clone(), entities)?;
    Ok((dataset, report))
}

fn syntax_error(bytes: &[u8], e: &TurtleError) -> IngestError {
    let offset = e.textual_position().map_or(0, |p| {
        // Lines are counted from 1, bytes within a line from 0.
        let line_start: usize = bytes
            .split_inclusive(|b| *b == b'\n')
            .take(p.line_number().saturating_sub(1) as usize)
            .map(<[u8]>::len)
            .sum();
        line_start as u64 + p.byte_number()
    });
    let message = e.to_string();
    let message = message
        .split(" on line ")
        .next()
        .unwrap_or(&message)
        .to_string();
    IngestError::Syntax { offset, message }
}

fn local_name(iri: &str) -> &str {
    iri.rsplit(['#', '/']).next().filter(|s| !s.is_empty()).unwrap_or(iri)
}

struct EntityBuilder<'a> {
    id: &'a str,
    class: Option<String>,
    properties: Vec<(String, Value, String)>,
    geo: GeoHalves,
    mapping: &'a SchemaMapping,
    source: &'a Provenance,
}

impl<'a> EntityBuilder<'a> {
    fn new(id: &'a str, mapping: &'a SchemaMapping, source: &'a Provenance) -> Self {
        Self {
            id,
            class: None,
            properties: Vec::new(),
            geo: GeoHalves::default(),
            mapping,
            source,
        }
    }

    fn add(&mut self, t: &Statement, resolver: &Resolver, report: &mut IngestReport) {
        let Some(canonical) = resolver.canonical(&t.predicate) else {
            *report.dropped_predicates.entry(t.predicate.clone()).or_default() += 1;
            return;
        };
        let (text, hint) = match &t.object {
            Object::Node(iri) => (
                iri.as_str(),
                self.mapping.hint(canonical).or(Some(TypeHint::Url)),
            ),
            Object::Literal { value, datatype } => (
                value.as_str(),
                self.mapping
                    .hint(canonical)
                    .or_else(|| datatype.as_deref().and_then(datatype_hint)),
            ),
        };
        if text.trim().is_empty() {
            return;
        }
        match coerce(hint, text) {
            Ok(Coerced::Value(v)) => self.properties.push((canonical.to_string(), v, text.into())),
            Ok(Coerced::Latitude(v)) => self.geo.lat.push((v, text.into())),
            Ok(Coerced::Longitude(v)) => self.geo.lon.push((v, text.into())),
            Err(reason) => report
                .warnings
                .push(format!("{} {}: {reason}; value skipped", self.id, t.predicate)),
        }
    }

    fn finish(self, report: &mut IngestReport) -> Option<Entity> {
        let id = EntityId::new(self.id).ok()?;
        let mut entity = Entity::new(id, self.class.unwrap_or_else(|| self.mapping.class.clone()));
        for (k, v, raw) in self.properties {
            entity.push(k, value_with(v, raw, self.source));
        }
        let (points, zero, problems) = self.geo.finish(self.mapping.zero_geo_missing);
        report.zero_geo += zero;
        report
            .warnings
            .extend(problems.into_iter().map(|p| format!("{}: {p}", self.id)));
        for (p, raw) in points {
            entity.push(
                self.mapping.geo_property.clone(),
                value_with(Value::Geopoint(p), raw, self.source),
            );
        }
        if entity.properties.is_empty() {
            report
                .warnings
                .push(format!("{}: no mapped properties; skipped", self.id));
            return None;
        }
        Some(entity)
    }
}

fn datatype_hint(datatype: &str) -> Option<TypeHint> {
    let local = datatype.strip_prefix(XSD)?;
    match local {
        "integer" | "decimal" | "double" | "float" | "int" | "long" => Some(TypeHint::Number),
        "dateTime" | "date" => Some(TypeHint::Timestamp),
        "anyURI" => Some(TypeHint::Url),
        _ => None,
    }
}

/// Writes entities as N-Triples. Properties become `<vocabulary><name>`
/// predicates; a geo value becomes `latitude` and `longitude` literals.
/// Entity ids that are not absolute IRIs are placed under `urn:entity:`.
pub fn write_ntriples<W: Write>(
    entities: &[Entity],
    vocabulary: &str,
    geo_property: &str,
    out: W,
) -> std::io::Result<W> {
    let mut fmt = NTriplesFormatter::new(out);
    let xsd = |local: &str| format!("{XSD}{local}");
    let (double, any_uri, date_time) = (xsd("double"), xsd("anyURI"), xsd("dateTime"));
    for e in entities {
        let subject_iri = if is_absolute_iri(e.id.as_str()) {
            e.id.as_str().to_string()
        } else {
            format!("urn:entity:{}", e.id.as_str())
        };
        let subject = Subject::NamedNode(NamedNode { iri: &subject_iri });
        let class_iri = format!("{vocabulary}{}", e.class);
        fmt.format(&Triple {
            subject,
            predicate: NamedNode { iri: RDF_TYPE },
            object: Term::NamedNode(NamedNode { iri: &class_iri }),
        })?;
        for (property, values) in &e.properties {
            let predicate = format!("{vocabulary}{property}");
            for v in values {
                let mut emit = |predicate: &str, value: &str, datatype: Option<&str>| {
                    let literal = match datatype {
                        Some(d) => Literal::Typed {
                            value,
                            datatype: NamedNode { iri: d },
                        },
                        None => Literal::Simple { value },
                    };
                    fmt.format(&Triple {
                        subject,
                        predicate: NamedNode { iri: predicate },
                        object: Term::Literal(literal),
                    })
                };
                match &v.value {
                    Value::Text(s) => emit(&predicate, s, None)?,
                    Value::Url(s) => emit(&predicate, s, Some(&any_uri))?,
                    Value::Number(n) => emit(&predicate, &n.to_string(), Some(&double))?,
                    Value::Timestamp(t) => {
                        let text = chrono::DateTime::from_timestamp(*t, 0)
                            .map(|d| d.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
                            .unwrap_or_else(|| t.to_string());
                        emit(&predicate, &text, Some(&date_time))?
                    }
                    Value::Geopoint(g) if property == geo_property => {
                        emit(&format!("{vocabulary}latitude"), &g.lat().to_string(), Some(&double))?;
                        emit(&format!("{vocabulary}longitude"), &g.lon().to_string(), Some(&double))?;
                    }
                    Value::Geopoint(g) => {
                        emit(&predicate, &format!("{},{}", g.lat(), g.lon()), None)?
                    }
                }
            }
        }
    }
    fmt.finish()
}

fn is_absolute_iri(s: &str) -> bool {
    match s.split_once(':') {
        Some((scheme, rest)) => {
            !rest.is_empty()
                && scheme.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                && scheme
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c))
                && !s.contains([' ', '<', '>', '"', '{', '}', '|', '\\', '^', '`'])
        }
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeoPoint;

    fn src() -> Provenance {
        Provenance::new("kg", 0)
    }

    fn parse(text: &str, syntax: RdfSyntax) -> (Dataset, IngestReport) {
        parse_rdf(text.as_bytes(), syntax, &SchemaMapping::restaurants(), &src()).unwrap()
    }

    #[test]
    fn single_triple() {
        let (d, _) = parse(
            "<http://ex.org/s> <http://schema.org/name> \"Hugo's Bar\" .\n",
            RdfSyntax::Ntriples,
        );
        assert_eq!(d.len(), 1);
        assert_eq!(d.entities[0].id.as_str(), "http://ex.org/s");
        assert_eq!(d.entities[0].values("name")[0].raw, "Hugo's Bar");
    }

    #[test]
    fn postal_address_is_flattened() {
        let ttl = r#"
@prefix schema: <http://schema.org/> .
@prefix ex: <http://ex.org/> .
ex:r1 a schema:Restaurant ;
    schema:name "Hotel Seespitz" ;
    schema:address [ a schema:PostalAddress ; schema:streetAddress "Str. Herrenanger 11" ] ;
    schema:geo ex:g1 .
ex:g1 schema:latitude "47.040537"^^<http://www.w3.org/2001/XMLSchema#double> ;
    schema:longitude "10.609275" .
"#;
        let (d, report) = parse(ttl, RdfSyntax::Turtle);
        assert_eq!(d.len(), 1, "{report:?}");
        let e = &d.entities[0];
        assert_eq!(e.class, "Restaurant");
        assert_eq!(e.values("streetAddress")[0].raw, "Str. Herrenanger 11");
        assert_eq!(
            e.values("geo")[0].value,
            Value::Geopoint(GeoPoint::new(47.040537, 10.609275).unwrap())
        );
    }

    #[test]
    fn aliases_merge_into_one_list() {
        let ttl = r#"
@prefix schema: <http://schema.org/> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
<http://ex.org/r> rdfs:label "Seespitz" ; schema:name "Hotel Seespitz" .
"#;
        let (d, _) = parse(ttl, RdfSyntax::Turtle);
        let names: Vec<&str> = d.entities[0].values("name").iter().map(|v| v.raw.as_str()).collect();
        assert_eq!(names, ["Seespitz", "Hotel Seespitz"]);
    }

    #[test]
    fn deep_nesting_skipped_and_unmapped_counted() {
        let ttl = r#"
@prefix schema: <http://schema.org/> .
<http://ex.org/r> schema:name "A" ; schema:starRating "4" ;
    schema:address [ schema:streetAddress "S 1" ; schema:geo [ schema:latitude "1" ; schema:longitude "2" ] ] .
"#;
        let (d, report) = parse(ttl, RdfSyntax::Turtle);
        let e = &d.entities[0];
        assert!(e.has("streetAddress"));
        assert!(!e.has("geo"));
        assert_eq!(report.dropped_predicates["http://schema.org/starRating"], 1);
        assert!(report.warnings.iter().any(|w| w.contains("more than one level")));
    }

    #[test]
    fn syntax_error_has_byte_offset() {
        let text = "<http://ex.org/a> <http://schema.org/name> \"x\" .\n<http://ex.org/b> oops .\n";
        let err = parse_rdf(text.as_bytes(), RdfSyntax::Ntriples, &SchemaMapping::restaurants(), &src())
            .unwrap_err();
        let IngestError::Syntax { offset, .. } = err else {
            panic!("{err:?}")
        };
        // The parser reports the position inside the offending token.
        let start = text.find("oops").unwrap() as u64;
        assert!((start..start + 4).contains(&offset), "{offset}");
    }

    #[test]
    fn zero_geo_dropped() {
        let ttl = "@prefix schema: <http://schema.org/> .\n<http://ex.org/r> schema:name \"A\" ; schema:latitude 0 ; schema:longitude 0 .\n";
        let (d, report) = parse(ttl, RdfSyntax::Turtle);
        assert!(!d.entities[0].has("geo"));
        assert_eq!(report.zero_geo, 1);
    }

    #[test]
    fn ntriples_round_trip() {
        let ttl = r#"
@prefix schema: <http://schema.org/> .
<http://ex.org/r1> a schema:Restaurant ; schema:name "Hugo's \"Bar\"" , "Hugos" ;
    schema:url <http://hugos.at> ; schema:latitude 47.1 ; schema:longitude 10.6 .
"#;
        let (d, _) = parse(ttl, RdfSyntax::Turtle);
        let bytes = write_ntriples(&d.entities, "http://schema.org/", "geo", Vec::new()).unwrap();
        let (back, _) = parse(std::str::from_utf8(&bytes).unwrap(), RdfSyntax::Ntriples);
        assert_eq!(back.entities[0].values("name"), d.entities[0].values("name"));
        assert_eq!(back.entities[0].values("geo")[0].value, d.entities[0].values("geo")[0].value);
        assert_eq!(back.entities[0].values("url")[0].value, d.entities[0].values("url")[0].value);
        assert_eq!(back.entities[0].class, "Restaurant");
    }
}
