use std::collections::HashSet;
use std::io::{Read, Write};

use indexmap::IndexMap;

use super::{
    coerce, value_with, Coerced, Dataset, GeoHalves, IngestError, IngestReport, RowError,
    RowProblem, SchemaMapping, TypeHint,
};
use crate::model::{Entity, EntityId, PropertyValue, Provenance, Value, ValueKind};

/// Reads a comma-separated, double-quoted UTF-8 table with a header row.
///
/// Empty cells produce no value. Columns without an alias keep their header
/// as property name. Rows with problems are skipped and listed in the report;
/// only a missing id column is fatal.
pub fn parse_csv<R: Read>(
    input: R,
    mapping: &SchemaMapping,
    id_column: &str,
    source: &Provenance,
) -> Result<(Dataset, IngestReport), IngestError> {
    mapping.validate()?;
    let mut reader = ::csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Schema(format!("unreadable header: {e}")))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let id_at = column(id_column)
        .ok_or_else(|| IngestError::Schema(format!("id column {id_column:?} not in header")))?;
    let class_at = match &mapping.class_column {
        Some(c) => Some(column(c).ok_or_else(|| {
            IngestError::Schema(format!("class column {c:?} not in header"))
        })?),
        None => None,
    };
    let quality_at = match &mapping.quality_column {
        Some(c) => Some(column(c).ok_or_else(|| {
            IngestError::Schema(format!("quality column {c:?} not in header"))
        })?),
        None => None,
    };
    let targets: Vec<Option<(String, Option<TypeHint>)>> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            if i == id_at || Some(i) == class_at || Some(i) == quality_at {
                return None;
            }
            let canonical = mapping.canonical(h).to_string();
            let hint = mapping.hint(&canonical);
            Some((canonical, hint))
        })
        .collect();

    let mut report = IngestReport::default();
    let mut entities = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        report.records += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                report.rejected.push(RowError {
                    line,
                    problem: RowProblem::Malformed {
                        reason: e.to_string(),
                    },
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let reject = |problem| RowError { line, problem };
        if record.len() != headers.len() {
            report.rejected.push(reject(RowProblem::ColumnCount {
                expected: headers.len(),
                found: record.len(),
            }));
            continue;
        }
        match read_row(&record, &headers, &targets, id_at, class_at, quality_at, mapping, source) {
            Ok((entity, zero)) => {
                report.zero_geo += zero;
                if !seen.insert(entity.id.clone()) {
                    report.rejected.push(reject(RowProblem::DuplicateId {
                        id: entity.id.to_string(),
                    }));
                } else {
                    entities.push(entity);
                }
            }
            Err(problem) => report.rejected.push(reject(problem)),
        }
    }
    report.entities = entities.len();
    report.log("csv");
    let dataset = Dataset::new(source.source.clone(), source.source.clone(), entities)?;
    Ok((dataset, report))
}

#[allow(clippy::too_many_arguments)]
fn read_row(
    record: &::csv::StringRecord,
    headers: &::csv::StringRecord,
    targets: &[Option<(String, Option<TypeHint>)>],
    id_at: usize,
    class_at: Option<usize>,
    quality_at: Option<usize>,
    mapping: &SchemaMapping,
    source: &Provenance,
) -> Result<(Entity, usize), RowProblem> {
    let id = EntityId::new(record[id_at].trim()).map_err(|_| RowProblem::MissingId)?;
    let class = class_at
        .map(|c| record[c].trim())
        .filter(|c| !c.is_empty())
        .unwrap_or(&mapping.class);
    let quality = match quality_at.map(|q| record[q].trim()).filter(|q| !q.is_empty()) {
        None => None,
        Some(q) => Some(
            q.parse::<f64>()
                .ok()
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| RowProblem::Value {
                    column: headers[quality_at.unwrap()].to_string(),
                    reason: format!("{q:?} is not a quality in [0, 1]"),
                })?,
        ),
    };
    let mut entity = Entity::new(id, class);
    let mut geo = GeoHalves::default();
    let finish = |v: PropertyValue| match quality {
        Some(q) => v.with_quality(q).expect("checked above"),
        None => v,
    };
    for (i, target) in targets.iter().enumerate() {
        let Some((canonical, hint)) = target else {
            continue;
        };
        let cell = record[i].trim();
        if cell.is_empty() {
            continue;
        }
        let bad = |reason| RowProblem::Value {
            column: headers[i].to_string(),
            reason,
        };
        match coerce(*hint, cell).map_err(bad)? {
            Coerced::Value(v) => {
                entity.push(canonical.clone(), finish(value_with(v, cell.into(), source)))
            }
            Coerced::Latitude(v) => geo.lat.push((v, cell.into())),
            Coerced::Longitude(v) => geo.lon.push((v, cell.into())),
        }
    }
    let (points, zero, problems) = geo.finish(mapping.zero_geo_missing);
    if let Some(p) = problems.into_iter().next() {
        return Err(RowProblem::Value {
            column: mapping.geo_property.clone(),
            reason: p,
        });
    }
    for (point, raw) in points {
        entity.push(
            mapping.geo_property.clone(),
            finish(value_with(Value::Geopoint(point), raw, source)),
        );
    }
    if entity.properties.is_empty() {
        return Err(RowProblem::NoProperties);
    }
    Ok((entity, zero))
}

/// Writes a dataset as CSV and returns the mapping that reads it back.
///
/// A property with up to `m` values per entity takes `m` columns
/// (`name`, `name#2`, ...); geo values are split into `<geo>@lat` and
/// `<geo>@lon` columns.
pub fn write_csv<W: Write>(
    dataset: &Dataset,
    geo_property: &str,
    out: W,
) -> Result<SchemaMapping, IngestError> {
    let mut kinds: IndexMap<&str, (ValueKind, usize)> = IndexMap::new();
    let mut quality = false;
    for e in &dataset.entities {
        for (k, vs) in &e.properties {
            for v in vs {
                quality |= v.quality.is_some();
                let slot = kinds.entry(k.as_str()).or_insert((v.kind(), 0));
                if slot.0 != v.kind() {
                    return Err(IngestError::Schema(format!(
                        "property {k:?} mixes {} and {} values",
                        slot.0,
                        v.kind()
                    )));
                }
            }
            let slot = kinds.get_mut(k.as_str()).expect("inserted");
            slot.1 = slot.1.max(vs.len());
        }
    }
    let classes: HashSet<&str> = dataset.entities.iter().map(|e| e.class.as_str()).collect();

    let mut mapping = SchemaMapping {
        geo_property: geo_property.to_string(),
        zero_geo_missing: false,
        class: dataset
            .entities
            .first()
            .map_or("Thing".into(), |e| e.class.clone()),
        ..SchemaMapping::default()
    };
    let mut header = vec!["id".to_string()];
    let reserved = |base: &str| {
        let mut name = base.to_string();
        while kinds.contains_key(name.as_str()) {
            name.insert(0, '_');
        }
        name
    };
    if classes.len() > 1 {
        let c = reserved("__class");
        mapping.class_column = Some(c.clone());
        header.push(c);
    }
    if quality {
        let q = reserved("__quality");
        mapping.quality_column = Some(q.clone());
        header.push(q);
    }
    let column_name = |base: &str, i: usize| {
        if i == 0 {
            base.to_string()
        } else {
            format!("{base}#{}", i + 1)
        }
    };
    for (prop, (kind, count)) in &kinds {
        if prop == &geo_property && *kind == ValueKind::Geopoint {
            let (lat, lon) = (format!("{prop}@lat"), format!("{prop}@lon"));
            mapping.type_hints.insert(lat.clone(), TypeHint::Latitude);
            mapping.type_hints.insert(lon.clone(), TypeHint::Longitude);
            for i in 0..*count {
                for base in [&lat, &lon] {
                    let name = column_name(base, i);
                    if i > 0 {
                        mapping.aliases.insert(name.clone(), base.clone());
                    }
                    header.push(name);
                }
            }
            continue;
        }
        if *kind == ValueKind::Geopoint {
            return Err(IngestError::Schema(format!(
                "geopoint property {prop:?} is not the geo property {geo_property:?}"
            )));
        }
        mapping.type_hints.insert(
            prop.to_string(),
            match kind {
                ValueKind::Text => TypeHint::Text,
                ValueKind::Number => TypeHint::Number,
                ValueKind::Url => TypeHint::Url,
                ValueKind::Timestamp => TypeHint::Timestamp,
                ValueKind::Geopoint => unreachable!(),
            },
        );
        for i in 0..*count {
            let name = column_name(prop, i);
            if i > 0 {
                mapping.aliases.insert(name.clone(), prop.to_string());
            }
            header.push(name);
        }
    }

    let mut writer = ::csv::Writer::from_writer(out);
    writer.write_record(&header).map_err(csv_io)?;
    for e in &dataset.entities {
        let mut row = vec![e.id.to_string()];
        if mapping.class_column.is_some() {
            row.push(e.class.clone());
        }
        if quality {
            let q = e.properties.values().flatten().find_map(|v| v.quality);
            row.push(q.map(|q| q.to_string()).unwrap_or_default());
        }
        for (prop, (kind, count)) in &kinds {
            let vs = e.values(prop);
            for i in 0..*count {
                match vs.get(i) {
                    None if *kind == ValueKind::Geopoint => row.extend([String::new(), String::new()]),
                    None => row.push(String::new()),
                    Some(v) => match &v.value {
                        Value::Geopoint(g) => {
                            let (lat, lon) = geo_raw(v, g.lat(), g.lon());
                            row.extend([lat, lon]);
                        }
                        _ => row.push(cell_text(v)),
                    },
                }
            }
        }
        writer.write_record(&row).map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(mapping)
}

/// Raw form if it reads back to the same value, else the lexical form.
fn cell_text(v: &PropertyValue) -> String {
    let hint = match v.kind() {
        ValueKind::Number => Some(TypeHint::Number),
        ValueKind::Timestamp => Some(TypeHint::Timestamp),
        ValueKind::Url => Some(TypeHint::Url),
        _ => Some(TypeHint::Text),
    };
    let raw = v.raw.trim();
    match coerce(hint, raw) {
        Ok(Coerced::Value(back)) if back == v.value && !raw.is_empty() => raw.to_string(),
        _ => v.value.lexical().into_owned(),
    }
}

fn geo_raw(v: &PropertyValue, lat: f64, lon: f64) -> (String, String) {
    if let Some((a, b)) = v.raw.split_once(',') {
        if a.trim().parse::<f64>() == Ok(lat) && b.trim().parse::<f64>() == Ok(lon) {
            return (a.trim().to_string(), b.trim().to_string());
        }
    }
    (lat.to_string(), lon.to_string())
}

fn csv_io(e: ::csv::Error) -> IngestError {
    IngestError::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeoPoint;
    use proptest::prelude::*;

    fn src() -> Provenance {
        Provenance::new("restaurants", 1_700_000_000)
    }

    fn restaurant_mapping() -> SchemaMapping {
        SchemaMapping::restaurants()
    }

    const HEADER: &str = "id,name,url,streetAddress,latitude,longitude\n";

    #[test]
    fn five_properties_merge_geo() {
        let csv = format!(
            "{HEADER}r1,Hugo's Bar,http://hugos.at,Str. Herrenanger 11,47.040537,10.609275\n"
        );
        let (d, report) = parse_csv(csv.as_bytes(), &restaurant_mapping(), "id", &src()).unwrap();
        assert_eq!(d.len(), 1);
        let e = &d.entities[0];
        assert_eq!(e.properties.len(), 4);
        assert_eq!(e.class, "Restaurant");
        assert_eq!(
            e.values("geo")[0].value,
            Value::Geopoint(GeoPoint::new(47.040537, 10.609275).unwrap())
        );
        assert_eq!(e.values("geo")[0].raw, "47.040537,10.609275");
        assert!(matches!(e.values("url")[0].value, Value::Url(_)));
        assert_eq!(e.values("name")[0].provenance, src());
        assert!(report.rejected.is_empty());
    }

    #[test]
    fn zero_geo_is_missing() {
        let csv = format!("{HEADER}r1,Hugo's Bar,,,0,0\n");
        let (d, report) = parse_csv(csv.as_bytes(), &restaurant_mapping(), "id", &src()).unwrap();
        assert!(!d.entities[0].has("geo"));
        assert_eq!(report.zero_geo, 1);

        let mut keep = restaurant_mapping();
        keep.zero_geo_missing = false;
        let (d, _) = parse_csv(csv.as_bytes(), &keep, "id", &src()).unwrap();
        assert!(d.entities[0].has("geo"));
    }

    #[test]
    fn empty_body() {
        let (d, report) = parse_csv(HEADER.as_bytes(), &restaurant_mapping(), "id", &src()).unwrap();
        assert!(d.is_empty());
        assert_eq!(report.records, 0);
    }

    #[test]
    fn missing_id_column_is_fatal() {
        let r = parse_csv(HEADER.as_bytes(), &restaurant_mapping(), "uri", &src());
        assert!(matches!(r, Err(IngestError::Schema(_))));
    }

    #[test]
    fn row_errors_carry_lines() {
        let mut m = restaurant_mapping();
        m.type_hints.insert("rating".into(), TypeHint::Number);
        let csv = "id,name,rating\n\
                   a,A,1\n\
                   b,B\n\
                   c,C,lots\n\
                   ,D,2\n\
                   a,E,3\n\
                   f,,\n\
                   g,G,4\n";
        let (d, report) = parse_csv(csv.as_bytes(), &m, "id", &src()).unwrap();
        let ids: Vec<&str> = d.entities.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "g"]);
        assert_eq!(report.records, 7);
        assert_eq!(d.len(), report.records - report.rejected.len());
        let lines: Vec<u64> = report.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, [3, 4, 5, 6, 7]);
        assert_eq!(
            report.rejected[0].problem,
            RowProblem::ColumnCount {
                expected: 3,
                found: 2
            }
        );
        assert!(matches!(
            &report.rejected[1].problem,
            RowProblem::Value { column, .. } if column == "rating"
        ));
        assert_eq!(report.rejected[2].problem, RowProblem::MissingId);
        assert!(matches!(report.rejected[3].problem, RowProblem::DuplicateId { .. }));
        assert_eq!(report.rejected[4].problem, RowProblem::NoProperties);
    }

    #[test]
    fn aliases_concatenate() {
        let mut m = SchemaMapping::default();
        m.aliases.insert("title".into(), "name".into());
        m.aliases.insert("label".into(), "name".into());
        let csv = "id,label,title\nx,b,a\n";
        let (d, _) = parse_csv(csv.as_bytes(), &m, "id", &src()).unwrap();
        let names: Vec<&str> = d.entities[0].values("name").iter().map(|v| v.raw.as_str()).collect();
        assert_eq!(names, ["b", "a"]);
    }

    #[test]
    fn quality_column() {
        let mut m = SchemaMapping::default();
        m.quality_column = Some("q".into());
        let (d, report) =
            parse_csv("id,name,q\na,A,0.3\nb,B,2\n".as_bytes(), &m, "id", &src()).unwrap();
        assert_eq!(d.entities[0].values("name")[0].quality, Some(0.3));
        assert_eq!(report.rejected.len(), 1);
    }

    fn round_trip(d: &Dataset) -> Dataset {
        let mut buf = Vec::new();
        let m = write_csv(d, "geo", &mut buf).unwrap();
        parse_csv(buf.as_slice(), &m, "id", &src()).unwrap().0
    }

    #[test]
    fn write_then_read() {
        let csv = format!(
            "{HEADER}r1,\"Hugo's Bar, Tapas\",http://hugos.at,,47.0,10.6\nr2,Seespitz,,Strasse 1,,\n"
        );
        let mut m = restaurant_mapping();
        m.aliases.insert("label".into(), "name".into());
        let (d, _) = parse_csv(csv.as_bytes(), &m, "id", &src()).unwrap();
        assert_eq!(round_trip(&d), d);
    }

    fn cell() -> impl proptest::strategy::Strategy<Value = String> {
        prop_oneof![
            Just(String::new()),
            "[a-zA-Z' ,\"]{1,12}",
            (-1000i32..1000).prop_map(|n| n.to_string()),
            (-1e4f64..1e4).prop_map(|n| n.to_string()),
        ]
    }

    proptest! {
        #[test]
        fn parsed_csv_round_trips(rows in prop::collection::vec((cell(), cell(), -80.0f64..80.0, -170.0f64..170.0, any::<bool>()), 0..12)) {
            let mut wtr = ::csv::Writer::from_writer(Vec::new());
            wtr.write_record(["id", "name", "alt", "latitude", "longitude"]).unwrap();
            for (i, (a, b, lat, lon, with_geo)) in rows.iter().enumerate() {
                let (lat, lon) = if *with_geo { (lat.to_string(), lon.to_string()) } else { (String::new(), String::new()) };
                wtr.write_record([format!("e{i}"), a.clone(), b.clone(), lat, lon]).unwrap();
            }
            let bytes = wtr.into_inner().unwrap();
            let mut m = restaurant_mapping();
            m.aliases.insert("alt".into(), "name".into());
            let (d, report) = parse_csv(bytes.as_slice(), &m, "id", &src()).unwrap();
            prop_assert_eq!(d.len() + report.rejected.len(), rows.len());
            prop_assert_eq!(round_trip(&d), d);
        }
    }
}
