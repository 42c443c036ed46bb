//! Operations shared by the command line and the HTTP API.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use kgdd_core::fusion::{fuse_classes, write_decision_log, FusedEntity, FusionError, FusionPolicy};
use kgdd_core::evaluate::GoldStandard;
use kgdd_core::ingest::{parse_csv, parse_rdf, write_csv, write_ntriples, Dataset, IngestError, IngestReport, RdfSyntax, SchemaMapping};
use kgdd_core::model::{equivalence_classes_from_pairs, Entity, EquivalenceSet, Pair, Provenance, SameAsAssertion, Verdict};
use kgdd_core::pipeline::{run_dedup_observed, run_linkage_observed, MatchConfig, PipelineError, Progress, RunReport};
use serde::{Deserialize, Serialize};

/// Vocabulary for N-Triples output.
pub const VOCABULARY: &str = "http://schema.org/";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    Csv,
    Ntriples,
    Turtle,
    /// The dataset's own JSON form, keeping provenance and quality.
    Json,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(DataFormat::Csv),
            "nt" => Some(DataFormat::Ntriples),
            "ttl" => Some(DataFormat::Turtle),
            "json" => Some(DataFormat::Json),
            _ => None,
        }
    }
}

/// Reads a dataset in any supported format. CSV input needs an `id` column.
pub fn parse_dataset<R: Read>(
    mut input: R,
    format: DataFormat,
    mapping: &SchemaMapping,
    id: &str,
    source: &Provenance,
) -> Result<(Dataset, IngestReport), IngestError> {
    let (mut dataset, report) = match format {
        DataFormat::Csv => parse_csv(input, mapping, "id", source)?,
        DataFormat::Ntriples => parse_rdf(input, RdfSyntax::Ntriples, mapping, source)?,
        DataFormat::Turtle => parse_rdf(input, RdfSyntax::Turtle, mapping, source)?,
        DataFormat::Json => {
            let mut text = String::new();
            input.read_to_string(&mut text)?;
            let d: Dataset = serde_json::from_str(&text).map_err(|e| IngestError::Schema(e.to_string()))?;
            let d = Dataset::new(d.id, d.source_label, d.entities)?;
            let report = IngestReport {
                records: d.len(),
                entities: d.len(),
                ..IngestReport::default()
            };
            (d, report)
        }
    };
    if !id.is_empty() {
        dataset.id = id.to_string();
    }
    Ok((dataset, report))
}

pub fn load_dataset(path: &Path, mapping: &SchemaMapping) -> Result<(Dataset, IngestReport), IngestError> {
    let format = DataFormat::from_path(path).ok_or_else(|| {
        IngestError::Schema(format!("{}: expected a .csv, .nt, .ttl or .json file", path.display()))
    })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    let source = Provenance::new(stem, modified_at(path));
    let (mut dataset, report) = parse_dataset(File::open(path)?, format, mapping, "", &source)?;
    if format != DataFormat::Json {
        dataset.id = stem.to_string();
        dataset.source_label = stem.to_string();
    }
    Ok((dataset, report))
}

fn modified_at(path: &Path) -> i64 {
    std::fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_secs() as i64)
}

pub fn save_dataset_json(dataset: &Dataset, path: &Path) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, dataset)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Deduplication for one dataset, linkage for two.
pub fn execute(
    datasets: &[&Dataset],
    config: &MatchConfig,
    progress: Progress<'_>,
) -> Result<(Vec<SameAsAssertion>, RunReport), PipelineError> {
    match datasets {
        [one] => run_dedup_observed(one, config, progress),
        [left, right] => run_linkage_observed(left, right, config, progress),
        _ => Err(PipelineError::Config("a run takes one or two datasets".into())),
    }
}

/// Identity classes of more than one entity: accepted pairs not labeled
/// different, plus every pair labeled same.
pub fn duplicate_classes<'e>(
    entities: impl IntoIterator<Item = &'e Entity>,
    accepted: &[SameAsAssertion],
    gold: &GoldStandard,
) -> Result<Vec<EquivalenceSet>, kgdd_core::model::ModelError> {
    let ids: Vec<&kgdd_core::model::EntityId> = entities.into_iter().map(|e| &e.id).collect();
    let known: std::collections::HashSet<_> = ids.iter().copied().collect();
    let pairs: Vec<&Pair> = accepted
        .iter()
        .map(|a| &a.pair)
        .filter(|p| gold.verdict(p) != Some(Verdict::Different))
        .chain(
            gold.pairs_with(Verdict::Same)
                .filter(|p| known.contains(p.a()) && known.contains(p.b())),
        )
        .collect();
    Ok(equivalence_classes_from_pairs(ids, pairs)?
        .into_iter()
        .filter(|c| c.len() > 1)
        .collect())
}

pub fn fuse(
    datasets: &[&Dataset],
    accepted: &[SameAsAssertion],
    gold: &GoldStandard,
    policy: &FusionPolicy,
) -> Result<Vec<FusedEntity>, FusionError> {
    let entities: Vec<Entity> = datasets.iter().flat_map(|d| d.entities.iter().cloned()).collect();
    let classes = duplicate_classes(&entities, accepted, gold)
        .map_err(|e| FusionError::Policy(e.to_string()))?;
    fuse_classes(&classes, &entities, policy)
}

/// Writes fused entities as CSV, N-Triples or JSON lines, by extension.
pub fn write_fused(path: &Path, fused: &[FusedEntity], geo_property: &str) -> Result<(), String> {
    let entities: Vec<Entity> = fused.iter().map(FusedEntity::to_entity).collect();
    let file = File::create(path).map_err(|e| e.to_string())?;
    let mut out = BufWriter::new(file);
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let d = Dataset::new("fused", "fusion", entities).map_err(|e| e.to_string())?;
            write_csv(&d, geo_property, &mut out).map_err(|e| e.to_string())?;
        }
        Some("nt") => {
            write_ntriples(&entities, VOCABULARY, geo_property, &mut out).map_err(|e| e.to_string())?;
        }
        _ => {
            for f in fused {
                serde_json::to_writer(&mut out, f).map_err(|e| e.to_string())?;
                out.write_all(b"\n").map_err(|e| e.to_string())?;
            }
        }
    }
    out.flush().map_err(|e| e.to_string())
}

pub fn write_decisions(path: &Path, fused: &[FusedEntity]) -> Result<(), FusionError> {
    write_decision_log(fused, BufWriter::new(File::create(path)?))
}
