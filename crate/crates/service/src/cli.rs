//! The `kgdd` command line.
//!
//! Exit codes: 0 success, 1 config or usage error, 2 data error, 3 runtime
//! failure.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use kgdd_core::config::RunConfig;
use kgdd_core::evaluate::{
    append_label_csv, feature_report, learn_config, next_candidates_for_labeling, render_table, score,
    threshold_sweep, GaParams, GoldStandard, World,
};
use kgdd_core::fusion::{resolve_overrides, FusedEntity, Override};
use kgdd_core::ingest::Dataset;
use kgdd_core::model::{Entity, EntityId, SameAsAssertion, Verdict};
use kgdd_core::pipeline::{read_assertions, write_assertions};
use kgdd_core::synthetic::{generate_synthetic, ErrorMix, SyntheticSpec};
use serde::Deserialize;

use crate::api::{self, AppState};
use crate::engine;
use crate::store::Store;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "kgdd", version, about = "Duplicate detection and fusion for knowledge graphs")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset file: .csv (with an `id` column), .nt, .ttl or .json.
    #[arg(long)]
    pub data: PathBuf,
    /// Second dataset; switches from deduplication to linkage.
    #[arg(long)]
    pub link: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a dataset through the config's schema mapping and save it as JSON.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        /// Source file: .csv, .nt, .ttl or .json.
        #[arg(long)]
        input: PathBuf,
        /// Output dataset (.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic benchmark dataset with a fully labeled gold standard.
    Generate {
        #[arg(long, default_value_t = 495)]
        entities: usize,
        #[arg(long, default_value_t = 23)]
        duplicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corruption weights, e.g. `typo=2,missing-geo=1`; unlisted kinds get 0.
        #[arg(long)]
        error_mix: Option<String>,
        /// Output dataset (.json, .csv or .nt).
        #[arg(long)]
        out: PathBuf,
        /// Output gold standard (.csv).
        #[arg(long)]
        gold: PathBuf,
    },
    /// Run the matching pipeline and write the accepted assertions as JSON lines.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the run report (.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a results file against a gold standard and print a P/R/F table.
    Evaluate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's world assumption.
        #[arg(long, value_parser = parse_world)]
        world: Option<World>,
        /// Also write the report (.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline once and score it at several accept thresholds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        gold: PathBuf,
        /// Comma-separated cuts; defaults to the config's.
        #[arg(long)]
        thresholds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn a matching config with a genetic search and write it as a run config.
    Learn {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        gold: PathBuf,
        /// Output run config (.toml).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Put the config's own match section into the first generation.
        #[arg(long)]
        seed_with_config: bool,
    },
    /// Fuse the duplicate classes of a results file.
    Fuse {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        results: PathBuf,
        /// Pairs labeled different are split, pairs labeled same joined.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Fused entities: .csv, .nt, or anything else for JSON lines.
        #[arg(long)]
        out: PathBuf,
        /// Decision log (JSON lines).
        #[arg(long)]
        log: PathBuf,
        /// Overrides as JSON lines `{entityId, property, value, operator}`.
        #[arg(long)]
        overrides: Option<PathBuf>,
    },
    /// Label candidate pairs interactively: y = same, n = different, r = related, s = skip, q = quit.
    Label {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        results: PathBuf,
        /// Gold CSV to extend; created if absent.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value = "cli")]
        labeler: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Per-property fill rate, distinctness and standalone f1.
    Features {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        /// Directory of the persistent stores.
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Bearer token clients must present.
        #[arg(long, env = "KGDD_TOKEN", hide_env_values = true)]
        token: String,
        /// Reject every mutation.
        #[arg(long)]
        read_only: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_world(s: &str) -> Result<World, String> {
    match s {
        "open" => Ok(World::Open),
        "closed" => Ok(World::Closed),
        _ => Err(format!("expected open or closed, got {s:?}")),
    }
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    RunConfig::load(path).map_err(|e| CliError::Config(e.to_string()))
}

fn optional_config(path: Option<&PathBuf>) -> CliResult<Option<RunConfig>> {
    path.map(|p| load_config(p)).transpose()
}

fn load_datasets(args: &DataArgs, config: Option<&RunConfig>) -> CliResult<Vec<Dataset>> {
    let mapping = config.map(|c| c.mapping.clone()).unwrap_or_default();
    std::iter::once(&args.data)
        .chain(args.link.as_ref())
        .map(|p| {
            let (d, report) = engine::load_dataset(p, &mapping).map_err(|e| data(format!("{}: {e}", p.display())))?;
            for r in &report.rejected {
                log::warn!("{}: {r}", p.display());
            }
            Ok(d)
        })
        .collect()
}

fn load_gold(path: &Path) -> CliResult<GoldStandard> {
    let file = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    GoldStandard::read_csv(BufReader::new(file)).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_results(path: &Path) -> CliResult<Vec<SameAsAssertion>> {
    let file = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    read_assertions(BufReader::new(file)).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(runtime)?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(runtime)
}

fn pipeline(datasets: &[Dataset], config: &RunConfig) -> CliResult<(Vec<SameAsAssertion>, kgdd_core::pipeline::RunReport)> {
    let refs: Vec<&Dataset> = datasets.iter().collect();
    engine::execute(&refs, &config.matching, &|_, _| {}).map_err(|e| match e {
        kgdd_core::pipeline::PipelineError::Config(m) => CliError::Config(m),
        other => runtime(other),
    })
}

fn merged(datasets: Vec<Dataset>) -> CliResult<Dataset> {
    let mut it = datasets.into_iter();
    let first = it.next().expect("at least one dataset");
    let rest: Vec<Entity> = it.flat_map(|d| d.entities).collect();
    if rest.is_empty() {
        return Ok(first);
    }
    let id = first.id.clone();
    let mut entities = first.entities;
    entities.extend(rest);
    Dataset::new(id, "linked", entities).map_err(data)
}

/// Runs one parsed command, writing human-readable output to `out` and
/// reading interactive answers from `input`.
pub fn execute<R: BufRead, W: Write>(command: Command, input: R, out: &mut W) -> CliResult {
    match command {
        Command::Ingest { config, input: source, out: path } => {
            let config = load_config(&config)?;
            let (dataset, report) =
                engine::load_dataset(&source, &config.mapping).map_err(|e| data(format!("{}: {e}", source.display())))?;
            engine::save_dataset_json(&dataset, &path).map_err(runtime)?;
            writeln!(
                out,
                "{} records, {} entities, {} rejected, {} dropped predicates",
                report.records,
                report.entities,
                report.rejected.len(),
                report.dropped_predicates.values().sum::<usize>()
            )
            .map_err(runtime)?;
            for r in &report.rejected {
                writeln!(out, "  {r}").map_err(runtime)?;
            }
        }
        Command::Generate {
            entities,
            duplicates,
            seed,
            error_mix,
            out: path,
            gold,
        } => {
            let mut spec = SyntheticSpec::new(entities, duplicates, seed);
            if let Some(text) = error_mix {
                spec.error_mix = parse_error_mix(&text)?;
            }
            let (dataset, labels) = generate_synthetic(&spec).map_err(|e| CliError::Config(e.to_string()))?;
            match engine::DataFormat::from_path(&path) {
                Some(engine::DataFormat::Csv) => {
                    kgdd_core::ingest::write_csv(&dataset, "geo", create(&path)?).map_err(runtime)?;
                }
                Some(engine::DataFormat::Ntriples) => {
                    kgdd_core::ingest::write_ntriples(&dataset.entities, engine::VOCABULARY, "geo", create(&path)?)
                        .map_err(runtime)?;
                }
                _ => engine::save_dataset_json(&dataset, &path).map_err(runtime)?,
            }
            let mut g = create(&gold)?;
            labels.write_csv(&mut g).map_err(runtime)?;
            g.flush().map_err(runtime)?;
            writeln!(
                out,
                "{} entities, {} same and {} different labels",
                dataset.len(),
                labels.count(Verdict::Same),
                labels.count(Verdict::Different)
            )
            .map_err(runtime)?;
        }
        Command::Run {
            config,
            data: args,
            out: path,
            report,
        } => {
            let config = load_config(&config)?;
            let datasets = load_datasets(&args, Some(&config))?;
            let (assertions, run_report) = pipeline(&datasets, &config)?;
            let mut w = create(&path)?;
            write_assertions(&assertions, &mut w).map_err(runtime)?;
            if let Some(p) = report {
                write_json(&p, &run_report)?;
            }
            writeln!(
                out,
                "{} candidates, {} accepted in {:.3}s",
                run_report.candidate_count, run_report.accepted_count, run_report.wall_time_seconds
            )
            .map_err(runtime)?;
        }
        Command::Evaluate {
            results,
            gold,
            config,
            world,
            out: path,
        } => {
            let config = optional_config(config.as_ref())?;
            let world = world.or(config.map(|c| c.evaluate.world)).unwrap_or_default();
            let assertions = load_results(&results)?;
            let gold = load_gold(&gold)?;
            let report = score(assertions.iter().map(|a| &a.pair), &gold, world).map_err(data)?;
            write!(out, "{}", render_table(&[(results.display().to_string(), report.clone())])).map_err(runtime)?;
            if let Some(p) = path {
                write_json(&p, &report)?;
            }
        }
        Command::Sweep {
            config,
            data: args,
            gold,
            thresholds,
            out: path,
        } => {
            let mut config = load_config(&config)?;
            let cuts = match thresholds {
                Some(t) => api::parse_thresholds(&t).map_err(CliError::Config)?,
                None => config.evaluate.thresholds.clone(),
            };
            if cuts.is_empty() {
                return Err(CliError::Config("no thresholds".into()));
            }
            config.matching.accept_threshold = cuts.iter().copied().fold(f64::INFINITY, f64::min);
            let datasets = load_datasets(&args, Some(&config))?;
            let gold = load_gold(&gold)?;
            let (assertions, _) = pipeline(&datasets, &config)?;
            let rows = threshold_sweep(&assertions, &gold, &cuts, config.evaluate.world).map_err(data)?;
            let table: Vec<(String, _)> = rows.iter().map(|(t, r)| (format!("{t}"), r.clone())).collect();
            write!(out, "{}", render_table(&table)).map_err(runtime)?;
            if let Some(p) = path {
                let json: Vec<_> = rows
                    .iter()
                    .map(|(t, r)| serde_json::json!({ "threshold": t, "report": r }))
                    .collect();
                write_json(&p, &json)?;
            }
        }
        Command::Learn {
            config,
            data: args,
            gold,
            out: path,
            population,
            generations,
            seed,
            seed_with_config,
        } => {
            let mut config = load_config(&config)?;
            let mut params = config.learn.clone().unwrap_or_else(|| GaParams::new(30, 20, 0));
            params.population_size = population.unwrap_or(params.population_size);
            params.generations = generations.unwrap_or(params.generations);
            params.random_seed = seed.unwrap_or(params.random_seed);
            if seed_with_config {
                params.seed_configs.push(config.matching.clone());
            }
            params.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let dataset = merged(load_datasets(&args, Some(&config))?)?;
            let gold = load_gold(&gold)?;
            let outcome = learn_config(&dataset, &gold, &params).map_err(|e| match e {
                kgdd_core::evaluate::EvalError::Invalid(m) => CliError::Config(m),
                other => data(other),
            })?;
            config.matching = outcome.best.clone();
            config.learn = Some(params);
            std::fs::write(&path, config.to_toml()).map_err(runtime)?;
            let trace: Vec<String> = outcome.fitness_trace.iter().map(|f| format!("{f:.4}")).collect();
            writeln!(out, "fitness trace: {}", trace.join(" ")).map_err(runtime)?;
            write!(out, "{}", render_table(&[("learned".into(), outcome.report)])).map_err(runtime)?;
        }
        Command::Fuse {
            config,
            data: args,
            results,
            gold,
            out: path,
            log,
            overrides,
        } => {
            let config = load_config(&config)?;
            let datasets = load_datasets(&args, Some(&config))?;
            let assertions = load_results(&results)?;
            let gold = gold.map(|g| load_gold(&g)).transpose()?.unwrap_or_default();
            let refs: Vec<&Dataset> = datasets.iter().collect();
            let mut fused = engine::fuse(&refs, &assertions, &gold, &config.fusion).map_err(|e| match e {
                kgdd_core::fusion::FusionError::Policy(m) => CliError::Config(m),
                other => data(other),
            })?;
            if let Some(p) = overrides {
                apply_overrides(&mut fused, &p)?;
            }
            engine::write_fused(&path, &fused, &config.mapping.geo_property).map_err(runtime)?;
            engine::write_decisions(&log, &fused).map_err(runtime)?;
            let unresolved = fused.iter().filter(|f| !f.unresolved.is_empty()).count();
            writeln!(out, "{} fused entities, {} with unresolved conflicts", fused.len(), unresolved).map_err(runtime)?;
        }
        Command::Label {
            data: args,
            results,
            gold,
            labeler,
            config,
        } => {
            let config = optional_config(config.as_ref())?;
            let datasets = load_datasets(&args, config.as_ref())?;
            let assertions = load_results(&results)?;
            let existing = if gold.exists() { load_gold(&gold)? } else { GoldStandard::new() };
            label_session(&datasets, &assertions, existing, &gold, &labeler, input, out)?;
        }
        Command::Features { data: args, gold, config } => {
            let config = optional_config(config.as_ref())?;
            let dataset = merged(load_datasets(&args, config.as_ref())?)?;
            let gold = load_gold(&gold)?;
            let mut rows = feature_report(&dataset, &gold).map_err(data)?;
            rows.sort_by(|a, b| b.f1.total_cmp(&a.f1));
            writeln!(
                out,
                "{:<20}  {:>5}  {:>8}  {:>6}  {:>6}  {:>6}  comparator",
                "property", "fill", "distinct", "prec", "recall", "f1"
            )
            .map_err(runtime)?;
            for r in rows {
                writeln!(
                    out,
                    "{:<20}  {:>5.2}  {:>8.3}  {:>6.4}  {:>6.4}  {:>6.4}  {}{}",
                    r.property,
                    r.fill_rate,
                    r.distinctness,
                    r.precision,
                    r.recall,
                    r.f1,
                    r.comparator,
                    if r.non_discriminative { "  (non-discriminative)" } else { "" }
                )
                .map_err(runtime)?;
            }
        }
        Command::Serve {
            data_dir,
            bind,
            port,
            token,
            read_only,
            config,
        } => {
            optional_config(config.as_ref())?;
            if token.is_empty() {
                return Err(CliError::Config("the bearer token must not be empty".into()));
            }
            let store = Arc::new(Store::open(&data_dir).map_err(data)?);
            let state = AppState::new(store, token, read_only);
            let runtime_ = tokio::runtime::Runtime::new().map_err(runtime)?;
            runtime_.block_on(async move {
                let listener = tokio::net::TcpListener::bind((bind.as_str(), port))
                    .await
                    .map_err(|e| runtime(format!("bind {bind}:{port}: {e}")))?;
                log::info!("listening on {}", listener.local_addr().map_err(runtime)?);
                axum::serve(listener, api::router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(runtime)
            })?;
        }
    }
    out.flush().map_err(runtime)
}

fn parse_error_mix(text: &str) -> CliResult<ErrorMix> {
    let mut map = serde_json::Map::new();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected kind=weight, got {part:?}")))?;
        let w: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad weight {v:?}")))?;
        map.insert(k.trim().to_string(), w.into());
    }
    serde_json::from_value(map.into()).map_err(|e| CliError::Config(format!("error mix: {e}")))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct OverrideLine {
    entity_id: EntityId,
    #[serde(flatten)]
    choice: Override,
}

fn apply_overrides(fused: &mut [FusedEntity], path: &Path) -> CliResult {
    let file = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(data)?;
        if line.trim().is_empty() {
            continue;
        }
        let o: OverrideLine =
            serde_json::from_str(&line).map_err(|e| data(format!("{} line {}: {e}", path.display(), n + 1)))?;
        let target = fused
            .iter_mut()
            .find(|f| f.id == o.entity_id)
            .ok_or_else(|| data(format!("override for unknown fused entity {}", o.entity_id)))?;
        *target = resolve_overrides(target, std::slice::from_ref(&o.choice)).map_err(data)?;
    }
    Ok(())
}

fn describe(entity: Option<&Entity>) -> Vec<(String, String)> {
    entity
        .map(|e| {
            e.properties
                .iter()
                .map(|(k, vs)| (k.clone(), vs.iter().map(|v| v.raw.as_str()).collect::<Vec<_>>().join(" | ")))
                .collect()
        })
        .unwrap_or_default()
}

/// Presents unlabeled pairs by descending similarity and appends every
/// answer to the gold CSV at once.
pub fn label_session<R: BufRead, W: Write>(
    datasets: &[Dataset],
    assertions: &[SameAsAssertion],
    mut gold: GoldStandard,
    gold_path: &Path,
    labeler: &str,
    mut input: R,
    out: &mut W,
) -> CliResult {
    let index: std::collections::HashMap<&EntityId, &Entity> =
        datasets.iter().flat_map(|d| d.entities.iter().map(|e| (&e.id, e))).collect();
    let queue: Vec<SameAsAssertion> = next_candidates_for_labeling(assertions, &gold, usize::MAX)
        .into_iter()
        .cloned()
        .collect();
    if queue.is_empty() {
        writeln!(out, "nothing to label").map_err(runtime)?;
        return Ok(());
    }
    let needs_header = std::fs::metadata(gold_path).map_or(true, |m| m.len() == 0);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(gold_path)
        .map_err(|e| runtime(format!("{}: {e}", gold_path.display())))?;
    let mut header = needs_header;
    let mut labeled = 0;
    'pairs: for (i, a) in queue.iter().enumerate() {
        writeln!(out, "\n[{}/{}] {}  sim {:.4}", i + 1, queue.len(), a.pair, a.sim).map_err(runtime)?;
        let left = describe(index.get(a.pair.a()).copied());
        let right = describe(index.get(a.pair.b()).copied());
        let mut props: Vec<&String> = left.iter().chain(&right).map(|(k, _)| k).collect();
        props.sort();
        props.dedup();
        for p in props {
            let find = |side: &[(String, String)]| side.iter().find(|(k, _)| k == p).map(|(_, v)| v.clone()).unwrap_or_default();
            writeln!(out, "  {p:<16} {:<40} {}", find(&left), find(&right)).map_err(runtime)?;
        }
        loop {
            write!(out, "same? [y]es [n]o [r]elated [s]kip [q]uit: ").map_err(runtime)?;
            out.flush().map_err(runtime)?;
            let mut answer = String::new();
            if input.read_line(&mut answer).map_err(runtime)? == 0 {
                break 'pairs;
            }
            let verdict = match answer.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" => Verdict::Same,
                "n" | "no" => Verdict::Different,
                "r" | "related" => Verdict::Related,
                "s" | "skip" => continue 'pairs,
                "q" | "quit" => break 'pairs,
                _ => continue,
            };
            let label = gold
                .record(a.pair.a().clone(), a.pair.b().clone(), verdict, labeler, crate::store::now())
                .map_err(data)?
                .clone();
            append_label_csv(&mut file, &label, header).map_err(runtime)?;
            file.sync_data().map_err(runtime)?;
            header = false;
            labeled += 1;
            break;
        }
    }
    writeln!(out, "\n{labeled} labels recorded in {}", gold_path.display()).map_err(runtime)?;
    Ok(())
}

/// Entry point of the binary: parses arguments, runs, returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    match execute(cli.command, stdin.lock(), &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kgdd: {e}");
            e.exit_code()
        }
    }
}
