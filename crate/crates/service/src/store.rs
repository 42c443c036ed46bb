//! On-disk persistence: one append-only JSON-lines file per store, replayed
//! into memory at startup. Every append is synced before it is acknowledged.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use kgdd_core::config::RunConfig;
use kgdd_core::evaluate::{GoldStandard, Label};
use kgdd_core::fusion::{resolve_overrides, FusedEntity, FusionPolicy, Override};
use kgdd_core::ingest::Dataset;
use kgdd_core::model::{EntityId, SameAsAssertion, Verdict};
use kgdd_core::pipeline::{read_assertions, write_assertions, RunReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store file {file} line {line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Pending,
    Running,
    Done,
    Failed,
}

impl RunState {
    fn can_move_to(self, next: RunState) -> bool {
        matches!(
            (self, next),
            (RunState::Pending, RunState::Running)
                | (RunState::Pending, RunState::Failed)
                | (RunState::Running, RunState::Done)
                | (RunState::Running, RunState::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRecord {
    pub run_id: String,
    /// Where the config came from: a file name, or `inline`.
    pub config_ref: String,
    pub config: RunConfig,
    /// One dataset for deduplication, two for linkage.
    pub dataset_refs: Vec<String>,
    pub state: RunState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<RunReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub created_at: i64,
    pub updated_at: i64,
}

impl RunRecord {
    /// Key of the gold standard this run is scored against.
    pub fn gold_scope(&self) -> String {
        self.dataset_refs.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FusionRecord {
    pub fusion_id: String,
    pub run_id: String,
    pub policy: FusionPolicy,
    /// Fused entities before any override.
    pub entities: Vec<FusedEntity>,
    pub created_at: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OverrideRecord {
    pub fusion_id: String,
    pub entity_id: EntityId,
    #[serde(flatten)]
    pub choice: Override,
    pub at: i64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct LabelRecord {
    scope: String,
    #[serde(flatten)]
    label: Label,
}

/// An append-only JSON-lines file with a serialized writer.
struct Log {
    path: PathBuf,
    file: Mutex<File>,
}

impl Log {
    fn open(path: PathBuf) -> Result<Self, StoreError> {
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    /// Reads every record. A torn final line (a crash mid-append) is
    /// skipped and cut off so later appends start on a fresh line; damage
    /// anywhere else is an error.
    fn replay<T: DeserializeOwned>(&self) -> Result<Vec<T>, StoreError> {
        let mut text = String::new();
        File::open(&self.path)?.read_to_string(&mut text)?;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        let mut out = Vec::with_capacity(lines.len());
        let mut offset = 0u64;
        for (i, line) in lines.iter().enumerate() {
            let last = i + 1 == lines.len();
            if !line.trim().is_empty() {
                match serde_json::from_str(line) {
                    Ok(record) => out.push(record),
                    Err(e) if last => {
                        log::warn!("{}: dropping torn last record: {e}", self.path.display());
                        self.lock().set_len(offset)?;
                        break;
                    }
                    Err(e) => {
                        return Err(StoreError::Corrupt {
                            file: self.path.display().to_string(),
                            line: i + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
            if last && !line.ends_with('\n') {
                let mut file = self.lock();
                file.write_all(b"\n")?;
                file.sync_data()?;
            }
            offset += line.len() as u64;
        }
        Ok(out)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, File> {
        self.file.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn append<T: Serialize>(file: &mut File, record: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(record).map_err(std::io::Error::from)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.sync_data()?;
    Ok(())
}

#[derive(Default)]
struct State {
    datasets: BTreeMap<String, Arc<Dataset>>,
    runs: BTreeMap<String, RunRecord>,
    results: HashMap<String, Arc<Vec<SameAsAssertion>>>,
    gold: BTreeMap<String, GoldStandard>,
    fusions: BTreeMap<String, FusionRecord>,
    overrides: BTreeMap<String, Vec<OverrideRecord>>,
}

/// All persistent state of the service under one directory.
pub struct Store {
    dir: PathBuf,
    datasets: Log,
    runs: Log,
    gold: Log,
    fusions: Log,
    overrides: Log,
    state: RwLock<State>,
}

pub fn now() -> i64 {
    chrono::Utc::now().timestamp()
}

impl Store {
    /// Opens or creates a store and rebuilds the in-memory index. Runs that
    /// were pending or running when the previous process stopped are marked
    /// failed.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir.join("results"))?;
        let store = Self {
            dir: dir.to_path_buf(),
            datasets: Log::open(dir.join("datasets.jsonl"))?,
            runs: Log::open(dir.join("runs.jsonl"))?,
            gold: Log::open(dir.join("gold.jsonl"))?,
            fusions: Log::open(dir.join("fusions.jsonl"))?,
            overrides: Log::open(dir.join("overrides.jsonl"))?,
            state: RwLock::new(State::default()),
        };
        let mut state = State::default();
        for d in store.datasets.replay::<Dataset>()? {
            state.datasets.insert(d.id.clone(), Arc::new(d));
        }
        for r in store.runs.replay::<RunRecord>()? {
            state.runs.insert(r.run_id.clone(), r);
        }
        for r in state.runs.values().filter(|r| r.state == RunState::Done) {
            let file = File::open(store.result_path(&r.run_id))?;
            let assertions = read_assertions(BufReader::new(file)).map_err(|e| StoreError::Corrupt {
                file: store.result_path(&r.run_id).display().to_string(),
                line: 0,
                message: e.to_string(),
            })?;
            state.results.insert(r.run_id.clone(), Arc::new(assertions));
        }
        for rec in store.gold.replay::<LabelRecord>()? {
            let l = rec.label;
            state
                .gold
                .entry(rec.scope)
                .or_default()
                .record(l.pair.a().clone(), l.pair.b().clone(), l.verdict, &l.labeler, l.timestamp)
                .map_err(|e| StoreError::Invalid(e.to_string()))?;
        }
        for f in store.fusions.replay::<FusionRecord>()? {
            state.fusions.insert(f.fusion_id.clone(), f);
        }
        for o in store.overrides.replay::<OverrideRecord>()? {
            state.overrides.entry(o.fusion_id.clone()).or_default().push(o);
        }
        *store.write() = state;

        let interrupted: Vec<String> = store
            .read()
            .runs
            .values()
            .filter(|r| matches!(r.state, RunState::Pending | RunState::Running))
            .map(|r| r.run_id.clone())
            .collect();
        for id in interrupted {
            store.set_run_state(&id, RunState::Failed, None, Some("interrupted by restart".into()))?;
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    fn result_path(&self, run_id: &str) -> PathBuf {
        self.dir.join("results").join(format!("{run_id}.jsonl"))
    }

    // Datasets

    pub fn add_dataset(&self, dataset: Dataset) -> Result<Arc<Dataset>, StoreError> {
        if dataset.id.is_empty() || dataset.id.contains(['+', '/']) {
            return Err(StoreError::Invalid(format!("dataset id {:?} must be non-empty without '+' or '/'", dataset.id)));
        }
        let mut file = self.datasets.lock();
        if self.read().datasets.contains_key(&dataset.id) {
            return Err(StoreError::Conflict(format!("dataset {} exists", dataset.id)));
        }
        append(&mut file, &dataset)?;
        let dataset = Arc::new(dataset);
        self.write().datasets.insert(dataset.id.clone(), dataset.clone());
        Ok(dataset)
    }

    pub fn next_dataset_id(&self) -> String {
        let state = self.read();
        (state.datasets.len() + 1..)
            .map(|n| format!("ds-{n}"))
            .find(|id| !state.datasets.contains_key(id))
            .expect("unbounded")
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, StoreError> {
        self.read()
            .datasets
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(format!("dataset {id}")))
    }

    pub fn datasets(&self) -> Vec<Arc<Dataset>> {
        self.read().datasets.values().cloned().collect()
    }

    // Runs

    pub fn create_run(
        &self,
        config: RunConfig,
        config_ref: String,
        dataset_refs: Vec<String>,
    ) -> Result<RunRecord, StoreError> {
        if !(1..=2).contains(&dataset_refs.len()) {
            return Err(StoreError::Invalid("a run takes one or two datasets".into()));
        }
        for d in &dataset_refs {
            self.dataset(d)?;
        }
        let mut file = self.runs.lock();
        let run_id = format!("run-{:06}", self.read().runs.len() + 1);
        let t = now();
        let record = RunRecord {
            run_id: run_id.clone(),
            config_ref,
            config,
            dataset_refs,
            state: RunState::Pending,
            report: None,
            error: None,
            created_at: t,
            updated_at: t,
        };
        append(&mut file, &record)?;
        self.write().runs.insert(run_id, record.clone());
        Ok(record)
    }

    pub fn run(&self, id: &str) -> Result<RunRecord, StoreError> {
        self.read()
            .runs
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(format!("run {id}")))
    }

    pub fn runs(&self) -> Vec<RunRecord> {
        self.read().runs.values().cloned().collect()
    }

    pub fn set_run_state(
        &self,
        id: &str,
        state: RunState,
        report: Option<RunReport>,
        error: Option<String>,
    ) -> Result<RunRecord, StoreError> {
        let mut file = self.runs.lock();
        let mut record = self.run(id)?;
        if !record.state.can_move_to(state) {
            return Err(StoreError::Conflict(format!(
                "run {id} cannot move from {:?} to {state:?}",
                record.state
            )));
        }
        record.state = state;
        record.report = report.or(record.report);
        record.error = error;
        record.updated_at = now();
        append(&mut file, &record)?;
        self.write().runs.insert(id.to_string(), record.clone());
        Ok(record)
    }

    /// Writes the result file, then marks the run done.
    pub fn finish_run(
        &self,
        id: &str,
        assertions: Vec<SameAsAssertion>,
        report: RunReport,
    ) -> Result<RunRecord, StoreError> {
        let path = self.result_path(id);
        let tmp = path.with_extension("tmp");
        {
            let file = File::create(&tmp)?;
            let mut out = BufWriter::new(&file);
            write_assertions(&assertions, &mut out)?;
            drop(out);
            file.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        self.write().results.insert(id.to_string(), Arc::new(assertions));
        self.set_run_state(id, RunState::Done, Some(report), None)
    }

    /// Accepted assertions of a finished run.
    pub fn results(&self, id: &str) -> Result<Arc<Vec<SameAsAssertion>>, StoreError> {
        let run = self.run(id)?;
        if run.state != RunState::Done {
            return Err(StoreError::Conflict(format!("run {id} is {:?}", run.state)));
        }
        self.read()
            .results
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(format!("results of run {id}")))
    }

    // Gold

    pub fn gold(&self, scope: &str) -> GoldStandard {
        self.read().gold.get(scope).cloned().unwrap_or_default()
    }

    /// Records a label. Relabeling a pair needs `supersede`.
    pub fn add_label(
        &self,
        scope: &str,
        a: EntityId,
        b: EntityId,
        verdict: Verdict,
        labeler: &str,
        supersede: bool,
    ) -> Result<(Label, usize), StoreError> {
        let mut file = self.gold.lock();
        let mut gold = self.gold(scope);
        let pair = kgdd_core::model::canonical_pair(a.clone(), b.clone())
            .map_err(|e| StoreError::Invalid(e.to_string()))?;
        if let Some(existing) = gold.label(&pair) {
            if !supersede {
                return Err(StoreError::Conflict(format!(
                    "{pair} is already labeled {}; resend with supersede to replace it",
                    existing.verdict
                )));
            }
        }
        let label = gold
            .record(a, b, verdict, labeler, now())
            .map_err(|e| StoreError::Invalid(e.to_string()))?
            .clone();
        append(
            &mut file,
            &LabelRecord {
                scope: scope.to_string(),
                label: label.clone(),
            },
        )?;
        let version = gold.version();
        self.write().gold.insert(scope.to_string(), gold);
        Ok((label, version))
    }

    /// Bulk import, e.g. a gold CSV shipped with a dataset. Existing pairs
    /// are superseded.
    pub fn import_gold(&self, scope: &str, imported: &GoldStandard) -> Result<(), StoreError> {
        let mut file = self.gold.lock();
        let mut gold = self.gold(scope);
        for l in imported.labels() {
            let label = gold
                .record(l.pair.a().clone(), l.pair.b().clone(), l.verdict, &l.labeler, l.timestamp)
                .map_err(|e| StoreError::Invalid(e.to_string()))?
                .clone();
            append(
                &mut file,
                &LabelRecord {
                    scope: scope.to_string(),
                    label,
                },
            )?;
        }
        self.write().gold.insert(scope.to_string(), gold);
        Ok(())
    }

    // Fusion

    pub fn add_fusion(
        &self,
        run_id: &str,
        policy: FusionPolicy,
        entities: Vec<FusedEntity>,
    ) -> Result<FusionRecord, StoreError> {
        let mut file = self.fusions.lock();
        let record = FusionRecord {
            fusion_id: format!("fusion-{:06}", self.read().fusions.len() + 1),
            run_id: run_id.to_string(),
            policy,
            entities,
            created_at: now(),
        };
        append(&mut file, &record)?;
        self.write().fusions.insert(record.fusion_id.clone(), record.clone());
        Ok(record)
    }

    /// A fusion run with all recorded overrides applied.
    pub fn fusion(&self, id: &str) -> Result<FusionRecord, StoreError> {
        let state = self.read();
        let mut record = state
            .fusions
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(format!("fusion {id}")))?;
        for o in state.overrides.get(id).into_iter().flatten() {
            if let Some(e) = record.entities.iter_mut().find(|e| e.id == o.entity_id) {
                *e = resolve_overrides(e, std::slice::from_ref(&o.choice))
                    .map_err(|err| StoreError::Invalid(err.to_string()))?;
            }
        }
        Ok(record)
    }

    pub fn fusions(&self) -> Vec<String> {
        self.read().fusions.keys().cloned().collect()
    }

    /// Validates an override against the current fused entity and stores it.
    pub fn add_override(
        &self,
        fusion_id: &str,
        entity_id: &EntityId,
        choice: Override,
    ) -> Result<FusedEntity, StoreError> {
        let mut file = self.overrides.lock();
        let current = self.fusion(fusion_id)?;
        let entity = current
            .entities
            .iter()
            .find(|e| &e.id == entity_id)
            .ok_or_else(|| StoreError::NotFound(format!("fused entity {entity_id}")))?;
        let updated = resolve_overrides(entity, std::slice::from_ref(&choice))
            .map_err(|e| StoreError::Invalid(e.to_string()))?;
        let record = OverrideRecord {
            fusion_id: fusion_id.to_string(),
            entity_id: entity_id.clone(),
            choice,
            at: now(),
        };
        append(&mut file, &record)?;
        self.write().overrides.entry(fusion_id.to_string()).or_default().push(record);
        Ok(updated)
    }
}
