//! HTTP+JSON API. Every route under `/api` needs `Authorization: Bearer
//! <token>`; `/health` is open.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kgdd_core::config::RunConfig;
use kgdd_core::evaluate::{
    feature_report, next_candidates_for_labeling, score, threshold_sweep, EvalError, EvalReport, FeatureRow,
    GoldStandard, Label, World,
};
use kgdd_core::fusion::{FusedEntity, FusionPolicy, Override};
use kgdd_core::ingest::{Dataset, IngestReport, SchemaMapping};
use kgdd_core::model::{Entity, EntityId, Provenance, SameAsAssertion, Verdict};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{self, DataFormat};
use crate::store::{now, FusionRecord, RunRecord, RunState, Store, StoreError};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict(_) => StatusCode::CONFLICT,
            StoreError::Invalid(_) => StatusCode::BAD_REQUEST,
            StoreError::Io(_) | StoreError::Corrupt { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        let status = match e {
            EvalError::EmptyGold | EvalError::DegenerateGold => StatusCode::CONFLICT,
            EvalError::Invalid(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body whose every rejection is a 400.
pub struct Payload<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Payload<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad(e.body_text()))?;
        let bytes: &[u8] = if bytes.is_empty() { b"{}" } else { &bytes };
        serde_json::from_slice(bytes)
            .map(Payload)
            .map_err(|e| ApiError::bad(format!("malformed payload: {e}")))
    }
}

#[derive(Default)]
struct ProgressCell {
    done: AtomicU64,
    total: AtomicU64,
}

struct Inner {
    store: Arc<Store>,
    token: String,
    read_only: bool,
    progress: Mutex<HashMap<String, Arc<ProgressCell>>>,
    dataset_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(store: Arc<Store>, token: impl Into<String>, read_only: bool) -> Self {
        Self(Arc::new(Inner {
            store,
            token: token.into(),
            read_only,
            progress: Mutex::new(HashMap::new()),
            dataset_locks: Mutex::new(HashMap::new()),
        }))
    }

    pub fn store(&self) -> &Store {
        &self.0.store
    }

    fn writable(&self) -> ApiResult<()> {
        if self.0.read_only {
            Err(ApiError::new(StatusCode::FORBIDDEN, "server is read-only"))
        } else {
            Ok(())
        }
    }

    fn progress_of(&self, run_id: &str) -> Option<Arc<ProgressCell>> {
        self.0.progress.lock().unwrap_or_else(|e| e.into_inner()).get(run_id).cloned()
    }

    fn dataset_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.0
            .dataset_locks
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(id.to_string())
            .or_default()
            .clone()
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/datasets", get(list_datasets).post(create_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/entities/{entity}", get(get_entity))
        .route("/runs", get(list_runs).post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/candidates", get(list_candidates))
        .route("/runs/{id}/classes", get(list_classes))
        .route("/runs/{id}/labels", get(list_labels).post(submit_label))
        .route("/runs/{id}/eval", get(get_eval))
        .route("/runs/{id}/sweep", get(get_sweep))
        .route("/runs/{id}/features", get(get_feature_report))
        .route("/runs/{id}/fusions", post(create_fusion_run))
        .route("/fusions", get(list_fusions))
        .route("/fusions/{id}", get(get_fusion))
        .route("/fusions/{id}/decisions", get(get_decisions))
        .route("/fusions/{id}/overrides", post(submit_override))
        .route_layer(middleware::from_fn_with_state(state.clone(), authenticate));
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .nest("/api", api)
        .with_state(state)
}

async fn authenticate(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(state.0.token.as_str()) {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong bearer token").into_response()
    }
}

// Datasets

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateDataset {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    source_label: Option<String>,
    format: DataFormat,
    content: String,
    #[serde(default)]
    mapping: Option<SchemaMapping>,
    /// Gold labels as CSV (`idA,idB,verdict,labeler,timestamp`).
    #[serde(default)]
    gold: Option<String>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DatasetSummary {
    id: String,
    source_label: String,
    entity_count: usize,
    properties: Vec<String>,
    gold_labels: usize,
}

fn summary(state: &AppState, d: &Dataset) -> DatasetSummary {
    DatasetSummary {
        id: d.id.clone(),
        source_label: d.source_label.clone(),
        entity_count: d.len(),
        properties: d.properties().into_iter().map(String::from).collect(),
        gold_labels: state.store().gold(&d.id).len(),
    }
}

async fn create_dataset(
    State(state): State<AppState>,
    Payload(body): Payload<CreateDataset>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    state.writable()?;
    let id = body.id.unwrap_or_else(|| state.store().next_dataset_id());
    let source_label = body.source_label.unwrap_or_else(|| id.clone());
    let mapping = body.mapping.unwrap_or_default();
    let gold = body
        .gold
        .as_deref()
        .map(|g| GoldStandard::read_csv(g.as_bytes()))
        .transpose()
        .map_err(|e| ApiError::bad(e.to_string()))?;
    let (mut dataset, report): (Dataset, IngestReport) = engine::parse_dataset(
        body.content.as_bytes(),
        body.format,
        &mapping,
        &id,
        &Provenance::new(source_label.clone(), now()),
    )
    .map_err(|e| ApiError::bad(e.to_string()))?;
    dataset.source_label = source_label;
    let stored = state.store().add_dataset(dataset)?;
    if let Some(gold) = gold {
        state.store().import_gold(&stored.id, &gold)?;
    }
    Ok((
        StatusCode::CREATED,
        Json(json!({ "datasetId": stored.id, "entityCount": stored.len(), "report": report })),
    ))
}

async fn list_datasets(State(state): State<AppState>) -> Json<Vec<DatasetSummary>> {
    Json(state.store().datasets().iter().map(|d| summary(&state, d)).collect())
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DatasetSummary>> {
    let d = state.store().dataset(&id)?;
    Ok(Json(summary(&state, &d)))
}

async fn get_entity(
    State(state): State<AppState>,
    Path((id, entity)): Path<(String, String)>,
) -> ApiResult<Json<Entity>> {
    let d = state.store().dataset(&id)?;
    let eid = EntityId::new(entity).map_err(|e| ApiError::bad(e.to_string()))?;
    d.get(&eid)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("entity {eid} not in {id}")))
}

// Runs

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateRun {
    datasets: Vec<String>,
    #[serde(default)]
    config: Option<RunConfig>,
    /// The run-config file as text.
    #[serde(default)]
    config_toml: Option<String>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RunView {
    #[serde(flatten)]
    record: RunRecord,
    /// Share of estimated candidate pairs scored so far.
    progress: f64,
}

fn view(state: &AppState, record: RunRecord) -> RunView {
    let progress = match record.state {
        RunState::Done => 1.0,
        RunState::Pending | RunState::Failed => 0.0,
        RunState::Running => state.progress_of(&record.run_id).map_or(0.0, |p| {
            let total = p.total.load(Ordering::Relaxed);
            if total == 0 {
                0.0
            } else {
                (p.done.load(Ordering::Relaxed) as f64 / total as f64).min(1.0)
            }
        }),
    };
    RunView { record, progress }
}

async fn create_run(
    State(state): State<AppState>,
    Payload(body): Payload<CreateRun>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    state.writable()?;
    let config = match (body.config, body.config_toml) {
        (Some(c), None) => {
            c.validate().map_err(|e| ApiError::bad(e.to_string()))?;
            c
        }
        (None, Some(text)) => RunConfig::from_toml(&text).map_err(|e| ApiError::bad(e.to_string()))?,
        _ => return Err(ApiError::bad("give exactly one of config and configToml")),
    };
    let record = state.store().create_run(config, "inline".into(), body.datasets)?;
    spawn_run(state.clone(), record.run_id.clone());
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "runId": record.run_id, "state": record.state })),
    ))
}

/// Executes a pending run on the blocking pool. Runs touching the same
/// dataset queue behind each other.
pub fn spawn_run(state: AppState, run_id: String) {
    tokio::task::spawn_blocking(move || {
        if let Err(e) = execute_run(&state, &run_id) {
            log::error!("run {run_id}: {e}");
            let _ = state.store().set_run_state(&run_id, RunState::Failed, None, Some(e));
        }
        state.0.progress.lock().unwrap_or_else(|e| e.into_inner()).remove(&run_id);
    });
}

fn execute_run(state: &AppState, run_id: &str) -> Result<(), String> {
    let store = state.store();
    let record = store.run(run_id).map_err(|e| e.to_string())?;
    let mut refs = record.dataset_refs.clone();
    refs.sort();
    refs.dedup();
    let locks: Vec<Arc<Mutex<()>>> = refs.iter().map(|d| state.dataset_lock(d)).collect();
    let _guards: Vec<_> = locks.iter().map(|l| l.lock().unwrap_or_else(|e| e.into_inner())).collect();

    let datasets: Vec<Arc<Dataset>> = record
        .dataset_refs
        .iter()
        .map(|d| store.dataset(d))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let cell = Arc::new(ProgressCell::default());
    state
        .0
        .progress
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(run_id.to_string(), cell.clone());
    store
        .set_run_state(run_id, RunState::Running, None, None)
        .map_err(|e| e.to_string())?;
    let refs: Vec<&Dataset> = datasets.iter().map(|d| d.as_ref()).collect();
    let observe = |done: u64, total: u64| {
        cell.done.store(done, Ordering::Relaxed);
        cell.total.store(total, Ordering::Relaxed);
    };
    let (assertions, report) =
        engine::execute(&refs, &record.config.matching, &observe).map_err(|e| e.to_string())?;
    store
        .finish_run(run_id, assertions, report)
        .map_err(|e| e.to_string())?;
    Ok(())
}

async fn list_runs(State(state): State<AppState>) -> Json<Vec<RunView>> {
    Json(state.store().runs().into_iter().map(|r| view(&state, r)).collect())
}

async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RunView>> {
    Ok(Json(view(&state, state.store().run(&id)?)))
}

struct RunContext {
    record: RunRecord,
    datasets: Vec<Arc<Dataset>>,
    results: Arc<Vec<SameAsAssertion>>,
    gold: GoldStandard,
}

fn run_context(state: &AppState, id: &str) -> ApiResult<RunContext> {
    let store = state.store();
    let record = store.run(id)?;
    let results = store.results(id)?;
    let datasets = record
        .dataset_refs
        .iter()
        .map(|d| store.dataset(d))
        .collect::<Result<_, _>>()?;
    let gold = store.gold(&record.gold_scope());
    Ok(RunContext {
        record,
        datasets,
        results,
        gold,
    })
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CandidateQuery {
    #[serde(default)]
    min_sim: f64,
    #[serde(default)]
    offset: usize,
    #[serde(default = "default_limit")]
    limit: usize,
    /// Only pairs without a gold label: the labeling queue.
    #[serde(default)]
    unlabeled: bool,
}

fn default_limit() -> usize {
    50
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Candidate {
    #[serde(flatten)]
    assertion: SameAsAssertion,
    left: Entity,
    right: Entity,
}

/// Accepted pairs by descending similarity, ties by pair, paginated. With
/// `unlabeled` the order is that of the labeling queue.
async fn list_candidates(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CandidateQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    if !(0.0..=1.0).contains(&q.min_sim) {
        return Err(ApiError::bad("minSim must lie in [0, 1]"));
    }
    if q.limit == 0 || q.limit > 1000 {
        return Err(ApiError::bad("limit must lie in 1..=1000"));
    }
    let ctx = run_context(&state, &id)?;
    let ordered: Vec<&SameAsAssertion> = if q.unlabeled {
        next_candidates_for_labeling(&ctx.results, &ctx.gold, usize::MAX)
    } else {
        let mut all: Vec<&SameAsAssertion> = ctx.results.iter().collect();
        all.sort_by(|x, y| y.sim.total_cmp(&x.sim).then_with(|| x.pair.cmp(&y.pair)));
        all
    };
    let matching: Vec<&SameAsAssertion> = ordered.into_iter().filter(|a| a.sim >= q.min_sim).collect();
    let index: HashMap<&EntityId, &Entity> = ctx
        .datasets
        .iter()
        .flat_map(|d| d.entities.iter().map(|e| (&e.id, e)))
        .collect();
    let items: Vec<Candidate> = matching
        .iter()
        .skip(q.offset)
        .take(q.limit)
        .map(|a| {
            let mut assertion = (*a).clone();
            if let Some(l) = ctx.gold.label(&a.pair) {
                assertion.verdict = l.verdict;
            }
            Candidate {
                left: index.get(a.pair.a()).map(|e| (*e).clone()).unwrap_or_else(|| missing(a.pair.a())),
                right: index.get(a.pair.b()).map(|e| (*e).clone()).unwrap_or_else(|| missing(a.pair.b())),
                assertion,
            }
        })
        .collect();
    Ok(Json(json!({ "total": matching.len(), "offset": q.offset, "items": items })))
}

fn missing(id: &EntityId) -> Entity {
    Entity::new(id.clone(), "")
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ClassQuery {
    #[serde(default)]
    include_singletons: bool,
}

async fn list_classes(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ClassQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let ctx = run_context(&state, &id)?;
    let entities = ctx.datasets.iter().flat_map(|d| d.entities.iter());
    let classes = if q.include_singletons {
        let ids: Vec<&EntityId> = ctx.datasets.iter().flat_map(|d| d.entities.iter().map(|e| &e.id)).collect();
        let pairs = ctx
            .results
            .iter()
            .map(|a| &a.pair)
            .filter(|p| ctx.gold.verdict(p) != Some(Verdict::Different))
            .chain(ctx.gold.pairs_with(Verdict::Same));
        kgdd_core::model::equivalence_classes_from_pairs(ids, pairs)
    } else {
        engine::duplicate_classes(entities, &ctx.results, &ctx.gold)
    }
    .map_err(|e| ApiError::bad(e.to_string()))?;
    Ok(Json(json!({ "classes": classes })))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LabelBody {
    id_a: EntityId,
    id_b: EntityId,
    verdict: Verdict,
    #[serde(default = "default_labeler")]
    labeler: String,
    /// Replace an existing label of the same pair.
    #[serde(default)]
    supersede: bool,
}

fn default_labeler() -> String {
    "anonymous".into()
}

async fn submit_label(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Payload(body): Payload<LabelBody>,
) -> ApiResult<Json<serde_json::Value>> {
    state.writable()?;
    let store = state.store();
    let record = store.run(&id)?;
    for e in [&body.id_a, &body.id_b] {
        let known = record
            .dataset_refs
            .iter()
            .filter_map(|d| store.dataset(d).ok())
            .any(|d| d.get(e).is_some());
        if !known {
            return Err(ApiError::bad(format!("entity {e} is not in the run's datasets")));
        }
    }
    let (label, version) = store.add_label(
        &record.gold_scope(),
        body.id_a,
        body.id_b,
        body.verdict,
        &body.labeler,
        body.supersede,
    )?;
    Ok(Json(json!({ "label": label, "goldVersion": version })))
}

async fn list_labels(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let record = state.store().run(&id)?;
    let gold = state.store().gold(&record.gold_scope());
    let labels: Vec<&Label> = gold.labels().collect();
    Ok(Json(json!({ "version": gold.version(), "labels": labels })))
}

#[derive(Deserialize)]
struct WorldQuery {
    #[serde(default)]
    world: Option<World>,
}

async fn get_eval(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<WorldQuery>,
) -> ApiResult<Json<EvalReport>> {
    let ctx = run_context(&state, &id)?;
    let world = q.world.unwrap_or(ctx.record.config.evaluate.world);
    Ok(Json(score(ctx.results.iter().map(|a| &a.pair), &ctx.gold, world)?))
}

#[derive(Deserialize)]
struct SweepQuery {
    /// Comma-separated cuts; defaults to the run config's.
    #[serde(default)]
    thresholds: Option<String>,
    #[serde(default)]
    world: Option<World>,
}

#[derive(Serialize)]
struct SweepRow {
    threshold: f64,
    report: EvalReport,
}

/// Sweeps over the run's accepted pairs. Cuts below the run's accept
/// threshold see the same pairs as the accept threshold itself.
async fn get_sweep(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SweepQuery>,
) -> ApiResult<Json<Vec<SweepRow>>> {
    let ctx = run_context(&state, &id)?;
    let thresholds = match q.thresholds {
        Some(text) => parse_thresholds(&text).map_err(ApiError::bad)?,
        None => ctx.record.config.evaluate.thresholds.clone(),
    };
    let world = q.world.unwrap_or(ctx.record.config.evaluate.world);
    let rows = threshold_sweep(&ctx.results, &ctx.gold, &thresholds, world)?;
    Ok(Json(
        rows.into_iter()
            .map(|(threshold, report)| SweepRow { threshold, report })
            .collect(),
    ))
}

pub fn parse_thresholds(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| format!("bad threshold {t:?}"))
        })
        .collect()
}

async fn get_feature_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<FeatureRow>>> {
    let ctx = run_context(&state, &id)?;
    let dataset = match ctx.datasets.as_slice() {
        [one] => one.as_ref().clone(),
        many => Dataset::new(
            ctx.record.gold_scope(),
            "linkage",
            many.iter().flat_map(|d| d.entities.iter().cloned()).collect(),
        )
        .map_err(|e| ApiError::new(StatusCode::CONFLICT, e.to_string()))?,
    };
    Ok(Json(feature_report(&dataset, &ctx.gold)?))
}

// Fusion

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateFusion {
    /// Defaults to the run config's fusion policy.
    #[serde(default)]
    policy: Option<FusionPolicy>,
}

async fn create_fusion_run(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Payload(body): Payload<CreateFusion>,
) -> ApiResult<(StatusCode, Json<FusionRecord>)> {
    state.writable()?;
    let ctx = run_context(&state, &id)?;
    let policy = body.policy.unwrap_or_else(|| ctx.record.config.fusion.clone());
    let refs: Vec<&Dataset> = ctx.datasets.iter().map(|d| d.as_ref()).collect();
    let fused = engine::fuse(&refs, &ctx.results, &ctx.gold, &policy).map_err(|e| ApiError::bad(e.to_string()))?;
    let record = state.store().add_fusion(&id, policy, fused)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn list_fusions(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.store().fusions())
}

async fn get_fusion(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<FusionRecord>> {
    Ok(Json(state.store().fusion(&id)?))
}

async fn get_decisions(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let record = state.store().fusion(&id)?;
    let rows: Vec<serde_json::Value> = record
        .entities
        .iter()
        .flat_map(|e| {
            e.decisions.iter().map(move |d| {
                let mut row = serde_json::to_value(d).expect("decision serializes");
                row["entity"] = json!(e.id);
                row
            })
        })
        .collect();
    Ok(Json(json!({ "decisions": rows })))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct OverrideBody {
    entity_id: EntityId,
    property: String,
    /// Raw or lexical form of one of the inputs.
    value: String,
    operator: String,
}

async fn submit_override(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Payload(body): Payload<OverrideBody>,
) -> ApiResult<Json<FusedEntity>> {
    state.writable()?;
    let choice = Override {
        property: body.property,
        value: body.value,
        operator: body.operator,
    };
    Ok(Json(state.store().add_override(&id, &body.entity_id, choice)?))
}
