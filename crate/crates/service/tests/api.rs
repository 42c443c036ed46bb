use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use kgdd_core::evaluate::{next_candidates_for_labeling, GoldStandard};
use kgdd_core::model::SameAsAssertion;
use kgdd_core::synthetic::{generate_synthetic, SyntheticSpec};
use kgdd_service::api::{router, AppState};
use kgdd_service::store::{RunState, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

const TOKEN: &str = "secret";

const CONFIG: &str = r#"
[match]
acceptThreshold = 0.8
minComparableLeaves = 1

[match.tree]
op = "wavg"
children = [
  { property = "name", comparator = "jaro-winkler", cleaners = ["lowercase"] },
  { property = "geo", comparator = "geo(250)" },
]

[fusion]
uniqueProps = ["name"]
perProperty = { geo = "average" }
"#;

struct Harness {
    app: Router,
    _dir: tempfile::TempDir,
    dir: std::path::PathBuf,
}

impl Harness {
    fn new(read_only: bool) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().to_path_buf();
        Self::at(dir, path, read_only)
    }

    fn at(dir: tempfile::TempDir, path: std::path::PathBuf, read_only: bool) -> Self {
        let store = Arc::new(Store::open(&path).unwrap());
        Self {
            app: router(AppState::new(store, TOKEN, read_only)),
            _dir: dir,
            dir: path,
        }
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        self.raw(method, uri, body.map(|b| b.to_string()), Some(TOKEN)).await
    }

    async fn raw(&self, method: &str, uri: &str, body: Option<String>, token: Option<&str>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    async fn upload_benchmark(&self, id: &str) -> GoldStandard {
        let (dataset, gold) = generate_synthetic(&SyntheticSpec::new(150, 8, 3)).unwrap();
        let mut csv = Vec::new();
        gold.write_csv(&mut csv).unwrap();
        let (status, body) = self
            .call(
                "POST",
                "/api/datasets",
                Some(json!({
                    "id": id,
                    "format": "json",
                    "content": serde_json::to_string(&dataset).unwrap(),
                    "gold": String::from_utf8(csv).unwrap(),
                })),
            )
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        gold
    }

    async fn finished_run(&self, dataset: &str) -> String {
        let (status, body) = self
            .call("POST", "/api/runs", Some(json!({ "datasets": [dataset], "configToml": CONFIG })))
            .await;
        assert_eq!(status, StatusCode::ACCEPTED, "{body}");
        let run_id = body["runId"].as_str().unwrap().to_string();
        for _ in 0..600 {
            let (_, run) = self.call("GET", &format!("/api/runs/{run_id}"), None).await;
            match run["state"].as_str().unwrap() {
                "done" => {
                    assert_eq!(run["progress"], 1.0);
                    return run_id;
                }
                "failed" => panic!("run failed: {run}"),
                _ => tokio::time::sleep(Duration::from_millis(50)).await,
            }
        }
        panic!("run did not finish");
    }
}

fn pairs_of(page: &Value) -> Vec<(String, String)> {
    page["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["idA"].as_str().unwrap().to_string(), c["idB"].as_str().unwrap().to_string()))
        .collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn token_is_required() {
    let h = Harness::new(false);
    assert_eq!(h.raw("GET", "/health", None, None).await.0, StatusCode::OK);
    assert_eq!(h.raw("GET", "/api/datasets", None, None).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(h.raw("GET", "/api/datasets", None, Some("wrong")).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(h.call("GET", "/api/datasets", None).await.0, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_and_unknown() {
    let h = Harness::new(false);
    let (status, _) = h.raw("POST", "/api/datasets", Some("{not json".into()), Some(TOKEN)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = h.call("POST", "/api/datasets", Some(json!({ "format": "csv" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = h
        .call("POST", "/api/datasets", Some(json!({ "format": "csv", "content": "name\nx\n" })))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(h.call("GET", "/api/runs/run-999999", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(h.call("GET", "/api/datasets/nope", None).await.0, StatusCode::NOT_FOUND);
    let (status, _) = h
        .call("POST", "/api/runs", Some(json!({ "datasets": ["nope"], "configToml": CONFIG })))
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = h
        .call("POST", "/api/runs", Some(json!({ "datasets": ["nope"], "configToml": "[match" })))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn csv_upload() {
    let h = Harness::new(false);
    let (status, body) = h
        .call(
            "POST",
            "/api/datasets",
            Some(json!({ "id": "tiny", "format": "csv", "content": "id,name\na,Hugo's\nb,Hugos\n" })),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["entityCount"], 2);
    let (_, entity) = h.call("GET", "/api/datasets/tiny/entities/b", None).await;
    assert_eq!(entity["properties"]["name"][0]["raw"], "Hugos");
    let (status, _) = h
        .call("POST", "/api/datasets", Some(json!({ "id": "tiny", "format": "csv", "content": "id\nc\n" })))
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn run_label_eval_loop() {
    let h = Harness::new(false);
    h.upload_benchmark("bench").await;
    let run = h.finished_run("bench").await;

    let (status, before) = h.call("GET", &format!("/api/runs/{run}/eval"), None).await;
    assert_eq!(status, StatusCode::OK, "{before}");

    // Threshold monotonicity of the candidate listing.
    let (_, high) = h.call("GET", &format!("/api/runs/{run}/candidates?minSim=0.9&limit=1000"), None).await;
    let (_, low) = h.call("GET", &format!("/api/runs/{run}/candidates?minSim=0.8&limit=1000"), None).await;
    let high: BTreeSet<_> = pairs_of(&high).into_iter().collect();
    let low: BTreeSet<_> = pairs_of(&low).into_iter().collect();
    assert!(high.is_subset(&low));
    assert!(!low.is_empty());

    // The labeling queue follows the evaluation module's ordering.
    let store_dir = h.dir.join("results").join(format!("{run}.jsonl"));
    let results: Vec<SameAsAssertion> =
        kgdd_core::pipeline::read_assertions(std::io::BufReader::new(std::fs::File::open(store_dir).unwrap())).unwrap();
    let (_, labels) = h.call("GET", &format!("/api/runs/{run}/labels"), None).await;
    let mut gold = GoldStandard::new();
    for l in labels["labels"].as_array().unwrap() {
        let a = kgdd_core::model::EntityId::new(l["idA"].as_str().unwrap()).unwrap();
        let b = kgdd_core::model::EntityId::new(l["idB"].as_str().unwrap()).unwrap();
        gold.record(a, b, serde_json::from_value(l["verdict"].clone()).unwrap(), "t", 0).unwrap();
    }
    let expected: Vec<(String, String)> = next_candidates_for_labeling(&results, &gold, usize::MAX)
        .iter()
        .map(|a| (a.pair.a().to_string(), a.pair.b().to_string()))
        .collect();
    let mut listed = Vec::new();
    let mut offset = 0;
    loop {
        let (_, page) = h
            .call("GET", &format!("/api/runs/{run}/candidates?unlabeled=true&limit=3&offset={offset}"), None)
            .await;
        let items = pairs_of(&page);
        if items.is_empty() {
            break;
        }
        offset += items.len();
        listed.extend(items);
    }
    assert_eq!(listed, expected);
    assert!(!expected.is_empty(), "benchmark run should leave unlabeled accepted pairs");

    // Read your writes: labeling an accepted pair same adds one tp.
    let (a, b) = &expected[0];
    let (status, body) = h
        .call("POST", &format!("/api/runs/{run}/labels"), Some(json!({ "idA": a, "idB": b, "verdict": "same" })))
        .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (_, after) = h.call("GET", &format!("/api/runs/{run}/eval"), None).await;
    assert_eq!(after["tp"].as_u64().unwrap(), before["tp"].as_u64().unwrap() + 1);

    // Relabeling needs the supersede flag.
    let relabel = json!({ "idA": b, "idB": a, "verdict": "different" });
    assert_eq!(h.call("POST", &format!("/api/runs/{run}/labels"), Some(relabel)).await.0, StatusCode::CONFLICT);
    let relabel = json!({ "idA": a, "idB": b, "verdict": "different", "supersede": true });
    assert_eq!(h.call("POST", &format!("/api/runs/{run}/labels"), Some(relabel)).await.0, StatusCode::OK);
    let (_, last) = h.call("GET", &format!("/api/runs/{run}/eval"), None).await;
    assert_eq!(last["tp"], before["tp"]);

    let unknown = json!({ "idA": "zz-none", "idB": a, "verdict": "same" });
    assert_eq!(h.call("POST", &format!("/api/runs/{run}/labels"), Some(unknown)).await.0, StatusCode::BAD_REQUEST);
    let unlabeled = json!({ "idA": a, "idB": b, "verdict": "unlabeled", "supersede": true });
    assert_eq!(h.call("POST", &format!("/api/runs/{run}/labels"), Some(unlabeled)).await.0, StatusCode::BAD_REQUEST);

    // Dashboard endpoints.
    let (status, sweep) = h.call("GET", &format!("/api/runs/{run}/sweep?thresholds=0.8,0.9"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(sweep.as_array().unwrap().len(), 2);
    assert_eq!(h.call("GET", &format!("/api/runs/{run}/sweep?thresholds=2"), None).await.0, StatusCode::BAD_REQUEST);
    let (status, features) = h.call("GET", &format!("/api/runs/{run}/features"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(features.as_array().unwrap().iter().any(|r| r["property"] == "geo"));
    let (_, classes) = h.call("GET", &format!("/api/runs/{run}/classes"), None).await;
    assert!(classes["classes"].as_array().unwrap().iter().all(|c| c["members"].as_array().unwrap().len() > 1));
    let (_, all) = h.call("GET", &format!("/api/runs/{run}/classes?includeSingletons=true"), None).await;
    let covered: usize = all["classes"].as_array().unwrap().iter().map(|c| c["members"].as_array().unwrap().len()).sum();
    assert_eq!(covered, 158);
}

#[tokio::test(flavor = "multi_thread")]
async fn eval_without_labels_is_conflict() {
    let h = Harness::new(false);
    let (status, _) = h
        .call("POST", "/api/datasets", Some(json!({ "id": "d", "format": "csv", "content": "id,name\na,X\nb,X\n" })))
        .await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, body) = h
        .call(
            "POST",
            "/api/runs",
            Some(json!({ "datasets": ["d"], "configToml": "[match]\nacceptThreshold = 0.9\nminComparableLeaves = 1\ntree = { property = \"name\", comparator = \"exact\" }\n" })),
        )
        .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let run = body["runId"].as_str().unwrap().to_string();
    for _ in 0..200 {
        if h.call("GET", &format!("/api/runs/{run}"), None).await.1["state"] == "done" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(h.call("GET", &format!("/api/runs/{run}/eval"), None).await.0, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn failed_run_reports_error() {
    let h = Harness::new(false);
    h.call("POST", "/api/datasets", Some(json!({ "id": "d", "format": "csv", "content": "id,name\na,X\n" })))
        .await;
    let cfg = "[match]\nacceptThreshold = 0.9\ntree = { property = \"phone\", comparator = \"exact\" }\n";
    let (_, body) = h.call("POST", "/api/runs", Some(json!({ "datasets": ["d"], "configToml": cfg }))).await;
    let run = body["runId"].as_str().unwrap().to_string();
    for _ in 0..200 {
        let (_, r) = h.call("GET", &format!("/api/runs/{run}"), None).await;
        if r["state"] == "failed" {
            assert!(r["error"].as_str().unwrap().contains("phone"));
            assert_eq!(h.call("GET", &format!("/api/runs/{run}/eval"), None).await.0, StatusCode::CONFLICT);
            return;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("run did not fail");
}

#[tokio::test(flavor = "multi_thread")]
async fn fusion_and_overrides() {
    let h = Harness::new(false);
    h.upload_benchmark("bench").await;
    let run = h.finished_run("bench").await;
    let (status, fusion) = h.call("POST", &format!("/api/runs/{run}/fusions"), None).await;
    assert_eq!(status, StatusCode::CREATED, "{fusion}");
    let fusion_id = fusion["fusionId"].as_str().unwrap().to_string();
    let entity = fusion["entities"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["decisions"].as_array().unwrap().iter().any(|d| d["property"] == "name" && d["inputs"].as_array().unwrap().len() > 1))
        .expect("a class with several names")
        .clone();
    let name_decision = entity["decisions"].as_array().unwrap().iter().find(|d| d["property"] == "name").unwrap();
    let second = name_decision["inputs"][1]["raw"].as_str().unwrap().to_string();

    let (_, log_before) = h.call("GET", &format!("/api/fusions/{fusion_id}/decisions"), None).await;
    let body = json!({ "entityId": entity["id"], "property": "name", "value": second, "operator": "ann" });
    let (status, updated) = h.call("POST", &format!("/api/fusions/{fusion_id}/overrides"), Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{updated}");
    assert_eq!(updated["properties"]["name"][0]["raw"], second.as_str());
    let (_, log_after) = h.call("GET", &format!("/api/fusions/{fusion_id}/decisions"), None).await;
    assert_eq!(
        log_after["decisions"].as_array().unwrap().len(),
        log_before["decisions"].as_array().unwrap().len() + 1
    );

    let invented = json!({ "entityId": entity["id"], "property": "name", "value": "Free Text", "operator": "ann" });
    assert_eq!(h.call("POST", &format!("/api/fusions/{fusion_id}/overrides"), Some(invented)).await.0, StatusCode::BAD_REQUEST);
    let absent = json!({ "entityId": entity["id"], "property": "nothing", "value": second, "operator": "ann" });
    assert_eq!(h.call("POST", &format!("/api/fusions/{fusion_id}/overrides"), Some(absent)).await.0, StatusCode::BAD_REQUEST);
    let stranger = json!({ "entityId": "urn:fused:x", "property": "name", "value": second, "operator": "ann" });
    assert_eq!(h.call("POST", &format!("/api/fusions/{fusion_id}/overrides"), Some(stranger)).await.0, StatusCode::NOT_FOUND);

    let bad_policy = json!({ "policy": { "perProperty": { "name": "average" } } });
    assert_eq!(h.call("POST", &format!("/api/runs/{run}/fusions"), Some(bad_policy)).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn read_only_rejects_mutations() {
    let h = Harness::new(true);
    let (status, _) = h
        .call("POST", "/api/datasets", Some(json!({ "format": "csv", "content": "id,name\na,X\n" })))
        .await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(h.call("GET", "/api/runs", None).await.0, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread")]
async fn restart_loses_nothing() {
    let h = Harness::new(false);
    let gold = h.upload_benchmark("bench").await;
    let run = h.finished_run("bench").await;
    let (_, page) = h.call("GET", &format!("/api/runs/{run}/candidates?unlabeled=true&limit=1"), None).await;
    let (a, b) = pairs_of(&page)[0].clone();
    h.call("POST", &format!("/api/runs/{run}/labels"), Some(json!({ "idA": a, "idB": b, "verdict": "related" })))
        .await;
    let (_, fusion) = h.call("POST", &format!("/api/runs/{run}/fusions"), None).await;
    let fusion_id = fusion["fusionId"].as_str().unwrap().to_string();
    let entity = &fusion["entities"][0];
    let input = entity["decisions"][0]["inputs"][0]["raw"].as_str().unwrap().to_string();
    let property = entity["decisions"][0]["property"].clone();
    let body = json!({ "entityId": entity["id"], "property": property, "value": input, "operator": "ann" });
    let (status, _) = h.call("POST", &format!("/api/fusions/{fusion_id}/overrides"), Some(body)).await;
    assert_eq!(status, StatusCode::OK);

    let (_, runs_before) = h.call("GET", "/api/runs", None).await;
    let (_, eval_before) = h.call("GET", &format!("/api/runs/{run}/eval"), None).await;
    let (_, fusion_before) = h.call("GET", &format!("/api/fusions/{fusion_id}"), None).await;
    let (_, labels_before) = h.call("GET", &format!("/api/runs/{run}/labels"), None).await;

    let Harness { app, _dir, dir } = h;
    drop(app);
    let h = Harness::at(_dir, dir, false);
    assert_eq!(h.call("GET", "/api/runs", None).await.1, runs_before);
    assert_eq!(h.call("GET", &format!("/api/runs/{run}/eval"), None).await.1, eval_before);
    assert_eq!(h.call("GET", &format!("/api/fusions/{fusion_id}"), None).await.1, fusion_before);
    let (_, labels_after) = h.call("GET", &format!("/api/runs/{run}/labels"), None).await;
    assert_eq!(labels_after, labels_before);
    assert_eq!(labels_after["labels"].as_array().unwrap().len(), gold.len() + 1);
    let (_, datasets) = h.call("GET", "/api/datasets", None).await;
    assert_eq!(datasets[0]["entityCount"], 158);
}

#[test]
fn interrupted_runs_fail_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let d = kgdd_core::ingest::Dataset::new("d", "s", vec![]).unwrap();
    store.add_dataset(d).unwrap();
    let config = kgdd_core::config::RunConfig::from_toml(CONFIG).unwrap();
    let run = store.create_run(config, "inline".into(), vec!["d".into()]).unwrap();
    drop(store);
    let store = Store::open(dir.path()).unwrap();
    let r = store.run(&run.run_id).unwrap();
    assert_eq!(r.state, RunState::Failed);
    assert!(store.set_run_state(&run.run_id, RunState::Running, None, None).is_err());
}

#[test]
fn torn_last_record_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.add_dataset(kgdd_core::ingest::Dataset::new("d", "s", vec![]).unwrap()).unwrap();
    drop(store);
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().append(true).open(dir.path().join("datasets.jsonl")).unwrap();
    f.write_all(b"{\"id\":\"half").unwrap();
    drop(f);
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.datasets().len(), 1);
    store.add_dataset(kgdd_core::ingest::Dataset::new("e", "s", vec![]).unwrap()).unwrap();
    drop(store);
    assert_eq!(Store::open(dir.path()).unwrap().datasets().len(), 2);
}
