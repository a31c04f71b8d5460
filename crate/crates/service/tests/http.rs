use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use formula_scout::features::Featurizer;
use formula_scout::grid::{export_workbook, load_workbook, Workbook};
use formula_scout::index::Indexes;
use formula_scout::recommend::{Encoder, Library, RawFeatureEncoder, RecommenderConfig};
use formula_scout::synth::{roster_reference, roster_target, synthetic_corpus, SynthConfig, ROSTER_EXPECTED};
use formula_scout_service::http::router;
use formula_scout_service::state::ServiceState;
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

fn encoder() -> Arc<dyn Encoder> {
    Arc::new(RawFeatureEncoder {
        featurizer: Featurizer::default_hashed(),
        n_r: 20,
        n_c: 6,
    })
}

fn empty_state() -> Arc<ServiceState> {
    let enc = encoder();
    let idx = Indexes::new(enc.coarse_dim(), enc.fine_dim());
    Arc::new(ServiceState::new(idx, Library::default(), enc, RecommenderConfig::default()))
}

async fn spawn(state: Arc<ServiceState>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    format!("http://{addr}")
}

fn dump(wb: &Workbook) -> Value {
    serde_json::from_slice(&export_workbook(wb)).unwrap()
}

fn roster_workbooks() -> (Workbook, Workbook) {
    let reference = Workbook {
        id: "roster-ref".into(),
        sheets: vec![roster_reference()],
        last_modified: 0,
    };
    let target = Workbook {
        id: "roster-draft".into(),
        sheets: vec![roster_target()],
        last_modified: 0,
    };
    (reference, target)
}

async fn upload(c: &Client, base: &str, wb: &Workbook) -> (StatusCode, Value) {
    let r = c.post(format!("{base}/workbooks")).body(export_workbook(wb)).send().await.unwrap();
    (r.status(), r.json().await.unwrap())
}

async fn predict(c: &Client, base: &str, body: Value) -> (StatusCode, Value) {
    let r = c.post(format!("{base}/predict")).json(&body).send().await.unwrap();
    (r.status(), r.json().await.unwrap())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn health_counts_follow_uploads() {
    let base = spawn(empty_state()).await;
    let c = Client::new();
    let h: Value = c.get(format!("{base}/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(h, json!({"status": "ok", "sheets": 0, "formulas": 0}));

    let (reference, _) = roster_workbooks();
    let (status, added) = upload(&c, &base, &reference).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = added["id"].as_str().unwrap().to_string();
    assert_eq!(id, reference.content_hash());
    assert_eq!(added["created"], json!(true));

    let formulas = reference.sheets[0].formula_cells().count();
    let h: Value = c.get(format!("{base}/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(h, json!({"status": "ok", "sheets": 1, "formulas": formulas}));

    // Identical bodies map to the same id and index nothing new.
    let (status, again) = upload(&c, &base, &reference).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, json!({"id": id, "created": false}));
    let h: Value = c.get(format!("{base}/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(h["sheets"], json!(1));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn stored_dump_is_served_back() {
    let base = spawn(empty_state()).await;
    let c = Client::new();
    let (reference, _) = roster_workbooks();
    let (_, added) = upload(&c, &base, &reference).await;
    let id = added["id"].as_str().unwrap();
    let r = c.get(format!("{base}/workbooks/{id}")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let back = load_workbook(&r.bytes().await.unwrap()).unwrap();
    assert_eq!(back.id, id);
    assert_eq!(back.sheets, reference.sheets);

    let r = c.get(format!("{base}/workbooks/nope")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["error"]["kind"], json!("unknown_workbook"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn roster_fixture_first_prediction() {
    let base = spawn(empty_state()).await;
    let c = Client::new();
    let (reference, target) = roster_workbooks();
    let (_, added) = upload(&c, &base, &reference).await;
    let body = json!({"workbook": dump(&target), "sheet": "Roster", "cell": "D41", "top_n": 3});
    let (status, resp) = predict(&c, &base, body).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let preds = resp["predictions"].as_array().unwrap();
    assert!(!preds.is_empty() && preds.len() <= 3);
    assert_eq!(preds[0]["formula"], json!(ROSTER_EXPECTED));
    let prov = &preds[0]["provenance"];
    assert_eq!(prov["workbook_id"], added["id"]);
    assert_eq!(prov["sheet"], json!("Roster"));
    assert_eq!(prov["reference_formula"], json!("=COUNTIF(C6:C350,C354)"));
    assert!(preds[0]["score"].as_f64().unwrap() >= 0.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn duplicate_of_indexed_sheet_gets_its_own_formula() {
    let base = spawn(empty_state()).await;
    let c = Client::new();
    let corpus = synthetic_corpus(&SynthConfig {
        families: 2,
        variants: 2,
        ..SynthConfig::default()
    });
    for wb in &corpus {
        upload(&c, &base, wb).await;
    }
    let mut draft = corpus[1].clone();
    draft.id = "draft".into();
    let sheet = draft.sheets.iter().find(|s| s.formula_cells().next().is_some()).unwrap();
    let (cell, formula) = sheet.formula_cells().last().map(|(a, f)| (*a, f.to_string())).unwrap();
    let body = json!({"workbook": dump(&draft), "sheet": sheet.name, "cell": cell.to_a1()});
    let (status, resp) = predict(&c, &base, body).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let top = &resp["predictions"][0];
    assert_eq!(top["formula"], json!(formula));
    assert!(top["score"].as_f64().unwrap() < 1e-6, "{top}");
    assert_eq!(top["provenance"]["workbook_id"], json!(corpus[1].content_hash()));

    // Stored workbooks are excluded from their own retrieval.
    let body = json!({"workbook_id": corpus[1].content_hash(), "sheet": sheet.name, "cell": cell.to_a1()});
    let (status, resp) = predict(&c, &base, body).await;
    assert_eq!(status, StatusCode::OK);
    for p in resp["predictions"].as_array().unwrap() {
        assert_ne!(p["provenance"]["workbook_id"], json!(corpus[1].content_hash()));
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn error_statuses() {
    let base = spawn(empty_state()).await;
    let c = Client::new();
    let (reference, target) = roster_workbooks();
    let (_, added) = upload(&c, &base, &reference).await;
    let id = added["id"].clone();
    let inline = dump(&target);

    let cases = [
        (json!({"workbook_id": id, "sheet": "Nope", "cell": "A1"}), 404, "unknown_sheet"),
        (json!({"workbook": inline, "sheet": "Nope", "cell": "A1"}), 404, "unknown_sheet"),
        (json!({"workbook_id": "missing", "sheet": "Roster", "cell": "A1"}), 404, "unknown_workbook"),
        (json!({"workbook_id": id, "sheet": "Roster", "cell": "A0"}), 400, "bad_request"),
        (json!({"workbook_id": id, "sheet": "Roster", "cell": "not a cell"}), 400, "bad_request"),
        (json!({"workbook_id": id, "sheet": "Roster", "cell": "Z9999"}), 422, "out_of_bounds"),
        (json!({"workbook_id": id, "workbook": inline, "sheet": "Roster", "cell": "A1"}), 400, "bad_request"),
        (json!({"sheet": "Roster", "cell": "A1"}), 400, "bad_request"),
        (json!({"workbook": {"sheets": 3}, "sheet": "Roster", "cell": "A1"}), 400, "bad_request"),
        (json!({"workbook_id": id, "sheet": "Roster"}), 400, "bad_request"),
    ];
    for (body, status, kind) in cases {
        let (got, resp) = predict(&c, &base, body.clone()).await;
        assert_eq!(got.as_u16(), status, "{body} -> {resp}");
        assert_eq!(resp["error"]["kind"], json!(kind), "{body}");
    }

    let r = c.post(format!("{base}/predict")).body("{not json").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let r = c.post(format!("{base}/workbooks")).body("{\"id\": 1}").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let body: Value = r.json().await.unwrap();
    assert!(body["error"]["message"].as_str().unwrap().contains("id"), "{body}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn empty_index_abstains() {
    let base = spawn(empty_state()).await;
    let (_, target) = roster_workbooks();
    let body = json!({"workbook": dump(&target), "sheet": "Roster", "cell": "D41"});
    let (status, resp) = predict(&Client::new(), &base, body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp, json!({"predictions": []}));
}

#[test]
fn readers_never_see_a_mixed_snapshot() {
    let state = empty_state();
    let corpus = synthetic_corpus(&SynthConfig {
        families: 3,
        variants: 4,
        ..SynthConfig::default()
    });
    let (_, target) = roster_workbooks();
    let done = AtomicBool::new(false);
    std::thread::scope(|s| {
        s.spawn(|| {
            for wb in &corpus {
                state.add_workbook(wb.clone()).unwrap();
            }
            done.store(true, Ordering::SeqCst);
        });
        for _ in 0..2 {
            s.spawn(|| {
                let mut seen = 0;
                while !done.load(Ordering::SeqCst) || seen == 0 {
                    let snap = state.snapshot();
                    let in_index: BTreeSet<&str> =
                        snap.indexes.coarse.keys().iter().map(|k| k.workbook.as_str()).collect();
                    let in_library: BTreeSet<&str> = snap.library.workbooks().map(|w| w.id.as_str()).collect();
                    assert_eq!(in_index, in_library);
                    for k in snap.indexes.fine.keys() {
                        let sheet = snap.library.sheet(&k.workbook, &k.sheet).expect("fine key without workbook");
                        assert!(sheet.get(k.cell).and_then(|c| c.formula.as_ref()).is_some());
                    }
                    let req = serde_json::from_value(json!({
                        "workbook": dump(&target), "sheet": "Roster", "cell": "D41"
                    }))
                    .unwrap();
                    state.predict(&req).unwrap();
                    seen += 1;
                }
            });
        }
    });
    assert_eq!(state.snapshot().library.len(), corpus.len());
}
