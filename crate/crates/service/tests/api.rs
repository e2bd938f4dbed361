use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use groundform_core::clock::VirtualClock;
use groundform_core::fixtures::reference_schema;
use groundform_core::index::LexicalIndex;
use groundform_core::model::DeterministicExtractor;
use groundform_core::synthgen::{generate_package, render_package_text, sample_seed, StudentPackage};
use groundform_service::{router, AppState, ServiceConfig, TokenPayload, TokenSigner};

struct Harness {
    state: Arc<AppState>,
    app: Router,
    clock: Arc<VirtualClock>,
}

fn harness_with(cfg: ServiceConfig) -> Harness {
    let clock = Arc::new(VirtualClock::new());
    let state = AppState::new(reference_schema(), LexicalIndex::new(), Arc::new(DeterministicExtractor), "test-key")
        .unwrap()
        .with_user("alice", "alice-secret")
        .with_user("bob", "bob-secret")
        .with_clock(clock.clone())
        .with_config(cfg)
        .unwrap();
    let state = Arc::new(state);
    Harness { app: router(state.clone()), state, clock }
}

fn harness() -> Harness {
    harness_with(ServiceConfig::default())
}

impl Harness {
    async fn call(&self, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn login(&self, user: &str) -> String {
        let (status, body) = self.call("POST", "/v1/auth/login", None, Some(json!({"user_id": user, "secret": format!("{user}-secret")}))).await;
        assert_eq!(status, StatusCode::OK);
        body["token"].as_str().unwrap().to_owned()
    }

    async fn upload_package(&self, token: &str, pkg: &StudentPackage) {
        for (name, text) in render_package_text(pkg) {
            let (status, body) = self.call("POST", "/v1/documents", Some(token), Some(json!({"doc_name": name, "text": text}))).await;
            assert_eq!(status, StatusCode::OK, "{body}");
            assert!(body["chunks_indexed"].as_u64().unwrap() >= 1);
        }
    }

    async fn suggest(&self, token: &str, label: &str, context: Value) -> (StatusCode, Value) {
        self.call("POST", "/v1/suggest", Some(token), Some(json!({"field": {"label_text": label}, "form_context": {"values": context}}))).await
    }
}

fn label(l: &str) -> Value {
    json!({"field_descriptor": {"label_text": l}})
}

#[tokio::test]
async fn login_checks_secret() {
    let h = harness();
    let (ok, body) = h.call("POST", "/v1/auth/login", None, Some(json!({"user_id": "alice", "secret": "alice-secret"}))).await;
    assert_eq!(ok, StatusCode::OK);
    assert!(body["token"].as_str().unwrap().contains('.'));
    for creds in [json!({"user_id": "alice", "secret": "nope"}), json!({"user_id": "carol", "secret": "carol-secret"})] {
        let (status, body) = h.call("POST", "/v1/auth/login", None, Some(creds)).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED);
        assert_eq!(body["error_code"], "InvalidCredentials");
    }
}

#[tokio::test]
async fn protected_endpoints_require_a_valid_token() {
    let h = harness();
    let routes = [
        ("POST", "/v1/map", Some(label("GPA"))),
        ("POST", "/v1/suggest", Some(json!({"field": {"label_text": "GPA"}}))),
        ("POST", "/v1/documents", Some(json!({"doc_name": "a.txt", "text": "GPA: 3.9"}))),
        ("GET", "/v1/documents", None),
        ("POST", "/v1/edit", Some(json!({"selected_text": "x", "instruction": "shorten"}))),
        ("GET", "/v1/profile/snapshot", None),
        // A malformed body still gets 401 first.
        ("POST", "/v1/map", Some(json!({"wrong": true}))),
    ];
    let forged = TokenSigner::new("other-key").issue(&TokenPayload { user_id: "alice".into(), expiry: u64::MAX });
    for (method, path, body) in routes {
        for token in [None, Some("garbage"), Some("abc.def"), Some(forged.as_str())] {
            let (status, err) = h.call(method, path, token, body.clone()).await;
            assert_eq!(status, StatusCode::UNAUTHORIZED, "{method} {path} {token:?}");
            assert_eq!(err["error_code"], "Unauthorized");
        }
    }
    assert_eq!(h.state.index_fingerprint(), LexicalIndex::new().fingerprint());
}

#[tokio::test]
async fn tokens_expire() {
    let h = harness();
    let token = h.login("alice").await;
    assert_eq!(h.call("POST", "/v1/map", Some(&token), Some(label("GPA"))).await.0, StatusCode::OK);
    h.clock.advance(3599.0);
    assert_eq!(h.call("POST", "/v1/map", Some(&token), Some(label("GPA"))).await.0, StatusCode::OK);
    h.clock.advance(1.0);
    let (status, body) = h.call("POST", "/v1/map", Some(&token), Some(label("GPA"))).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["message"], "token expired");
}

#[tokio::test]
async fn map_endpoint() {
    let h = harness();
    let t = h.login("alice").await;
    let (status, body) = h.call("POST", "/v1/map", Some(&t), Some(label("What is your GPA?"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["mapping_result"]["field_id"], "user.academics.gpa");
    assert_eq!(body["mapping_result"]["tier"], "Direct");
    let (_, body) = h.call("POST", "/v1/map", Some(&t), Some(label("xq zzv plorb"))).await;
    assert_eq!(body["mapping_result"]["tier"], "Unmapped");
    assert_eq!(body["mapping_result"]["field_id"], Value::Null);
    let (status, body) = h.call("POST", "/v1/map", Some(&t), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error_code"], "BadRequest");
    let (status, body) = h.call("POST", "/v1/map", Some(&t), Some(json!({"field_descriptor": {"placeholder": "  "}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error_code"], "MalformedDescriptor");
}

#[tokio::test]
async fn suggest_returns_cited_ground_truth() {
    let h = harness();
    let t = h.login("alice").await;
    let pkg = generate_package(&sample_seed(11));
    h.upload_package(&t, &pkg).await;

    let (status, body) = h.suggest(&t, "Cumulative GPA", json!({})).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "Suggestions");
    assert_eq!(body["field_id"], "user.academics.gpa");
    let candidates = body["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 1);
    assert_eq!(candidates[0]["value"], format!("{:.2}", pkg.transcript.gpa));
    assert_eq!(candidates[0]["source_type"], "Personal");
    let cite = &candidates[0]["citations"][0];
    assert_eq!(cite["source_url"], "file://alice/transcript/transcript.txt");
    assert!(cite["snippet"].as_str().unwrap().contains("Cumulative GPA"));

    let (_, body) = h.suggest(&t, "Annual household income", json!({})).await;
    assert_eq!(body["status"], "NoData");
    assert_eq!(body["candidates"], json!([]));
    let (_, body) = h.suggest(&t, "xq zzv plorb", json!({})).await;
    assert_eq!(body["status"], "Unmapped");
}

#[tokio::test]
async fn hidden_field_conflicts() {
    let h = harness();
    let t = h.login("alice").await;
    let (status, body) = h.suggest(&t, "Social security number", json!({"user.citizenship.us_citizen": "No"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error_code"], "FieldHidden");
    let (status, _) = h.suggest(&t, "Social security number", json!({"user.citizenship.us_citizen": "Yes"})).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = h.suggest(&t, "Visa type", json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn multi_valued_fields_return_up_to_five() {
    let h = harness();
    let t = h.login("alice").await;
    let activities = ["Debate", "Robotics", "Chess", "Theater", "Swimming", "Orchestra", "Yearbook"];
    for a in activities {
        let text = format!("# Activity Record\nExtracurricular Activity: {a}");
        let (status, _) = h.call("POST", "/v1/documents", Some(&t), Some(json!({"doc_name": format!("{a}.txt"), "text": text}))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, body) = h.suggest(&t, "Extracurricular activities", json!({})).await;
    let values: Vec<&str> = body["candidates"].as_array().unwrap().iter().map(|c| c["value"].as_str().unwrap()).collect();
    assert_eq!(values.len(), 5, "{values:?}");
    assert!(values.iter().all(|v| activities.contains(v)));
}

#[tokio::test]
async fn suggest_leaves_the_index_untouched() {
    let h = harness();
    let t = h.login("alice").await;
    h.upload_package(&t, &generate_package(&sample_seed(2))).await;
    let before = h.state.index_fingerprint();
    let (_, docs_before) = h.call("GET", "/v1/documents", Some(&t), None).await;
    for q in ["Cumulative GPA", "ACT composite score", "Extracurricular activity", "Date of birth", "Nonsense zzq"] {
        h.suggest(&t, q, json!({})).await;
    }
    assert_eq!(h.state.index_fingerprint(), before);
    assert_eq!(h.call("GET", "/v1/documents", Some(&t), None).await.1, docs_before);
}

#[tokio::test]
async fn users_never_see_each_others_documents() {
    let h = harness();
    let (alice, bob) = (h.login("alice").await, h.login("bob").await);
    h.upload_package(&alice, &generate_package(&sample_seed(5))).await;
    let (_, body) = h.suggest(&bob, "Cumulative GPA", json!({})).await;
    assert_eq!(body["status"], "NoData");
    assert_eq!(h.call("GET", "/v1/documents", Some(&bob), None).await.1, json!({"documents": []}));

    // Same file name and text for both users stays separately owned.
    let doc = json!({"doc_name": "notes.txt", "text": "Cumulative GPA: 3.11"});
    assert_eq!(h.call("POST", "/v1/documents", Some(&bob), Some(doc)).await.0, StatusCode::OK);
    let (_, body) = h.suggest(&bob, "Cumulative GPA", json!({})).await;
    assert_eq!(body["candidates"][0]["value"], "3.11");
    assert!(body["candidates"][0]["citations"].as_array().unwrap().iter().all(|c| c["source_url"].as_str().unwrap().starts_with("file://bob/")));
    let (_, body) = h.suggest(&alice, "Cumulative GPA", json!({})).await;
    assert!(body["candidates"][0]["citations"].as_array().unwrap().iter().all(|c| c["source_url"].as_str().unwrap().starts_with("file://alice/")));
}

#[tokio::test]
async fn documents_endpoint() {
    let h = harness_with(ServiceConfig { max_document_bytes: 100, ..Default::default() });
    let t = h.login("alice").await;
    let (status, body) = h.call("POST", "/v1/documents", Some(&t), Some(json!({"doc_name": "empty.txt", "text": ""}))).await;
    assert_eq!((status, body["chunks_indexed"].as_u64()), (StatusCode::OK, Some(0)));
    let (status, body) = h.call("POST", "/v1/documents", Some(&t), Some(json!({"doc_name": "big.txt", "text": "x".repeat(101)}))).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(body["error_code"], "PayloadTooLarge");
    let (status, _) = h.call("POST", "/v1/documents", Some(&t), Some(json!({"doc_name": "big.txt", "text": "x".repeat(100_000)}))).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    let doc = json!({"doc_name": "gpa.txt", "text": "Cumulative GPA: 3.50"});
    assert_eq!(h.call("POST", "/v1/documents", Some(&t), Some(doc.clone())).await.0, StatusCode::OK);
    let (status, body) = h.call("POST", "/v1/documents", Some(&t), Some(doc)).await;
    assert_eq!((status, body["error_code"].as_str()), (StatusCode::CONFLICT, Some("DuplicateDocument")));
    let (_, body) = h.call("GET", "/v1/documents", Some(&t), None).await;
    let docs = body["documents"].as_array().unwrap();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[1]["doc_name"], "gpa.txt");
    assert_eq!(docs[1]["status"], "indexed");
    assert_eq!(docs[1]["chunks_indexed"], 1);
}

#[tokio::test]
async fn edit_endpoint() {
    let h = harness();
    let t = h.login("alice").await;
    let text = "I founded the chess club, which now has forty members.";
    let (status, body) = h.call("POST", "/v1/edit", Some(&t), Some(json!({"selected_text": text, "instruction": "shorten"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["original_text"], text);
    assert_eq!(body["revised_text"], "I founded the chess club.");
    let diff = body["diff"].as_array().unwrap();
    assert!(diff.iter().any(|s| s["op"] == "del"));
    let rebuilt: String = diff.iter().filter(|s| s["op"] != "del").map(|s| s["text"].as_str().unwrap()).collect();
    assert_eq!(rebuilt, "I founded the chess club.");

    let (_, body) = h.call("POST", "/v1/edit", Some(&t), Some(json!({"selected_text": text, "instruction": "rhyme it"}))).await;
    assert_eq!(body["diff"], json!([{"op": "keep", "text": text}]));
    let (status, body) = h.call("POST", "/v1/edit", Some(&t), Some(json!({"selected_text": "  ", "instruction": "shorten"}))).await;
    assert_eq!((status, body["error_code"].as_str()), (StatusCode::BAD_REQUEST, Some("EmptySelection")));
}

#[tokio::test]
async fn reserved_and_unknown_routes() {
    let h = harness();
    let t = h.login("alice").await;
    let (status, body) = h.call("GET", "/v1/profile/snapshot", Some(&t), None).await;
    assert_eq!((status, body["error_code"].as_str()), (StatusCode::NOT_IMPLEMENTED, Some("NotImplemented")));
    let (status, body) = h.call("GET", "/v1/nope", Some(&t), None).await;
    assert_eq!((status, body["error_code"].as_str()), (StatusCode::NOT_FOUND, Some("NotFound")));
}
