use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::Engine as _;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use ecs_core::{
    compute_run, detect_outliers, generate_point_cloud, ClusterSpec, Dataset, EcsConfig, Matrix,
    OutlierRule, PointCloudSpec, RecordMeta,
};
use ecs_service::{load_embedding, router, Session};

fn cloud() -> Dataset {
    let spec = PointCloudSpec {
        clusters: vec![
            ClusterSpec { center: vec![0.0, 0.0], stddev: 1.0, count: 60, label: 0 },
            ClusterSpec { center: vec![2.0, 0.0], stddev: 1.0, count: 40, label: 1 },
        ],
        seed: 11,
    };
    generate_point_cloud(&spec).unwrap()
}

fn app() -> Router {
    let ds = cloud();
    let run = compute_run(&ds, &EcsConfig { k_max: 30, ..EcsConfig::default() }).unwrap();
    router(Some(Session::new(run, ds, None).unwrap()), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

#[tokio::test]
async fn run_summary() {
    let (s, v) = call_json(&app(), "GET", "/api/run", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["n"], 100);
    assert_eq!(v["k_max"], 30);
    assert_eq!(v["d_in"], 2);
    assert_eq!(v["has_scatter"], true);
    assert_eq!(v["delta_in"]["mode"], "relative");
    assert!(v["resolved"]["delta_in_abs"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn no_run_loaded_is_404() {
    let app = router(None, None);
    let (s, v) = call_json(&app, "GET", "/api/run", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].is_string());
    let (s, _) = call(&app, "GET", "/api/grid?set=EE", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn grid_columns_sum_to_n() {
    let app = app();
    let (s, v) = call_json(&app, "GET", "/api/grid?set=EU&k=20", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["gamma"], 0.4);
    assert_eq!(v["set"], "EU");
    let cols = v["counts"].as_array().unwrap();
    assert_eq!(cols.len(), 20);
    for (i, c) in cols.iter().enumerate() {
        let c = c.as_array().unwrap();
        assert_eq!(c.len(), 21);
        let total: u64 = c.iter().map(|x| x.as_u64().unwrap()).sum();
        assert_eq!(total, 100, "column k = {}", i + 1);
        // F(k) <= k
        assert!(c[i + 2..].iter().all(|x| x.as_u64() == Some(0)));
    }
    let (_, v) = call_json(&app, "GET", "/api/grid?set=ee&gamma=1", None).await;
    assert_eq!(v["gamma"], 1.0);
    assert_eq!(v["k"], 30);
}

#[tokio::test]
async fn grid_bad_parameters_are_400() {
    let app = app();
    for q in [
        "/api/grid",
        "/api/grid?set=XX",
        "/api/grid?set=EE&k=31",
        "/api/grid?set=EE&k=0",
        "/api/grid?set=EE&k=ten",
        "/api/grid?set=EE&gamma=-1",
        "/api/grid?set=EE&gamma=abc",
    ] {
        let (s, v) = call_json(&app, "GET", q, None).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{q}");
        assert!(v["error"].is_string(), "{q}");
    }
}

#[tokio::test]
async fn select_ends_in_matches_detect() {
    let app = app();
    let query = json!({"set": "EU", "k_lo": 20, "k_hi": 20, "v_lo": 6, "v_hi": 20, "mode": "ends_in"});
    let (s, sel) = call_json(&app, "POST", "/api/select", Some(&query.to_string())).await;
    assert_eq!(s, StatusCode::OK);
    let rule = json!({"detector": "outliers", "window": 20, "min_eu": 6});
    let (s, rep) = call_json(&app, "POST", "/api/detect", Some(&rule.to_string())).await;
    assert_eq!(s, StatusCode::OK);
    let mut detected: Vec<u64> = rep["findings"].as_array().unwrap().iter().map(|f| f["id"].as_u64().unwrap()).collect();
    detected.sort_unstable();
    let selected: Vec<u64> = sel["ids"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert!(!selected.is_empty());
    assert_eq!(selected, detected);
    for t in sel["trajectories"].as_array().unwrap() {
        assert_eq!(t["values"].as_array().unwrap().len(), 1);
        assert!(t["values"][0].as_u64().unwrap() >= 6);
    }
}

#[tokio::test]
async fn select_trajectories_cover_the_k_range() {
    let app = app();
    let query = json!({"set": "EE", "k_lo": 3, "k_hi": 10, "v_lo": 0, "v_hi": 10, "mode": "passes_through"});
    let (s, sel) = call_json(&app, "POST", "/api/select", Some(&query.to_string())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(sel["ids"].as_array().unwrap().len(), 100);
    let t = &sel["trajectories"][0];
    assert_eq!(t["values"].as_array().unwrap().len(), 8);
}

#[tokio::test]
async fn select_malformed_is_400() {
    let app = app();
    for body in [
        "{",
        "[]",
        r#"{"set": "EU"}"#,
        r#"{"set": "EU", "k_lo": 5, "k_hi": 2, "v_lo": 0, "v_hi": 1, "mode": "ends_in"}"#,
        r#"{"set": "EU", "k_lo": 1, "k_hi": 40, "v_lo": 0, "v_hi": 1, "mode": "ends_in"}"#,
        r#"{"set": "EU", "k_lo": 1, "k_hi": 2, "v_lo": 0, "v_hi": 1, "mode": "sideways"}"#,
    ] {
        let (s, _) = call(&app, "POST", "/api/select", Some(body)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
    }
}

#[tokio::test]
async fn record_lists_ranked_neighbors() {
    let app = app();
    let (s, v) = call_json(&app, "GET", "/api/record/7", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["id"], 7);
    assert_eq!(v["embedding"], v["input"]);
    let nb = v["neighbors"].as_array().unwrap();
    assert_eq!(nb.len(), 30);
    let d: Vec<f64> = nb.iter().map(|e| e["input_distance"].as_f64().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));
    assert!(nb.iter().all(|e| e["id"] != 7));
    assert_eq!(nb[0]["rank"], 1);
    for e in nb {
        let same = e["output_distance"].as_f64().unwrap() == 0.0;
        let class = e["class"].as_str().unwrap();
        assert_eq!(class.ends_with('E'), same, "{e}");
    }
}

#[tokio::test]
async fn unknown_record_is_404() {
    let app = app();
    for uri in ["/api/record/100", "/api/record/abc", "/api/record/-1"] {
        let (s, _) = call(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn detect_rejects_bad_rules() {
    let app = app();
    for body in [
        r#"{"detector": "outliers", "window": 31, "min_eu": 5}"#,
        r#"{"detector": "outliers", "window": 10, "min_eu": 11}"#,
        r#"{"detector": "groups", "group_size": 10}"#,
        r#"{"detector": "magic"}"#,
        "nope",
    ] {
        let (s, v) = call_json(&app, "POST", "/api/detect", Some(body)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn detect_equals_library_report() {
    let ds = cloud();
    let run = compute_run(&ds, &EcsConfig { k_max: 30, ..EcsConfig::default() }).unwrap();
    let want = detect_outliers(&run, &OutlierRule { window: 30, min_eu: 10 }).unwrap();
    let app = router(Some(Session::new(run, ds, None).unwrap()), None);
    let (s, body) = call(&app, "POST", "/api/detect", Some(r#"{"detector":"outliers","window":30,"min_eu":10}"#)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, serde_json::to_vec(&want).unwrap());
}

#[tokio::test]
async fn image_records_carry_base64_pixels() {
    let pixels: Vec<Vec<u8>> = (0..5u8).map(|i| vec![i * 10, 255 - i, i, 0]).collect();
    let inputs: Vec<Vec<f64>> = pixels.iter().map(|p| p.iter().map(|&x| f64::from(x)).collect()).collect();
    let outputs: Vec<Vec<f64>> = (0..5).map(|i| vec![f64::from(i % 2)]).collect();
    let meta = pixels
        .iter()
        .map(|p| RecordMeta::Image { width: 2, height: 2, pixels: p.clone() })
        .collect();
    let ds = Dataset::with_meta(
        Matrix::from_rows(&inputs).unwrap(),
        Matrix::from_rows(&outputs).unwrap(),
        Some(meta),
    )
    .unwrap();
    let run = compute_run(&ds, &EcsConfig { k_max: 4, ..EcsConfig::default() }).unwrap();
    let app = router(Some(Session::new(run, ds, None).unwrap()), None);
    let (s, v) = call_json(&app, "GET", "/api/record/3", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["image"]["width"], 2);
    let raw = base64::engine::general_purpose::STANDARD
        .decode(v["image"]["pixels_base64"].as_str().unwrap())
        .unwrap();
    assert_eq!(raw, pixels[3]);
    assert_eq!(v["embedding"], Value::Null);
    let (_, r) = call_json(&app, "GET", "/api/run", None).await;
    assert_eq!(r["has_scatter"], false);
}

#[tokio::test]
async fn embedding_overrides_inputs() {
    let ds = cloud();
    let run = compute_run(&ds, &EcsConfig { k_max: 5, ..EcsConfig::default() }).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    let p = dir.join("emb.csv");
    let mut text = String::from("id,x,y\n");
    for i in (0..100).rev() {
        text.push_str(&format!("{i},{},{}\n", i as f64, -(i as f64)));
    }
    std::fs::write(&p, text).unwrap();
    let emb = load_embedding(&p, 100).unwrap();
    let app = router(Some(Session::new(run, ds, Some(emb)).unwrap()), None);
    let (_, v) = call_json(&app, "GET", "/api/record/42", None).await;
    assert_eq!(v["embedding"], json!([42.0, -42.0]));
}

#[test]
fn embedding_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    let p = dir.join("bad.csv");
    std::fs::write(&p, "0,1,2\n1,1\n").unwrap();
    assert!(load_embedding(&p, 2).is_err());
    std::fs::write(&p, "0,1,2\n0,3,4\n").unwrap();
    assert!(load_embedding(&p, 2).is_err());
    std::fs::write(&p, "0,1,2\n").unwrap();
    assert!(load_embedding(&p, 2).is_err());
    std::fs::write(&p, "0,1,2\n1,x,4\n").unwrap();
    assert!(load_embedding(&p, 2).is_err());
    std::fs::write(&p, "1,1,2\n0,3,4\n").unwrap();
    assert_eq!(load_embedding(&p, 2).unwrap(), vec![[3.0, 4.0], [1.0, 2.0]]);
}

#[test]
fn session_rejects_foreign_dataset() {
    let ds = cloud();
    let run = compute_run(&ds, &EcsConfig { k_max: 5, ..EcsConfig::default() }).unwrap();
    let other = ds.subset(&(0..50).collect::<Vec<_>>()).unwrap();
    assert!(Session::new(run, other, None).is_err());
}

#[tokio::test]
async fn root_serves_index_or_static_dir() {
    let (s, body) = call(&app(), "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("/api/run"));

    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    std::fs::write(dir.join("index.html"), "<p>ui</p>").unwrap();
    std::fs::write(dir.join("app.js"), "console.log(1)").unwrap();
    let ds = cloud();
    let run = compute_run(&ds, &EcsConfig { k_max: 5, ..EcsConfig::default() }).unwrap();
    let app = router(Some(Session::new(run, ds, None).unwrap()), Some(dir.clone()));
    let (s, body) = call(&app, "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"<p>ui</p>");
    let (s, body) = call(&app, "GET", "/app.js", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"console.log(1)");
    let (s, _) = call(&app, "GET", "/api/run", None).await;
    assert_eq!(s, StatusCode::OK);
}
