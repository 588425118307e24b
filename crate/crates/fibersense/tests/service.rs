//! The pipeline behind its HTTP and WebSocket interfaces.

mod common;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use common::*;
use fibersense::jsonl::read_jsonl_file;
use fibersense::model_io::save_model;
use fibersense::offline::detect_file;
use fibersense::pipeline::{self, RunState, Source};
use fibersense::potd::HEADER_LEN;
use fibersense::PipelineConfig;
use fibersense_core::engine::{EngineConfig, EventKind, EventRecord};
use fibersense_core::sim::{EventClass, FiberLayout};
use futures::StreamExt;
use serde_json::{json, Value};
use tokio_tungstenite::connect_async;

async fn get(addr: SocketAddr, path: &str) -> (u16, Value) {
    let r = reqwest::get(format!("http://{addr}{path}")).await.unwrap();
    (r.status().as_u16(), r.json().await.unwrap())
}

async fn post(addr: SocketAddr, path: &str, body: &str) -> (u16, Value) {
    let r = reqwest::Client::new()
        .post(format!("http://{addr}{path}"))
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .unwrap();
    (r.status().as_u16(), r.json().await.unwrap())
}

fn records(v: &Value) -> Vec<EventRecord> {
    serde_json::from_value(v["data"].clone()).unwrap()
}

async fn wait_for_sim_time(addr: SocketAddr, t_s: f64) {
    loop {
        let (_, v) = get(addr, "/api/status").await;
        if v["data"]["t_s"].as_f64().unwrap() >= t_s {
            return;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

fn expect_error(status: u16, v: &Value, want_status: u16, kind: &str) {
    assert_eq!(status, want_status, "{v}");
    assert_eq!(v["ok"], false);
    assert_eq!(v["error"]["kind"], kind, "{v}");
    assert!(v.get("data").is_none());
}

#[tokio::test(flavor = "multi_thread")]
async fn live_http_contract() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let cfg = PipelineConfig { event_log_path: Some(log.clone()), ..PipelineConfig::default() };
    let handle = pipeline::start(cfg.clone(), Source::Live).unwrap();
    let addr = spawn_server(handle.shared().clone()).await;

    let (s, v) = get(addr, "/api/events?since=0").await;
    assert_eq!(s, 200);
    assert_eq!(v, json!({"ok": true, "data": []}));
    let (_, v) = get(addr, "/api/config").await;
    assert_eq!(v["data"], serde_json::to_value(&cfg).unwrap());
    assert_eq!(v["data"]["engine"]["detector"]["warmup_blocks"], 50);
    let (_, v) = get(addr, "/api/status").await;
    assert_eq!(v["data"]["mode"], "live");
    assert_eq!(v["data"]["state"], "running");

    let (s, v) = get(addr, "/api/events?since=soon").await;
    expect_error(s, &v, 400, "validation");
    let (s, v) = get(addr, "/api/events?id=1.5").await;
    expect_error(s, &v, 400, "validation");
    let (s, v) = post(addr, "/api/control/car", r#"{"command": "start", "speed_mps": 99}"#).await;
    expect_error(s, &v, 400, "validation");
    assert!(v["error"]["message"].as_str().unwrap().contains("99"));
    let (s, v) = post(addr, "/api/control/fan", "{").await;
    expect_error(s, &v, 400, "validation");
    let (s, v) = post(addr, "/api/control/audio", r#"{"signal": "siren", "on": true}"#).await;
    expect_error(s, &v, 400, "validation");
    let (s, v) = get(addr, "/api/nowhere").await;
    expect_error(s, &v, 404, "not_found");

    wait_for_sim_time(addr, 6.0).await;
    let (s, v) = post(addr, "/api/control/fan", r#"{"on": true}"#).await;
    assert_eq!(s, 200, "{v}");
    let applied = v["data"]["applied_t_s"].as_f64().unwrap();
    let acked = Instant::now();
    let created = loop {
        let (_, v) = get(addr, "/api/events").await;
        let hit =
            records(&v).into_iter().find(|r| r.event == EventKind::Created && (550.0..700.0).contains(&r.centroid_m));
        if let Some(r) = hit {
            break r;
        }
        assert!(acked.elapsed() < Duration::from_secs(5), "no wind event");
        tokio::time::sleep(Duration::from_millis(50)).await;
    };
    assert!(created.t_s >= applied && created.t_s - applied <= 2.0, "applied {applied}, created {}", created.t_s);

    let (s, v) = post(addr, "/api/control/car", r#"{"command": "start", "speed_mps": 2}"#).await;
    assert_eq!(s, 200, "{v}");
    assert!(v["data"]["applied_t_s"].as_f64().unwrap() >= applied);
    wait_for_sim_time(addr, created.t_s + 3.0).await;

    // filters agree with a direct scan of the full log
    let (_, v) = get(addr, "/api/events").await;
    let all = records(&v);
    assert!(all.windows(2).all(|w| w[0].t_s <= w[1].t_s));
    let mid = all[all.len() / 2].t_s;
    let (_, v) = get(addr, &format!("/api/events?since={mid}")).await;
    let want: Vec<EventRecord> = all.iter().filter(|r| r.t_s >= mid).cloned().collect();
    assert_eq!(records(&v), want);
    let (_, v) = get(addr, &format!("/api/events?id={}", created.id)).await;
    let mine = records(&v);
    assert_eq!(mine[0], created);
    assert!(mine.iter().all(|r| r.id == created.id));

    handle.stop();
    let status = tokio::task::spawn_blocking(move || {
        let shared = handle.shared().clone();
        (handle.join(), shared.records())
    })
    .await
    .unwrap();
    let (status, stored) = status;
    assert_eq!(status.state, RunState::Finished);
    let logged: Vec<EventRecord> = read_jsonl_file(&log).unwrap();
    assert_eq!(logged, stored);
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_mode_rejects_controls_and_reports_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("short.potd");
    record_scenario(&fibersense_core::sim::ScenarioScript::new(2.0, 4), &rec);
    let full = std::fs::metadata(&rec).unwrap().len();
    assert_eq!(full, HEADER_LEN + 2000 * 1000 * 4);

    let cfg = PipelineConfig { replay_path: Some(rec.clone()), replay_speed: 0.0, ..PipelineConfig::default() };
    let handle = pipeline::start(cfg.clone(), Source::from_config(&cfg)).unwrap();
    let addr = spawn_server(handle.shared().clone()).await;
    let (s, v) = post(addr, "/api/control/fan", r#"{"on": true}"#).await;
    expect_error(s, &v, 409, "mode");
    let (s, v) = post(addr, "/api/control/fan", r#"{"on": "yes"}"#).await;
    expect_error(s, &v, 400, "validation");
    let status = tokio::task::spawn_blocking(move || handle.join()).await.unwrap();
    assert_eq!(status.state, RunState::Finished);
    assert_eq!(status.blocks_processed, 20);

    // half a trace short
    let f = std::fs::OpenOptions::new().write(true).open(&rec).unwrap();
    f.set_len(full - 2000).unwrap();
    let handle = pipeline::start(cfg, Source::Replay { path: rec, speed: 0.0 }).unwrap();
    let status = tokio::task::spawn_blocking(move || handle.join()).await.unwrap();
    assert_eq!(status.state, RunState::Failed);
    assert_eq!(status.blocks_processed, 19);
    let offset = HEADER_LEN + 1999 * 4000;
    let err = status.error.unwrap();
    assert!(err.contains(&format!("at byte {offset}")), "{err}");
}

#[tokio::test(flavor = "multi_thread")]
async fn live_recording_replays_to_the_same_log() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&model_path, &train_model([100, 101])).unwrap();
    let rec = dir.path().join("live.potd");
    let cfg = PipelineConfig {
        model_path: Some(model_path.clone()),
        record_path: Some(rec.clone()),
        event_log_path: Some(dir.path().join("live.jsonl")),
        ..PipelineConfig::default()
    };
    let handle = pipeline::start(cfg.clone(), Source::Live).unwrap();
    let addr = spawn_server(handle.shared().clone()).await;
    wait_for_sim_time(addr, 5.5).await;
    for (path, body) in [("audio", r#"{"signal": "chirp", "on": true}"#), ("fan", r#"{"on": true}"#)] {
        let (s, v) = post(addr, &format!("/api/control/{path}"), body).await;
        assert_eq!(s, 200, "{v}");
    }
    wait_for_sim_time(addr, 9.0).await;
    let (s, _) = post(addr, "/api/control/audio", r#"{"signal": "chirp", "on": false}"#).await;
    assert_eq!(s, 200);
    wait_for_sim_time(addr, 11.5).await;
    handle.stop();
    let (status, live) = tokio::task::spawn_blocking(move || {
        let shared = handle.shared().clone();
        (handle.join(), shared.records())
    })
    .await
    .unwrap();
    assert_eq!(status.state, RunState::Finished);
    assert!(live.iter().any(|r| r.event == EventKind::Classified));
    assert!(live.iter().any(|r| r.event == EventKind::Ended));
    let traces = status.blocks_processed * 100;
    assert_eq!(std::fs::metadata(&rec).unwrap().len(), HEADER_LEN + traces * 1000 * 4);

    let model = fibersense::model_io::load_model(&model_path).unwrap();
    let offline = detect_file(&rec, &FiberLayout::default(), EngineConfig::default(), Some(model), 100).unwrap();
    assert_eq!(offline, live);

    let replay_cfg = PipelineConfig { model_path: Some(model_path), ..PipelineConfig::default() };
    let replay = pipeline::start(replay_cfg, Source::Replay { path: rec, speed: 0.0 }).unwrap();
    let replayed = tokio::task::spawn_blocking(move || {
        let shared = replay.shared().clone();
        replay.join();
        shared.records()
    })
    .await
    .unwrap();
    assert_eq!(replayed, live);
}

#[test]
fn scripted_three_source_run_labels_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&model_path, &train_model([200, 201, 202])).unwrap();
    let rec = dir.path().join("scripted.potd");
    let script = three_sources(7, 40.0, 6.0, 30.0);
    let spans = script.label_spans(&FiberLayout::default());
    let cfg = PipelineConfig {
        model_path: Some(model_path.clone()),
        record_path: Some(rec.clone()),
        ..PipelineConfig::default()
    };
    let handle = pipeline::start(cfg.clone(), Source::Scenario { script, speed: 0.0 }).unwrap();
    let shared = handle.shared().clone();
    assert_eq!(handle.join().state, RunState::Finished);
    let log = shared.records();

    let count = |k: EventKind| log.iter().filter(|r| r.event == k).count();
    assert_eq!(count(EventKind::Created), 3);
    assert_eq!(count(EventKind::Ended), 3);
    let mut last: BTreeMap<u64, &EventRecord> = BTreeMap::new();
    for r in &log {
        last.insert(r.id, r);
    }
    for r in last.values() {
        let created = log.iter().find(|c| c.id == r.id && c.event == EventKind::Created).unwrap();
        let truth = spans
            .iter()
            .find(|s| created.centroid_m >= s.x_start_m && created.centroid_m < s.x_end_m)
            .expect("event inside a labeled zone");
        assert_eq!(r.event, EventKind::Ended);
        assert_eq!(r.class.as_deref(), Some(truth.class.as_str()), "event {}", r.id);
    }
    assert!(spans.iter().any(|s| s.class == EventClass::Vehicle));

    let clash = pipeline::start(cfg.clone(), Source::Replay { path: rec.clone(), speed: 0.0 });
    assert!(matches!(clash, Err(pipeline::StartError::Config(_))));
    let cfg = PipelineConfig { record_path: None, ..cfg };
    let replay = pipeline::start(cfg, Source::Replay { path: rec, speed: 0.0 }).unwrap();
    let replayed = replay.shared().clone();
    replay.join();
    assert_eq!(replayed.records(), log);
}

#[derive(Default)]
struct Session {
    snapshot: Value,
    events: Vec<Value>,
    tiles: usize,
    end: Option<Value>,
}

impl Session {
    fn records(&self) -> Vec<EventRecord> {
        self.events.iter().map(|e| serde_json::from_value(e.clone()).unwrap()).collect()
    }
}

/// Reads one stream connection until the server ends it or `deadline`
/// passes, optionally not reading at all for `stall` after the snapshot.
async fn read_stream(addr: SocketAddr, stall: Option<Duration>, deadline: Option<Instant>) -> Session {
    let (mut ws, _) = connect_async(format!("ws://{addr}/api/stream")).await.unwrap();
    let mut s = Session::default();
    let text = |m: tokio_tungstenite::tungstenite::Message| -> Option<Value> {
        m.is_text().then(|| serde_json::from_str(m.to_text().unwrap()).unwrap())
    };
    s.snapshot = text(ws.next().await.unwrap().unwrap()).unwrap();
    if let Some(d) = stall {
        tokio::time::sleep(d).await;
    }
    loop {
        let next = match deadline {
            Some(d) => match tokio::time::timeout_at(d.into(), ws.next()).await {
                Ok(m) => m,
                Err(_) => return s,
            },
            None => ws.next().await,
        };
        let Some(Ok(msg)) = next else { return s };
        let Some(v) = text(msg) else { continue };
        match v["type"].as_str().unwrap() {
            "tile" => {
                let n = v["values"].as_array().unwrap().len();
                assert_eq!(n as u64, v["rows"].as_u64().unwrap() * v["cols"].as_u64().unwrap());
                assert!(v["values"].as_array().unwrap().iter().all(|x| x.as_f64().unwrap().abs() <= 40.0));
                s.tiles += 1;
            }
            "event" => s.events.push(v),
            "end" | "overflow" => {
                s.end = Some(v);
                return s;
            }
            other => panic!("unexpected message type {other}"),
        }
    }
}

fn assert_seq_continuous(s: &Session) {
    for (i, e) in s.events.iter().enumerate() {
        assert_eq!(e["seq"].as_u64().unwrap(), i as u64 + 1);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn stream_fans_out_without_losing_events() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&model_path, &train_model([300, 301])).unwrap();
    let cfg = PipelineConfig { model_path: Some(model_path), ..PipelineConfig::default() };
    let script = three_sources(11, 24.0, 6.0, 18.0);
    let handle = pipeline::start(cfg.clone(), Source::Scenario { script, speed: 1.0 }).unwrap();
    let shared = handle.shared().clone();
    let addr = spawn_server(shared.clone()).await;

    let a = tokio::spawn(read_stream(addr, None, None));
    let b = tokio::spawn(read_stream(addr, None, None));
    let stalled = tokio::spawn(read_stream(addr, Some(Duration::from_secs(10)), None));
    tokio::time::sleep(Duration::from_secs(12)).await;
    let late = tokio::spawn(read_stream(addr, None, None));
    let (a, b, stalled, late) = (a.await.unwrap(), b.await.unwrap(), stalled.await.unwrap(), late.await.unwrap());
    tokio::task::spawn_blocking(move || handle.join()).await.unwrap();
    let log = shared.records();

    for s in [&a, &b, &stalled, &late] {
        assert_eq!(s.snapshot["type"], "snapshot");
        assert_eq!(s.snapshot["config"], serde_json::to_value(&cfg).unwrap());
        assert_eq!(s.end.as_ref().unwrap()["type"], "end");
        assert_seq_continuous(s);
    }
    assert_eq!(a.snapshot["events"], json!([]));
    assert_eq!(a.records(), log);
    assert_eq!(b.events, a.events);
    assert_eq!(stalled.events, a.events);
    assert!(a.tiles >= 235, "{} tiles", a.tiles);
    assert!(stalled.tiles < a.tiles);

    // a late joiner sees the live events, then a suffix of the log
    let live: Vec<EventRecord> = serde_json::from_value(late.snapshot["events"].clone()).unwrap();
    assert_eq!(live.len(), 3);
    let suffix = late.records();
    assert!(!suffix.is_empty());
    assert_eq!(&log[log.len() - suffix.len()..], &suffix[..]);
    let cut = log.len() - suffix.len();
    for e in &live {
        let latest = log[..cut].iter().rev().find(|r| r.id == e.id).unwrap();
        assert_eq!(latest, e);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn quiescent_minute_streams_tiles_and_no_events() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&model_path, &train_model([400, 401])).unwrap();
    let cfg = PipelineConfig { model_path: Some(model_path), seed: 42, ..PipelineConfig::default() };
    let handle = pipeline::start(cfg, Source::Live).unwrap();
    let shared = handle.shared().clone();
    let addr = spawn_server(shared.clone()).await;
    let session = read_stream(addr, None, Some(Instant::now() + Duration::from_secs(60))).await;
    handle.stop();
    let status = tokio::task::spawn_blocking(move || handle.join()).await.unwrap();
    assert!(session.tiles >= 590, "{} tiles in 60 s", session.tiles);
    assert!(session.events.is_empty());
    assert!(shared.records().iter().all(|r| r.event != EventKind::Classified));
    assert!(status.classifying);
    assert!(status.latency_p95_ms.unwrap() < 400.0);
}
