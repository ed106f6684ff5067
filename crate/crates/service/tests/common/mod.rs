//! Shared harness for the HTTP tests: an in-process router driven with
//! `tower::ServiceExt::oneshot`, plus a model of the session phase machine
//! that random call sequences are checked against.

#![allow(dead_code)]

use std::cell::{Cell, RefCell};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::http::{HeaderMap, Method, Request};
use axum::Router;
use covillm_core::localization::{LocalizationParams, Roi};
use covillm_core::planner::PlannerBackend;
use covillm_core::{CameraIntrinsics, DepthFrame};
use covillm_service::{router, AppState, Phase, ServiceConfig, Store};
use http_body_util::BodyExt;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use serde_json::Value;
use tower::ServiceExt;

pub struct Harness {
    pub config: ServiceConfig,
    backend: Result<Arc<dyn PlannerBackend>, String>,
    router: Router,
}

impl Harness {
    pub fn new(config: ServiceConfig, backend: Result<Arc<dyn PlannerBackend>, String>) -> Self {
        let router = build(&config, &backend);
        Self {
            config,
            backend,
            router,
        }
    }

    /// Default 640x480 workbench storing under `dir`, no llm backend.
    pub fn standard(dir: &Path) -> Self {
        let config = ServiceConfig {
            data_dir: dir.to_path_buf(),
            ..ServiceConfig::default()
        };
        Self::new(config, Err("no backend in tests".into()))
    }

    /// Simulates a process restart: all in-memory state is dropped and the
    /// new router only knows what is on disk.
    pub fn reload(&mut self) {
        self.router = build(&self.config, &self.backend);
    }

    pub async fn raw(
        &self,
        method: Method,
        uri: &str,
        headers: &[(&str, &str)],
        body: Vec<u8>,
    ) -> (u16, HeaderMap, Bytes) {
        let mut req = Request::builder().method(method).uri(uri);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let resp = self
            .router
            .clone()
            .oneshot(req.body(Body::from(body)).unwrap())
            .await
            .unwrap();
        let status = resp.status().as_u16();
        let headers = resp.headers().clone();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, headers, bytes)
    }

    pub async fn call(
        &self,
        method: Method,
        uri: &str,
        content_type: Option<&str>,
        body: Vec<u8>,
    ) -> (u16, Value) {
        let headers: Vec<(&str, &str)> = content_type
            .map(|c| ("content-type", c))
            .into_iter()
            .collect();
        let (status, _, bytes) = self.raw(method, uri, &headers, body).await;
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or(Value::Null)
        };
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> (u16, Value) {
        self.call(Method::GET, uri, None, Vec::new()).await
    }

    pub async fn post_json(&self, uri: &str, body: &Value) -> (u16, Value) {
        self.call(
            Method::POST,
            uri,
            Some("application/json"),
            serde_json::to_vec(body).unwrap(),
        )
        .await
    }

    pub async fn post_text(&self, uri: &str, text: &str) -> (u16, Value) {
        self.call(
            Method::POST,
            uri,
            Some("text/plain"),
            text.as_bytes().to_vec(),
        )
        .await
    }

    pub async fn post_empty(&self, uri: &str) -> (u16, Value) {
        self.call(Method::POST, uri, None, Vec::new()).await
    }

    pub async fn upload(&self, frame: &DepthFrame) -> (u16, Value) {
        self.call(
            Method::POST,
            "/v1/sessions",
            Some("application/octet-stream"),
            frame.to_bytes().unwrap(),
        )
        .await
    }

    /// Collects a finished event stream into `(event name, id, data)` triples.
    pub async fn sse(
        &self,
        uri: &str,
        last_event_id: Option<usize>,
    ) -> (u16, Vec<(String, Option<usize>, Value)>) {
        let id = last_event_id.map(|i| i.to_string());
        let headers: Vec<(&str, &str)> = id
            .as_deref()
            .map(|i| ("last-event-id", i))
            .into_iter()
            .collect();
        let (status, _, bytes) = self.raw(Method::GET, uri, &headers, Vec::new()).await;
        (status, parse_sse(&String::from_utf8_lossy(&bytes)))
    }
}

fn build(config: &ServiceConfig, backend: &Result<Arc<dyn PlannerBackend>, String>) -> Router {
    let store = Store::open(&config.data_dir).unwrap();
    router(AppState::new(
        config.workbench().unwrap(),
        store,
        backend.clone(),
    ))
}

pub fn parse_sse(text: &str) -> Vec<(String, Option<usize>, Value)> {
    text.split("\n\n")
        .filter_map(|block| {
            let (mut name, mut id, mut data) = (None, None, None);
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    name = Some(v.trim().to_string());
                } else if let Some(v) = line.strip_prefix("id:") {
                    id = v.trim().parse().ok();
                } else if let Some(v) = line.strip_prefix("data:") {
                    data = serde_json::from_str(v.trim()).ok();
                }
            }
            Some((name?, id, data?))
        })
        .collect()
}

/// An 80x60 camera with the same field of view as the default one, for
/// tests that make thousands of calls.
pub fn small_config(dir: PathBuf) -> ServiceConfig {
    let camera = CameraIntrinsics::default().scaled(0.125);
    let localization = LocalizationParams {
        area_min_px: 4,
        roi: Roi::with_margin(camera.width, camera.height, 4),
        ..LocalizationParams::for_frame(camera.width, camera.height)
    };
    ServiceConfig {
        data_dir: dir,
        camera: Some(camera),
        localization: Some(localization),
        ..ServiceConfig::default()
    }
}

/// Table at 400 mm with two 8x8 px blocks 20 mm tall, left and right.
pub fn two_block_frame() -> DepthFrame {
    let mut f = DepthFrame::filled(80, 60, 400);
    for (x0, y0) in [(14, 20), (54, 30)] {
        for y in y0..y0 + 8 {
            for x in x0..x0 + 8 {
                f.set(x, y, 380);
            }
        }
    }
    f
}

pub const GOOD_CLASSIFICATION: &str = "small gear: leftmost\nbig gear: rightmost\n";
pub const GARBAGE_CLASSIFICATION: &str = "gear thingy over there\n";
pub const GOOD_INSTRUCTION: &str = "small gear, big gear";
pub const UNBOUND_INSTRUCTION: &str = "big circular_pin";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Localize,
    ClassifyGood,
    ClassifyGarbage,
    PlanGood,
    PlanUnbound,
    Step,
    Get,
}

pub fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => Just(Op::Localize),
        1 => Just(Op::ClassifyGood),
        1 => Just(Op::ClassifyGarbage),
        1 => Just(Op::PlanGood),
        1 => Just(Op::PlanUnbound),
        2 => Just(Op::Step),
        1 => Just(Op::Get),
    ]
}

/// Expected status and phase after `op` in `phase`, for the two-block
/// scene whose good plan has two subtasks.
pub fn model(phase: Phase, op: Op) -> (u16, Phase) {
    use Phase::*;
    match (op, phase) {
        (Op::Localize, Created) => (200, Localized),
        (Op::Localize, p) => (200, p),
        (Op::ClassifyGood, Localized | Classified) => (200, Classified),
        (Op::ClassifyGarbage, Localized | Classified) => (400, phase),
        (Op::PlanGood, Classified | Planned) => (200, Planned),
        (Op::PlanUnbound, Classified | Planned) => (422, phase),
        (Op::Step, Planned) => (200, Executing),
        (Op::Step, Executing) => (200, Done),
        (Op::Get, p) => (200, p),
        (_, p) => (409, p),
    }
}

fn phase_of(v: &Value) -> Phase {
    serde_json::from_value(v["phase"].clone()).unwrap()
}

/// Runs `ops` on a fresh session, reloading the service before the calls
/// whose positions are in `reload_before`. Checks every response against
/// the model and returns the transcript with the session id blanked out.
pub async fn run_sequence(
    h: &mut Harness,
    ops: &[Op],
    reload_before: &[usize],
) -> Result<Vec<(u16, Value)>, String> {
    let (status, created) = h.upload(&two_block_frame()).await;
    if status != 201 {
        return Err(format!("create returned {status}: {created}"));
    }
    let id = created["id"].as_str().unwrap().to_string();
    let base = format!("/v1/sessions/{id}");
    let mut phase = Phase::Created;
    let mut transcript = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        if reload_before.contains(&i) {
            h.reload();
        }
        let (_, before) = h.get(&base).await;
        let (status, body) = match op {
            Op::Localize => h.post_empty(&format!("{base}/localize")).await,
            Op::ClassifyGood => h.post_text(&format!("{base}/classify"), GOOD_CLASSIFICATION).await,
            Op::ClassifyGarbage => h.post_text(&format!("{base}/classify"), GARBAGE_CLASSIFICATION).await,
            Op::PlanGood => {
                h.post_json(&format!("{base}/plan"), &serde_json::json!({"instruction": GOOD_INSTRUCTION, "mode": "deterministic"}))
                    .await
            }
            Op::PlanUnbound => {
                h.post_json(&format!("{base}/plan"), &serde_json::json!({"instruction": UNBOUND_INSTRUCTION, "mode": "deterministic"}))
                    .await
            }
            Op::Step => h.post_empty(&format!("{base}/step")).await,
            Op::Get => h.get(&base).await,
        };
        let (_, after) = h.get(&base).await;
        let (want_status, want_phase) = model(phase, *op);
        let got_phase = phase_of(&after);
        if status != want_status || got_phase != want_phase {
            return Err(format!(
                "step {i} {op:?} in {phase}: got {status}/{got_phase}, want {want_status}/{want_phase}; body {body}"
            ));
        }
        if !phase.may_become(got_phase) {
            return Err(format!(
                "step {i} {op:?}: illegal transition {phase} -> {got_phase}"
            ));
        }
        if status >= 400 && before != after {
            return Err(format!(
                "step {i} {op:?}: rejected call changed the session"
            ));
        }
        if status >= 400 && !(body["code"].is_string() && body["message"].is_string()) {
            return Err(format!(
                "step {i} {op:?}: error body lacks code/message: {body}"
            ));
        }
        phase = got_phase;
        transcript.push((status, blank_id(body, &id)));
        transcript.push((200, blank_id(after, &id)));
    }
    Ok(transcript)
}

fn blank_id(v: Value, id: &str) -> Value {
    serde_json::from_str(&v.to_string().replace(id, "<id>")).unwrap()
}

/// Runs `cases` random call sequences twice each, once straight through
/// and once with restarts in between, and requires identical transcripts.
/// Returns the number of sequences checked.
pub fn check_phase_machine(cases: u32, dir: &Path) -> Result<u32, String> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let strategy = (
        prop::collection::vec(op_strategy(), 1..16),
        prop::collection::vec(0usize..16, 0..4),
    );
    let straight = RefCell::new(Harness::new(
        small_config(dir.to_path_buf()),
        Err("no backend".into()),
    ));
    let restarted = RefCell::new(Harness::new(
        small_config(dir.to_path_buf()),
        Err("no backend".into()),
    ));
    let checked = Cell::new(0);
    runner
        .run(&strategy, |(ops, reloads)| {
            checked.set(checked.get() + 1);
            let a = rt
                .block_on(run_sequence(&mut straight.borrow_mut(), &ops, &[]))
                .map_err(TestCaseError::fail)?;
            let b = rt
                .block_on(run_sequence(&mut restarted.borrow_mut(), &ops, &reloads))
                .map_err(TestCaseError::fail)?;
            if a != b {
                return Err(TestCaseError::fail(format!(
                    "restart changed behaviour for {ops:?} / {reloads:?}"
                )));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(checked.get())
}
