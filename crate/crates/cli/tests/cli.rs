use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;

fn covillm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covillm"))
        .args(args)
        .env_remove("COVILLM_API_KEY")
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn covillm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen_scene(dir: &Path, level: u8, product: u8, seed: u64) -> Output {
    covillm(&[
        "--seed",
        &seed.to_string(),
        "--json",
        "gen-scene",
        "--level",
        &level.to_string(),
        "--product",
        &product.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn gen_scene_writes_the_bundle_with_the_products_components() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gen_scene(tmp.path(), 1, 2, 7);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let mut labels: Vec<_> = summary["components"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    labels.sort();
    assert_eq!(labels, ["medium rectangular_pin", "small gear"]);
    for f in [
        "scene.json",
        "frame.cvlm",
        "frame.pgm",
        "classification.txt",
        "instruction.txt",
    ] {
        assert!(tmp.path().join(f).is_file(), "{f} missing");
    }

    let big = tempfile::tempdir().unwrap();
    let out = gen_scene(big.path(), 3, 3, 7);
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["components"].as_array().unwrap().len(), 4);
}

#[test]
fn gen_scene_is_deterministic_in_the_seed() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    gen_scene(a.path(), 2, 1, 11);
    gen_scene(b.path(), 2, 1, 11);
    gen_scene(c.path(), 2, 1, 12);
    for f in ["scene.json", "frame.cvlm", "classification.txt"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        std::fs::read(a.path().join("frame.cvlm")).unwrap(),
        std::fs::read(c.path().join("frame.cvlm")).unwrap()
    );
}

#[test]
fn gen_scene_rejects_out_of_range_indices_as_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for (level, product) in [(0, 1), (4, 1), (1, 0), (2, 4)] {
        let out = gen_scene(tmp.path(), level, product, 0);
        assert_eq!(
            out.status.code(),
            Some(2),
            "level {level} product {product}"
        );
    }
}

#[test]
fn run_executes_a_generated_bundle_to_completion() {
    let tmp = tempfile::tempdir().unwrap();
    gen_scene(tmp.path(), 1, 1, 3);
    let d = |f: &str| tmp.path().join(f).to_str().unwrap().to_string();
    let events = d("events.jsonl");
    // The frame is regenerated from scene.json with the same seed.
    let out = covillm(&[
        "--seed",
        "3",
        "run",
        "--scene",
        &d("scene.json"),
        "--classification",
        &d("classification.txt"),
        "--instruction-file",
        &d("instruction.txt"),
        "--events",
        &events,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let log = std::fs::read_to_string(&events).unwrap();
    let kinds: Vec<String> = log
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["kind"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(kinds.iter().filter(|k| *k == "place").count(), 2);
    assert_eq!(kinds.len(), 8);
    assert!(stdout(&out).contains(log.lines().last().unwrap()));

    let out = covillm(&[
        "--json",
        "run",
        "--scene",
        &d("frame.cvlm"),
        "--classification",
        &d("classification.txt"),
        "--instruction-file",
        &d("instruction.txt"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["completed"], 2);
    assert_eq!(v["plan"]["subtasks"].as_array().unwrap().len(), 2);
}

#[test]
fn run_reports_stage_failures_with_exit_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    gen_scene(tmp.path(), 1, 1, 3);
    let d = |f: &str| tmp.path().join(f).to_str().unwrap().to_string();
    let empty = d("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let out = covillm(&[
        "run",
        "--scene",
        &d("frame.cvlm"),
        "--classification",
        &empty,
        "--instruction-file",
        &d("instruction.txt"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("unidentified component"),
        "{}",
        stderr(&out)
    );
    assert!(stderr(&out).contains("planning"), "{}", stderr(&out));
}

#[test]
fn llm_mode_without_a_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    gen_scene(tmp.path(), 1, 1, 3);
    let d = |f: &str| tmp.path().join(f).to_str().unwrap().to_string();
    // Pointing at a closed port proves no request is attempted: a
    // transport failure would exit 1, not 2.
    let config = d("c.toml");
    std::fs::write(
        &config,
        "[backend]\nbase_url = \"http://127.0.0.1:9/v1\"\nmodel = \"m\"\n",
    )
    .unwrap();
    let out = covillm(&[
        "--config",
        &config,
        "run",
        "--scene",
        &d("frame.cvlm"),
        "--classification",
        &d("classification.txt"),
        "--instruction",
        "small gear, small rectangular pin",
        "--mode",
        "llm",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("COVILLM_API_KEY"));
    let out = covillm(&["eval", "--backend", "live"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_scores_mock_backends() {
    let out = covillm(&["eval", "--backend", "oracle-mock"]);
    assert_eq!(out.status.code(), Some(0));
    let table = stdout(&out);
    assert_eq!(table.matches("3/3").count(), 3, "{table}");

    let out = covillm(&[
        "--json",
        "eval",
        "--backend",
        "garbage-mock",
        "--trials",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let levels = v["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 3);
    for l in levels {
        assert_eq!(l["correct"], 0);
        assert_eq!(l["trials"], 1);
    }
}

#[test]
fn gen_finetune_is_byte_stable_and_valid_jsonl() {
    let tmp = tempfile::tempdir().unwrap();
    let path = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    let run = |seed: &str, count: &str, out: &str| {
        covillm(&[
            "--seed",
            seed,
            "gen-finetune",
            "--count",
            count,
            "--out",
            out,
        ])
    };
    assert_eq!(run("5", "100", &path("a.jsonl")).status.code(), Some(0));
    assert_eq!(run("5", "100", &path("b.jsonl")).status.code(), Some(0));
    let a = std::fs::read_to_string(path("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read_to_string(path("b.jsonl")).unwrap());
    assert_eq!(a.lines().count(), 100);
    for line in a.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["messages"].as_array().unwrap().len(), 3);
    }

    assert_eq!(run("5", "1", &path("one.jsonl")).status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(path("one.jsonl"))
            .unwrap()
            .lines()
            .count(),
        1
    );
    assert_eq!(run("5", "0", &path("zero.jsonl")).status.code(), Some(2));
    let unwritable = run("5", "2", "/nonexistent-dir/x.jsonl");
    assert_eq!(unwritable.status.code(), Some(1));
}

#[test]
fn height_range_covers_the_operating_height_for_the_board_parts() {
    let out = covillm(&["--json", "height-range"]);
    assert_eq!(out.status.code(), Some(0));
    let rows: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rows.len(), 9);
    for r in &rows {
        assert_eq!(r["contains_operating_height"], true, "{r}");
    }

    // A smaller blob threshold can only widen the interval.
    let out = covillm(&["--json", "height-range", "--area-min", "30"]);
    let relaxed: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    for (strict, loose) in rows.iter().zip(&relaxed) {
        assert!(loose["z_lo_mm"].as_f64().unwrap() <= strict["z_lo_mm"].as_f64().unwrap());
        assert!(loose["z_hi_mm"].as_f64().unwrap() >= strict["z_hi_mm"].as_f64().unwrap());
    }
}

#[test]
fn height_range_prints_empty_for_parts_too_flat_to_segment() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"[{"category":"washer","height_mm":5,"min_extent_mm":20,"max_extent_mm":30}]"#,
    )
    .unwrap();
    let out = covillm(&["height-range", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let table = stdout(&out);
    let row = table.lines().find(|l| l.starts_with("washer")).unwrap();
    assert!(row.contains("empty"), "{table}");
    assert!(row.contains("excludes 400 mm"));
}

#[test]
fn bad_config_reports_its_location_and_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, "listen = \"127.0.0.1:0\"\nbogus_key = 1\n").unwrap();
    let out = covillm(&["--config", config.to_str().unwrap(), "serve"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("bogus_key"), "{err}");
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn health(port: u16) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(2))).ok()?;
    s.write_all(b"GET /v1/health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_answers_health_refuses_a_second_instance_and_stops_on_sigint() {
    let tmp = tempfile::tempdir().unwrap();
    let port = free_port();
    let config = tmp.path().join("svc.toml");
    std::fs::write(
        &config,
        format!("listen = \"127.0.0.1:{port}\"\ndata_dir = \"data\"\n"),
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_covillm"))
        .args(["--config", config.to_str().unwrap(), "serve"])
        .env_remove("COVILLM_API_KEY")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();

    let deadline = Instant::now() + Duration::from_secs(20);
    let reply = loop {
        if let Some(r) = health(port) {
            break r;
        }
        assert!(Instant::now() < deadline, "service never came up");
        thread::sleep(Duration::from_millis(50));
    };
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(
        tmp.path().join("data").is_dir(),
        "data_dir resolves next to the config file"
    );

    let started = Instant::now();
    let second = covillm(&["--config", config.to_str().unwrap(), "serve"]);
    assert_ne!(second.status.code(), Some(0));
    assert!(
        stderr(&second).contains(&port.to_string()),
        "{}",
        stderr(&second)
    );
    assert!(started.elapsed() < Duration::from_secs(10));

    Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    let status = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s;
        }
        if Instant::now() > deadline {
            child.kill().unwrap();
            panic!("service ignored SIGINT");
        }
        thread::sleep(Duration::from_millis(50));
    };
    assert!(status.success(), "{status:?}");
}
