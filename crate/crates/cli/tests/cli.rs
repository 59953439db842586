use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_freqsched"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = run(dir, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const FAST: [&str; 2] = [
    "--set",
    "train.kinds=[\"ols\",{\"name\":\"gbrt\",\"params\":{\"n_trees\":20}}]",
];

#[test]
fn synth_cardinality_and_determinism() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let out = ok(a.path(), &["synth", "--seed", "5", "--n-apps", "4"]);
    assert!(out.contains("80 records"), "{out}");
    ok(b.path(), &["synth", "--seed", "5", "--n-apps", "4"]);
    for f in ["dataset.csv", "dataset.oracle.json", "device.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let rows = std::fs::read_to_string(a.path().join("dataset.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 4 * 20);
}

#[test]
fn validation_errors_exit_2() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    assert_eq!(code(&run(p, &["synth"])), 2, "missing seed");
    assert_eq!(
        code(&run(
            p,
            &["synth", "--seed", "1", "--device", "/no/such/device.json"]
        )),
        2
    );
    assert_eq!(
        code(&run(p, &["train", "--seed", "1"])),
        2,
        "missing dataset"
    );
    ok(p, &["synth", "--seed", "1", "--n-apps", "4"]);
    let o = run(p, &["train", "--seed", "1", "--kinds", "svr"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("svr"));
    assert_eq!(
        code(&run(
            p,
            &["train", "--seed", "1", "--set", "train.test_fraction=1.5"]
        )),
        2
    );
    assert_eq!(
        code(&run(p, &["simulate", "--seed", "1", "--set", "bogus=1"])),
        2
    );
    let o = run(p, &["simulate", "--seed", "1"]);
    assert_eq!(code(&o), 2);
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("knowledge base"),
        "names the missing piece"
    );
    assert_eq!(
        code(&run(p, &["serve", "--seed", "1"])),
        2,
        "missing model file"
    );
    assert_eq!(code(&bin().arg("frobnicate").output().unwrap()), 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("run.json");
    std::fs::write(&cfg, r#"{"seed": 3, "synth": {"n_apps": 3}}"#).unwrap();
    let out = ok(d.path(), &["synth", "--config", cfg.to_str().unwrap()]);
    assert!(out.contains("60 records"), "{out}");
    let out = ok(
        d.path(),
        &["synth", "--config", cfg.to_str().unwrap(), "--n-apps", "2"],
    );
    assert!(out.contains("40 records"), "{out}");
    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(
        code(&run(
            d.path(),
            &["synth", "--config", cfg.to_str().unwrap()]
        )),
        2
    );
}

#[test]
fn unwritable_output_fails() {
    let d = TempDir::new().unwrap();
    let file = d.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let o = run(&file.join("sub"), &["synth", "--seed", "1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn train_is_byte_deterministic_and_simulate_reports() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [a.path(), b.path()] {
        ok(d, &["synth", "--seed", "9", "--n-apps", "6"]);
        let mut args = vec!["train", "--seed", "9"];
        args.extend(FAST);
        let out = ok(d, &args);
        assert!(out.contains("gbrt") && out.contains("rel_rmse"), "{out}");
    }
    for f in [
        "energy-gbrt.json",
        "time-gbrt.json",
        "energy-ols.json",
        "kb.json",
    ] {
        let x = std::fs::read(a.path().join("models").join(f)).unwrap();
        assert_eq!(
            x,
            std::fs::read(b.path().join("models").join(f)).unwrap(),
            "{f}"
        );
    }
    let out = ok(a.path(), &["evaluate", "--seed", "9", FAST[0], FAST[1]]);
    assert!(out.contains("cv_rel_rmse"), "{out}");

    let out = ok(a.path(), &["simulate", "--seed", "9", "--n-jobs", "30"]);
    for p in ["data-driven", "default-clock", "max-clock"] {
        assert!(out.contains(p));
        assert!(a.path().join("sim").join(format!("{p}.csv")).exists());
    }
    let cmp: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(a.path().join("sim/comparison.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(cmp["savings_pct"]["data-driven"]["data-driven"], 0.0);
    assert_eq!(cmp["aggregates"]["max-clock"]["n_jobs"], 30);
    let csv = std::fs::read_to_string(a.path().join("sim/data-driven.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 30 + 1);
    assert!(csv.lines().last().unwrap().starts_with("TOTAL,"));

    let out = ok(
        a.path(),
        &[
            "simulate",
            "--seed",
            "9",
            "--n-jobs",
            "10",
            "--policies",
            "data-driven,data-driven",
            "--set",
            "simulate.predictor=oracle",
        ],
    );
    assert!(out.contains("predictor oracle"), "{out}");
    assert_eq!(
        code(&run(
            a.path(),
            &["simulate", "--seed", "9", "--policies", "min-clock"]
        )),
        2
    );
}

fn start_server(dir: &Path, addr: &str) -> (std::process::Child, String) {
    let mut child = bin()
        .args(["serve", "--model-kind", "ols", "--addr", addr, "--out"])
        .arg(dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .expect("bind line")
        .to_string();
    (child, url)
}

#[cfg(unix)]
#[test]
fn serve_health_and_interrupt() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["synth", "--seed", "2", "--n-apps", "4"]);
    ok(d.path(), &["train", "--seed", "2", "--kinds", "ols"]);
    let (mut child, url) = start_server(d.path(), "127.0.0.1:0");

    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap();
    let status = rt.block_on(async {
        reqwest::get(format!("{url}/v1/health"))
            .await
            .unwrap()
            .status()
    });
    assert_eq!(status, 200);

    let port = url.rsplit(':').next().unwrap();
    let o = run(
        d.path(),
        &[
            "serve",
            "--model-kind",
            "ols",
            "--addr",
            &format!("127.0.0.1:{port}"),
        ],
    );
    assert_eq!(code(&o), 1, "port in use");

    let killed = Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(killed.success());
    assert_eq!(child.wait().unwrap().code(), Some(0));
}
