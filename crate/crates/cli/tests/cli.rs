//! End-to-end tests of the `ttcd` binary: artifact contracts, exit
//! codes, config handling, and run-to-run determinism.

use std::path::Path;
use std::process::{Command, Output};

fn ttcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttcd"))
        .args(args)
        .env_remove("TTCD_SEED")
        .output()
        .expect("binary runs")
}

fn ttcd_in(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ttcd"));
    cmd.current_dir(dir).args(args).env_remove("TTCD_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

/// Small-but-trainable flag set so discover finishes in seconds.
const FAST: &[&str] = &[
    "--epochs", "20",
    "--max-rounds", "2",
    "--warmup-epochs", "10",
    "--d-e", "4",
    "--hidden-channels", "2",
];

#[test]
fn generate_writes_data_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = ttcd_in(
        dir.path(),
        &["generate", "--dataset", "ds1", "--length", "200", "--seed", "42"],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(data.lines().count(), 201); // header + 200 rows
    assert_eq!(data.lines().next().unwrap(), "X1,X2,X3,X4");
    let truth =
        ttcd_core::data::TemporalGraph::load_json(&dir.path().join("truth.json")).unwrap();
    assert_eq!(truth.edge_count(), 9);
}

#[test]
fn generate_rejects_unknown_dataset() {
    let out = ttcd(&["generate", "--dataset", "ds9"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn evaluate_identity_prints_perfect_score() {
    let dir = tempfile::tempdir().unwrap();
    let g = ttcd_core::synth::truth_graph(ttcd_core::synth::DatasetId::Ds1).unwrap();
    let path = dir.path().join("g.json");
    g.save_json(&path).unwrap();
    let out = ttcd(&["evaluate", "--pred", path.to_str().unwrap(), "--truth", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "shd=0 f1=1 fdr=0");
}

#[test]
fn stationarity_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    ttcd_in(
        dir.path(),
        &["generate", "--dataset", "ds1", "--length", "300", "--seed", "5"],
        &[],
    );
    let out = ttcd_in(dir.path(), &["stationarity", "--input", "data.csv"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("Variable"), "{text}");
    assert!(text.contains("KPSS"), "{text}");
    for name in ["X1", "X2", "X3", "X4"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn discover_writes_four_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ttcd_in(
        dir.path(),
        &["generate", "--dataset", "ds1", "--length", "120", "--seed", "3"],
        &[],
    );
    let mut args = vec![
        "discover", "--input", "data.csv", "--max-lag", "3", "--seed", "7",
        "--threshold", "0.4", "--out-dir", "runA",
    ];
    args.extend_from_slice(FAST);
    let out = ttcd_in(dir.path(), &args, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["graph.json", "graph.dot", "adjacency.csv", "report.json"] {
        assert!(dir.path().join("runA").join(f).exists(), "missing {f}");
    }
    // graph.json parses as a TemporalGraph and embeds the config
    let text = std::fs::read_to_string(dir.path().join("runA/graph.json")).unwrap();
    let g = ttcd_core::data::TemporalGraph::from_json(&text).unwrap();
    assert_eq!(g.max_lag, 3);
    assert!(text.contains("\"config\""));
    assert!(text.contains("\"seed\": 7"));

    // identical flags -> byte-identical graph.json
    let mut args2 = vec![
        "discover", "--input", "data.csv", "--max-lag", "3", "--seed", "7",
        "--threshold", "0.4", "--out-dir", "runB",
    ];
    args2.extend_from_slice(FAST);
    let out2 = ttcd_in(dir.path(), &args2, &[]);
    assert!(out2.status.success());
    let a = std::fs::read(dir.path().join("runA/graph.json")).unwrap();
    let b = std::fs::read(dir.path().join("runB/graph.json")).unwrap();
    assert_eq!(a, b, "graph.json differs between identical runs");

    // adjacency dump has labeled rows
    let adj = std::fs::read_to_string(dir.path().join("runA/adjacency.csv")).unwrap();
    assert!(adj.starts_with("source,X1,X2,X3,X4"));
    assert!(adj.contains("X1_lag3"));
    assert!(adj.contains("X1_lag0"));
    // dot groups nodes and carries the config as comments
    let dot = std::fs::read_to_string(dir.path().join("runA/graph.dot")).unwrap();
    assert!(dot.contains("// seed = 7"));
    assert!(dot.contains("rank=same"));
}

#[test]
fn discover_usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    ttcd_in(
        dir.path(),
        &["generate", "--dataset", "ds1", "--length", "100", "--seed", "1"],
        &[],
    );
    let out = ttcd_in(dir.path(), &["discover", "--input", "data.csv", "--max-lag", "0"], &[]);
    assert_eq!(out.status.code(), Some(64));
    // unknown variant
    let out = ttcd_in(
        dir.path(),
        &["discover", "--input", "data.csv", "--max-lag", "2", "--variant", "bogus"],
        &[],
    );
    assert_eq!(out.status.code(), Some(64));
    // unknown flag is a clap usage error
    let out = ttcd(&["discover", "--nonsense"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn discover_missing_input_exits_74() {
    let out = ttcd(&["discover", "--input", "/nonexistent/data.csv", "--max-lag", "2"]);
    assert_eq!(out.status.code(), Some(74));
}

#[test]
fn config_file_applies_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    ttcd_in(
        dir.path(),
        &["generate", "--dataset", "ds1", "--length", "120", "--seed", "3"],
        &[],
    );
    std::fs::write(
        dir.path().join("run.conf"),
        "max_lag = 3\nseed = 11\nomega = 0.4\nepochs = 15\nmax_rounds = 1\nwarmup_epochs = 5\nd_e = 4\nhidden_channels = 2\n",
    )
    .unwrap();
    let out = ttcd_in(
        dir.path(),
        &["discover", "--input", "data.csv", "--config", "run.conf", "--seed", "12", "--out-dir", "out"],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    assert!(report.contains("\"seed\": 12"), "flag must override file");
    assert!(report.contains("\"omega\": 0.4"));

    // unknown config key -> I/O-style parse error
    std::fs::write(dir.path().join("bad.conf"), "who_knows = 1\n").unwrap();
    let out = ttcd_in(
        dir.path(),
        &["discover", "--input", "data.csv", "--config", "bad.conf"],
        &[],
    );
    assert_eq!(out.status.code(), Some(74));
}

#[test]
fn rerun_from_embedded_config_reproduces_graph() {
    let dir = tempfile::tempdir().unwrap();
    ttcd_in(
        dir.path(),
        &["generate", "--dataset", "ds1", "--length", "120", "--seed", "3"],
        &[],
    );
    let mut args = vec![
        "discover", "--input", "data.csv", "--max-lag", "3", "--seed", "9",
        "--threshold", "0.4", "--out-dir", "orig",
    ];
    args.extend_from_slice(FAST);
    assert!(ttcd_in(dir.path(), &args, &[]).status.success());

    // lift the embedded config out of report.json into a key=value file
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("orig/report.json")).unwrap())
            .unwrap();
    let cfg = report["config"].as_object().unwrap();
    let mut kv = String::new();
    for (k, v) in cfg {
        let v = match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Null => "none".into(),
            other => other.to_string(),
        };
        kv.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(dir.path().join("replay.conf"), kv).unwrap();
    let out = ttcd_in(
        dir.path(),
        &["discover", "--input", "data.csv", "--config", "replay.conf", "--out-dir", "replay"],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(dir.path().join("orig/graph.json")).unwrap();
    let b = std::fs::read(dir.path().join("replay/graph.json")).unwrap();
    assert_eq!(a, b, "embedded config must reproduce the artifact");
}

#[test]
fn ttcd_seed_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let out = ttcd_in(
        dir.path(),
        &["generate", "--dataset", "ds2", "--length", "100"],
        &[("TTCD_SEED", "77")],
    );
    assert!(out.status.success());
    let with_env = std::fs::read(dir.path().join("data.csv")).unwrap();
    let out = ttcd_in(
        dir.path(),
        &["generate", "--dataset", "ds2", "--length", "100", "--seed", "77"],
        &[],
    );
    assert!(out.status.success());
    let with_flag = std::fs::read(dir.path().join("data.csv")).unwrap();
    assert_eq!(with_env, with_flag);
}

#[test]
fn ablate_writes_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ttcd_in(
        dir.path(),
        &[
            "ablate", "--dataset", "ds1", "--variants", "full,no-dsb", "--seeds", "1",
            "--length", "90", "--threshold", "0.4",
            "--epochs", "10", "--max-rounds", "1", "--warmup-epochs", "5",
            "--d-e", "4", "--hidden-channels", "2",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("full"), "{text}");
    assert!(text.contains("no-dsb"), "{text}");
    let table = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(table.starts_with("variant,shd,f1,fdr,seeds"));
    assert_eq!(table.lines().count(), 3);
    assert!(dir.path().join("report-full-seed0.json").exists());
}

#[test]
fn checkpoint_flag_dumps_parameters() {
    let dir = tempfile::tempdir().unwrap();
    ttcd_in(
        dir.path(),
        &["generate", "--dataset", "ds1", "--length", "100", "--seed", "2"],
        &[],
    );
    let mut args = vec![
        "discover", "--input", "data.csv", "--max-lag", "2", "--threshold", "0.4",
        "--checkpoint", "params.json",
    ];
    args.extend_from_slice(FAST);
    let out = ttcd_in(dir.path(), &args, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let params = ttcd_core::checkpoint::load(&dir.path().join("params.json")).unwrap();
    assert!(params.len() > 10);
    assert!(params.get("fl.embed.w").is_some());
}
