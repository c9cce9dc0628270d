use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nbiot_core::cli::metrics::MetricsRow;

fn sim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbiot-sim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> Vec<MetricsRow> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn static_eval_writes_one_row_per_tti_and_group() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["--mode", "eval", "--controller", "static", "--seeds", "3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let metrics = rows(&dir.path().join("seed-3/metrics.csv"));
    assert_eq!(metrics.len(), 937 * 3);
    assert!(metrics.iter().all(|r| r.n_rach == 1 && r.f_prea == 12));
    let repe: Vec<u32> = metrics.iter().take(3).map(|r| r.n_repe).collect();
    assert_eq!(repe, [1, 4, 8]);
    let arrivals: u64 = metrics.iter().map(|r| r.arrivals as u64).sum();
    assert_eq!(arrivals, 30_000);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["partial"], false);
    assert_eq!(manifest["completed_episodes"]["3"], 1);
    assert!(dir.path().join("seed-3/summary.csv").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--mode", "eval", "--controller", "le-urc", "--episodes", "2", "--le-repe", "2,8,16"];
    for name in ["a", "b"] {
        assert!(sim(&args, &dir.path().join(name)).status.success());
    }
    let read = |n: &str| fs::read(dir.path().join(n).join("seed-1/metrics.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "n_devices = lots\n").unwrap();
    let out = sim(&["--mode", "eval", "--controller", "static", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_devices"));

    assert_eq!(sim(&["--mode", "train", "--controller", "le-urc"], dir.path()).status.code(), Some(1));
    assert_eq!(sim(&["--mode", "bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(sim(&["--mode", "eval", "--controller", "static", "--le-repe", "3,4,8"], dir.path()).status.code(), Some(1));

    let junk = dir.path().join("junk.bin");
    fs::write(&junk, b"not a checkpoint").unwrap();
    let out = sim(
        &["--mode", "eval", "--controller", "cma-dqn", "--checkpoint", junk.to_str().unwrap()],
        &dir.path().join("run"),
    );
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(sim(&["--mode", "summarize"], &dir.path().join("empty")).status.code(), Some(1));
    let broken = dir.path().join("broken");
    fs::create_dir_all(broken.join("seed-1")).unwrap();
    fs::write(broken.join("seed-1/metrics.csv"), "episode,tti\n0,x\n").unwrap();
    assert_eq!(sim(&["--mode", "summarize"], &broken).status.code(), Some(2));
}

#[test]
fn train_resume_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("small.conf");
    fs::write(&conf, "n_devices = 400\nn_tti_per_episode = 40\nhidden_layers = 16,16\n").unwrap();
    let conf = conf.to_str().unwrap();
    let first = dir.path().join("first");
    let out = sim(&["--mode", "train", "--controller", "cma-dqn", "--episodes", "2", "--config", conf], &first);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = first.join("seed-1/checkpoint.bin");

    let resumed = dir.path().join("resumed");
    let args = ["--mode", "train", "--controller", "cma-dqn", "--config", conf, "--checkpoint", ckpt.to_str().unwrap()];
    assert!(sim(&args, &resumed).status.success());
    let episodes: Vec<usize> = rows(&resumed.join("seed-1/metrics.csv")).iter().map(|r| r.episode).collect();
    assert!(episodes.iter().all(|&e| e == 2));

    let eval = dir.path().join("eval");
    let args = ["--mode", "eval", "--controller", "cma-dqn", "--config", conf, "--checkpoint", ckpt.to_str().unwrap()];
    assert!(sim(&args, &eval).status.success());

    let out = sim(&["--mode", "summarize"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table: Vec<HashMap<String, String>> = csv::Reader::from_path(dir.path().join("tti_summary.csv"))
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(table.len(), 40);
}
