//! Drives the binary through every subcommand on a tiny synthetic dataset.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hetembed(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_hetembed")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "hetembed {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Value of `key=value` in command output.
fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from:\n{text}"))
        .to_string()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn step_by_step_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    hetembed(&["synth", "--authors-per-community", "15", "--words-per-doc", "30", "--seed", "4", "--out", &p(d, "data")]);
    let data = d.join("data");
    for f in ["records.jsonl", "labels.csv", "communities.csv", "pipeline.toml"] {
        assert!(data.join(f).exists(), "{f} missing");
    }

    let o = stdout(&hetembed(&["ingest", "--in", &p(&data, "records.jsonl"), "--out", &p(d, "g.bin"), "--docs", &p(d, "docs.jsonl")]));
    let nodes: usize = field(&o, "nodes").parse().unwrap();
    assert_eq!(field(&o, "nodes.subreddit"), "30");
    assert_eq!(field(&o, "nodes.author"), "45");

    let o = stdout(&hetembed(&[
        "sample", "fire", "--graph", &p(d, "g.bin"), "--target-size", "60", "--seed-node", "r:c0s0", "--out", &p(d, "fire.bin"),
    ]));
    assert_eq!(field(&o, "burned"), "60");
    assert!(60 < nodes);

    let o = stdout(&hetembed(&[
        "sample", "walks", "--graph", &p(d, "g.bin"), "--walks-per-start", "30", "--walk-length", "25", "--out", &p(d, "walks.txt"),
    ]));
    let emitted: usize = field(&o, "emitted").parse().unwrap();
    assert_eq!(fs::read_to_string(d.join("walks.txt")).unwrap().lines().count(), emitted);

    let o = stdout(&hetembed(&[
        "embed", "graph", "--walks", &p(d, "walks.txt"), "--dim", "8", "--epochs", "2", "--mode", "mp2vpp", "--out", &p(d, "emb.txt"),
    ]));
    assert!(o.contains("epoch2_loss="));

    let o = stdout(&hetembed(&["neighbors", "--emb", &p(d, "emb.txt"), "--query", "r:c0s0", "--k", "4", "--type", "subreddit"]));
    let lines: Vec<&str> = o.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.starts_with("r:") && !l.starts_with("r:c0s0\t")));

    for v in ["dbow", "dmm"] {
        let o = stdout(&hetembed(&[
            "embed", "docs", "--variant", v, "--dim", "8", "--epochs", "3", "--infer-epochs", "5", "--in", &p(d, "docs.jsonl"), "--out", &p(d, v),
        ]));
        assert_eq!(field(&o, "documents"), "360");
    }

    let o = stdout(&hetembed(&[
        "features", "build", "--mode", "integrated", "--target", "r:c0s0",
        "--graph-emb", &p(d, "emb.txt"), "--dbow", &p(d, "dbow"), "--dmm", &p(d, "dmm"),
        "--docs", &p(d, "docs.jsonl"), "--labels", &p(&data, "labels.csv"),
        "--profiles", &p(d, "profiles.csv"), "--out", &p(d, "features.csv"),
    ]));
    let rows: usize = field(&o, "rows").parse().unwrap();
    assert!(rows > 0 && rows <= 45);
    let header = fs::read_to_string(d.join("features.csv")).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("author,g0,") && header.ends_with("dbow_mean,dmm_mean,label"), "{header}");
    assert_eq!(fs::read_to_string(d.join("profiles.csv")).unwrap().lines().count(), 46);

    hetembed(&["clf", "train", "--features", &p(d, "features.csv"), "--ratio", "2", "--out", &p(d, "model.txt")]);
    hetembed(&["clf", "eval", "--model", &p(d, "model.txt"), "--features", &p(d, "features.csv"), "--out", &p(d, "metrics.txt")]);
    let metrics = fs::read_to_string(d.join("metrics.txt")).unwrap();
    let total: usize = ["tp", "fp", "tn", "fn"].iter().map(|k| field(&metrics, k).parse::<usize>().unwrap()).sum();
    assert_eq!(total, rows);

    let o = stdout(&hetembed(&["project", "--emb", &p(d, "emb.txt"), "--type", "subreddit", "--out", &p(d, "proj.csv")]));
    assert_eq!(field(&o, "points"), "30");
    assert_eq!(fs::read_to_string(d.join("proj.csv")).unwrap().lines().count(), 31);

    let o = stdout(&hetembed(&["bench", "walks", "--nodes", "2000", "--walks-per-start", "2", "--walk-length", "20"]));
    let steps = o.lines().find_map(|l| l.strip_prefix("steps = ")).expect("steps line");
    assert!(steps.parse::<u64>().unwrap() > 0);
}

#[test]
fn pipeline_runs_then_memoizes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    hetembed(&["synth", "--authors-per-community", "20", "--words-per-doc", "30", "--out", &p(d, "data")]);
    let cfg = p(&d.join("data"), "pipeline.toml");

    let printed = stdout(&hetembed(&["pipeline", "--config", &cfg, "--print-config"]));
    assert!(printed.contains("doc_window = 1"));
    assert!(!d.join("data/out").exists());

    let first = stdout(&hetembed(&["pipeline", "--config", &cfg]));
    assert!(field(&first, "executed").contains("embed_graph"));
    assert_eq!(field(&first, "skipped"), "");
    for mode in ["graph_only", "text_only", "integrated"] {
        let acc: f64 = field(&first, &format!("accuracy.{mode}")).parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    let report = fs::read_to_string(field(&first, "report")).unwrap();
    assert!(report.contains("## confusion matrix: integrated"));

    let second = stdout(&hetembed(&["pipeline", "--config", &cfg]));
    assert_eq!(field(&second, "executed"), "");
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hetembed"))
        .args(["ingest", "--in", &p(tmp.path(), "missing.jsonl"), "--out", &p(tmp.path(), "g.bin")])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));

    let out = Command::new(env!("CARGO_BIN_EXE_hetembed"))
        .args(["neighbors", "--emb", "x", "--query", "r:a", "--type", "planet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
