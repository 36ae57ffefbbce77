use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_metaview"));
    c.env_remove("METAVIEW_DATA_DIR");
    c
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn run(c: &mut Command) -> Output {
    let out = c.output().expect("binary runs");
    eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A small, fast configuration.
fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.cfg");
    std::fs::write(
        &p,
        "# quick settings\nd_h = 16\nd_z = 16\nepochs = 2\nmeta_batch = 8\neval_runs = 2\nadapt_steps = 5\nseed = 3\n",
    )
    .unwrap();
    p
}

#[test]
fn missing_config_exits_2() {
    let o = run(bin().args(["train", "--config", "missing.cfg"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"error\":\"config\""));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    std::fs::write(&p, "learning_rate = 0.1\n").unwrap();
    let o = run(bin().arg("train").arg("--config").arg(&p));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_dataset_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().arg("spectra").arg("--dataset").arg(dir.path().join("NOPE")));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn spectra_one_line_per_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z.csv");
    let o = run(bin()
        .arg("spectra")
        .arg("--dataset")
        .arg(fixtures().join("mutag"))
        .args(["--name", "MUTAG_LIKE", "--kind", "ppr", "--alpha", "0.2", "--k", "8", "--out"])
        .arg(&out));
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 188);
    let first: Vec<&str> = lines[0].split(", ").collect();
    assert_eq!(first[0], "1");
    assert_eq!(first.len(), 9);
    // the largest PPR eigenvalue of a connected graph is 1
    assert!((first[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn benchbuild_train_eval_on_fixture_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixtures();
    let o = run(bin()
        .arg("benchbuild")
        .arg("--corpus")
        .arg(corpus.join("corpus.json"))
        .arg("--data-dir")
        .arg(corpus.join("corpus"))
        .arg("--out")
        .arg(dir.path()));
    assert!(o.status.success());
    assert!(stdout(&o).contains("train 5, dev 1, test 4"), "{}", stdout(&o));
    let manifest = dir.path().join("manifest.json");
    assert!(manifest.exists());

    let cfg = tiny_config(dir.path());
    let run_dir = dir.path().join("run");
    let o = run(bin()
        .arg("train")
        .arg("--config")
        .arg(&cfg)
        .arg("--benchmark")
        .arg(&manifest)
        .arg("--data-dir")
        .arg(corpus.join("corpus"))
        .arg("--out")
        .arg(&run_dir));
    assert!(o.status.success());
    assert!(run_dir.join("checkpoint.json").exists());
    let history: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("history.json")).unwrap()).unwrap();
    assert_eq!(history["seed"], 3);
    assert_eq!(history["history"]["epoch_loss"].as_array().unwrap().len(), 2);

    let o = run(bin()
        .arg("eval")
        .arg("--config")
        .arg(&cfg)
        .arg("--benchmark")
        .arg(&manifest)
        .arg("--data-dir")
        .arg(corpus.join("corpus"))
        .arg("--checkpoint")
        .arg(run_dir.join("checkpoint.json"))
        .arg("--out")
        .arg(&run_dir));
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report["per_task"].as_array().unwrap().len(), 4);
    assert_eq!(report["shots"], 5);
    assert!(report["config_hash"].as_str().unwrap().len() == 16);
    assert!(stdout(&o).contains("aggregate"));
}

#[test]
fn ablate_two_view_sets_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = run(bin()
        .arg("ablate")
        .arg("--config")
        .arg(&cfg)
        .args(["--seed", "11", "--view-set", "X", "--view-set", "X,U,Z", "--out"])
        .arg(dir.path()));
    assert!(o.status.success());
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{table}");
    assert!(rows[0].starts_with("X "));
    assert!(rows[1].starts_with("X,U,Z"));
    assert!(rows.iter().all(|r| r.trim_end().ends_with("11")));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ablation.json")).unwrap()).unwrap();
    assert_eq!(doc["seed"], 11);
    assert_eq!(doc["reports"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_quick_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .args(["verify", "--quick", "--jobs", "2", "--fixtures"])
        .arg(fixtures())
        .arg("--out")
        .arg(dir.path()));
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains(": PASS")).count(), 7, "{text}");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(doc["passed"], true);
}
