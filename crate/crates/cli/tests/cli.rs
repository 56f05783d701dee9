//! Command-line behaviour: outputs, exit codes, determinism.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"seed = 2

[model.dims]
embed = 32
proj = 4
attr_embed = 2
attr_hidden = 4
attr_out = 2

[train]
learning_rate = 0.01
batch_size = 16
eval_every = 10

[synth]
users = 8
articles = 40
impressions = 60
"#;

fn viewflow(out: &Path, args: &[&str]) -> Output {
    let config = out.with_extension("toml");
    if !config.exists() {
        std::fs::write(&config, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_viewflow"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = viewflow(out, args);
    assert!(
        o.status.success(),
        "{args:?}: {}\n{}",
        o.status,
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn ingests_mind_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let news = dir.path().join("news.tsv");
    let behaviors = dir.path().join("behaviors.tsv");
    std::fs::write(
        &news,
        "N1\tsports\tsoccer\tCup final tonight\tThe final kicks off at eight.\thttp://x\t[]\t[]\n\
         N2\tfinance\tmarkets\tRates steady\tThe bank held rates.\thttp://x\t[]\t[]\n\
         N3\tsports\ttennis\tOpen draw out\tSeeds avoid each other.\thttp://x\t[]\t[]\n",
    )
    .unwrap();
    std::fs::write(
        &behaviors,
        "1\tU1\t11/15/2019 8:55:22 AM\tN1\tN2-1 N3-0\n\
         2\tU2\t11/15/2019 9:01:00 AM\t\tN1-0 N3-1\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(
        &out,
        &[
            "ingest",
            "--format",
            "mind",
            "--news",
            news.to_str().unwrap(),
            "--behaviors",
            behaviors.to_str().unwrap(),
        ],
    );
    let stats = json(&out.join("stats.json"));
    assert_eq!(stats["articles"], 3);
    assert_eq!(stats["impressions"], 2);
    assert_eq!(stats["skipped_records"], 0);
    let manifest = json(&out.join("manifest.json"));
    assert!(manifest["commands"]["ingest"]["outputs"]["dataset.jsonl"].is_string());
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let files = [
        "dataset.jsonl",
        "profiles.jsonl",
        "model.ckpt",
        "train_log.csv",
        "manifest.json",
    ];
    let mut runs = Vec::new();
    for _ in 0..2 {
        ok(&out, &["synth"]);
        ok(&out, &["summarize"]);
        ok(&out, &["train", "--steps", "20"]);
        let mut bytes: Vec<Vec<u8>> = files
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap())
            .collect();
        // The wall-clock column is the one expected difference.
        let log = String::from_utf8(bytes.remove(3)).unwrap();
        let log: Vec<String> = log
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect();
        runs.push((bytes, log));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn seed_flag_changes_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&a, &["synth"]);
    ok(&b, &["--seed", "9", "synth"]);
    assert_ne!(
        std::fs::read(a.join("dataset.jsonl")).unwrap(),
        std::fs::read(b.join("dataset.jsonl")).unwrap()
    );
}

#[test]
fn missing_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = viewflow(
        &out,
        &[
            "ingest",
            "--format",
            "jsonl",
            "--input",
            "/nonexistent/data.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    std::fs::write(out.with_extension("toml"), "[train]\nlearning_rat = 0.1\n").unwrap();
    let o = viewflow(&out, &["synth"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rat"));
}

#[test]
fn bad_flag_exits_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(viewflow(&out, &["train", "--stepz", "3"]).status.code(), Some(1));
    assert_eq!(viewflow(&out, &["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_dataset_line_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("dataset.jsonl"), "{\"kind\":\"article\",\"id\":\n").unwrap();
    assert_eq!(viewflow(&out, &["train", "--steps", "1"]).status.code(), Some(2));
}

#[test]
fn ranking_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["synth"]);
    ok(&out, &["summarize"]);
    ok(&out, &["train", "--steps", "30"]);
    ok(&out, &["precompute"]);

    let dataset = viewflow::data::load_jsonl(&out.join("dataset.jsonl")).unwrap();
    let imp = &dataset.impressions[0];
    let ids: Vec<&str> = imp.candidates.iter().map(|(id, _)| id.as_str()).collect();
    let ranked: serde_json::Value = serde_json::from_str(&ok(
        &out,
        &[
            "rank",
            "--user",
            &imp.user,
            "--candidates",
            &ids.join(","),
            "--top-k",
            "3",
        ],
    ))
    .unwrap();
    let probs: Vec<f64> = ranked["ranked"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["probability"].as_f64().unwrap())
        .collect();
    assert_eq!(probs.len(), 3);
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));

    let o = viewflow(&out, &["rank", "--user", &imp.user, "--candidates", "ghost"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ghost"));

    ok(&out, &["diagnose", "--user", &imp.user]);
    let csv = std::fs::read_to_string(out.join("diagnose.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("candidate_id,step,history_article_id,alpha,cos_instant,cos_constant")
    );
    let mut sums: std::collections::BTreeMap<String, f64> = Default::default();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        *sums.entry(cols[0].to_string()).or_default() += cols[3].parse::<f64>().unwrap();
    }
    assert!(!sums.is_empty());
    for (cand, s) in sums {
        assert!((s - 1.0).abs() < 1e-6, "{cand}: Σα = {s}");
    }
}

#[test]
fn ablated_checkpoint_has_fewer_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["synth"]);
    ok(&out, &["summarize"]);
    ok(&out, &["train", "--steps", "5"]);
    let full = json(&out.join("train.json"))["parameter_count"].as_u64().unwrap();
    ok(&out, &["train", "--steps", "5", "--no-instant"]);
    let no_instant = json(&out.join("train.json"))["parameter_count"].as_u64().unwrap();
    ok(&out, &["train", "--steps", "5", "--no-constant"]);
    let no_constant = json(&out.join("train.json"))["parameter_count"].as_u64().unwrap();
    assert!(no_instant < full && no_constant < full);
    assert_eq!(
        viewflow(&out, &["train", "--no-instant", "--no-constant"])
            .status
            .code(),
        Some(1)
    );
}
