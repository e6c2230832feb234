use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "synth_taxis=40",
    "synth_days=20",
    "synth_ids_fraction=0.25",
    "range_days=20",
    "lda_topics=6",
    "boost_rounds=5",
];

fn raw(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idsdetect"))
        .arg("--data-dir")
        .arg(root.join("data"))
        .arg("--work-dir")
        .arg(root.join("work"))
        .args(args)
        .output()
        .unwrap()
}

fn idsdetect(root: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = SMALL.iter().flat_map(|s| ["--set", s]).collect();
    all.extend(args);
    raw(root, &all)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn pipeline_is_deterministic_and_models_are_interchangeable() {
    let dir = tempfile::tempdir().unwrap();
    let mut metrics = Vec::new();
    for run in ["a", "b"] {
        let root = dir.path().join(run);
        let out = idsdetect(&root, &["pipeline", "--model", "mcmil"]);
        assert!(out.status.success(), "{}", stderr(&out));
        metrics.push(std::fs::read(root.join("work/metrics.txt")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);

    let root = dir.path().join("a");
    for model in ["mil", "mcmil"] {
        for stage in ["train", "score"] {
            let out = idsdetect(&root, &[stage, "--model", model]);
            assert!(out.status.success(), "{stage} {model}: {}", stderr(&out));
        }
        assert!(root.join(format!("work/model_{model}.json")).exists());
    }
}

#[test]
fn staged_run_matches_subcommand_names() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for stage in ["synth", "ingest", "extract-stl", "split", "fit-gmm", "fit-lda", "encode", "features"] {
        let out = idsdetect(root, &[stage]);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    let out = idsdetect(root, &["train", "--model", "logistic"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(idsdetect(root, &["score", "--model", "logistic"]).status.success());
    let out = idsdetect(root, &["evaluate", "--model", "logistic"]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("auc="));
}

#[test]
fn evaluate_without_labels_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = idsdetect(dir.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("scores_mcmil.csv") || stderr(&out).contains("labels.csv"), "{}", stderr(&out));
}

#[test]
fn missing_upstream_artifact_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = idsdetect(dir.path(), &["fit-gmm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("stl.csv"), "{}", stderr(&out));
}

#[test]
fn config_violations_exit_3_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (set, key) in [("no_such_key=1", "no_such_key"), ("gmm_components=0", "gmm_components"), ("seed", "seed")] {
        let out = idsdetect(dir.path(), &["--set", set, "ingest"]);
        assert_eq!(out.status.code(), Some(3), "{set}");
        assert!(stderr(&out).contains(key), "{set}: {}", stderr(&out));
    }
}

#[test]
fn config_file_keys_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# fleet\nsynth_taxis = 0\n").unwrap();
    let root = dir.path();
    let cfg_arg = cfg.to_str().unwrap();
    let out = raw(root, &["--config", cfg_arg, "synth"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let out = raw(root, &["--config", cfg_arg, "--set", "synth_taxis=12", "--set", "synth_days=8", "synth"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("taxis=12"));
}
