use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dalab_cli::formats;

fn dalab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dalab")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = dalab(args);
    assert!(o.status.success(), "dalab {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn files(dir: &Path, prefix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    v.sort();
    v
}

fn one(dir: &Path, prefix: &str) -> PathBuf {
    let f = files(dir, prefix);
    assert_eq!(f.len(), 1, "expected one {prefix}* in {}", dir.display());
    f[0].clone()
}

fn one_ext(dir: &Path, prefix: &str, ext: &str) -> PathBuf {
    let f: Vec<_> = files(dir, prefix).into_iter().filter(|p| p.extension().unwrap() == ext).collect();
    assert_eq!(f.len(), 1, "expected one {prefix}*.{ext} in {}", dir.display());
    f[0].clone()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small PDA setup so training and tournaments finish in well under a second.
fn small_pda_config(dir: &Path) -> PathBuf {
    let path = dir.join("exp.json");
    std::fs::write(
        &path,
        r#"{
            "out": "results",
            "pda": {
                "market": { "num_delivery_slots": 2 },
                "two_player_games": 1,
                "four_player_games": 1,
                "updates": 20
            },
            "tournament": { "two_player_games": 2, "five_player_games": 2 }
        }"#,
    )
    .unwrap();
    path
}

#[test]
fn solve_all_writes_four_solutions() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["solve", "--case", "all", "--spec", "0,1,0,1", "--out", s(dir.path())]);
    let expected = [
        ("case1", [2.0 / 3.0, 2.0 / 3.0, 1.0, 1.0], 1e-9),
        ("case2", [6.0 / 7.0, 4.0 / 7.0, 1.12169312, 1.12169312], 1e-6),
        ("case3", [2.0 / 3.0, 2.0 / 3.0, 1.0, 1.0], 1e-9),
        ("case4", [0.882782, 0.588521, 1.2207, 1.10806], 1e-4),
    ];
    for (case, alphas, tol) in expected {
        let v = json(&one(dir.path(), &format!("solution_{case}_")));
        assert_eq!(v["case"], case);
        assert_eq!(v["converged"], true);
        for (key, want) in ["alpha_b1", "alpha_b2", "alpha_s1", "alpha_s2"].iter().zip(alphas) {
            let got = v["alphas"][key].as_f64().unwrap();
            assert!((got - want).abs() <= tol, "{case} {key}: {got} vs {want}");
        }
        assert_eq!(v["ordering_violation"].is_null(), case != "case4");
    }
}

#[test]
fn malformed_spec_is_a_config_error_naming_the_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let o = dalab(&["solve", "--spec", "0.5,0.5,0,1", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("l_b < h_b"));
    let o = dalab(&["solve", "--spec", "0,1,1,0.2", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("l_s < h_s"));
}

#[test]
fn shifted_seller_support_solves_to_small_residuals() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["solve", "--case", "1", "--spec", "0,1,0.2,1", "--out", s(dir.path())]);
    let v = json(&one(dir.path(), "solution_case1_"));
    for r in v["residuals"].as_array().unwrap() {
        assert!(r.as_f64().unwrap().abs() <= 1e-10);
    }
}

#[test]
fn perturbed_profile_shows_deviation_toward_two_thirds() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["verify", "--case", "1", "--alphas", "0.4,0.4,1,1", "--samples", "20000", "--out", s(dir.path())]);
    let mut r = csv::Reader::from_path(one_ext(dir.path(), "verify_case1_", "csv")).unwrap();
    let buyer = r.records().map(|x| x.unwrap()).find(|x| &x[1] == "buyer").unwrap();
    let best: f64 = buyer[4].parse().unwrap();
    assert!((0.6..=0.75).contains(&best), "best buyer factor {best}");
    assert_eq!(&buyer[9], "false");
}

#[test]
fn zero_samples_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dalab(&["verify", "--case", "1", "--samples", "0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let o = dalab(&["evaluate", "--case", "1", "--checkpoint", s(&missing), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("none.json"));
    let o = dalab(&["tournament", "--checkpoint", s(&missing), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"not\": \"an agent\"}").unwrap();
    let o = dalab(&["evaluate", "--case", "1", "--checkpoint", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn training_twice_gives_identical_files_and_evaluation_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["train-singleshot", "--case", "2", "--episodes", "10", "--seed", "7", "--out", s(d)]);
    }
    let names: Vec<_> = files(&a, "").iter().map(|p| p.file_name().unwrap().to_owned()).collect();
    assert_eq!(names.len(), 4);
    for n in &names {
        assert!(n.to_string_lossy().contains("case2_seed7_"));
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap(), "{n:?}");
    }
    let curve = one(&a, "curve_");
    assert_eq!(csv::Reader::from_path(&curve).unwrap().records().count(), 10);

    let ckpt = one(&a, "checkpoint_");
    let eval_dir = dir.path().join("eval");
    ok(&["evaluate", "--case", "2", "--checkpoint", s(&ckpt), "--states", "50", "--seed", "7", "--out", s(&eval_dir)]);
    let mut r = csv::Reader::from_path(one(&eval_dir, "evaluation_")).unwrap();
    let row = r.records().next().unwrap().unwrap();
    assert_eq!(&row[0], "case2");
    assert_eq!(&row[1], "50");
    // a one-factor checkpoint does not fit a two-factor case
    let tied = dir.path().join("tied");
    ok(&["train-singleshot", "--case", "1", "--episodes", "5", "--out", s(&tied)]);
    let o = dalab(&["evaluate", "--case", "2", "--checkpoint", s(&one(&tied, "checkpoint_")), "--out", s(&tied)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tournament_reruns_are_byte_identical_for_any_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_pda_config(dir.path());
    ok(&["train-pda", "--config", s(&cfg), "--seed", "5"]);
    let results = dir.path().join("results");
    let ckpt = one(&results, "checkpoint_pda_seed5_");
    let mut outputs = Vec::new();
    for (jobs, sub) in [("1", "r1"), ("3", "r3"), ("1", "r1b")] {
        let out = dir.path().join(sub);
        ok(&["tournament", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--jobs", jobs, "--seed", "5", "--out", s(&out)]);
        let bytes: Vec<Vec<u8>> = files(&out, "tournament_").iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(bytes.len(), 2);
        outputs.push(bytes);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);

    let out = dir.path().join("r1");
    let mut r = csv::Reader::from_path(one_ext(&out, "tournament_pda_seed5_", "csv")).unwrap();
    let mut sets = std::collections::BTreeSet::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        sets.insert(rec[0].to_string());
        if &rec[4] == "ddpg" && !rec[5].is_empty() {
            assert_eq!(&rec[10], "1");
        }
    }
    let expected: std::collections::BTreeSet<String> =
        ["ddpg_vs_zi", "ddpg_vs_zip", "ddpg_vs_truthful", "ddpg_vs_scale_based", "5_player"].map(String::from).into();
    assert_eq!(sets, expected);
    let report = json(&one_ext(&out, "tournament_pda_seed5_", "json"));
    for set in report["sets"].as_array().unwrap() {
        let ddpg = set["brokers"].as_array().unwrap().iter().find(|b| b["broker"] == "ddpg").unwrap();
        if !ddpg["normalized_ratio"].is_null() {
            assert_eq!(ddpg["normalized_ratio"], 1.0);
        }
    }
}

#[test]
fn config_paths_are_relative_to_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_pda_config(dir.path());
    let cwd = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dalab"))
        .args(["solve", "--case", "1", "--config", s(&cfg)])
        .current_dir(cwd.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(files(&dir.path().join("results"), "solution_case1_").len(), 1);
    assert_eq!(std::fs::read_dir(cwd.path()).unwrap().count(), 0);
}

#[test]
fn csv_headers_match_documented_columns() {
    let docs = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/formats.md")).unwrap();
    for (kind, cols) in formats::ALL {
        assert!(docs.lines().any(|l| l == cols.join(",")), "{kind} columns missing from docs/formats.md");
    }

    let dir = tempfile::tempdir().unwrap();
    let cfg = small_pda_config(dir.path());
    let out = dir.path().join("all");
    let o = s(&out);
    ok(&["verify", "--case", "1", "--samples", "2000", "--step", "0.1", "--out", o]);
    ok(&["train-singleshot", "--case", "4", "--episodes", "5", "--out", o]);
    ok(&["tournament", "--config", s(&cfg), "--games", "1", "--out", o]);
    let mut seen = 0;
    for (kind, cols) in formats::ALL {
        for p in files(&out, &format!("{kind}_")).into_iter().filter(|p| p.extension().unwrap() == "csv") {
            assert_eq!(header(&p), cols.to_vec(), "{}", p.display());
            let raw = std::fs::read_to_string(&p).unwrap();
            assert!(raw.ends_with("\r\n"));
            seen += 1;
        }
    }
    // verify, curve, two updates, evaluation, transitions, tournament
    assert_eq!(seen, 7);
}
