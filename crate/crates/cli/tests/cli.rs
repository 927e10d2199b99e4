use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use fedstock_cli::artifacts::{Manifest, RegimeReport, TrainRecord};
use fedstock_cli::commands::Summary;
use fedstock_cli::exit;
use serde_json::Value;

const SMOKE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.json");

fn fedstock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedstock"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(args: &[&str]) {
    let out = fedstock(args);
    assert_eq!(code(&out), exit::OK, "{args:?}: {}", stderr(&out));
}

/// Smoke config with `edit` applied, written into `dir`.
fn config_with(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(SMOKE).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read<T: serde::de::DeserializeOwned>(path: PathBuf) -> T {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn csv_rows(path: PathBuf) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn smoke_pipeline_runs_every_regime_within_a_minute() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let start = Instant::now();
    ok(&["synth", "--config", SMOKE, "--out", out]);
    let regimes = ["centralized", "local", "fl", "fl-sqrt", "pfl", "pfl-sqrt", "pfl-finetune"];
    for r in regimes {
        ok(&["train", "--config", SMOKE, "--out", out, "--regime", r]);
    }
    ok(&["evaluate", "--config", SMOKE, "--out", out]);
    ok(&["compare", "--config", SMOKE, "--out", out]);
    assert!(start.elapsed() < Duration::from_secs(60), "{:?}", start.elapsed());

    let pfl = tmp.path().join("models/pfl");
    let ckpts: Vec<String> = std::fs::read_dir(&pfl)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".ckpt"))
        .collect();
    assert_eq!(ckpts.iter().filter(|n| *n == "body.ckpt").count(), 1);
    assert_eq!(ckpts.iter().filter(|n| n.starts_with("head_")).count(), 2);
    let record: TrainRecord = read(pfl.join("train.json"));
    assert_eq!(record.audit_holds_only_body, Some(true));
    assert_eq!(record.training.policy, fedstock_core::fl::AggregationPolicy::Size);
    let sqrt: TrainRecord = read(tmp.path().join("models/fl-sqrt/train.json"));
    assert_eq!(sqrt.training.policy, fedstock_core::fl::AggregationPolicy::Sqrt);

    let summary: Summary = read(tmp.path().join("reports/summary.json"));
    let mut names: Vec<&str> = summary.regimes.keys().map(String::as_str).collect();
    names.sort_unstable();
    let mut expect = regimes.to_vec();
    expect.sort_unstable();
    assert_eq!(names, expect);
    assert!(summary.strata.is_some());

    let rounds = std::fs::read_to_string(tmp.path().join("models/fl/rounds.jsonl")).unwrap();
    assert_eq!(rounds.lines().count(), 2);
}

#[test]
fn summary_lists_exactly_the_trained_regimes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    ok(&["synth", "--config", SMOKE, "--out", out]);
    ok(&["train", "--config", SMOKE, "--out", out, "--regime", "fl"]);
    ok(&["train", "--config", SMOKE, "--out", out, "--regime", "local"]);
    ok(&["evaluate", "--config", SMOKE, "--out", out]);
    let summary: Summary = read(tmp.path().join("reports/summary.json"));
    assert_eq!(summary.regimes.keys().collect::<Vec<_>>(), ["fl", "local"]);
    assert!(summary.strata.is_none());

    let report: RegimeReport = read(tmp.path().join("reports/fl.json"));
    assert_eq!(report.report.per_horizon.len(), 3);
    let rows = csv_rows(tmp.path().join("reports/fl.csv"));
    let horizons: Vec<&str> = rows.iter().filter(|r| &r[4] == "all").map(|r| &r[5]).collect();
    assert_eq!(horizons, ["all", "1", "2", "3"]);
    assert!(rows.iter().all(|r| r[0] == report.stamp.config_hash && &r[1] == "7" && &r[2] == "0.1.0"));
}

#[test]
fn synth_is_deterministic_and_accounts_for_every_animal() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["synth", "--config", SMOKE, "--out", s(&a)]);
    ok(&["synth", "--config", SMOKE, "--out", s(&b), "--threads", "1"]);
    let ma = std::fs::read(a.join("data/manifest.json")).unwrap();
    assert_eq!(ma, std::fs::read(b.join("data/manifest.json")).unwrap());
    let m: Manifest = read(a.join("data/manifest.json"));
    assert_eq!(m.totals.animals, m.farms.iter().map(|f| f.n_animals).sum::<usize>());
    assert_eq!(m.totals.animals, 40);
    for f in &m.farms {
        let lines = std::fs::read_to_string(a.join("data").join(&f.file)).unwrap().lines().count();
        assert_eq!(lines, f.n_animals + 1);
    }

    let c = tmp.path().join("c");
    ok(&["synth", "--config", SMOKE, "--out", s(&c), "--seed", "8"]);
    let mc: Manifest = read(c.join("data/manifest.json"));
    assert_ne!(mc.data_hash, m.data_hash);
    assert_eq!(mc.stamp.seed, 8);
}

#[test]
fn table3_preset_covers_all_five_size_buckets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/table3-mix.json");
    ok(&["synth", "--config", cfg, "--out", s(tmp.path())]);
    let m: Manifest = read(tmp.path().join("data/manifest.json"));
    assert_eq!(m.buckets.len(), 5);
    assert!(m.buckets.iter().all(|(_, n)| *n > 0), "{:?}", m.buckets);
}

#[test]
fn train_without_dataset_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fedstock(&["train", "--config", SMOKE, "--out", s(tmp.path()), "--regime", "fl"]);
    assert_eq!(code(&out), exit::MISSING_INPUT, "{}", stderr(&out));
}

#[test]
fn invalid_config_exits_2_with_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), "bad.json", |v| v["training"]["defaults"]["rounds"] = 0.into());
    let out = fedstock(&["synth", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(code(&out), exit::CONFIG);
    assert!(stderr(&out).contains("training.rounds"), "{}", stderr(&out));

    let cfg = config_with(tmp.path(), "typo.json", |v| v["model"]["d_hidden"] = 3.into());
    let out = fedstock(&["synth", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(code(&out), exit::CONFIG);
    assert!(stderr(&out).contains("model.d_hidden"), "{}", stderr(&out));
}

#[test]
fn divergence_exits_4_naming_the_client() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), "hot.json", |v| {
        let d = &mut v["training"]["defaults"];
        d["learning_rate"] = 1e150.into();
        d["grad_clip"] = Value::Null;
    });
    ok(&["synth", "--config", s(&cfg), "--out", s(tmp.path())]);
    let out = fedstock(&["train", "--config", s(&cfg), "--out", s(tmp.path()), "--regime", "fl"]);
    assert_eq!(code(&out), exit::DIVERGENCE, "{}", stderr(&out));
    assert!(stderr(&out).contains("client"), "{}", stderr(&out));
}

#[test]
fn changed_config_or_data_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    ok(&["synth", "--config", SMOKE, "--out", out]);
    ok(&["train", "--config", SMOKE, "--out", out, "--regime", "centralized"]);

    let other = config_with(tmp.path(), "lr.json", |v| v["training"]["defaults"]["learning_rate"] = 0.05.into());
    let res = fedstock(&["evaluate", "--config", s(&other), "--out", out]);
    assert_eq!(code(&res), exit::HASH_MISMATCH, "{}", stderr(&res));

    let noisy = config_with(tmp.path(), "noise.json", |v| v["data"]["noise_sd"] = 1.0.into());
    let res = fedstock(&["train", "--config", s(&noisy), "--out", out, "--regime", "fl"]);
    assert_eq!(code(&res), exit::HASH_MISMATCH, "{}", stderr(&res));

    let file = tmp.path().join("data/farm_0001.jsonl");
    let mut text = std::fs::read_to_string(&file).unwrap();
    text.push('\n');
    std::fs::write(&file, text).unwrap();
    let res = fedstock(&["train", "--config", SMOKE, "--out", out, "--regime", "fl"]);
    assert_eq!(code(&res), exit::HASH_MISMATCH, "{}", stderr(&res));
}

#[test]
fn compare_sorts_rows_and_zeroes_the_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    ok(&["synth", "--config", SMOKE, "--out", out]);
    for r in ["pfl", "local", "fl"] {
        ok(&["train", "--config", SMOKE, "--out", out, "--regime", r]);
    }
    ok(&["evaluate", "--config", SMOKE, "--out", out]);
    ok(&["compare", "--config", SMOKE, "--out", out, "--baseline", "pfl"]);

    let rows = csv_rows(tmp.path().join("compare/comparison.csv"));
    let keys: Vec<(String, String)> = rows.iter().map(|r| (r[3].to_string(), r[4].to_string())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for r in rows.iter().filter(|r| &r[3] == "pfl") {
        assert_eq!((&r[12], &r[13]), ("0", "0"));
    }
    assert!(rows.iter().any(|r| &r[3] == "fl" && &r[12] != "0"));

    let m: Manifest = read(tmp.path().join("data/manifest.json"));
    let small: Vec<u32> = m.farms.iter().filter(|f| f.iam_count < 50).map(|f| f.farm_id).collect();
    let series = csv_rows(tmp.path().join("compare/small_farms.csv"));
    for regime in ["local", "pfl"] {
        let mut farms: Vec<u32> = series.iter().filter(|r| &r[3] == regime).map(|r| r[4].parse().unwrap()).collect();
        farms.sort_unstable();
        assert_eq!(farms, small);
    }
}

#[test]
fn compare_needs_two_reports_with_equal_horizons() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("h3"), tmp.path().join("h2"));
    ok(&["synth", "--config", SMOKE, "--out", s(&a)]);
    ok(&["train", "--config", SMOKE, "--out", s(&a), "--regime", "fl"]);
    ok(&["evaluate", "--config", SMOKE, "--out", s(&a)]);
    let res = fedstock(&["compare", "--config", SMOKE, "--out", s(&a)]);
    assert_eq!(code(&res), exit::CONFIG, "{}", stderr(&res));

    let h2 = config_with(tmp.path(), "h2.json", |v| {
        v["data"]["horizon"] = 2.into();
        v["model"]["horizon"] = 2.into();
    });
    ok(&["synth", "--config", s(&h2), "--out", s(&b)]);
    ok(&["train", "--config", s(&h2), "--out", s(&b), "--regime", "local"]);
    ok(&["evaluate", "--config", s(&h2), "--out", s(&b)]);
    let res = fedstock(&[
        "compare",
        "--config",
        SMOKE,
        "--out",
        s(&a),
        s(&a.join("reports/fl.json")),
        s(&b.join("reports/local.json")),
    ]);
    assert_eq!(code(&res), exit::INCOMPATIBLE_HORIZONS, "{}", stderr(&res));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = [tmp.path().join("t1"), tmp.path().join("t3")];
    for (dir, threads) in dirs.iter().zip(["1", "3"]) {
        let out = s(dir);
        ok(&["synth", "--config", SMOKE, "--out", out, "--threads", threads]);
        for r in ["pfl", "local"] {
            ok(&["train", "--config", SMOKE, "--out", out, "--regime", r, "--threads", threads]);
        }
        ok(&["evaluate", "--config", SMOKE, "--out", out, "--threads", threads]);
        ok(&["compare", "--config", SMOKE, "--out", out, "--threads", threads]);
    }
    for rel in [
        "data/manifest.json",
        "models/pfl/train.json",
        "models/pfl/body.ckpt",
        "models/local/client_0001.ckpt",
        "reports/pfl.json",
        "reports/pfl.csv",
        "reports/summary.json",
        "compare/comparison.csv",
        "compare/strata.csv",
        "compare/small_farms.csv",
    ] {
        let a = std::fs::read(dirs[0].join(rel)).unwrap();
        assert_eq!(a, std::fs::read(dirs[1].join(rel)).unwrap(), "{rel}");
    }
}
