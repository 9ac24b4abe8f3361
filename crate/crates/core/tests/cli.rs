use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rdest::estimators::{empirical, plugin_rd};
use rdest::sources::{parse_sample, ValueFormat};
use rdest::{DistortionModel, ExtReal};
use serde_json::Value;
use tempfile::TempDir;

fn rdest(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rdest"));
    cmd.args(args).env_remove("RD_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    rdest(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn h(p: f64) -> f64 {
    let t = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    t(p) + t(1.0 - p)
}

/// 70 zeros and 30 ones, interleaved.
fn binary_data(dir: &TempDir) -> PathBuf {
    let text: String = (0..100).map(|i| if i % 10 < 3 { "1\n" } else { "0\n" }).collect();
    write(dir, "bin.txt", &text)
}

#[test]
fn estimate_at_zero_distortion_is_empirical_entropy() {
    let dir = TempDir::new().unwrap();
    let text = "a\nb\nc\na\na\nb\na\nc\n";
    let input = write(&dir, "sym.txt", text);
    let out = run(&["estimate", "--in", s(&input), "--rho", "hamming", "--D", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    // counts 4, 2, 2
    let expected = -(0.5f64 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
    let got = doc["report"]["estimate"].as_f64().unwrap();
    assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    assert_eq!(doc["units"], "nats");
    assert_eq!(doc["report"]["estimator_kind"], "plug-in");
}

#[test]
fn gaussian_family_uses_empirical_variance() {
    let dir = TempDir::new().unwrap();
    let values = [0.3, -1.2, 0.8, 2.1, -0.4, 1.5, -2.2, 0.1, 0.9, -0.7];
    let text: String = values.iter().map(|v| format!("{v}\n")).collect();
    let input = write(&dir, "gauss.txt", &text);
    let out = run(&["estimate", "--in", s(&input), "--family", "gaussian", "--rho", "squared", "--D", "0.25"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let doc = json(&out);
    let got = doc["report"]["estimate"].as_f64().unwrap();
    assert!((got - 0.5 * (var / 0.25).ln()).abs() < 1e-9);
    assert_eq!(doc["report"]["estimator_kind"], "parametric");
    assert!(doc["report"]["theta_hat"].is_object());
}

#[test]
fn estimate_in_zero_rate_region() {
    let dir = TempDir::new().unwrap();
    let input = binary_data(&dir);
    let out = run(&["estimate", "--in", s(&input), "--rho", "hamming", "--D", "0.9"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["report"]["estimate"].as_f64(), Some(0.0));
}

#[test]
fn infinite_estimate_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let input = binary_data(&dir);
    let out = run(&["estimate", "--in", s(&input), "--rho", "hamming", "--repro", "0", "--D", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["report"]["estimate"], "inf");
}

#[test]
fn bits_flag_rescales_output() {
    let dir = TempDir::new().unwrap();
    let input = binary_data(&dir);
    let nats = json(&run(&["estimate", "--in", s(&input), "--rho", "hamming", "--D", "0.1"]));
    let bits = json(&run(&["estimate", "--in", s(&input), "--rho", "hamming", "--D", "0.1", "--bits"]));
    let (a, b) = (nats["report"]["estimate"].as_f64().unwrap(), bits["report"]["estimate"].as_f64().unwrap());
    assert!((a / std::f64::consts::LN_2 - b).abs() < 1e-12);
    assert_eq!(bits["units"], "bits");
}

#[test]
fn estimate_matches_library_call_exactly() {
    let dir = TempDir::new().unwrap();
    let input = binary_data(&dir);
    let out = run(&["estimate", "--in", s(&input), "--rho", "hamming", "--D", "0.13"]);
    let got = json(&out)["report"]["estimate"].as_f64().unwrap();

    let sample = parse_sample(&fs::read_to_string(&input).unwrap(), ValueFormat::Symbols).unwrap();
    let a = empirical(&sample).unwrap().symbols().to_vec();
    let model = DistortionModel::hamming(a.clone(), a).unwrap();
    let lib = plugin_rd(&sample, &model, 0.13).unwrap().estimate;
    assert_eq!(ExtReal::Finite(got), lib);
}

#[test]
fn lossy_estimator_reads_codebook_law() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "x.txt", "0\n1\n1\n0\n");
    let q = write(&dir, "q.json", r#"{"symbols": [0, 1], "probs": [0.5, 0.5]}"#);
    let out = run(&["estimate", "--in", s(&input), "--rho", "hamming", "--D", "0", "--estimator", "lossy", "--q", s(&q)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    // only the data string itself is in the ball: -(1/4) ln 2^-4 = ln 2
    assert!((doc["report"]["estimate"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);
    assert_eq!(doc["report"]["estimator_kind"], "lossy-likelihood");
}

#[test]
fn seed_precedence_flag_env_config_default() {
    let dir = TempDir::new().unwrap();
    let input = binary_data(&dir);
    let config = write(&dir, "cfg.json", &format!(r#"{{"in": "{}", "rho": "hamming", "D": 0.1, "seed": 7}}"#, s(&input)));
    let seed_of = |cmd: &mut Command| json(&cmd.output().unwrap())["config"]["seed"].as_u64().unwrap();

    assert_eq!(seed_of(rdest(&["estimate", "--config", s(&config), "--seed", "3"]).env("RD_SEED", "5")), 3);
    assert_eq!(seed_of(rdest(&["estimate", "--config", s(&config)]).env("RD_SEED", "5")), 5);
    assert_eq!(seed_of(&mut rdest(&["estimate", "--config", s(&config)])), 7);
    assert_eq!(seed_of(&mut rdest(&["estimate", "--in", s(&input), "--rho", "hamming", "--D", "0.1"])), 0);
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let input = binary_data(&dir);
    let config = write(&dir, "cfg.json", &format!(r#"{{"in": "{}", "rho": "hamming", "D": 0.9}}"#, s(&input)));
    let doc = json(&run(&["estimate", "--config", s(&config), "--D", "0"]));
    assert_eq!(doc["config"]["D"].as_f64(), Some(0.0));
    assert!((doc["report"]["estimate"].as_f64().unwrap() - h(0.3)).abs() < 1e-6);
}

fn parse_curve(text: &str) -> Vec<(f64, ExtReal)> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap(), vec!["D", "R", "slope"]);
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            let rate = match &r[1] {
                "inf" => ExtReal::Infinite,
                v => ExtReal::Finite(v.parse().unwrap()),
            };
            (r[0].parse().unwrap(), rate)
        })
        .collect()
}

#[test]
fn default_curve_follows_binary_entropy_difference() {
    let dir = TempDir::new().unwrap();
    let input = binary_data(&dir);
    let out = run(&["curve", "--in", s(&input), "--rho", "hamming"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = parse_curve(&stdout(&out));
    assert_eq!(rows.len(), 21);
    for (d, r) in rows {
        let expected = if d < 0.3 { h(0.3) - h(d) } else { 0.0 };
        assert!((r.to_f64() - expected).abs() < 1e-5, "D={d}: {r} vs {expected}");
    }
}

#[test]
fn single_point_curve_equals_estimate() {
    let dir = TempDir::new().unwrap();
    let input = binary_data(&dir);
    let rows = parse_curve(&stdout(&run(&["curve", "--in", s(&input), "--rho", "hamming", "--D", "0.17"])));
    assert_eq!(rows.len(), 1);
    let est = json(&run(&["estimate", "--in", s(&input), "--rho", "hamming", "--D", "0.17"]));
    assert_eq!(rows[0].1, ExtReal::Finite(est["report"]["estimate"].as_f64().unwrap()));
}

#[test]
fn curve_writes_to_file_and_accepts_slopes() {
    let dir = TempDir::new().unwrap();
    let input = binary_data(&dir);
    let target = dir.path().join("curve.csv");
    let out = run(&["curve", "--in", s(&input), "--rho", "hamming", "--slopes", "-4,-2,-1", "--out", s(&target)]);
    assert_eq!(out.status.code(), Some(0));
    let rows = parse_curve(&fs::read_to_string(&target).unwrap());
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 >= w[1].1));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let input = binary_data(&dir);
    let empty = run(&["curve", "--in", s(&input), "--rho", "hamming", "--d-grid", "0,0.5,0"]);
    assert_eq!(empty.status.code(), Some(1));
    let negative = run(&["estimate", "--in", s(&input), "--rho", "hamming", "--D", "-1"]);
    assert_eq!(negative.status.code(), Some(1));
    let missing = run(&["estimate", "--in", s(&dir.path().join("nope.txt")), "--rho", "hamming", "--D", "0"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(run(&["estimate", "--bogus"]).status.code(), Some(1));
}

#[test]
fn unknown_experiment_lists_valid_names() {
    let dir = TempDir::new().unwrap();
    let out = run(&["experiment", "nonsense", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    for name in ["consistency", "failure-demo", "discontinuity-demo", "arginf", "mth-order"] {
        assert!(err.contains(name), "{err}");
    }
}

fn read_outputs(dir: &Path, name: &str) -> (String, Value) {
    let csv_text = fs::read_to_string(dir.join(format!("{name}.csv"))).unwrap();
    let summary = serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.json"))).unwrap()).unwrap();
    (csv_text, summary)
}

#[test]
fn consistency_experiment_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let args = ["experiment", "consistency", "--preset", "bernoulli-hamming", "--seeds", "3", "--n-max", "1000"];
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let target = dir.path().join(sub);
        let mut full = args.to_vec();
        full.extend(["--out", s(&target)]);
        let out = run(&full);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let _: Value = json(&out);
        outputs.push(read_outputs(&target, "consistency"));
    }
    assert_eq!(outputs[0].0, outputs[1].0);
    assert_eq!(outputs[0].1, outputs[1].1);
    let mut reader = csv::Reader::from_reader(outputs[0].0.as_bytes());
    assert_eq!(reader.headers().unwrap(), vec!["n", "seed", "D", "estimate", "oracle", "abs_err", "flag"]);
    // n in {100, 1000}, 3 seeds
    assert_eq!(reader.records().count(), 6);
    assert_eq!(outputs[0].1["metadata"]["seeds"], 3);
}

#[test]
fn seed_changes_experiment_data() {
    let dir = TempDir::new().unwrap();
    let base = ["experiment", "consistency", "--seeds", "2", "--n-max", "500"];
    let mut texts = Vec::new();
    for (sub, seed) in [("x", Some("1")), ("y", Some("2")), ("z", None)] {
        let target = dir.path().join(sub);
        let mut cmd = rdest(&base);
        cmd.args(["--out", s(&target)]);
        if let Some(seed) = seed {
            cmd.env("RD_SEED", seed);
        }
        assert_eq!(cmd.output().unwrap().status.code(), Some(0));
        texts.push(read_outputs(&target, "consistency").0);
    }
    assert_ne!(texts[0], texts[1]);
    assert_ne!(texts[0], texts[2]);
}

#[test]
fn failure_demo_summary() {
    let dir = TempDir::new().unwrap();
    let out = run(&["experiment", "failure-demo", "--p", "0.5", "--seeds", "4", "--n-max", "400", "--D", "0.6", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["summary"]["tail_zero"], 4);
    let (text, _) = read_outputs(dir.path(), "failure-demo");
    assert!(text.lines().count() > 4);
}

#[test]
fn mth_order_experiment_uses_blocks() {
    let dir = TempDir::new().unwrap();
    let out = run(&["experiment", "mth-order", "--m", "2", "--seeds", "2", "--n-max", "2000", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, summary) = read_outputs(dir.path(), "mth-order");
    assert_eq!(summary["metadata"]["estimator"]["kind"], "mth-order");
    assert_eq!(summary["metadata"]["estimator"]["m"], 2);
}

#[test]
fn version_and_help() {
    let out = run(&["version"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), format!("rdest {}", env!("CARGO_PKG_VERSION")));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
