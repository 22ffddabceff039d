//! End-to-end runs of the `spintrack` binary.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spintrack"));
    c.env_remove("SPINTRACK_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).expect("json summary on stdout")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const MINIMAL: &str = r#"{
    "version": 1, "seed": 11,
    "system": {"larmor_hz": 2154900, "nuclei": [{"a_par_hz": 0, "a_perp_hz": 20000}]},
    "protocol": {"preset": "weak-trace", "n_samples": 64}
}"#;

/// Ideal-coupling weak trace at conditional rotation `beta_deg`.
fn weak_config(beta_deg: f64, n: usize) -> String {
    let t_beta = 1.856e-6;
    let a_perp_hz = beta_deg.to_radians() / t_beta / 2.0;
    format!(
        r#"{{
        "version": 1, "seed": 2,
        "system": {{"larmor_hz": 2154900, "nuclei": [{{"a_par_hz": 0, "a_perp_hz": {a_perp_hz}}}]}},
        "protocol": {{"preset": "weak-trace", "n_samples": {n}, "overhead_s": 0}},
        "engine": {{"coupling": "ideal"}},
        "noise": {{"gamma_n_per_s": 7462.686567164179}}
    }}"#
    )
}

fn data_rows(p: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn minimal_config_gives_n_rows() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", MINIMAL);
    let out = d.path().join("o");
    let v = ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(v["n_samples"], 64);
    let text = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(text.starts_with("# spintrack trace v1\n# config {"));
    assert!(text.contains("\nindex,time_s,signal\n"));
    assert_eq!(data_rows(&out.join("trace.csv")).len(), 64);
}

#[test]
fn strong_measurement_collapses_quickly() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", &weak_config(66.3, 200));
    ok(&["simulate", "--config", s(&cfg), "--out", s(d.path())]);
    ok(&["analyze", s(&d.path().join("trace.csv"))]);
    let a = json(&d.path().join("trace.analysis.json"));
    let gamma = a["sinusoid"]["gamma_per_s"].as_f64().unwrap();
    assert_eq!(a["sinusoid"]["status"], "ok");
    assert!(gamma > 5.0 * 7462.7, "gamma {gamma}");
}

#[test]
fn same_seed_is_byte_identical_and_embedded_config_reproduces() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "c.json",
        &MINIMAL.replace(
            "\"n_samples\": 64}",
            "\"n_samples\": 64}, \"repetitions\": 3, \"readout\": {\"epsilon\": 0.35, \"c0\": 0.1, \"reps\": 1000}",
        ),
    );
    let (a, b, c) = (d.path().join("a"), d.path().join("b"), d.path().join("c"));
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b), "--jobs", "1"]);
    let ta = fs::read(a.join("trace.csv")).unwrap();
    assert_eq!(ta, fs::read(b.join("trace.csv")).unwrap());
    ok(&["simulate", "--config", s(&a.join("trace.csv")), "--out", s(&c)]);
    assert_eq!(ta, fs::read(c.join("trace.csv")).unwrap());
    let other = d.path().join("other");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&other), "--seed", "12"]);
    assert_ne!(ta, fs::read(other.join("trace.csv")).unwrap());
}

#[test]
fn output_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", MINIMAL);
    let out = d.path().join("env_out");
    let o = bin()
        .args(["simulate", "--config", s(&cfg)])
        .env("SPINTRACK_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("trace.csv").exists());
}

#[test]
fn unknown_key_is_config_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", &MINIMAL.replace("\"seed\"", "\"sede\""));
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(d.path())]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("sede"));
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(run(&["simulate"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--engine", "quantum"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn analytic_engine_rejects_several_nuclei() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "c.json",
        &MINIMAL.replace("]}", ", {\"a_par_hz\": 1000, \"a_perp_hz\": 5000}]}"),
    );
    ok(&["simulate", "--config", s(&cfg), "--out", s(d.path())]);
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(d.path()), "--engine", "analytic"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_trace_is_format_error() {
    let d = tempfile::tempdir().unwrap();
    let bad = write(d.path(), "bad.csv", "index,time_s,signal\n0,0,0.1\n1,1e-6,oops\n2,2e-6,0\n3,3e-6,0\n");
    let o = run(&["analyze", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "format");
    let o = run(&["analyze", s(&d.path().join("missing.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_point_sweep_matches_simulate_and_analyze() {
    let d = tempfile::tempdir().unwrap();
    let base = weak_config(35.0, 150);
    let cfg = write(d.path(), "c.json", &base);
    let sweep_cfg = write(
        d.path(),
        "s.json",
        &base.replacen("\"version\": 1,", "\"version\": 1, \"sweep\": {\"axis\": \"t_s\", \"values\": [7.1e-6]},", 1),
    );
    let sim = d.path().join("sim");
    let sw = d.path().join("sw");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    ok(&["analyze", s(&sim.join("trace.csv"))]);
    ok(&["sweep", "--config", s(&sweep_cfg), "--out", s(&sw)]);

    let col = |p: &Path, i: usize| -> Vec<String> { data_rows(p).into_iter().map(|r| r[i].clone()).collect() };
    assert_eq!(col(&sim.join("trace.csv"), 2), col(&sw.join("traces/point_000.csv"), 2));

    let single = json(&sim.join("trace.analysis.json"));
    let fits = json(&sw.join("fits.json"));
    assert_eq!(fits["axis"], "t_s");
    assert_eq!(fits["points"][0]["analysis"], single);

    let rows = data_rows(&sw.join("summary.csv"));
    assert_eq!(rows.len(), 1);
    let f = &single["sinusoid"];
    for (k, key) in [(1, "a0"), (2, "a0_err"), (3, "gamma_per_s"), (4, "gamma_err"), (5, "f0_hz"), (6, "f0_err")] {
        assert_eq!(rows[0][k].parse::<f64>().unwrap(), f[key].as_f64().unwrap(), "{key}");
    }
    let header = fs::read_to_string(sw.join("summary.csv")).unwrap();
    assert!(header.starts_with("axis,A0,A0_err,gamma_s,gamma_err,f0_hz,f0_err,"));
}

#[test]
fn sweep_rows_sorted_and_decay_grows_with_beta() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "s.json",
        &weak_config(10.0, 150).replacen(
            "\"version\": 1,",
            "\"version\": 1, \"sweep\": {\"axis\": \"beta_deg\", \"values\": [35, 5, 20]},",
            1,
        ),
    );
    let v = ok(&["sweep", "--config", s(&cfg), "--out", s(d.path())]);
    assert_eq!(v["points"], 3);
    let rows = data_rows(&d.path().join("summary.csv"));
    let axis: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(axis, vec![5.0, 20.0, 35.0]);
    let gamma: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(gamma[0] < gamma[1] && gamma[1] < gamma[2], "{gamma:?}");
    // the point index in the trace name follows the config order
    assert_eq!(rows[0][9], "traces/point_001.csv");
}

#[test]
fn alpha_sweep_writes_spectra_matrix() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "a.json",
        r#"{"version": 1,
        "system": {"larmor_hz": 2154900, "nuclei": [{"a_par_hz": 0, "a_perp_hz": 20000}]},
        "protocol": {"preset": "alpha-sweep", "n_samples": 64},
        "engine": {"coupling": "ideal"},
        "sweep": {"axis": "alpha_rad", "linear": {"start": 2.0, "stop": 2.2, "step": 0.1}}}"#,
    );
    ok(&["sweep", "--config", s(&cfg), "--out", s(d.path())]);
    let rows = data_rows(&d.path().join("spectra_matrix.csv"));
    // 64 samples padded 4x give 129 one-sided bins per point
    assert_eq!(rows.len(), 3 * 129);
    assert!(fs::read_to_string(d.path().join("spectra_matrix.csv"))
        .unwrap()
        .starts_with("axis,freq_hz,power,power_norm\n"));
}

#[test]
fn analyze_is_idempotent() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", MINIMAL);
    ok(&["simulate", "--config", s(&cfg), "--out", s(d.path())]);
    let trace = d.path().join("trace.csv");
    ok(&["analyze", s(&trace)]);
    let first = (
        fs::read(d.path().join("trace.spectrum.csv")).unwrap(),
        fs::read(d.path().join("trace.analysis.json")).unwrap(),
    );
    ok(&["analyze", s(&trace)]);
    assert_eq!(first.0, fs::read(d.path().join("trace.spectrum.csv")).unwrap());
    assert_eq!(first.1, fs::read(d.path().join("trace.analysis.json")).unwrap());
    let spec = fs::read_to_string(d.path().join("trace.spectrum.csv")).unwrap();
    assert!(spec.starts_with("freq_hz,power,power_norm\n"));
}

#[test]
fn undersampled_trace_unfolds_to_larmor_frequency() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "b.json",
        r#"{"version": 1, "seed": 4,
        "system": {"larmor_hz": 2154900, "nuclei": [{"a_par_hz": 0, "a_perp_hz": 30000}]},
        "protocol": {"preset": "bath-spectrum", "n_samples": 600},
        "noise": {"gamma_n_per_s": 7462.686567164179}}"#,
    );
    ok(&["simulate", "--config", s(&cfg), "--out", s(d.path())]);
    let v = ok(&["analyze", s(&d.path().join("trace.csv"))]);
    let top = v["peaks"][0].as_f64().unwrap();
    assert!((top - 2.1549e6).abs() < 2e3, "peak at {top}");
    let a = json(&d.path().join("trace.analysis.json"));
    let apparent = a["peaks"][0]["freq_hz"].as_f64().unwrap();
    assert!(apparent < 0.5 / 5.68e-6);
    let v = ok(&["analyze", s(&d.path().join("trace.csv")), "--no-unfold"]);
    assert_eq!(v["peaks"][0].as_f64().unwrap(), apparent);
}

#[test]
fn two_tone_trace_gives_ordered_peaks() {
    let d = tempfile::tempdir().unwrap();
    let t_s = 1e-5;
    let mut body = String::from("time_s,signal\n");
    for k in 0..1024 {
        let t = k as f64 * t_s;
        let v = 0.3 * (2.0 * PI * 12e3 * t).sin() + 0.1 * (2.0 * PI * 31e3 * t + 1.0).sin();
        body.push_str(&format!("{t},{v}\n"));
    }
    let p = write(d.path(), "two.csv", &body);
    ok(&["analyze", s(&p)]);
    let a = json(&d.path().join("two.analysis.json"));
    let peaks = a["peaks"].as_array().unwrap();
    assert!(peaks.len() >= 2, "{peaks:?}");
    let f: Vec<f64> = peaks.iter().map(|p| p["freq_hz"].as_f64().unwrap()).collect();
    let h: Vec<f64> = peaks.iter().map(|p| p["height"].as_f64().unwrap()).collect();
    assert!((f[0] - 12e3).abs() < 50.0 && (f[1] - 31e3).abs() < 50.0, "{f:?}");
    assert!(h[0] > h[1]);
    assert!(peaks[0].get("unfolded_hz").is_none());
}

fn filter_rows(dir: &Path) -> (Value, Vec<(f64, f64)>) {
    let text = fs::read_to_string(dir.join("filter.csv")).unwrap();
    let ann: Value = serde_json::from_str(text.lines().next().unwrap().strip_prefix("# filter ").unwrap()).unwrap();
    let rows = data_rows(&dir.join("filter.csv"))
        .into_iter()
        .map(|r| (r[0].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    (ann, rows)
}

#[test]
fn filter_centre_and_scaling() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["filter", "--tau", "116e-9", "--n-pulses", "8", "--out", s(&a)]);
    ok(&["filter", "--tau", "232e-9", "--n-pulses", "8", "--out", s(&b)]);
    let (ann_a, _) = filter_rows(&a);
    let (ann_b, _) = filter_rows(&b);
    let fc = ann_a["f_c_hz"].as_f64().unwrap();
    assert!((fc - 2.154e6).abs() < 2e3, "{fc}");
    assert!((ann_b["f_c_hz"].as_f64().unwrap() * 2.0 - fc).abs() < 1e-6);
    assert!((ann_a["inv_t_beta_hz"].as_f64().unwrap() - 1.0 / 1.856e-6).abs() < 1e-6);
    assert!(ann_a["nyquist_hz"].as_f64().unwrap() > 0.0);
}

#[test]
fn filter_fwhm_of_emitted_samples() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "filter", "--tau", "116e-9", "--n-pulses", "8", "--points", "40001", "--out", s(d.path()),
    ]);
    let (ann, rows) = filter_rows(d.path());
    let peak = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let above: Vec<f64> = rows.iter().filter(|r| r.1 >= 0.5 * peak).map(|r| r.0).collect();
    let scanned = above.last().unwrap() - above.first().unwrap();
    let reported = ann["fwhm_hz"].as_f64().unwrap();
    let step = rows[1].0 - rows[0].0;
    assert!((scanned - reported).abs() < 2.0 * step, "{scanned} vs {reported}");
    // width in units of the inverse interaction time
    assert!((reported * 1.856e-6 - 1.2).abs() < 0.01, "{}", reported * 1.856e-6);
}

#[test]
fn filter_rejects_bad_range() {
    let o = run(&["filter", "--f-min-hz", "5e6", "--f-max-hz", "1e6"]);
    assert_eq!(o.status.code(), Some(1));
}
