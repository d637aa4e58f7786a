//! End-to-end command-line tests: file formats, determinism and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_suppose"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("suppose-cli-{name}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn synth_fit_twice_is_byte_identical() {
    let dir = tmp("determinism");
    run_ok(bin().args([
        "synth",
        "--scene",
        "na-doublet",
        "--seed",
        "2",
        "--noise-std",
        "13",
        "--out",
    ]).arg(dir.join("scene")));

    for sub in ["fit1", "fit2"] {
        run_ok(
            bin()
                .args(["fit", "--n", "12", "--mode", "subtracted", "--seed", "7", "--signal"])
                .arg(dir.join("scene/signal.csv"))
                .arg("--scenario")
                .arg(dir.join("scene/scenario.json"))
                .arg("--generations")
                .arg("300")
                .arg("--out")
                .arg(dir.join(sub)),
        );
    }
    let a = fs::read(dir.join("fit1/positions.csv")).unwrap();
    let b = fs::read(dir.join("fit2/positions.csv")).unwrap();
    assert_eq!(a, b, "positions differ between identical runs");
    let ta = fs::read(dir.join("fit1/chi2_trace.csv")).unwrap();
    let tb = fs::read(dir.join("fit2/chi2_trace.csv")).unwrap();
    assert_eq!(ta, tb);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn auto_and_explicit_n_op_agree() {
    let dir = tmp("auto-explicit");
    run_ok(bin().args([
        "synth",
        "--scene",
        "na-doublet",
        "--seed",
        "2",
        "--noise-std",
        "13",
        "--out",
    ]).arg(dir.join("scene")));

    run_ok(
        bin()
            .args(["fit", "--n", "auto", "--mode", "subtracted", "--seed", "2", "--signal"])
            .arg(dir.join("scene/signal.csv"))
            .arg("--scenario")
            .arg(dir.join("scene/scenario.json"))
            .arg("--out")
            .arg(dir.join("auto")),
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("auto/manifest.json")).unwrap()).unwrap();
    let n_op = manifest["n_op"].as_u64().expect("auto run records n_op");

    run_ok(
        bin()
            .args(["fit", "--mode", "subtracted", "--seed", "2"])
            .arg("--n")
            .arg(n_op.to_string())
            .arg("--signal")
            .arg(dir.join("scene/signal.csv"))
            .arg("--scenario")
            .arg(dir.join("scene/scenario.json"))
            .arg("--out")
            .arg(dir.join("explicit")),
    );
    let a = fs::read(dir.join("auto/positions.csv")).unwrap();
    let b = fs::read(dir.join("explicit/positions.csv")).unwrap();
    assert_eq!(a, b, "auto and explicit N_op runs differ");
    fs::remove_dir_all(dir).ok();
}

fn write_sech_record(path: &Path, center: f64, amp: f64) {
    // d0 = 5.6 px at 0.22 per pixel.
    let b = std::f64::consts::PI / (5.6 * 0.22);
    let mut text = String::from("coordinate,counts\n");
    for i in 0..41 {
        let x = i as f64 * 0.22;
        let u = x - center;
        let v = amp / ((b * u).exp() + (-b * u).exp());
        text.push_str(&format!("{x},{v}\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn calibrate_recovers_response_width() {
    let dir = tmp("calibrate");
    let records = dir.join("records");
    fs::create_dir_all(&records).unwrap();
    write_sech_record(&records.join("peak1.csv"), 4.18, 3.0);
    write_sech_record(&records.join("peak2.csv"), 4.40, 5.0);
    write_sech_record(&records.join("peak3.csv"), 4.62, 4.0);
    let stdout = run_ok(
        bin()
            .args(["calibrate", "--family", "asymmetric1d", "--records-dir"])
            .arg(&records)
            .arg("--out")
            .arg(dir.join("cal")),
    );
    assert!(stdout.contains("calibrated 3 records"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("cal/calibration.json")).unwrap())
            .unwrap();
    let d0 = manifest["d0"].as_f64().unwrap();
    let expect = 5.6 * 0.22;
    assert!(
        (d0 - expect).abs() < 0.05 * expect,
        "d0 {d0} vs expected {expect}"
    );
    assert!(dir.join("cal/g.csv").exists());
    assert!(dir.join("cal/g_autocorr.csv").exists());
    fs::remove_dir_all(dir).ok();
}

#[test]
fn empty_calibration_input_exits_2() {
    let dir = tmp("empty-cal");
    let records = dir.join("records");
    fs::create_dir_all(&records).unwrap();
    let out = bin()
        .args(["calibrate", "--family", "asymmetric1d", "--records-dir"])
        .arg(&records)
        .arg("--out")
        .arg(dir.join("cal"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    fs::remove_dir_all(dir).ok();
}

#[test]
fn generation_ceiling_exits_3() {
    let dir = tmp("ceiling");
    run_ok(bin().args([
        "synth",
        "--scene",
        "two-line",
        "--extent",
        "12",
        "--seed",
        "3",
        "--out",
    ]).arg(dir.join("scene")));
    // One source cannot represent the line pair within the noise floor.
    let out = bin()
        .args(["fit", "--n", "1", "--mode", "constant-bg", "--seed", "1", "--signal"])
        .arg(dir.join("scene/signal.pgm"))
        .arg("--scenario")
        .arg(dir.join("scene/scenario.json"))
        .arg("--generations")
        .arg("2")
        .arg("--out")
        .arg(dir.join("fit"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    // Outputs are still written.
    assert!(dir.join("fit/positions.csv").exists());
    fs::remove_dir_all(dir).ok();
}

#[test]
fn scenario_spec_roundtrips_through_synth() {
    let dir = tmp("spec-roundtrip");
    run_ok(bin().args([
        "synth",
        "--scene",
        "kr-triplet",
        "--seed",
        "5",
        "--noise-std",
        "3",
        "--out",
    ]).arg(dir.join("a")));
    // Re-synthesize from the emitted spec; outputs must be byte-identical.
    run_ok(
        bin()
            .args(["synth", "--spec"])
            .arg(dir.join("a/scenario.json"))
            .arg("--out")
            .arg(dir.join("b")),
    );
    let a = fs::read(dir.join("a/signal.csv")).unwrap();
    let b = fs::read(dir.join("b/signal.csv")).unwrap();
    assert_eq!(a, b);
    let sa = fs::read(dir.join("a/scenario.json")).unwrap();
    let sb = fs::read(dir.join("b/scenario.json")).unwrap();
    assert_eq!(sa, sb);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn single_source_fit_hits_eighth_pixel() {
    let dir = tmp("single-source");
    // Noiseless single line exactly on a pixel center.
    let spec = serde_json::json!({
        "label": "single",
        "grid": { "dim": 1, "extents": [64, 1], "pitch": [0.22, 1.0], "origin": [585.0, 0.0] },
        "irf": {
            "family": { "Asymmetric1D": { "a1": 0.35712535934754985, "b1": 2.5499, "b2": 2.5499 } },
            "pitch": [0.22, 1.0],
            "normalized": true
        },
        "truth": { "positions": [[585.0 + 30.0 * 0.22, 0.0]], "intensities": [700.0] },
        "background": 0.0,
        "peak_target": null,
        "noise": { "kind": "none" },
        "clip_16bit": false,
        "seed": 0
    });
    fs::create_dir_all(dir.join("scene")).unwrap();
    fs::write(
        dir.join("scene/scenario.json"),
        serde_json::to_string_pretty(&spec).unwrap(),
    )
    .unwrap();
    run_ok(
        bin()
            .args(["synth", "--spec"])
            .arg(dir.join("scene/scenario.json"))
            .arg("--out")
            .arg(dir.join("scene")),
    );
    run_ok(
        bin()
            .args(["fit", "--n", "1", "--mode", "none", "--seed", "1", "--noise-power", "0", "--signal"])
            .arg(dir.join("scene/signal.csv"))
            .arg("--scenario")
            .arg(dir.join("scene/scenario.json"))
            .arg("--generations")
            .arg("400")
            .arg("--out")
            .arg(dir.join("fit")),
    );
    let positions = fs::read_to_string(dir.join("fit/positions.csv")).unwrap();
    let x: f64 = positions.lines().nth(1).unwrap().trim().parse().unwrap();
    let truth = 585.0 + 30.0 * 0.22;
    assert!(
        (x - truth).abs() <= 0.22 / 8.0,
        "fitted {x} vs truth {truth}"
    );
    fs::remove_dir_all(dir).ok();
}

#[test]
fn evaluate_reports_matched_sigma() {
    let dir = tmp("evaluate");
    run_ok(bin().args([
        "synth",
        "--scene",
        "na-doublet",
        "--seed",
        "2",
        "--noise-std",
        "13",
        "--out",
    ]).arg(dir.join("scene")));
    run_ok(
        bin()
            .args(["fit", "--n", "auto", "--mode", "subtracted", "--seed", "2", "--signal"])
            .arg(dir.join("scene/signal.csv"))
            .arg("--scenario")
            .arg(dir.join("scene/scenario.json"))
            .arg("--out")
            .arg(dir.join("fit")),
    );
    run_ok(
        bin()
            .args(["evaluate", "--solution"])
            .arg(dir.join("fit/positions.csv"))
            .arg("--manifest")
            .arg(dir.join("fit/manifest.json"))
            .arg("--truth")
            .arg(dir.join("scene/truth.csv"))
            .arg("--scenario")
            .arg(dir.join("scene/scenario.json"))
            .arg("--out")
            .arg(dir.join("eval")),
    );
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("eval/eval.json")).unwrap()).unwrap();
    assert!(eval["nearest_rms"].as_f64().unwrap() < 0.5);
    assert!(eval["d0"].as_f64().unwrap() > 1.0);
    fs::remove_dir_all(dir).ok();
}
