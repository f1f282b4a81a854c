//! End-to-end runs of the `fluxres` binary: generate, fit, analyze.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fluxres() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fluxres"));
    cmd.env_remove("FLUXRES_CONFIG");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("binary runs").status.code().unwrap_or(-1)
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fluxres-it-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Short-record configuration so noise scenarios stay fast in tests.
fn short_noise_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        "rng_seed = 42\n\
         [noise]\n\
         record_seconds = 1.0\n\
         segment_length = 2048\n",
    )
    .unwrap();
    path
}

#[test]
fn validate_config_prints_normalized_form() {
    let out = run_ok(fluxres().arg("validate-config"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("configuration OK"), "{stdout}");
    assert!(stdout.contains("beta_L"), "{stdout}");
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = temp_dir("badcfg");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[squid]\ncritical_current_a = -3.0\n").unwrap();
    let code = exit_code(fluxres().arg("--config").arg(&cfg).arg("validate-config"));
    assert_eq!(code, 2);

    let cfg2 = dir.join("unknown.toml");
    std::fs::write(&cfg2, "[squid]\nmystery_knob = 1\n").unwrap();
    let strict = exit_code(
        fluxres()
            .arg("--config")
            .arg(&cfg2)
            .arg("--strict")
            .arg("validate-config"),
    );
    assert_eq!(strict, 2);
    let lax = exit_code(fluxres().arg("--config").arg(&cfg2).arg("validate-config"));
    assert_eq!(lax, 0);
}

#[test]
fn simulate_tuning_places_jump_at_reference_flux() {
    let dir = temp_dir("simtune");
    run_ok(
        fluxres()
            .arg("--out")
            .arg(&dir)
            .arg("simulate-tuning")
            .arg("--points")
            .arg("2001"),
    );
    let csv = std::fs::read_to_string(dir.join("tuning_curve.csv")).unwrap();
    assert!(csv.starts_with("# fluxres tuning-curve v1"));
    let jump_flux: Vec<f64> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && l.ends_with(",1"))
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(jump_flux.len(), 1, "expected exactly one jump: {jump_flux:?}");
    assert!(
        (jump_flux[0] - 0.545).abs() < 1.5e-3,
        "jump at {}",
        jump_flux[0]
    );
    assert!(dir.join("tuning_curve.svg").exists());
}

#[test]
fn empty_ramp_warns_and_exits_zero() {
    let dir = temp_dir("emptyramp");
    let out = run_ok(
        fluxres()
            .arg("--out")
            .arg(&dir)
            .arg("simulate-tuning")
            .arg("--points")
            .arg("0"),
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("empty flux ramp"), "{stderr}");
    let csv = std::fs::read_to_string(dir.join("tuning_curve.csv")).unwrap();
    assert!(csv.lines().all(|l| l.starts_with('#')));
}

#[test]
fn noiseless_s21_generation_round_trips_through_the_fitter() {
    let dir = temp_dir("s21rt");
    run_ok(
        fluxres()
            .arg("--out")
            .arg(&dir)
            .arg("generate")
            .arg("--scenario")
            .arg("s21")
            .arg("--noise-sigma")
            .arg("0"),
    );
    run_ok(
        fluxres()
            .arg("--out")
            .arg(&dir)
            .arg("fit-s21")
            .arg(dir.join("s21_sweep.csv")),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("s21_sweep_fit.json")).unwrap())
            .unwrap();
    let fit = &report["fit"];
    let f0 = fit["f0"].as_f64().unwrap();
    let qi = fit["qi"].as_f64().unwrap();
    let qc = fit["qc"].as_f64().unwrap();
    assert!((f0 - 5.6513e9).abs() / 5.6513e9 < 1e-6, "f0 = {f0}");
    assert!((qi - 1.41e5).abs() / 1.41e5 < 1e-6, "qi = {qi}");
    assert!((qc - 1.41e5).abs() / 1.41e5 < 1e-6, "qc = {qc}");
    assert!(dir.join("s21_sweep_amplitude.svg").exists());
    assert!(dir.join("s21_sweep_circle.svg").exists());
}

#[test]
fn corrupt_and_resonance_free_sweeps_use_distinct_exit_codes() {
    let dir = temp_dir("badsweeps");
    let truncated = dir.join("truncated.csv");
    std::fs::write(
        &truncated,
        "# fluxres s21-sweep v1\n# columns: frequency_hz,s21_re,s21_im\n1e9,0.5,0.1\n2e9,0.5\n",
    )
    .unwrap();
    let mut cmd = fluxres();
    cmd.arg("--out").arg(&dir).arg("fit-s21").arg(&truncated);
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("line 4"),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    // A flat trace has no resonance: fit failure, no report written.
    let flat = dir.join("flat.csv");
    let mut body = String::from("# fluxres s21-sweep v1\n# columns: frequency_hz,s21_re,s21_im\n");
    for i in 0..200 {
        body.push_str(&format!("{},0.5,0.0\n", 5.0e9 + 1e4 * i as f64));
    }
    std::fs::write(&flat, body).unwrap();
    let code = exit_code(fluxres().arg("--out").arg(&dir).arg("fit-s21").arg(&flat));
    assert_eq!(code, 3);
    assert!(!dir.join("flat_fit.json").exists());
}

#[test]
fn generated_tuning_curve_fits_back_to_reference_screening() {
    let dir = temp_dir("tunfit");
    run_ok(
        fluxres()
            .arg("--out")
            .arg(&dir)
            .arg("generate")
            .arg("--scenario")
            .arg("tuning"),
    );
    run_ok(
        fluxres()
            .arg("--out")
            .arg(&dir)
            .arg("fit-tuning")
            .arg(dir.join("tuning_curve.csv")),
    );
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("tuning_curve_tuning_fit.json")).unwrap(),
    )
    .unwrap();
    let beta = report["fit"]["beta_l"].as_f64().unwrap();
    assert!((beta - 1.5071).abs() < 0.01, "beta_L = {beta}");
    let split = report["fit"]["arm_split_fraction"].as_f64().unwrap();
    assert!((split - 0.5).abs() < 0.02, "split = {split}");
}

#[test]
fn generation_is_seed_deterministic() {
    let dir_a = temp_dir("det-a");
    let dir_b = temp_dir("det-b");
    let dir_c = temp_dir("det-c");
    let cfg = short_noise_config(&dir_a);
    for (dir, seed) in [(&dir_a, "7"), (&dir_b, "7"), (&dir_c, "8")] {
        run_ok(
            fluxres()
                .arg("--config")
                .arg(&cfg)
                .arg("--seed")
                .arg(seed)
                .arg("--out")
                .arg(dir)
                .arg("generate")
                .arg("--scenario")
                .arg("noise-power"),
        );
    }
    let checksums = |dir: &Path| -> Vec<(String, String)> {
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap())
                .unwrap();
        manifest["records"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                (
                    r["path"].as_str().unwrap().to_string(),
                    r["checksum_sha256"].as_str().unwrap().to_string(),
                )
            })
            .collect()
    };
    let a = checksums(&dir_a);
    let b = checksums(&dir_b);
    let c = checksums(&dir_c);
    assert_eq!(a, b, "same seed must give byte-identical datasets");
    assert_ne!(a, c, "different seeds must change the data");
}

#[test]
fn noise_pipeline_recovers_power_scaling_end_to_end() {
    let dir = temp_dir("noisepower");
    let cfg = short_noise_config(&dir);
    run_ok(
        fluxres()
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&dir)
            .arg("generate")
            .arg("--scenario")
            .arg("noise-power"),
    );
    run_ok(
        fluxres()
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&dir)
            .arg("noise")
            .arg(dir.join("manifest.json")),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("noise_report.json")).unwrap())
            .unwrap();
    let slope = report["noise_vs_power"]["exponent"].as_f64().unwrap();
    assert!(
        (slope + 0.5).abs() < 0.2,
        "short-record slope {slope} strays too far from -0.5"
    );
    // Flux aggregate is not applicable: a single flux point.
    assert!(report["noise_vs_flux"]["status"]
        .as_str()
        .unwrap()
        .contains("not applicable"));
    assert_eq!(report["records"].as_array().unwrap().len(), 4);
    assert!(dir.join("spectra.svg").exists());
    assert!(dir.join("noise_vs_power.svg").exists());
    // Per-record spectra files exist.
    for rec in report["records"].as_array().unwrap() {
        assert!(dir.join(rec["spectrum_file"].as_str().unwrap()).exists());
    }
}

#[test]
fn tampered_record_is_skipped_with_error_entry() {
    let dir = temp_dir("tamper");
    let cfg = short_noise_config(&dir);
    run_ok(
        fluxres()
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&dir)
            .arg("generate")
            .arg("--scenario")
            .arg("noise-power"),
    );
    // Flip bytes in one record after the manifest was written.
    let victim = dir.join("iq_power_90dbm.iq");
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&victim, bytes).unwrap();
    run_ok(
        fluxres()
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&dir)
            .arg("noise")
            .arg(dir.join("manifest.json")),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("noise_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 3);
    let skipped = report["skipped"].as_array().unwrap();
    assert_eq!(skipped.len(), 1);
    assert!(skipped[0]["error"]
        .as_str()
        .unwrap()
        .contains("checksum mismatch"));
}

#[test]
fn noise_requires_iq_records() {
    let dir = temp_dir("noiq");
    run_ok(
        fluxres()
            .arg("--out")
            .arg(&dir)
            .arg("generate")
            .arg("--scenario")
            .arg("s21"),
    );
    let code = exit_code(
        fluxres()
            .arg("--out")
            .arg(&dir)
            .arg("noise")
            .arg(dir.join("manifest.json")),
    );
    assert_eq!(code, 2);
}

#[test]
fn config_path_honored_from_environment() {
    let dir = temp_dir("envcfg");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[noise]\noverlap_fraction = 5.0\n").unwrap();
    let code = Command::new(env!("CARGO_BIN_EXE_fluxres"))
        .env("FLUXRES_CONFIG", &cfg)
        .arg("validate-config")
        .output()
        .unwrap()
        .status
        .code();
    assert_eq!(code, Some(2));
}

#[test]
fn unknown_scenario_lists_valid_ones() {
    let out = fluxres()
        .arg("generate")
        .arg("--scenario")
        .arg("bogus")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("s21"), "{stderr}");
    assert!(stderr.contains("noise-power"), "{stderr}");
}
