//! End-to-end runs of the binary: presets, file formats, exit codes, and
//! golden-file stability.

use std::path::Path;
use std::process::Command;

fn optliq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optliq"))
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("missing {name} in {}: {e}", dir.display()))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(dir, "manifest.json")).expect("valid manifest json")
}

#[test]
fn solve_preset_emits_both_surfaces_with_exact_terminal_row() {
    let tmp = tempfile::tempdir().unwrap();
    let status = optliq()
        .args(["solve", "--preset", "fig2", "--out"])
        .arg(tmp.path())
        .args(["--dt", "1.0"])
        .status()
        .unwrap();
    assert!(status.success());

    let theta = read(tmp.path(), "theta.csv");
    let mut lines = theta.lines();
    assert_eq!(lines.next(), Some("t,q,theta"));
    // 301 time nodes × 9 inventory levels.
    assert_eq!(theta.lines().count(), 1 + 301 * 9);
    assert!(theta.lines().last().unwrap().starts_with("300,400,-1200"));

    let quotes = read(tmp.path(), "quotes.csv");
    assert_eq!(quotes.lines().next(), Some("t,q,delta_star"));
    assert_eq!(quotes.lines().count(), 1 + 301 * 8);

    let m = manifest(tmp.path());
    assert_eq!(m["subcommand"], "solve");
    assert_eq!(m["preset"], "fig2");
    assert_eq!(m["config"]["problem"]["q0"], 400.0);
}

#[test]
fn preset_runs_are_byte_identical() {
    let run = || {
        let tmp = tempfile::tempdir().unwrap();
        let status = optliq()
            .args(["solve", "--preset", "fig2", "--out"])
            .arg(tmp.path())
            .args(["--dt", "2.0"])
            .status()
            .unwrap();
        assert!(status.success());
        (
            read(tmp.path(), "theta.csv"),
            read(tmp.path(), "quotes.csv"),
            read(tmp.path(), "manifest.json"),
        )
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
}

#[test]
fn asymptotic_preset_reports_the_stationary_quote() {
    let tmp = tempfile::tempdir().unwrap();
    let status = optliq()
        .args(["asymptotic", "--preset", "fig2", "--out"])
        .arg(tmp.path())
        .status()
        .unwrap();
    assert!(status.success());
    let value: f64 = read(tmp.path(), "delta_star_inf.txt").trim().parse().unwrap();
    assert!((value - 2.283930036369228).abs() < 1e-3, "{value}");
    let theta_inf = read(tmp.path(), "theta_inf.csv");
    assert_eq!(theta_inf.lines().count(), 1 + 9);
    let m = manifest(tmp.path());
    assert!((m["report"]["delta_star_inf"].as_f64().unwrap() - value).abs() < 1e-12);
}

#[test]
fn validate_intensity_passes_the_plateau_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let status = optliq()
        .args(["validate-intensity", "--preset", "fig1", "--out"])
        .arg(tmp.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = read(tmp.path(), "validation.csv");
    for hypothesis in ["positivity", "strict_decrease", "curvature", "tail_decay"] {
        assert!(
            csv.contains(&format!("{hypothesis},true")),
            "{hypothesis} not passing:\n{csv}"
        );
    }
    assert_eq!(manifest(tmp.path())["report"]["all_passed"], true);
}

#[test]
fn negative_gamma_exits_2_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{
            "problem": {"q0": 400.0, "delta_size": 50.0, "horizon_s": 300.0,
                        "mu": 0.0, "sigma": 0.3, "gamma": -1.0,
                        "penalty": {"constant": 3.0}},
            "intensity": {"exponential": {"A": 0.1, "k": 0.3}}
        }"#,
    )
    .unwrap();
    let out = optliq()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gamma"), "stderr: {stderr}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("extra.json");
    std::fs::write(
        &cfg,
        r#"{
            "problem": {"q0": 400.0, "delta_size": 50.0, "horizon_s": 300.0,
                        "mu": 0.0, "sigma": 0.3, "gamma": 0.001,
                        "penalty": {"constant": 3.0}},
            "intensity": {"exponential": {"A": 0.1, "k": 0.3}},
            "surprise": true
        }"#,
    )
    .unwrap();
    let out = optliq()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("surprise"), "stderr: {stderr}");
}

#[test]
fn cfl_violation_exits_2_with_a_suggested_step() {
    let tmp = tempfile::tempdir().unwrap();
    let out = optliq()
        .args(["limit", "--preset", "fig2", "--out"])
        .arg(tmp.path())
        .args(["--dt", "3.0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("use dt <="), "stderr: {stderr}");
}

#[test]
fn constrained_preset_reports_the_floored_surface_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let status = optliq()
        .args(["constrained", "--preset", "fig4", "--out"])
        .arg(tmp.path())
        .args(["--dt", "0.5"])
        .status()
        .unwrap();
    assert!(status.success());
    let quotes = read(tmp.path(), "quotes.csv");
    for line in quotes.lines().skip(1) {
        let quote: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(quote >= 0.0, "negative quote in constrained run: {line}");
    }
    let m = manifest(tmp.path());
    let gap = m["report"]["sup_quote_gap_vs_floored"].as_f64().unwrap();
    assert!(gap >= 0.0 && gap < 0.5, "gap {gap}");
    assert!(tmp.path().join("quotes_floored.csv").exists());
}

#[test]
fn study_preset_emits_decreasing_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let status = optliq()
        .args(["study", "--preset", "fig2", "--out"])
        .arg(tmp.path())
        .args(["--dt", "0.05"])
        .status()
        .unwrap();
    assert!(status.success());
    let study = read(tmp.path(), "study.csv");
    let errors: Vec<f64> = study
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(errors.len(), 3);
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn simulate_with_constant_policy_writes_tournament_and_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    std::fs::write(
        &cfg,
        r#"{
            "problem": {"q0": 200.0, "delta_size": 50.0, "horizon_s": 60.0,
                        "mu": 0.0, "sigma": 0.3, "gamma": 0.001,
                        "penalty": {"constant": 3.0}},
            "intensity": {"exponential": {"A": 0.1, "k": 0.3}},
            "simulate": {"paths": 500, "dt": 0.05, "seed": 5,
                         "policies": [{"constant": 2.0}, {"constant": 4.0}],
                         "dump_paths": true}
        }"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let status = optliq()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let tournament = read(&out_dir, "tournament.csv");
    assert_eq!(tournament.lines().count(), 3);
    let paths = read(&out_dir, "paths.csv");
    assert_eq!(paths.lines().next(), Some("path,fills,X_T,q_T,S_T,utility"));
    assert_eq!(paths.lines().count(), 1 + 500);
    assert!(out_dir.join("histogram.csv").exists());
}

#[test]
fn multi_and_mm_configs_run() {
    let tmp = tempfile::tempdir().unwrap();
    let repo_configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");

    let out_multi = tmp.path().join("multi");
    let status = optliq()
        .args(["multi", "--config"])
        .arg(repo_configs.join("multi_two_asset.json"))
        .arg("--out")
        .arg(&out_multi)
        .args(["--dt", "0.5"])
        .status()
        .unwrap();
    assert!(status.success());
    let theta = read(&out_multi, "theta.csv");
    assert_eq!(theta.lines().next(), Some("t,q1,q2,theta"));
    // 601 times × 5×5 lattice nodes.
    assert_eq!(theta.lines().count(), 1 + 601 * 25);
    let quotes = read(&out_multi, "quotes.csv");
    assert_eq!(quotes.lines().next(), Some("t,q1,q2,asset,delta_star"));

    let out_mm = tmp.path().join("mm");
    let status = optliq()
        .args(["mm", "--config"])
        .arg(repo_configs.join("market_maker.json"))
        .arg("--out")
        .arg(&out_mm)
        .args(["--dt", "0.5"])
        .status()
        .unwrap();
    assert!(status.success());
    let quotes = read(&out_mm, "quotes.csv");
    assert_eq!(quotes.lines().next(), Some("t,q,side,delta_star"));
    assert!(quotes.contains(",bid,"));
    assert!(quotes.contains(",ask,"));
}
