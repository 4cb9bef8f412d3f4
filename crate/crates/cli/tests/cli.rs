use std::path::Path;
use std::process::{Command, Output};

use bethe_core::exact::{lyapunov_exact_cauchy, TreeParams};
use bethe_core::report::read_table;

const SMALL: [&str; 8] = ["--n-pool", "2000", "--set", "mc/burn_in=20", "--set", "mc/measure_sweeps=10", "--set", "mc/n_batches=5"];

fn bethe(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bethe"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "error")
        .env_remove("BETHE_WORKERS")
        .output()
        .expect("binary runs")
}

fn column(table: &bethe_core::report::Table, name: &str) -> Vec<String> {
    let i = table.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    table.rows.iter().map(|r| r[i].clone()).collect()
}

#[test]
fn lyapunov_grid_has_81_rows_and_tracks_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["lyapunov", "--K", "2", "--disorder", "cauchy", "--lambda", "0.5", "--E-grid", "-4:4:0.1", "--etas", "0.1,0.05"];
    args.extend(SMALL);
    let out = bethe(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("lyapunov.csv")).unwrap();
    assert!(text.starts_with("# schema_version=1 table=lyapunov\n"));
    let t = read_table(&dir.path().join("lyapunov.csv")).unwrap();
    assert_eq!(t.rows.len(), 81);
    let tree = TreeParams::new(2).unwrap();
    for (e, l) in column(&t, "E").iter().zip(column(&t, "L_value")) {
        let e: f64 = e.parse().unwrap();
        let exact = lyapunov_exact_cauchy(tree, 0.5, e).unwrap();
        assert!((l.parse::<f64>().unwrap() - exact).abs() < 0.05, "E = {e}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lyapunov.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "lyapunov");
    assert_eq!(manifest["config"]["lambda"], 0.5);
    assert_eq!(manifest["config"]["mc"]["n_pool"], 2000);
    assert!(manifest["config"]["mc"]["drift_floor"].is_number(), "defaults are materialized");
}

#[test]
fn zero_disorder_reproduces_the_free_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["lyapunov", "--K", "2", "--lambda", "0", "--E", "-2,-1,0,1,2"];
    args.extend(SMALL);
    assert!(bethe(dir.path(), &args).status.success());
    let t = read_table(&dir.path().join("lyapunov.csv")).unwrap();
    for l in column(&t, "L_value") {
        assert!((l.parse::<f64>().unwrap() - 0.5 * 2f64.ln()).abs() < 0.02);
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["lyapunov", "--lambda", "1", "--E-grid", "-1:1:0.5", "--seed", "17"];
    args.extend(SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(bethe(&a, &args).status.success());
    assert!(bethe(&b, &args).status.success());
    for f in ["lyapunov.csv", "lyapunov.manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn toml_config_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "lambda = 0.3\nenergies = [0.0, 1.0]\n[mc]\nn_pool = 1000\nburn_in = 10\nmeasure_sweeps = 10\nn_batches = 5\n")
        .unwrap();
    let out = bethe(dir.path(), &["lyapunov", "--config", cfg.to_str().unwrap(), "--lambda", "0.4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = read_table(&dir.path().join("lyapunov.csv")).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert!(column(&t, "lambda").iter().all(|l| l.parse::<f64>().unwrap() == 0.4));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"lamda": 0.5}"#).unwrap();
    for args in [
        vec!["lyapunov", "--config", bad.to_str().unwrap()],
        vec!["lyapunov", "--K", "1"],
        vec!["lyapunov", "--disorder", "lorentz"],
        vec!["lyapunov", "--E-grid", "1:0:0.1"],
        vec!["lyapunov", "--set", "mc/n_pool=\"many\""],
    ] {
        let out = bethe(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn convergence_failures_exit_with_3_and_keep_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "lyapunov", "--lambda", "1", "--E-grid", "-3:3:0.25", "--n-pool", "1000", "--etas", "0.1,0.05", "--set", "mc/burn_in=0", "--set",
        "mc/measure_sweeps=20", "--set", "mc/n_batches=10", "--set", "mc/max_extensions=0", "--set", "mc/drift_floor=0",
    ];
    let out = bethe(dir.path(), &args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let t = read_table(&dir.path().join("lyapunov.csv")).unwrap();
    assert_eq!(t.rows.len(), 25);
    assert!(column(&t, "status").iter().any(|s| s != "ok"));
}

#[test]
fn thresholds_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = bethe(dir.path(), &["thresholds", "--K", "2", "--disorder", "uniform", "--lambda", "1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let upper = v["lambda_c_upper"].as_f64().unwrap();
    assert!((upper - 2.8842).abs() < 1e-3, "{v}");
}

#[test]
fn dos_with_integrated_density() {
    let dir = tempfile::tempdir().unwrap();
    // The integrated density starts at the band edge, where the free pool relaxes slowly.
    let args = [
        "dos", "--K", "2", "--lambda", "0", "--E", "-1,0,1,3.5", "--ids", "--set", "ids_points=41", "--n-pool", "1000", "--set",
        "mc/burn_in=400", "--set", "mc/measure_sweeps=20", "--set", "mc/n_batches=5",
    ];
    let out = bethe(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = read_table(&dir.path().join("dos.csv")).unwrap();
    let dos: Vec<f64> = column(&t, "dos_value").iter().map(|x| x.parse().unwrap()).collect();
    let km: Vec<f64> = column(&t, "kesten_mckay").iter().map(|x| x.parse().unwrap()).collect();
    for (d, k) in dos.iter().zip(&km).take(3) {
        assert!((d - k).abs() < 0.02, "{d} vs {k}");
    }
    let ids_mid: f64 = column(&t, "ids_value")[1].parse().unwrap();
    assert!((ids_mid - 0.5).abs() < 0.02, "IDS at the band center: {ids_mid}");
    let ids_top: f64 = column(&t, "ids_value")[3].parse().unwrap();
    assert!((ids_top - 1.0).abs() < 0.05, "IDS above the band: {ids_top}");
}

#[test]
fn spectral_stats_and_resonance_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = bethe(
        dir.path(),
        &["spectral-stats", "--mode", "rrg", "--lambda", "0,20", "--disorder", "uniform", "--size", "200", "--realizations", "3"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = read_table(&dir.path().join("spectral_stats.csv")).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert!(dir.path().join("spacing_histogram_0.csv").exists());

    let out = bethe(dir.path(), &["resonance", "--realizations", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = read_table(&dir.path().join("resonance.csv")).unwrap();
    assert_eq!(t.rows.len(), 9);
}
