use std::path::{Path, PathBuf};

use bethe_core::cavity::ray::estimate_free_energy_curve;
use bethe_core::cavity::{estimate_dos, estimate_greens_second_moment, estimate_lyapunov, estimate_ids, estimate_phi_at_one, CavityParams};
use bethe_core::exact::{
    g00_complex, gamma0_complex, kesten_mckay_dos, lambda_thresholds, log_cs_bound, lyapunov_exact_cauchy, lyapunov_exact_free,
    min_log_cs_bound, spectrum_edges, diffusion_kernel, HalfPlanePoint, TreeParams,
};
use bethe_core::graphs::{
    assemble_hamiltonian, build_truncated_tree, diagonalize, dynamical_localization_profile, evolve_second_moment,
    fit_localization_length, resonance_ensemble, DisorderRealization, TreeFlavor, DENSE_CAP,
};
use bethe_core::phase::{edge_extract, scan, GridSpec, ScanConfig};
use bethe_core::report::{
    estimate_fields, fmt_f64, fmt_opt, histogram_table, phase_grid_table, polyline_table, resonance_table, stats_table,
    write_json, Table,
};
use bethe_core::rng::RngHandle;
use bethe_core::stats::{poisson_test_truncated_tree, rrg_statistics_scan};
use bethe_core::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::*;
use crate::CliError;

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    /// Points that failed with a convergence error; the CSV keeps their rows.
    pub convergence_failures: usize,
    pub master_seed: u64,
    pub streams: String,
}

fn save(out: &Path, name: &str, table: &Table, outcome: &mut Outcome) -> Result<(), CliError> {
    table.save(&out.join(name))?;
    outcome.outputs.push(name.into());
    Ok(())
}

fn save_json<T: Serialize>(out: &Path, name: &str, value: &T, outcome: &mut Outcome) -> Result<(), CliError> {
    write_json(&out.join(name), value)?;
    outcome.outputs.push(name.into());
    Ok(())
}

fn point_seed(master: u64, path: &[u64]) -> u64 {
    RngHandle::new(master).derive(path).stream_id()
}

/// Closed form when one exists: `λ = 0` or Cauchy disorder.
fn exact_lyapunov(tree: TreeParams, cfg_lambda: f64, cauchy: bool, e: f64) -> Option<f64> {
    if cfg_lambda == 0.0 {
        HalfPlanePoint::real(e).ok().and_then(|z| lyapunov_exact_free(tree, z).ok())
    } else if cauchy {
        lyapunov_exact_cauchy(tree, cfg_lambda, e).ok()
    } else {
        None
    }
}

pub fn lyapunov(cfg: &LyapunovConfig, out: &Path) -> Result<Outcome, CliError> {
    let tree = TreeParams::new(cfg.k)?;
    cfg.mc.validate()?;
    let energies = cfg.energies.points();
    let rows: Vec<(f64, u64, Result<_, Error>)> = energies
        .par_iter()
        .enumerate()
        .map(|(j, &e)| {
            let mut mc = cfg.mc.clone();
            mc.seed = point_seed(cfg.seed, &[j as u64]);
            let r = HalfPlanePoint::real(e)
                .and_then(|z| CavityParams::new(tree, cfg.lambda, z, cfg.disorder.clone()))
                .and_then(|p| estimate_lyapunov(&p, &cfg.protocol, &mc));
            log::info!("lyapunov E = {e}: done");
            (e, mc.seed, r)
        })
        .collect();
    let mut outcome = Outcome { master_seed: cfg.seed, streams: "point j uses seed / j".into(), ..Outcome::default() };
    let mut t = Table::new(
        "lyapunov",
        &["K", "lambda", "E", "L_value", "L_se", "L_sys", "n_effective", "eta", "L_exact", "seed", "status"],
    );
    for (e, seed, r) in rows {
        let exact = fmt_opt(exact_lyapunov(tree, cfg.lambda, cfg.disorder.is_cauchy(), e));
        let head = vec![cfg.k.to_string(), fmt_f64(cfg.lambda), fmt_f64(e)];
        match r {
            Ok(l) => {
                let [v, se, sys, n, eta] = estimate_fields(&l);
                outcome.warnings.extend(l.warnings.iter().map(|w| format!("E = {e}: {w}")));
                t.push([head, vec![v, se, sys, n, eta, exact, seed.to_string(), "ok".into()]].concat());
            }
            Err(Error::Convergence(msg)) => {
                outcome.convergence_failures += 1;
                outcome.warnings.push(format!("E = {e}: {msg}"));
                t.push([head, vec![String::new(); 5], vec![exact, seed.to_string(), "convergence_error".into()]].concat());
            }
            Err(e) => return Err(e.into()),
        }
    }
    save(out, "lyapunov.csv", &t, &mut outcome)?;
    Ok(outcome)
}

pub fn free_energy(cfg: &FreeEnergyConfig, out: &Path) -> Result<Outcome, CliError> {
    let tree = TreeParams::new(cfg.k)?;
    let mut mc = cfg.mc.clone();
    mc.seed = cfg.seed;
    let params = CavityParams::new(tree, cfg.lambda, HalfPlanePoint::real(cfg.energy)?, cfg.disorder.clone())?;
    let mut outcome = Outcome { master_seed: cfg.seed, streams: "common random numbers: one pool run for all s".into(), ..Outcome::default() };
    let curve = estimate_free_energy_curve(&params, &cfg.s_values, &cfg.protocol, &cfg.ray, &mc)?;
    let mut t = Table::new("free_energy", &["K", "lambda", "E", "s", "phi_value", "phi_se", "phi_sys", "n_effective", "eta", "log_cs_bound"]);
    for (s, c) in cfg.s_values.iter().zip(&curve) {
        let bound = if cfg.lambda > 0.0 { log_cs_bound(&cfg.disorder, *s, cfg.lambda).ok() } else { None };
        let [v, se, sys, n, eta] = estimate_fields(c);
        outcome.warnings.extend(c.warnings.iter().map(|w| format!("s = {s}: {w}")));
        t.push(vec![cfg.k.to_string(), fmt_f64(cfg.lambda), fmt_f64(cfg.energy), fmt_f64(*s), v, se, sys, n, eta, fmt_opt(bound)]);
    }
    save(out, "free_energy.csv", &t, &mut outcome)?;
    if cfg.phi_at_one {
        match estimate_phi_at_one(&params, &cfg.protocol, &cfg.ray, &mc) {
            Ok(phi) => {
                let mut t = Table::new(
                    "phi_at_one",
                    &["K", "lambda", "E", "phi1_value", "phi1_se", "phi1_sys", "s_first_value", "extrapolation_dominated", "minus_log_K"],
                );
                t.push(vec![
                    cfg.k.to_string(),
                    fmt_f64(cfg.lambda),
                    fmt_f64(cfg.energy),
                    fmt_f64(phi.estimate.value),
                    fmt_f64(phi.estimate.std_error),
                    fmt_f64(phi.estimate.systematic_error),
                    fmt_f64(phi.s_first_value),
                    phi.extrapolation_dominated.to_string(),
                    fmt_f64(-tree.kf().ln()),
                ]);
                outcome.warnings.extend(phi.estimate.warnings.iter().cloned());
                save(out, "phi_at_one.csv", &t, &mut outcome)?;
            }
            Err(Error::Convergence(msg)) => {
                outcome.convergence_failures += 1;
                outcome.warnings.push(format!("phi(1): {msg}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(outcome)
}

pub fn dos(cfg: &DosConfig, out: &Path) -> Result<Outcome, CliError> {
    let tree = TreeParams::new(cfg.k)?;
    cfg.mc.validate()?;
    let energies = cfg.energies.points();
    let rows: Vec<_> = energies
        .par_iter()
        .enumerate()
        .map(|(j, &e)| {
            let mut mc = cfg.mc.clone();
            mc.seed = point_seed(cfg.seed, &[j as u64]);
            let params = HalfPlanePoint::real(e).and_then(|z| CavityParams::new(tree, cfg.lambda, z, cfg.disorder.clone()));
            let d = match &params {
                Ok(p) => estimate_dos(p, &cfg.protocol, &mc),
                Err(e) => Err(Error::Config(e.to_string())),
            };
            let ids = if cfg.ids {
                Some(params.and_then(|p| estimate_ids(&p, e, &cfg.protocol, &mc, cfg.ids_points)))
            } else {
                None
            };
            log::info!("dos E = {e}: done");
            (e, mc.seed, d, ids)
        })
        .collect();
    let mut outcome = Outcome { master_seed: cfg.seed, streams: "point j uses seed / j".into(), ..Outcome::default() };
    let mut t = Table::new(
        "dos",
        &["K", "lambda", "E", "dos_value", "dos_se", "dos_sys", "n_effective", "eta", "kesten_mckay", "ids_value", "ids_se", "seed", "status"],
    );
    for (e, seed, d, ids) in rows {
        let km = if cfg.lambda == 0.0 { Some(kesten_mckay_dos(tree, e)) } else { None };
        let head = vec![cfg.k.to_string(), fmt_f64(cfg.lambda), fmt_f64(e)];
        let mut status = "ok".to_string();
        let dos_fields = match d {
            Ok(est) => {
                outcome.warnings.extend(est.warnings.iter().map(|w| format!("E = {e}: {w}")));
                estimate_fields(&est).to_vec()
            }
            Err(Error::Convergence(msg)) => {
                outcome.convergence_failures += 1;
                outcome.warnings.push(format!("E = {e}: {msg}"));
                status = "convergence_error".into();
                vec![String::new(); 5]
            }
            Err(err) => return Err(err.into()),
        };
        let ids_fields = match ids {
            None => vec![String::new(), String::new()],
            Some(Ok(i)) => {
                outcome.warnings.extend(i.warnings.iter().map(|w| format!("IDS at E = {e}: {w}")));
                vec![fmt_f64(i.value), fmt_f64(i.std_error)]
            }
            Some(Err(Error::Convergence(msg))) => {
                outcome.convergence_failures += 1;
                outcome.warnings.push(format!("IDS at E = {e}: {msg}"));
                status = "convergence_error".into();
                vec![String::new(), String::new()]
            }
            Some(Err(err)) => return Err(err.into()),
        };
        t.push([head, dos_fields, vec![fmt_opt(km)], ids_fields, vec![seed.to_string(), status]].concat());
    }
    save(out, "dos.csv", &t, &mut outcome)?;
    Ok(outcome)
}

pub fn phase_scan(cfg: &PhaseScanConfig, out: &Path) -> Result<Outcome, CliError> {
    let grid = GridSpec { lambdas: cfg.lambdas.points(), energies: cfg.energies.points() };
    let scan_cfg = ScanConfig {
        phase: cfg.phase.clone(),
        seed: cfg.seed,
        cache_dir: cfg.cache.then(|| out.join("cache")),
    };
    let result = scan(&grid, &scan_cfg)?;
    let mut outcome = Outcome { master_seed: cfg.seed, streams: "grid point (i, j) = (lambda index, E index) uses seed / i / j".into(), ..Outcome::default() };
    for p in &result.points {
        outcome.warnings.extend(p.diagnostics.iter().map(|d| format!("lambda = {}, E = {}: {d}", p.lambda, p.energy)));
    }
    save(out, "phase_grid.csv", &phase_grid_table(cfg.phase.k, &result), &mut outcome)?;
    save(out, "mobility_edge.csv", &polyline_table(&edge_extract(&result)), &mut outcome)?;
    Ok(outcome)
}

pub fn spectral_stats(cfg: &SpectralStatsConfig, out: &Path) -> Result<Outcome, CliError> {
    let (reports, seed, streams) = match cfg.mode {
        StatsMode::Tree => (poisson_test_truncated_tree(&cfg.tree)?, cfg.tree.seed, "realization r uses seed / r"),
        StatsMode::Rrg => (
            rrg_statistics_scan(&cfg.rrg)?,
            cfg.rrg.seed,
            "realization r at the i-th lambda: graph seed / i / r / 0, potential seed / i / r / 1",
        ),
    };
    let mut outcome = Outcome { master_seed: seed, streams: streams.into(), ..Outcome::default() };
    for r in &reports {
        outcome.warnings.extend(r.warnings.iter().map(|w| format!("lambda = {}, E = {:?}: {w}", r.lambda, r.energy)));
    }
    save(out, "spectral_stats.csv", &stats_table(&reports), &mut outcome)?;
    if cfg.histograms {
        for (i, r) in reports.iter().enumerate() {
            if let Some(h) = &r.histogram {
                save(out, &format!("spacing_histogram_{i}.csv"), &histogram_table(h), &mut outcome)?;
            }
        }
    }
    Ok(outcome)
}

pub fn transport(cfg: &TransportConfig, out: &Path) -> Result<Outcome, CliError> {
    let tree = TreeParams::new(cfg.k)?;
    let z = HalfPlanePoint::new(cfg.energy, cfg.eta)?;
    let params = CavityParams::new(tree, cfg.lambda, z, cfg.disorder.clone())?;
    let mut mc = cfg.mc.clone();
    mc.seed = cfg.seed;
    let mut outcome = Outcome {
        master_seed: cfg.seed,
        streams: "second moment: one pool run; finite part: realization r uses seed / 1 / r".into(),
        ..Outcome::default()
    };
    let est = estimate_greens_second_moment(&params, &cfg.distances, &cfg.ray, &mc)?;
    let k = tree.kf();
    let (g00, gamma) = (g00_complex(k, z.z()), gamma0_complex(k, z.z()));
    let mut t = Table::new(
        "second_moment",
        &["K", "lambda", "E", "eta", "d", "mean_g2", "mean_g2_se", "scaled_K_d", "free_law", "diffusion_kernel"],
    );
    for (d, e) in cfg.distances.iter().zip(&est) {
        outcome.warnings.extend(e.warnings.iter().cloned());
        let free = g00.norm_sqr() * gamma.norm_sqr().powi(*d as i32);
        t.push(vec![
            cfg.k.to_string(),
            fmt_f64(cfg.lambda),
            fmt_f64(cfg.energy),
            fmt_f64(cfg.eta),
            d.to_string(),
            fmt_f64(e.value),
            fmt_f64(e.std_error),
            fmt_f64(e.value * k.powi(*d as i32)),
            fmt_f64(free),
            fmt_f64(diffusion_kernel(tree, *d)),
        ]);
    }
    outcome.warnings.sort();
    outcome.warnings.dedup();
    save(out, "second_moment.csv", &t, &mut outcome)?;

    if let Some(f) = &cfg.finite {
        let g = build_truncated_tree(tree, f.depth, TreeFlavor::Ball)?;
        let master = RngHandle::new(cfg.seed).child(1);
        let decompose = |r: usize| {
            let real = DisorderRealization::sample(&g, &cfg.disorder, cfg.lambda, &master.child(r as u64))?;
            diagonalize(&assemble_hamiltonian(&g, &real)?, true, DENSE_CAP)
        };
        let times = f.times.points();
        let profile = dynamical_localization_profile(&g, f.n_realizations, decompose, f.window, &f.radii, &times)?;
        let mut t = Table::new("localization_profile", &["R", "profile"]);
        for (r, p) in f.radii.iter().zip(&profile) {
            t.push(vec![r.to_string(), fmt_f64(*p)]);
        }
        save(out, "localization_profile.csv", &t, &mut outcome)?;
        if let Some(fit) = fit_localization_length(&f.radii, &profile) {
            save_json(out, "localization_fit.json", &fit, &mut outcome)?;
        }
        let m2 = evolve_second_moment(&g, &decompose(0)?, f.window, &times)?;
        let mut t = Table::new("spreading", &["t", "second_moment"]);
        for (time, m) in times.iter().zip(&m2) {
            t.push(vec![fmt_f64(*time), fmt_f64(*m)]);
        }
        save(out, "spreading.csv", &t, &mut outcome)?;
    }
    Ok(outcome)
}

pub fn resonance(cfg: &ResonanceCmdConfig, out: &Path) -> Result<Outcome, CliError> {
    let rows = resonance_ensemble(cfg)?;
    let mut outcome = Outcome { master_seed: cfg.seed, streams: "realization r at radius R uses seed / R / r".into(), ..Outcome::default() };
    save(out, "resonance.csv", &resonance_table(&rows), &mut outcome)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct ThresholdReport {
    k: u32,
    lambda_min: f64,
    lambda_c_upper: f64,
    lambda_c_lower: Option<f64>,
    lambda: Option<f64>,
    spectrum: Option<bethe_core::exact::Spectrum>,
    min_log_cs_bound: Option<f64>,
    minimizing_s: Option<f64>,
    minus_log_k: f64,
}

pub fn thresholds(cfg: &ThresholdsConfig, out: &Path) -> Result<Outcome, CliError> {
    let tree = TreeParams::new(cfg.k)?;
    let th = lambda_thresholds(tree, &cfg.disorder)?;
    let (bound, s) = match cfg.lambda {
        Some(l) if l > 0.0 => {
            let (b, s) = min_log_cs_bound(&cfg.disorder, l)?;
            (Some(b), s)
        }
        _ => (None, None),
    };
    let report = ThresholdReport {
        k: cfg.k,
        lambda_min: th.lambda_min,
        lambda_c_upper: th.lambda_c_upper,
        lambda_c_lower: th.lambda_c_lower,
        lambda: cfg.lambda,
        spectrum: cfg.lambda.map(|l| spectrum_edges(tree, l, &cfg.disorder)),
        min_log_cs_bound: bound,
        minimizing_s: s,
        minus_log_k: -tree.kf().ln(),
    };
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    let mut outcome = Outcome { master_seed: 0, streams: "none".into(), ..Outcome::default() };
    save_json(out, "thresholds.json", &report, &mut outcome)?;
    Ok(outcome)
}

pub fn manifest_path(out: &Path, command: &str) -> PathBuf {
    out.join(format!("{command}.manifest.json"))
}
