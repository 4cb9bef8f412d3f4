//! Estimators along a ray `0 = x_0, x_1, ..., x_R` of the tree.
//!
//! On a tree the two-point function factorizes into forward Green functions
//! of the path vertices. Generating the path from its far end, each vertex
//! sees its on-path descendant plus `K - 1` off-path children drawn from the
//! equilibrated pool, so `E[Π |Γ(x_j)|^s]` is the normalization of a
//! Feynman–Kac chain.
//!
//! The default [`RayMethod::Reweighted`] estimator propagates a population of
//! walkers, weights them by `|Γ|^s`, accumulates `log mean(weight)` and
//! resamples. After a transient the mean increment estimates `φ(s)` with far
//! smaller variance than direct products of heavy-tailed factors.
//! [`RayMethod::PathReplicas`] computes independent path products instead and
//! combines them with a median of group means.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{run_eta_sequence, CavityEstimate, CavityParams, CavityPool, EtaPoint, EtaProtocol, McBudget, Wanted, TAG_RAY};
use crate::numeric::{line_fit, mean, median, variance};
use crate::rng::{open01, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayMethod {
    /// Population reweighting with resampling at every step.
    Reweighted,
    /// Independent path products combined by median of means.
    PathReplicas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RayConfig {
    /// Path length `R`.
    pub length: u32,
    /// Leading steps excluded from the growth-rate average (reweighted method).
    pub transient: u32,
    /// Walkers (or replicas) per group.
    pub n_walkers: usize,
    /// Independent groups used for the error bar.
    pub n_groups: usize,
    pub method: RayMethod,
}

impl Default for RayConfig {
    fn default() -> Self {
        Self {
            length: 48,
            transient: 16,
            n_walkers: 2048,
            n_groups: 16,
            method: RayMethod::Reweighted,
        }
    }
}

impl RayConfig {
    fn validate(&self) -> Result<()> {
        if self.length < 10 {
            return Err(Error::Domain(format!("path length must be >= 10, got {}", self.length)));
        }
        if self.transient >= self.length {
            return Err(Error::Config("transient must be shorter than the path".into()));
        }
        if self.n_walkers < 16 || self.n_groups < 2 {
            return Err(Error::Config("need at least 16 walkers and 2 groups".into()));
        }
        Ok(())
    }
}

/// Fraction of the effective sample size below which a weighted population is
/// reported as dominated by a few walkers.
const ESS_WARN: f64 = 0.05;

/// Forward Green function of a path vertex whose on-path child is `prev`.
#[inline]
fn path_step(pool: &CavityPool, prev: Option<Complex64>, rng: &mut StreamRng) -> Complex64 {
    let params = pool.params();
    let z = params.z.z();
    match prev {
        None => pool.draw(rng),
        Some(prev) => {
            let mut sum = prev;
            for _ in 1..params.tree.k() {
                sum += pool.draw(rng);
            }
            1.0 / (Complex64::new(params.potential(rng), 0.0) - z - sum)
        }
    }
}

/// Root diagonal Green function with on-path child `child` and `K` pool neighbours.
#[inline]
fn root_step(pool: &CavityPool, child: Option<Complex64>, rng: &mut StreamRng) -> Complex64 {
    let params = pool.params();
    let k = params.tree.k() as usize;
    let mut sum = child.unwrap_or_else(|| pool.draw(rng));
    for _ in 0..k {
        sum += pool.draw(rng);
    }
    1.0 / (Complex64::new(params.potential(rng), 0.0) - params.z.z() - sum)
}

/// `log(mean(exp(lw)))` computed stably.
fn log_mean_exp(lw: &[f64]) -> f64 {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + (lw.iter().map(|x| (x - m).exp()).sum::<f64>() / lw.len() as f64).ln()
}

/// Systematic resampling of `walkers` by `exp(lw)`; returns the ESS fraction.
fn resample(walkers: &mut Vec<Complex64>, lw: &[f64], rng: &mut StreamRng) -> f64 {
    let n = walkers.len();
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let ess = total * total / w.iter().map(|x| x * x).sum::<f64>() / n as f64;
    let step = total / n as f64;
    let mut u = open01(rng) * step;
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut j = 0;
    for (i, wi) in w.iter().enumerate() {
        acc += wi;
        while u < acc && j < n {
            out.push(walkers[i]);
            u += step;
            j += 1;
        }
    }
    while out.len() < n {
        out.push(walkers[n - 1]);
    }
    *walkers = out;
    ess
}

/// Per-group growth rates `φ_g(s)` and the smallest ESS fraction observed.
fn growth_rates(pool: &CavityPool, s: f64, cfg: &RayConfig) -> (Vec<f64>, f64, Vec<String>) {
    let mut rates = Vec::with_capacity(cfg.n_groups);
    let mut min_ess: f64 = 1.0;
    let mut warnings = Vec::new();
    for g in 0..cfg.n_groups {
        let mut rng = pool.handle().derive(&[TAG_RAY, pool.sweep_count(), g as u64]).rng();
        match cfg.method {
            RayMethod::Reweighted => {
                let mut walkers: Vec<Complex64> = Vec::new();
                let mut incs = Vec::with_capacity(cfg.length as usize);
                for step in 0..cfg.length {
                    let next: Vec<Complex64> = (0..cfg.n_walkers)
                        .map(|i| path_step(pool, (step > 0).then(|| walkers[i]), &mut rng))
                        .collect();
                    let lw: Vec<f64> = next.iter().map(|gm| 0.5 * s * gm.norm_sqr().ln()).collect();
                    incs.push(log_mean_exp(&lw));
                    walkers = next;
                    min_ess = min_ess.min(resample(&mut walkers, &lw, &mut rng));
                }
                rates.push(mean(&incs[cfg.transient as usize..]));
            }
            RayMethod::PathReplicas => {
                let logs: Vec<f64> = (0..cfg.n_walkers)
                    .map(|_| {
                        let mut prev = None;
                        let mut acc = 0.0;
                        for _ in 0..cfg.length {
                            let gm = path_step(pool, prev, &mut rng);
                            acc += 0.5 * s * gm.norm_sqr().ln();
                            prev = Some(gm);
                        }
                        acc
                    })
                    .collect();
                let lm = log_mean_exp(&logs);
                let mut sorted = logs.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let top = (cfg.n_walkers / 100).max(1);
                let top_share = (log_mean_exp(&sorted[..top]) + (top as f64 / cfg.n_walkers as f64).ln() - lm).exp();
                if top_share > 0.5 {
                    warnings.push(format!(
                        "heavy tail: top 1% of replicas carry {:.0}% of the mean in group {g}",
                        100.0 * top_share
                    ));
                }
                rates.push(lm / cfg.length as f64);
            }
        }
    }
    if cfg.method == RayMethod::Reweighted && min_ess < ESS_WARN {
        warnings.push(format!(
            "heavy tail: effective sample size fell to {:.1}% of the walkers (s = {s})",
            100.0 * min_ess
        ));
    }
    (rates, min_ess, warnings)
}

fn group_point(eta: f64, rates: &[f64], method: RayMethod) -> EtaPoint {
    let se = (variance(rates) / rates.len() as f64).sqrt();
    match method {
        RayMethod::Reweighted => EtaPoint { eta, value: mean(rates), std_error: se },
        // Asymptotic efficiency of the median relative to the mean.
        RayMethod::PathReplicas => EtaPoint { eta, value: median(rates), std_error: 1.2533 * se },
    }
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s must lie in (0, 1), got {s}")));
    }
    Ok(())
}

/// `φ_λ(s; E)` at several `s` from one pool run per `η`, with common random
/// numbers across `s`.
pub fn estimate_free_energy_curve(
    params: &CavityParams,
    s_values: &[f64],
    protocol: &EtaProtocol,
    ray: &RayConfig,
    mc: &McBudget,
) -> Result<Vec<CavityEstimate>> {
    for &s in s_values {
        check_s(s)?;
    }
    Ok(free_energy_points(params, s_values, protocol, ray, mc)?
        .into_iter()
        .map(|(points, warnings, n_eff, sweeps, stream)| {
            CavityEstimate::from_points(points, protocol, n_eff, sweeps, stream, warnings)
        })
        .collect())
}

type PointsPerS = Vec<(Vec<EtaPoint>, Vec<String>, u64, u64, String)>;

fn free_energy_points(
    params: &CavityParams,
    s_values: &[f64],
    protocol: &EtaProtocol,
    ray: &RayConfig,
    mc: &McBudget,
) -> Result<PointsPerS> {
    ray.validate()?;
    let mut per_s: Vec<(Vec<EtaPoint>, Vec<String>)> = vec![(Vec::new(), Vec::new()); s_values.len()];
    let (_, base, sweeps) = run_eta_sequence(params, protocol, mc, Wanted::default(), |_, pool| {
        for (j, &s) in s_values.iter().enumerate() {
            let (rates, _, warnings) = growth_rates(pool, s, ray);
            per_s[j].0.push(group_point(pool.params().z.eta, &rates, ray.method));
            per_s[j].1.extend(warnings);
        }
        Ok(())
    })?;
    let n_eff = (ray.n_walkers * ray.n_groups) as u64;
    Ok(per_s
        .into_iter()
        .map(|(p, w)| (p, w, n_eff, sweeps, base.describe()))
        .collect())
}

/// `φ_λ(s; E) = lim log E|G(0,x)|^s / |x|`.
pub fn estimate_free_energy(
    params: &CavityParams,
    s: f64,
    protocol: &EtaProtocol,
    ray: &RayConfig,
    mc: &McBudget,
) -> Result<CavityEstimate> {
    check_s(s)?;
    Ok(estimate_free_energy_curve(params, &[s], protocol, ray, mc)?.remove(0))
}

/// `φ_λ(1; E)` by extrapolation in `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiAtOne {
    /// Extrapolated `φ(1)`; `std_error` combines the fit and extrapolation errors.
    pub estimate: CavityEstimate,
    pub s_values: Vec<f64>,
    pub curve: Vec<CavityEstimate>,
    /// Extrapolation spread exceeds the statistical error.
    pub extrapolation_dominated: bool,
    /// `φ(1)` with the `s` extrapolation done before the `η` extrapolation.
    pub s_first_value: f64,
}

/// `s` values at which `φ` is evaluated; the fit uses the last three.
pub const PHI_S_VALUES: [f64; 4] = [0.7, 0.8, 0.9, 0.95];

/// Value at `s = 1` of the unweighted line through the last three points, its
/// propagated error and the spread against the two-point line.
fn extrapolate_s(s: &[f64], phi: &[f64], se: &[f64]) -> (f64, f64, f64) {
    let n = s.len();
    let (xs, ys, es) = (&s[n - 3..], &phi[n - 3..], &se[n - 3..]);
    let xbar = mean(xs);
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    // Coefficients c_i with fit(1) = Σ c_i y_i.
    let c: Vec<f64> = xs.iter().map(|x| 1.0 / 3.0 + (1.0 - xbar) * (x - xbar) / sxx).collect();
    let value: f64 = c.iter().zip(ys).map(|(c, y)| c * y).sum();
    let stat = c.iter().zip(es).map(|(c, e)| (c * e).powi(2)).sum::<f64>().sqrt();
    let two = ys[2] + (1.0 - xs[2]) * (ys[2] - ys[1]) / (xs[2] - xs[1]);
    (value, stat, (value - two).abs())
}

pub fn estimate_phi_at_one(
    params: &CavityParams,
    protocol: &EtaProtocol,
    ray: &RayConfig,
    mc: &McBudget,
) -> Result<PhiAtOne> {
    let s_values = PHI_S_VALUES.to_vec();
    let raw = free_energy_points(params, &s_values, protocol, ray, mc)?;
    let curve: Vec<CavityEstimate> = raw
        .iter()
        .map(|(p, w, n, sw, st)| CavityEstimate::from_points(p.clone(), protocol, *n, *sw, st.clone(), w.clone()))
        .collect();
    for (i, pair) in curve.windows(2).enumerate() {
        let tol = 3.0 * (pair[0].std_error.powi(2) + pair[1].std_error.powi(2)).sqrt();
        if pair[1].value - pair[0].value > tol {
            return Err(Error::Convergence(format!(
                "phi is not decreasing in s: phi({}) = {} < phi({}) = {} beyond 3 sigma",
                s_values[i], pair[0].value, s_values[i + 1], pair[1].value
            )));
        }
    }
    let phi: Vec<f64> = curve.iter().map(|c| c.value).collect();
    let se: Vec<f64> = curve.iter().map(|c| c.std_error).collect();
    let (value, stat, spread) = extrapolate_s(&s_values, &phi, &se);

    // s first: extrapolate at every eta, then in eta.
    let n_eta = raw[0].0.len();
    let s_first_points: Vec<EtaPoint> = (0..n_eta)
        .map(|k| {
            let ph: Vec<f64> = raw.iter().map(|r| r.0[k].value).collect();
            let e: Vec<f64> = raw.iter().map(|r| r.0[k].std_error).collect();
            let (v, st, _) = extrapolate_s(&s_values, &ph, &e);
            EtaPoint { eta: raw[0].0[k].eta, value: v, std_error: st }
        })
        .collect();
    let (s_first_value, ..) = super::extrapolate(&s_first_points, protocol);

    let mut warnings: Vec<String> = curve.iter().flat_map(|c| c.warnings.iter().cloned()).collect();
    warnings.sort();
    warnings.dedup();
    let extrapolation_dominated = spread > stat;
    if extrapolation_dominated {
        warnings.push(format!(
            "s -> 1 extrapolation dominates the error ({spread:.2e} vs statistical {stat:.2e})"
        ));
    }
    let s_first_gap = (s_first_value - value).abs();
    if s_first_gap > 3.0 * (stat * stat + spread * spread).sqrt() && s_first_gap > 1e-12 {
        warnings.push(format!(
            "orderings disagree: eta first gives {value}, s first gives {s_first_value}"
        ));
    }
    let last = &curve[curve.len() - 1];
    let estimate = CavityEstimate {
        value,
        std_error: (stat * stat + spread * spread).sqrt(),
        n_effective: last.n_effective,
        eta: last.eta,
        per_eta: s_first_points,
        systematic_error: spread,
        total_sweeps: last.total_sweeps,
        stream: last.stream.clone(),
        warnings,
    };
    Ok(PhiAtOne { estimate, s_values, curve, extrapolation_dominated, s_first_value })
}

/// `E|G(0,x)|²` on the Bethe lattice for `|x| ∈ distances`, at the fixed `η` of `params.z`.
///
/// One reweighted run serves all distances: after `d` path factors the
/// estimate is the accumulated normalization times the walker average of
/// `|G(0,0)|²`, where the root couples to the walker and `K` pool samples.
pub fn estimate_greens_second_moment(
    params: &CavityParams,
    distances: &[u32],
    ray: &RayConfig,
    mc: &McBudget,
) -> Result<Vec<CavityEstimate>> {
    if !params.z.is_interior() {
        return Err(Error::Domain("second moment needs eta > 0".into()));
    }
    if distances.is_empty() {
        return Ok(Vec::new());
    }
    let max_d = *distances.iter().max().unwrap();
    let mut per_group: Vec<Vec<f64>> = Vec::new();
    let mut min_ess: f64 = 1.0;
    let (_, base, sweeps) = run_eta_sequence(params, &EtaProtocol::Fixed, mc, Wanted::default(), |_, pool| {
        for g in 0..ray.n_groups {
            let mut rng = pool.handle().derive(&[TAG_RAY, pool.sweep_count(), g as u64]).rng();
            let mut log_z = 0.0;
            let mut walkers: Vec<Complex64> = Vec::new();
            let mut row = vec![f64::NAN; max_d as usize + 1];
            for d in 0..=max_d {
                if d > 0 {
                    let next: Vec<Complex64> = (0..ray.n_walkers)
                        .map(|i| path_step(pool, (d > 1).then(|| walkers[i]), &mut rng))
                        .collect();
                    let lw: Vec<f64> = next.iter().map(|gm| gm.norm_sqr().ln()).collect();
                    log_z += log_mean_exp(&lw);
                    walkers = next;
                    min_ess = min_ess.min(resample(&mut walkers, &lw, &mut rng));
                }
                if distances.contains(&d) {
                    let root: Vec<f64> = (0..ray.n_walkers)
                        .map(|i| {
                            let child = (d > 0).then(|| walkers[i]);
                            root_step(pool, child, &mut rng).norm_sqr().ln()
                        })
                        .collect();
                    row[d as usize] = (log_z + log_mean_exp(&root)).exp();
                }
            }
            per_group.push(row);
        }
        Ok(())
    })?;
    let mut warnings = Vec::new();
    if min_ess < ESS_WARN {
        warnings.push(format!("heavy tail: effective sample size fell to {:.1}% of the walkers", 100.0 * min_ess));
    }
    Ok(distances
        .iter()
        .map(|&d| {
            let vals: Vec<f64> = per_group.iter().map(|r| r[d as usize]).collect();
            let point = EtaPoint {
                eta: params.z.eta,
                value: mean(&vals),
                std_error: (variance(&vals) / vals.len() as f64).sqrt(),
            };
            CavityEstimate::from_points(
                vec![point],
                &EtaProtocol::Fixed,
                (ray.n_walkers * ray.n_groups) as u64,
                sweeps,
                base.describe(),
                warnings.clone(),
            )
        })
        .collect())
}

/// Least-squares slope of `log y` against `d`, weighted by relative errors.
pub fn log_slope(distances: &[u32], estimates: &[CavityEstimate]) -> Option<crate::numeric::LineFit> {
    let x: Vec<f64> = distances.iter().map(|&d| d as f64).collect();
    let y: Vec<f64> = estimates.iter().map(|e| e.value.ln()).collect();
    let s: Vec<f64> = estimates.iter().map(|e| e.std_error / e.value).collect();
    line_fit(&x, &y, Some(&s))
}
