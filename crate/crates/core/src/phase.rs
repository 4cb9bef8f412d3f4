//! Classification of `(E, λ)` points by the Lyapunov and free-energy criteria,
//! grid scans with an on-disk cache, mobility-edge extraction and the weak
//! continuity check of `∫ L_λ dE` as `λ ↓ 0`.
//!
//! Labels are one-sided certificates at a fixed number of standard errors:
//!
//! * `L_λ(E) + 3σ < log K` certifies absolutely continuous spectrum;
//! * `φ_λ(1; E) + 3σ < -log K` certifies localization. The analytic bound
//!   `φ_λ(1) ≤ min_s log C_s(λ)` is tried before any Monte Carlo.
//!
//! A point that would carry both certificates is reported as undetermined.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cavity::estimators::lyapunov_and_dos;
use crate::cavity::{estimate_phi_at_one, CavityEstimate, CavityParams, EtaProtocol, McBudget, RayConfig};
use crate::disorder::DisorderSpec;
use crate::exact::{lyapunov_exact_cauchy, lyapunov_exact_free, min_log_cs_bound, spectrum_edges, HalfPlanePoint, Spectrum, TreeParams};
use crate::numeric::trapezoid;
use crate::rng::RngHandle;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseLabel {
    DelocalizedLyapunovCertified,
    LocalizedPhiCertified,
    OutsideSpectrum,
    Undetermined,
}

impl PhaseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseLabel::DelocalizedLyapunovCertified => "delocalized_lyapunov_certified",
            PhaseLabel::LocalizedPhiCertified => "localized_phi_certified",
            PhaseLabel::OutsideSpectrum => "outside_spectrum",
            PhaseLabel::Undetermined => "undetermined",
        }
    }
}

/// Where a `φ(1)` value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiSource {
    /// `min_s log C_s(λ)`, an exact upper bound with zero error.
    CsBound,
    MonteCarlo,
}

/// How hard to try for a localization certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    Off,
    /// Analytic `C_s` bound only.
    Bound,
    /// Analytic bound, then a Monte Carlo `φ(1)` when the bound does not certify.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub k: u32,
    pub disorder: DisorderSpec,
    pub protocol: EtaProtocol,
    pub mc: McBudget,
    pub ray: RayConfig,
    pub phi: PhiMode,
    /// Certification threshold in standard errors.
    pub sigmas: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            k: 2,
            disorder: DisorderSpec::cauchy(),
            protocol: EtaProtocol::default(),
            mc: McBudget::default(),
            ray: RayConfig::default(),
            phi: PhiMode::Full,
            sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub energy: f64,
    pub lambda: f64,
    pub lyapunov: Option<CavityEstimate>,
    pub phi_at_one: Option<CavityEstimate>,
    pub phi_source: Option<PhiSource>,
    pub dos: Option<CavityEstimate>,
    pub label: PhaseLabel,
    /// Distance of the deciding criterion from its threshold in standard
    /// errors; `None` for analytic decisions.
    pub margin: Option<f64>,
    /// `log K - L`.
    pub lyapunov_gap: Option<f64>,
    /// `-log K - φ(1)`.
    pub phi_gap: Option<f64>,
    /// Seed the cavity runs used.
    pub seed: u64,
    pub diagnostics: Vec<String>,
}

impl PhasePoint {
    fn bare(energy: f64, lambda: f64, seed: u64) -> Self {
        Self {
            energy,
            lambda,
            lyapunov: None,
            phi_at_one: None,
            phi_source: None,
            dos: None,
            label: PhaseLabel::Undetermined,
            margin: None,
            lyapunov_gap: None,
            phi_gap: None,
            seed,
            diagnostics: Vec::new(),
        }
    }

    /// `(log K - L) / σ_L`.
    pub fn lyapunov_margin(&self) -> Option<f64> {
        let l = self.lyapunov.as_ref()?;
        Some(self.lyapunov_gap? / l.std_error)
    }
}

fn margin(gap: f64, se: f64) -> f64 {
    if se > 0.0 {
        gap / se
    } else {
        gap.signum() * f64::MAX
    }
}

/// Runs the estimators at `(E, λ)` and assigns the strongest certified label.
///
/// Order of precedence: a Lyapunov certificate, then `OutsideSpectrum` for
/// bounded disorder, then a `φ(1)` certificate. Convergence failures leave
/// the point undetermined with the error recorded in `diagnostics`.
pub fn classify_point(energy: f64, lambda: f64, cfg: &PhaseConfig) -> Result<PhasePoint> {
    let tree = TreeParams::new(cfg.k)?;
    let log_k = tree.kf().ln();
    let params = CavityParams::new(tree, lambda, HalfPlanePoint::real(energy)?, cfg.disorder.clone())?;
    let mut pt = PhasePoint::bare(energy, lambda, cfg.mc.seed);
    let t = cfg.sigmas;

    match lyapunov_and_dos(&params, &cfg.protocol, &cfg.mc, true) {
        Ok((l, d)) => {
            let gap = log_k - l.value;
            pt.lyapunov_gap = Some(gap);
            pt.margin = Some(margin(gap, l.std_error));
            if l.value + t * l.std_error < log_k {
                pt.label = PhaseLabel::DelocalizedLyapunovCertified;
            }
            pt.diagnostics.extend(l.warnings.iter().cloned());
            pt.lyapunov = Some(l);
            pt.dos = d;
        }
        Err(e @ Error::Convergence(_)) => pt.diagnostics.push(format!("lyapunov: {e}")),
        Err(e) => return Err(e),
    }

    let outside = lambda > 0.0 && matches!(spectrum_edges(tree, lambda, &cfg.disorder), Spectrum::Interval { lo, hi } if energy < lo || energy > hi);
    if pt.label == PhaseLabel::Undetermined && outside {
        pt.label = PhaseLabel::OutsideSpectrum;
        pt.margin = None;
        return Ok(pt);
    }
    if cfg.phi == PhiMode::Off || outside {
        return Ok(pt);
    }

    let mut phi_certified = false;
    if lambda > 0.0 {
        let (bound, s) = min_log_cs_bound(&cfg.disorder, lambda)?;
        if bound < -log_k {
            let s = s.expect("a negative bound has an interior minimizer");
            pt.phi_at_one = Some(CavityEstimate {
                value: bound,
                std_error: 0.0,
                n_effective: 0,
                eta: 0.0,
                per_eta: Vec::new(),
                systematic_error: 0.0,
                total_sweeps: 0,
                stream: format!("analytic bound at s = {s}"),
                warnings: Vec::new(),
            });
            pt.phi_source = Some(PhiSource::CsBound);
            pt.phi_gap = Some(-log_k - bound);
            phi_certified = true;
        }
    }
    let want_mc = cfg.phi == PhiMode::Full && !phi_certified && pt.label != PhaseLabel::DelocalizedLyapunovCertified;
    if want_mc {
        match estimate_phi_at_one(&params, &cfg.protocol, &cfg.ray, &cfg.mc) {
            Ok(phi) => {
                let e = phi.estimate;
                let gap = -log_k - e.value;
                pt.phi_gap = Some(gap);
                if e.value + t * e.std_error < -log_k {
                    phi_certified = true;
                    pt.margin = Some(margin(gap, e.std_error));
                }
                pt.diagnostics.extend(e.warnings.iter().cloned());
                pt.phi_at_one = Some(e);
                pt.phi_source = Some(PhiSource::MonteCarlo);
            }
            Err(e @ Error::Convergence(_)) => pt.diagnostics.push(format!("phi(1): {e}")),
            Err(e) => return Err(e),
        }
    }

    if phi_certified {
        if pt.label == PhaseLabel::DelocalizedLyapunovCertified {
            pt.label = PhaseLabel::Undetermined;
            pt.diagnostics.push("both certificates hold; contradictory estimates reported as undetermined".into());
        } else {
            pt.label = PhaseLabel::LocalizedPhiCertified;
            if pt.phi_source == Some(PhiSource::CsBound) {
                pt.margin = None;
            }
        }
    }
    // L < log K forces φ(1) ≥ -L; a violation means one estimate is off.
    if let (Some(l), Some(phi), Some(PhiSource::MonteCarlo)) = (&pt.lyapunov, &pt.phi_at_one, pt.phi_source) {
        let se = (l.std_error.powi(2) + phi.std_error.powi(2)).sqrt();
        if phi.value + l.value < -t * se && pt.label != PhaseLabel::Undetermined {
            pt.diagnostics.push(format!("phi(1) = {} is below -L = {} beyond {t} sigma", phi.value, -l.value));
            pt.label = PhaseLabel::Undetermined;
        }
    }
    Ok(pt)
}

/// Cartesian `(λ, E)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    /// `λ`-major order: all energies of `lambdas[0]` first.
    pub points: Vec<PhasePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub phase: PhaseConfig,
    /// Master seed; point `(i, j)` runs with the stream `seed / i / j`.
    pub seed: u64,
    /// Directory of cached point results.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { phase: PhaseConfig::default(), seed: 0, cache_dir: None }
    }
}

const CACHE_VERSION: u32 = 1;

/// Hex SHA-256 of everything that determines a point's result.
pub fn cache_key(cfg: &PhaseConfig, lambda: f64, energy: f64) -> Result<String> {
    let blob = serde_json::to_vec(&(CACHE_VERSION, cfg, lambda.to_bits(), energy.to_bits()))?;
    Ok(Sha256::digest(&blob).iter().map(|b| format!("{b:02x}")).collect())
}

fn cache_load(dir: &Path, key: &str) -> Option<PhasePoint> {
    let text = fs::read_to_string(dir.join(format!("{key}.json"))).ok()?;
    serde_json::from_str(&text).ok()
}

/// Writes through a temporary file in the same directory and renames it into place.
fn cache_store(dir: &Path, key: &str, pt: &PhasePoint) -> Result<()> {
    let tmp = dir.join(format!("{key}.json.tmp{}", std::process::id()));
    fs::write(&tmp, serde_json::to_vec(pt)?)?;
    fs::rename(&tmp, dir.join(format!("{key}.json")))?;
    Ok(())
}

/// Classifies every grid point in parallel, reusing cached points.
///
/// Points that fail with a non-configuration error are carried as undetermined.
pub fn scan(grid: &GridSpec, cfg: &ScanConfig) -> Result<PhaseGrid> {
    TreeParams::new(cfg.phase.k)?;
    cfg.phase.mc.validate()?;
    if let Some(dir) = &cfg.cache_dir {
        fs::create_dir_all(dir)?;
    }
    let master = RngHandle::new(cfg.seed);
    let tasks: Vec<(usize, usize)> =
        (0..grid.lambdas.len()).flat_map(|i| (0..grid.energies.len()).map(move |j| (i, j))).collect();
    let points = tasks
        .into_par_iter()
        .map(|(i, j)| -> Result<PhasePoint> {
            let (lambda, energy) = (grid.lambdas[i], grid.energies[j]);
            let mut pc = cfg.phase.clone();
            pc.mc.seed = master.derive(&[i as u64, j as u64]).stream_id();
            let key = cache_key(&pc, lambda, energy)?;
            if let Some(dir) = &cfg.cache_dir {
                if let Some(hit) = cache_load(dir, &key) {
                    return Ok(hit);
                }
            }
            let pt = match classify_point(energy, lambda, &pc) {
                Ok(p) => p,
                Err(e @ Error::Config(_)) => return Err(e),
                Err(e) => {
                    let mut p = PhasePoint::bare(energy, lambda, pc.mc.seed);
                    p.diagnostics.push(e.to_string());
                    p
                }
            };
            if let Some(dir) = &cfg.cache_dir {
                cache_store(dir, &key, &pt)?;
            }
            Ok(pt)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseGrid { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Lyapunov,
    Phi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePoint {
    pub lambda: f64,
    pub energy: f64,
    pub criterion: Criterion,
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Sign changes of `log K - L` and of `-log K - φ(1)` between neighbouring
/// grid points (along `λ` at fixed `E` and along `E` at fixed `λ`), located by
/// linear interpolation.
pub fn edge_extract(grid: &PhaseGrid) -> Vec<EdgePoint> {
    let lambdas = sorted_unique(grid.points.iter().map(|p| p.lambda).collect());
    let energies = sorted_unique(grid.points.iter().map(|p| p.energy).collect());
    let find = |l: f64, e: f64| grid.points.iter().find(|p| p.lambda == l && p.energy == e);
    let mut out = Vec::new();
    for (criterion, gap) in [
        (Criterion::Lyapunov, (|p: &PhasePoint| p.lyapunov_gap) as fn(&PhasePoint) -> Option<f64>),
        (Criterion::Phi, |p: &PhasePoint| p.phi_gap),
    ] {
        let mut push = |a: &PhasePoint, b: &PhasePoint| {
            if let (Some(ga), Some(gb)) = (gap(a), gap(b)) {
                if ga == 0.0 {
                    out.push(EdgePoint { lambda: a.lambda, energy: a.energy, criterion });
                } else if ga * gb < 0.0 {
                    let t = ga / (ga - gb);
                    out.push(EdgePoint {
                        lambda: a.lambda + t * (b.lambda - a.lambda),
                        energy: a.energy + t * (b.energy - a.energy),
                        criterion,
                    });
                }
            }
        };
        for &e in &energies {
            for w in lambdas.windows(2) {
                if let (Some(a), Some(b)) = (find(w[0], e), find(w[1], e)) {
                    push(a, b);
                }
            }
        }
        for &l in &lambdas {
            for w in energies.windows(2) {
                if let (Some(a), Some(b)) = (find(l, w[0]), find(l, w[1])) {
                    push(a, b);
                }
            }
        }
    }
    out.sort_by(|a, b| {
        (a.criterion as u8, a.energy, a.lambda)
            .partial_cmp(&(b.criterion as u8, b.energy, b.lambda))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuityConfig {
    pub k: u32,
    pub disorder: DisorderSpec,
    pub protocol: EtaProtocol,
    pub mc: McBudget,
    /// Quadrature nodes across the interval (trapezoid rule).
    pub n_energies: usize,
}

impl Default for ContinuityConfig {
    fn default() -> Self {
        Self {
            k: 2,
            disorder: DisorderSpec::cauchy(),
            protocol: EtaProtocol::default(),
            mc: McBudget::default(),
            n_energies: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub lambda: f64,
    /// Trapezoid estimate of `∫_I L_λ dE`.
    pub integral: f64,
    pub integral_se: f64,
    /// `∫_I L_0 dE` on the same nodes.
    pub reference: f64,
    /// `|integral - reference|`.
    pub difference: f64,
    /// Closed-form difference for Cauchy disorder.
    pub exact_difference: Option<f64>,
    pub warnings: Vec<String>,
}

/// Real-axis `L_0(E)`, continuous through the band edge where it equals `log √K`.
fn l0_real(tree: TreeParams, e: f64) -> Result<f64> {
    if (e.abs() - tree.band_edge()).abs() < 1e-12 {
        return Ok(0.5 * tree.kf().ln());
    }
    lyapunov_exact_free(tree, HalfPlanePoint::real(e)?)
}

/// `|∫_I L_λ dE - ∫_I L_0 dE|` for each `λ`. At `λ = 0` the model is solved
/// exactly and the closed form is used instead of a pool run.
pub fn continuity_check(interval: (f64, f64), lambdas: &[f64], cfg: &ContinuityConfig) -> Result<Vec<ContinuityRow>> {
    let tree = TreeParams::new(cfg.k)?;
    let (a, b) = interval;
    if !(b > a) || cfg.n_energies < 2 {
        return Err(Error::Config("need a nonempty interval and at least two nodes".into()));
    }
    let edge = tree.kf() + 1.0;
    if a < -edge || b > edge {
        return Err(Error::Domain(format!("interval must lie within [-{edge}, {edge}]")));
    }
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("lambdas must be strictly decreasing".into()));
    }
    let nodes: Vec<f64> = (0..cfg.n_energies).map(|i| a + (b - a) * i as f64 / (cfg.n_energies - 1) as f64).collect();
    let h = (b - a) / (cfg.n_energies - 1) as f64;
    let weights: Vec<f64> = (0..cfg.n_energies)
        .map(|i| if i == 0 || i + 1 == cfg.n_energies { 0.5 * h } else { h })
        .collect();
    let l0: Vec<f64> = nodes.iter().map(|&e| l0_real(tree, e)).collect::<Result<_>>()?;
    let reference = trapezoid(&nodes, &l0);
    let master = RngHandle::new(cfg.mc.seed);
    let mut rows = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        let exact_difference = if cfg.disorder.is_cauchy() {
            let l: Vec<f64> = nodes.iter().map(|&e| lyapunov_exact_cauchy(tree, lambda, e)).collect::<Result<_>>()?;
            Some((trapezoid(&nodes, &l) - reference).abs())
        } else {
            None
        };
        if lambda == 0.0 {
            rows.push(ContinuityRow { lambda, integral: reference, integral_se: 0.0, reference, difference: 0.0, exact_difference, warnings: Vec::new() });
            continue;
        }
        let est: Vec<CavityEstimate> = nodes
            .par_iter()
            .enumerate()
            .map(|(j, &e)| {
                let mut mc = cfg.mc.clone();
                mc.seed = master.derive(&[i as u64, j as u64]).stream_id();
                let p = CavityParams::new(tree, lambda, HalfPlanePoint::real(e)?, cfg.disorder.clone())?;
                Ok(lyapunov_and_dos(&p, &cfg.protocol, &mc, false)?.0)
            })
            .collect::<Result<_>>()?;
        let integral: f64 = est.iter().zip(&weights).map(|(e, w)| w * e.value).sum();
        let integral_se = est.iter().zip(&weights).map(|(e, w)| (w * e.std_error).powi(2)).sum::<f64>().sqrt();
        let mut warnings: Vec<String> = est.iter().flat_map(|e| e.warnings.iter().cloned()).collect();
        warnings.dedup();
        rows.push(ContinuityRow {
            lambda,
            integral,
            integral_se,
            reference,
            difference: (integral - reference).abs(),
            exact_difference,
            warnings,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(lambda: f64, energy: f64, gap: f64) -> PhasePoint {
        let mut p = PhasePoint::bare(energy, lambda, 0);
        p.lyapunov_gap = Some(gap);
        p
    }

    #[test]
    fn synthetic_margin_crosses_at_one() {
        let lambdas = [0.5, 0.8, 1.1, 1.4];
        let points = lambdas.iter().flat_map(|&l| [0.0, 1.0].map(|e| synthetic(l, e, l - 1.0))).collect();
        let edge = edge_extract(&PhaseGrid { points });
        assert_eq!(edge.len(), 2);
        for p in edge {
            assert!((p.lambda - 1.0).abs() < 1e-12);
            assert_eq!(p.criterion, Criterion::Lyapunov);
        }
    }

    #[test]
    fn monotone_column_without_sign_change() {
        let points = [0.5, 0.8, 1.1].iter().map(|&l| synthetic(l, 0.0, l + 1.0)).collect();
        assert!(edge_extract(&PhaseGrid { points }).is_empty());
    }

    #[test]
    fn empty_grid_scans_to_nothing() {
        let g = scan(&GridSpec { lambdas: vec![], energies: vec![] }, &ScanConfig::default()).unwrap();
        assert!(g.points.is_empty());
        assert!(edge_extract(&g).is_empty());
    }

    #[test]
    fn outside_bounded_spectrum() {
        let cfg = PhaseConfig {
            disorder: DisorderSpec::uniform(),
            protocol: EtaProtocol::extrapolate(&[0.1, 0.05]),
            mc: McBudget { n_pool: 2000, burn_in: 50, measure_sweeps: 20, n_batches: 4, ..McBudget::default() },
            ..PhaseConfig::default()
        };
        let p = classify_point(5.0, 0.5, &cfg).unwrap();
        assert_eq!(p.label, PhaseLabel::OutsideSpectrum);
    }

    #[test]
    fn strong_uniform_disorder_is_certified_by_the_bound() {
        let cfg = PhaseConfig {
            disorder: DisorderSpec::uniform(),
            protocol: EtaProtocol::extrapolate(&[0.1, 0.05]),
            mc: McBudget { n_pool: 2000, burn_in: 50, measure_sweeps: 20, n_batches: 4, ..McBudget::default() },
            phi: PhiMode::Bound,
            ..PhaseConfig::default()
        };
        let p = classify_point(0.0, 20.0, &cfg).unwrap();
        assert_eq!(p.label, PhaseLabel::LocalizedPhiCertified);
        assert_eq!(p.phi_source, Some(PhiSource::CsBound));
    }

    #[test]
    fn cache_key_depends_on_point_and_seed() {
        let cfg = PhaseConfig::default();
        let a = cache_key(&cfg, 1.0, 0.0).unwrap();
        assert_eq!(a.len(), 64);
        assert_ne!(a, cache_key(&cfg, 1.0, 0.1).unwrap());
        let mut other = cfg.clone();
        other.mc.seed = 9;
        assert_ne!(a, cache_key(&other, 1.0, 0.0).unwrap());
        assert_eq!(a, cache_key(&cfg, 1.0, 0.0).unwrap());
    }

    #[test]
    fn continuity_at_zero_disorder_is_exact() {
        let rows = continuity_check((-1.0, 1.0), &[0.0], &ContinuityConfig::default()).unwrap();
        assert_eq!(rows[0].difference, 0.0);
        assert_eq!(rows[0].exact_difference, Some(0.0));
    }

    #[test]
    fn continuity_rejects_bad_input() {
        let cfg = ContinuityConfig::default();
        assert!(continuity_check((1.0, 0.0), &[0.1], &cfg).is_err());
        assert!(continuity_check((0.0, 1.0), &[0.1, 0.2], &cfg).is_err());
        assert!(continuity_check((0.0, 5.0), &[0.1], &cfg).is_err());
    }

    #[test]
    fn band_edge_limit_of_l0() {
        let t = TreeParams::new(2).unwrap();
        let e = t.band_edge();
        assert!((l0_real(t, e).unwrap() - l0_real(t, e - 1e-9).unwrap()).abs() < 1e-3);
    }
}
