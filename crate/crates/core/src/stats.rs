//! Eigenvalue statistics: rescaled processes, gap ratios, unfolded spacing
//! distributions and participation ratios.
//!
//! The gap ratio `r_n = min(s_n, s_{n+1}) / max(s_n, s_{n+1})` needs no
//! unfolding and is the primary discriminant between Poisson statistics
//! (`⟨r⟩ = 2 ln 2 - 1`) and GOE statistics (`⟨r⟩ ≈ 0.5307`). Spacing histograms
//! are unfolded with the empirical counting function pooled over the ensemble.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::DisorderSpec;
use crate::exact::TreeParams;
use crate::graphs::{
    assemble_hamiltonian, build_random_regular, build_truncated_tree, diagonalize, DisorderRealization, FiniteGraph,
    TreeFlavor, DENSE_CAP,
};
use crate::numeric::{mean, median, variance};
use crate::rng::RngHandle;
use crate::{Error, Result};

/// Mean gap ratio of a Poisson process, `2 ln 2 - 1`.
pub const POISSON_R: f64 = 0.386_294_361_119_890_6;
/// Mean gap ratio of large GOE matrices.
pub const GOE_R: f64 = 0.5307;
/// Spacings below this are treated as exact degeneracies.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Points `|Λ| (E_n - E)` with absolute value at most `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledProcess {
    pub center: f64,
    pub points: Vec<f64>,
    pub window_halfwidth: f64,
    pub volume: usize,
}

pub fn rescale(eigenvalues: &[f64], center: f64, volume: usize, w: f64) -> Result<RescaledProcess> {
    if !(w > 0.0) {
        return Err(Error::Domain(format!("window half-width must be > 0, got {w}")));
    }
    let v = volume as f64;
    let points = eigenvalues
        .iter()
        .map(|e| v * (e - center))
        .filter(|p| p.abs() <= w)
        .collect();
    Ok(RescaledProcess { center, points, window_halfwidth: w, volume })
}

/// Normalized histogram on `[0, s_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
    /// Fraction of values beyond `s_max`.
    pub overflow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStatistics {
    pub mean_gap_ratio: f64,
    pub std_error: f64,
    pub n_gaps: usize,
    /// Gap ratios set to zero because a spacing was degenerate.
    pub n_degenerate: usize,
    pub spacing_histogram: Option<Histogram>,
}

/// Gap ratios of one sorted level sequence and the number of degenerate spacings.
pub fn gap_ratios(levels: &[f64]) -> (Vec<f64>, usize) {
    let s: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let mut degenerate = 0;
    let r = s
        .windows(2)
        .map(|p| {
            let (lo, hi) = (p[0].min(p[1]), p[0].max(p[1]));
            if lo < DEGENERACY_TOL {
                degenerate += 1;
                0.0
            } else {
                lo / hi
            }
        })
        .collect();
    (r, degenerate)
}

/// Mean gap ratio over independent level sequences. The error bar comes from
/// the spread of per-sequence means (or from ten batches of a single sequence).
pub fn gap_ratio(sequences: &[Vec<f64>]) -> Result<GapStatistics> {
    let mut all = Vec::new();
    let mut per = Vec::new();
    let mut degenerate = 0;
    for seq in sequences {
        let (r, d) = gap_ratios(seq);
        degenerate += d;
        if !r.is_empty() {
            per.push((mean(&r), r.len()));
        }
        all.extend(r);
    }
    if all.len() < 2 {
        return Err(Error::Domain(format!("need at least two gap ratios, got {}", all.len())));
    }
    let m = mean(&all);
    let se = if per.len() >= 2 {
        // Ratio estimator error for unequal sequence lengths.
        let n = per.len() as f64;
        let nbar = per.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let dev: Vec<f64> = per.iter().map(|&(mi, ni)| ni as f64 / nbar * (mi - m)).collect();
        (dev.iter().map(|d| d * d).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        crate::numeric::batch_means_se(&all, 10)
    };
    Ok(GapStatistics { mean_gap_ratio: m, std_error: se, n_gaps: all.len(), n_degenerate: degenerate, spacing_histogram: None })
}

/// Merges levels closer than [`DEGENERACY_TOL`]; returns the merged sequence and the merge count.
pub fn merge_degenerate(levels: &[f64]) -> (Vec<f64>, usize) {
    let mut out: Vec<f64> = Vec::with_capacity(levels.len());
    let mut merged = 0;
    for &e in levels {
        match out.last() {
            Some(&last) if e - last < DEGENERACY_TOL => merged += 1,
            _ => out.push(e),
        }
    }
    (out, merged)
}

/// Levels per sequence between consecutive knots of the unfolding map.
const UNFOLD_STRIDE: usize = 8;

/// Unfolds each sequence with the pooled empirical counting function
/// `N(E) = #{pooled levels ≤ E} / n_sequences`. The map interpolates linearly
/// between knots placed every [`UNFOLD_STRIDE`] levels per sequence, so that
/// unfolded spacings are not quantized to multiples of `1 / n_sequences`.
pub fn unfold(sequences: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pooled: Vec<f64> = sequences.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let n_seq = sequences.len().max(1) as f64;
    if pooled.is_empty() {
        return sequences.to_vec();
    }
    let stride = (UNFOLD_STRIDE * sequences.len()).max(1);
    let mut knots: Vec<(f64, f64)> = (0..pooled.len()).step_by(stride).map(|i| (pooled[i], i as f64 + 0.5)).collect();
    let last = pooled.len() - 1;
    if knots.last().map_or(true, |k| k.0 < pooled[last]) {
        knots.push((pooled[last], last as f64 + 0.5));
    }
    let count = |e: f64| -> f64 {
        let j = knots.partition_point(|k| k.0 <= e);
        if j == 0 {
            return knots[0].1;
        }
        if j == knots.len() {
            return knots[j - 1].1;
        }
        let ((xa, ya), (xb, yb)) = (knots[j - 1], knots[j]);
        ya + (yb - ya) * (e - xa) / (xb - xa)
    };
    sequences.iter().map(|s| s.iter().map(|&e| count(e) / n_seq).collect()).collect()
}

/// Unfolded spacing histogram with total-variation distances to the Poisson
/// law `e^{-s}` and the Wigner surmise `(π s/2) e^{-π s²/4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingDistribution {
    pub histogram: Histogram,
    pub tv_poisson: f64,
    pub tv_goe: f64,
    pub n_spacings: usize,
    pub mean_spacing: f64,
    pub warnings: Vec<String>,
}

fn poisson_cdf(s: f64) -> f64 {
    1.0 - (-s).exp()
}

fn wigner_cdf(s: f64) -> f64 {
    1.0 - (-std::f64::consts::PI * s * s / 4.0).exp()
}

/// Histogram of spacings (assumed unfolded to unit mean) on `bins` bins over `[0, s_max]`.
pub fn spacing_distribution(spacings: &[f64], bins: usize, s_max: f64) -> Result<SpacingDistribution> {
    if bins == 0 || !(s_max > 0.0) {
        return Err(Error::Config("need bins >= 1 and s_max > 0".into()));
    }
    if spacings.is_empty() {
        return Err(Error::Domain("no spacings".into()));
    }
    let mut warnings = Vec::new();
    if spacings.len() < 1000 {
        warnings.push(format!("only {} spacings; histogram is noisy", spacings.len()));
    }
    let h = s_max / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut overflow = 0usize;
    for &s in spacings {
        let b = (s / h).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1;
        } else {
            overflow += 1;
        }
    }
    let n = spacings.len() as f64;
    let mut tv_p = (overflow as f64 / n - (1.0 - poisson_cdf(s_max))).abs();
    let mut tv_g = (overflow as f64 / n - (1.0 - wigner_cdf(s_max))).abs();
    for (i, &c) in counts.iter().enumerate() {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        let p = c as f64 / n;
        tv_p += (p - (poisson_cdf(b) - poisson_cdf(a))).abs();
        tv_g += (p - (wigner_cdf(b) - wigner_cdf(a))).abs();
    }
    Ok(SpacingDistribution {
        histogram: Histogram {
            bin_width: h,
            centers: (0..bins).map(|i| (i as f64 + 0.5) * h).collect(),
            density: counts.iter().map(|&c| c as f64 / (n * h)).collect(),
            overflow: overflow as f64 / n,
        },
        tv_poisson: 0.5 * tv_p,
        tv_goe: 0.5 * tv_g,
        n_spacings: spacings.len(),
        mean_spacing: mean(spacings),
        warnings,
    })
}

/// `1 / Σ_x |ψ(x)|⁴` for a normalized vector.
pub fn participation_ratio(psi: &[f64]) -> Result<f64> {
    let norm2: f64 = psi.iter().map(|x| x * x).sum();
    if (norm2.sqrt() - 1.0).abs() > 1e-8 {
        return Err(Error::Domain(format!("vector norm {} is not 1", norm2.sqrt())));
    }
    Ok(1.0 / psi.iter().map(|x| x.powi(4)).sum::<f64>())
}

/// Index range of the central `fraction` of `n` levels by rank.
pub fn central_ranks(n: usize, fraction: f64) -> std::ops::Range<usize> {
    let keep = ((n as f64) * fraction).round() as usize;
    let start = (n - keep.min(n)) / 2;
    start..start + keep.min(n)
}

/// Bulk levels: central 40% by rank, minus the 5% of levels nearest `E = 0`
/// when `symmetric` (bipartite graphs without disorder). Returns one or two
/// contiguous runs so that gap ratios never straddle the excluded region.
pub fn bulk_levels(sorted: &[f64], symmetric: bool) -> Vec<Vec<f64>> {
    let n = sorted.len();
    let bulk = central_ranks(n, 0.4);
    if !symmetric {
        return vec![sorted[bulk].to_vec()];
    }
    let zero = sorted.partition_point(|&e| e < 0.0);
    let half = ((n as f64) * 0.025).round() as usize;
    let (cut_lo, cut_hi) = (zero.saturating_sub(half), (zero + half).min(n));
    let left = bulk.start..bulk.end.min(cut_lo);
    let right = bulk.start.max(cut_hi)..bulk.end;
    [left, right]
        .into_iter()
        .filter(|r| r.end > r.start + 2)
        .map(|r| sorted[r].to_vec())
        .collect()
}

/// Eigenvalues of an `n × n` GOE matrix (off-diagonal variance 1, diagonal variance 2).
pub fn goe_spectrum(n: usize, rng: &RngHandle) -> Vec<f64> {
    let mut r = rng.rng();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let d: f64 = StandardNormal.sample(&mut r);
        m[(i, i)] = d * std::f64::consts::SQRT_2;
        for j in 0..i {
            let x: f64 = StandardNormal.sample(&mut r);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    let mut e: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Coarse verdict of a gap-ratio measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsClass {
    Poisson,
    Goe,
    Intermediate,
    Inconclusive,
}

/// Minimum levels per realization and maximal error bar for a verdict.
const MIN_LEVELS: f64 = 20.0;
const MAX_SE: f64 = 0.01;
const CLASS_BAND: f64 = 0.02;

pub fn classify(mean_r: f64, se: f64, levels_per_realization: f64) -> StatsClass {
    if levels_per_realization < MIN_LEVELS || se > MAX_SE || !mean_r.is_finite() {
        StatsClass::Inconclusive
    } else if (mean_r - POISSON_R).abs() <= CLASS_BAND {
        StatsClass::Poisson
    } else if (mean_r - GOE_R).abs() <= CLASS_BAND {
        StatsClass::Goe
    } else {
        StatsClass::Intermediate
    }
}

/// One row of a statistics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub k: u32,
    pub lambda: f64,
    /// Center energy, or `None` for the bulk window.
    pub energy: Option<f64>,
    /// `L` for trees, `N` for random regular graphs.
    pub size: usize,
    pub volume: usize,
    pub n_realizations: usize,
    pub mean_r: f64,
    pub se_r: f64,
    pub tv_poisson: f64,
    pub tv_goe: f64,
    pub median_pr_fraction: Option<f64>,
    pub n_gaps: usize,
    pub levels_per_realization: f64,
    pub class: StatsClass,
    pub seed: u64,
    pub histogram: Option<Histogram>,
    pub warnings: Vec<String>,
}

/// Gap ratios and unfolded spacing distribution for a set of level runs.
fn summarize(runs: &[Vec<f64>], n_realizations: usize) -> Result<(GapStatistics, Option<SpacingDistribution>, f64, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut merged_total = 0;
    let merged: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| {
            let (m, c) = merge_degenerate(r);
            merged_total += c;
            m
        })
        .collect();
    let gaps = gap_ratio(runs)?;
    if gaps.n_degenerate > 0 {
        warnings.push(format!("{} gap ratios involved degenerate spacings and were set to 0", gaps.n_degenerate));
    }
    if merged_total > 0 {
        warnings.push(format!("{merged_total} degenerate levels merged before unfolding"));
    }
    let levels = runs.iter().map(Vec::len).sum::<usize>() as f64 / n_realizations as f64;
    let spacings: Vec<f64> = unfold(&merged).iter().flat_map(|u| u.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()).collect();
    let dist = if spacings.is_empty() {
        None
    } else {
        let d = spacing_distribution(&spacings, 20, 4.0)?;
        warnings.extend(d.warnings.iter().cloned());
        Some(d)
    };
    Ok((gaps, dist, levels, warnings))
}

/// Settings for the truncated-tree Poisson test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeStatsConfig {
    pub k: u32,
    pub depth: u32,
    pub flavor: TreeFlavor,
    pub lambda: f64,
    pub disorder: DisorderSpec,
    pub centers: Vec<f64>,
    pub n_realizations: usize,
    /// Average number of levels per realization inside the rescaled window.
    pub target_levels: usize,
    pub seed: u64,
}

impl Default for TreeStatsConfig {
    fn default() -> Self {
        Self {
            k: 2,
            depth: 9,
            flavor: TreeFlavor::Rooted,
            lambda: 1.0,
            disorder: DisorderSpec::cauchy(),
            centers: vec![0.0, 2.9],
            n_realizations: 200,
            target_levels: 60,
            seed: 0,
        }
    }
}

fn realization_spectrum(g: &FiniteGraph, disorder: &DisorderSpec, lambda: f64, rng: &RngHandle, vectors: bool) -> Result<crate::graphs::SpectralDecomposition> {
    let real = DisorderRealization::sample(g, disorder, lambda, rng)?;
    diagonalize(&assemble_hamiltonian(g, &real)?, vectors, DENSE_CAP)
}

/// Pooled statistics of the rescaled eigenvalue process of `T_L` at each center.
///
/// The half-width `W` is chosen from the pooled spectra so that on average
/// `target_levels` levels fall into `[-W, W]`; the rescaling volume is `|T_L|`.
pub fn poisson_test_truncated_tree(cfg: &TreeStatsConfig) -> Result<Vec<StatsReport>> {
    let tree = TreeParams::new(cfg.k)?;
    if cfg.n_realizations == 0 || cfg.target_levels < 3 {
        return Err(Error::Config("need realizations and target_levels >= 3".into()));
    }
    let g = build_truncated_tree(tree, cfg.depth, cfg.flavor)?;
    let volume = g.n_vertices();
    let master = RngHandle::new(cfg.seed);
    let spectra: Vec<Vec<f64>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| realization_spectrum(&g, &cfg.disorder, cfg.lambda, &master.child(r as u64), false).map(|d| d.eigenvalues))
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    for &center in &cfg.centers {
        let mut dists: Vec<f64> = spectra.iter().flatten().map(|e| (e - center).abs()).collect();
        dists.sort_by(f64::total_cmp);
        let want = (cfg.target_levels * cfg.n_realizations).min(dists.len());
        let w = if want == 0 { f64::MIN_POSITIVE } else { dists[want - 1] * volume as f64 };
        let w = w.max(f64::MIN_POSITIVE);
        let runs: Vec<Vec<f64>> = spectra
            .iter()
            .map(|s| rescale(s, center, volume, w).map(|p| p.points))
            .collect::<Result<_>>()?;
        let mut warnings = Vec::new();
        let summary = summarize(&runs, cfg.n_realizations);
        let (gaps, dist, levels) = match summary {
            Ok((g, d, l, w)) => {
                warnings.extend(w);
                (Some(g), d, l)
            }
            Err(e) => {
                warnings.push(format!("too few levels for statistics: {e}"));
                (None, None, runs.iter().map(Vec::len).sum::<usize>() as f64 / cfg.n_realizations as f64)
            }
        };
        if levels < MIN_LEVELS {
            warnings.push(format!("only {levels:.1} levels per realization in the window"));
        }
        let (mean_r, se_r, n_gaps) = gaps.as_ref().map_or((f64::NAN, f64::NAN, 0), |g| (g.mean_gap_ratio, g.std_error, g.n_gaps));
        reports.push(StatsReport {
            k: cfg.k,
            lambda: cfg.lambda,
            energy: Some(center),
            size: cfg.depth as usize,
            volume,
            n_realizations: cfg.n_realizations,
            mean_r,
            se_r,
            tv_poisson: dist.as_ref().map_or(f64::NAN, |d| d.tv_poisson),
            tv_goe: dist.as_ref().map_or(f64::NAN, |d| d.tv_goe),
            median_pr_fraction: None,
            n_gaps,
            levels_per_realization: levels,
            class: classify(mean_r, se_r, levels),
            seed: cfg.seed,
            histogram: dist.map(|d| d.histogram),
            warnings,
        });
    }
    Ok(reports)
}

/// Settings for the random-regular-graph scan (bulk window at every `λ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrgScanConfig {
    pub k: u32,
    pub n: usize,
    pub lambdas: Vec<f64>,
    pub disorder: DisorderSpec,
    pub n_realizations: usize,
    /// Also compute eigenvectors and the median participation ratio.
    pub participation: bool,
    pub seed: u64,
}

impl Default for RrgScanConfig {
    fn default() -> Self {
        Self {
            k: 2,
            n: 2000,
            lambdas: vec![0.0, 20.0],
            disorder: DisorderSpec::uniform(),
            n_realizations: 50,
            participation: false,
            seed: 0,
        }
    }
}

/// Bulk gap-ratio statistics of random `(K+1)`-regular graphs for each `λ`.
///
/// Realization `r` at the `i`-th `λ` draws its graph from `seed / i / r / 0`
/// and its potential from `seed / i / r / 1`.
pub fn rrg_statistics_scan(cfg: &RrgScanConfig) -> Result<Vec<StatsReport>> {
    let tree = TreeParams::new(cfg.k)?;
    if cfg.n_realizations == 0 {
        return Err(Error::Config("need at least one realization".into()));
    }
    let master = RngHandle::new(cfg.seed);
    let mut reports = Vec::new();
    for (i, &lambda) in cfg.lambdas.iter().enumerate() {
        let per: Vec<(Vec<Vec<f64>>, Vec<f64>)> = (0..cfg.n_realizations)
            .into_par_iter()
            .map(|r| -> Result<_> {
                let h = master.derive(&[i as u64, r as u64]);
                let g = build_random_regular(tree, cfg.n, &h.child(0))?;
                let dec = realization_spectrum(&g, &cfg.disorder, lambda, &h.child(1), cfg.participation)?;
                let symmetric = lambda == 0.0 && is_bipartite(&g);
                let runs = bulk_levels(&dec.eigenvalues, symmetric);
                let prs = match &dec.eigenvectors {
                    Some(v) => central_ranks(cfg.n, 0.4)
                        .map(|c| {
                            let col: Vec<f64> = v.column(c).iter().copied().collect();
                            participation_ratio(&col).map(|p| p / cfg.n as f64)
                        })
                        .collect::<Result<_>>()?,
                    None => Vec::new(),
                };
                Ok((runs, prs))
            })
            .collect::<Result<_>>()?;
        let runs: Vec<Vec<f64>> = per.iter().flat_map(|p| p.0.iter().cloned()).collect();
        let prs: Vec<f64> = per.iter().flat_map(|p| p.1.iter().copied()).collect();
        let mut warnings = Vec::new();
        let (gaps, dist, levels) = match summarize(&runs, cfg.n_realizations) {
            Ok((g, d, l, w)) => {
                warnings.extend(w);
                (Some(g), d, l)
            }
            Err(e) => {
                warnings.push(format!("too few levels for statistics: {e}"));
                (None, None, 0.0)
            }
        };
        let (mean_r, se_r, n_gaps) = gaps.as_ref().map_or((f64::NAN, f64::NAN, 0), |g| (g.mean_gap_ratio, g.std_error, g.n_gaps));
        reports.push(StatsReport {
            k: cfg.k,
            lambda,
            energy: None,
            size: cfg.n,
            volume: cfg.n,
            n_realizations: cfg.n_realizations,
            mean_r,
            se_r,
            tv_poisson: dist.as_ref().map_or(f64::NAN, |d| d.tv_poisson),
            tv_goe: dist.as_ref().map_or(f64::NAN, |d| d.tv_goe),
            median_pr_fraction: (!prs.is_empty()).then(|| median(&prs)),
            n_gaps,
            levels_per_realization: levels,
            class: classify(mean_r, se_r, levels),
            seed: cfg.seed,
            histogram: dist.map(|d| d.histogram),
            warnings,
        });
    }
    Ok(reports)
}

/// Two-coloring test by breadth-first search.
pub fn is_bipartite(g: &FiniteGraph) -> bool {
    let n = g.n_vertices();
    let mut color = vec![u8::MAX; n];
    for s in 0..n {
        if color[s] != u8::MAX {
            continue;
        }
        color[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &w in g.neighbors(u) {
                let w = w as usize;
                if color[w] == u8::MAX {
                    color[w] = 1 - color[u];
                    queue.push_back(w);
                } else if color[w] == color[u] {
                    return false;
                }
            }
        }
    }
    true
}

/// Sample variance of per-realization gap-ratio means (exposed for diagnostics).
pub fn realization_spread(sequences: &[Vec<f64>]) -> f64 {
    let means: Vec<f64> = sequences.iter().map(|s| mean(&gap_ratios(s).0)).filter(|m| m.is_finite()).collect();
    variance(&means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::open01;

    #[test]
    fn poisson_constant() {
        assert!((POISSON_R - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-16);
    }

    #[test]
    fn rescale_single_level_and_volume_scaling() {
        let p = rescale(&[1.5], 1.5, 100, 1.0).unwrap();
        assert_eq!(p.points, vec![0.0]);
        let levels: Vec<f64> = (0..1000).map(|i| i as f64 * 1e-3).collect();
        let a = rescale(&levels, 0.5, 100, 5.0).unwrap().points.len();
        let b = rescale(&levels, 0.5, 200, 5.0).unwrap().points.len();
        assert!((a as f64 / b as f64 - 2.0).abs() < 0.1);
        assert!(rescale(&levels, 0.5, 100, 0.0).is_err());
    }

    #[test]
    fn picket_fence_ratio_is_one() {
        let levels: Vec<f64> = (0..50).map(|i| i as f64 * 0.3).collect();
        let g = gap_ratio(&[levels]).unwrap();
        assert!((g.mean_gap_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gap_ratio_is_shift_and_scale_invariant() {
        let mut r = RngHandle::new(3).rng();
        let levels: Vec<f64> = {
            let mut v: Vec<f64> = (0..200).map(|_| open01(&mut r)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let a = gap_ratios(&levels).0;
        let b = gap_ratios(&levels.iter().map(|x| 4.0 * x - 7.0).collect::<Vec<_>>()).0;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_spacings_flagged() {
        let (r, d) = gap_ratios(&[0.0, 1.0, 1.0, 2.0]);
        assert_eq!(d, 2);
        assert_eq!(r, vec![0.0, 0.0]);
        let (m, c) = merge_degenerate(&[0.0, 1.0, 1.0, 2.0]);
        assert_eq!((m, c), (vec![0.0, 1.0, 2.0], 1));
    }

    #[test]
    fn participation_ratio_bounds() {
        assert_eq!(participation_ratio(&[0.0, 1.0, 0.0]).unwrap(), 1.0);
        let n = 16;
        let u = vec![1.0 / (n as f64).sqrt(); n];
        assert!((participation_ratio(&u).unwrap() - n as f64).abs() < 1e-10);
        assert!(participation_ratio(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn too_few_gaps() {
        assert!(gap_ratio(&[vec![0.0, 1.0, 2.0]]).is_err());
    }

    #[test]
    fn bulk_excludes_zero_for_symmetric_spectra() {
        let levels: Vec<f64> = (-500..500).map(|i| i as f64 + 0.5).collect();
        let runs = bulk_levels(&levels, true);
        assert_eq!(runs.len(), 2);
        assert!(runs.iter().flatten().all(|e| e.abs() > 20.0));
        assert_eq!(bulk_levels(&levels, false)[0].len(), 400);
    }

    #[test]
    fn classification_rules() {
        assert_eq!(classify(0.39, 0.005, 100.0), StatsClass::Poisson);
        assert_eq!(classify(0.53, 0.005, 100.0), StatsClass::Goe);
        assert_eq!(classify(0.46, 0.005, 100.0), StatsClass::Intermediate);
        assert_eq!(classify(0.53, 0.05, 100.0), StatsClass::Inconclusive);
        assert_eq!(classify(0.53, 0.001, 8.0), StatsClass::Inconclusive);
    }

    #[test]
    fn small_rrg_is_inconclusive() {
        let cfg = RrgScanConfig { n: 20, lambdas: vec![0.0], n_realizations: 10, ..RrgScanConfig::default() };
        let rep = rrg_statistics_scan(&cfg).unwrap();
        assert_eq!(rep[0].class, StatsClass::Inconclusive);
    }

    #[test]
    fn degenerate_tree_warns() {
        let cfg = TreeStatsConfig { depth: 1, n_realizations: 5, centers: vec![0.0], ..TreeStatsConfig::default() };
        let rep = poisson_test_truncated_tree(&cfg).unwrap();
        assert!(!rep[0].warnings.is_empty());
        assert_eq!(rep[0].class, StatsClass::Inconclusive);
    }
}
