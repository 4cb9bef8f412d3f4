//! Population dynamics for the forward recursion
//! `Γ(x) = 1 / (λ ω(x) - z - Σ_{y child of x} Γ(y))`.
//!
//! A [`CavityPool`] holds `N` samples approximating the stationary law of
//! `Γ`. One sweep performs `N` asynchronous replacements: a random slot is
//! overwritten by the recursion applied to `K` samples drawn with replacement
//! from the current pool and a fresh potential value.
//!
//! The estimators in [`estimators`] and [`ray`] run the pool at a sequence of
//! decreasing `η` and extrapolate to the real axis according to an
//! [`EtaProtocol`].

pub mod estimators;
pub mod ray;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::DisorderSpec;
use crate::exact::{HalfPlanePoint, TreeParams};
use crate::numeric::{batch_means_se, mean};
use crate::rng::{index, RngHandle};
use crate::{Error, Result};

pub use estimators::{estimate_dos, estimate_ids, estimate_lyapunov, estimate_lyapunov_and_dos, IdsEstimate};
pub use ray::{
    estimate_free_energy, estimate_free_energy_curve, estimate_greens_second_moment, estimate_phi_at_one, log_slope,
    PhiAtOne, RayConfig, RayMethod, PHI_S_VALUES,
};

/// Sub-stream tags below a pool's handle.
pub(crate) const TAG_INIT: u64 = 0;
pub(crate) const TAG_SWEEP: u64 = 1;
pub(crate) const TAG_OBSERVE: u64 = 2;
pub(crate) const TAG_RAY: u64 = 3;

/// Model parameters of one cavity computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub tree: TreeParams,
    pub lambda: f64,
    pub z: HalfPlanePoint,
    pub disorder: DisorderSpec,
}

impl CavityParams {
    pub fn new(tree: TreeParams, lambda: f64, z: HalfPlanePoint, disorder: DisorderSpec) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { tree, lambda, z, disorder })
    }

    /// Same parameters at a different imaginary part.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        let mut p = self.clone();
        p.z = HalfPlanePoint::new(self.z.energy, eta)?;
        Ok(p)
    }

    #[inline]
    pub(crate) fn potential<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * self.disorder.draw(rng)
        }
    }
}

/// Monte Carlo budget shared by all pool-based estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McBudget {
    pub n_pool: usize,
    pub burn_in: u32,
    pub measure_sweeps: u32,
    pub n_batches: u32,
    /// Number of update shards per sweep (one means fully in-place updates).
    pub n_shards: usize,
    pub seed: u64,
    /// Absolute slack added to the two-sigma stationarity comparison.
    pub drift_floor: f64,
    /// How many times a failed stationarity test may extend the burn-in.
    pub max_extensions: u32,
    /// Start each `η` of a sequence from the pool equilibrated at the previous one.
    pub warm_start: bool,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            n_pool: 100_000,
            burn_in: 200,
            measure_sweeps: 100,
            n_batches: 10,
            n_shards: 1,
            seed: 0,
            drift_floor: 1e-6,
            max_extensions: 3,
            warm_start: true,
        }
    }
}

impl McBudget {
    pub fn validate(&self) -> Result<()> {
        if self.n_pool < 1000 {
            return Err(Error::Config(format!("n_pool must be >= 1000, got {}", self.n_pool)));
        }
        if self.n_batches < 2 || self.measure_sweeps < self.n_batches {
            return Err(Error::Config(
                "measure_sweeps must be >= n_batches >= 2".into(),
            ));
        }
        if self.n_shards == 0 || self.n_shards > self.n_pool {
            return Err(Error::Config("n_shards must lie in 1..=n_pool".into()));
        }
        if !(self.drift_floor >= 0.0) {
            return Err(Error::Config("drift_floor must be >= 0".into()));
        }
        Ok(())
    }
}

/// Extrapolation rule used to reach `η = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrapolationRule {
    /// Linear in `η` through the last two points.
    Linear,
    /// Linear in `√η` through the last two points.
    Sqrt,
}

/// How the boundary value `η ↓ 0` is approached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaProtocol {
    /// Report the value at `params.z` (which must have `η > 0`).
    Fixed,
    /// Run at each `η` (strictly decreasing) and extrapolate to zero.
    Extrapolate {
        etas: Vec<f64>,
        rule: ExtrapolationRule,
        /// Add the spread between the linear and the square-root rule to the
        /// reported error as a systematic term.
        #[serde(default = "yes")]
        systematic: bool,
    },
}

fn yes() -> bool {
    true
}

impl Default for EtaProtocol {
    fn default() -> Self {
        Self::Extrapolate {
            etas: vec![0.1, 0.01, 0.001],
            rule: ExtrapolationRule::Linear,
            systematic: true,
        }
    }
}

impl EtaProtocol {
    /// Extrapolation over `etas` with the default rule.
    pub fn extrapolate(etas: &[f64]) -> Self {
        Self::Extrapolate {
            etas: etas.to_vec(),
            rule: ExtrapolationRule::Linear,
            systematic: true,
        }
    }

    /// The `η` values to run for `params`.
    pub fn etas(&self, params: &CavityParams) -> Result<Vec<f64>> {
        match self {
            EtaProtocol::Fixed => {
                if !params.z.is_interior() {
                    return Err(Error::Domain("a fixed-eta protocol needs eta > 0".into()));
                }
                Ok(vec![params.z.eta])
            }
            EtaProtocol::Extrapolate { etas, .. } => {
                if etas.is_empty() {
                    return Err(Error::Config("eta sequence is empty".into()));
                }
                if etas.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
                    return Err(Error::Config("every eta must be finite and > 0".into()));
                }
                if etas.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(Error::Config("eta sequence must be strictly decreasing".into()));
                }
                Ok(etas.clone())
            }
        }
    }
}

/// Value of an observable at one `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaPoint {
    pub eta: f64,
    pub value: f64,
    pub std_error: f64,
}

/// A Monte Carlo estimate with its error bar and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityEstimate {
    pub value: f64,
    /// Statistical and (if requested) extrapolation error combined in quadrature.
    pub std_error: f64,
    pub n_effective: u64,
    /// `η` of the reported value (zero after extrapolation).
    pub eta: f64,
    pub per_eta: Vec<EtaPoint>,
    /// Extrapolation part of `std_error`.
    pub systematic_error: f64,
    pub total_sweeps: u64,
    /// Stream address the estimate was computed from.
    pub stream: String,
    pub warnings: Vec<String>,
}

impl CavityEstimate {
    pub(crate) fn from_points(
        points: Vec<EtaPoint>,
        protocol: &EtaProtocol,
        n_effective: u64,
        total_sweeps: u64,
        stream: String,
        warnings: Vec<String>,
    ) -> Self {
        let (value, stat, sys, eta) = extrapolate(&points, protocol);
        Self {
            value,
            std_error: (stat * stat + sys * sys).sqrt(),
            n_effective,
            eta,
            per_eta: points,
            systematic_error: sys,
            total_sweeps,
            stream,
            warnings,
        }
    }
}

/// Returns `(value, statistical error, systematic error, eta)`.
pub(crate) fn extrapolate(points: &[EtaPoint], protocol: &EtaProtocol) -> (f64, f64, f64, f64) {
    let (rule, systematic) = match protocol {
        EtaProtocol::Fixed => {
            let p = points[points.len() - 1];
            return (p.value, p.std_error, 0.0, p.eta);
        }
        EtaProtocol::Extrapolate { rule, systematic, .. } => (*rule, *systematic),
    };
    if points.len() == 1 {
        let p = points[0];
        return (p.value, p.std_error, 0.0, p.eta);
    }
    let (p1, p2) = (points[points.len() - 2], points[points.len() - 1]);
    let two_point = |f: fn(f64) -> f64| {
        let (x1, x2) = (f(p1.eta), f(p2.eta));
        let a = x1 / (x1 - x2);
        let b = -x2 / (x1 - x2);
        let value = a * p2.value + b * p1.value;
        let se = ((a * p2.std_error).powi(2) + (b * p1.std_error).powi(2)).sqrt();
        (value, se)
    };
    let lin = two_point(|e| e);
    let sq = two_point(f64::sqrt);
    let (value, se) = match rule {
        ExtrapolationRule::Linear => lin,
        ExtrapolationRule::Sqrt => sq,
    };
    let sys = if systematic { (lin.0 - sq.0).abs() } else { 0.0 };
    (value, se, sys, 0.0)
}

/// Population of forward Green functions at fixed parameters.
#[derive(Debug, Clone)]
pub struct CavityPool {
    samples: Vec<Complex64>,
    params: CavityParams,
    sweep_count: u64,
    handle: RngHandle,
    n_shards: usize,
}

/// Fills a pool with single-site resolvents `1 / (λ ω - z)`.
pub fn init_pool(params: &CavityParams, n_pool: usize, rng: &RngHandle) -> Result<CavityPool> {
    if n_pool < 1000 {
        return Err(Error::Domain(format!("pool size must be >= 1000, got {n_pool}")));
    }
    if !params.z.is_interior() {
        return Err(Error::Domain(
            "pool dynamics needs eta > 0; real-axis values come from eta extrapolation".into(),
        ));
    }
    let z = params.z.z();
    let mut r = rng.derive(&[TAG_INIT]).rng();
    let samples = (0..n_pool)
        .map(|_| 1.0 / (Complex64::new(params.potential(&mut r), 0.0) - z))
        .collect();
    let pool = CavityPool {
        samples,
        params: params.clone(),
        sweep_count: 0,
        handle: rng.clone(),
        n_shards: 1,
    };
    pool.check_invariants()?;
    Ok(pool)
}

#[inline]
fn recursion_step<R: rand::Rng + ?Sized>(
    params: &CavityParams,
    z: Complex64,
    read: impl Fn(usize) -> Complex64,
    n: usize,
    rng: &mut R,
) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for _ in 0..params.tree.k() {
        sum += read(index(rng, n));
    }
    1.0 / (Complex64::new(params.potential(rng), 0.0) - z - sum)
}

impl CavityPool {
    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn params(&self) -> &CavityParams {
        &self.params
    }

    pub fn sweep_count(&self) -> u64 {
        self.sweep_count
    }

    pub fn handle(&self) -> &RngHandle {
        &self.handle
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Splits each sweep into `n` shards updated in parallel. Cross-shard reads
    /// see the pool as it was at the start of the sweep.
    pub fn with_shards(mut self, n: usize) -> Result<Self> {
        if n == 0 || n > self.samples.len() {
            return Err(Error::Config(format!("invalid shard count {n}")));
        }
        self.n_shards = n;
        Ok(self)
    }

    /// Moves the pool to a new `η` (same energy) and stream, keeping its samples.
    ///
    /// Only decreasing `η` is allowed, which keeps the resolvent bound intact.
    pub fn retarget(&mut self, eta: f64, handle: RngHandle) -> Result<()> {
        if !(eta > 0.0) || eta > self.params.z.eta {
            return Err(Error::Domain(format!(
                "retarget needs 0 < eta <= {}, got {eta}",
                self.params.z.eta
            )));
        }
        self.params = self.params.with_eta(eta)?;
        self.handle = handle;
        Ok(())
    }

    /// One uniformly chosen sample.
    #[inline]
    pub fn draw<R: rand::RngCore + ?Sized>(&self, rng: &mut R) -> Complex64 {
        self.samples[index(rng, self.samples.len())]
    }

    /// Performs `n_sweeps` sweeps of `N` random-slot replacements each.
    pub fn sweep(&mut self, n_sweeps: u32) -> Result<()> {
        if !self.params.z.is_interior() {
            return Err(Error::Internal("sweep called with eta = 0".into()));
        }
        for _ in 0..n_sweeps {
            if self.n_shards == 1 {
                self.sweep_in_place();
            } else {
                self.sweep_sharded();
            }
            self.sweep_count += 1;
            self.check_invariants()?;
        }
        Ok(())
    }

    fn sweep_in_place(&mut self) {
        let n = self.samples.len();
        let z = self.params.z.z();
        let mut rng = self.handle.derive(&[TAG_SWEEP, self.sweep_count, 0]).rng();
        for _ in 0..n {
            let slot = index(&mut rng, n);
            let samples = &self.samples;
            let g = recursion_step(&self.params, z, |i| samples[i], n, &mut rng);
            self.samples[slot] = g;
        }
    }

    fn sweep_sharded(&mut self) {
        let n = self.samples.len();
        let z = self.params.z.z();
        let snapshot = self.samples.clone();
        let chunk = n.div_ceil(self.n_shards);
        let params = &self.params;
        let handle = &self.handle;
        let sweep = self.sweep_count;
        self.samples.par_chunks_mut(chunk).enumerate().for_each(|(shard, local)| {
            let lo = shard * chunk;
            let len = local.len();
            let mut rng = handle.derive(&[TAG_SWEEP, sweep, shard as u64]).rng();
            for _ in 0..len {
                let slot = index(&mut rng, len);
                let g = {
                    let local: &[Complex64] = local;
                    recursion_step(
                        params,
                        z,
                        |i| if i >= lo && i < lo + len { local[i - lo] } else { snapshot[i] },
                        n,
                        &mut rng,
                    )
                };
                local[slot] = g;
            }
        });
    }

    /// Herglotz property, resolvent bound and finiteness of every sample.
    pub fn check_invariants(&self) -> Result<()> {
        let eta = self.params.z.eta;
        let bound = (1.0 / eta) * (1.0 + 1e-12);
        for (i, g) in self.samples.iter().enumerate() {
            if !(g.im > 0.0) || !g.re.is_finite() || !(g.norm() <= bound) {
                return Err(Error::Internal(format!(
                    "pool sample {i} = {g} violates Im > 0 or |Γ| <= 1/eta = {} after sweep {}",
                    1.0 / eta,
                    self.sweep_count
                )));
            }
        }
        Ok(())
    }

    /// Pool average of `-log |Γ|`.
    pub fn mean_neg_log_abs(&self) -> (f64, f64) {
        let n = self.samples.len() as f64;
        let (s, s2) = self.samples.iter().fold((0.0, 0.0), |(s, s2), g| {
            let l = -0.5 * g.norm_sqr().ln();
            (s + l, s2 + l * l)
        });
        (s / n, s2 / n)
    }

    /// `N` fresh samples of `Im G(0,0) / π` with `K + 1` pool draws each.
    pub fn dos_samples(&self) -> (f64, f64) {
        let n = self.samples.len();
        let z = self.params.z.z();
        let k1 = self.params.tree.k() + 1;
        let mut rng = self.handle.derive(&[TAG_OBSERVE, self.sweep_count]).rng();
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let mut sum = Complex64::new(0.0, 0.0);
            for _ in 0..k1 {
                sum += self.draw(&mut rng);
            }
            let g = 1.0 / (Complex64::new(self.params.potential(&mut rng), 0.0) - z - sum);
            let d = g.im / std::f64::consts::PI;
            s += d;
            s2 += d * d;
        }
        (s / n as f64, s2 / n as f64)
    }
}

/// Which per-sweep observables an equilibration run records.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Wanted {
    pub lyapunov: bool,
    pub dos: bool,
}

/// Per-sweep series of one observable during the measurement window.
#[derive(Debug, Clone, Default)]
pub(crate) struct Series {
    pub means: Vec<f64>,
    pub second: Vec<f64>,
    pub samples_per_sweep: usize,
}

impl Series {
    fn push(&mut self, (m, m2): (f64, f64)) {
        self.means.push(m);
        self.second.push(m2);
    }

    pub fn point(&self, eta: f64, n_batches: usize) -> EtaPoint {
        EtaPoint {
            eta,
            value: mean(&self.means),
            std_error: batch_means_se(&self.means, n_batches),
        }
    }

    /// Effective number of independent samples implied by the batch error.
    pub fn n_effective(&self, n_batches: usize) -> u64 {
        let total = (self.means.len() * self.samples_per_sweep) as u64;
        let se = batch_means_se(&self.means, n_batches);
        let m = mean(&self.means);
        let var = mean(&self.second) - m * m;
        if se > 0.0 && var > 0.0 {
            ((var / (se * se)) as u64).min(total)
        } else {
            total
        }
    }

    fn stationary(&self, n_batches: usize, floor: f64) -> Option<String> {
        let h = self.means.len() / 2;
        let (a, b) = (&self.means[..h], &self.means[h..2 * h]);
        let nb = (n_batches / 2).max(2);
        let (ma, mb) = (mean(a), mean(b));
        let se = (batch_means_se(a, nb).powi(2) + batch_means_se(b, nb).powi(2)).sqrt();
        let diff = (ma - mb).abs();
        (diff > 2.0 * se + floor).then(|| {
            format!("halves differ by {diff:.3e} (first {ma:.6e}, second {mb:.6e}, combined se {se:.3e})")
        })
    }
}

/// Result of equilibrating and measuring a pool at one `η`.
#[derive(Debug, Clone)]
pub(crate) struct EtaRun {
    pub eta: f64,
    pub lyapunov: Series,
    pub dos: Series,
    pub extensions: u32,
}

/// Burn-in, measurement window and stationarity test with adaptive extension.
pub(crate) fn equilibrate_and_measure(
    pool: &mut CavityPool,
    budget: &McBudget,
    burn_in: u32,
    wanted: Wanted,
) -> Result<EtaRun> {
    pool.sweep(burn_in)?;
    let nb = budget.n_batches as usize;
    let mut last_failure = String::new();
    for extension in 0..=budget.max_extensions {
        let mut run = EtaRun {
            eta: pool.params.z.eta,
            lyapunov: Series { samples_per_sweep: pool.len(), ..Default::default() },
            dos: Series { samples_per_sweep: pool.len(), ..Default::default() },
            extensions: extension,
        };
        for _ in 0..budget.measure_sweeps {
            pool.sweep(1)?;
            if wanted.lyapunov {
                run.lyapunov.push(pool.mean_neg_log_abs());
            }
            if wanted.dos {
                run.dos.push(pool.dos_samples());
            }
        }
        let failures: Vec<String> = [("lyapunov", &run.lyapunov, wanted.lyapunov), ("dos", &run.dos, wanted.dos)]
            .into_iter()
            .filter(|(_, _, w)| *w)
            .filter_map(|(name, s, _)| s.stationary(nb, budget.drift_floor).map(|m| format!("{name}: {m}")))
            .collect();
        if failures.is_empty() {
            return Ok(run);
        }
        last_failure = failures.join("; ");
        log::debug!(
            "stationarity failed at eta = {} after {} sweeps: {last_failure}",
            run.eta,
            pool.sweep_count
        );
    }
    Err(Error::Convergence(format!(
        "pool at E = {}, eta = {}, lambda = {} not stationary after {} sweeps and {} extensions: {last_failure}",
        pool.params.z.energy, pool.params.z.eta, pool.params.lambda, pool.sweep_count, budget.max_extensions
    )))
}

/// Runs the protocol's `η` sequence, calling `at_eta` on each equilibrated pool.
pub(crate) fn run_eta_sequence<F>(
    params: &CavityParams,
    protocol: &EtaProtocol,
    budget: &McBudget,
    wanted: Wanted,
    mut at_eta: F,
) -> Result<(Vec<EtaRun>, RngHandle, u64)>
where
    F: FnMut(usize, &CavityPool) -> Result<()>,
{
    budget.validate()?;
    let etas = protocol.etas(params)?;
    let base = RngHandle::new(budget.seed);
    let mut runs = Vec::with_capacity(etas.len());
    let mut pool: Option<CavityPool> = None;
    for (i, &eta) in etas.iter().enumerate() {
        let handle = base.derive(&[i as u64]);
        let p = match pool.take() {
            Some(mut p) if budget.warm_start => {
                p.retarget(eta, handle)?;
                p
            }
            _ => init_pool(&params.with_eta(eta)?, budget.n_pool, &handle)?.with_shards(budget.n_shards)?,
        };
        let mut p = p;
        let run = equilibrate_and_measure(&mut p, budget, budget.burn_in, wanted)?;
        at_eta(i, &p)?;
        runs.push(run);
        pool = Some(p);
    }
    let sweeps = pool.map_or(0, |p| p.sweep_count);
    Ok((runs, base, sweeps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::gamma0;

    fn params(k: u32, lambda: f64, e: f64, eta: f64, d: DisorderSpec) -> CavityParams {
        CavityParams::new(TreeParams::new(k).unwrap(), lambda, HalfPlanePoint::new(e, eta).unwrap(), d).unwrap()
    }

    #[test]
    fn init_at_zero_disorder_is_minus_inverse_z() {
        let p = params(2, 0.0, 0.4, 0.2, DisorderSpec::uniform());
        let pool = init_pool(&p, 1000, &RngHandle::new(1)).unwrap();
        let want = -1.0 / p.z.z();
        assert!(pool.samples().iter().all(|g| (g - want).norm() < 1e-15));
    }

    #[test]
    fn init_respects_resolvent_bound() {
        let p = params(2, 0.1, 0.0, 10.0, DisorderSpec::gaussian());
        let pool = init_pool(&p, 2000, &RngHandle::new(2)).unwrap();
        assert!(pool.samples().iter().all(|g| g.norm() <= 0.1));
        let p = params(2, 1.0, 0.0, 1.0, DisorderSpec::cauchy());
        let pool = init_pool(&p, 2000, &RngHandle::new(2)).unwrap();
        assert!(pool.samples().iter().all(|g| g.im > 0.0));
    }

    #[test]
    fn init_rejects_real_axis_and_small_pools() {
        let p = params(2, 1.0, 0.0, 0.0, DisorderSpec::cauchy());
        assert!(matches!(init_pool(&p, 2000, &RngHandle::new(1)), Err(Error::Domain(_))));
        let p = params(2, 1.0, 0.0, 0.1, DisorderSpec::cauchy());
        assert!(matches!(init_pool(&p, 999, &RngHandle::new(1)), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_disorder_pool_collapses_to_gamma0() {
        let p = params(2, 0.0, 0.5, 0.01, DisorderSpec::uniform());
        let mut pool = init_pool(&p, 1000, &RngHandle::new(3)).unwrap();
        pool.sweep(400).unwrap();
        let g0 = gamma0(p.tree, p.z).unwrap();
        let m: Complex64 = pool.samples().iter().sum::<Complex64>() / pool.len() as f64;
        let spread = pool.samples().iter().map(|g| (g - m).norm()).fold(0.0, f64::max);
        assert!((m - g0).norm() < 1e-8, "{m} vs {g0}");
        assert!(spread < 1e-10);
    }

    #[test]
    fn sharded_sweeps_are_reproducible_and_valid() {
        let p = params(3, 1.0, 0.3, 0.05, DisorderSpec::cauchy());
        let run = || {
            let mut pool = init_pool(&p, 4000, &RngHandle::new(9)).unwrap().with_shards(4).unwrap();
            pool.sweep(5).unwrap();
            pool.samples().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn retarget_only_lowers_eta() {
        let p = params(2, 0.5, 0.0, 0.1, DisorderSpec::uniform());
        let mut pool = init_pool(&p, 1000, &RngHandle::new(1)).unwrap();
        assert!(pool.retarget(0.2, RngHandle::new(2)).is_err());
        pool.retarget(0.01, RngHandle::new(2)).unwrap();
        assert_eq!(pool.params().z.eta, 0.01);
    }

    #[test]
    fn extrapolation_is_exact_for_linear_data() {
        let pts: Vec<EtaPoint> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&eta| EtaPoint { eta, value: 2.0 + 3.0 * eta, std_error: 0.0 })
            .collect();
        let proto = EtaProtocol::Extrapolate { etas: vec![], rule: ExtrapolationRule::Linear, systematic: false };
        let (v, se, sys, eta) = extrapolate(&pts, &proto);
        assert!((v - 2.0).abs() < 1e-12);
        assert_eq!((se, sys, eta), (0.0, 0.0, 0.0));
    }

    #[test]
    fn protocol_validation() {
        let p = params(2, 0.5, 0.0, 0.0, DisorderSpec::uniform());
        assert!(EtaProtocol::Fixed.etas(&p).is_err());
        assert!(EtaProtocol::extrapolate(&[0.01, 0.1]).etas(&p).is_err());
        assert!(EtaProtocol::extrapolate(&[0.1, -0.01]).etas(&p).is_err());
        assert_eq!(EtaProtocol::default().etas(&p).unwrap(), vec![0.1, 0.01, 0.001]);
    }
}
