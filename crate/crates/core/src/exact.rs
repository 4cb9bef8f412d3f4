//! Closed forms for the free and Cauchy-disordered Bethe lattice.
//!
//! At `λ = 0` the forward recursion closes to `K Γ² + z Γ + 1 = 0`. Its
//! Herglotz root is written as `Γ₀ = -2 / (z + √(z - 2√K) √(z + 2√K))` with
//! principal square roots; the product of the two roots is analytic off the
//! band `[-2√K, 2√K]` and behaves like `z` at infinity, so this expression is
//! the branch with `Im Γ₀ > 0` in the open upper half-plane. On the real axis
//! the same formula, evaluated with an imaginary part of `+0.0`, yields the
//! limit from above.
//!
//! Standard Cauchy disorder of strength `λ` acts on the average Green
//! functions as the shift `z → z + iλ`, which gives the Lyapunov exponent in
//! closed form.

use std::f64::consts::{E as EULER, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::disorder::{DisorderSpec, Support};
use crate::{Error, Result};

/// Spectral parameter `z = E + iη` with `η ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint {
    pub energy: f64,
    pub eta: f64,
}

impl HalfPlanePoint {
    pub fn new(energy: f64, eta: f64) -> Result<Self> {
        if !energy.is_finite() || !eta.is_finite() || eta < 0.0 {
            return Err(Error::Domain(format!(
                "spectral parameter needs finite E and eta >= 0, got E = {energy}, eta = {eta}"
            )));
        }
        // Normalize -0.0 so that boundary values are always taken from above.
        let eta = if eta == 0.0 { 0.0 } else { eta };
        Ok(Self { energy, eta })
    }

    /// Point on the real axis.
    pub fn real(energy: f64) -> Result<Self> {
        Self::new(energy, 0.0)
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.energy, self.eta)
    }

    pub fn is_interior(&self) -> bool {
        self.eta > 0.0
    }
}

/// Branching number `K ≥ 2` (coordination number `K + 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct TreeParams {
    k: u32,
}

impl TryFrom<u32> for TreeParams {
    type Error = Error;
    fn try_from(k: u32) -> Result<Self> {
        Self::new(k)
    }
}

impl From<TreeParams> for u32 {
    fn from(t: TreeParams) -> u32 {
        t.k
    }
}

impl TreeParams {
    pub fn new(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("branching number K must be >= 2, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn kf(&self) -> f64 {
        self.k as f64
    }

    /// Band half-width `2√K`.
    pub fn band_edge(&self) -> f64 {
        2.0 * self.kf().sqrt()
    }
}

/// Herglotz root of `K Γ² + z Γ + 1 = 0` for `Im z ≥ 0` (no branch-point check).
#[inline]
pub fn gamma0_complex(k: f64, z: Complex64) -> Complex64 {
    let z = if z.im == 0.0 { Complex64::new(z.re, 0.0) } else { z };
    let a = 2.0 * k.sqrt();
    let s = (z - a).sqrt() * (z + a).sqrt();
    -2.0 / (z + s)
}

/// Root diagonal Green function of the free lattice, `1 / (-z - (K+1) Γ₀)`.
#[inline]
pub fn g00_complex(k: f64, z: Complex64) -> Complex64 {
    1.0 / (-z - (k + 1.0) * gamma0_complex(k, z))
}

fn check_branch_point(tree: TreeParams, z: HalfPlanePoint) -> Result<()> {
    if z.eta == 0.0 && z.energy.abs() == tree.band_edge() {
        return Err(Error::Domain(format!(
            "E = {} is a branch point of the free resolvent at eta = 0",
            z.energy
        )));
    }
    Ok(())
}

/// Forward Green function `Γ₀(z)` of the free tree.
pub fn gamma0(tree: TreeParams, z: HalfPlanePoint) -> Result<Complex64> {
    check_branch_point(tree, z)?;
    Ok(gamma0_complex(tree.kf(), z.z()))
}

/// `L₀(z) = -log |Γ₀(z)|`.
pub fn lyapunov_exact_free(tree: TreeParams, z: HalfPlanePoint) -> Result<f64> {
    Ok(-gamma0(tree, z)?.norm().ln())
}

/// Lyapunov exponent for standard Cauchy disorder: `L_λ(E) = L₀(E + iλ)`.
pub fn lyapunov_exact_cauchy(tree: TreeParams, lambda: f64, energy: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    lyapunov_exact_free(tree, HalfPlanePoint::new(energy, lambda)?)
}

/// Almost-sure spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spectrum {
    Interval { lo: f64, hi: f64 },
    AllReals,
}

impl Spectrum {
    pub fn contains(&self, e: f64) -> bool {
        match *self {
            Spectrum::Interval { lo, hi } => (lo..=hi).contains(&e),
            Spectrum::AllReals => true,
        }
    }
}

/// `[-2√K, 2√K] + λ supp P₀`.
pub fn spectrum_edges(tree: TreeParams, lambda: f64, disorder: &DisorderSpec) -> Spectrum {
    let b = tree.band_edge();
    if lambda == 0.0 {
        return Spectrum::Interval { lo: -b, hi: b };
    }
    match disorder.support_interval() {
        Support::Unbounded => Spectrum::AllReals,
        Support::Bounded { lo, hi } => {
            let (a, c) = (lambda * lo, lambda * hi);
            Spectrum::Interval {
                lo: -b + a.min(c),
                hi: b + a.max(c),
            }
        }
    }
}

/// Disorder thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Below this strength the band edges carry ac spectrum.
    pub lambda_min: f64,
    /// `‖ρ‖_∞ K (e log K + 1)`.
    pub lambda_c_upper: f64,
    /// `K - 1`, Cauchy only.
    pub lambda_c_lower: Option<f64>,
}

pub fn lambda_thresholds(tree: TreeParams, disorder: &DisorderSpec) -> Result<Thresholds> {
    let k = tree.kf();
    let rho = disorder.sup_density();
    if !rho.is_finite() {
        return Err(Error::Domain("sup_density must be finite".into()));
    }
    Ok(Thresholds {
        lambda_min: (k.sqrt() - 1.0).powi(2) / 2.0,
        lambda_c_upper: rho * k * (EULER * k.ln() + 1.0),
        lambda_c_lower: disorder.is_cauchy().then_some(k - 1.0),
    })
}

/// `log C_s(λ)` with `C_s(λ) = ‖ρ‖_∞^s / ((1 - s) λ^s)`, an upper bound on `φ_λ(s; z)`.
pub fn log_cs_bound(disorder: &DisorderSpec, s: f64, lambda: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s must lie in (0, 1), got {s}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(s * (disorder.sup_density() / lambda).ln() - (1.0 - s).ln())
}

/// Minimum of [`log_cs_bound`] over `s ∈ (0, 1)` and the minimizing `s`.
///
/// With `a = log(‖ρ‖_∞/λ)` the bound is `a s - log(1 - s)`, minimized at
/// `s = 1 + 1/a` when `a < -1` (value `a + 1 + log(-a)`); otherwise the infimum
/// is `0`, approached as `s → 0`, and `None` is returned for the minimizer.
pub fn min_log_cs_bound(disorder: &DisorderSpec, lambda: f64) -> Result<(f64, Option<f64>)> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
    }
    let a = (disorder.sup_density() / lambda).ln();
    if a < -1.0 {
        Ok((a + 1.0 + (-a).ln(), Some(1.0 + 1.0 / a)))
    } else {
        Ok((0.0, None))
    }
}

/// `⟨δ_x, (-Δ)^{-1} δ_0⟩` for `|x| = distance`, with `Δ = -T - (K+1)`.
///
/// This is the free Green function at `z = -(K+1)`, where `Γ₀ = 1/K`, so the
/// kernel equals `K / ((K+1)(K-1)) · K^{-distance}`.
pub fn diffusion_kernel(tree: TreeParams, distance: u32) -> f64 {
    let k = tree.kf();
    let z = Complex64::new(-(k + 1.0), 0.0);
    let g00 = g00_complex(k, z).re;
    let gamma = gamma0_complex(k, z).re;
    g00 * gamma.powi(distance as i32)
}

/// Kesten–McKay density of states, `Im G(0,0; E + i0) / π`.
pub fn kesten_mckay_dos(tree: TreeParams, energy: f64) -> f64 {
    if energy.abs() >= tree.band_edge() {
        return 0.0;
    }
    (g00_complex(tree.kf(), Complex64::new(energy, 0.0)).im / PI).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(k: u32) -> TreeParams {
        TreeParams::new(k).unwrap()
    }

    fn pt(e: f64, eta: f64) -> HalfPlanePoint {
        HalfPlanePoint::new(e, eta).unwrap()
    }

    #[test]
    fn gamma0_at_band_center() {
        let g = gamma0(t(2), pt(0.0, 0.0)).unwrap();
        assert!(g.re.abs() < 1e-15);
        assert_relative_eq!(g.im, 1.0 / 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn gamma0_at_e_equals_k_plus_one() {
        let g = gamma0(t(2), pt(3.0, 0.0)).unwrap();
        assert_relative_eq!(g.re, -0.5, max_relative = 1e-14);
        assert_eq!(g.im, 0.0);
        assert!((2.0 * g * g + 3.0 * g + 1.0).norm() < 1e-14);
    }

    #[test]
    fn gamma0_large_eta_matches_minus_inverse_z() {
        for k in [2, 3, 5] {
            let z = pt(0.3, 1e6);
            let g = gamma0(t(k), z).unwrap();
            assert!((z.z() * g + 1.0).norm() < 1e-10);
        }
    }

    #[test]
    fn branch_points_rejected_at_real_axis() {
        let b = 2.0 * 2f64.sqrt();
        assert!(matches!(gamma0(t(2), pt(b, 0.0)), Err(Error::Domain(_))));
        assert!(matches!(gamma0(t(2), pt(-b, 0.0)), Err(Error::Domain(_))));
        assert!(gamma0(t(2), pt(b, 1e-9)).is_ok());
    }

    #[test]
    fn below_band_real_axis_is_the_decaying_root() {
        let g = gamma0(t(2), pt(-3.0, 0.0)).unwrap();
        assert_relative_eq!(g.re, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn lyapunov_free_cases() {
        let k2 = t(2);
        assert_relative_eq!(lyapunov_exact_free(k2, pt(0.0, 0.0)).unwrap(), 2f64.sqrt().ln(), max_relative = 1e-14);
        assert_relative_eq!(lyapunov_exact_free(k2, pt(3.0, 0.0)).unwrap(), 2f64.ln(), max_relative = 1e-14);
        let mid = lyapunov_exact_free(k2, pt(2.9, 0.0)).unwrap();
        assert!(mid > 0.3466 && mid < 0.6931, "{mid}");
    }

    #[test]
    fn lyapunov_cauchy_values() {
        assert_relative_eq!(lyapunov_exact_cauchy(t(2), 1.0, 0.0).unwrap(), 2f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(lyapunov_exact_cauchy(t(2), 0.0, 0.0).unwrap(), 2f64.sqrt().ln(), max_relative = 1e-14);
        assert_relative_eq!(lyapunov_exact_cauchy(t(3), 2.0, 0.0).unwrap(), 3f64.ln(), max_relative = 1e-14);
        assert!(lyapunov_exact_cauchy(t(2), -0.1, 0.0).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let b = 2.0 * 2f64.sqrt();
        assert_eq!(
            spectrum_edges(t(2), 1.0, &DisorderSpec::uniform()),
            Spectrum::Interval { lo: -b - 1.0, hi: b + 1.0 }
        );
        assert_eq!(spectrum_edges(t(2), 0.0, &DisorderSpec::cauchy()), Spectrum::Interval { lo: -b, hi: b });
        assert_eq!(spectrum_edges(t(2), 0.5, &DisorderSpec::gaussian()), Spectrum::AllReals);
    }

    #[test]
    fn threshold_examples() {
        let th = lambda_thresholds(t(4), &DisorderSpec::uniform()).unwrap();
        assert_relative_eq!(th.lambda_min, 0.5, max_relative = 1e-15);
        assert_eq!(th.lambda_c_lower, None);
        let th = lambda_thresholds(t(2), &DisorderSpec::uniform()).unwrap();
        assert_relative_eq!(th.lambda_c_upper, 2.8842, max_relative = 1e-4);
        let th = lambda_thresholds(t(2), &DisorderSpec::cauchy()).unwrap();
        assert_eq!(th.lambda_c_lower, Some(1.0));
    }

    #[test]
    fn cs_minimum_matches_grid_search() {
        let u = DisorderSpec::uniform();
        for lambda in [0.5, 3.0, 20.0, 100.0] {
            let (m, _) = min_log_cs_bound(&u, lambda).unwrap();
            let grid = (1..10_000)
                .map(|i| log_cs_bound(&u, i as f64 / 10_000.0, lambda).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!((m - grid).abs() < 1e-4 || (m == 0.0 && grid > -1e-12), "{lambda}: {m} vs {grid}");
        }
        let (m, s) = min_log_cs_bound(&u, 20.0).unwrap();
        assert!(m < -2f64.ln());
        assert!(s.unwrap() > 0.0 && s.unwrap() < 1.0);
    }

    #[test]
    fn diffusion_kernel_constant_and_ratio() {
        for k in [2u32, 3, 4] {
            let kf = k as f64;
            assert_relative_eq!(diffusion_kernel(t(k), 0), kf / ((kf + 1.0) * (kf - 1.0)), max_relative = 1e-14);
            for d in 0..10 {
                assert_relative_eq!(
                    diffusion_kernel(t(k), d + 1) / diffusion_kernel(t(k), d),
                    1.0 / kf,
                    max_relative = 1e-13
                );
            }
        }
    }

    #[test]
    fn kesten_mckay_values() {
        assert_relative_eq!(kesten_mckay_dos(t(2), 0.0), 3.0 * 8f64.sqrt() / (2.0 * PI * 9.0), max_relative = 1e-13);
        assert_eq!(kesten_mckay_dos(t(2), 3.0), 0.0);
        for e in [0.1, 1.3, 2.7] {
            assert_relative_eq!(kesten_mckay_dos(t(3), e), kesten_mckay_dos(t(3), -e), max_relative = 1e-13);
        }
    }

    #[test]
    fn tree_params_validation() {
        assert!(TreeParams::new(1).is_err());
        assert!(serde_json::from_str::<TreeParams>("1").is_err());
        assert_eq!(serde_json::from_str::<TreeParams>("3").unwrap().k(), 3);
    }

    #[test]
    fn half_plane_rejects_negative_eta() {
        assert!(HalfPlanePoint::new(0.0, -1e-3).is_err());
        assert!(HalfPlanePoint::new(f64::NAN, 0.1).is_err());
        assert_eq!(HalfPlanePoint::new(0.0, -0.0).unwrap().eta.to_bits(), 0.0f64.to_bits());
    }
}
