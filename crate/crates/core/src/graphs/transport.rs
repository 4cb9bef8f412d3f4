use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FiniteGraph, SpectralDecomposition};
use crate::numeric::line_fit;
use crate::{Error, Result};

/// Spectral window `I = [lo, hi]` for the projection `P_I(H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
}

impl EnergyWindow {
    pub fn all() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn contains(&self, e: f64) -> bool {
        e >= self.lo && e <= self.hi
    }
}

/// `0, 0.5, ..., 200`.
pub fn default_time_grid() -> Vec<f64> {
    (0..=400).map(|i| 0.5 * i as f64).collect()
}

/// Amplitudes `⟨δ_x, e^{-itH} P_I δ_0⟩ = Σ_{n ∈ I} v_n(x) v_n(0) e^{-itE_n}`,
/// kept as the weighted eigenvector block and the window energies.
struct Propagator {
    weighted: DMatrix<f64>,
    energies: Vec<f64>,
}

impl Propagator {
    fn new(dec: &SpectralDecomposition, window: EnergyWindow) -> Result<Self> {
        let v = dec
            .eigenvectors
            .as_ref()
            .ok_or_else(|| Error::Domain("transport needs eigenvectors".into()))?;
        let cols: Vec<usize> = (0..dec.eigenvalues.len()).filter(|&i| window.contains(dec.eigenvalues[i])).collect();
        if cols.is_empty() {
            return Err(Error::Domain(format!("no eigenvalues in the window [{}, {}]", window.lo, window.hi)));
        }
        let n = v.nrows();
        let weighted = DMatrix::from_fn(n, cols.len(), |r, c| v[(r, cols[c])] * v[(0, cols[c])]);
        Ok(Self { weighted, energies: cols.iter().map(|&i| dec.eigenvalues[i]).collect() })
    }

    /// `|a_x(t)|²` for every vertex.
    fn intensities(&self, t: f64) -> Vec<f64> {
        let (c, s): (Vec<f64>, Vec<f64>) = self.energies.iter().map(|e| ((e * t).cos(), -(e * t).sin())).unzip();
        let re = &self.weighted * nalgebra::DVector::from_vec(c);
        let im = &self.weighted * nalgebra::DVector::from_vec(s);
        re.iter().zip(im.iter()).map(|(a, b)| a * a + b * b).collect()
    }

    /// Infinite-time average `Σ_n v_n(x)² v_n(0)²`.
    fn cesaro(&self) -> Vec<f64> {
        self.weighted.row_iter().map(|r| r.iter().map(|w| w * w).sum()).collect()
    }
}

fn root_distances(g: &FiniteGraph) -> Vec<u32> {
    g.distances_from_root().map_or_else(|| g.bfs_distances(0), <[u32]>::to_vec)
}

/// `Σ_x |x|² |⟨δ_x, e^{-itH} P_I δ_0⟩|²` at each time.
pub fn evolve_second_moment(
    g: &FiniteGraph,
    dec: &SpectralDecomposition,
    window: EnergyWindow,
    times: &[f64],
) -> Result<Vec<f64>> {
    let prop = Propagator::new(dec, window)?;
    let d2: Vec<f64> = root_distances(g).iter().map(|&d| (d as f64).powi(2)).collect();
    Ok(times
        .iter()
        .map(|&t| prop.intensities(t).iter().zip(&d2).map(|(p, d)| p * d).sum())
        .collect())
}

/// Ensemble mean of `Σ_{|x| = R} sup_t |⟨δ_x, e^{-itH} P_I δ_0⟩|²` for each `R`.
///
/// The supremum is the maximum over `times` together with the infinite-time
/// average. `decomposition(r)` produces realization `r` on the common graph `g`.
pub fn dynamical_localization_profile<F>(
    g: &FiniteGraph,
    n_realizations: usize,
    decomposition: F,
    window: EnergyWindow,
    radii: &[u32],
    times: &[f64],
) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<SpectralDecomposition> + Sync,
{
    if n_realizations == 0 {
        return Err(Error::Config("need at least one realization".into()));
    }
    let dist = root_distances(g);
    let per: Vec<Vec<f64>> = (0..n_realizations)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let prop = Propagator::new(&decomposition(r)?, window)?;
            let mut sup = prop.cesaro();
            for &t in times {
                for (s, p) in sup.iter_mut().zip(prop.intensities(t)) {
                    *s = s.max(p);
                }
            }
            Ok(radii
                .iter()
                .map(|&rad| sup.iter().zip(&dist).filter(|(_, &d)| d == rad).map(|(s, _)| s).sum())
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..radii.len())
        .map(|i| per.iter().map(|p| p[i]).sum::<f64>() / n_realizations as f64)
        .collect())
}

/// Log-linear fit of a localization profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationFit {
    pub slope: f64,
    /// `-1 / slope` (infinite when the profile does not decay).
    pub xi: f64,
    pub r_squared: f64,
    /// Decaying profile with `R² > 0.9`.
    pub accepted: bool,
}

pub fn fit_localization_length(radii: &[u32], profile: &[f64]) -> Option<LocalizationFit> {
    if profile.iter().any(|&p| !(p > 0.0)) {
        return None;
    }
    let x: Vec<f64> = radii.iter().map(|&r| r as f64).collect();
    let y: Vec<f64> = profile.iter().map(|p| p.ln()).collect();
    let fit = line_fit(&x, &y, None)?;
    Some(LocalizationFit {
        slope: fit.slope,
        xi: if fit.slope < 0.0 { -1.0 / fit.slope } else { f64::INFINITY },
        r_squared: fit.r_squared,
        accepted: fit.slope < 0.0 && fit.r_squared > 0.9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::DisorderSpec;
    use crate::exact::TreeParams;
    use crate::graphs::{assemble_hamiltonian, build_truncated_tree, diagonalize, DisorderRealization, TreeFlavor, DENSE_CAP};
    use crate::rng::RngHandle;

    fn decomposed(l: u32, lambda: f64, seed: u64) -> (FiniteGraph, SpectralDecomposition) {
        let g = build_truncated_tree(TreeParams::new(2).unwrap(), l, TreeFlavor::Ball).unwrap();
        let real = DisorderRealization::sample(&g, &DisorderSpec::uniform(), lambda, &RngHandle::new(seed)).unwrap();
        let dec = diagonalize(&assemble_hamiltonian(&g, &real).unwrap(), true, DENSE_CAP).unwrap();
        (g, dec)
    }

    #[test]
    fn second_moment_vanishes_at_time_zero() {
        let (g, dec) = decomposed(4, 1.0, 1);
        let m = evolve_second_moment(&g, &dec, EnergyWindow::all(), &[0.0]).unwrap();
        assert!(m[0].abs() < 1e-20);
    }

    #[test]
    fn parseval_holds_for_all_times() {
        let (_, dec) = decomposed(4, 1.0, 2);
        let prop = Propagator::new(&dec, EnergyWindow::all()).unwrap();
        for t in [0.0, 0.7, 13.0, 150.5] {
            let total: f64 = prop.intensities(t).iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_window_is_a_domain_error() {
        let (g, dec) = decomposed(3, 1.0, 3);
        let w = EnergyWindow { lo: 100.0, hi: 101.0 };
        assert!(matches!(evolve_second_moment(&g, &dec, w, &[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn single_site_profile_is_one() {
        let g = build_truncated_tree(TreeParams::new(2).unwrap(), 0, TreeFlavor::Rooted).unwrap();
        let make = |_| diagonalize(&assemble_hamiltonian(&g, &DisorderRealization::from_potential(vec![0.2], 1.0))?, true, DENSE_CAP);
        let p = dynamical_localization_profile(&g, 1, make, EnergyWindow::all(), &[0], &[0.0, 1.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fit_of_exact_exponential() {
        let r = [1, 2, 3, 4];
        let p: Vec<f64> = r.iter().map(|&r| (-(r as f64) / 2.0).exp()).collect();
        let f = fit_localization_length(&r, &p).unwrap();
        assert!((f.xi - 2.0).abs() < 1e-12 && f.accepted);
    }
}
