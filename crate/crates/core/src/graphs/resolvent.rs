use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_truncated_tree, DisorderRealization, FiniteGraph, TreeFlavor};
use crate::disorder::DisorderSpec;
use crate::exact::{HalfPlanePoint, TreeParams};
use crate::rng::RngHandle;
use crate::{Error, Result};

/// All forward Green functions of a finite tree and the root row of the resolvent.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeResolvent {
    /// `Γ(u; z)` for the subtree hanging below each vertex `u`.
    pub gammas: Vec<Complex64>,
    /// `G(0,0; z)`, equal to `Γ(0)` because the root has no parent.
    pub g00: Complex64,
    /// `G(0,x; z) = Π_{j=0}^{|x|} Γ(x_j)` along the path from the root.
    pub green_from_root: Vec<Complex64>,
}

/// Leaf-to-root recursion on a tree built by [`build_truncated_tree`].
pub fn exact_resolvent_root(g: &FiniteGraph, real: &DisorderRealization, z: HalfPlanePoint) -> Result<TreeResolvent> {
    if !g.is_tree() {
        return Err(Error::Domain("exact resolvent recursion needs a tree".into()));
    }
    if !z.is_interior() {
        return Err(Error::Domain("exact resolvent recursion needs eta > 0".into()));
    }
    let n = g.n_vertices();
    if real.potential.len() != n {
        return Err(Error::Config("realization size does not match the graph".into()));
    }
    let zc = z.z();
    let mut gammas = vec![Complex64::new(0.0, 0.0); n];
    for u in (0..n).rev() {
        let sum: Complex64 = g.children(u).map(|c| gammas[c]).sum();
        gammas[u] = 1.0 / (Complex64::new(real.onsite(u), 0.0) - zc - sum);
    }
    let mut green = vec![Complex64::new(0.0, 0.0); n];
    green[0] = gammas[0];
    for u in 1..n {
        let p = g.parent(u).expect("non-root tree vertex has a parent");
        green[u] = green[p] * gammas[u];
    }
    Ok(TreeResolvent { g00: gammas[0], gammas, green_from_root: green })
}

/// Both sides of `Im Γ(0) ≥ Σ_{|x₊| = R} |G(0,x)|² Im Γ(x₊)`, with `x` the parent of `x₊`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImPropagation {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn check_im_propagation(g: &FiniteGraph, real: &DisorderRealization, z: HalfPlanePoint, radius: u32) -> Result<ImPropagation> {
    let depth = g.depth().ok_or_else(|| Error::Domain("Im propagation needs a truncated tree".into()))?;
    if radius == 0 || radius > depth {
        return Err(Error::Domain(format!("radius must lie in 1..={depth}, got {radius}")));
    }
    let res = exact_resolvent_root(g, real, z)?;
    let dist = g.distances_from_root().expect("trees record distances");
    let rhs = (0..g.n_vertices())
        .filter(|&v| dist[v] == radius)
        .map(|v| {
            let p = g.parent(v).expect("sphere vertex has a parent");
            res.green_from_root[p].norm_sqr() * res.gammas[v].im
        })
        .sum();
    Ok(ImPropagation { lhs: res.gammas[0].im, rhs })
}

/// Number of sphere vertices with a large Green function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceCount {
    pub n_r: usize,
    /// `e^{δ R}`.
    pub threshold: f64,
    pub sphere_size: usize,
}

/// Counts `|x| = R` with `|G(0,x; E + iη)| ≥ e^{δR}`.
pub fn resonance_count(
    g: &FiniteGraph,
    real: &DisorderRealization,
    energy: f64,
    eta: f64,
    delta: f64,
    radius: u32,
) -> Result<ResonanceCount> {
    let depth = g.depth().ok_or_else(|| Error::Domain("resonance counting needs a truncated tree".into()))?;
    if radius > depth {
        return Err(Error::Domain(format!("radius {radius} exceeds tree depth {depth}")));
    }
    let res = exact_resolvent_root(g, real, HalfPlanePoint::new(energy, eta)?)?;
    Ok(count_sphere(g, &res, radius, delta))
}

fn count_sphere(g: &FiniteGraph, res: &TreeResolvent, radius: u32, delta: f64) -> ResonanceCount {
    let dist = g.distances_from_root().expect("trees record distances");
    let threshold = (delta * radius as f64).exp();
    let (mut n_r, mut sphere_size) = (0, 0);
    for v in 0..g.n_vertices() {
        if dist[v] == radius {
            sphere_size += 1;
            if res.green_from_root[v].norm() >= threshold {
                n_r += 1;
            }
        }
    }
    ResonanceCount { n_r, threshold, sphere_size }
}

/// Ensemble settings for resonance counting on Bethe-lattice balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceConfig {
    pub k: u32,
    pub lambda: f64,
    pub disorder: DisorderSpec,
    pub energy: f64,
    pub eta: f64,
    pub deltas: Vec<f64>,
    pub radii: Vec<u32>,
    pub n_realizations: usize,
    /// Ball radius is `R + extra_depth`.
    pub extra_depth: u32,
    pub seed: u64,
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        Self {
            k: 2,
            lambda: 0.3,
            disorder: DisorderSpec::cauchy(),
            energy: 2.9,
            eta: 1e-6,
            deltas: vec![0.01, 0.02, 0.05],
            radii: vec![6, 8, 10],
            n_realizations: 1000,
            extra_depth: 4,
            seed: 0,
        }
    }
}

/// `P(N_R ≥ 1)` and `E[N_R]` for one `(R, δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceRow {
    pub radius: u32,
    pub delta: f64,
    pub n_realizations: usize,
    pub p_hit: f64,
    pub p_hit_se: f64,
    pub mean_count: f64,
    pub mean_count_se: f64,
}

/// Independent realizations for each radius; realization `r` at radius `R`
/// uses the stream `seed / R / r`.
pub fn resonance_ensemble(cfg: &ResonanceConfig) -> Result<Vec<ResonanceRow>> {
    let tree = TreeParams::new(cfg.k)?;
    if cfg.n_realizations < 2 {
        return Err(Error::Config("need at least two realizations".into()));
    }
    let z = HalfPlanePoint::new(cfg.energy, cfg.eta)?;
    if !z.is_interior() {
        return Err(Error::Domain("resonance counting needs eta > 0".into()));
    }
    let master = RngHandle::new(cfg.seed);
    let mut rows = Vec::new();
    for &radius in &cfg.radii {
        let g = build_truncated_tree(tree, radius + cfg.extra_depth, TreeFlavor::Ball)?;
        let counts: Vec<Vec<usize>> = (0..cfg.n_realizations)
            .into_par_iter()
            .map(|r| -> Result<Vec<usize>> {
                let real = DisorderRealization::sample(&g, &cfg.disorder, cfg.lambda, &master.derive(&[radius as u64, r as u64]))?;
                let res = exact_resolvent_root(&g, &real, z)?;
                Ok(cfg.deltas.iter().map(|&d| count_sphere(&g, &res, radius, d).n_r).collect())
            })
            .collect::<Result<_>>()?;
        let n = cfg.n_realizations as f64;
        for (j, &delta) in cfg.deltas.iter().enumerate() {
            let c: Vec<f64> = counts.iter().map(|row| row[j] as f64).collect();
            let p = c.iter().filter(|&&x| x >= 1.0).count() as f64 / n;
            rows.push(ResonanceRow {
                radius,
                delta,
                n_realizations: cfg.n_realizations,
                p_hit: p,
                p_hit_se: (p * (1.0 - p) / n).sqrt(),
                mean_count: crate::numeric::mean(&c),
                mean_count_se: (crate::numeric::variance(&c) / n).sqrt(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::g00_complex;
    use crate::graphs::{assemble_hamiltonian, TreeFlavor};
    use nalgebra::{DMatrix, DVector};

    fn dense_root_column(g: &FiniteGraph, real: &DisorderRealization, z: Complex64) -> DVector<Complex64> {
        let h = assemble_hamiltonian(g, real).unwrap().to_dense();
        let n = g.n_vertices();
        let m = DMatrix::from_fn(n, n, |r, c| Complex64::new(h[(r, c)], 0.0) - if r == c { z } else { Complex64::new(0.0, 0.0) });
        let mut e0 = DVector::from_element(n, Complex64::new(0.0, 0.0));
        e0[0] = Complex64::new(1.0, 0.0);
        m.lu().solve(&e0).unwrap()
    }

    #[test]
    fn single_site_resolvent() {
        let g = build_truncated_tree(TreeParams::new(2).unwrap(), 0, TreeFlavor::Rooted).unwrap();
        let real = DisorderRealization::from_potential(vec![0.4], 2.0);
        let z = HalfPlanePoint::new(0.1, 0.2).unwrap();
        let res = exact_resolvent_root(&g, &real, z).unwrap();
        assert!((res.g00 - 1.0 / (Complex64::new(0.8, 0.0) - z.z())).norm() < 1e-15);
    }

    #[test]
    fn recursion_matches_dense_solve() {
        let g = build_truncated_tree(TreeParams::new(2).unwrap(), 6, TreeFlavor::Rooted).unwrap();
        let real = DisorderRealization::sample(&g, &DisorderSpec::uniform(), 1.0, &RngHandle::new(5)).unwrap();
        let z = HalfPlanePoint::new(0.3, 0.01).unwrap();
        let res = exact_resolvent_root(&g, &real, z).unwrap();
        let col = dense_root_column(&g, &real, z.z());
        for v in 0..g.n_vertices() {
            assert!((res.green_from_root[v] - col[v]).norm() < 1e-10 * (1.0 + col[v].norm()));
        }
    }

    #[test]
    fn free_ball_root_converges_to_closed_form() {
        let t = TreeParams::new(2).unwrap();
        let z = HalfPlanePoint::new(0.5, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for depth in [4, 8, 12] {
            let g = build_truncated_tree(t, depth, TreeFlavor::Ball).unwrap();
            let real = DisorderRealization::from_potential(vec![0.0; g.n_vertices()], 0.0);
            let res = exact_resolvent_root(&g, &real, z).unwrap();
            let err = (res.g00 - g00_complex(2.0, z.z())).norm();
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn im_propagation_r1() {
        let g = build_truncated_tree(TreeParams::new(2).unwrap(), 4, TreeFlavor::Rooted).unwrap();
        let real = DisorderRealization::sample(&g, &DisorderSpec::cauchy(), 1.0, &RngHandle::new(1)).unwrap();
        let c = check_im_propagation(&g, &real, HalfPlanePoint::new(0.2, 0.05).unwrap(), 1).unwrap();
        assert!(c.lhs >= c.rhs - 1e-12);
        assert!(check_im_propagation(&g, &real, HalfPlanePoint::new(0.2, 0.05).unwrap(), 5).is_err());
    }

    #[test]
    fn huge_delta_gives_no_resonances() {
        let g = build_truncated_tree(TreeParams::new(2).unwrap(), 8, TreeFlavor::Ball).unwrap();
        let real = DisorderRealization::sample(&g, &DisorderSpec::cauchy(), 0.3, &RngHandle::new(2)).unwrap();
        let c = resonance_count(&g, &real, 2.9, 1e-6, 10.0, 6).unwrap();
        assert_eq!(c.n_r, 0);
        assert_eq!(c.sphere_size, 3 * 32);
    }
}
