use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FiniteGraph;
use crate::disorder::DisorderSpec;
use crate::rng::RngHandle;
use crate::{Error, Result};

/// Default vertex cap for dense eigensolves.
pub const DENSE_CAP: usize = 4000;

/// Potential values `ω(x)` on the vertices of one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub potential: Vec<f64>,
    pub lambda: f64,
    /// Stream the potential was drawn from.
    pub seed: String,
}

impl DisorderRealization {
    pub fn sample(g: &FiniteGraph, disorder: &DisorderSpec, lambda: f64, rng: &RngHandle) -> Result<Self> {
        let mut r = rng.rng();
        let potential = (0..g.n_vertices()).map(|_| disorder.draw(&mut r)).collect();
        Ok(Self { potential, lambda, seed: rng.describe() })
    }

    pub fn from_potential(potential: Vec<f64>, lambda: f64) -> Self {
        Self { potential, lambda, seed: String::from("explicit") }
    }

    /// `λ ω(v)`.
    #[inline]
    pub fn onsite(&self, v: usize) -> f64 {
        self.lambda * self.potential[v]
    }
}

/// `H = T + λV` with `(Tψ)(x) = -Σ_{y ~ x} ψ(y)`, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    pub diagonal: Vec<f64>,
    pub edges: Vec<(u32, u32)>,
}

pub fn assemble_hamiltonian(g: &FiniteGraph, real: &DisorderRealization) -> Result<Hamiltonian> {
    if real.potential.len() != g.n_vertices() {
        return Err(Error::Config(format!(
            "realization has {} sites but the graph has {} vertices",
            real.potential.len(),
            g.n_vertices()
        )));
    }
    Ok(Hamiltonian {
        diagonal: (0..g.n_vertices()).map(|v| real.onsite(v)).collect(),
        edges: g.edges().to_vec(),
    })
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diagonal));
        for &(u, v) in &self.edges {
            m[(u as usize, v as usize)] = -1.0;
            m[(v as usize, u as usize)] = -1.0;
        }
        debug_assert_eq!(m.nrows(), n);
        m
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diagonal.iter().zip(x).map(|(d, x)| d * x).collect();
        for &(u, v) in &self.edges {
            y[u as usize] -= x[v as usize];
            y[v as usize] -= x[u as usize];
        }
        y
    }

    /// Gershgorin bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        let mut deg = vec![0.0; self.dim()];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1.0;
            deg[v as usize] += 1.0;
        }
        self.diagonal.iter().zip(&deg).map(|(d, g)| d.abs() + g).fold(0.0, f64::max)
    }
}

/// Eigenvalues in ascending order, with eigenvectors as matching columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<DMatrix<f64>>,
}

/// Dense symmetric eigensolve, refusing matrices above `cap` vertices.
pub fn diagonalize(h: &Hamiltonian, with_vectors: bool, cap: usize) -> Result<SpectralDecomposition> {
    let n = h.dim();
    if n > cap {
        return Err(Error::Size(format!(
            "{n} vertices exceed the dense eigensolver cap {cap}; use resolvent-only operations for larger graphs"
        )));
    }
    if n == 0 {
        return Ok(SpectralDecomposition { eigenvalues: Vec::new(), eigenvectors: with_vectors.then(|| DMatrix::zeros(0, 0)) });
    }
    let dense = h.to_dense();
    if !with_vectors {
        let mut eigenvalues: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        return Ok(SpectralDecomposition { eigenvalues, eigenvectors: None });
    }
    let eig = dense.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors: Some(vectors) })
}
