//! Pool-average estimators: Lyapunov exponent, density of states and the
//! integrated density of states.

use serde::{Deserialize, Serialize};

use super::{run_eta_sequence, CavityEstimate, CavityParams, EtaProtocol, EtaRun, McBudget, Wanted};
use crate::exact::{spectrum_edges, Spectrum};
use crate::numeric::trapezoid;
use crate::rng::RngHandle;
use crate::{Error, Result};

fn extension_warnings(runs: &[EtaRun]) -> Vec<String> {
    runs.iter()
        .filter(|r| r.extensions > 0)
        .map(|r| format!("eta = {}: burn-in extended {} time(s) before the window was stationary", r.eta, r.extensions))
        .collect()
}

/// Lyapunov exponent and density of states from a single pool run per `η`.
pub(crate) fn lyapunov_and_dos(
    params: &CavityParams,
    protocol: &EtaProtocol,
    mc: &McBudget,
    want_dos: bool,
) -> Result<(CavityEstimate, Option<CavityEstimate>)> {
    let wanted = Wanted { lyapunov: true, dos: want_dos };
    let (runs, base, sweeps) = run_eta_sequence(params, protocol, mc, wanted, |_, _| Ok(()))?;
    let nb = mc.n_batches as usize;
    let last = runs.last().expect("at least one eta");
    let warnings = extension_warnings(&runs);
    let lyap = CavityEstimate::from_points(
        runs.iter().map(|r| r.lyapunov.point(r.eta, nb)).collect(),
        protocol,
        last.lyapunov.n_effective(nb),
        sweeps,
        base.describe(),
        warnings.clone(),
    );
    let dos = want_dos.then(|| {
        CavityEstimate::from_points(
            runs.iter().map(|r| r.dos.point(r.eta, nb)).collect(),
            protocol,
            last.dos.n_effective(nb),
            sweeps,
            base.describe(),
            warnings,
        )
    });
    Ok((lyap, dos))
}

/// `L_λ(E) = -E[log |Γ|]` over the equilibrated pool, extrapolated in `η`.
pub fn estimate_lyapunov(params: &CavityParams, protocol: &EtaProtocol, mc: &McBudget) -> Result<CavityEstimate> {
    Ok(lyapunov_and_dos(params, protocol, mc, false)?.0)
}

/// Lyapunov exponent and density of states from the same pool runs.
pub fn estimate_lyapunov_and_dos(
    params: &CavityParams,
    protocol: &EtaProtocol,
    mc: &McBudget,
) -> Result<(CavityEstimate, CavityEstimate)> {
    let (l, d) = lyapunov_and_dos(params, protocol, mc, true)?;
    Ok((l, d.expect("density of states was requested")))
}

/// `E[Im G(0,0)] / π`, with `G(0,0)` built from `K + 1` pool draws.
pub fn estimate_dos(params: &CavityParams, protocol: &EtaProtocol, mc: &McBudget) -> Result<CavityEstimate> {
    let wanted = Wanted { lyapunov: false, dos: true };
    let (runs, base, sweeps) = run_eta_sequence(params, protocol, mc, wanted, |_, _| Ok(()))?;
    let nb = mc.n_batches as usize;
    Ok(CavityEstimate::from_points(
        runs.iter().map(|r| r.dos.point(r.eta, nb)).collect(),
        protocol,
        runs.last().expect("at least one eta").dos.n_effective(nb),
        sweeps,
        base.describe(),
        extension_warnings(&runs),
    ))
}

/// Integrated density of states with its quadrature grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Lower integration limit.
    pub lower: f64,
    pub grid: Vec<f64>,
    pub dos: Vec<CavityEstimate>,
    /// Relative difference between the full and the half-resolution trapezoid rule.
    pub richardson_relative: f64,
    pub warnings: Vec<String>,
}

/// Probability mass left out below the lower limit for unbounded disorder.
const IDS_TAIL: f64 = 1e-4;

/// `N_λ(E)` by trapezoid quadrature of [`estimate_dos`] on `n_grid` points
/// from the bottom of the spectrum up to `E`.
///
/// For unbounded disorder the lower limit is `-(K+1) + λ q`, with `q` the
/// `1e-4` quantile of the single-site law; the neglected mass is of that order
/// and is mentioned in the warnings.
pub fn estimate_ids(
    params: &CavityParams,
    energy: f64,
    protocol: &EtaProtocol,
    mc: &McBudget,
    n_grid: usize,
) -> Result<IdsEstimate> {
    if n_grid < 5 {
        return Err(Error::Config(format!("IDS quadrature needs at least 5 points, got {n_grid}")));
    }
    let n_grid = if n_grid % 2 == 0 { n_grid + 1 } else { n_grid };
    let k = params.tree.kf();
    let mut warnings = Vec::new();
    let (lower, upper) = match spectrum_edges(params.tree, params.lambda, &params.disorder) {
        Spectrum::Interval { lo, hi } => (lo, hi),
        Spectrum::AllReals => {
            warnings.push(format!("mass below the lower limit (about {IDS_TAIL:e}) is not included"));
            let q = params.disorder.quantile(IDS_TAIL);
            (-(k + 1.0) + params.lambda * q, f64::INFINITY)
        }
    };
    if energy <= lower {
        return Ok(IdsEstimate {
            value: 0.0,
            std_error: 0.0,
            lower,
            grid: Vec::new(),
            dos: Vec::new(),
            richardson_relative: 0.0,
            warnings,
        });
    }
    let top = energy.min(upper);
    let h = (top - lower) / (n_grid - 1) as f64;
    let grid: Vec<f64> = (0..n_grid).map(|i| lower + i as f64 * h).collect();
    let base = RngHandle::new(mc.seed);
    let mut dos = Vec::with_capacity(n_grid);
    for (i, &e) in grid.iter().enumerate() {
        let p = CavityParams { z: crate::exact::HalfPlanePoint::new(e, params.z.eta)?, ..params.clone() };
        let budget = McBudget { seed: base.child(i as u64).stream_id(), ..mc.clone() };
        dos.push(estimate_dos(&p, protocol, &budget)?);
    }
    let y: Vec<f64> = dos.iter().map(|d| d.value).collect();
    let fine = trapezoid(&grid, &y);
    let coarse_x: Vec<f64> = grid.iter().step_by(2).copied().collect();
    let coarse_y: Vec<f64> = y.iter().step_by(2).copied().collect();
    let coarse = trapezoid(&coarse_x, &coarse_y);
    let richardson_relative = if fine != 0.0 { ((fine - coarse) / fine).abs() } else { 0.0 };
    if richardson_relative > 0.1 {
        warnings.push(format!(
            "quadrature grid too coarse: relative Richardson error {richardson_relative:.3}"
        ));
    }
    let var: f64 = dos
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let w = if i == 0 || i == n_grid - 1 { 0.5 * h } else { h };
            (w * d.std_error).powi(2)
        })
        .sum();
    Ok(IdsEstimate {
        value: fine,
        std_error: var.sqrt(),
        lower,
        grid,
        dos,
        richardson_relative,
        warnings,
    })
}
