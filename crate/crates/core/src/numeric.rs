//! Small numerical helpers shared by the estimators: sample moments, batch
//! means, least-squares fits and quadrature.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (zero for fewer than two values).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean of `xs` from `n_batches` contiguous batch means.
///
/// Trailing values that do not fill a batch are dropped from the error
/// estimate (but not from the caller's mean).
pub fn batch_means_se(xs: &[f64], n_batches: usize) -> f64 {
    let nb = n_batches.min(xs.len());
    if nb < 2 {
        return 0.0;
    }
    let len = xs.len() / nb;
    let means: Vec<f64> = xs.chunks_exact(len).take(nb).map(mean).collect();
    (variance(&means) / nb as f64).sqrt()
}

/// Median of a slice (NaN for an empty slice).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Weighted least-squares line `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
    /// Coefficient of determination of the weighted fit.
    pub r_squared: f64,
}

impl LineFit {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Fits `y = a + b x` with weights `1/σ²`. When every `σ` is zero (or `sigmas`
/// is `None`) the fit is unweighted and the parameter errors come from the
/// residual scatter.
pub fn line_fit(x: &[f64], y: &[f64], sigmas: Option<&[f64]>) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let weighted = sigmas.is_some_and(|s| s.iter().all(|&v| v > 0.0));
    let w: Vec<f64> = match sigmas {
        Some(s) if weighted => s.iter().map(|v| 1.0 / (v * v)).collect(),
        _ => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let ybar = sy / sw;
    let ss_res: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let ss_tot: f64 = (0..n).map(|i| w[i] * (y[i] - ybar).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let scale = if weighted {
        1.0
    } else if n > 2 {
        ss_res / (n - 2) as f64
    } else {
        0.0
    };
    Some(LineFit {
        intercept,
        slope,
        intercept_se: (scale * sxx / det).sqrt(),
        slope_se: (scale * sw / det).sqrt(),
        r_squared,
    })
}

/// Trapezoid rule on a (possibly non-uniform) grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Nodes `E_j = c + h cos θ_j`, `θ_j = (j + 1/2) π / n`, with weights
/// `h π sin θ_j / n`.
///
/// The substitution `E = c + h cos θ` turns integrands with square-root
/// behaviour at both ends of `[c - h, c + h]` into smooth periodic functions of
/// `θ`, for which the midpoint rule converges geometrically.
pub fn arcsine_quadrature(center: f64, half_width: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n)
        .map(|j| {
            let theta = (j as f64 + 0.5) * std::f64::consts::PI / n as f64;
            (center + half_width * theta.cos(), half_width * std::f64::consts::PI * theta.sin() / n as f64)
        })
        .rev()
        .unzip()
}

/// Inclusive grid `start, start + step, ...` up to `stop` (with a half-step tolerance).
pub fn inclusive_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || stop < start {
        return if stop == start { vec![start] } else { Vec::new() };
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}
