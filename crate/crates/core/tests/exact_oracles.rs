use approx::assert_relative_eq;
use bethe_core::exact::{
    diffusion_kernel, gamma0, kesten_mckay_dos, lyapunov_exact_cauchy, lyapunov_exact_free, HalfPlanePoint, TreeParams,
};
use bethe_core::numeric::adaptive_simpson;
use num_complex::Complex64;

fn tree(k: u32) -> TreeParams {
    TreeParams::new(k).unwrap()
}

#[test]
fn gamma0_is_herglotz_and_solves_the_quadratic_on_a_grid() {
    for k in [2u32, 3, 4] {
        let kf = k as f64;
        for i in 0..40 {
            for j in 0..25 {
                let e = -8.0 + 16.0 * i as f64 / 39.0;
                let eta = 10f64.powf(-6.0 + 8.0 * j as f64 / 24.0);
                let z = HalfPlanePoint::new(e, eta).unwrap();
                let g = gamma0(tree(k), z).unwrap();
                assert!(g.im > 0.0, "K={k} z={e}+{eta}i: Im Γ = {}", g.im);
                let zc = Complex64::new(e, eta);
                let residual = (kf * g * g + zc * g + 1.0).norm();
                assert!(residual < 1e-12, "K={k} z={zc}: residual {residual:e}");
            }
        }
    }
}

#[test]
fn free_lyapunov_follows_the_three_case_law() {
    for k in [2u32, 3, 4] {
        let kf = k as f64;
        let edge = 2.0 * kf.sqrt();
        let (lo, hi) = (0.5 * kf.ln(), kf.ln());
        for i in 0..1000 {
            let e = -(kf + 3.0) + 2.0 * (kf + 3.0) * (i as f64 + 0.5) / 1000.0;
            let l = lyapunov_exact_free(tree(k), HalfPlanePoint::real(e).unwrap()).unwrap();
            if e.abs() < edge {
                assert!((l - lo).abs() < 1e-12, "K={k} E={e}: {l}");
            } else if e.abs() < kf + 1.0 {
                assert!(l > lo && l < hi, "K={k} E={e}: {l} not in ({lo}, {hi})");
            } else {
                assert!(l > hi, "K={k} E={e}: {l}");
            }
        }
        let at_kp1 = lyapunov_exact_free(tree(k), HalfPlanePoint::real(kf + 1.0).unwrap()).unwrap();
        assert!((at_kp1 - hi).abs() < 1e-12);
    }
}

#[test]
fn cauchy_lyapunov_is_nondecreasing_in_disorder_at_band_center() {
    for k in [2u32, 3] {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..200 {
            let lambda = 0.025 * i as f64;
            let l = lyapunov_exact_cauchy(tree(k), lambda, 0.0).unwrap();
            assert!(l >= prev - 1e-15, "K={k} λ={lambda}");
            prev = l;
        }
    }
}

#[test]
fn cauchy_critical_disorder_at_band_center() {
    // Γ₀(K, i(K-1)) = i/K solves K Γ² + i(K-1) Γ + 1 = 0, so L = log K there.
    for k in [2u32, 3, 4] {
        let kf = k as f64;
        let l = lyapunov_exact_cauchy(tree(k), kf - 1.0, 0.0).unwrap();
        assert_relative_eq!(l, kf.ln(), max_relative = 1e-12);
    }
}

#[test]
fn kesten_mckay_integrates_to_one() {
    for k in [2u32, 3, 4] {
        let edge = 2.0 * (k as f64).sqrt();
        // E = edge·cos θ removes the square-root endpoint behavior.
        let f = |theta: f64| kesten_mckay_dos(tree(k), edge * theta.cos()) * edge * theta.sin();
        let total = adaptive_simpson(&f, 0.0, std::f64::consts::PI, 1e-12);
        assert!((total - 1.0).abs() < 1e-8, "K={k}: {total}");
    }
}

#[test]
fn kesten_mckay_matches_the_textbook_formula() {
    for k in [2u32, 3] {
        let kf = k as f64;
        for i in 0..50 {
            let e = -2.5 * kf.sqrt() + 5.0 * kf.sqrt() * i as f64 / 49.0;
            let textbook = if e.abs() < 2.0 * kf.sqrt() {
                (kf + 1.0) * (4.0 * kf - e * e).sqrt() / (2.0 * std::f64::consts::PI * ((kf + 1.0).powi(2) - e * e))
            } else {
                0.0
            };
            assert!((kesten_mckay_dos(tree(k), e) - textbook).abs() < 1e-12, "K={k} E={e}");
        }
    }
}

/// Radial reduction of `(-Δ) u = δ_0` on the ball of radius `depth` with
/// Dirichlet boundary, solved by the Thomas algorithm.
fn finite_tree_kernel(k: f64, depth: usize) -> Vec<f64> {
    let n = depth + 1;
    let (mut a, mut b, mut c, mut d) = (vec![0.0; n], vec![k + 1.0; n], vec![0.0; n], vec![0.0; n]);
    c[0] = -(k + 1.0);
    d[0] = 1.0;
    for i in 1..n {
        a[i] = -1.0;
        if i + 1 < n {
            c[i] = -k;
        }
    }
    for i in 1..n {
        let m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        d[i] -= m * d[i - 1];
    }
    let mut u = vec![0.0; n];
    u[n - 1] = d[n - 1] / b[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = (d[i] - c[i] * u[i + 1]) / b[i];
    }
    u
}

#[test]
fn diffusion_kernel_matches_a_depth_30_linear_solve() {
    for k in [2u32, 3] {
        let u = finite_tree_kernel(k as f64, 30);
        for d in 0..5 {
            assert_relative_eq!(diffusion_kernel(tree(k), d), u[d as usize], max_relative = 1e-6);
        }
        assert!(diffusion_kernel(tree(k), 0) > 0.0);
    }
}
