//! Desk-scale statistical battery on the first 10^6 outputs of a few streams.

use bethe_core::rng::{open01, RngHandle};
use rand::RngCore;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const N: usize = 1_000_000;

fn streams() -> Vec<RngHandle> {
    let m = RngHandle::new(2024);
    vec![m.clone(), m.child(0), m.child(1), m.derive(&[7, 3, 1]), RngHandle::new(0).derive(&[u64::MAX])]
}

fn words(h: &RngHandle) -> Vec<u64> {
    let mut r = h.rng();
    (0..N).map(|_| r.next_u64()).collect()
}

/// Upper-tail p-value of a chi-square statistic.
fn chi2_p(stat: f64, dof: usize) -> f64 {
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
}

#[test]
fn byte_frequencies_are_uniform() {
    for h in streams() {
        let mut counts = [0u64; 256];
        for w in words(&h) {
            counts[(w >> 56) as usize] += 1;
            counts[(w & 0xff) as usize] += 1;
        }
        let expected = 2.0 * N as f64 / 256.0;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = chi2_p(stat, 255);
        assert!(p > 1e-4, "{}: chi-square p = {p:.2e}", h.describe());
    }
}

#[test]
fn every_bit_is_balanced() {
    for h in streams() {
        let mut ones = [0u64; 64];
        for w in words(&h) {
            for (b, c) in ones.iter_mut().enumerate() {
                *c += (w >> b) & 1;
            }
        }
        let sd = (N as f64 * 0.25).sqrt();
        for (b, &c) in ones.iter().enumerate() {
            let z = (c as f64 - 0.5 * N as f64) / sd;
            assert!(z.abs() < 5.5, "{} bit {b}: z = {z:.2}", h.describe());
        }
    }
}

#[test]
fn uniforms_pass_kolmogorov_smirnov() {
    for h in streams() {
        let mut r = h.rng();
        let mut u: Vec<f64> = (0..N).map(|_| open01(&mut r)).collect();
        u.sort_by(f64::total_cmp);
        let n = N as f64;
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
            .fold(0.0, f64::max);
        // sqrt(n)·D > 1.95 has probability about 0.001 under the null.
        assert!(d * n.sqrt() < 1.95, "{}: KS statistic {:.3}", h.describe(), d * n.sqrt());
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn no_serial_or_cross_stream_correlation() {
    let uniforms = |h: &RngHandle| {
        let mut r = h.rng();
        (0..N).map(|_| open01(&mut r)).collect::<Vec<f64>>()
    };
    let all: Vec<Vec<f64>> = streams().iter().map(uniforms).collect();
    let bound = 5.0 / (N as f64).sqrt();
    for u in &all {
        for lag in [1, 2, 7] {
            let c = correlation(&u[..N - lag], &u[lag..]);
            assert!(c.abs() < bound, "lag {lag}: {c:.2e}");
        }
    }
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let c = correlation(&all[i], &all[j]);
            assert!(c.abs() < bound, "streams {i} and {j}: {c:.2e}");
        }
    }
}

#[test]
fn derivation_composes_and_separates() {
    let s = RngHandle::new(99);
    let direct = s.derive(&[1, 2]);
    let composed = s.derive(&[1]).derive(&[2]);
    assert_eq!(direct, composed);
    assert_eq!(words(&direct)[..16], words(&composed)[..16]);
    let mut a = s.derive(&[1]).rng();
    let mut b = s.derive(&[2]).rng();
    let (xa, xb): (Vec<u64>, Vec<u64>) = (0..16).map(|_| (a.next_u64(), b.next_u64())).unzip();
    assert_ne!(xa, xb);
}

#[test]
fn stream_ids_do_not_collide_over_a_large_index_range() {
    let m = RngHandle::new(1);
    let mut ids: Vec<u64> = (0..200_000u64).map(|i| m.child(i).stream_id()).collect();
    ids.extend((0..300u64).flat_map(|i| (0..300u64).map(move |j| (i, j))).map(|(i, j)| m.derive(&[i, j]).stream_id()));
    let n = ids.len();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), n);
}
