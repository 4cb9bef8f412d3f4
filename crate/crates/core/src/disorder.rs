//! Single-site disorder distributions.
//!
//! A [`DisorderSpec`] is the law of one potential value `ω(x)`: standard
//! Cauchy, standard Gaussian, uniform on `[-1, 1]`, or a user-supplied
//! tabulated density. Built-ins carry their analytic density maximum and the
//! supremum of finite absolute-moment orders; tabulated densities are linearly
//! interpolated and renormalized on construction.
//!
//! Sampling is by inverse CDF for Cauchy (exact heavy tails) and tabulated
//! densities, and by the ziggurat method for the Gaussian.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::rng::{open01, RngHandle};
use crate::{Error, Result};

/// Serialized form of a disorder law, as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisorderConfig {
    Cauchy,
    Gaussian,
    Uniform,
    Tabulated {
        /// Inline `(v, rho)` pairs; takes precedence over `path`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<(f64, f64)>>,
        /// Two-column CSV file `v,rho` (a header row is allowed).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        /// Declared moment order: `∫|v|^r rho(v) dv < ∞` for all orders below this.
        #[serde(default = "infinite")]
        moment_order_r: f64,
    },
}

fn infinite() -> f64 {
    f64::INFINITY
}

/// Support of the single-site law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Bounded { lo: f64, hi: f64 },
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
struct Table {
    v: Vec<f64>,
    rho: Vec<f64>,
    /// `cum[i]` is the probability mass to the left of `v[i]`.
    cum: Vec<f64>,
}

impl Table {
    fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config("tabulated density needs at least two points".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Config(format!(
                    "tabulated density grid must be strictly increasing (at v = {})",
                    w[1].0
                )));
            }
        }
        if points.iter().any(|&(v, r)| !v.is_finite() || !r.is_finite() || r < 0.0) {
            return Err(Error::Config(
                "tabulated density values must be finite and non-negative".into(),
            ));
        }
        let v: Vec<f64> = points.iter().map(|p| p.0).collect();
        let raw: Vec<f64> = points.iter().map(|p| p.1).collect();
        let mass: f64 = v
            .windows(2)
            .zip(raw.windows(2))
            .map(|(x, r)| 0.5 * (x[1] - x[0]) * (r[0] + r[1]))
            .sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Config("tabulated density is not normalizable".into()));
        }
        let rho: Vec<f64> = raw.iter().map(|r| r / mass).collect();
        let mut cum = Vec::with_capacity(v.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for i in 1..v.len() {
            acc += 0.5 * (v[i] - v[i - 1]) * (rho[i] + rho[i - 1]);
            cum.push(acc);
        }
        // Absorb round-off so the last cumulative value is exactly one.
        let last = *cum.last().unwrap();
        for c in &mut cum {
            *c /= last;
        }
        Ok(Self { v, rho, cum })
    }

    fn segment(&self, x: f64) -> Option<usize> {
        if x < self.v[0] || x > *self.v.last().unwrap() {
            return None;
        }
        let i = self.v.partition_point(|&vi| vi <= x);
        Some(i.saturating_sub(1).min(self.v.len() - 2))
    }

    fn density(&self, x: f64) -> f64 {
        match self.segment(x) {
            None => 0.0,
            Some(i) => {
                let t = (x - self.v[i]) / (self.v[i + 1] - self.v[i]);
                self.rho[i] + t * (self.rho[i + 1] - self.rho[i])
            }
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.v[0] {
            return 0.0;
        }
        if x >= *self.v.last().unwrap() {
            return 1.0;
        }
        let i = self.segment(x).unwrap();
        let dx = x - self.v[i];
        let slope = (self.rho[i + 1] - self.rho[i]) / (self.v[i + 1] - self.v[i]);
        self.cum[i] + self.rho[i] * dx + 0.5 * slope * dx * dx
    }

    fn quantile(&self, p: f64) -> f64 {
        let i = self.cum.partition_point(|&c| c <= p).clamp(1, self.v.len() - 1) - 1;
        let h = self.v[i + 1] - self.v[i];
        let a = 0.5 * (self.rho[i + 1] - self.rho[i]) / h;
        let b = self.rho[i];
        let target = p - self.cum[i];
        // Solve a dx^2 + b dx = target on [0, h] in the cancellation-free form.
        let dx = if a.abs() < 1e-300 {
            if b > 0.0 {
                target / b
            } else {
                0.0
            }
        } else {
            let disc = (b * b + 4.0 * a * target).max(0.0);
            2.0 * target / (b + disc.sqrt())
        };
        self.v[i] + dx.clamp(0.0, h)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Cauchy,
    Gaussian,
    Uniform,
    Tabulated(Table),
}

/// The single-site law `P_0(dv) = rho(v) dv`.
///
/// Immutable after construction and cheap to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DisorderConfig", into = "DisorderConfig")]
pub struct DisorderSpec {
    kind: Kind,
    sup_density: f64,
    moment_order_r: f64,
}

impl TryFrom<DisorderConfig> for DisorderSpec {
    type Error = Error;

    fn try_from(cfg: DisorderConfig) -> Result<Self> {
        match cfg {
            DisorderConfig::Cauchy => Ok(Self::cauchy()),
            DisorderConfig::Gaussian => Ok(Self::gaussian()),
            DisorderConfig::Uniform => Ok(Self::uniform()),
            DisorderConfig::Tabulated {
                points,
                path,
                moment_order_r,
            } => {
                let points = match (points, path) {
                    (Some(p), _) => p,
                    (None, Some(path)) => read_density_csv(Path::new(&path))?,
                    (None, None) => {
                        return Err(Error::Config(
                            "tabulated density needs `points` or `path`".into(),
                        ))
                    }
                };
                Self::tabulated(&points, moment_order_r)
            }
        }
    }
}

impl From<DisorderSpec> for DisorderConfig {
    fn from(spec: DisorderSpec) -> Self {
        match spec.kind {
            Kind::Cauchy => DisorderConfig::Cauchy,
            Kind::Gaussian => DisorderConfig::Gaussian,
            Kind::Uniform => DisorderConfig::Uniform,
            Kind::Tabulated(t) => DisorderConfig::Tabulated {
                points: Some(t.v.iter().copied().zip(t.rho.iter().copied()).collect()),
                path: None,
                moment_order_r: spec.moment_order_r,
            },
        }
    }
}

/// Reads a two-column `v,rho` CSV. A non-numeric first row is treated as a header.
pub fn read_density_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Config(format!("{}: row {} has fewer than two columns", path.display(), i + 1)));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(v), Ok(r)) => out.push((v, r)),
            _ if i == 0 => continue,
            _ => {
                return Err(Error::Config(format!(
                    "{}: row {} is not numeric",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

impl DisorderSpec {
    /// Standard Cauchy, `rho(v) = 1 / (pi (1 + v^2))`.
    pub fn cauchy() -> Self {
        Self {
            kind: Kind::Cauchy,
            sup_density: 1.0 / PI,
            moment_order_r: 1.0,
        }
    }

    /// Standard normal.
    pub fn gaussian() -> Self {
        Self {
            kind: Kind::Gaussian,
            sup_density: 1.0 / (2.0 * PI).sqrt(),
            moment_order_r: f64::INFINITY,
        }
    }

    /// Uniform on `[-1, 1]`.
    pub fn uniform() -> Self {
        Self {
            kind: Kind::Uniform,
            sup_density: 0.5,
            moment_order_r: f64::INFINITY,
        }
    }

    /// Piecewise-linear density through `points`, renormalized to unit mass.
    pub fn tabulated(points: &[(f64, f64)], moment_order_r: f64) -> Result<Self> {
        if !(moment_order_r >= 0.0) {
            return Err(Error::Config("moment_order_r must be >= 0".into()));
        }
        let table = Table::new(points)?;
        let sup_density = table.rho.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            kind: Kind::Tabulated(table),
            sup_density,
            moment_order_r,
        })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            Kind::Cauchy => "cauchy",
            Kind::Gaussian => "gaussian",
            Kind::Uniform => "uniform",
            Kind::Tabulated(_) => "tabulated",
        }
    }

    pub fn is_cauchy(&self) -> bool {
        matches!(self.kind, Kind::Cauchy)
    }

    /// `||rho||_inf`.
    pub fn sup_density(&self) -> f64 {
        self.sup_density
    }

    /// Supremum of orders `r` with a finite `r`-th absolute moment.
    pub fn moment_order_r(&self) -> f64 {
        self.moment_order_r
    }

    pub fn density_at(&self, v: f64) -> f64 {
        match &self.kind {
            Kind::Cauchy => 1.0 / (PI * (1.0 + v * v)),
            Kind::Gaussian => (-0.5 * v * v).exp() / (2.0 * PI).sqrt(),
            Kind::Uniform => {
                if (-1.0..=1.0).contains(&v) {
                    0.5
                } else {
                    0.0
                }
            }
            Kind::Tabulated(t) => t.density(v),
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match &self.kind {
            Kind::Cauchy => 0.5 + v.atan() / PI,
            Kind::Gaussian => Normal::standard().cdf(v),
            Kind::Uniform => ((v + 1.0) / 2.0).clamp(0.0, 1.0),
            Kind::Tabulated(t) => t.cdf(v),
        }
    }

    /// Inverse CDF on `(0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match &self.kind {
            Kind::Cauchy => (PI * (p - 0.5)).tan(),
            Kind::Gaussian => Normal::standard().inverse_cdf(p),
            Kind::Uniform => 2.0 * p - 1.0,
            Kind::Tabulated(t) => t.quantile(p),
        }
    }

    pub fn support_interval(&self) -> Support {
        match &self.kind {
            Kind::Cauchy | Kind::Gaussian => Support::Unbounded,
            Kind::Uniform => Support::Bounded { lo: -1.0, hi: 1.0 },
            Kind::Tabulated(t) => Support::Bounded {
                lo: t.v[0],
                hi: *t.v.last().unwrap(),
            },
        }
    }

    /// One draw from `P_0`.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            Kind::Cauchy => (PI * (open01(rng) - 0.5)).tan(),
            Kind::Gaussian => rng.sample(StandardNormal),
            Kind::Uniform => 2.0 * open01(rng) - 1.0,
            Kind::Tabulated(t) => t.quantile(open01(rng)),
        }
    }

    /// `n` i.i.d. draws from the stream addressed by `rng`.
    pub fn sample(&self, rng: &RngHandle, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        let mut r = rng.rng();
        Ok((0..n).map(|_| self.draw(&mut r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn densities_at_reference_points() {
        assert_relative_eq!(DisorderSpec::cauchy().density_at(0.0), 1.0 / PI, max_relative = 1e-15);
        assert_eq!(DisorderSpec::uniform().density_at(0.5), 0.5);
        assert_eq!(DisorderSpec::uniform().density_at(2.0), 0.0);
        assert_relative_eq!(
            DisorderSpec::gaussian().density_at(0.0),
            DisorderSpec::gaussian().sup_density()
        );
    }

    #[test]
    fn supports() {
        assert_eq!(DisorderSpec::uniform().support_interval(), Support::Bounded { lo: -1.0, hi: 1.0 });
        assert_eq!(DisorderSpec::cauchy().support_interval(), Support::Unbounded);
        assert_eq!(DisorderSpec::gaussian().support_interval(), Support::Unbounded);
    }

    #[test]
    fn tabulated_is_renormalized() {
        // Triangle with total mass 2 before normalization.
        let spec = DisorderSpec::tabulated(&[(-1.0, 0.0), (0.0, 2.0), (1.0, 0.0)], f64::INFINITY).unwrap();
        assert_relative_eq!(spec.sup_density(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(spec.cdf(0.0), 0.5, max_relative = 1e-14);
        assert_relative_eq!(spec.quantile(0.5), 0.0, epsilon = 1e-14);
        assert_relative_eq!(spec.quantile(0.125), -0.5, epsilon = 1e-12);
        assert_eq!(spec.density_at(1.5), 0.0);
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(matches!(DisorderSpec::tabulated(&[(0.0, 0.0), (1.0, 0.0)], 1.0), Err(Error::Config(_))));
        assert!(matches!(DisorderSpec::tabulated(&[(1.0, 1.0), (0.0, 1.0)], 1.0), Err(Error::Config(_))));
        assert!(matches!(DisorderSpec::tabulated(&[(0.0, -1.0), (1.0, 3.0)], 1.0), Err(Error::Config(_))));
        assert!(matches!(DisorderSpec::tabulated(&[(0.0, 1.0)], 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn quantile_inverts_cdf() {
        let tab = DisorderSpec::tabulated(&[(-2.0, 0.1), (-0.5, 1.0), (0.3, 0.4), (2.0, 0.0)], 5.0).unwrap();
        for spec in [DisorderSpec::cauchy(), DisorderSpec::gaussian(), DisorderSpec::uniform(), tab] {
            for &p in &[0.01, 0.2, 0.5, 0.77, 0.99] {
                assert_relative_eq!(spec.cdf(spec.quantile(p)), p, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn config_round_trip_keeps_table() {
        let spec = DisorderSpec::tabulated(&[(-1.0, 1.0), (1.0, 1.0)], 2.0).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: DisorderSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        let cauchy: DisorderSpec = serde_json::from_str(r#"{"kind":"cauchy"}"#).unwrap();
        assert!(cauchy.is_cauchy());
    }

    #[test]
    fn sample_requires_positive_n() {
        assert!(DisorderSpec::uniform().sample(&RngHandle::new(1), 0).is_err());
    }

    #[test]
    fn reads_density_csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rho.csv");
        std::fs::write(&p, "v,rho\n-1,0.5\n1,0.5\n").unwrap();
        let pts = read_density_csv(&p).unwrap();
        assert_eq!(pts, vec![(-1.0, 0.5), (1.0, 0.5)]);
    }
}
