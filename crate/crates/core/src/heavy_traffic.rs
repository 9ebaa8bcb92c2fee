//! Pre-limit systems of a heavy-traffic scaling sequence and the studies
//! comparing them with the limit law.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionParams, LimitLaw};
use crate::error::{Error, Result};
use crate::model::{Model, Ratios};
use crate::output::{csv, Cell};
use crate::stationary::StationaryDistribution;

/// Integer rounding of `sqrt(n) * ell` for the n-th system's levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    Nearest,
    Floor,
    Ceil,
}

impl Rounding {
    pub const ALL: [Rounding; 3] = [Rounding::Nearest, Rounding::Floor, Rounding::Ceil];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Rounding::Nearest => x.round(),
            Rounding::Floor => x.floor(),
            Rounding::Ceil => x.ceil(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rounding::Nearest => "nearest",
            Rounding::Floor => "floor",
            Rounding::Ceil => "ceil",
        }
    }
}

impl fmt::Display for Rounding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rounding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Rounding::Nearest),
            "floor" => Ok(Rounding::Floor),
            "ceil" => Ok(Rounding::Ceil),
            other => Err(Error::InvalidArgument(format!(
                "rounding must be nearest, floor or ceil, got {other:?}"
            ))),
        }
    }
}

/// `rho_i(n) = 1 + b_i / sqrt(n)`, `rho12(n) = rho12 + offset / sqrt(n)`,
/// `ell(n) = round(sqrt(n) ell)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSequence {
    pub dp: DiffusionParams,
    pub rho12_offset: f64,
    pub rounding: Rounding,
}

impl ScalingSequence {
    pub fn new(dp: DiffusionParams) -> Self {
        Self {
            dp,
            rho12_offset: -1.0,
            rounding: Rounding::Nearest,
        }
    }

    /// `b1 = 1, b2 = -1, ell_d = 3, ell_u = 10, rho12 = 0.8`, offset -1.
    pub fn benchmark() -> Self {
        Self::new(DiffusionParams::new(1.0, -1.0, 3.0, 10.0, 0.8).expect("valid constants"))
    }

    pub fn with_rounding(self, rounding: Rounding) -> Self {
        Self { rounding, ..self }
    }

    pub fn with_b1(self, b1: f64) -> Self {
        Self {
            dp: DiffusionParams { b1, ..self.dp },
            ..self
        }
    }

    /// The ratios and levels of the n-th system, before feasibility checks.
    pub fn raw(&self, n: u64) -> (Ratios, f64, f64) {
        let s = (n as f64).sqrt();
        let r = Ratios {
            rho1: 1.0 + self.dp.b1 / s,
            rho2: 1.0 + self.dp.b2 / s,
            rho12: self.dp.rho12_t + self.rho12_offset / s,
        };
        (
            r,
            self.rounding.apply(s * self.dp.ell_d_t),
            self.rounding.apply(s * self.dp.ell_u_t),
        )
    }

    /// The n-th pre-limit system.
    pub fn nth_system(&self, n: u64) -> Result<Model> {
        let infeasible = |reason: String| Err(Error::InfeasibleN { n, reason });
        if n == 0 {
            return infeasible("n must be at least 1".into());
        }
        let (r, ell_d, ell_u) = self.raw(n);
        if !(r.rho2 < 1.0) {
            return infeasible(format!("rho2 = {} is not below 1", r.rho2));
        }
        if !(r.rho1 > 0.0) {
            return infeasible(format!("rho1 = {} is not positive", r.rho1));
        }
        if !(r.rho12 > 0.0) {
            return infeasible(format!("rho12 = {} is not positive", r.rho12));
        }
        if !(ell_d >= 1.0 && ell_d < ell_u) {
            return infeasible(format!("levels ell_d = {ell_d}, ell_u = {ell_u} violate 1 <= ell_d < ell_u"));
        }
        Model::from_ratios(r, ell_d as u64, ell_u as u64)
    }

    /// `(-b2 / (1 - rho2(n))) * int x nu(dx)`.
    pub fn approximate_mean(&self, n: u64) -> Result<f64> {
        let model = self.nth_system(n)?;
        let law = LimitLaw::new(self.dp)?;
        Ok(-self.dp.b2 / (1.0 - model.ratios().rho2) * law.mean())
    }

    /// `max_x |P(L(n) / sqrt(n) <= x) - F(x)|` over `grid`.
    pub fn scaled_cdf_distance(&self, n: u64, grid: &[f64]) -> Result<f64> {
        let model = self.nth_system(n)?;
        let exact = StationaryDistribution::new(&model)?.length_cdf();
        let law = LimitLaw::new(self.dp)?;
        let s = (n as f64).sqrt();
        Ok(grid
            .iter()
            .map(|&x| (exact.at_real(s * x) - law.cdf(x)).abs())
            .fold(0.0, f64::max))
    }
}

/// Free-function form of [`ScalingSequence::nth_system`].
pub fn nth_system(seq: &ScalingSequence, n: u64) -> Result<Model> {
    seq.nth_system(n)
}

/// Free-function form of [`ScalingSequence::approximate_mean`].
pub fn approximate_mean(seq: &ScalingSequence, n: u64) -> Result<f64> {
    seq.approximate_mean(n)
}

/// Free-function form of [`ScalingSequence::scaled_cdf_distance`].
pub fn scaled_cdf_distance(seq: &ScalingSequence, n: u64, grid: &[f64]) -> Result<f64> {
    seq.scaled_cdf_distance(n, grid)
}

/// Named numeric columns plus free-form annotations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub notes: BTreeMap<String, String>,
}

impl StudyTable {
    fn new(columns: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
            notes: BTreeMap::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// The first column is written as an integer when it holds `n`.
    pub fn to_csv(&self) -> String {
        let integral_first = self.columns.first().is_some_and(|c| c == "n");
        csv(
            &self.columns,
            self.rows.iter().map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(i, v)| {
                        if i == 0 && integral_first {
                            Cell::UInt(*v as u64)
                        } else {
                            Cell::Num(*v)
                        }
                    })
                    .collect()
            }),
        )
    }

    /// `{"columns": {name: [values]}, "notes": {...}}`, values as JSON numbers
    /// (non-finite values become null).
    pub fn to_json(&self) -> serde_json::Value {
        let mut cols = serde_json::Map::new();
        for (i, name) in self.columns.iter().enumerate() {
            let vals = self.rows.iter().map(|r| serde_json::json!(r[i])).collect();
            cols.insert(name.clone(), serde_json::Value::Array(vals));
        }
        serde_json::json!({ "columns": cols, "notes": self.notes })
    }
}

fn sqrt(n: u64) -> f64 {
    (n as f64).sqrt()
}

/// Rows `(n, rho1, rho2, rho12, exact_mean, approx_mean, rel_error)`.
pub fn convergence_study(seq: &ScalingSequence, ns: &[u64]) -> Result<StudyTable> {
    let rows = ns
        .par_iter()
        .map(|&n| {
            let model = seq.nth_system(n)?;
            let exact = StationaryDistribution::new(&model)?.mean_queue_length();
            let approx = seq.approximate_mean(n)?;
            let r = model.ratios();
            Ok(vec![n as f64, r.rho1, r.rho2, r.rho12, exact, approx, (approx - exact) / exact])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = StudyTable::new(
        &["n", "rho1", "rho2", "rho12", "exact_mean", "approx_mean", "rel_error"],
        rows,
    );
    t.notes.insert("rounding".into(), seq.rounding.to_string());
    Ok(t)
}

/// Rows `(b1, exact_mean, approx_mean)` at a fixed `n`.
pub fn b1_sweep(seq: &ScalingSequence, b1_values: &[f64], n: u64) -> Result<StudyTable> {
    let rows = b1_values
        .par_iter()
        .map(|&b1| {
            let s = seq.with_b1(b1);
            let model = s.nth_system(n)?;
            let exact = StationaryDistribution::new(&model)?.mean_queue_length();
            Ok(vec![b1, exact, s.approximate_mean(n)?])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = StudyTable::new(&["b1", "exact_mean", "approx_mean"], rows);
    t.notes.insert("n".into(), n.to_string());
    t.notes.insert("rounding".into(), seq.rounding.to_string());
    Ok(t)
}

/// Rows comparing `sqrt(n) pi(0,1)` and `pi(0,1) E(L)` with their limits.
pub fn corollary_check(seq: &ScalingSequence, ns: &[u64]) -> Result<StudyTable> {
    let law = LimitLaw::new(seq.dp)?;
    let pi0_limit = law.limit_sqrtn_pi0();
    let product_limit = pi0_limit * law.mean();
    let rows = ns
        .par_iter()
        .map(|&n| {
            let model = seq.nth_system(n)?;
            let dist = StationaryDistribution::new(&model)?;
            let pi0 = dist.pi0();
            let scaled = sqrt(n) * pi0;
            let product = pi0 * dist.mean_queue_length();
            Ok(vec![
                n as f64,
                scaled,
                pi0_limit,
                ((scaled - pi0_limit) / pi0_limit).abs(),
                product,
                product_limit,
                ((product - product_limit) / product_limit).abs(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyTable::new(
        &[
            "n",
            "sqrt_n_pi0",
            "limit_sqrt_n_pi0",
            "pi0_rel_gap",
            "pi0_mean",
            "limit_pi0_mean",
            "rel_gap",
        ],
        rows,
    ))
}

/// How well each rounding convention reproduces a set of reference means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundingReport {
    /// Convention with the smallest worst-case relative error.
    pub best: Rounding,
    /// `(convention, worst relative error over the targets)`.
    pub errors: Vec<(Rounding, f64)>,
}

/// Compares `E(L(n))` with `targets` = `[(n, reference mean)]` under every
/// rounding convention.
pub fn closest_rounding(seq: &ScalingSequence, targets: &[(u64, f64)]) -> Result<RoundingReport> {
    let errors = Rounding::ALL
        .iter()
        .map(|&rounding| {
            let s = seq.with_rounding(rounding);
            let worst = targets
                .iter()
                .map(|&(n, reference)| {
                    let model = s.nth_system(n)?;
                    let exact = StationaryDistribution::new(&model)?.mean_queue_length();
                    Ok(((exact - reference) / reference).abs())
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok((rounding, worst))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = errors
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|e| e.0)
        .expect("three conventions");
    Ok(RoundingReport { best, errors })
}

/// `0, step, 2 step, ..., <= end`.
pub fn uniform_grid(end: f64, step: f64) -> Vec<f64> {
    let count = (end / step).round() as usize;
    (0..=count).map(|i| i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn benchmark_systems() {
        let seq = ScalingSequence::benchmark();
        let m = seq.nth_system(100).unwrap();
        let r = m.ratios();
        assert!(rel(r.rho1, 1.1) < 1e-15 && rel(r.rho2, 0.9) < 1e-15 && rel(r.rho12, 0.7) < 1e-15);
        assert_eq!((m.ell_d(), m.ell_u()), (30, 100));
        let r = *seq.nth_system(10).unwrap().ratios();
        assert!((r.rho1 - 1.31623).abs() < 5e-6);
        assert!((r.rho2 - 0.683772).abs() < 5e-7);
        assert!((r.rho12 - 0.483772).abs() < 5e-7);
        let m = seq.nth_system(10_000).unwrap();
        assert_eq!((m.ell_d(), m.ell_u()), (300, 1000));
    }

    #[test]
    fn infeasible_systems() {
        let mut seq = ScalingSequence::benchmark();
        seq.dp.b2 = 1.0;
        for n in [1, 100, 1_000_000] {
            assert!(matches!(seq.nth_system(n), Err(Error::InfeasibleN { .. })));
        }
        let seq = ScalingSequence::benchmark();
        // rho2 = 0 at n = 1
        assert!(seq.nth_system(1).is_err());
        assert!(seq.nth_system(0).is_err());
    }

    #[test]
    fn approximation_scales_with_sqrt_n() {
        let seq = ScalingSequence::benchmark();
        let base = seq.approximate_mean(100).unwrap() / 10.0;
        for n in [10, 1000, 10_000, 12_345] {
            let v = seq.approximate_mean(n).unwrap() / sqrt(n);
            assert!(rel(v, base) < 1e-13);
        }
        for (n, expect) in [(10, 20.296), (100, 64.1817), (1000, 202.96), (10_000, 641.817)] {
            assert!(rel(seq.approximate_mean(n).unwrap(), expect) < 5e-5, "n={n}");
        }
    }

    #[test]
    fn study_tables() {
        let seq = ScalingSequence::benchmark();
        let t = convergence_study(&seq, &[100, 10_000]).unwrap();
        let exact = t.column("exact_mean").unwrap();
        assert!(rel(exact[0], 62.6715) < 5e-6);
        assert!(rel(exact[1], 640.299) < 5e-6);
        let err = t.column("rel_error").unwrap();
        assert!(err[0] > err[1] && err[1] > 0.0);
        assert!(convergence_study(&seq, &[]).unwrap().rows.is_empty());
        let csv = t.to_csv();
        assert!(csv.starts_with("n,rho1,rho2,rho12,exact_mean,approx_mean,rel_error\n100,"));

        let s = b1_sweep(&seq, &[-1.0, 0.0, 1.0], 1000).unwrap();
        assert_eq!(s.rows.len(), 3);
        assert!(rel(s.rows[2][2], 202.96) < 5e-5);
        assert!(rel(s.rows[1][2], 1000f64.sqrt() * 3.995434) < 1e-6);
        assert!(s.to_csv().starts_with("b1,exact_mean,approx_mean\n"));
    }

    #[test]
    fn corollary_rows() {
        let seq = ScalingSequence::benchmark();
        let t = corollary_check(&seq, &[100, 1000, 10_000]).unwrap();
        let lim = t.column("limit_pi0_mean").unwrap()[0];
        assert!((lim - 2.5438e-2).abs() < 5e-6);
        let gap = t.column("rel_gap").unwrap();
        assert!(gap[0] > gap[1] && gap[1] > gap[2]);
        assert_eq!(corollary_check(&seq, &[400]).unwrap().rows.len(), 1);
    }

    #[test]
    fn cdf_distance_edge_cases() {
        let seq = ScalingSequence::benchmark();
        assert_eq!(seq.scaled_cdf_distance(100, &[1e6]).unwrap(), 0.0);
        let d = seq.scaled_cdf_distance(100, &uniform_grid(20.0, 0.25)).unwrap();
        assert!(d > 0.0 && d < 0.2);
        assert_eq!(uniform_grid(20.0, 0.25).len(), 81);
    }

    #[test]
    fn rounding_parse() {
        assert_eq!("floor".parse::<Rounding>().unwrap(), Rounding::Floor);
        assert!("up".parse::<Rounding>().is_err());
        assert_eq!(Rounding::Ceil.apply(2.1), 3.0);
    }
}
