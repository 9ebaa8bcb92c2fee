//! Self-checks run by the `validate` command: oracle equivalence, balance
//! residuals, normalisation and branch continuity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{DiffusionParams, LimitLaw};
use crate::error::Result;
use crate::model::{Model, Ratios, Region, State};
use crate::oracle::{balance_residual, solve_balance, total_variation, truncate_level, ProbabilityMap};
use crate::quadrature::integrate;
use crate::stationary::{Branch, StationaryDistribution};

pub const TV_THRESHOLD: f64 = 1e-10;
pub const BALANCE_THRESHOLD: f64 = 1e-12;
pub const NORMALIZATION_THRESHOLD: f64 = 1e-10;
pub const CONTINUITY_THRESHOLD: f64 = 1e-6;
pub const DIFFUSION_CONTINUITY_THRESHOLD: f64 = 1e-5;

/// Truncation tolerance for the oracle solve; the neglected mass enters TV.
const ORACLE_EPS: f64 = 1e-15;

/// A deliberate defect in the closed form, for negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fault {
    /// Scales every S22 probability by `1 + 1e-6`.
    PerturbTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationConfig {
    /// Number of random models.
    pub grid: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            grid: 50,
            seed: 20_240_601,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub worst: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &'static str, worst: f64, threshold: f64) -> Self {
        Self {
            name,
            worst,
            threshold,
            passed: worst < threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub models: usize,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

/// Stable models with `rho1 in [0.5, 1.5]`, `rho2 in [0.3, 0.97]`,
/// `rho12 in [0.3, 1.5]` and `1 <= ell_d < ell_u <= 60`.
pub fn random_models(count: usize, seed: u64) -> Vec<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = Ratios::new(
                rng.random_range(0.5..=1.5),
                rng.random_range(0.3..=0.97),
                rng.random_range(0.3..=1.5),
            )
            .expect("positive ratios");
            let ell_d = rng.random_range(1..60u64);
            let ell_u = rng.random_range(ell_d + 1..=60);
            Model::from_ratios(r, ell_d, ell_u).expect("valid levels")
        })
        .collect()
}

/// Closed-form probabilities, with the configured fault applied.
fn closed_form(dist: &StationaryDistribution, fault: Option<Fault>, s: State) -> f64 {
    let p = dist.pi(s).expect("state in S");
    match fault {
        Some(Fault::PerturbTail) if s.k == 2 && s.ell > dist.model().ell_u() => p * (1.0 + 1e-6),
        _ => p,
    }
}

struct ModelChecks {
    tv: f64,
    balance: f64,
    normalization: f64,
}

fn check_model(model: &Model, fault: Option<Fault>) -> Result<ModelChecks> {
    let dist = StationaryDistribution::new(model)?;
    let l_max = truncate_level(model, ORACLE_EPS)?;
    let numeric = solve_balance(model, l_max)?;
    let exact: ProbabilityMap = model
        .states_up_to(l_max)
        .map(|s| (s, closed_form(&dist, fault, s)))
        .collect();
    let tv = total_variation(&numeric, &exact)?;
    let balance = balance_residual(model, |s| closed_form(&dist, fault, s), l_max);
    let rho2 = model.ratios().rho2;
    let tail = closed_form(&dist, fault, State::new(l_max, 2)) * rho2 / (1.0 - rho2);
    let normalization = (exact.values().sum::<f64>() + tail - 1.0).abs();
    Ok(ModelChecks {
        tv,
        balance,
        normalization,
    })
}

/// Largest relative gap between the closed form at `rho1 = 1 +- 1e-9`
/// (generic branch forced) and at `rho1 = 1`, over `ell <= ell_u + 5`.
pub fn unit_branch_gap(rho2: f64, rho12: f64, ell_d: u64, ell_u: u64) -> Result<f64> {
    let at = |rho1: f64, branch: Branch| -> Result<StationaryDistribution> {
        let m = Model::from_ratios(Ratios::new(rho1, rho2, rho12)?, ell_d, ell_u)?;
        StationaryDistribution::with_branch(&m, branch)
    };
    let unit = at(1.0, Branch::Rho1Unit)?;
    let mut worst = 0.0f64;
    for rho1 in [1.0 - 1e-9, 1.0 + 1e-9] {
        let near = at(rho1, Branch::Rho1Generic)?;
        for s in unit.model().states_up_to(ell_u + 5) {
            let (a, b) = (near.pi(s)?, unit.pi(s)?);
            worst = worst.max((a - b).abs() / b);
        }
    }
    Ok(worst)
}

/// Largest relative gap between diffusion quantities at `b1 = +-1e-7` and
/// at `b1 = 0`: densities and CDF on a grid, mean, `sqrt(n) pi0` limit and MGFs.
pub fn diffusion_continuity_gap(b2: f64, ell_d: f64, ell_u: f64, rho12: f64) -> Result<f64> {
    let law = |b1: f64| LimitLaw::new(DiffusionParams::new(b1, b2, ell_d, ell_u, rho12)?);
    let zero = law(0.0)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut worst = 0.0f64;
    for b1 in [-1e-7, 1e-7] {
        let l = law(b1)?;
        worst = worst.max(rel(l.mean(), zero.mean()));
        worst = worst.max(rel(l.limit_sqrtn_pi0(), zero.limit_sqrtn_pi0()));
        for i in 0..=40 {
            let x = ell_u * 1.5 * i as f64 / 40.0;
            for r in Region::ALL {
                let f0 = zero.density(r, x);
                if f0 > 0.0 {
                    worst = worst.max(rel(l.density(r, x), f0));
                }
            }
            if x > 0.0 {
                worst = worst.max(rel(l.cdf(x), zero.cdf(x)));
            }
        }
        for theta in [-0.5 * b2.abs(), 0.0, 0.5 * b2.abs()] {
            for r in Region::ALL {
                worst = worst.max(rel(l.mgf_component(r, theta), zero.mgf_component(r, theta)));
            }
        }
    }
    Ok(worst)
}

/// `|int f - 1|` by quadrature on `[0, ell_u]` plus the analytic S22 mass.
pub fn diffusion_normalization_error(law: &LimitLaw) -> Result<f64> {
    let p = &law.params;
    let head = integrate(|x| law.total_density(x), 0.0, p.ell_d_t, 1e-12)?
        + integrate(|x| law.total_density(x), p.ell_d_t, p.ell_u_t, 1e-12)?;
    Ok((head + law.region_mass(Region::S22) - 1.0).abs())
}

/// Diffusion parameter sets spanning `b1 in {-10, -1, 0, 1, 10}`.
pub fn diffusion_grid() -> Vec<DiffusionParams> {
    let mut out = Vec::new();
    for b1 in [-10.0, -1.0, 0.0, 1.0, 10.0] {
        for (b2, ld, lu, r) in [(-1.0, 3.0, 10.0, 0.8), (-0.3, 0.5, 2.0, 1.5), (-4.0, 1.0, 1.5, 0.2), (-2.0, 2.0, 8.0, 3.0)] {
            out.push(DiffusionParams::new(b1, b2, ld, lu, r).expect("valid grid"));
        }
    }
    out
}

pub fn run(cfg: &ValidationConfig) -> Result<ValidationReport> {
    let models = random_models(cfg.grid, cfg.seed);
    let per_model = models
        .par_iter()
        .map(|m| check_model(m, cfg.fault))
        .collect::<Result<Vec<_>>>()?;
    let worst = |f: fn(&ModelChecks) -> f64| per_model.iter().map(f).fold(0.0, f64::max);

    let diffusion_norm = diffusion_grid()
        .iter()
        .map(|dp| diffusion_normalization_error(&LimitLaw::new(*dp)?))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let mut unit_gap = 0.0f64;
    for m in models.iter().take(cfg.grid.min(10)) {
        let r = m.ratios();
        unit_gap = unit_gap.max(unit_branch_gap(r.rho2, r.rho12, m.ell_d(), m.ell_u())?);
    }
    let diff_gap = diffusion_continuity_gap(-1.0, 3.0, 10.0, 0.8)?
        .max(diffusion_continuity_gap(-0.3, 0.5, 2.0, 1.5)?);

    Ok(ValidationReport {
        models: models.len(),
        checks: vec![
            CheckResult::new("oracle_total_variation", worst(|c| c.tv), TV_THRESHOLD),
            CheckResult::new("balance_residual", worst(|c| c.balance), BALANCE_THRESHOLD),
            CheckResult::new("normalization", worst(|c| c.normalization), NORMALIZATION_THRESHOLD),
            CheckResult::new("diffusion_normalization", diffusion_norm, NORMALIZATION_THRESHOLD),
            CheckResult::new("unit_branch_continuity", unit_gap, CONTINUITY_THRESHOLD),
            CheckResult::new("diffusion_continuity", diff_gap, DIFFUSION_CONTINUITY_THRESHOLD),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_models_respect_ranges() {
        let ms = random_models(200, 1);
        assert_eq!(ms.len(), 200);
        for m in &ms {
            let r = m.ratios();
            assert!((0.5..=1.5).contains(&r.rho1));
            assert!((0.3..=0.97).contains(&r.rho2));
            assert!((0.3..=1.5).contains(&r.rho12));
            assert!(1 <= m.ell_d() && m.ell_d() < m.ell_u() && m.ell_u() <= 60);
        }
        assert_eq!(random_models(3, 9), random_models(3, 9));
    }

    #[test]
    fn small_run_passes() {
        let report = run(&ValidationConfig {
            grid: 4,
            ..Default::default()
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.models, 4);
    }

    #[test]
    fn fault_is_detected() {
        let report = run(&ValidationConfig {
            grid: 4,
            fault: Some(Fault::PerturbTail),
            ..Default::default()
        })
        .unwrap();
        assert!(!report.passed());
        assert!(report.failing().contains(&"balance_residual"));
    }
}
