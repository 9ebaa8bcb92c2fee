//! Closed-form stationary distribution of the two-level queue.
//!
//! With `phi(i) = sum_{j<=i} rho1^j` the stationary law is
//!
//! ```text
//! S11: rho1^l                                                    * pi(0,1)
//! S21: (phi(ell_u) - phi(l-1)) / phi(D+1)                        * pi(0,1)
//! S12: rho1^ell_u / phi(D+1) * (1 - rho2^(l-ell_d+1))/(1-rho2) * rho12 * pi(0,1)
//! S22: rho1^ell_u / phi(D+1) * (1 - rho2^(D+2))/(1-rho2) * rho12 * rho2^(l-ell_u-1) * pi(0,1)
//! ```
//!
//! where `D = ell_u - ell_d`. All weights are evaluated in log space from
//! `ln_geom_sum`, so `rho1 > 1` with a large `ell_u` cannot overflow and
//! `rho1 -> 1` loses no precision.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Model, Region, State};
use crate::numerics::{geom_sum, ln_geom_sum};

/// Which closed-form branch is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Rho1Generic,
    Rho1Unit,
}

/// `|rho1 - 1|` below which the `rho1 = 1` formulas are used.
pub const UNIT_BRANCH_TOL: f64 = 1e-8;

/// Below this value of `|ln rho1| * (D + 2)` the two-term `psi21` formula
/// cancels badly and the term-wise form is used instead.
const PSI21_CANCELLATION: f64 = 1e-3;

/// `phi(i) = sum_{j=0}^{i} rho1^j`.
pub fn phi(i: u64, rho1: f64) -> f64 {
    geom_sum(i + 1, rho1.ln())
}

/// One row of an exported distribution table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub ell: u64,
    pub k: u8,
    pub prob: f64,
}

/// Probabilities up to a cut-off plus the remaining tail mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionTable {
    pub rows: Vec<TableRow>,
    pub tail: f64,
}

/// Closed-form evaluator of the stationary law of a stable model.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryDistribution {
    model: Model,
    branch: Branch,
    /// `ln rho1`, forced to 0 on the unit branch.
    #[serde(skip)]
    ln_rho1: f64,
    #[serde(skip)]
    ln_rho2: f64,
    /// `ln(rho1^ell_u rho12 / phi(D+1))`, the common factor of the S12/S22 rows.
    #[serde(skip)]
    ln_level2: f64,
    /// Log of the sum of unnormalised weights; `pi(0,1) = exp(-ln_norm)`.
    #[serde(skip)]
    ln_norm: f64,
    pi0: f64,
}

impl StationaryDistribution {
    /// Picks the branch from `rho1` and evaluates the normalisation.
    pub fn new(model: &Model) -> Result<Self> {
        let branch = if (model.ratios().rho1 - 1.0).abs() < UNIT_BRANCH_TOL {
            Branch::Rho1Unit
        } else {
            Branch::Rho1Generic
        };
        Self::with_branch(model, branch)
    }

    /// Forces a branch. On the unit branch `rho1` is treated as exactly 1.
    pub fn with_branch(model: &Model, branch: Branch) -> Result<Self> {
        model.require_stable()?;
        let r = model.ratios();
        let ln_rho1 = match branch {
            Branch::Rho1Generic => r.rho1.ln(),
            Branch::Rho1Unit => 0.0,
        };
        let (ell_d, ell_u) = (model.ell_d(), model.ell_u());
        let span = ell_u - ell_d;
        let ln_level2 = ell_u as f64 * ln_rho1 + r.rho12.ln() - ln_geom_sum(span + 2, ln_rho1);
        let mut dist = Self {
            model: *model,
            branch,
            ln_rho1,
            ln_rho2: r.rho2.ln(),
            ln_level2,
            ln_norm: 0.0,
            pi0: 0.0,
        };
        // log-sum-exp over S11 (closed form), S21 and S12 (term-wise) and S22 (geometric tail)
        let mut logs = Vec::with_capacity(2 * span as usize + 4);
        logs.push(ln_geom_sum(ell_d, ln_rho1));
        for ell in ell_d..=ell_u {
            logs.push(dist.ln_weight_unchecked(State::new(ell, 1)));
            logs.push(dist.ln_weight_unchecked(State::new(ell, 2)));
        }
        logs.push(dist.ln_weight_unchecked(State::new(ell_u + 1, 2)) - (-r.rho2).ln_1p());
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        dist.ln_norm = max + sum.ln();
        dist.pi0 = (-dist.ln_norm).exp();
        Ok(dist)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    /// `pi(0,1)`.
    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    fn span(&self) -> u64 {
        self.model.ell_u() - self.model.ell_d()
    }

    /// Log of the unnormalised weight `pi(l,k) / pi(0,1)`; `state` must be in S.
    fn ln_weight_unchecked(&self, s: State) -> f64 {
        let (ell_d, ell_u) = (self.model.ell_d(), self.model.ell_u());
        let x = self.ln_rho1;
        if s.k == 1 {
            if s.ell < ell_d {
                s.ell as f64 * x
            } else {
                s.ell as f64 * x + ln_geom_sum(ell_u - s.ell + 1, x)
                    - ln_geom_sum(ell_u - ell_d + 2, x)
            }
        } else if s.ell <= ell_u {
            self.ln_level2 + ln_geom_sum(s.ell - ell_d + 1, self.ln_rho2)
        } else {
            self.ln_level2
                + ln_geom_sum(self.span() + 2, self.ln_rho2)
                + (s.ell - ell_u - 1) as f64 * self.ln_rho2
        }
    }

    /// `pi(ell_u + 1, 2)`, the head of the geometric tail.
    fn tail_head(&self) -> f64 {
        let ell_u = self.model.ell_u();
        (self.ln_weight_unchecked(State::new(ell_u + 1, 2)) - self.ln_norm).exp()
    }

    /// Stationary probability of `state`.
    pub fn pi(&self, s: State) -> Result<f64> {
        if !self.model.contains(s) {
            return Err(Error::StateOutsideS(s));
        }
        Ok(self.pi_unchecked(s))
    }

    fn pi_unchecked(&self, s: State) -> f64 {
        let ell_u = self.model.ell_u();
        if s.k == 2 && s.ell > ell_u {
            // geometric tail with ratio rho2
            let steps = s.ell - ell_u - 1;
            let rho2 = self.model.ratios().rho2;
            let decay = if steps <= i32::MAX as u64 {
                rho2.powi(steps as i32)
            } else {
                rho2.powf(steps as f64)
            };
            return self.tail_head() * decay;
        }
        (self.ln_weight_unchecked(s) - self.ln_norm).exp()
    }

    /// Stationary mass of one region (the MGF component at zero).
    pub fn region_mass(&self, region: Region) -> f64 {
        let (ell_d, ell_u) = (self.model.ell_d(), self.model.ell_u());
        match region {
            Region::S11 => (0..ell_d).map(|l| self.pi_unchecked(State::new(l, 1))).sum(),
            Region::S21 => (ell_d..=ell_u).map(|l| self.pi_unchecked(State::new(l, 1))).sum(),
            Region::S12 => (ell_d..=ell_u).map(|l| self.pi_unchecked(State::new(l, 2))).sum(),
            Region::S22 => self.tail_head() / (1.0 - self.model.ratios().rho2),
        }
    }

    /// `E(L)`: finite regions summed directly, the S22 tail in closed form.
    pub fn mean_queue_length(&self) -> f64 {
        let (ell_d, ell_u) = (self.model.ell_d(), self.model.ell_u());
        let rho2 = self.model.ratios().rho2;
        let mut mean = 0.0;
        for ell in 1..=ell_u {
            mean += ell as f64 * self.pi_unchecked(State::new(ell, 1));
            if ell >= ell_d {
                mean += ell as f64 * self.pi_unchecked(State::new(ell, 2));
            }
        }
        let gap = 1.0 - rho2;
        mean + self.tail_head() * ((ell_u + 1) as f64 / gap + rho2 / (gap * gap))
    }

    /// All probabilities with `ell <= l_max`, in `(ell, k)` order, plus the tail mass.
    pub fn distribution_table(&self, l_max: u64) -> Result<DistributionTable> {
        let ell_u = self.model.ell_u();
        if l_max < ell_u + 1 {
            return Err(Error::InvalidArgument(format!(
                "l_max must be at least ell_u + 1 = {}, got {l_max}",
                ell_u + 1
            )));
        }
        let rows = self
            .model
            .states_up_to(l_max)
            .map(|s| TableRow {
                ell: s.ell,
                k: s.k,
                prob: self.pi_unchecked(s),
            })
            .collect();
        let rho2 = self.model.ratios().rho2;
        let tail = self.pi_unchecked(State::new(l_max, 2)) * rho2 / (1.0 - rho2);
        Ok(DistributionTable { rows, tail })
    }

    /// Marginal law of `L` for `ell = 0..=ell_u`; beyond that see [`Self::length_cdf`].
    pub fn marginal_head(&self) -> Vec<f64> {
        let ell_d = self.model.ell_d();
        (0..=self.model.ell_u())
            .map(|ell| {
                let mut p = self.pi_unchecked(State::new(ell, 1));
                if ell >= ell_d {
                    p += self.pi_unchecked(State::new(ell, 2));
                }
                p
            })
            .collect()
    }

    /// Cumulative distribution `P(L <= ell)` of the queue length.
    pub fn length_cdf(&self) -> LengthCdf {
        let mut acc = 0.0;
        let head = self
            .marginal_head()
            .into_iter()
            .map(|p| {
                acc += p;
                // rounding may carry the partial sums a few ulps past 1
                acc.min(1.0)
            })
            .collect();
        LengthCdf {
            head,
            tail_mass: self.region_mass(Region::S22),
            rho2: self.model.ratios().rho2,
        }
    }

    /// `psi_ij(theta) = E(e^{theta L}; (L,B) in S_ij)`.
    ///
    /// Returns `+inf` for S22 when `theta >= ln(1/rho2)`.
    pub fn mgf_component(&self, region: Region, theta: f64) -> f64 {
        let (ell_d, ell_u) = (self.model.ell_d(), self.model.ell_u());
        let span = self.span();
        let x = self.ln_rho1;
        let y = x + theta;
        let rho2 = self.model.ratios().rho2;
        match region {
            Region::S11 => (ln_geom_sum(ell_d, y) - self.ln_norm).exp(),
            Region::S21 => self.psi21(theta),
            Region::S12 => {
                let bracket = (geom_sum(span + 1, theta)
                    - rho2 * geom_sum(span + 1, theta + self.ln_rho2))
                    / (1.0 - rho2);
                (self.ln_level2 - self.ln_norm + theta * ell_d as f64).exp() * bracket
            }
            Region::S22 => {
                let z = theta + self.ln_rho2;
                if z >= 0.0 {
                    return f64::INFINITY;
                }
                (self.ln_level2 - self.ln_norm
                    + ln_geom_sum(span + 2, self.ln_rho2)
                    + theta * (ell_u + 1) as f64)
                    .exp()
                    / -z.exp_m1()
            }
        }
    }

    fn psi21(&self, theta: f64) -> f64 {
        let (ell_d, ell_u) = (self.model.ell_d() as f64, self.model.ell_u() as f64);
        let span = self.span();
        let x = self.ln_rho1;
        let y = x + theta;
        let n = span + 1;
        if x.abs() * (span + 2) as f64 >= PSI21_CANCELLATION {
            // [(rho1 e^t)^ell_d - (rho1 e^t)^(ell_u+1)]/(1 - rho1 e^t)
            //   - rho1^(ell_u+1) [e^(t ell_d) - e^(t (ell_u+1))]/(1 - e^t), over 1 - rho1^(D+2),
            // rescaled so that no power of rho1 overflows
            let d2 = (span + 2) as f64;
            if x > 0.0 {
                let lead = (-self.ln_norm + x * (ell_d - 1.0) + theta * ell_d).exp();
                lead * (geom_sum(n, theta) - (-x * (span + 1) as f64).exp() * geom_sum(n, y))
                    / -(-x * d2).exp_m1()
            } else {
                let lead = (-self.ln_norm + theta * ell_d).exp();
                lead * ((x * ell_d).exp() * geom_sum(n, y)
                    - (x * (ell_u + 1.0)).exp() * geom_sum(n, theta))
                    / -(x * d2).exp_m1()
            }
        } else if self.branch == Branch::Rho1Unit && theta.abs() * (span + 2) as f64 >= PSI21_CANCELLATION {
            // [(D+1) e^(t ell_d) - (e^(t(ell_d+1)) - e^(t(ell_u+2)))/(1-e^t)] / ((D+2)(1-e^t))
            let one_minus = -theta.exp_m1();
            let inner = (theta * (ell_d + 1.0)).exp() * geom_sum(n, theta);
            ((-self.ln_norm).exp() / (span + 2) as f64)
                * ((span + 1) as f64 * (theta * ell_d).exp() - inner)
                / one_minus
        } else {
            // term-wise: sum_j e^{y (ell_d + j)} phi(ell_u - ell_d - j) / phi(D + 1)
            let denom = ln_geom_sum(span + 2, x);
            (0..=span)
                .map(|j| {
                    (y * (ell_d + j as f64) + ln_geom_sum(span + 1 - j, x) - denom - self.ln_norm)
                        .exp()
                })
                .sum()
        }
    }
}

/// `P(L <= ell)` for the exact queue-length law.
#[derive(Debug, Clone)]
pub struct LengthCdf {
    head: Vec<f64>,
    tail_mass: f64,
    rho2: f64,
}

impl LengthCdf {
    pub fn at(&self, ell: u64) -> f64 {
        let ell_u = self.head.len() as u64 - 1;
        if ell <= ell_u {
            self.head[ell as usize]
        } else {
            let steps = (ell - ell_u) as f64;
            // complement of the remaining S22 mass, exactly 1 once it underflows
            (1.0 - self.tail_mass * (steps * self.rho2.ln()).exp()).max(self.head[ell_u as usize])
        }
    }

    /// `P(L <= x)` for real `x`.
    pub fn at_real(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else if x >= u64::MAX as f64 {
            self.at(u64::MAX)
        } else {
            self.at(x.floor() as u64)
        }
    }
}
