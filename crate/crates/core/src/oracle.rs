//! Brute-force validation of the closed forms.
//!
//! The chain is truncated at `L_max` (the upward rate of the top state is
//! removed) and its global balance equations are solved numerically with the
//! Grassmann-Taksar-Heyman elimination, which involves no subtractions and
//! keeps the banded structure of the generator. Nothing here reads the
//! closed-form stationary law except [`mgf_by_summation`] and
//! [`balance_residual`], whose job is to check it.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::model::{Model, Region, State};
use crate::stationary::StationaryDistribution;

/// A probability vector indexed by state.
pub type ProbabilityMap = BTreeMap<State, f64>;

/// `L_max = ell_u + ceil(ln eps / ln rho2)`, at least `ell_u + 2`.
///
/// The neglected tail mass is of order `eps`.
pub fn truncate_level(model: &Model, eps: f64) -> Result<u64> {
    model.require_stable()?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")));
    }
    let steps = (eps.ln() / model.ratios().rho2.ln()).ceil().max(0.0) as u64;
    Ok((model.ell_u() + steps).max(model.ell_u() + 2))
}

/// Transition-rate matrix of the chain restricted to `ell <= l_max`.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    states: Vec<State>,
    index: HashMap<State, usize>,
    /// Off-diagonal rates as `(row, col, rate)`.
    entries: Vec<(usize, usize, f64)>,
    l_max: u64,
}

impl TruncatedGenerator {
    pub fn new(model: &Model, l_max: u64) -> Result<Self> {
        if l_max < model.ell_u() + 2 {
            return Err(Error::InvalidArgument(format!(
                "truncation level must be at least ell_u + 2 = {}, got {l_max}",
                model.ell_u() + 2
            )));
        }
        let states: Vec<State> = model.states_up_to(l_max).collect();
        let index: HashMap<State, usize> =
            states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let mut entries = Vec::with_capacity(2 * states.len());
        for (i, s) in states.iter().enumerate() {
            for (target, rate) in model.outgoing(*s).iter() {
                // reflecting top: arrivals at l_max are dropped
                if let Some(&j) = index.get(&target) {
                    entries.push((i, j, rate));
                }
            }
        }
        Ok(Self {
            states,
            index,
            entries,
            l_max,
        })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn l_max(&self) -> u64 {
        self.l_max
    }

    pub fn index_of(&self, s: State) -> Option<usize> {
        self.index.get(&s).copied()
    }

    /// Off-diagonal entries `(row, col, rate)`.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    fn bandwidth(&self) -> usize {
        self.entries
            .iter()
            .map(|&(i, j, _)| i.abs_diff(j))
            .max()
            .unwrap_or(0)
    }

    /// Solves `x Q = 0`, `sum x = 1`.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let n = self.states.len();
        let w = self.bandwidth();
        let width = 2 * w + 1;
        // band[i * width + (j + w - i)] holds q_{ij}
        let mut band = vec![0.0; n * width];
        let at = |i: usize, j: usize| i * width + (j + w - i);
        for &(i, j, q) in &self.entries {
            band[at(i, j)] += q;
        }

        let mut down_rate = vec![0.0; n];
        for k in (1..n).rev() {
            let lo = k.saturating_sub(w);
            let s: f64 = (lo..k).map(|j| band[at(k, j)]).sum();
            if !(s > 0.0) {
                return Err(Error::SingularSystem(format!(
                    "state {} has no path to lower states",
                    self.states[k]
                )));
            }
            down_rate[k] = s;
            for i in lo..k {
                let qik = band[at(i, k)];
                if qik == 0.0 {
                    continue;
                }
                for j in lo..k {
                    if j != i {
                        band[at(i, j)] += qik * band[at(k, j)] / s;
                    }
                }
            }
        }

        let mut x = vec![0.0; n];
        if n > 0 {
            x[0] = 1.0;
        }
        for k in 1..n {
            let lo = k.saturating_sub(w);
            let inflow: f64 = (lo..k).map(|i| x[i] * band[at(i, k)]).sum();
            x[k] = inflow / down_rate[k];
        }
        for v in x.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let total: f64 = x.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::SingularSystem("degenerate solution".into()));
        }
        x.iter_mut().for_each(|v| *v /= total);
        Ok(x)
    }
}

/// Numerical stationary law of the chain truncated at `l_max`.
pub fn solve_balance(model: &Model, l_max: u64) -> Result<ProbabilityMap> {
    model.require_stable()?;
    let gen = TruncatedGenerator::new(model, l_max)?;
    let x = gen.solve()?;
    Ok(gen.states.iter().copied().zip(x).collect())
}

/// `1/2 sum |p - q|` over a common state set.
pub fn total_variation(p: &ProbabilityMap, q: &ProbabilityMap) -> Result<f64> {
    if p.len() != q.len() || p.keys().zip(q.keys()).any(|(a, b)| a != b) {
        return Err(Error::DomainMismatch);
    }
    Ok(0.5 * p.values().zip(q.values()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// The closed-form law restricted to `ell <= l_max`, as a map.
pub fn closed_form_map(dist: &StationaryDistribution, l_max: u64) -> ProbabilityMap {
    dist.model()
        .states_up_to(l_max)
        .map(|s| (s, dist.pi(s).expect("enumerated states lie in S")))
        .collect()
}

/// `psi_ij(theta)` by direct summation of the closed-form probabilities up to
/// `l_max`, with the geometric remainder of S22 added in closed form.
pub fn mgf_by_summation(model: &Model, region: Region, theta: f64, l_max: u64) -> Result<f64> {
    let dist = StationaryDistribution::new(model)?;
    let (ell_d, ell_u) = (model.ell_d(), model.ell_u());
    let rho2 = model.ratios().rho2;
    let bound = -rho2.ln();
    if region == Region::S22 && theta >= bound {
        return Err(Error::DivergentSum { theta, bound });
    }
    let term = |ell: u64, k: u8| (theta * ell as f64).exp() * dist.pi(State::new(ell, k)).unwrap();
    let value = match region {
        Region::S11 => (0..ell_d).map(|l| term(l, 1)).sum(),
        Region::S21 => (ell_d..=ell_u).map(|l| term(l, 1)).sum(),
        Region::S12 => (ell_d..=ell_u).map(|l| term(l, 2)).sum(),
        Region::S22 => {
            let top = l_max.max(ell_u + 1);
            let head: f64 = (ell_u + 1..=top).map(|l| term(l, 2)).sum();
            let ratio = rho2 * theta.exp();
            head + term(top + 1, 2) / (1.0 - ratio)
        }
    };
    Ok(value)
}

/// Largest relative violation of the global balance equations
/// `pi(j) q_j = sum_i pi(i) q_ij` over the states with `ell < l_max`,
/// evaluated with the model's actual rates.
pub fn balance_residual(model: &Model, pi: impl Fn(State) -> f64, l_max: u64) -> f64 {
    let mut inflow: HashMap<State, f64> = HashMap::new();
    for s in model.states_up_to(l_max) {
        let p = pi(s);
        for (target, rate) in model.outgoing(s).iter() {
            *inflow.entry(target).or_insert(0.0) += p * rate;
        }
    }
    model
        .states_up_to(l_max.saturating_sub(1))
        .map(|s| {
            let out = pi(s) * model.outgoing(s).total_rate();
            let inn = inflow.get(&s).copied().unwrap_or(0.0);
            (inn - out).abs() / out.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}
