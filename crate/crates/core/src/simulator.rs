//! Event-driven simulation of the queue-length and background process.
//!
//! Time averages are accumulated after a warmup window and split into equal
//! time batches; batch means give Student-t confidence intervals.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::{Model, ModelParams, Region, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: ModelParams,
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub batches: u32,
}

impl SimConfig {
    /// Warmup 10% of the horizon and 20 batches.
    pub fn new(model: ModelParams, horizon: f64, seed: u64) -> Self {
        Self {
            model,
            horizon,
            warmup_fraction: 0.1,
            seed,
            batches: 20,
        }
    }

    pub fn validate(&self) -> Result<Model> {
        let model = Model::new(self.model)?;
        model.require_stable()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidArgument(format!(
                "warmup fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.batches < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 batches, got {}", self.batches)));
        }
        Ok(model)
    }
}

/// Time fraction spent in one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateFraction {
    pub ell: u64,
    pub k: u8,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub time_avg_l: f64,
    /// 95% batch-means half-width for `time_avg_l`.
    pub ci_halfwidth: f64,
    /// Fraction of measured time with `L = ell`.
    pub occupancy: BTreeMap<u64, f64>,
    pub state_occupancy: Vec<StateFraction>,
    pub region_occupancy: BTreeMap<Region, f64>,
    pub region_ci_halfwidth: BTreeMap<Region, f64>,
    pub idle_fraction: f64,
    pub idle_ci_halfwidth: f64,
    /// Transitions over the whole run, warmup included.
    pub events: u64,
}

/// One transition from `state`: the next state and the holding time.
pub fn step(state: State, model: &Model, rng: &mut impl Rng) -> (State, f64) {
    let t = model.outgoing(state);
    let total = t.total_rate();
    let hold = -(1.0 - rng.random::<f64>()).ln() / total;
    let next = match t.down {
        Some((down, mu)) if rng.random::<f64>() * total < mu => down,
        _ => t.up.0,
    };
    (next, hold)
}

/// Per-batch integrals.
#[derive(Debug, Clone, Copy, Default)]
struct Batch {
    area: f64,
    idle: f64,
    regions: [f64; 4],
}

fn region_index(r: Region) -> usize {
    match r {
        Region::S11 => 0,
        Region::S21 => 1,
        Region::S12 => 2,
        Region::S22 => 3,
    }
}

struct Accumulator {
    start: f64,
    batch_len: f64,
    batches: Vec<Batch>,
    /// Time in `(ell, k)`, indexed `[k - 1][ell]`.
    state_time: [Vec<f64>; 2],
}

impl Accumulator {
    /// Credits `[t0, t1)` spent in `s`, splitting across batch boundaries.
    fn add(&mut self, s: State, region: Region, mut t0: f64, t1: f64) {
        t0 = t0.max(self.start);
        if t1 <= t0 {
            return;
        }
        let row = &mut self.state_time[(s.k - 1) as usize];
        if row.len() <= s.ell as usize {
            row.resize(s.ell as usize + 1, 0.0);
        }
        row[s.ell as usize] += t1 - t0;
        let last = self.batches.len() - 1;
        while t0 < t1 {
            let b = (((t0 - self.start) / self.batch_len) as usize).min(last);
            let edge = if b == last {
                t1
            } else {
                (self.start + (b + 1) as f64 * self.batch_len).min(t1)
            };
            let dt = edge - t0;
            let batch = &mut self.batches[b];
            batch.area += dt * s.ell as f64;
            if s.ell == 0 {
                batch.idle += dt;
            }
            batch.regions[region_index(region)] += dt;
            t0 = edge;
        }
    }
}

/// Mean and 95% Student-t half-width of `samples`.
fn mean_and_halfwidth(samples: &[f64], t_quantile: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, t_quantile * (var / n).sqrt())
}

pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    let model = cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = cfg.warmup_fraction * cfg.horizon;
    let mut acc = Accumulator {
        start,
        batch_len: (cfg.horizon - start) / cfg.batches as f64,
        batches: vec![Batch::default(); cfg.batches as usize],
        state_time: [Vec::new(), Vec::new()],
    };

    let mut state = State::new(0, 1);
    let mut region = model.region_of(state)?;
    let mut now = 0.0;
    let mut events = 0u64;
    while now < cfg.horizon {
        let (next, hold) = step(state, &model, &mut rng);
        let until = (now + hold).min(cfg.horizon);
        acc.add(state, region, now, until);
        now += hold;
        if now < cfg.horizon {
            state = next;
            region = model.region_of(state)?;
            events += 1;
        }
    }

    let measured = cfg.horizon - start;
    let t = StudentsT::new(0.0, 1.0, (cfg.batches - 1) as f64)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .inverse_cdf(0.975);
    let per_batch = |f: &dyn Fn(&Batch) -> f64| -> Vec<f64> {
        acc.batches.iter().map(|b| f(b) / acc.batch_len).collect()
    };
    let (_, ci_halfwidth) = mean_and_halfwidth(&per_batch(&|b| b.area), t);
    let (_, idle_ci_halfwidth) = mean_and_halfwidth(&per_batch(&|b| b.idle), t);

    let total_area: f64 = acc.batches.iter().map(|b| b.area).sum();
    let mut region_occupancy = BTreeMap::new();
    let mut region_ci_halfwidth = BTreeMap::new();
    for r in Region::ALL {
        let i = region_index(r);
        let time: f64 = acc.batches.iter().map(|b| b.regions[i]).sum();
        region_occupancy.insert(r, time / measured);
        region_ci_halfwidth.insert(r, mean_and_halfwidth(&per_batch(&|b| b.regions[i]), t).1);
    }

    let mut occupancy = BTreeMap::new();
    let mut state_occupancy = Vec::new();
    let longest = acc.state_time.iter().map(Vec::len).max().unwrap_or(0);
    for ell in 0..longest {
        for k in [1u8, 2] {
            if let Some(&time) = acc.state_time[(k - 1) as usize].get(ell) {
                if time > 0.0 {
                    let fraction = time / measured;
                    *occupancy.entry(ell as u64).or_insert(0.0) += fraction;
                    state_occupancy.push(StateFraction {
                        ell: ell as u64,
                        k,
                        fraction,
                    });
                }
            }
        }
    }
    let idle_fraction = occupancy.get(&0).copied().unwrap_or(0.0);

    Ok(SimResult {
        time_avg_l: total_area / measured,
        ci_halfwidth,
        occupancy,
        state_occupancy,
        region_occupancy,
        region_ci_halfwidth,
        idle_fraction,
        idle_ci_halfwidth,
        events,
    })
}

/// Region time fractions with their 95% half-widths.
pub fn estimate_regions(cfg: &SimConfig) -> Result<BTreeMap<Region, (f64, f64)>> {
    let r = simulate(cfg)?;
    Ok(Region::ALL
        .iter()
        .map(|reg| (*reg, (r.region_occupancy[reg], r.region_ci_halfwidth[reg])))
        .collect())
}

/// Independent replications, one per seed, returned in seed order.
pub fn simulate_seeds(base: &SimConfig, seeds: &[u64]) -> Result<Vec<SimResult>> {
    seeds
        .par_iter()
        .map(|&seed| simulate(&SimConfig { seed, ..*base }))
        .collect()
}
