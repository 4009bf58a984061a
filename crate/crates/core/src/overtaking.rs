//! Monte Carlo for the overtaking first passage of a tagged particle.
//!
//! A tagged particle that finds `v` units of work in front of it is overtaken
//! by the decelerated input `J_a(t) = sum_i J_i(a_i t)`, where `t` is measured
//! on the tagged particle's own clock. Its wait is
//! `T = inf{t >= 0 : v + J_a(t) - t = 0}`, the limit of the nondecreasing
//! recursion `T_0 = v`, `T_{n+1} = v + J_a(T_n)`. `K` counts the strict
//! increments of that recursion.
//!
//! Two simulators are provided. The exact one depletes the workload of a
//! compound Poisson (plus drift) overtaking input event by event. The grid
//! one samples `J_a` increments on a time grid and works for any input,
//! with an `O(h)` bias from missed crossings inside a step.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::ApModel;
use crate::error::{Error, Result};
use crate::inversion::QuantileSampler;
use crate::levy::{grid_steps, sampling, Component, JumpDist, SubordinatorSpec};
use crate::stats::{mean_estimate, Estimate};

/// Replications per generator stream. Stream `c` of the seeded generator
/// drives replications `c * CHUNK .. (c + 1) * CHUNK`, so results do not
/// depend on the number of worker threads.
pub const CHUNK: usize = 1024;

/// Number of strict increments of the `T_n` recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KCount {
    Finite(u64),
    Infinite,
    /// Not observable on a grid for a finite-activity overtaker.
    Unobserved,
}

impl fmt::Display for KCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KCount::Finite(k) => write!(f, "{k}"),
            KCount::Infinite => f.write_str("inf"),
            KCount::Unobserved => f.write_str("NA"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FptSample {
    pub t: f64,
    pub k: KCount,
    /// `T_0, T_1, ...` up to the configured prefix length.
    pub tn_prefix: Vec<f64>,
    /// The crossing was not reached before the horizon; `t` is the horizon.
    pub censored: bool,
    /// Jumps (exact mode) or grid steps (grid mode) simulated.
    pub steps: u64,
    /// Grid steps whose `J_a` increment was exactly zero.
    pub zero_increment_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FptConfig {
    pub v: f64,
    pub replications: usize,
    /// Grid step `h` (grid mode only).
    pub grid_step: f64,
    /// Censoring horizon as a multiple of the mean first passage.
    pub horizon_multiplier: f64,
    pub seed: u64,
    pub prefix_len: usize,
}

impl Default for FptConfig {
    fn default() -> Self {
        Self {
            v: 1.0,
            replications: 10_000,
            grid_step: 1e-3,
            horizon_multiplier: 50.0,
            seed: 42,
            prefix_len: 8,
        }
    }
}

impl FptConfig {
    fn validate(&self, grid: bool) -> Result<()> {
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(Error::Parameter(format!("v must be finite and >= 0, got {}", self.v)));
        }
        if self.replications == 0 {
            return Err(Error::Parameter("replications must be positive".into()));
        }
        if !(self.horizon_multiplier >= 10.0) {
            return Err(Error::Parameter(format!(
                "horizon multiplier must be >= 10, got {}",
                self.horizon_multiplier
            )));
        }
        if grid {
            let h = self.grid_step;
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Parameter(format!("grid step must be positive, got {h}")));
            }
            if self.v > 0.0 && h > self.v / 10.0 {
                return Err(Error::Parameter(format!(
                    "grid step {h} is too coarse for v = {} (need h <= v/10)",
                    self.v
                )));
            }
        }
        Ok(())
    }
}

/// Initial work in front of the tagged particle.
#[derive(Debug, Clone, Copy)]
pub enum InitialWork<'a> {
    Fixed(f64),
    /// Drawn per replication by inverse-CDF sampling.
    Sampled(&'a QuantileSampler),
}

/// The decelerated overtaking input of a model, ready for simulation.
#[derive(Debug, Clone)]
pub struct Overtaker {
    spec: SubordinatorSpec,
    drift: f64,
    load: f64,
    jump_rate: f64,
    jumps: Vec<(f64, JumpDist)>,
    infinite_activity: bool,
}

impl Overtaker {
    pub fn from_model(model: &ApModel) -> Result<Self> {
        Self::new(model.overtaking_input())
    }

    pub fn new(spec: SubordinatorSpec) -> Result<Self> {
        let load = spec.mean_rate();
        if !(load < 1.0) {
            return Err(Error::Parameter(format!(
                "overtaking load {load} must be < 1 for a finite first passage"
            )));
        }
        let jumps: Vec<(f64, JumpDist)> = spec
            .components()
            .iter()
            .filter_map(|c| match c {
                Component::CompoundPoisson { rate, jumps } => Some((*rate, jumps.clone())),
                _ => None,
            })
            .collect();
        Ok(Self {
            drift: spec.drift(),
            jump_rate: spec.jump_rate(),
            infinite_activity: spec.has_infinite_activity(),
            load,
            jumps,
            spec,
        })
    }

    pub fn spec(&self) -> &SubordinatorSpec {
        &self.spec
    }

    /// `sum_i a_i rho_i`.
    pub fn load(&self) -> f64 {
        self.load
    }

    /// Total jump rate `Lambda_a` of the compound Poisson part.
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    pub fn mean_passage(&self, v: f64) -> f64 {
        v / (1.0 - self.load)
    }

    fn sample_jump<G: Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        let mut u = rng.random::<f64>() * self.jump_rate;
        for (rate, dist) in &self.jumps {
            if u < *rate {
                return dist.sample(rng);
            }
            u -= rate;
        }
        self.jumps.last().expect("at least one jump component").1.sample(rng)
    }

    /// Exact first passage from `v`; the overtaker must have finite activity.
    ///
    /// Random numbers are consumed in a fixed order (gap, then size, per
    /// jump), so runs with a common seed share one path of `J_a` and are
    /// coupled across different `v`.
    pub fn exact_passage<G: Rng + ?Sized>(&self, v: f64, prefix_len: usize, rng: &mut G) -> FptSample {
        let slope = 1.0 - self.drift;
        let mut t = 0.0;
        let mut x = v;
        let mut times = Vec::new();
        let mut partial = vec![0.0];
        while x > 0.0 {
            let gap = if self.jump_rate > 0.0 {
                sampling::standard_exponential(rng) / self.jump_rate
            } else {
                f64::INFINITY
            };
            let empty = x / slope;
            if empty <= gap {
                t += empty;
                break;
            }
            t += gap;
            x -= slope * gap;
            let size = self.sample_jump(rng);
            x += size;
            times.push(t);
            partial.push(partial.last().unwrap() + size);
        }
        let jumps_before = |s: f64| times.partition_point(|&tau| tau <= s);

        let mut tn_prefix = Vec::with_capacity(prefix_len);
        let k = if v == 0.0 {
            tn_prefix.resize(prefix_len, 0.0);
            KCount::Finite(0)
        } else if self.drift > 0.0 {
            let mut tn = v;
            for _ in 0..prefix_len {
                tn_prefix.push(tn);
                tn = v + self.drift * tn + partial[jumps_before(tn)];
            }
            KCount::Infinite
        } else {
            // T_n = v + S(T_{n-1}); it moves exactly when new jumps are covered
            let mut level = 0;
            let mut k = 0;
            loop {
                if tn_prefix.len() < prefix_len {
                    tn_prefix.push(v + partial[level]);
                }
                let next = jumps_before(v + partial[level]);
                if next == level {
                    break;
                }
                k += 1;
                level = next;
            }
            let last = v + partial[level];
            tn_prefix.resize(prefix_len, last);
            KCount::Finite(k)
        };
        FptSample {
            t,
            k,
            tn_prefix,
            censored: false,
            steps: times.len() as u64,
            zero_increment_steps: 0,
        }
    }

    fn grid_k(&self, v: f64) -> KCount {
        if v == 0.0 {
            KCount::Finite(0)
        } else if self.infinite_activity || self.drift > 0.0 {
            KCount::Infinite
        } else {
            KCount::Unobserved
        }
    }

    /// Grid first passage observed at step `h_fine` and, optionally, at the
    /// coarser step `stride * h_fine` on the same path.
    pub fn grid_passage<G: Rng + ?Sized>(
        &self,
        v: f64,
        h_fine: f64,
        horizon: f64,
        stride: usize,
        prefix_len: usize,
        rng: &mut G,
    ) -> (FptSample, FptSample) {
        let k = self.grid_k(v);
        if v == 0.0 {
            let zero = FptSample {
                t: 0.0,
                k,
                tn_prefix: vec![0.0; prefix_len],
                censored: false,
                steps: 0,
                zero_increment_steps: 0,
            };
            return (zero.clone(), zero);
        }
        let slope = 1.0 - self.drift;
        let mut n = grid_steps(horizon, h_fine).max(stride);
        n = n.div_ceil(stride) * stride;
        let mut path = Vec::new();
        if prefix_len > 0 {
            path.push(0.0);
        }
        let mut fine: Option<f64> = None;
        let mut coarse: Option<f64> = None;
        let mut x_prev = v;
        let mut x_coarse_prev = v;
        let mut cum = 0.0;
        let mut zero_steps = 0u64;
        let mut steps = 0u64;
        for step in 1..=n {
            let inc = self.spec.sample_increment_detailed(h_fine, rng);
            steps += 1;
            if !inc.positive {
                zero_steps += 1;
            }
            cum += inc.value;
            if prefix_len > 0 {
                path.push(cum);
            }
            let x = v + cum - step as f64 * h_fine;
            if fine.is_none() && x <= 0.0 {
                fine = Some((step - 1) as f64 * h_fine + x_prev / slope);
            }
            x_prev = x;
            if step % stride == 0 {
                if coarse.is_none() && x <= 0.0 {
                    coarse = Some((step - stride) as f64 * h_fine + x_coarse_prev / slope);
                }
                x_coarse_prev = x;
            }
            if fine.is_some() && coarse.is_some() {
                break;
            }
        }
        let horizon = n as f64 * h_fine;
        let prefix_on = |h: f64, t: f64| {
            // J_a between grid points is read off at the last grid point
            let mut tn = v;
            let mut out = Vec::with_capacity(prefix_len);
            for _ in 0..prefix_len {
                out.push(tn);
                let idx = ((tn.min(t) / h + 1e-9).floor() as usize) * (h / h_fine).round() as usize;
                tn = v + path[idx.min(path.len() - 1)];
            }
            out
        };
        let make = |hit: Option<f64>, h: f64| FptSample {
            t: hit.unwrap_or(horizon),
            k,
            tn_prefix: prefix_on(h, hit.unwrap_or(horizon)),
            censored: hit.is_none(),
            steps,
            zero_increment_steps: zero_steps,
        };
        (make(fine, h_fine), make(coarse, h_fine * stride as f64))
    }
}

fn chunked<T: Send>(
    replications: usize,
    seed: u64,
    run: impl Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let chunks = replications.div_ceil(CHUNK);
    let parts: Vec<Result<Vec<T>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(replications);
            (lo..hi).map(|r| run(r, &mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(replications);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// One exact first-passage sample.
pub fn simulate_fpt_exact<G: Rng + ?Sized>(
    model: &ApModel,
    cfg: &FptConfig,
    rng: &mut G,
) -> Result<FptSample> {
    cfg.validate(false)?;
    let ot = exact_overtaker(model)?;
    Ok(ot.exact_passage(cfg.v, cfg.prefix_len, rng))
}

fn exact_overtaker(model: &ApModel) -> Result<Overtaker> {
    let ot = Overtaker::from_model(model)?;
    if ot.infinite_activity {
        return Err(Error::Unsupported(
            "exact first-passage simulation needs compound Poisson overtaking classes; \
             use grid mode"
                .into(),
        ));
    }
    Ok(ot)
}

/// One grid first-passage sample at step `cfg.grid_step`.
pub fn simulate_fpt_grid<G: Rng + ?Sized>(
    model: &ApModel,
    cfg: &FptConfig,
    rng: &mut G,
) -> Result<FptSample> {
    cfg.validate(true)?;
    let ot = Overtaker::from_model(model)?;
    let horizon = cfg.horizon_multiplier * ot.mean_passage(cfg.v);
    Ok(ot.grid_passage(cfg.v, cfg.grid_step, horizon, 1, cfg.prefix_len, rng).0)
}

/// `cfg.replications` independent exact samples, in replication order.
pub fn run_fpt_exact(model: &ApModel, cfg: &FptConfig) -> Result<Vec<FptSample>> {
    cfg.validate(false)?;
    let ot = exact_overtaker(model)?;
    chunked(cfg.replications, cfg.seed, |_, rng| {
        Ok(ot.exact_passage(cfg.v, cfg.prefix_len, rng))
    })
}

/// `cfg.replications` independent grid samples, in replication order.
pub fn run_fpt_grid(model: &ApModel, cfg: &FptConfig) -> Result<Vec<FptSample>> {
    cfg.validate(true)?;
    let ot = Overtaker::from_model(model)?;
    let horizon = cfg.horizon_multiplier * ot.mean_passage(cfg.v);
    chunked(cfg.replications, cfg.seed, |_, rng| {
        Ok(ot.grid_passage(cfg.v, cfg.grid_step, horizon, 1, cfg.prefix_len, rng).0)
    })
}

/// A grid replication observed at step `h` and at `h / 2` on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub v: f64,
    pub coarse: FptSample,
    pub fine: FptSample,
}

/// Grid replications at `cfg.grid_step` and its half on common paths, for
/// calibrating the discretization bias. With sampled initial work the
/// horizon uses a work scale of at least one unit, since small `v` can still
/// be followed by jumps of unit order.
pub fn run_fpt_grid_paired(
    model: &ApModel,
    cfg: &FptConfig,
    initial: InitialWork<'_>,
) -> Result<Vec<PairedSample>> {
    let fixed = match initial {
        InitialWork::Fixed(v) => Some(v),
        InitialWork::Sampled(_) => None,
    };
    let check = FptConfig {
        v: fixed.unwrap_or(0.0),
        ..cfg.clone()
    };
    check.validate(true)?;
    let ot = Overtaker::from_model(model)?;
    let h = cfg.grid_step;
    chunked(cfg.replications, cfg.seed, |_, rng| {
        let (v, horizon) = match initial {
            InitialWork::Fixed(v) => (v, cfg.horizon_multiplier * ot.mean_passage(v)),
            InitialWork::Sampled(s) => {
                let v = s.sample(rng);
                (v, cfg.horizon_multiplier * ot.mean_passage(v.max(1.0)))
            }
        };
        let (fine, coarse) = ot.grid_passage(v, 0.5 * h, horizon, 2, cfg.prefix_len, rng);
        Ok(PairedSample { v, coarse, fine })
    })
}

/// Estimate of `E exp(-alpha T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LstEstimate {
    pub alpha: f64,
    pub estimate: Estimate,
    pub censored: usize,
    /// Some samples were censored, so their `T` is only a lower bound.
    pub lower_bound: bool,
}

pub fn estimate_lst(samples: &[FptSample], alpha: f64) -> Result<LstEstimate> {
    if samples.is_empty() {
        return Err(Error::Parameter("no samples".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    let values: Vec<f64> = samples.iter().map(|s| (-alpha * s.t).exp()).collect();
    let censored = samples.iter().filter(|s| s.censored).count();
    Ok(LstEstimate {
        alpha,
        estimate: mean_estimate(&values),
        censored,
        lower_bound: censored > 0,
    })
}

pub fn estimate_mean(samples: &[FptSample]) -> Result<Estimate> {
    if samples.is_empty() {
        return Err(Error::Parameter("no samples".into()));
    }
    let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    Ok(mean_estimate(&ts))
}

/// Empirical `P(T_n - T_{n-1} = 0)` next to its lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoOvertakingRow {
    pub n: u64,
    /// Runs whose recursion was still moving before step `n` (`K >= n - 1`).
    pub surviving: usize,
    pub empirical: Estimate,
    /// `exp(-Lambda_a (sum a_i rho_i)^(n-1) v)`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KDistribution {
    pub total: usize,
    pub finite: BTreeMap<u64, usize>,
    pub infinite: usize,
    pub unobserved: usize,
    pub rows: Vec<NoOvertakingRow>,
}

impl KDistribution {
    pub fn mass(&self, k: u64) -> f64 {
        *self.finite.get(&k).unwrap_or(&0) as f64 / self.total as f64
    }
}

/// Empirical law of `K`, plus the no-overtaking table for each `n` up to the
/// largest observed `K + 1`.
pub fn k_distribution(samples: &[FptSample], overtaker: &Overtaker, v: f64) -> KDistribution {
    let mut finite = BTreeMap::new();
    let (mut infinite, mut unobserved) = (0, 0);
    for s in samples {
        match s.k {
            KCount::Finite(k) => *finite.entry(k).or_insert(0) += 1,
            KCount::Infinite => infinite += 1,
            KCount::Unobserved => unobserved += 1,
        }
    }
    let total = samples.len();
    let mut rows = Vec::new();
    if infinite == 0 && unobserved == 0 && total > 0 {
        let max_k = finite.keys().next_back().copied().unwrap_or(0);
        let mut below = 0usize;
        for n in 1..=max_k + 1 {
            let surviving = total - below;
            below += finite.get(&(n - 1)).copied().unwrap_or(0);
            let p = below as f64 / total as f64;
            let se = (p * (1.0 - p) / total as f64).sqrt();
            let bound = (-overtaker.jump_rate * overtaker.load.powi(n as i32 - 1) * v).exp();
            rows.push(NoOvertakingRow {
                n,
                surviving,
                empirical: Estimate { value: p, std_error: se, n: total },
                bound,
            });
        }
    }
    KDistribution {
        total,
        finite,
        infinite,
        unobserved,
        rows,
    }
}

/// Writes `replication,T,K,censored` rows.
pub fn write_samples_csv<W: Write>(out: &mut W, samples: &[FptSample]) -> std::io::Result<()> {
    writeln!(out, "replication,T,K,censored")?;
    for (i, s) in samples.iter().enumerate() {
        writeln!(out, "{i},{},{},{}", s.t, s.k, u8::from(s.censored))?;
    }
    Ok(())
}
