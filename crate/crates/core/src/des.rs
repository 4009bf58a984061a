//! Discrete-event simulation of the non-preemptive accumulating-priority
//! queue with compound Poisson inputs.
//!
//! Jobs arrive as a superposition of Poisson streams, one per class, and a
//! unit-rate server dispatches at each completion the waiting job with the
//! largest accumulated priority `b_i (now - arrival)`. Within a class the
//! oldest job always leads, so dispatch compares head-of-line jobs only.
//!
//! Besides job waits the run records the workload `W(s-)` seen by every
//! arrival, which feeds the particle-level estimators.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::ApModel;
use crate::error::{Error, Result};
use crate::levy::{sampling, Component, JumpDist};
use crate::stats::{batch_mean_estimate, batch_ratio_estimate, quantile_sorted, sorted_copy, Estimate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub class: usize,
    pub arrival: f64,
    pub size: f64,
    pub start: f64,
    /// Total work in the system just before the arrival.
    pub workload_before: f64,
}

impl Job {
    pub fn wait(&self) -> f64 {
        self.start - self.arrival
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesConfig {
    /// Jobs simulated, warmup included.
    pub num_jobs: usize,
    /// Jobs discarded from statistics; `None` uses 10% of the run with a
    /// floor of 10^4 (but never more than half the run).
    pub warmup: Option<usize>,
    pub seed: u64,
    pub allow_unstable: bool,
}

impl Default for DesConfig {
    fn default() -> Self {
        Self {
            num_jobs: 1_000_000,
            warmup: None,
            seed: 42,
            allow_unstable: false,
        }
    }
}

impl DesConfig {
    pub fn warmup_jobs(&self) -> usize {
        self.warmup
            .unwrap_or_else(|| (self.num_jobs / 10).max(10_000).min(self.num_jobs / 2))
    }
}

#[derive(Debug, Clone)]
pub struct DesResult {
    pub model: ApModel,
    /// All jobs in arrival order.
    pub jobs: Vec<Job>,
    pub warmup: usize,
}

/// Class-level arrival law: rate and job-size mixture.
#[derive(Debug, Clone)]
struct ClassStream {
    rate: f64,
    parts: Vec<(f64, JumpDist)>,
}

impl ClassStream {
    fn sample_size<G: Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        let mut u = rng.random::<f64>() * self.rate;
        for (rate, dist) in &self.parts {
            if u < *rate {
                return dist.sample(rng);
            }
            u -= rate;
        }
        self.parts.last().expect("nonempty stream").1.sample(rng)
    }
}

fn class_streams(model: &ApModel) -> Result<Vec<ClassStream>> {
    (0..model.num_classes())
        .map(|i| {
            let spec = model.input(i);
            if !spec.is_compound_poisson() {
                return Err(Error::Unsupported(format!(
                    "class {i}: the event simulator needs pure compound Poisson input"
                )));
            }
            let parts = spec
                .components()
                .iter()
                .filter_map(|c| match c {
                    Component::CompoundPoisson { rate, jumps } => Some((*rate, jumps.clone())),
                    _ => None,
                })
                .collect();
            Ok(ClassStream {
                rate: spec.jump_rate(),
                parts,
            })
        })
        .collect()
}

struct Server<'a> {
    b: &'a [f64],
    queues: Vec<VecDeque<usize>>,
    queued: usize,
    queued_work: f64,
    busy_until: f64,
}

impl Server<'_> {
    /// Starts the highest-priority waiting job at `now`.
    fn dispatch(&mut self, now: f64, jobs: &mut [Job]) {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, q) in self.queues.iter().enumerate() {
            let Some(&j) = q.front() else { continue };
            let arrival = jobs[j].arrival;
            let prio = self.b[i] * (now - arrival);
            let better = match best {
                None => true,
                Some((_, p, a)) => prio > p || (prio == p && arrival < a),
            };
            if better {
                best = Some((i, prio, arrival));
            }
        }
        let (class, _, _) = best.expect("dispatch with an empty queue");
        let j = self.queues[class].pop_front().expect("nonempty queue");
        jobs[j].start = now;
        self.busy_until = now + jobs[j].size;
        self.queued -= 1;
        self.queued_work -= jobs[j].size;
        if self.queued == 0 {
            self.queued_work = 0.0;
        }
    }
}

/// Runs one simulation. Arrival epochs, classes and sizes depend only on the
/// seed and the class inputs, not on the `b` values.
pub fn run_des(model: &ApModel, cfg: &DesConfig) -> Result<DesResult> {
    if cfg.num_jobs == 0 {
        return Err(Error::Parameter("num_jobs must be positive".into()));
    }
    let warmup = cfg.warmup_jobs();
    if warmup >= cfg.num_jobs {
        return Err(Error::Parameter(format!(
            "warmup {warmup} leaves no jobs out of {}",
            cfg.num_jobs
        )));
    }
    if !model.is_stable() && !cfg.allow_unstable {
        return Err(Error::Unstable { rho: model.rho() });
    }
    let streams = class_streams(model)?;
    let total_rate: f64 = streams.iter().map(|s| s.rate).sum();
    let b: Vec<f64> = (0..model.num_classes()).map(|i| model.b(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut jobs: Vec<Job> = Vec::with_capacity(cfg.num_jobs);
    let mut server = Server {
        b: &b,
        queues: vec![VecDeque::new(); model.num_classes()],
        queued: 0,
        queued_work: 0.0,
        busy_until: 0.0,
    };
    let mut now = 0.0;
    for _ in 0..cfg.num_jobs {
        now += sampling::standard_exponential(&mut rng) / total_rate;
        let mut u = rng.random::<f64>() * total_rate;
        let mut class = streams.len() - 1;
        for (i, s) in streams.iter().enumerate() {
            if u < s.rate {
                class = i;
                break;
            }
            u -= s.rate;
        }
        let size = streams[class].sample_size(&mut rng);
        while server.queued > 0 && server.busy_until <= now {
            let at = server.busy_until;
            server.dispatch(at, &mut jobs);
        }
        let workload_before = (server.busy_until - now).max(0.0) + server.queued_work;
        let id = jobs.len();
        jobs.push(Job {
            class,
            arrival: now,
            size,
            start: f64::NAN,
            workload_before,
        });
        if server.queued == 0 && server.busy_until <= now {
            jobs[id].start = now;
            server.busy_until = now + size;
        } else {
            server.queues[class].push_back(id);
            server.queued += 1;
            server.queued_work += size;
        }
    }
    while server.queued > 0 {
        let at = server.busy_until;
        server.dispatch(at, &mut jobs);
    }
    Ok(DesResult {
        model: model.clone(),
        jobs,
        warmup,
    })
}

/// Independent replications; replication `r` is seeded from stream `r` of
/// the base seed.
pub fn run_des_replications(model: &ApModel, cfg: &DesConfig, reps: usize) -> Result<Vec<DesResult>> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut base = ChaCha8Rng::seed_from_u64(cfg.seed);
            base.set_stream(r as u64);
            run_des(model, &DesConfig { seed: base.random(), ..cfg.clone() })
        })
        .collect()
}

impl DesResult {
    /// Jobs after the warmup.
    pub fn measured(&self) -> &[Job] {
        &self.jobs[self.warmup..]
    }

    pub fn waits(&self, class: usize) -> Vec<f64> {
        self.measured()
            .iter()
            .filter(|j| j.class == class)
            .map(Job::wait)
            .collect()
    }

    pub fn workloads_before(&self) -> Vec<f64> {
        self.measured().iter().map(|j| j.workload_before).collect()
    }

    /// Batch-means estimate of `E exp(-alpha W)` over one class's job waits.
    pub fn wait_lst(&self, class: usize, alpha: f64) -> Estimate {
        let v: Vec<f64> = self.waits(class).iter().map(|w| (-alpha * w).exp()).collect();
        batch_mean_estimate(&v)
    }

    pub fn mean_wait(&self, class: usize) -> Estimate {
        batch_mean_estimate(&self.waits(class))
    }

    /// Fraction of a class's jobs that did not wait.
    pub fn no_wait_probability(&self, class: usize) -> Estimate {
        let v: Vec<f64> = self
            .waits(class)
            .iter()
            .map(|&w| if w == 0.0 { 1.0 } else { 0.0 })
            .collect();
        batch_mean_estimate(&v)
    }

    /// Writes one row per measured job.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "job,class,arrival,size,wait,workload_before")?;
        for (i, j) in self.measured().iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                i + self.warmup,
                j.class,
                j.arrival,
                j.size,
                j.wait(),
                j.workload_before
            )?;
        }
        Ok(())
    }
}

/// Estimates of `E exp(-alpha (content in front of a particle))` for the
/// particles of one stream (`None` pools every class).
///
/// Each job contributes `int_0^X exp(-alpha (W + x)) dx`, in closed form
/// `exp(-alpha W) (1 - exp(-alpha X)) / alpha`, and the estimate is the sum of
/// contributions over the total work.
pub fn tagged_particle_stats(result: &DesResult, alpha_grid: &[f64], stream: Option<usize>) -> Vec<(f64, Estimate)> {
    let jobs: Vec<&Job> = result
        .measured()
        .iter()
        .filter(|j| stream.is_none_or(|s| j.class == s))
        .collect();
    let sizes: Vec<f64> = jobs.iter().map(|j| j.size).collect();
    alpha_grid
        .iter()
        .map(|&alpha| {
            if alpha == 0.0 {
                return (alpha, Estimate { value: 1.0, std_error: 0.0, n: jobs.len() });
            }
            let num: Vec<f64> = jobs
                .iter()
                .map(|j| (-alpha * j.workload_before).exp() * -(-alpha * j.size).exp_m1() / alpha)
                .collect();
            (alpha, batch_ratio_estimate(&num, &sizes))
        })
        .collect()
}

/// Waiting time of one particle of a tagged-class job.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleSample {
    pub job: usize,
    /// Work of the same job in front of the particle.
    pub offset: f64,
    pub wait: f64,
    /// Sampling weight: the job size (particles are size-biased).
    pub weight: f64,
}

/// One particle per measured tagged-class job, at a uniform offset inside
/// the job.
///
/// The particle waits for the job's head, then for the first passage of its
/// offset against the overtaking arrivals that follow. A class-`i` arrival
/// at time `r` after the job's arrival `s` overtakes the particle at
/// particle-clock time `(r - s) / a_i`; those before `a_i w` already counted
/// toward the head's wait `w`. Jobs whose passage runs past the simulated
/// arrivals are skipped.
pub fn particle_wait_samples<G: Rng + ?Sized>(result: &DesResult, rng: &mut G) -> Vec<ParticleSample> {
    let model = &result.model;
    let tagged = model.tagged();
    let overtakers: Vec<(usize, f64)> = model
        .deceleration()
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(i, &a)| (i, a))
        .collect();
    let by_class: Vec<Vec<usize>> = overtakers
        .iter()
        .map(|&(i, _)| (0..result.jobs.len()).filter(|&j| result.jobs[j].class == i).collect())
        .collect();
    let mut out = Vec::new();
    let mut cursors = vec![0usize; overtakers.len()];
    for id in result.warmup..result.jobs.len() {
        let job = result.jobs[id];
        if job.class != tagged {
            continue;
        }
        let offset = rng.random::<f64>() * job.size;
        let w = job.wait();
        // first arrival of each class beyond its window [s, s + a_i w)
        for (c, &(_, a)) in overtakers.iter().enumerate() {
            let list = &by_class[c];
            let edge = job.arrival + a * w;
            cursors[c] = list.partition_point(|&j| result.jobs[j].arrival < edge);
        }
        let epoch = |c: usize, k: usize| -> Option<f64> {
            by_class[c]
                .get(k)
                .map(|&j| (result.jobs[j].arrival - job.arrival) / overtakers[c].1 - w)
        };
        let mut t = 0.0;
        let mut left = offset;
        let mut complete = true;
        loop {
            let mut next: Option<(usize, f64)> = None;
            for c in 0..overtakers.len() {
                match epoch(c, cursors[c]) {
                    Some(e) if next.is_none_or(|(_, n)| e < n) => next = Some((c, e)),
                    Some(_) => {}
                    // past the simulated arrivals the passage is unknown
                    None => complete = false,
                }
            }
            if !complete {
                break;
            }
            match next {
                Some((c, e)) if e < t + left => {
                    left -= e - t;
                    t = e;
                    left += result.jobs[by_class[c][cursors[c]]].size;
                    cursors[c] += 1;
                }
                _ => {
                    t += left;
                    break;
                }
            }
        }
        if complete {
            out.push(ParticleSample {
                job: id,
                offset,
                wait: w + t,
                weight: job.size,
            });
        }
    }
    out
}

/// Size-weighted estimate of `E exp(-alpha W)` over particle samples.
pub fn particle_lst(samples: &[ParticleSample], alpha: f64) -> Estimate {
    let num: Vec<f64> = samples.iter().map(|s| s.weight * (-alpha * s.wait).exp()).collect();
    let den: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    batch_ratio_estimate(&num, &den)
}

/// Size-weighted mean particle wait.
pub fn particle_mean(samples: &[ParticleSample]) -> Estimate {
    let num: Vec<f64> = samples.iter().map(|s| s.weight * s.wait).collect();
    let den: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    batch_ratio_estimate(&num, &den)
}

/// Size-weighted empirical CDF of particle waits at `t`.
pub fn particle_cdf(samples: &[ParticleSample], t: f64) -> Estimate {
    let num: Vec<f64> = samples
        .iter()
        .map(|s| if s.wait <= t { s.weight } else { 0.0 })
        .collect();
    let den: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    batch_ratio_estimate(&num, &den)
}

/// Size-weighted empirical quantile of particle waits.
pub fn particle_quantile(samples: &[ParticleSample], p: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.wait, s.weight)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for (w, weight) in &pairs {
        acc += weight;
        if acc >= p * total {
            return *w;
        }
    }
    pairs.last().map_or(f64::NAN, |p| p.0)
}

/// Checks by replay that every dispatch chose a job of maximal accumulated
/// priority, that the server never idled with work waiting, and that each
/// class was served in arrival order.
pub fn audit_dispatch(result: &DesResult) -> std::result::Result<(), String> {
    let model = &result.model;
    let n = result.jobs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        result.jobs[x]
            .start
            .total_cmp(&result.jobs[y].start)
            .then(x.cmp(&y))
    });
    let mut waiting: Vec<VecDeque<usize>> = vec![VecDeque::new(); model.num_classes()];
    let mut next_arrival = 0;
    let mut free_at = 0.0f64;
    for &j in &order {
        let job = result.jobs[j];
        let s = job.start;
        if !(s >= job.arrival) {
            return Err(format!("job {j} starts before it arrives"));
        }
        if s < free_at - 1e-9 * free_at.max(1.0) {
            return Err(format!("job {j} starts while the server is busy"));
        }
        while next_arrival < n && (result.jobs[next_arrival].arrival < s || next_arrival == j) {
            let a = result.jobs[next_arrival];
            waiting[a.class].push_back(next_arrival);
            next_arrival += 1;
        }
        if s > job.arrival && s > free_at + 1e-9 * free_at.max(1.0) {
            return Err(format!("server idled before job {j} although it was waiting"));
        }
        if waiting[job.class].front() != Some(&j) {
            return Err(format!("job {j} overtook an older job of its class"));
        }
        let own = model.b(job.class) * (s - job.arrival);
        for (c, q) in waiting.iter().enumerate() {
            if let Some(&h) = q.front() {
                let other = model.b(c) * (s - result.jobs[h].arrival);
                if other > own + 1e-12 * own.abs().max(1.0) {
                    return Err(format!(
                        "job {j} (priority {own}) dispatched ahead of job {h} (priority {other})"
                    ));
                }
            }
        }
        waiting[job.class].pop_front();
        free_at = s + job.size;
    }
    Ok(())
}

/// Largest gap between the recorded `W(s-)` and the Lindley recursion
/// `V_n = max(V_{n-1} + X_{n-1} - (s_n - s_{n-1}), 0)` on the same arrivals,
/// relative to `max(1, V_n)`.
pub fn lindley_discrepancy(result: &DesResult) -> f64 {
    let mut v = 0.0f64;
    let mut worst = 0.0f64;
    for (n, job) in result.jobs.iter().enumerate() {
        if n > 0 {
            let prev = result.jobs[n - 1];
            v = (v + prev.size - (job.arrival - prev.arrival)).max(0.0);
        }
        worst = worst.max((v - job.workload_before).abs() / v.max(1.0));
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassSummary {
    pub class: usize,
    pub jobs: usize,
    pub mean_wait: Estimate,
    pub variance: f64,
    pub no_wait: Estimate,
    pub quantiles: Vec<(f64, f64)>,
    pub lst: Vec<(f64, Estimate)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesSummary {
    pub jobs_simulated: usize,
    pub warmup_discarded: usize,
    pub classes: Vec<ClassSummary>,
    /// Aggregate-stream content in front of a particle.
    pub particle_content_lst: Vec<(f64, Estimate)>,
    pub tagged_particle_mean: Estimate,
    pub tagged_particle_lst: Vec<(f64, Estimate)>,
}

pub fn summarize(
    result: &DesResult,
    particles: &[ParticleSample],
    alpha_grid: &[f64],
    quantile_levels: &[f64],
) -> DesSummary {
    let classes = (0..result.model.num_classes())
        .map(|c| {
            let waits = result.waits(c);
            let sorted = sorted_copy(&waits);
            let mean = batch_mean_estimate(&waits);
            let variance = if waits.len() > 1 {
                waits.iter().map(|w| (w - mean.value).powi(2)).sum::<f64>() / (waits.len() - 1) as f64
            } else {
                f64::NAN
            };
            ClassSummary {
                class: c,
                jobs: waits.len(),
                mean_wait: mean,
                variance,
                no_wait: result.no_wait_probability(c),
                quantiles: quantile_levels.iter().map(|&p| (p, quantile_sorted(&sorted, p))).collect(),
                lst: alpha_grid.iter().map(|&a| (a, result.wait_lst(c, a))).collect(),
            }
        })
        .collect();
    DesSummary {
        jobs_simulated: result.jobs.len(),
        warmup_discarded: result.warmup,
        classes,
        particle_content_lst: tagged_particle_stats(result, alpha_grid, None),
        tagged_particle_mean: particle_mean(particles),
        tagged_particle_lst: alpha_grid.iter().map(|&a| (a, particle_lst(particles, a))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{fixtures, w0_lst, wn_lst, ApClass};
    use crate::levy::{excess_lst, SubordinatorSpec};
    use crate::stats::ks_two_sample;

    fn cfg(n: usize, seed: u64) -> DesConfig {
        DesConfig { num_jobs: n, warmup: None, seed, allow_unstable: false }
    }

    fn fifo_m1() -> ApModel {
        ApModel::new(vec![
            ApClass { b: 1.0, input: fixtures::cp_exp(0.3) },
            ApClass { b: 1.0, input: fixtures::cp_exp(0.3) },
        ])
        .unwrap()
    }

    #[test]
    fn rejects_unsupported_and_unstable() {
        assert!(matches!(run_des(&fixtures::m2(), &cfg(1000, 1)), Err(Error::Unsupported(_))));
        let hot = ApModel::new(vec![
            ApClass { b: 2.0, input: fixtures::cp_exp(0.6) },
            ApClass { b: 1.0, input: fixtures::cp_exp(0.6) },
        ])
        .unwrap();
        assert!(matches!(run_des(&hot, &cfg(1000, 1)), Err(Error::Unstable { .. })));
        let over = DesConfig { allow_unstable: true, ..cfg(1000, 1) };
        assert!(run_des(&hot, &over).is_ok());
    }

    #[test]
    fn default_warmup() {
        assert_eq!(cfg(1_000_000, 0).warmup_jobs(), 100_000);
        assert_eq!(cfg(50_000, 0).warmup_jobs(), 10_000);
        assert_eq!(cfg(1000, 0).warmup_jobs(), 500);
    }

    #[test]
    fn fifo_mean_matches_pollaczek_khinchine() {
        let r = run_des(&fifo_m1(), &cfg(400_000, 3)).unwrap();
        let all: Vec<f64> = r.measured().iter().map(Job::wait).collect();
        let est = batch_mean_estimate(&all);
        assert!(est.within(1.5, 3.0, 0.0), "{est:?}");
        // FIFO: starts follow arrivals
        assert!(r.jobs.windows(2).all(|w| w[0].start <= w[1].start));
    }

    #[test]
    fn invariants_on_m1() {
        let r = run_des(&fixtures::m1(), &cfg(200_000, 5)).unwrap();
        audit_dispatch(&r).unwrap();
        assert!(lindley_discrepancy(&r) < 1e-9);
        assert!(r.jobs.iter().all(|j| j.start >= j.arrival));
        let p0 = r.no_wait_probability(1);
        assert!(p0.within(0.4, 3.0, 0.0), "{p0:?}");
        assert!(r.mean_wait(1).value > 1.5);
    }

    #[test]
    fn swapping_b_keeps_pooled_workload() {
        let m = fixtures::m1();
        let swapped = ApModel::new(vec![
            ApClass { b: 1.0, input: fixtures::cp_exp(0.3) },
            ApClass { b: 2.0, input: fixtures::cp_exp(0.3) },
        ])
        .unwrap();
        let a = run_des(&m, &cfg(100_000, 9)).unwrap();
        let b = run_des(&swapped, &cfg(100_000, 9)).unwrap();
        let (wa, wb) = (a.workloads_before(), b.workloads_before());
        let (_, p) = ks_two_sample(&wa, &wb);
        assert!(p > 1e-3);
        assert!(wa.iter().zip(&wb).all(|(x, y)| (x - y).abs() <= 1e-9 * x.max(1.0)));
        assert_ne!(a.waits(0), b.waits(0));
    }

    #[test]
    fn particle_content_limits() {
        let r = run_des(&fixtures::m1(), &cfg(50_000, 2)).unwrap();
        let est = tagged_particle_stats(&r, &[0.0, 1e-9], None);
        assert_eq!(est[0].1.value, 1.0);
        assert!((est[1].1.value - 1.0).abs() < 1e-8);

        // nearly empty system: W = 0 for almost all arrivals
        let sparse = ApModel::new(vec![ApClass { b: 1.0, input: fixtures::cp_exp(1e-4) }]).unwrap();
        let r = run_des(&sparse, &cfg(50_000, 4)).unwrap();
        let est = tagged_particle_stats(&r, &[1.0], Some(0))[0].1;
        let spec = sparse.input(0);
        assert!(est.within(excess_lst(spec, 1.0).unwrap(), 4.0, 1e-3), "{est:?}");
    }

    #[test]
    fn tiny_jobs_have_particle_wait_equal_job_wait() {
        let tiny = |rate| SubordinatorSpec::compound_poisson(rate, JumpDist::Deterministic { size: 1e-9 }).unwrap();
        let m = ApModel::new(vec![
            ApClass { b: 2.0, input: fixtures::cp_exp(0.3) },
            ApClass { b: 1.0, input: tiny(0.3) },
        ])
        .unwrap();
        let r = run_des(&m, &cfg(20_000, 8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ps = particle_wait_samples(&r, &mut rng);
        assert!(ps.len() > 1000);
        for p in &ps {
            let job = r.jobs[p.job];
            assert!((p.wait - job.wait()).abs() <= 1e-9);
        }
    }

    #[test]
    fn fifo_particles_see_workload_plus_excess() {
        let m = fifo_m1();
        let r = run_des(&m, &cfg(300_000, 12)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ps = particle_wait_samples(&r, &mut rng);
        let tagged = m.input(m.tagged());
        for &a in &[0.5, 1.0] {
            let est = particle_lst(&ps, a);
            let exact = w0_lst(&m, a).unwrap().value * excess_lst(tagged, a).unwrap();
            assert!(est.within(exact, 3.0, 0.0), "alpha {a}: {est:?} vs {exact}");
        }
    }

    #[test]
    fn m1_particles_match_wn_lst() {
        let m = fixtures::m1();
        let r = run_des(&m, &cfg(400_000, 21)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ps = particle_wait_samples(&r, &mut rng);
        let est = particle_lst(&ps, 1.0);
        let exact = wn_lst(&m, 1.0).unwrap().value;
        assert!(est.within(exact, 3.0, 0.0), "{est:?} vs {exact}");
    }

    #[test]
    fn deterministic_given_seed_and_csv() {
        let m = fixtures::m1();
        let a = run_des(&m, &cfg(30_000, 77)).unwrap();
        let b = run_des(&m, &cfg(30_000, 77)).unwrap();
        assert_eq!(a.jobs, b.jobs);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("job,class,arrival,size,wait,workload_before\n"));
        assert_eq!(text.lines().count(), 1 + a.measured().len());
        let reps = run_des_replications(&m, &cfg(30_000, 77), 3).unwrap();
        assert_eq!(reps.len(), 3);
        assert_ne!(reps[0].jobs, reps[1].jobs);
    }
}
