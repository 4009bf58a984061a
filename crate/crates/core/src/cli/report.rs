//! Report structures shared by the subcommands, and the statistic-by-statistic
//! comparison of analytic values against simulation estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, ApModel};
use crate::des::{self, DesConfig};
use crate::error::{Error, Result};
use crate::levy::excess_lst;
use crate::overtaking::{self, FptConfig, FptSample, InitialWork, KCount, Overtaker};
use crate::stats::Estimate;
use crate::VERSION;

/// One scalar quantity, keyed by name and its optional `alpha` and `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    /// Extra tolerance for a known bias (grid discretization).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl Statistic {
    fn exact(name: &str, alpha: Option<f64>, v: Option<f64>, value: f64) -> Self {
        Self {
            name: name.into(),
            alpha,
            v,
            value,
            std_error: None,
            allowance: None,
            n: None,
        }
    }

    fn estimated(name: &str, alpha: Option<f64>, v: Option<f64>, e: Estimate) -> Self {
        Self {
            name: name.into(),
            alpha,
            v,
            value: e.value,
            std_error: Some(e.std_error),
            allowance: None,
            n: Some(e.n),
        }
    }

    fn key(&self) -> (String, Option<u64>, Option<u64>) {
        (
            self.name.clone(),
            self.alpha.map(f64::to_bits),
            self.v.map(f64::to_bits),
        )
    }
}

/// Finite/infinite classification of the increment count `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KClass {
    Finite,
    Infinite,
    Unobserved,
}

/// `K` is finite exactly when the overtaking input is compound Poisson.
pub fn predicted_k_class(model: &ApModel) -> KClass {
    let ot = model.overtaking_input();
    if ot.drift() == 0.0 && !ot.has_infinite_activity() {
        KClass::Finite
    } else {
        KClass::Infinite
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassInfo {
    pub class: usize,
    pub b: f64,
    pub deceleration: f64,
    pub load: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticSummary {
    pub rho: f64,
    pub service_rate: f64,
    pub tagged_class: usize,
    pub overtaking_load: f64,
    pub classes: Vec<ClassInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_waits: Option<analytic::MeanWaits>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_waits_error: Option<String>,
    pub k_class: KClass,
}

pub fn analytic_summary(model: &ApModel) -> AnalyticSummary {
    let classes = (0..model.num_classes())
        .map(|i| ClassInfo {
            class: i,
            b: model.b(i),
            deceleration: model.deceleration()[i],
            load: model.class_load(i),
        })
        .collect();
    let (mean_waits, mean_waits_error) = match analytic::mean_waits(model) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    AnalyticSummary {
        rho: model.rho(),
        service_rate: model.service_rate(),
        tagged_class: model.tagged(),
        overtaking_load: model.overtaking_load(),
        classes,
        mean_waits,
        mean_waits_error,
        k_class: predicted_k_class(model),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticRow {
    pub alpha: f64,
    pub phi: f64,
    pub phi_a: f64,
    pub phi_a_inverse: f64,
    pub w0_lst: f64,
    pub wn_lst: f64,
    pub w_customer_lst: Option<f64>,
    pub joint_lst_diagonal: f64,
}

pub fn analytic_table(model: &ApModel, alphas: &[f64]) -> Result<Vec<AnalyticRow>> {
    let cp = model.is_compound_poisson();
    alphas
        .iter()
        .map(|&a| {
            Ok(AnalyticRow {
                alpha: a,
                phi: analytic::phi(model, a)?,
                phi_a: analytic::phi_a(model, a)?,
                phi_a_inverse: analytic::phi_a_inverse(model, a)?,
                w0_lst: analytic::w0_lst(model, a)?.value,
                wn_lst: analytic::wn_lst(model, a)?.value,
                w_customer_lst: if cp {
                    Some(analytic::w_customer_lst_mg1(model, a)?.value)
                } else {
                    None
                },
                joint_lst_diagonal: analytic::joint_lst(model, a, a)?,
            })
        })
        .collect()
}

/// Every analytic statistic a simulation could estimate.
pub fn analytic_statistics(model: &ApModel, alphas: &[f64], v: f64) -> Result<Vec<Statistic>> {
    model.ensure_stable()?;
    let mut out = Vec::new();
    let cp = model.is_compound_poisson();
    let means = analytic::mean_waits(model).ok();
    if cp {
        out.push(Statistic::exact("no_wait", None, None, 1.0 - model.rho()));
        if let Some(c) = means.and_then(|m| m.mean_w_customer) {
            out.push(Statistic::exact("customer_mean", None, None, c));
        }
    }
    if let Some(m) = means {
        out.push(Statistic::exact("particle_mean", None, None, m.mean_wn_particle));
    }
    let aggregate = model.aggregate_input();
    for &a in alphas {
        if cp {
            let c = analytic::w_customer_lst_mg1(model, a)?.value;
            out.push(Statistic::exact("customer_lst", Some(a), None, c));
        }
        out.push(Statistic::exact("particle_lst", Some(a), None, analytic::wn_lst(model, a)?.value));
        let content = analytic::w0_lst(model, a)?.value * excess_lst(&aggregate, a)?;
        out.push(Statistic::exact("content_lst", Some(a), None, content));
    }
    let ot = Overtaker::from_model(model)?;
    out.push(Statistic::exact("fpt_mean", None, Some(v), ot.mean_passage(v)));
    for &a in alphas {
        let value = analytic::fpt_lst(model, v, a)?.value;
        out.push(Statistic::exact("fpt_lst", Some(a), Some(v), value));
    }
    if predicted_k_class(model) == KClass::Finite {
        let p0 = (-ot.jump_rate() * v).exp();
        out.push(Statistic::exact("fpt_no_overtaking", None, Some(v), p0));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Des,
    FptExact,
    FptGrid,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSettings {
    pub mode: Mode,
    pub seed: u64,
    pub replications: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
}

/// A simulation run reduced to statistics, plus its raw-sample CSV.
pub struct SimulationRun {
    pub settings: SimulationSettings,
    pub statistics: Vec<Statistic>,
    pub k_class: Option<KClass>,
    pub details: serde_json::Value,
    pub samples_csv: Vec<u8>,
}

pub struct SimulationRequest<'a> {
    pub mode: Mode,
    pub alphas: &'a [f64],
    pub quantiles: &'a [f64],
    pub replications: usize,
    pub warmup: Option<usize>,
    pub seed: u64,
    pub v: f64,
    pub grid_step: f64,
    pub allow_unstable: bool,
}

pub fn run_simulation(model: &ApModel, req: &SimulationRequest<'_>) -> Result<SimulationRun> {
    match req.mode {
        Mode::Des => run_des_mode(model, req),
        Mode::FptExact | Mode::FptGrid => run_fpt_mode(model, req),
    }
}

fn run_des_mode(model: &ApModel, req: &SimulationRequest<'_>) -> Result<SimulationRun> {
    let cfg = DesConfig {
        num_jobs: req.replications,
        warmup: req.warmup,
        seed: req.seed,
        allow_unstable: req.allow_unstable,
    };
    let result = des::run_des(model, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    rng.set_stream(1);
    let particles = des::particle_wait_samples(&result, &mut rng);
    let tagged = model.tagged();
    let mut statistics = vec![
        Statistic::estimated("no_wait", None, None, result.no_wait_probability(tagged)),
        Statistic::estimated("customer_mean", None, None, result.mean_wait(tagged)),
        Statistic::estimated("particle_mean", None, None, des::particle_mean(&particles)),
    ];
    let content = des::tagged_particle_stats(&result, req.alphas, None);
    for (&a, (_, c)) in req.alphas.iter().zip(content) {
        statistics.push(Statistic::estimated("customer_lst", Some(a), None, result.wait_lst(tagged, a)));
        statistics.push(Statistic::estimated("particle_lst", Some(a), None, des::particle_lst(&particles, a)));
        statistics.push(Statistic::estimated("content_lst", Some(a), None, c));
    }
    let summary = des::summarize(&result, &particles, req.alphas, req.quantiles);
    let mut samples_csv = Vec::new();
    result.write_csv(&mut samples_csv)?;
    Ok(SimulationRun {
        settings: SimulationSettings {
            mode: Mode::Des,
            seed: req.seed,
            replications: req.replications,
            warmup: Some(result.warmup),
            v: None,
            grid_step: None,
        },
        statistics,
        k_class: None,
        details: serde_json::to_value(summary)?,
        samples_csv,
    })
}

fn k_class_of(samples: &[FptSample]) -> KClass {
    if samples.iter().any(|s| s.k == KCount::Unobserved) {
        KClass::Unobserved
    } else if samples.iter().any(|s| s.k == KCount::Infinite) {
        KClass::Infinite
    } else {
        KClass::Finite
    }
}

#[derive(Debug, Serialize)]
struct FptDetails {
    censored: usize,
    zero_increment_steps: u64,
    steps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_distribution: Option<overtaking::KDistribution>,
    /// Estimates at step `h / 2` on the same paths (grid mode).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    half_step: Vec<Statistic>,
}

fn run_fpt_mode(model: &ApModel, req: &SimulationRequest<'_>) -> Result<SimulationRun> {
    let cfg = FptConfig {
        v: req.v,
        replications: req.replications,
        grid_step: req.grid_step,
        seed: req.seed,
        prefix_len: 0,
        ..FptConfig::default()
    };
    let v = Some(req.v);
    let mut statistics = Vec::new();
    let mut half_step = Vec::new();
    let (samples, k_distribution) = if req.mode == Mode::FptExact {
        let samples = overtaking::run_fpt_exact(model, &cfg)?;
        statistics.push(Statistic::estimated("fpt_mean", None, v, overtaking::estimate_mean(&samples)?));
        for &a in req.alphas {
            let e = lst_or_one(&samples, a)?;
            statistics.push(Statistic::estimated("fpt_lst", Some(a), v, e));
        }
        let kd = overtaking::k_distribution(&samples, &Overtaker::from_model(model)?, req.v);
        let p0 = kd.mass(0);
        let n = samples.len();
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        statistics.push(Statistic::estimated(
            "fpt_no_overtaking",
            None,
            v,
            Estimate { value: p0, std_error: se, n },
        ));
        (samples, Some(kd))
    } else {
        let pairs = overtaking::run_fpt_grid_paired(model, &cfg, InitialWork::Fixed(req.v))?;
        let coarse: Vec<FptSample> = pairs.iter().map(|p| p.coarse.clone()).collect();
        let fine: Vec<FptSample> = pairs.iter().map(|p| p.fine.clone()).collect();
        let mut push = |name: &str, alpha: Option<f64>, c: Estimate, f: Estimate| {
            let mut s = Statistic::estimated(name, alpha, v, c);
            s.allowance = Some(2.0 * (c.value - f.value).abs());
            statistics.push(s);
            half_step.push(Statistic::estimated(name, alpha, v, f));
        };
        push(
            "fpt_mean",
            None,
            overtaking::estimate_mean(&coarse)?,
            overtaking::estimate_mean(&fine)?,
        );
        for &a in req.alphas {
            push("fpt_lst", Some(a), lst_or_one(&coarse, a)?, lst_or_one(&fine, a)?);
        }
        (coarse, None)
    };
    let mut samples_csv = Vec::new();
    overtaking::write_samples_csv(&mut samples_csv, &samples)?;
    let details = FptDetails {
        censored: samples.iter().filter(|s| s.censored).count(),
        zero_increment_steps: samples.iter().map(|s| s.zero_increment_steps).sum(),
        steps: samples.iter().map(|s| s.steps).sum(),
        k_distribution,
        half_step,
    };
    Ok(SimulationRun {
        settings: SimulationSettings {
            mode: req.mode,
            seed: req.seed,
            replications: req.replications,
            warmup: None,
            v,
            grid_step: (req.mode == Mode::FptGrid).then_some(req.grid_step),
        },
        statistics,
        k_class: Some(k_class_of(&samples)),
        details: serde_json::to_value(details)?,
        samples_csv,
    })
}

fn lst_or_one(samples: &[FptSample], alpha: f64) -> Result<Estimate> {
    if alpha == 0.0 {
        return Ok(Estimate { value: 1.0, std_error: 0.0, n: samples.len() });
    }
    Ok(overtaking::estimate_lst(samples, alpha)?.estimate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Verdict {
    Pass,
    Fail,
    NotRun,
    Refused,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub allowance: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub predicted: KClass,
    pub simulated: Option<KClass>,
    pub matches: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub status: Verdict,
    pub version: String,
    pub model_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub z_threshold: f64,
    pub rows: Vec<ComparisonRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
}

pub const Z_THRESHOLD: f64 = 4.0;

impl ComparisonReport {
    pub fn not_run(model_hash: Option<String>, reason: String) -> Self {
        Self::empty(Verdict::NotRun, model_hash, reason)
    }

    pub fn refused(reason: String) -> Self {
        Self::empty(Verdict::Refused, None, reason)
    }

    fn empty(status: Verdict, model_hash: Option<String>, reason: String) -> Self {
        Self {
            status,
            version: VERSION.into(),
            model_hash,
            reason: Some(reason),
            z_threshold: Z_THRESHOLD,
            rows: Vec::new(),
            classification: None,
        }
    }
}

/// `max(0, |analytic - empirical| - allowance) / std_error`.
fn z_score(analytic: f64, s: &Statistic) -> f64 {
    let excess = ((analytic - s.value).abs() - s.allowance.unwrap_or(0.0)).max(0.0);
    if excess == 0.0 {
        0.0
    } else {
        excess / s.std_error.unwrap_or(0.0)
    }
}

/// Joins statistics by key and grades each at `|z| <= 4`.
pub fn compare(
    model_hash: &str,
    analytic: &[Statistic],
    predicted: KClass,
    simulated: &[(Vec<Statistic>, Option<KClass>)],
) -> ComparisonReport {
    let mut rows = Vec::new();
    let mut simulated_class = None;
    for (stats, class) in simulated {
        if class.is_some() {
            simulated_class = *class;
        }
        for s in stats {
            let Some(a) = analytic.iter().find(|a| a.key() == s.key()) else {
                continue;
            };
            let z = z_score(a.value, s);
            rows.push(ComparisonRow {
                name: s.name.clone(),
                alpha: s.alpha,
                v: s.v,
                analytic: a.value,
                empirical: s.value,
                std_error: s.std_error.unwrap_or(0.0),
                allowance: s.allowance.unwrap_or(0.0),
                z,
                pass: z <= Z_THRESHOLD,
            });
        }
    }
    let matches = match simulated_class {
        None | Some(KClass::Unobserved) => true,
        Some(c) => c == predicted,
    };
    let all_pass = !rows.is_empty() && rows.iter().all(|r| r.pass) && matches;
    ComparisonReport {
        status: if all_pass { Verdict::Pass } else { Verdict::Fail },
        version: VERSION.into(),
        model_hash: Some(model_hash.into()),
        reason: rows.is_empty().then(|| "no statistics in common".to_string()),
        z_threshold: Z_THRESHOLD,
        rows,
        classification: Some(Classification {
            predicted,
            simulated: simulated_class,
            matches,
        }),
    }
}

/// The fields of an analytic or simulation JSON report that `compare` reads.
#[derive(Debug, Clone, Deserialize)]
pub struct ReportFile {
    pub model_hash: String,
    pub statistics: Vec<Statistic>,
    #[serde(default)]
    pub k_class: Option<KClass>,
}

pub fn check_same_model(a: &ReportFile, b: &ReportFile) -> Result<()> {
    if a.model_hash == b.model_hash {
        Ok(())
    } else {
        Err(Error::ComparisonRefused(format!(
            "model hashes differ: {} vs {}",
            a.model_hash, b.model_hash
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::fixtures;

    fn stat(name: &str, value: f64, se: f64) -> Statistic {
        Statistic {
            name: name.into(),
            alpha: Some(1.0),
            v: None,
            value,
            std_error: Some(se),
            allowance: None,
            n: Some(100),
        }
    }

    #[test]
    fn z_scores_and_verdicts() {
        let analytic = vec![Statistic::exact("x", Some(1.0), None, 0.5)];
        let ok = compare("h", &analytic, KClass::Finite, &[(vec![stat("x", 0.52, 0.01)], None)]);
        assert_eq!(ok.status, Verdict::Pass);
        assert!((ok.rows[0].z - 2.0).abs() < 1e-12);
        let bad = compare("h", &analytic, KClass::Finite, &[(vec![stat("x", 0.6, 0.01)], None)]);
        assert_eq!(bad.status, Verdict::Fail);
        let wrong_k = compare(
            "h",
            &analytic,
            KClass::Finite,
            &[(vec![stat("x", 0.5, 0.01)], Some(KClass::Infinite))],
        );
        assert_eq!(wrong_k.status, Verdict::Fail);
        let nothing = compare("h", &analytic, KClass::Finite, &[(vec![stat("y", 0.5, 0.01)], None)]);
        assert_eq!(nothing.status, Verdict::Fail);
        let mut biased = stat("x", 0.6, 0.01);
        biased.allowance = Some(0.08);
        let allowed = compare("h", &analytic, KClass::Finite, &[(vec![biased], None)]);
        assert_eq!(allowed.status, Verdict::Pass);
    }

    #[test]
    fn predicted_classes() {
        assert_eq!(predicted_k_class(&fixtures::m1()), KClass::Finite);
        assert_eq!(predicted_k_class(&fixtures::m2()), KClass::Infinite);
    }

    #[test]
    fn analytic_statistics_for_m1() {
        let stats = analytic_statistics(&fixtures::m1(), &[0.0, 1.0], 1.0).unwrap();
        let get = |n: &str| stats.iter().find(|s| s.name == n).unwrap().value;
        assert!((get("customer_mean") - 1.5 / 0.85).abs() < 1e-14);
        assert!((get("fpt_mean") - 1.0 / 0.85).abs() < 1e-14);
        assert!((get("fpt_no_overtaking") - (-0.15f64).exp()).abs() < 1e-15);
        assert!(stats.iter().filter(|s| s.alpha == Some(0.0)).all(|s| s.value == 1.0));
    }
}
