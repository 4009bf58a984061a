//! Closed-form transform mathematics of the accumulating-priority Lévy queue.
//!
//! The server works at unit rate (a model declared with service rate `r` is
//! normalized by scaling every input's work by `1/r`). Class `i` feeds the
//! subordinator `J_i` and accumulates priority at rate `b_i`; the tagged class
//! is the one with the smallest `b`. With `a_i = 1 - b_tagged / b_i`:
//!
//! ```text
//! phi(x)   = x - sum_i eta_i(x)                 total netput exponent
//! phi_a(x) = x - sum_{i != tagged} a_i eta_i(x)  overtaking exponent
//! E exp(-x W0)            = (1 - rho) x / phi(x)
//! E exp(-alpha T | v)     = exp(-v phi_a^{-1}(alpha))
//! E exp(-alpha W_tagged)  = (1 - rho) eta_N(y) / (rho_N phi(y)),  y = phi_a^{-1}(alpha)
//! ```
//!
//! All formulas are generic over [`Real`] so the inverter can evaluate them in
//! double-double precision.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::levy::SubordinatorSpec;
use crate::precision::Real;

/// One priority class: its input process and accumulation rate `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApClass {
    pub b: f64,
    pub input: SubordinatorSpec,
}

/// The full N-class accumulating-priority queue.
///
/// The tagged (lowest-priority) class is inferred: it is the unique class with
/// the smallest `b`. When every class shares the same `b` the discipline is
/// FIFO, every deceleration factor is zero, and the last class is tagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawApModel", into = "RawApModel")]
pub struct ApModel {
    service_rate: f64,
    classes: Vec<ApClass>,
    inputs: Vec<SubordinatorSpec>,
    deceleration: Vec<f64>,
    tagged: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawApModel {
    #[serde(default = "unit_rate")]
    service_rate: f64,
    classes: Vec<ApClass>,
}

fn unit_rate() -> f64 {
    1.0
}

impl TryFrom<RawApModel> for ApModel {
    type Error = Error;

    fn try_from(raw: RawApModel) -> Result<Self> {
        ApModel::with_service_rate(raw.service_rate, raw.classes)
    }
}

impl From<ApModel> for RawApModel {
    fn from(m: ApModel) -> Self {
        RawApModel {
            service_rate: m.service_rate,
            classes: m.classes,
        }
    }
}

impl ApModel {
    pub fn new(classes: Vec<ApClass>) -> Result<Self> {
        Self::with_service_rate(1.0, classes)
    }

    pub fn with_service_rate(service_rate: f64, classes: Vec<ApClass>) -> Result<Self> {
        if !(service_rate.is_finite() && service_rate > 0.0) {
            return Err(Error::InvalidModel(format!(
                "service_rate must be finite and positive, got {service_rate}"
            )));
        }
        if classes.is_empty() {
            return Err(Error::InvalidModel("model needs at least one class".into()));
        }
        for (i, c) in classes.iter().enumerate() {
            if !(c.b.is_finite() && c.b > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "class {i}: accumulation rate b must be finite and positive, got {}",
                    c.b
                )));
            }
        }
        let b_min = classes.iter().map(|c| c.b).fold(f64::INFINITY, f64::min);
        let at_min: Vec<usize> = (0..classes.len()).filter(|&i| classes[i].b == b_min).collect();
        let tagged = if at_min.len() == 1 {
            at_min[0]
        } else if at_min.len() == classes.len() {
            classes.len() - 1
        } else {
            return Err(Error::InvalidModel(format!(
                "classes {at_min:?} tie for the lowest accumulation rate {b_min}; \
                 the lowest class is ambiguous"
            )));
        };
        let inputs: Vec<SubordinatorSpec> = classes
            .iter()
            .map(|c| c.input.scaled_work(1.0 / service_rate))
            .collect();
        if inputs[tagged].mean_rate() <= 0.0 {
            return Err(Error::DegenerateClass(format!(
                "tagged class {tagged} has zero mean input rate"
            )));
        }
        let deceleration = classes.iter().map(|c| 1.0 - b_min / c.b).collect();
        Ok(Self {
            service_rate,
            classes,
            inputs,
            deceleration,
            tagged,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn model_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn service_rate(&self) -> f64 {
        self.service_rate
    }

    /// Classes as declared (before service-rate normalization).
    pub fn classes(&self) -> &[ApClass] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Input of class `i` in unit-service-rate work units.
    pub fn input(&self, i: usize) -> &SubordinatorSpec {
        &self.inputs[i]
    }

    pub fn inputs(&self) -> &[SubordinatorSpec] {
        &self.inputs
    }

    pub fn b(&self, i: usize) -> f64 {
        self.classes[i].b
    }

    pub fn tagged(&self) -> usize {
        self.tagged
    }

    /// Deceleration factors `a_i = 1 - b_tagged / b_i`; zero for the tagged class.
    pub fn deceleration(&self) -> &[f64] {
        &self.deceleration
    }

    pub fn is_fifo(&self) -> bool {
        self.deceleration.iter().all(|&a| a == 0.0)
    }

    pub fn class_load(&self, i: usize) -> f64 {
        self.inputs[i].mean_rate()
    }

    pub fn rho(&self) -> f64 {
        self.inputs.iter().map(SubordinatorSpec::mean_rate).sum()
    }

    pub fn rho_tagged(&self) -> f64 {
        self.class_load(self.tagged)
    }

    /// `sum_i a_i rho_i`, the mean rate of the overtaking input.
    pub fn overtaking_load(&self) -> f64 {
        self.inputs
            .iter()
            .zip(&self.deceleration)
            .map(|(s, a)| a * s.mean_rate())
            .sum()
    }

    pub fn is_stable(&self) -> bool {
        self.rho() < 1.0
    }

    pub fn ensure_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::Unstable { rho: self.rho() })
        }
    }

    /// Total input `J = sum_i J_i`.
    pub fn aggregate_input(&self) -> SubordinatorSpec {
        SubordinatorSpec::superpose(&self.inputs)
    }

    /// Overtaking input `J_a(t) = sum_i J_i(a_i t)` as a single subordinator.
    pub fn overtaking_input(&self) -> SubordinatorSpec {
        let parts: Vec<SubordinatorSpec> = self
            .inputs
            .iter()
            .zip(&self.deceleration)
            .filter(|(_, &a)| a > 0.0)
            .map(|(s, &a)| s.time_changed(a))
            .collect();
        SubordinatorSpec::superpose(&parts)
    }

    /// True when every class is a pure compound Poisson input (the M/G/1 setting).
    pub fn is_compound_poisson(&self) -> bool {
        self.inputs.iter().all(SubordinatorSpec::is_compound_poisson)
    }

    // ---- generic kernels -------------------------------------------------

    pub fn phi_r<R: Real>(&self, x: R) -> R {
        self.inputs.iter().fold(x, |acc, s| acc - s.exponent(x))
    }

    pub fn phi_a_r<R: Real>(&self, x: R) -> R {
        self.inputs
            .iter()
            .zip(&self.deceleration)
            .filter(|(_, &a)| a > 0.0)
            .fold(x, |acc, (s, &a)| acc - R::from_f64(a) * s.exponent(x))
    }

    pub fn phi_a_derivative_r<R: Real>(&self, x: R) -> R {
        self.inputs
            .iter()
            .zip(&self.deceleration)
            .filter(|(_, &a)| a > 0.0)
            .fold(R::one(), |acc, (s, &a)| acc - R::from_f64(a) * s.exponent_derivative(x))
    }

    /// Solves `phi_a(x) = alpha` by Newton's method from the upper end of the
    /// enclosure `[alpha, alpha / (1 - sum a_i rho_i)]`, falling back to
    /// bisection whenever an iterate leaves the current bracket.
    pub fn phi_a_inverse_r<R: Real>(&self, alpha: R) -> Result<R> {
        if alpha.is_zero() {
            return Ok(R::zero());
        }
        let load = self.overtaking_load();
        if load == 0.0 {
            return Ok(alpha);
        }
        let mut lo = alpha;
        let mut hi = alpha / R::from_f64(1.0 - load);
        let eps = R::from_f64(4.0 * R::EPSILON);
        let mut x = hi;
        for _ in 0..200 {
            let f = self.phi_a_r(x) - alpha;
            if f.is_zero() {
                return Ok(x);
            }
            if f > R::zero() {
                hi = x;
            } else {
                lo = x;
            }
            if f.abs() <= eps * (x.abs() + alpha.abs()) {
                return Ok(x);
            }
            let mut next = x - f / self.phi_a_derivative_r(x);
            if !(next >= lo && next <= hi) {
                next = (lo + hi) * R::from_f64(0.5);
            }
            if (next - x).abs() <= eps * x.abs() {
                return Ok(next);
            }
            x = next;
        }
        let residual = (self.phi_a_r(x) - alpha).abs().to_f64();
        if residual <= 1e-12 * alpha.to_f64().max(1.0) {
            Ok(x)
        } else {
            Err(Error::Numeric(format!(
                "phi_a inverse did not converge at alpha={alpha:?} (residual {residual:e})"
            )))
        }
    }

    /// Workload LST `(1 - rho) x / phi(x)`, equal to 1 at `x = 0`.
    pub fn w0_transform<R: Real>(&self, x: R) -> R {
        if x.is_zero() {
            return R::one();
        }
        R::from_f64(1.0 - self.rho()) * x / self.phi_r(x)
    }

    /// LST of `W0 + Y_e` for the tagged input: `(1 - rho) eta_N(x) / (rho_N phi(x))`.
    pub fn w0_plus_excess_transform<R: Real>(&self, x: R) -> R {
        if x.is_zero() {
            return R::one();
        }
        let spec = &self.inputs[self.tagged];
        R::from_f64(1.0 - self.rho()) * spec.exponent(x)
            / (R::from_f64(spec.mean_rate()) * self.phi_r(x))
    }

    pub fn wn_transform<R: Real>(&self, alpha: R) -> Result<R> {
        if alpha.is_zero() {
            return Ok(R::one());
        }
        let y = self.phi_a_inverse_r(alpha)?;
        Ok(self.w0_plus_excess_transform(y))
    }

    pub fn customer_transform<R: Real>(&self, alpha: R) -> Result<R> {
        if alpha.is_zero() {
            return Ok(R::one());
        }
        let y = self.phi_a_inverse_r(alpha)?;
        let rho = R::from_f64(self.rho());
        // rho * E exp(-y X_e) for the aggregate job-size mixture
        let residual = self.aggregate_input().excess_transform(y);
        Ok((R::one() - rho) / (R::one() - rho * residual))
    }

    pub fn joint_transform<R: Real>(&self, alpha: R, beta: R) -> Result<R> {
        let y = self.phi_a_inverse_r(alpha)? + beta;
        Ok(self.w0_plus_excess_transform(y))
    }
}

/// A real LST evaluation at argument `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformValue {
    pub alpha: f64,
    pub value: f64,
}

fn check_alpha(name: &str, alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} needs a finite alpha >= 0, got {alpha}")))
    }
}

/// `phi(alpha) = alpha - sum_i eta_i(alpha)`.
pub fn phi(model: &ApModel, alpha: f64) -> Result<f64> {
    model.ensure_stable()?;
    check_alpha("phi", alpha)?;
    Ok(model.phi_r(alpha))
}

/// Generalized Pollaczek-Khinchine transform of the stationary workload.
pub fn w0_lst(model: &ApModel, alpha: f64) -> Result<TransformValue> {
    model.ensure_stable()?;
    check_alpha("w0_lst", alpha)?;
    Ok(TransformValue {
        alpha,
        value: model.w0_transform(alpha),
    })
}

/// Overtaking exponent `phi_a(alpha) = alpha - sum_i a_i eta_i(alpha)`.
pub fn phi_a(model: &ApModel, alpha: f64) -> Result<f64> {
    check_alpha("phi_a", alpha)?;
    Ok(model.phi_a_r(alpha))
}

pub fn phi_a_inverse(model: &ApModel, alpha: f64) -> Result<f64> {
    check_alpha("phi_a_inverse", alpha)?;
    model.phi_a_inverse_r(alpha)
}

/// LST of the first passage `T = inf{t : v + J_a(t) - t = 0}`.
pub fn fpt_lst(model: &ApModel, v: f64, alpha: f64) -> Result<TransformValue> {
    check_alpha("fpt_lst", alpha)?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!("initial work v must be >= 0, got {v}")));
    }
    let y = model.phi_a_inverse_r(alpha)?;
    Ok(TransformValue {
        alpha,
        value: (-y * v).exp(),
    })
}

/// Waiting-time LST of a tagged-class particle.
pub fn wn_lst(model: &ApModel, alpha: f64) -> Result<TransformValue> {
    model.ensure_stable()?;
    check_alpha("wn_lst", alpha)?;
    Ok(TransformValue {
        alpha,
        value: model.wn_transform(alpha)?,
    })
}

/// Waiting-time LST of a tagged-class customer (first particle of a job) in
/// the M/G/1 setting: `(1 - rho) / (1 - rho E exp(-phi_a^{-1}(alpha) X_e))`.
pub fn w_customer_lst_mg1(model: &ApModel, alpha: f64) -> Result<TransformValue> {
    model.ensure_stable()?;
    check_alpha("w_customer_lst_mg1", alpha)?;
    if !model.is_compound_poisson() {
        return Err(Error::Unsupported(
            "customer waiting times are defined only for pure compound Poisson inputs".into(),
        ));
    }
    Ok(TransformValue {
        alpha,
        value: model.customer_transform(alpha)?,
    })
}

/// Joint transform `E exp(-alpha W_N - beta (W0 + Y_e))`.
pub fn joint_lst(model: &ApModel, alpha: f64, beta: f64) -> Result<f64> {
    model.ensure_stable()?;
    check_alpha("joint_lst", alpha)?;
    check_alpha("joint_lst", beta)?;
    model.joint_transform(alpha, beta)
}

/// Mean values of the workload, the excess, and the tagged-class waits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanWaits {
    pub mean_w0: f64,
    pub mean_ye: f64,
    pub mean_wn_particle: f64,
    /// Kleinrock's lowest-class mean; present only for compound Poisson models.
    pub mean_w_customer: Option<f64>,
}

pub fn mean_waits(model: &ApModel) -> Result<MeanWaits> {
    model.ensure_stable()?;
    let unavailable = |e: Error| Error::MeansUnavailable(e.to_string());
    let mut m2_total = 0.0;
    for s in model.inputs() {
        m2_total += s.second_moment_measure().map_err(unavailable)?;
    }
    let tagged = model.input(model.tagged());
    let m2_tagged = tagged.second_moment_measure().map_err(unavailable)?;
    let mean_w0 = m2_total / (2.0 * (1.0 - model.rho()));
    let mean_ye = m2_tagged / (2.0 * tagged.mean_rate());
    let slowdown = 1.0 - model.overtaking_load();
    Ok(MeanWaits {
        mean_w0,
        mean_ye,
        mean_wn_particle: (mean_w0 + mean_ye) / slowdown,
        mean_w_customer: model.is_compound_poisson().then(|| mean_w0 / slowdown),
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::levy::JumpDist;

    pub fn cp_exp(rate: f64) -> SubordinatorSpec {
        SubordinatorSpec::compound_poisson(rate, JumpDist::Exponential { mean: 1.0 }).unwrap()
    }

    pub fn class(b: f64, input: SubordinatorSpec) -> ApClass {
        ApClass { b, input }
    }

    /// Two CP(0.3, Exp(1)) classes with b = (2, 1).
    pub fn m1() -> ApModel {
        ApModel::new(vec![class(2.0, cp_exp(0.3)), class(1.0, cp_exp(0.3))]).unwrap()
    }

    /// Gamma(0.4, 1) overtaker with b = 2 and a CP(0.2, Exp(1)) tagged class.
    pub fn m2() -> ApModel {
        ApModel::new(vec![
            class(2.0, SubordinatorSpec::gamma(0.4, 1.0).unwrap()),
            class(1.0, cp_exp(0.2)),
        ])
        .unwrap()
    }
}
