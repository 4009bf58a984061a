//! Subordinator (nondecreasing Lévy) input processes.
//!
//! A [`SubordinatorSpec`] is a drift plus a list of independent components:
//! compound Poisson with a closed-form jump law, gamma, or inverse Gaussian.
//! Its Laplace exponent is
//!
//! ```text
//! eta(alpha) = c * alpha + sum_k eta_k(alpha)
//!   compound Poisson:  lambda * (1 - E exp(-alpha X))
//!   gamma(a, b):       a * ln(1 + alpha / b)
//!   IG(delta, g):      delta * (sqrt(2 alpha + g^2) - g)
//! ```
//!
//! and every moment functional is closed form per family.

pub mod sampling;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precision::Real;

/// Jump-size law of a compound Poisson component. Sizes are in work units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpDist {
    Exponential { mean: f64 },
    Deterministic { size: f64 },
    Erlang { shape: u32, mean: f64 },
    Hyperexponential { weights: Vec<f64>, means: Vec<f64> },
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be finite and positive, got {x}")))
    }
}

impl JumpDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpDist::Exponential { mean } => check_positive("exponential mean", *mean),
            JumpDist::Deterministic { size } => check_positive("deterministic size", *size),
            JumpDist::Erlang { shape, mean } => {
                if *shape == 0 {
                    return Err(Error::InvalidModel("erlang shape must be >= 1".into()));
                }
                check_positive("erlang mean", *mean)
            }
            JumpDist::Hyperexponential { weights, means } => {
                if weights.is_empty() || weights.len() != means.len() {
                    return Err(Error::InvalidModel(
                        "hyperexponential needs matching, nonempty weights and means".into(),
                    ));
                }
                for &w in weights {
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(Error::InvalidModel(format!(
                            "hyperexponential weight {w} is not a probability"
                        )));
                    }
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidModel(format!(
                        "hyperexponential weights sum to {total}, expected 1"
                    )));
                }
                means
                    .iter()
                    .try_for_each(|&m| check_positive("hyperexponential mean", m))
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            JumpDist::Exponential { mean } | JumpDist::Erlang { mean, .. } => *mean,
            JumpDist::Deterministic { size } => *size,
            JumpDist::Hyperexponential { weights, means } => {
                weights.iter().zip(means).map(|(w, m)| w * m).sum()
            }
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            JumpDist::Exponential { mean } => 2.0 * mean * mean,
            JumpDist::Deterministic { size } => size * size,
            JumpDist::Erlang { shape, mean } => mean * mean * (1.0 + 1.0 / *shape as f64),
            JumpDist::Hyperexponential { weights, means } => {
                weights.iter().zip(means).map(|(w, m)| 2.0 * w * m * m).sum()
            }
        }
    }

    /// `E exp(-alpha X)`.
    pub fn lst<R: Real>(&self, alpha: R) -> R {
        match self {
            JumpDist::Exponential { mean } => {
                R::one() / (R::one() + alpha * R::from_f64(*mean))
            }
            JumpDist::Deterministic { size } => (-alpha * R::from_f64(*size)).exp(),
            JumpDist::Erlang { shape, mean } => {
                let k = R::from_f64(*shape as f64);
                (-k * (alpha * R::from_f64(*mean) / k).ln_1p()).exp()
            }
            JumpDist::Hyperexponential { weights, means } => {
                weights.iter().zip(means).fold(R::zero(), |acc, (&w, &m)| {
                    acc + R::from_f64(w) / (R::one() + alpha * R::from_f64(m))
                })
            }
        }
    }

    /// `1 - E exp(-alpha X)`, accurate for small `alpha`.
    pub fn lst_complement<R: Real>(&self, alpha: R) -> R {
        match self {
            JumpDist::Exponential { mean } => {
                let am = alpha * R::from_f64(*mean);
                am / (R::one() + am)
            }
            JumpDist::Deterministic { size } => -(-alpha * R::from_f64(*size)).exp_m1(),
            JumpDist::Erlang { shape, mean } => {
                let k = R::from_f64(*shape as f64);
                -(-k * (alpha * R::from_f64(*mean) / k).ln_1p()).exp_m1()
            }
            JumpDist::Hyperexponential { weights, means } => {
                weights.iter().zip(means).fold(R::zero(), |acc, (&w, &m)| {
                    let am = alpha * R::from_f64(m);
                    acc + R::from_f64(w) * am / (R::one() + am)
                })
            }
        }
    }

    /// `E[X exp(-alpha X)]`, the negated derivative of the LST.
    pub fn size_weighted_lst<R: Real>(&self, alpha: R) -> R {
        match self {
            JumpDist::Exponential { mean } => {
                let m = R::from_f64(*mean);
                let d = R::one() + alpha * m;
                m / (d * d)
            }
            JumpDist::Deterministic { size } => {
                let s = R::from_f64(*size);
                s * (-alpha * s).exp()
            }
            JumpDist::Erlang { shape, mean } => {
                let k = R::from_f64(*shape as f64);
                let m = R::from_f64(*mean);
                m * (-(k + R::one()) * (alpha * m / k).ln_1p()).exp()
            }
            JumpDist::Hyperexponential { weights, means } => {
                weights.iter().zip(means).fold(R::zero(), |acc, (&w, &m)| {
                    let m = R::from_f64(m);
                    let d = R::one() + alpha * m;
                    acc + R::from_f64(w) * m / (d * d)
                })
            }
        }
    }

    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        match self {
            JumpDist::Exponential { mean } => mean * sampling::standard_exponential(rng),
            JumpDist::Deterministic { size } => *size,
            JumpDist::Erlang { shape, mean } => {
                let sum: f64 = (0..*shape).map(|_| sampling::standard_exponential(rng)).sum();
                sum * mean / *shape as f64
            }
            JumpDist::Hyperexponential { weights, means } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = means.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                means[pick] * sampling::standard_exponential(rng)
            }
        }
    }

    /// Law of `factor * X`.
    pub fn scaled(&self, factor: f64) -> JumpDist {
        match self {
            JumpDist::Exponential { mean } => JumpDist::Exponential { mean: mean * factor },
            JumpDist::Deterministic { size } => JumpDist::Deterministic { size: size * factor },
            JumpDist::Erlang { shape, mean } => JumpDist::Erlang {
                shape: *shape,
                mean: mean * factor,
            },
            JumpDist::Hyperexponential { weights, means } => JumpDist::Hyperexponential {
                weights: weights.clone(),
                means: means.iter().map(|m| m * factor).collect(),
            },
        }
    }
}

/// One independent Lévy component of an input process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Component {
    CompoundPoisson { rate: f64, jumps: JumpDist },
    /// Gamma subordinator: `J(t) ~ Gamma(shape_rate * t, rate = scale_rate)`.
    Gamma { shape_rate: f64, scale_rate: f64 },
    /// Inverse-Gaussian subordinator: `J(t) ~ IG(mean delta t / gamma, shape (delta t)^2)`.
    InverseGaussian { delta: f64, gamma: f64 },
}

impl Component {
    pub fn validate(&self) -> Result<()> {
        match self {
            Component::CompoundPoisson { rate, jumps } => {
                check_positive("compound Poisson rate", *rate)?;
                jumps.validate()
            }
            Component::Gamma {
                shape_rate,
                scale_rate,
            } => {
                check_positive("gamma shape_rate", *shape_rate)?;
                check_positive("gamma scale_rate", *scale_rate)
            }
            Component::InverseGaussian { delta, gamma } => {
                check_positive("inverse Gaussian delta", *delta)?;
                check_positive("inverse Gaussian gamma", *gamma)
            }
        }
    }

    pub fn exponent<R: Real>(&self, alpha: R) -> R {
        match self {
            Component::CompoundPoisson { rate, jumps } => {
                R::from_f64(*rate) * jumps.lst_complement(alpha)
            }
            Component::Gamma {
                shape_rate,
                scale_rate,
            } => R::from_f64(*shape_rate) * (alpha / R::from_f64(*scale_rate)).ln_1p(),
            Component::InverseGaussian { delta, gamma } => {
                // delta (sqrt(2a + g^2) - g), rationalized
                let g = R::from_f64(*gamma);
                let two_a = alpha + alpha;
                R::from_f64(*delta) * two_a / ((two_a + g * g).sqrt() + g)
            }
        }
    }

    pub fn exponent_derivative<R: Real>(&self, alpha: R) -> R {
        match self {
            Component::CompoundPoisson { rate, jumps } => {
                R::from_f64(*rate) * jumps.size_weighted_lst(alpha)
            }
            Component::Gamma {
                shape_rate,
                scale_rate,
            } => R::from_f64(*shape_rate) / (R::from_f64(*scale_rate) + alpha),
            Component::InverseGaussian { delta, gamma } => {
                let g = R::from_f64(*gamma);
                R::from_f64(*delta) / (alpha + alpha + g * g).sqrt()
            }
        }
    }

    pub fn mean_rate(&self) -> f64 {
        match self {
            Component::CompoundPoisson { rate, jumps } => rate * jumps.mean(),
            Component::Gamma {
                shape_rate,
                scale_rate,
            } => shape_rate / scale_rate,
            Component::InverseGaussian { delta, gamma } => delta / gamma,
        }
    }

    pub fn second_moment_measure(&self) -> f64 {
        match self {
            Component::CompoundPoisson { rate, jumps } => rate * jumps.second_moment(),
            Component::Gamma {
                shape_rate,
                scale_rate,
            } => shape_rate / (scale_rate * scale_rate),
            Component::InverseGaussian { delta, gamma } => delta / (gamma * gamma * gamma),
        }
    }

    pub fn has_infinite_activity(&self) -> bool {
        !matches!(self, Component::CompoundPoisson { .. })
    }

    /// Component describing `factor * J(t)`.
    pub fn scaled_work(&self, factor: f64) -> Component {
        match self {
            Component::CompoundPoisson { rate, jumps } => Component::CompoundPoisson {
                rate: *rate,
                jumps: jumps.scaled(factor),
            },
            Component::Gamma {
                shape_rate,
                scale_rate,
            } => Component::Gamma {
                shape_rate: *shape_rate,
                scale_rate: scale_rate / factor,
            },
            Component::InverseGaussian { delta, gamma } => Component::InverseGaussian {
                delta: delta * factor.sqrt(),
                gamma: gamma / factor.sqrt(),
            },
        }
    }

    fn sample_increment<G: Rng + ?Sized>(&self, t: f64, rng: &mut G) -> Increment {
        match self {
            Component::CompoundPoisson { rate, jumps } => {
                let n = sampling::poisson_count(rate * t, rng);
                let value: f64 = (0..n).map(|_| jumps.sample(rng)).sum();
                Increment {
                    value,
                    positive: n > 0,
                }
            }
            Component::Gamma {
                shape_rate,
                scale_rate,
            } => {
                let ln = sampling::ln_gamma_variate(shape_rate * t, *scale_rate, rng);
                Increment {
                    value: ln.exp(),
                    positive: ln > f64::NEG_INFINITY,
                }
            }
            Component::InverseGaussian { delta, gamma } => {
                let dt = delta * t;
                let ln = sampling::ln_inverse_gaussian_variate(dt / gamma, dt * dt, rng);
                Increment {
                    value: ln.exp(),
                    positive: ln > f64::NEG_INFINITY,
                }
            }
        }
    }
}

/// A subordinator increment together with an exact strict-positivity flag.
///
/// `value` is the increment rounded to `f64`; for tiny-shape gamma draws it
/// can underflow to zero even though the sampled quantity is positive, which
/// `positive` still records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Increment {
    pub value: f64,
    pub positive: bool,
}

/// Parametric description of a subordinator input process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSubordinatorSpec", into = "RawSubordinatorSpec")]
pub struct SubordinatorSpec {
    drift: f64,
    components: Vec<Component>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubordinatorSpec {
    #[serde(default)]
    drift: f64,
    #[serde(default)]
    components: Vec<Component>,
}

impl TryFrom<RawSubordinatorSpec> for SubordinatorSpec {
    type Error = Error;

    fn try_from(raw: RawSubordinatorSpec) -> Result<Self> {
        SubordinatorSpec::new(raw.drift, raw.components)
    }
}

impl From<SubordinatorSpec> for RawSubordinatorSpec {
    fn from(spec: SubordinatorSpec) -> Self {
        RawSubordinatorSpec {
            drift: spec.drift,
            components: spec.components,
        }
    }
}

impl SubordinatorSpec {
    pub fn new(drift: f64, components: Vec<Component>) -> Result<Self> {
        if !(drift.is_finite() && drift >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "drift must be finite and nonnegative, got {drift}"
            )));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(Self { drift, components })
    }

    pub fn drift_only(drift: f64) -> Result<Self> {
        Self::new(drift, Vec::new())
    }

    pub fn compound_poisson(rate: f64, jumps: JumpDist) -> Result<Self> {
        Self::new(0.0, vec![Component::CompoundPoisson { rate, jumps }])
    }

    pub fn gamma(shape_rate: f64, scale_rate: f64) -> Result<Self> {
        Self::new(
            0.0,
            vec![Component::Gamma {
                shape_rate,
                scale_rate,
            }],
        )
    }

    pub fn inverse_gaussian(delta: f64, gamma: f64) -> Result<Self> {
        Self::new(0.0, vec![Component::InverseGaussian { delta, gamma }])
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Sum of independent subordinators.
    pub fn superpose<'a>(specs: impl IntoIterator<Item = &'a SubordinatorSpec>) -> Self {
        let mut drift = 0.0;
        let mut components = Vec::new();
        for s in specs {
            drift += s.drift;
            components.extend(s.components.iter().cloned());
        }
        Self { drift, components }
    }

    /// Law of `factor * J(t)`; used to normalize a service rate `r` to one.
    pub fn scaled_work(&self, factor: f64) -> Self {
        Self {
            drift: self.drift * factor,
            components: self.components.iter().map(|c| c.scaled_work(factor)).collect(),
        }
    }

    /// Law of `J(factor * t)`.
    pub fn time_changed(&self, factor: f64) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| match c {
                Component::CompoundPoisson { rate, jumps } => Component::CompoundPoisson {
                    rate: rate * factor,
                    jumps: jumps.clone(),
                },
                Component::Gamma {
                    shape_rate,
                    scale_rate,
                } => Component::Gamma {
                    shape_rate: shape_rate * factor,
                    scale_rate: *scale_rate,
                },
                Component::InverseGaussian { delta, gamma } => Component::InverseGaussian {
                    delta: delta * factor,
                    gamma: *gamma,
                },
            })
            .collect();
        Self {
            drift: self.drift * factor,
            components,
        }
    }

    pub fn has_infinite_activity(&self) -> bool {
        self.components.iter().any(Component::has_infinite_activity)
    }

    /// True when the process is a pure compound Poisson process (no drift,
    /// finite activity).
    pub fn is_compound_poisson(&self) -> bool {
        self.drift == 0.0 && !self.has_infinite_activity()
    }

    /// Total jump rate of the compound Poisson components.
    pub fn jump_rate(&self) -> f64 {
        self.components
            .iter()
            .map(|c| match c {
                Component::CompoundPoisson { rate, .. } => *rate,
                _ => 0.0,
            })
            .sum()
    }

    /// Laplace exponent without argument checks.
    pub fn exponent<R: Real>(&self, alpha: R) -> R {
        self.components
            .iter()
            .fold(R::from_f64(self.drift) * alpha, |acc, c| acc + c.exponent(alpha))
    }

    pub fn exponent_derivative<R: Real>(&self, alpha: R) -> R {
        self.components
            .iter()
            .fold(R::from_f64(self.drift), |acc, c| acc + c.exponent_derivative(alpha))
    }

    pub fn mean_rate(&self) -> f64 {
        self.drift + self.components.iter().map(Component::mean_rate).sum::<f64>()
    }

    pub fn second_moment_measure(&self) -> Result<f64> {
        let total: f64 = self
            .components
            .iter()
            .map(Component::second_moment_measure)
            .sum();
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::Unsupported(
                "second moment of the Lévy measure is not finite".into(),
            ))
        }
    }

    /// `eta(alpha) / (rho alpha)` without argument checks; `alpha` must be positive.
    pub fn excess_transform<R: Real>(&self, alpha: R) -> R {
        self.exponent(alpha) / (R::from_f64(self.mean_rate()) * alpha)
    }

    /// Probability that the stationary-excess variable is zero: `c / rho`.
    pub fn excess_atom(&self) -> f64 {
        self.drift / self.mean_rate()
    }

    pub fn sample_increment_detailed<G: Rng + ?Sized>(&self, t: f64, rng: &mut G) -> Increment {
        let mut inc = Increment {
            value: self.drift * t,
            positive: self.drift > 0.0,
        };
        for c in &self.components {
            let part = c.sample_increment(t, rng);
            inc.value += part.value;
            inc.positive |= part.positive;
        }
        inc
    }
}

/// Laplace exponent `eta(alpha) = -ln E exp(-alpha J(1))`.
pub fn laplace_exponent(spec: &SubordinatorSpec, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!(
            "Laplace exponent needs alpha >= 0, got {alpha}"
        )));
    }
    Ok(spec.exponent(alpha))
}

/// `E J(1)`, from closed-form component moments.
pub fn mean_rate(spec: &SubordinatorSpec) -> f64 {
    spec.mean_rate()
}

/// `∫ x^2 nu(dx)`; the drift contributes nothing.
pub fn second_moment_measure(spec: &SubordinatorSpec) -> Result<f64> {
    spec.second_moment_measure()
}

/// LST of the stationary-excess variable `Y_e`: `eta(alpha) / (rho alpha)`,
/// extended by continuity to 1 at `alpha = 0`.
pub fn excess_lst(spec: &SubordinatorSpec, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("excess LST needs alpha >= 0, got {alpha}")));
    }
    if spec.mean_rate() <= 0.0 {
        return Err(Error::DegenerateClass(
            "input has zero mean rate; its excess law is undefined".into(),
        ));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    Ok(spec.excess_transform(alpha))
}

/// Exact-in-distribution draw of `J(t)`.
pub fn sample_increment<G: Rng + ?Sized>(spec: &SubordinatorSpec, t: f64, rng: &mut G) -> f64 {
    spec.sample_increment_detailed(t, rng).value
}

/// Cumulative input observed on a regular time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    pub step: f64,
    pub values: Vec<f64>,
}

impl PathGrid {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| k as f64 * self.step)
    }
}

/// Number of grid steps covering `horizon`, tolerant to representation error
/// in `horizon / h`.
pub(crate) fn grid_steps(horizon: f64, h: f64) -> usize {
    let ratio = horizon / h;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

pub fn sample_path_grid<G: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    horizon: f64,
    h: f64,
    rng: &mut G,
) -> Result<PathGrid> {
    if !(h > 0.0 && h <= horizon && horizon.is_finite()) {
        return Err(Error::Parameter(format!(
            "grid needs 0 < h <= horizon, got h={h}, horizon={horizon}"
        )));
    }
    let n = grid_steps(horizon, h);
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    values.push(acc);
    for _ in 0..n {
        acc += sample_increment(spec, h, rng);
        values.push(acc);
    }
    Ok(PathGrid { step: h, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp1() -> JumpDist {
        JumpDist::Exponential { mean: 1.0 }
    }

    /// Composite Simpson on [a, b] with n (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    /// ∫_0^∞ g(x) dx for integrands decaying like e^{-x}, with x = u^2
    /// substitution to tame the x^{-1} Lévy density near zero.
    fn levy_integral(g: impl Fn(f64) -> f64) -> f64 {
        simpson(|u| if u == 0.0 { 0.0 } else { 2.0 * u * g(u * u) }, 0.0, 8.0, 200_000)
    }

    #[test]
    fn compound_poisson_exponent_closed_form() {
        let spec = SubordinatorSpec::compound_poisson(1.0, exp1()).unwrap();
        assert!((laplace_exponent(&spec, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(laplace_exponent(&spec, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn gamma_exponent_matches_quadrature() {
        let spec = SubordinatorSpec::gamma(0.4, 1.0).unwrap();
        let closed = laplace_exponent(&spec, 1.0).unwrap();
        let quad = levy_integral(|x| (1.0 - (-x).exp()) * 0.4 / x * (-x).exp());
        assert!((closed - 0.4 * 2f64.ln()).abs() < 1e-15);
        assert!((closed - quad).abs() < 1e-8, "closed {closed} quad {quad}");
        // 0.277259 to the stated digits
        assert!((closed - 0.277_259).abs() < 5e-7);
    }

    #[test]
    fn gamma_second_moment_matches_quadrature() {
        let spec = SubordinatorSpec::gamma(0.4, 1.0).unwrap();
        let quad = levy_integral(|x| x * x * 0.4 / x * (-x).exp());
        let closed = second_moment_measure(&spec).unwrap();
        assert!((closed - 0.4).abs() < 1e-15);
        assert!((closed - quad).abs() < 1e-8);
    }

    #[test]
    fn negative_alpha_is_a_domain_error() {
        let spec = SubordinatorSpec::gamma(0.4, 1.0).unwrap();
        assert!(matches!(laplace_exponent(&spec, -0.1), Err(Error::Domain(_))));
        assert!(matches!(excess_lst(&spec, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn mean_rates() {
        let cp = SubordinatorSpec::compound_poisson(0.3, exp1()).unwrap();
        assert!((mean_rate(&cp) - 0.3).abs() < 1e-15);
        let g = SubordinatorSpec::gamma(0.4, 1.0).unwrap();
        assert!((mean_rate(&g) - 0.4).abs() < 1e-15);
        let mixed = SubordinatorSpec::new(
            0.1,
            vec![Component::CompoundPoisson {
                rate: 0.2,
                jumps: JumpDist::Deterministic { size: 2.0 },
            }],
        )
        .unwrap();
        assert!((mean_rate(&mixed) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn second_moments() {
        let cp = SubordinatorSpec::compound_poisson(0.6, exp1()).unwrap();
        assert!((second_moment_measure(&cp).unwrap() - 1.2).abs() < 1e-15);
        let drift = SubordinatorSpec::drift_only(1.0).unwrap();
        assert_eq!(second_moment_measure(&drift).unwrap(), 0.0);
        let erlang = JumpDist::Erlang { shape: 3, mean: 1.5 };
        // E X^2 = var + mean^2 = 1.5^2/3 + 1.5^2
        assert!((erlang.second_moment() - 3.0).abs() < 1e-14);
        let huge = SubordinatorSpec::compound_poisson(1.0, JumpDist::Exponential { mean: 1e200 })
            .unwrap();
        assert!(matches!(second_moment_measure(&huge), Err(Error::Unsupported(_))));
    }

    #[test]
    fn excess_lst_examples() {
        let cp = SubordinatorSpec::compound_poisson(0.7, exp1()).unwrap();
        assert!((excess_lst(&cp, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(excess_lst(&cp, 0.0).unwrap(), 1.0);
        assert!((excess_lst(&cp, 1e-9).unwrap() - 1.0).abs() < 1e-8);
        let g = SubordinatorSpec::gamma(0.4, 1.0).unwrap();
        assert!((excess_lst(&g, 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        let none = SubordinatorSpec::new(0.0, vec![]).unwrap();
        assert!(matches!(excess_lst(&none, 1.0), Err(Error::DegenerateClass(_))));
    }

    #[test]
    fn gamma_excess_lst_matches_monte_carlo_of_excess_density() {
        // Y_e has density nu(y, inf) / rho. Equivalently Y_e = U * X~ with X~ drawn
        // from the size-biased measure x nu(dx) / rho, which is Exp(1) here.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let u: f64 = rng.random();
            let y = u * sampling::standard_exponential(&mut rng);
            let v = (-y).exp();
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        let g = SubordinatorSpec::gamma(0.4, 1.0).unwrap();
        let exact = excess_lst(&g, 1.0).unwrap();
        assert!((mean - exact).abs() < 4.0 * se, "MC {mean} vs {exact} (se {se})");
    }

    #[test]
    fn exponent_derivative_at_zero_is_mean_rate() {
        let specs = [
            SubordinatorSpec::compound_poisson(0.3, JumpDist::Erlang { shape: 2, mean: 1.2 })
                .unwrap(),
            SubordinatorSpec::gamma(0.4, 2.0).unwrap(),
            SubordinatorSpec::inverse_gaussian(0.5, 1.5).unwrap(),
        ];
        for s in &specs {
            let d: f64 = s.exponent_derivative(0.0);
            assert!((d - s.mean_rate()).abs() < 1e-15);
        }
    }

    #[test]
    fn path_grid_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let drift = SubordinatorSpec::drift_only(1.0).unwrap();
        let g = sample_path_grid(&drift, 1.0, 0.5, &mut rng).unwrap();
        assert_eq!(g.values, vec![0.0, 0.5, 1.0]);
        assert!((sample_increment(&drift, 2.0, &mut rng) - 2.0).abs() < 1e-15);

        let cp = SubordinatorSpec::compound_poisson(0.4, exp1()).unwrap();
        let g = sample_path_grid(&cp, 10.0, 0.01, &mut rng).unwrap();
        assert_eq!(g.values.len(), 1001);
        assert!(g.values.windows(2).all(|w| w[1] >= w[0]));
        assert!(sample_path_grid(&cp, 1.0, 2.0, &mut rng).is_err());
    }

    #[test]
    fn json_schema_round_trip_and_rejection() {
        let json = r#"{"drift": 0.1, "components": [
            {"type": "compound_poisson", "rate": 0.3, "jumps": {"type": "exponential", "mean": 1.0}},
            {"type": "gamma", "shape_rate": 0.4, "scale_rate": 1.0},
            {"type": "inverse_gaussian", "delta": 0.5, "gamma": 2.0}]}"#;
        let spec: SubordinatorSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.components().len(), 3);
        let back: SubordinatorSpec =
            serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);

        let unknown = r#"{"drift": 0.1, "extra": 1, "components": []}"#;
        assert!(serde_json::from_str::<SubordinatorSpec>(unknown).is_err());
        let unknown_inner =
            r#"{"components": [{"type": "gamma", "shape_rate": 1, "scale_rate": 1, "x": 0}]}"#;
        assert!(serde_json::from_str::<SubordinatorSpec>(unknown_inner).is_err());
        let negative = r#"{"components": [{"type": "gamma", "shape_rate": -1, "scale_rate": 1}]}"#;
        assert!(serde_json::from_str::<SubordinatorSpec>(negative).is_err());
        let bad_weights = r#"{"components": [{"type": "compound_poisson", "rate": 1,
            "jumps": {"type": "hyperexponential", "weights": [0.5, 0.6], "means": [1, 2]}}]}"#;
        assert!(serde_json::from_str::<SubordinatorSpec>(bad_weights).is_err());
    }

    #[test]
    fn scaled_work_rescales_mean_and_exponent() {
        let spec = SubordinatorSpec::new(
            0.1,
            vec![
                Component::CompoundPoisson { rate: 0.3, jumps: exp1() },
                Component::Gamma { shape_rate: 0.4, scale_rate: 2.0 },
                Component::InverseGaussian { delta: 0.5, gamma: 1.5 },
            ],
        )
        .unwrap();
        let f = 0.25;
        let s = spec.scaled_work(f);
        assert!((s.mean_rate() - f * spec.mean_rate()).abs() < 1e-15);
        for &a in &[0.1, 1.0, 7.0] {
            let lhs: f64 = s.exponent(a);
            let rhs: f64 = spec.exponent(a * f);
            assert!((lhs - rhs).abs() < 1e-14 * rhs.max(1.0));
        }
    }
}
