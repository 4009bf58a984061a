//! Gaver-Stehfest inversion of real-axis Laplace-Stieltjes transforms into
//! CDF values and quantiles.
//!
//! With `N = 2M` terms the CDF of a law with LST `L` is approximated by
//!
//! ```text
//! F(t) ~ (ln 2 / t) sum_{k=1}^{2M} V_k L(s_k) / s_k = sum_k V_k L(s_k) / k,   s_k = k ln 2 / t
//! ```
//!
//! The weights `V_k` alternate in sign and grow like `10^{M}`, so the sum is
//! formed in double-double arithmetic with weights computed exactly as
//! rationals and rounded once to double-double.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::analytic::{mean_waits, ApModel};
use crate::error::{Error, Result};
use crate::levy::JumpDist;
use crate::precision::{DoubleDouble, Real};

pub const DEFAULT_ORDER: usize = 16;
pub const MIN_ORDER: usize = 8;
pub const MAX_ORDER: usize = 20;

/// A nonnegative random variable known through its LST on `[0, inf)`.
///
/// Implementations must be safe to evaluate concurrently.
pub trait LstFunction: Sync {
    fn eval<R: Real>(&self, alpha: R) -> Result<R>;

    fn mean(&self) -> Option<f64> {
        None
    }

    fn atom_at_zero(&self) -> Option<f64> {
        None
    }
}

impl LstFunction for JumpDist {
    fn eval<R: Real>(&self, alpha: R) -> Result<R> {
        Ok(self.lst(alpha))
    }

    fn mean(&self) -> Option<f64> {
        Some(JumpDist::mean(self))
    }

    fn atom_at_zero(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Which waiting-time law of a model to invert.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitKind {
    /// Stationary workload `W0`.
    Workload,
    /// `W0 + Y_e` for the tagged input: the initial work seen by a tagged particle.
    WorkloadPlusExcess,
    /// Tagged-class particle waiting time.
    Particle,
    /// Tagged-class customer waiting time (compound Poisson models only).
    Customer,
}

/// A model transform packaged for inversion.
#[derive(Debug, Clone)]
pub struct ModelTransform<'a> {
    model: &'a ApModel,
    kind: WaitKind,
    atom: f64,
    mean: Option<f64>,
}

impl<'a> ModelTransform<'a> {
    pub fn new(model: &'a ApModel, kind: WaitKind) -> Result<Self> {
        model.ensure_stable()?;
        if kind == WaitKind::Customer && !model.is_compound_poisson() {
            return Err(Error::Unsupported(
                "customer waiting times are defined only for pure compound Poisson inputs".into(),
            ));
        }
        let idle = 1.0 - model.rho();
        let atom = match kind {
            WaitKind::Workload | WaitKind::Customer => idle,
            // the particle waits zero exactly when it finds no work in front
            WaitKind::WorkloadPlusExcess | WaitKind::Particle => {
                idle * model.input(model.tagged()).excess_atom()
            }
        };
        let mean = mean_waits(model).ok().and_then(|m| match kind {
            WaitKind::Workload => Some(m.mean_w0),
            WaitKind::WorkloadPlusExcess => Some(m.mean_w0 + m.mean_ye),
            WaitKind::Particle => Some(m.mean_wn_particle),
            WaitKind::Customer => m.mean_w_customer,
        });
        Ok(Self {
            model,
            kind,
            atom,
            mean,
        })
    }

    pub fn kind(&self) -> WaitKind {
        self.kind
    }
}

impl LstFunction for ModelTransform<'_> {
    fn eval<R: Real>(&self, alpha: R) -> Result<R> {
        match self.kind {
            WaitKind::Workload => Ok(self.model.w0_transform(alpha)),
            WaitKind::WorkloadPlusExcess => Ok(self.model.w0_plus_excess_transform(alpha)),
            WaitKind::Particle => self.model.wn_transform(alpha),
            WaitKind::Customer => self.model.customer_transform(alpha),
        }
    }

    fn mean(&self) -> Option<f64> {
        self.mean
    }

    fn atom_at_zero(&self) -> Option<f64> {
        Some(self.atom)
    }
}

fn check_order(order: usize) -> Result<()> {
    if (MIN_ORDER..=MAX_ORDER).contains(&order) && order % 2 == 0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "Stehfest order must be an even integer in [{MIN_ORDER}, {MAX_ORDER}], got {order}"
        )))
    }
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Exact Gaver-Stehfest weights `V_1..V_{2M}`.
fn exact_weights(m: usize) -> Vec<BigRational> {
    (1..=2 * m)
        .map(|k| {
            let mut sum = BigRational::zero();
            for j in (k + 1) / 2..=k.min(m) {
                let num = BigInt::from(j).pow(m as u32) * factorial(2 * j);
                let den = factorial(m - j)
                    * factorial(j)
                    * factorial(j - 1)
                    * factorial(k - j)
                    * factorial(2 * j - k);
                sum += BigRational::new(num, den);
            }
            if (m + k) % 2 == 1 {
                -sum
            } else {
                sum
            }
        })
        .collect()
}

fn to_double_double(x: &BigRational) -> DoubleDouble {
    let hi = x.to_f64().expect("finite weight");
    let rest = x - BigRational::from_float(hi).expect("finite weight");
    DoubleDouble::from_parts(hi, rest.to_f64().expect("finite weight"))
}

/// Weights for `order` (even, in range), divided by their index `k`.
fn weights(order: usize) -> &'static [DoubleDouble] {
    static TABLE: [OnceLock<Vec<DoubleDouble>>; MAX_ORDER / 2 + 1] =
        [const { OnceLock::new() }; MAX_ORDER / 2 + 1];
    TABLE[order / 2].get_or_init(|| {
        exact_weights(order)
            .iter()
            .enumerate()
            .map(|(i, v)| to_double_double(&(v / BigRational::from_integer(BigInt::from(i + 1)))))
            .collect()
    })
}

/// Unclamped Gaver-Stehfest CDF estimate. The raw value can leave `[0, 1]`
/// where the target has discontinuities or the transform is inaccurate.
pub fn invert_cdf_raw<F: LstFunction>(f: &F, t: f64, order: usize) -> Result<f64> {
    check_order(order)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("inversion needs t > 0, got {t}")));
    }
    let step = DoubleDouble::LN_2 / DoubleDouble::from_f64(t);
    let mut acc = DoubleDouble::zero();
    for (i, w) in weights(order).iter().enumerate() {
        let s = step * DoubleDouble::from_f64((i + 1) as f64);
        acc = acc + *w * f.eval(s)?;
    }
    let value = acc.to_f64();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numeric(format!("non-finite Stehfest sum at t={t}")))
    }
}

/// CDF value `P(X <= t)`, clamped to `[0, 1]`.
pub fn invert_cdf<F: LstFunction>(f: &F, t: f64, order: usize) -> Result<f64> {
    Ok(invert_cdf_raw(f, t, order)?.clamp(0.0, 1.0))
}

/// CDF values on a grid of times, evaluated in parallel.
pub fn invert_cdf_grid<F: LstFunction>(f: &F, ts: &[f64], order: usize) -> Result<Vec<f64>> {
    ts.par_iter().map(|&t| invert_cdf(f, t, order)).collect()
}

const QUANTILE_WIDTH: f64 = 1e-8;

/// `inf{t : F(t) >= p}` by bisection on the inverted CDF.
pub fn quantile<F: LstFunction>(f: &F, p: f64, order: usize) -> Result<f64> {
    check_order(order)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {p}")));
    }
    if let Some(atom) = f.atom_at_zero() {
        if p <= atom {
            return Err(Error::Atom { p, atom });
        }
    }
    let mut hi = f.mean().filter(|m| *m > 0.0 && m.is_finite()).unwrap_or(1.0);
    let mut lo = 0.0;
    let mut expansions = 0;
    while invert_cdf(f, hi, order)? < p {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Numeric(format!("could not bracket the {p} quantile")));
        }
    }
    while hi - lo > QUANTILE_WIDTH {
        let mid = 0.5 * (lo + hi);
        if invert_cdf(f, mid, order)? >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Inverse-CDF sampler built from a tabulated inverted CDF.
///
/// The table is made monotone by a running maximum; draws at or below the
/// atom return zero and draws beyond the last tabulated level return the
/// table end.
#[derive(Debug, Clone)]
pub struct QuantileSampler {
    atom: f64,
    times: Vec<f64>,
    cdf: Vec<f64>,
}

impl QuantileSampler {
    /// Tabulates on `[0, t_max]` with spacing `step`, where `t_max` is the
    /// first doubling of the mean at which the CDF exceeds `1 - tail`.
    pub fn new<F: LstFunction>(f: &F, step: f64, tail: f64, order: usize) -> Result<Self> {
        check_order(order)?;
        if !(step > 0.0) || !(tail > 0.0 && tail < 1.0) {
            return Err(Error::Parameter(format!(
                "sampler needs step > 0 and tail in (0, 1), got step={step}, tail={tail}"
            )));
        }
        let atom = f.atom_at_zero().unwrap_or(0.0);
        let mut t_max = f.mean().filter(|m| *m > 0.0 && m.is_finite()).unwrap_or(1.0);
        let mut doublings = 0;
        while invert_cdf(f, t_max, order)? < 1.0 - tail {
            t_max *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return Err(Error::Numeric("tail of the law not reached".into()));
            }
        }
        let n = (t_max / step).ceil() as usize;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
        let mut cdf = invert_cdf_grid(f, &times[1..], order)?;
        cdf.insert(0, atom);
        let mut running = atom;
        for c in cdf.iter_mut() {
            running = running.max(*c);
            *c = running;
        }
        Ok(Self { atom, times, cdf })
    }

    pub fn atom(&self) -> f64 {
        self.atom
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().expect("nonempty table")
    }

    /// Value at level `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= self.atom {
            return 0.0;
        }
        let k = self.cdf.partition_point(|&c| c < u);
        if k >= self.cdf.len() {
            return self.t_max();
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        if c1 > c0 {
            t0 + (u - c0) / (c1 - c0) * (t1 - t0)
        } else {
            t1
        }
    }

    pub fn sample<G: rand::Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{fixtures, ApClass};
    use crate::levy::SubordinatorSpec;

    struct PointMass(f64);

    impl LstFunction for PointMass {
        fn eval<R: Real>(&self, alpha: R) -> Result<R> {
            Ok((-alpha * R::from_f64(self.0)).exp())
        }
    }

    fn exp1() -> JumpDist {
        JumpDist::Exponential { mean: 1.0 }
    }

    #[test]
    fn exact_weights_sum_to_zero() {
        // sum V_k = 0 and sum V_k / k = 1 (the transform of the unit step)
        for m in [8, 12, 16, 20] {
            let w = exact_weights(m);
            assert!(w.iter().fold(BigRational::zero(), |a, b| a + b).is_zero());
            let unit: BigRational = w
                .iter()
                .enumerate()
                .map(|(i, v)| v / BigRational::from_integer(BigInt::from(i + 1)))
                .fold(BigRational::zero(), |a, b| a + b);
            assert!(unit.is_one());
        }
    }

    #[test]
    fn known_weights_for_eight_terms() {
        let expected = [(-1, 3), (145, 3), (-906, 1), (16394, 3), (-43130, 3), (18730, 1), (-35840, 3), (8960, 3)];
        let w = exact_weights(4);
        for (v, (n, d)) in w.iter().zip(expected) {
            assert_eq!(*v, BigRational::new(BigInt::from(n), BigInt::from(d)));
        }
    }

    #[test]
    fn order_validation() {
        for bad in [0, 6, 7, 9, 22] {
            assert!(matches!(invert_cdf(&exp1(), 1.0, bad), Err(Error::Parameter(_))));
        }
        assert!(matches!(invert_cdf(&exp1(), 0.0, 16), Err(Error::Domain(_))));
    }

    #[test]
    fn exponential_cdf_at_one() {
        let v = invert_cdf(&exp1(), 1.0, DEFAULT_ORDER).unwrap();
        assert!((v - (1.0 - (-1f64).exp())).abs() < 1e-6);
        assert!((v - 0.632_121).abs() < 1e-6);
    }

    #[test]
    fn point_mass_step() {
        let v = invert_cdf(&PointMass(1.0), 2.0, DEFAULT_ORDER).unwrap();
        assert!((v - 1.0).abs() < 5e-3, "{v}");
    }

    fn max_error(f: &impl LstFunction, cdf: impl Fn(f64) -> f64, order: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..=199 {
            let t = 0.1 + (20.0 - 0.1) * i as f64 / 199.0;
            worst = worst.max((invert_cdf(f, t, order).unwrap() - cdf(t)).abs());
        }
        worst
    }

    #[test]
    fn round_trip_closed_form_pairs() {
        let erlang = JumpDist::Erlang { shape: 2, mean: 2.0 };
        let hyper = JumpDist::Hyperexponential { weights: vec![0.3, 0.7], means: vec![0.5, 3.0] };
        let e1 = max_error(&exp1(), |t| 1.0 - (-t).exp(), 16);
        let e2 = max_error(&erlang, |t| 1.0 - (-t).exp() * (1.0 + t), 16);
        let e3 = max_error(
            &hyper,
            |t| 1.0 - 0.3 * (-t / 0.5).exp() - 0.7 * (-t / 3.0).exp(),
            16,
        );
        assert!(e1 <= 1e-6 && e2 <= 1e-6 && e3 <= 1e-6, "{e1} {e2} {e3}");
    }

    #[test]
    fn monotone_in_t() {
        let m = fixtures::m1();
        let f = ModelTransform::new(&m, WaitKind::Particle).unwrap();
        let ts: Vec<f64> = (1..=60).map(|i| i as f64 * 0.25).collect();
        let cdf = invert_cdf_grid(&f, &ts, DEFAULT_ORDER).unwrap();
        for w in cdf.windows(2) {
            assert!(w[1] >= w[0] - 1e-6);
        }
    }

    #[test]
    fn mm1_customer_cdf() {
        // lambda = 0.5, mu = 1: P(W <= t) = 1 - rho exp(-(mu - lambda) t)
        let m = ApModel::new(vec![ApClass {
            b: 1.0,
            input: SubordinatorSpec::compound_poisson(0.5, exp1()).unwrap(),
        }])
        .unwrap();
        let f = ModelTransform::new(&m, WaitKind::Customer).unwrap();
        for i in 0..=99 {
            let t = 0.1 + 9.9 * i as f64 / 99.0;
            let exact = 1.0 - 0.5 * (-0.5 * t).exp();
            assert!((invert_cdf(&f, t, 16).unwrap() - exact).abs() < 1e-5);
        }
    }

    #[test]
    fn quantiles() {
        let q = quantile(&exp1(), 0.5, DEFAULT_ORDER).unwrap();
        assert!((q - 2f64.ln()).abs() < 1e-5);

        let m = fixtures::m1();
        let f = ModelTransform::new(&m, WaitKind::Workload).unwrap();
        assert!(matches!(quantile(&f, 0.3, 16), Err(Error::Atom { .. })));
        let near = quantile(&f, 0.4 + 1e-4, 16).unwrap();
        assert!(near < 1e-2, "{near}");
    }

    #[test]
    fn sampler_reproduces_exponential_moments() {
        use rand::SeedableRng;
        let s = QuantileSampler::new(&exp1(), 2e-3, 1e-9, 16).unwrap();
        assert_eq!(s.quantile(0.0), 0.0);
        assert!((s.quantile(0.5) - 2f64.ln()).abs() < 1e-6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mean = (0..n).map(|_| s.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn model_transform_metadata() {
        let m = fixtures::m2();
        let f = ModelTransform::new(&m, WaitKind::WorkloadPlusExcess).unwrap();
        assert_eq!(f.atom_at_zero(), Some(0.0));
        assert!((f.mean().unwrap() - 2.0).abs() < 1e-12);
        assert!(ModelTransform::new(&m, WaitKind::Customer).is_err());
        let w0 = ModelTransform::new(&m, WaitKind::Workload).unwrap();
        assert!((w0.atom_at_zero().unwrap() - 0.4).abs() < 1e-15);
    }
}
