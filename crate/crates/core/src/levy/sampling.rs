//! Variate generators used for subordinator increments.
//!
//! Gamma and inverse-Gaussian draws are returned as natural logarithms. Grid
//! simulation asks for gamma increments with shapes around 1e-4, whose values
//! routinely sit below the smallest positive `f64`; the log keeps them strictly
//! positive and finite.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, Poisson, StandardNormal};

#[inline]
fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

/// Marsaglia-Tsang squeeze/rejection sampler for `Gamma(shape, 1)`, shape >= 1,
/// returning the log of the variate.
fn ln_gamma_unit_large<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = StandardNormal.sample(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open01(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d.ln() + v.ln();
        }
        let ln_v = v.ln();
        if u.ln() < 0.5 * x2 + d * (1.0 - v + ln_v) {
            return d.ln() + ln_v;
        }
    }
}

/// Log of a `Gamma(shape, rate)` draw, valid for every positive shape.
///
/// Shapes below one use `Gamma(a) = Gamma(1 + a) * U^(1/a)`, evaluated in log
/// space.
pub fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let ln_unit = if shape < 1.0 {
        let u = open01(rng);
        ln_gamma_unit_large(shape + 1.0, rng) + u.ln() / shape
    } else {
        ln_gamma_unit_large(shape, rng)
    };
    ln_unit - rate.ln()
}

/// Log of an inverse-Gaussian draw with the given mean and shape parameter.
///
/// Two-root transformation (Michael, Schucany and Haas). The larger root is
/// formed from positive terms only and the smaller one recovered from the
/// root product `mean^2`, which avoids the cancellation of the textbook form
/// when `mean / shape` is large.
pub fn ln_inverse_gaussian_variate<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let y = z * z;
    let my = mean * y;
    let big = mean + mean * my / (2.0 * shape)
        + mean / (2.0 * shape) * (4.0 * mean * shape * y + my * my).sqrt();
    let ln_small = 2.0 * mean.ln() - big.ln();
    let small = ln_small.exp();
    let u: f64 = rng.random();
    if u * (mean + small) <= mean {
        ln_small
    } else {
        big.ln()
    }
}

pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // Poisson::new only fails for non-positive or non-finite means
    let dist = Poisson::new(mean).expect("finite positive Poisson mean");
    let n: f64 = dist.sample(rng);
    n as u64
}

#[inline]
pub fn standard_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn gamma_moments_for_small_and_large_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(shape, rate) in &[(0.3, 2.0), (1.0, 1.0), (4.5, 0.5)] {
            let xs: Vec<f64> = (0..200_000)
                .map(|_| ln_gamma_variate(shape, rate, &mut rng).exp())
                .collect();
            let (m, v) = moments(&xs);
            let mean = shape / rate;
            let var = shape / (rate * rate);
            let se = (var / xs.len() as f64).sqrt();
            assert!((m - mean).abs() < 4.0 * se, "shape {shape}: mean {m} vs {mean}");
            assert!((v - var).abs() / var < 0.05, "shape {shape}: var {v} vs {var}");
        }
    }

    #[test]
    fn tiny_shape_gamma_stays_finite_in_log_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut underflowing = 0;
        for _ in 0..10_000 {
            let l = ln_gamma_variate(1e-4, 1.0, &mut rng);
            assert!(l.is_finite());
            if l.exp() == 0.0 {
                underflowing += 1;
            }
        }
        // most of these draws are not representable as f64 values
        assert!(underflowing > 5_000);
    }

    #[test]
    fn inverse_gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(mean, shape) in &[(1.0, 2.0), (1e-3, 1e-6), (0.5, 10.0)] {
            let xs: Vec<f64> = (0..200_000)
                .map(|_| ln_inverse_gaussian_variate(mean, shape, &mut rng).exp())
                .collect();
            let (m, v) = moments(&xs);
            let var = mean * mean * mean / shape;
            let se = (var / xs.len() as f64).sqrt();
            assert!((m - mean).abs() < 4.0 * se, "IG({mean},{shape}) mean {m}");
            assert!(xs.iter().all(|&x| x > 0.0));
            if var < 10.0 * mean * mean {
                assert!((v - var).abs() / var < 0.1, "IG({mean},{shape}) var {v} vs {var}");
            }
        }
    }
}
