//! Small statistics toolkit shared by the simulators and the comparison report.

use serde::{Deserialize, Serialize};

/// A point estimate with its standard error and the number of observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Estimate {
    /// `|value - reference| / std_error`; zero when both coincide exactly.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.value - reference).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }

    pub fn within(&self, reference: f64, sigmas: f64, allowance: f64) -> bool {
        (self.value - reference).abs() <= sigmas * self.std_error + allowance
    }
}

/// Sample mean and standard error of i.i.d. observations.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { value: f64::NAN, std_error: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate { value: mean, std_error: f64::INFINITY, n };
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    Estimate { value: mean, std_error: (var / n as f64).sqrt(), n }
}

pub fn variance(xs: &[f64]) -> f64 {
    mean_estimate(xs).std_error.powi(2) * xs.len() as f64
}

const DEFAULT_BATCHES: usize = 50;

/// Mean with a batch-means standard error, for correlated sequences such as
/// successive waiting times in one queue run.
pub fn batch_mean_estimate(xs: &[f64]) -> Estimate {
    let ones = vec![1.0; xs.len()];
    batch_ratio_estimate(xs, &ones)
}

/// Ratio estimator `sum num / sum den` with a batch-means standard error.
pub fn batch_ratio_estimate(num: &[f64], den: &[f64]) -> Estimate {
    assert_eq!(num.len(), den.len());
    let n = num.len();
    let total_num: f64 = num.iter().sum();
    let total_den: f64 = den.iter().sum();
    let value = total_num / total_den;
    let batches = DEFAULT_BATCHES.min(n);
    if batches < 2 {
        return Estimate { value, std_error: f64::INFINITY, n };
    }
    let size = n / batches;
    let ratios: Vec<f64> = (0..batches)
        .map(|k| {
            let lo = k * size;
            let hi = if k + 1 == batches { n } else { lo + size };
            let a: f64 = num[lo..hi].iter().sum();
            let b: f64 = den[lo..hi].iter().sum();
            a / b
        })
        .collect();
    let spread = mean_estimate(&ratios);
    Estimate { value, std_error: spread.std_error, n }
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let a = sorted_copy(a);
    let b = sorted_copy(b);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = (n as f64 * m as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    (d, kolmogorov_tail(lambda))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
