//! Small descriptive statistics used by the experiments.

use rand::Rng;

use crate::rng::substream;

/// Type-7 (linear interpolation) sample quantile. `data` need not be sorted.
pub fn quantile(data: &[f64], q: f64) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    sorted_quantile(&v, q)
}

fn sorted_quantile(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(data: &[f64]) -> f64 {
    quantile(data, 0.5)
}

pub fn iqr(data: &[f64]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    sorted_quantile(&v, 0.75) - sorted_quantile(&v, 0.25)
}

/// Sample mean and its standard error.
pub fn mean_se(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    if data.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = data.iter().sum::<f64>() / n;
    if data.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Proportion `k / n` with its binomial standard error.
pub fn proportion(k: usize, n: usize) -> (f64, f64) {
    let p = k as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Bootstrap standard error of `stat`, with resampling driven by `seed`.
pub fn bootstrap_se(data: &[f64], stat: fn(&[f64]) -> f64, resamples: usize, seed: u64) -> f64 {
    if data.len() < 2 {
        return f64::NAN;
    }
    let mut rng = substream(seed, u64::MAX);
    let mut buf = vec![0.0; data.len()];
    let values: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = data[rng.random_range(0..data.len())];
            }
            stat(&buf)
        })
        .collect();
    mean_se(&values).1 * (resamples as f64).sqrt()
}
