//! The i.i.d. Gaussian-mixture description of collided ADS-B samples.
//!
//! Each packet chip is approximated as an i.i.d. Bernoulli variable that is
//! zero with probability `p = (M + 124) / (M + 240)`. The noiseless sum of K
//! such scaled sequences takes `2^K` values, and with complex AWGN every
//! received sample follows a `2^K`-component circular Gaussian mixture.
//!
//! Component `a` is indexed by its binary expansion `a = (b_K ... b_1)_2`
//! with `b_1` the least significant bit. Bit `b_k = 0` means drone `k` is
//! transmitting a one-chip, so the component mean is
//! `mu_a = sum_k (1 - b_k) h_k` and its weight is
//! `xi_a = p^{sum b_k} (1 - p)^{K - sum b_k}`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::waveform::{PACKET_ONES, PACKET_ZEROS};

/// Probability that a chip of a delayed packet window is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliParam {
    pub p: f64,
    pub max_delay: usize,
}

/// Zero-chip probability minimizing the divergence between the exact
/// packet distribution and an i.i.d. Bernoulli model.
pub fn bernoulli_p(max_delay: i64) -> Result<BernoulliParam> {
    if max_delay < 0 {
        return Err(Error::Domain(format!("max delay {max_delay} is negative")));
    }
    let m = max_delay as f64;
    let zeros = m + PACKET_ZEROS as f64;
    Ok(BernoulliParam {
        p: zeros / (zeros + PACKET_ONES as f64),
        max_delay: max_delay as usize,
    })
}

/// Mixture weights `xi_a` for `a = 0 .. 2^K`.
pub fn mixture_weights(p: f64, k: usize) -> Vec<f64> {
    (0..1usize << k)
        .map(|a| {
            let zeros = a.count_ones() as i32;
            p.powi(zeros) * (1.0 - p).powi(k as i32 - zeros)
        })
        .collect()
}

/// Component means `mu_a = sum_k (1 - b_k) h_k`.
pub fn mode_vector(h: &[Complex64]) -> Vec<Complex64> {
    let k = h.len();
    (0..1usize << k)
        .map(|a| {
            h.iter()
                .enumerate()
                .filter(|(i, _)| a & (1 << i) == 0)
                .map(|(_, hk)| *hk)
                .sum()
        })
        .collect()
}

/// Index of the component whose mean is `h_k` alone (1-based `k`).
pub fn singleton_index(k: usize, num_drones: usize) -> Result<usize> {
    if k == 0 || k > num_drones {
        return Err(Error::Domain(format!(
            "drone index {k} outside 1..={num_drones}"
        )));
    }
    Ok(((1usize << num_drones) - 1) - (1 << (k - 1)))
}

/// A fully specified mixture: weights, means and common variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureSpec {
    pub weights: Vec<f64>,
    pub modes: Vec<Complex64>,
    pub sigma2: f64,
}

impl GaussianMixtureSpec {
    /// Mixture implied by channel gains `h` (ordered by decreasing magnitude).
    pub fn from_gains(h: &[Complex64], p: f64, sigma2: f64) -> Self {
        Self {
            weights: mixture_weights(p, h.len()),
            modes: mode_vector(h),
            sigma2,
        }
    }

    pub fn num_components(&self) -> usize {
        self.modes.len()
    }
}

/// Numerically stable `log(sum(exp(x)))`. Returns `-inf` for an empty or
/// all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log density of a circular complex Gaussian `CN(mean, sigma2)` at `y`.
pub fn cn_logpdf(y: Complex64, mean: Complex64, sigma2: f64) -> f64 {
    -(PI * sigma2).ln() - (y - mean).norm_sqr() / sigma2
}

/// Log density of the mixture at `y`.
pub fn gm_logpdf(y: Complex64, spec: &GaussianMixtureSpec) -> Result<f64> {
    if !(spec.sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "mixture variance must be positive, got {}",
            spec.sigma2
        )));
    }
    let terms: Vec<f64> = spec
        .weights
        .iter()
        .zip(&spec.modes)
        .map(|(&w, &mu)| w.ln() + cn_logpdf(y, mu, spec.sigma2))
        .collect();
    Ok(log_sum_exp(&terms))
}
