//! Range and phase-offset estimates from singleton means.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default MAD rejection multiplier.
pub const DEFAULT_MAD_CUTOFF: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutlierFilter {
    None,
    /// Drop antennas whose magnitude deviates from the median by more than
    /// `cutoff` median absolute deviations.
    Mad {
        cutoff: f64,
    },
}

impl Default for OutlierFilter {
    fn default() -> Self {
        Self::Mad {
            cutoff: DEFAULT_MAD_CUTOFF,
        }
    }
}

/// Inverts free-space path loss: `r = lambda sqrt(P) / (4 pi |mu|)`.
pub fn range_from_magnitude(magnitude: f64, power_w: f64, wavelength_m: f64) -> Result<f64> {
    if !(magnitude > 0.0) || !magnitude.is_finite() {
        return Err(Error::Estimation(format!(
            "mode magnitude {magnitude} is not positive"
        )));
    }
    if !(power_w > 0.0) || !(wavelength_m > 0.0) {
        return Err(Error::Domain(
            "power and wavelength must be positive".into(),
        ));
    }
    Ok(wavelength_m * power_w.sqrt() / (4.0 * PI * magnitude))
}

pub fn estimate_range(mu_hat: Complex64, power_w: f64, wavelength_m: f64) -> Result<f64> {
    range_from_magnitude(mu_hat.norm(), power_w, wavelength_m)
}

/// Phase of `mu_hat` in `[0, 2pi)`.
///
/// Uses `atan(Im/Re)` for `Re >= 0` and `atan(Im/Re) + pi` otherwise; the
/// purely imaginary case takes the first branch (`+-pi/2`) before wrapping.
pub fn estimate_phase(mu_hat: Complex64) -> Result<f64> {
    if mu_hat == Complex64::new(0.0, 0.0) || !mu_hat.is_finite() {
        return Err(Error::Estimation(
            "phase of a zero mode is undefined".into(),
        ));
    }
    let raw = if mu_hat.re > 0.0 {
        (mu_hat.im / mu_hat.re).atan()
    } else if mu_hat.re == 0.0 {
        PI / 2.0 * mu_hat.im.signum()
    } else {
        (mu_hat.im / mu_hat.re).atan() + PI
    };
    Ok(wrap_phase(raw))
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Smallest absolute angular difference, in `[0, pi]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    d.min(TAU - d)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Averages per-antenna magnitudes, optionally rejecting MAD outliers. If
/// every antenna would be rejected the plain mean is returned.
pub fn combine_magnitudes(magnitudes: &[f64], filter: OutlierFilter) -> Result<f64> {
    if magnitudes.is_empty() {
        return Err(Error::Domain("no antenna magnitudes to combine".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let OutlierFilter::Mad { cutoff } = filter else {
        return Ok(mean(magnitudes));
    };
    let med = median(&sorted(magnitudes.iter().copied()));
    let mad = median(&sorted(magnitudes.iter().map(|m| (m - med).abs())));
    let kept: Vec<f64> = magnitudes
        .iter()
        .copied()
        .filter(|m| (m - med).abs() <= cutoff * mad)
        .collect();
    if kept.is_empty() {
        Ok(mean(magnitudes))
    } else {
        Ok(mean(&kept))
    }
}

/// Combines the per-antenna singleton estimates of one drone into a range.
pub fn combined_range(
    mu_hat_per_antenna: &[Complex64],
    filter: OutlierFilter,
    power_w: f64,
    wavelength_m: f64,
) -> Result<f64> {
    let mags: Vec<f64> = mu_hat_per_antenna.iter().map(|m| m.norm()).collect();
    range_from_magnitude(combine_magnitudes(&mags, filter)?, power_w, wavelength_m)
}
