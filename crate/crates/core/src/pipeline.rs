//! End-to-end estimator: EM, per-antenna reordering, range and phase extraction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ObservationWindow;
use crate::em::{run_em, EmConfig, EmOutcome};
use crate::error::{Error, Result};
use crate::extract::{combined_range, estimate_phase, OutlierFilter};
use crate::mixture::{bernoulli_p, mixture_weights};
use crate::reorder::{reorder, ReorderMethod};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorConfig {
    pub em: EmConfig,
    pub reorder: ReorderMethod,
    pub outlier_filter: OutlierFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// Singleton means indexed `[antenna][drone]`, strongest drone first.
    pub h_hat: Vec<Vec<Complex64>>,
    pub ranges_m: Vec<f64>,
    /// Phase offsets in `[0, 2pi)`, indexed `[antenna][drone]`.
    pub phases: Vec<Vec<f64>>,
    pub reorder_residuals: Vec<f64>,
    /// Antennas on which the requested reorder method fell back.
    pub reorder_fallbacks: usize,
}

/// Ranges from per-antenna singleton means; `h_hat` is `[antenna][drone]`.
pub fn ranges_from_singletons(
    h_hat: &[Vec<Complex64>],
    powers_w: &[f64],
    wavelength_m: f64,
    filter: OutlierFilter,
) -> Result<Vec<f64>> {
    let k = powers_w.len();
    if h_hat.is_empty() || h_hat.iter().any(|h| h.len() != k) {
        return Err(Error::Shape(format!(
            "need at least one antenna with {k} singleton means"
        )));
    }
    (0..k)
        .map(|d| {
            let per_antenna: Vec<Complex64> = h_hat.iter().map(|h| h[d]).collect();
            combined_range(&per_antenna, filter, powers_w[d], wavelength_m)
        })
        .collect()
}

/// Runs the full estimator on one window. `powers_w` are the known transmit
/// powers in decreasing received-power order; `sigma2` is the noise variance.
pub fn estimate(
    window: &ObservationWindow,
    powers_w: &[f64],
    sigma2: f64,
    config: &EstimatorConfig,
) -> Result<(Estimate, EmOutcome)> {
    let k = window.num_drones;
    if powers_w.len() != k {
        return Err(Error::Shape(format!(
            "{} powers for {k} drones",
            powers_w.len()
        )));
    }
    let p = bernoulli_p(window.max_delay as i64)?.p;
    let xi = mixture_weights(p, k);
    let em = run_em(window, &xi, sigma2, &config.em)?;

    let mut h_hat = Vec::with_capacity(window.n_antennas());
    let mut residuals = Vec::with_capacity(window.n_antennas());
    let mut fallbacks = 0;
    for modes in &em.modes {
        let r = reorder(modes, k, config.reorder)?;
        residuals.push(r.residual);
        fallbacks += r.fell_back as usize;
        h_hat.push(r.h);
    }
    let ranges_m =
        ranges_from_singletons(&h_hat, powers_w, window.wavelength_m, config.outlier_filter)?;
    let phases = h_hat
        .iter()
        .map(|h| {
            h.iter()
                .map(|&m| estimate_phase(m))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Estimate {
            h_hat,
            ranges_m,
            phases,
            reorder_residuals: residuals,
            reorder_fallbacks: fallbacks,
        },
        em,
    ))
}
