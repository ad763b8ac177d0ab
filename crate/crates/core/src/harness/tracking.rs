//! Per-packet range tracking of three drones on periodic trajectories.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Scenario, TrackingSettings};
use super::par_map;
use crate::channel::{snr_to_sigma2, synthesize, DroneTruth, NoiseParams};
use crate::error::{Error, Result};
use crate::pipeline::estimate;
use crate::reorder::{ReorderMethod, MAX_LS_UNCONSTRAINED_K};
use crate::seed::derive_seed;

const TRACK_STREAM: u64 = 1;
const TRACK_DRONES: usize = 3;
const TRACK_CENTERS: [f64; TRACK_DRONES] = [750.0, 1750.0, 2750.0];

/// Range of drone `k` (0-based) at packet index `n`.
pub fn trajectory(k: usize, n: f64) -> f64 {
    match k {
        0 => 750.0 + 250.0 * (0.1 * PI * n).cos(),
        1 => 1750.0 + 250.0 * (0.05 * PI * n + PI / 2.0).cos(),
        2 => 2750.0 + 250.0 * (0.2 * PI * n - PI / 3.0).cos(),
        _ => panic!("trajectory defined for drones 0..3"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub packet: usize,
    /// 1-based, nearest first.
    pub drone: usize,
    pub range_true_m: f64,
    /// `None` when the estimator failed on this packet.
    pub range_est_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneTrackSummary {
    pub drone: usize,
    /// Mean squared range error over successful packets.
    pub mse_m2: f64,
    pub median_rel_err: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingResult {
    pub rows: Vec<TrackRow>,
    pub summary: Vec<DroneTrackSummary>,
}

/// Estimates every packet `n = 1..=packets` independently, with fresh
/// phases, delays and noise per packet. Antenna count, delay bound,
/// wavelength and estimator settings come from `scenario`.
pub fn run_tracking(
    settings: &TrackingSettings,
    scenario: &Scenario,
    master_seed: u64,
) -> Result<TrackingResult> {
    let supported = match scenario.reorder {
        ReorderMethod::LsConstrained => true,
        ReorderMethod::LsUnconstrained => TRACK_DRONES <= MAX_LS_UNCONSTRAINED_K,
        _ => false,
    };
    if !supported {
        return Err(Error::Config(format!(
            "reorder method {} cannot track three drones",
            scenario.reorder
        )));
    }
    if settings.packets == 0 || !(settings.power_w > 0.0) {
        return Err(Error::Config(
            "tracking needs packets > 0 and positive power".into(),
        ));
    }
    let means: Vec<(f64, f64)> = TRACK_CENTERS
        .iter()
        .map(|&r| (settings.power_w, r))
        .collect();
    let sigma2 = snr_to_sigma2(settings.snr_db, &means, scenario.wavelength_m)?;
    let powers = vec![settings.power_w; TRACK_DRONES];

    let per_packet = par_map(settings.packets, |i| {
        let n = i + 1;
        let path = |j: u64| derive_seed(master_seed, &[TRACK_STREAM, n as u64, j]);
        let mut rng = ChaCha8Rng::seed_from_u64(path(0));
        let drones: Vec<DroneTruth> = (0..TRACK_DRONES)
            .map(|k| DroneTruth {
                power_w: settings.power_w,
                range_m: trajectory(k, n as f64),
                phases: (0..scenario.n_antennas)
                    .map(|_| rng.random_range(0.0..TAU))
                    .collect(),
                delay: rng.random_range(0..=scenario.max_delay),
            })
            .collect();
        let est = synthesize(
            &drones,
            NoiseParams {
                sigma2,
                seed: path(1),
            },
            scenario.wavelength_m,
            scenario.max_delay,
            scenario.n_antennas,
        )
        .and_then(|syn| estimate(&syn.window, &powers, sigma2, &scenario.estimator(path(2))))
        .ok();
        (0..TRACK_DRONES)
            .map(|k| TrackRow {
                packet: n,
                drone: k + 1,
                range_true_m: drones[k].range_m,
                range_est_m: est.as_ref().map(|(e, _)| e.ranges_m[k]),
            })
            .collect::<Vec<_>>()
    });
    let rows: Vec<TrackRow> = per_packet.into_iter().flatten().collect();

    let summary = (1..=TRACK_DRONES)
        .map(|drone| {
            let mine: Vec<&TrackRow> = rows.iter().filter(|r| r.drone == drone).collect();
            let ok: Vec<(f64, f64)> = mine
                .iter()
                .filter_map(|r| r.range_est_m.map(|e| (r.range_true_m, e)))
                .collect();
            let mse = ok.iter().map(|(t, e)| (t - e).powi(2)).sum::<f64>() / ok.len().max(1) as f64;
            let mut rel: Vec<f64> = ok.iter().map(|(t, e)| (t - e).abs() / t).collect();
            rel.sort_by(f64::total_cmp);
            let median = match rel.len() {
                0 => f64::NAN,
                n if n % 2 == 1 => rel[n / 2],
                n => 0.5 * (rel[n / 2 - 1] + rel[n / 2]),
            };
            DroneTrackSummary {
                drone,
                mse_m2: if ok.is_empty() { f64::NAN } else { mse },
                median_rel_err: median,
                failures: mine.len() - ok.len(),
            }
        })
        .collect();
    Ok(TrackingResult { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_offsets() {
        assert!((trajectory(0, 0.0) - 1000.0).abs() < 1e-9);
        assert!((trajectory(1, 0.0) - 1750.0).abs() < 1e-9);
        assert!((trajectory(2, 0.0) - 2875.0).abs() < 1e-9);
        for n in 1..=100 {
            let n = n as f64;
            assert!(trajectory(0, n) < trajectory(1, n) && trajectory(1, n) < trajectory(2, n));
        }
    }

    #[test]
    fn short_track_is_deterministic() {
        let sc = Scenario {
            n_antennas: 2,
            ..Scenario::preset(1).unwrap()
        };
        let st = TrackingSettings {
            packets: 3,
            snr_db: 30.0,
            power_w: 1.0,
        };
        let a = run_tracking(&st, &sc, 9).unwrap();
        assert_eq!(a, run_tracking(&st, &sc, 9).unwrap());
        assert_eq!(a.rows.len(), 9);
        assert_eq!(a.rows[4].packet, 2);
        assert_eq!(a.rows[4].drone, 2);
    }

    #[test]
    fn rejects_k4_methods() {
        let sc = Scenario {
            reorder: ReorderMethod::WeightedK4,
            ..Scenario::preset(1).unwrap()
        };
        assert!(run_tracking(&TrackingSettings::default(), &sc, 1).is_err());
    }
}
