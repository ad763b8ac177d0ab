//! WebAssembly bindings for the browser demo. Every export returns JSON.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use adsb_ranging::channel::{snr_to_sigma2, synthesize, DroneTruth, NoiseParams};
use adsb_ranging::em::EmConfig;
use adsb_ranging::harness::{run_sweep, run_tracking, Metric, Scenario, TrackingSettings};
use adsb_ranging::mixture::mode_vector;
use adsb_ranging::pipeline::{estimate, EstimatorConfig};

#[derive(Debug, Serialize)]
pub struct Constellation {
    /// Received samples on the first antenna as `[re, im]`.
    pub samples: Vec<[f64; 2]>,
    pub true_modes: Vec<[f64; 2]>,
    /// Singleton means recovered on the first antenna, strongest first.
    pub est_singletons: Vec<[f64; 2]>,
    pub ranges_true_m: Vec<f64>,
    pub ranges_est_m: Vec<f64>,
    pub em_iterations: usize,
}

fn xy(z: &Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn scenario(k: usize) -> Result<Scenario, String> {
    let id = match k {
        1 => 3,
        2 => 2,
        3 => 1,
        _ => return Err(format!("K must be 1, 2 or 3, got {k}")),
    };
    Scenario::preset(id).map_err(|e| e.to_string())
}

/// Synthesizes one collided window and runs the estimator on it.
pub fn constellation_data(
    k: usize,
    snr_db: f64,
    n_antennas: usize,
    seed: u64,
) -> Result<Constellation, String> {
    let sc = scenario(k)?;
    let n_antennas = n_antennas.clamp(1, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drones: Vec<DroneTruth> = sc
        .drones
        .iter()
        .map(|d| DroneTruth {
            power_w: d.power_w,
            range_m: rng.random_range(d.range_min_m..=d.range_max_m),
            phases: (0..n_antennas)
                .map(|_| rng.random_range(0.0..TAU))
                .collect(),
            delay: rng.random_range(0..=sc.max_delay),
        })
        .collect();
    let means: Vec<(f64, f64)> = sc
        .drones
        .iter()
        .map(|d| (d.power_w, d.mean_range()))
        .collect();
    let sigma2 = snr_to_sigma2(snr_db, &means, sc.wavelength_m).map_err(|e| e.to_string())?;
    let syn = synthesize(
        &drones,
        NoiseParams {
            sigma2,
            seed: rng.random(),
        },
        sc.wavelength_m,
        sc.max_delay,
        n_antennas,
    )
    .map_err(|e| e.to_string())?;
    let cfg = EstimatorConfig {
        em: EmConfig {
            seed: rng.random(),
            ..EmConfig::default()
        },
        ..EstimatorConfig::default()
    };
    let (est, em) = estimate(&syn.window, &sc.powers(), sigma2, &cfg).map_err(|e| e.to_string())?;
    Ok(Constellation {
        samples: syn.window.row(0).iter().map(xy).collect(),
        true_modes: mode_vector(&syn.h(0)).iter().map(xy).collect(),
        est_singletons: est.h_hat[0].iter().map(xy).collect(),
        ranges_true_m: drones.iter().map(|d| d.range_m).collect(),
        ranges_est_m: est.ranges_m,
        em_iterations: em.iterations,
    })
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub range_success: f64,
    pub phase_success: f64,
    pub std_err: f64,
}

/// `1 - P_out` for range and (circular) phase at `alpha` over an SNR grid.
pub fn sweep_data(
    k: usize,
    n_antennas: usize,
    trials: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<SweepPoint>, String> {
    let sc = Scenario {
        n_antennas: n_antennas.clamp(1, 8),
        trials: trials.clamp(1, 2000),
        alpha_r: vec![alpha],
        alpha_theta: vec![alpha],
        ..scenario(k)?
    };
    let res = run_sweep(&sc, seed).map_err(|e| e.to_string())?;
    Ok(sc
        .snr_db
        .iter()
        .map(|&g| {
            let r = res
                .report
                .find(Metric::Range, alpha, g, sc.max_delay)
                .expect("row exists");
            let p = res
                .report
                .find(Metric::PhaseCircular, alpha, g, sc.max_delay)
                .expect("row exists");
            SweepPoint {
                snr_db: g,
                range_success: r.success,
                phase_success: p.success,
                std_err: r.std_err,
            }
        })
        .collect())
}

#[derive(Debug, Serialize)]
pub struct TrackPoint {
    pub packet: usize,
    pub truth: Vec<f64>,
    /// `None` where estimation failed.
    pub estimate: Vec<Option<f64>>,
}

pub fn tracking_data(
    packets: usize,
    snr_db: f64,
    n_antennas: usize,
    seed: u64,
) -> Result<Vec<TrackPoint>, String> {
    let sc = Scenario {
        n_antennas: n_antennas.clamp(1, 8),
        ..scenario(3)?
    };
    let settings = TrackingSettings {
        packets: packets.clamp(1, 500),
        snr_db,
        power_w: 1.0,
    };
    let res = run_tracking(&settings, &sc, seed).map_err(|e| e.to_string())?;
    Ok(res
        .rows
        .chunks(3)
        .map(|c| TrackPoint {
            packet: c[0].packet,
            truth: c.iter().map(|r| r.range_true_m).collect(),
            estimate: c.iter().map(|r| r.range_est_m).collect(),
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn constellation(
    k: usize,
    snr_db: f64,
    n_antennas: usize,
    seed: u64,
) -> Result<String, JsError> {
    to_js(constellation_data(k, snr_db, n_antennas, seed))
}

#[wasm_bindgen]
pub fn snr_sweep(
    k: usize,
    n_antennas: usize,
    trials: usize,
    alpha: f64,
    seed: u64,
) -> Result<String, JsError> {
    to_js(sweep_data(k, n_antennas, trials, alpha, seed))
}

#[wasm_bindgen]
pub fn tracking(
    packets: usize,
    snr_db: f64,
    n_antennas: usize,
    seed: u64,
) -> Result<String, JsError> {
    to_js(tracking_data(packets, snr_db, n_antennas, seed))
}
