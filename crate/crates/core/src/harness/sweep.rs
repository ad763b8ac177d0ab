//! Outage-probability sweeps over SNR and maximum delay.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{MSensitivitySettings, Scenario};
use super::par_map;
use crate::channel::{path_loss, snr_to_sigma2, synthesize, DroneTruth, NoiseParams};
use crate::error::Result;
use crate::extract::{circular_distance, wrap_phase};
use crate::pipeline::estimate;
use crate::seed::derive_seed;

/// Phase-outage events with true phase below this are skipped, since the
/// relative error `|dtheta| / theta` is meaningless near zero.
pub const PHASE_EXCLUSION_RAD: f64 = 1e-3;

pub(crate) const SWEEP_STREAM: u64 = 0;

/// Everything needed to audit or reproduce one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub trial: usize,
    pub snr_db: f64,
    pub max_delay: usize,
    pub n_antennas: usize,
    pub sigma2: f64,
    /// Seed of the payload bits and noise.
    pub signal_seed: u64,
    pub em_seed: u64,
    /// Drone order is strongest received power first.
    pub ranges_true_m: Vec<f64>,
    /// `[antenna][drone]`, in `[0, 2pi)`.
    pub phases_true: Vec<Vec<f64>>,
    pub delays: Vec<usize>,
    pub ranges_est_m: Option<Vec<f64>>,
    pub phases_est: Option<Vec<Vec<f64>>>,
    pub em_iterations: Option<usize>,
    pub em_restarts: Option<usize>,
    pub em_best_restart: Option<usize>,
    pub em_loglik: Option<f64>,
    pub reorder_fallbacks: Option<usize>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.ranges_est_m.is_none()
    }
}

/// Draws the geometry for trial `trial` and runs the estimator at `snr_db`.
///
/// Geometry, payloads, noise shape and EM seeding depend only on
/// `(master_seed, trial)`, so different SNR or delay settings of the same
/// trial index share their random draws.
pub fn run_trial(
    scenario: &Scenario,
    snr_db: f64,
    trial: usize,
    master_seed: u64,
) -> Result<TrialRecord> {
    run_trial_in(scenario, snr_db, trial, master_seed, SWEEP_STREAM)
}

pub(crate) fn run_trial_in(
    scenario: &Scenario,
    snr_db: f64,
    trial: usize,
    master_seed: u64,
    stream: u64,
) -> Result<TrialRecord> {
    let k = scenario.num_drones();
    let n_r = scenario.n_antennas;
    let path = |j: u64| derive_seed(master_seed, &[stream, trial as u64, j]);
    let (geometry_seed, signal_seed, em_seed) = (path(0), path(1), path(2));

    let mut rng = ChaCha8Rng::seed_from_u64(geometry_seed);
    let mut drones: Vec<DroneTruth> = scenario
        .drones
        .iter()
        .map(|d| {
            let range_m = if d.range_max_m > d.range_min_m {
                rng.random_range(d.range_min_m..=d.range_max_m)
            } else {
                d.range_min_m
            };
            DroneTruth {
                power_w: d.power_w,
                range_m,
                phases: Vec::new(),
                delay: rng.random_range(0..=scenario.max_delay),
            }
        })
        .collect();
    for _ in 0..n_r {
        for d in drones.iter_mut() {
            d.phases.push(rng.random_range(0.0..TAU));
        }
    }
    let strength =
        |d: &DroneTruth| d.power_w * path_loss(d.range_m, scenario.wavelength_m).unwrap_or(0.0);
    drones.sort_by(|a, b| strength(b).total_cmp(&strength(a)));

    let means: Vec<(f64, f64)> = scenario
        .drones
        .iter()
        .map(|d| (d.power_w, d.mean_range()))
        .collect();
    let sigma2 = snr_to_sigma2(snr_db, &means, scenario.wavelength_m)?;

    let mut record = TrialRecord {
        experiment: scenario.name.clone(),
        trial,
        snr_db,
        max_delay: scenario.max_delay,
        n_antennas: n_r,
        sigma2,
        signal_seed,
        em_seed,
        ranges_true_m: drones.iter().map(|d| d.range_m).collect(),
        phases_true: (0..n_r)
            .map(|l| drones.iter().map(|d| wrap_phase(d.phases[l])).collect())
            .collect(),
        delays: drones.iter().map(|d| d.delay).collect(),
        ranges_est_m: None,
        phases_est: None,
        em_iterations: None,
        em_restarts: None,
        em_best_restart: None,
        em_loglik: None,
        reorder_fallbacks: None,
        error: None,
    };
    let powers: Vec<f64> = drones.iter().map(|d| d.power_w).collect();
    let outcome = synthesize(
        &drones,
        NoiseParams {
            sigma2,
            seed: signal_seed,
        },
        scenario.wavelength_m,
        scenario.max_delay,
        n_r,
    )
    .and_then(|syn| estimate(&syn.window, &powers, sigma2, &scenario.estimator(em_seed)));
    match outcome {
        Ok((est, em)) => {
            record.ranges_est_m = Some(est.ranges_m);
            record.phases_est = Some(est.phases);
            record.em_iterations = Some(em.iterations);
            record.em_restarts = Some(em.restarts_run);
            record.em_best_restart = Some(em.best_restart);
            record.em_loglik = Some(em.loglik);
            record.reorder_fallbacks = Some(est.reorder_fallbacks);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    debug_assert_eq!(record.ranges_true_m.len(), k);
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Range,
    /// `|theta_hat - theta| / theta` on wrapped angles.
    PhaseRaw,
    /// Circular distance divided by the wrapped true phase.
    PhaseCircular,
}

/// One `(snr, alpha, metric)` cell of an outage report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageRow {
    pub experiment: String,
    pub max_delay: usize,
    pub n_antennas: usize,
    pub snr_db: f64,
    pub metric: Metric,
    pub alpha: f64,
    /// `1 - P_out`.
    pub success: f64,
    /// `sqrt(success (1 - success) / trials)`.
    pub std_err: f64,
    /// Estimate events counted (drones, or drone-antenna pairs for phase).
    pub events: usize,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageReport {
    pub rows: Vec<OutageRow>,
    pub trials_total: usize,
    pub failures_total: usize,
}

impl OutageReport {
    pub fn failure_rate(&self) -> f64 {
        if self.trials_total == 0 {
            0.0
        } else {
            self.failures_total as f64 / self.trials_total as f64
        }
    }

    /// The row for `(metric, alpha, snr_db)` at the given maximum delay.
    pub fn find(
        &self,
        metric: Metric,
        alpha: f64,
        snr_db: f64,
        max_delay: usize,
    ) -> Option<&OutageRow> {
        self.rows.iter().find(|r| {
            r.metric == metric && r.alpha == alpha && r.snr_db == snr_db && r.max_delay == max_delay
        })
    }
}

fn row(
    records: &[&TrialRecord],
    metric: Metric,
    alpha: f64,
    outage: usize,
    events: usize,
) -> OutageRow {
    let first = records[0];
    let trials = records.len();
    let success = if events == 0 {
        f64::NAN
    } else {
        1.0 - outage as f64 / events as f64
    };
    OutageRow {
        experiment: first.experiment.clone(),
        max_delay: first.max_delay,
        n_antennas: first.n_antennas,
        snr_db: first.snr_db,
        metric,
        alpha,
        success,
        std_err: (success * (1.0 - success) / trials as f64).sqrt(),
        events,
        trials,
        failures: records.iter().filter(|r| r.failed()).count(),
    }
}

/// Outage rows for one group of trials sharing SNR and delay settings.
/// Failed trials count every one of their events as an outage.
pub fn outage_rows(
    records: &[&TrialRecord],
    alpha_r: &[f64],
    alpha_theta: &[f64],
) -> Vec<OutageRow> {
    if records.is_empty() {
        return Vec::new();
    }
    let mut rows = Vec::new();
    for &alpha in alpha_r {
        let (mut out, mut events) = (0, 0);
        for r in records {
            for (k, &truth) in r.ranges_true_m.iter().enumerate() {
                events += 1;
                let bad = match &r.ranges_est_m {
                    Some(est) => !((est[k] - truth).abs() / truth <= alpha),
                    None => true,
                };
                out += bad as usize;
            }
        }
        rows.push(row(records, Metric::Range, alpha, out, events));
    }
    for metric in [Metric::PhaseRaw, Metric::PhaseCircular] {
        for &alpha in alpha_theta {
            let (mut out, mut events) = (0, 0);
            for r in records {
                for (l, truths) in r.phases_true.iter().enumerate() {
                    for (k, &truth) in truths.iter().enumerate() {
                        if truth < PHASE_EXCLUSION_RAD {
                            continue;
                        }
                        events += 1;
                        let bad = match &r.phases_est {
                            Some(est) => {
                                let e = est[l][k];
                                let err = match metric {
                                    Metric::PhaseRaw => (e - truth).abs(),
                                    _ => circular_distance(e, truth),
                                };
                                !(err / truth <= alpha)
                            }
                            None => true,
                        };
                        out += bad as usize;
                    }
                }
            }
            rows.push(row(records, metric, alpha, out, events));
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub report: OutageReport,
    /// Ordered by setting, then trial index.
    pub records: Vec<TrialRecord>,
}

fn sweep_settings(
    scenario: &Scenario,
    settings: &[(usize, f64)],
    master_seed: u64,
) -> Result<SweepResult> {
    scenario.validate()?;
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for &(max_delay, snr_db) in settings {
        let sc = Scenario {
            max_delay,
            ..scenario.clone()
        };
        let batch = par_map(sc.trials, |t| run_trial(&sc, snr_db, t, master_seed))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&TrialRecord> = batch.iter().collect();
        rows.extend(outage_rows(&refs, &sc.alpha_r, &sc.alpha_theta));
        records.extend(batch);
    }
    let failures_total = records.iter().filter(|r| r.failed()).count();
    Ok(SweepResult {
        report: OutageReport {
            rows,
            trials_total: records.len(),
            failures_total,
        },
        records,
    })
}

/// Runs `scenario.trials` trials at every SNR in `scenario.snr_db`.
pub fn run_sweep(scenario: &Scenario, master_seed: u64) -> Result<SweepResult> {
    let settings: Vec<(usize, f64)> = scenario
        .snr_db
        .iter()
        .map(|&g| (scenario.max_delay, g))
        .collect();
    sweep_settings(scenario, &settings, master_seed)
}

/// Runs the scenario at one SNR for each maximum delay; the Bernoulli
/// parameter is recomputed from each delay.
pub fn run_m_sensitivity(
    scenario: &Scenario,
    settings: &MSensitivitySettings,
    master_seed: u64,
) -> Result<SweepResult> {
    let s: Vec<(usize, f64)> = settings
        .max_delays
        .iter()
        .map(|&m| (m, settings.snr_db))
        .collect();
    sweep_settings(scenario, &s, master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::DroneSpec;

    fn small(k_preset: u32) -> Scenario {
        Scenario {
            trials: 6,
            n_antennas: 2,
            snr_db: vec![10.0, 30.0],
            ..Scenario::preset(k_preset).unwrap()
        }
    }

    fn record(
        ranges_true: Vec<f64>,
        ranges_est: Option<Vec<f64>>,
        phases: Vec<Vec<f64>>,
        phases_est: Option<Vec<Vec<f64>>>,
    ) -> TrialRecord {
        TrialRecord {
            experiment: "t".into(),
            trial: 0,
            snr_db: 0.0,
            max_delay: 20,
            n_antennas: phases.len(),
            sigma2: 1.0,
            signal_seed: 0,
            em_seed: 0,
            ranges_true_m: ranges_true,
            phases_true: phases,
            delays: vec![],
            ranges_est_m: ranges_est,
            phases_est,
            em_iterations: None,
            em_restarts: None,
            em_best_restart: None,
            em_loglik: None,
            reorder_fallbacks: None,
            error: None,
        }
    }

    #[test]
    fn outage_counting() {
        let a = record(
            vec![1000.0, 2000.0],
            Some(vec![1040.0, 2500.0]),
            vec![vec![1.0, 6.2]],
            Some(vec![vec![1.02, 0.05]]),
        );
        let b = record(vec![1000.0, 2000.0], None, vec![vec![0.0005, 3.0]], None);
        let rows = outage_rows(&[&a, &b], &[0.05], &[0.05]);
        let range = &rows[0];
        assert_eq!(range.events, 4);
        assert_eq!(range.success, 0.25);
        assert_eq!(range.failures, 1);
        assert!((range.std_err - (0.25f64 * 0.75 / 2.0).sqrt()).abs() < 1e-15);
        // Phase: b's first antenna-drone pair is excluded.
        let raw = &rows[1];
        assert_eq!((raw.metric, raw.events), (Metric::PhaseRaw, 3));
        assert!((raw.success - 1.0 / 3.0).abs() < 1e-15);
        // Circular: 6.2 vs 0.05 differs by ~0.133 rad, 0.133 / 6.2 < 0.05.
        let circ = &rows[2];
        assert_eq!(circ.metric, Metric::PhaseCircular);
        assert!((circ.success - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_single_drone_is_perfect() {
        let sc = Scenario {
            snr_db: vec![300.0],
            ..small(3)
        };
        let res = run_sweep(&sc, 3).unwrap();
        let r = res.report.find(Metric::Range, 0.05, 300.0, 20).unwrap();
        assert_eq!(r.success, 1.0);
        assert_eq!(res.report.failures_total, 0);
    }

    #[test]
    fn deterministic_and_shares_geometry_across_snr() {
        let sc = small(2);
        let a = run_sweep(&sc, 11).unwrap();
        let b = run_sweep(&sc, 11).unwrap();
        assert_eq!(a, b);
        let (lo, hi) = a.records.split_at(sc.trials);
        for (x, y) in lo.iter().zip(hi) {
            assert_eq!(x.ranges_true_m, y.ranges_true_m);
            assert_eq!(x.delays, y.delays);
        }
        assert_eq!(a.report.rows.len(), 2 * (2 + 2 * 2));
        let c = run_sweep(&sc, 12).unwrap();
        assert_ne!(a.records[0].ranges_true_m, c.records[0].ranges_true_m);
    }

    #[test]
    fn truth_ordered_by_received_power() {
        let sc = Scenario {
            drones: vec![
                DroneSpec::new(1.0, 500.0, 1500.0),
                DroneSpec::new(1.0, 1000.0, 3000.0),
            ],
            trials: 20,
            snr_db: vec![20.0],
            n_antennas: 1,
            ..Scenario::preset(2).unwrap()
        };
        for t in 0..sc.trials {
            let r = run_trial(&sc, 20.0, t, 5).unwrap();
            assert!(r.ranges_true_m[0] <= r.ranges_true_m[1]);
        }
    }

    #[test]
    fn msens_rows() {
        let sc = small(2);
        let ms = MSensitivitySettings {
            max_delays: vec![10, 40],
            snr_db: 20.0,
        };
        let res = run_m_sensitivity(&sc, &ms, 2).unwrap();
        let range_rows: Vec<_> = res
            .report
            .rows
            .iter()
            .filter(|r| r.metric == Metric::Range)
            .collect();
        assert_eq!(range_rows.len(), 2 * sc.alpha_r.len());
        assert!(res
            .records
            .iter()
            .all(|r| r.delays.iter().all(|&m| m <= r.max_delay)));
        assert!(res
            .report
            .rows
            .iter()
            .all(|r| (0.0..=1.0).contains(&r.success)));
    }
}
