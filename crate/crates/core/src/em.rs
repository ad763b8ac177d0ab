//! Expectation-maximization of the mixture means.
//!
//! Weights `xi` and the variance are fixed by the signal model; only the
//! `2^K` means are estimated. With several antennas all rows share one latent
//! component label per sample, so the E-step multiplies the per-antenna
//! likelihoods and the M-step averages each antenna with the same
//! responsibilities.
//!
//! The returned means are in arbitrary order; [`crate::reorder`] resolves it.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::ObservationWindow;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Means indexed `[antenna][component]`.
pub type Modes = Vec<Vec<Complex64>>;

/// Relative floor applied to the noise variance, as a fraction of the mean
/// received power. Keeps responsibilities defined for noiseless input.
pub const VARIANCE_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    KMeansPlusPlus,
    /// Start every restart from these means.
    Provided(Modes),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmMode {
    /// One latent label per sample shared by all antennas.
    #[default]
    Joint,
    /// Independent EM on each antenna row.
    PerAntenna,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Stop when the change in the stacked mean vector falls below this.
    /// `None` uses `1e-6` times the RMS sample magnitude.
    pub epsilon: Option<f64>,
    pub max_iterations: usize,
    pub restarts: usize,
    pub init: InitStrategy,
    pub seed: u64,
    pub mode: EmMode,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            max_iterations: 200,
            restarts: 10,
            init: InitStrategy::KMeansPlusPlus,
            seed: 0,
            mode: EmMode::Joint,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) {
                return Err(Error::Config(format!(
                    "epsilon must be positive, got {eps}"
                )));
            }
        }
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(Error::Config(
                "max_iterations and restarts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Posterior component probabilities, `n_components` rows by `n_samples`
/// columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub n_components: usize,
    pub n_samples: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn new(n_components: usize, n_samples: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_components * n_samples {
            return Err(Error::Shape(format!(
                "expected {n_components} x {n_samples} responsibilities, got {}",
                data.len()
            )));
        }
        Ok(Self {
            n_components,
            n_samples,
            data,
        })
    }

    pub fn get(&self, component: usize, sample: usize) -> f64 {
        self.data[component * self.n_samples + sample]
    }

    pub fn component(&self, a: usize) -> &[f64] {
        &self.data[a * self.n_samples..(a + 1) * self.n_samples]
    }
}

/// Samples transposed to sample-major order for the inner loops.
struct Stacked {
    n_antennas: usize,
    n_samples: usize,
    ys: Vec<Complex64>,
}

impl Stacked {
    fn from_rows(rows: &[&[Complex64]]) -> Self {
        let n_antennas = rows.len();
        let n_samples = rows[0].len();
        let mut ys = Vec::with_capacity(n_antennas * n_samples);
        for n in 0..n_samples {
            ys.extend(rows.iter().map(|r| r[n]));
        }
        Self {
            n_antennas,
            n_samples,
            ys,
        }
    }

    fn sample(&self, n: usize) -> &[Complex64] {
        &self.ys[n * self.n_antennas..(n + 1) * self.n_antennas]
    }
}

fn check_modes(modes: &Modes, n_antennas: usize, n_components: usize) -> Result<()> {
    if modes.len() != n_antennas || modes.iter().any(|m| m.len() != n_components) {
        return Err(Error::Shape(format!(
            "expected {n_antennas} x {n_components} means"
        )));
    }
    Ok(())
}

/// E-step. Also returns the observed-data log-likelihood of `modes`.
fn e_step(
    data: &Stacked,
    modes: &Modes,
    log_weights: &[f64],
    sigma2: f64,
) -> (Responsibilities, f64) {
    let n_comp = log_weights.len();
    let n_samples = data.n_samples;
    // Component-major copy of the means so each sample reads one contiguous block.
    let mut means = Vec::with_capacity(n_comp * data.n_antennas);
    for a in 0..n_comp {
        means.extend(modes.iter().map(|m| m[a]));
    }
    let log_norm = data.n_antennas as f64 * (PI * sigma2).ln();
    let mut resp = vec![0.0; n_comp * n_samples];
    let mut logits = vec![0.0; n_comp];
    let mut loglik = 0.0;
    for n in 0..n_samples {
        let y = data.sample(n);
        let mut max = f64::NEG_INFINITY;
        for a in 0..n_comp {
            let mu = &means[a * data.n_antennas..(a + 1) * data.n_antennas];
            let dist: f64 = y.iter().zip(mu).map(|(y, m)| (y - m).norm_sqr()).sum();
            let v = log_weights[a] - dist / sigma2;
            logits[a] = v;
            max = max.max(v);
        }
        let mut sum = 0.0;
        for v in logits.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for a in 0..n_comp {
            resp[a * n_samples + n] = logits[a] / sum;
        }
        loglik += max + sum.ln() - log_norm;
    }
    (
        Responsibilities {
            n_components: n_comp,
            n_samples,
            data: resp,
        },
        loglik,
    )
}

fn m_step(data: &Stacked, resp: &Responsibilities) -> Result<Modes> {
    let mut modes = vec![vec![Complex64::new(0.0, 0.0); resp.n_components]; data.n_antennas];
    for a in 0..resp.n_components {
        let r = resp.component(a);
        let total: f64 = r.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Estimation(format!("component {a} collapsed")));
        }
        for (n, &w) in r.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (l, y) in data.sample(n).iter().enumerate() {
                modes[l][a] += y * w;
            }
        }
        for m in modes.iter_mut() {
            m[a] /= total;
        }
    }
    Ok(modes)
}

fn effective_variance(window: &ObservationWindow, sigma2: f64) -> Result<f64> {
    if !(sigma2 >= 0.0) {
        return Err(Error::Domain(format!("noise variance {sigma2} < 0")));
    }
    Ok(sigma2
        .max(VARIANCE_FLOOR_REL * window.mean_power())
        .max(f64::MIN_POSITIVE))
}

fn log_weights(xi: &[f64]) -> Vec<f64> {
    xi.iter().map(|w| w.ln()).collect()
}

fn all_rows(window: &ObservationWindow) -> Vec<&[Complex64]> {
    window.rows().collect()
}

/// Posterior probability of each component for each sample.
pub fn responsibilities(
    window: &ObservationWindow,
    modes: &Modes,
    xi: &[f64],
    sigma2: f64,
) -> Result<Responsibilities> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "variance must be positive, got {sigma2}"
        )));
    }
    check_modes(modes, window.n_antennas(), xi.len())?;
    let data = Stacked::from_rows(&all_rows(window));
    Ok(e_step(&data, modes, &log_weights(xi), sigma2).0)
}

/// Responsibility-weighted means. Fails if a component has zero total weight.
pub fn em_update(window: &ObservationWindow, resp: &Responsibilities) -> Result<Modes> {
    if resp.n_samples != window.n_samples() {
        return Err(Error::Shape(format!(
            "responsibilities cover {} samples, window has {}",
            resp.n_samples,
            window.n_samples()
        )));
    }
    m_step(&Stacked::from_rows(&all_rows(window)), resp)
}

/// Observed-data log-likelihood under the shared-label model:
/// `sum_n log sum_a xi_a prod_l CN(y_ln; mu_la, sigma2)`.
pub fn joint_log_likelihood(
    window: &ObservationWindow,
    modes: &Modes,
    xi: &[f64],
    sigma2: f64,
) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "variance must be positive, got {sigma2}"
        )));
    }
    check_modes(modes, window.n_antennas(), xi.len())?;
    let data = Stacked::from_rows(&all_rows(window));
    Ok(e_step(&data, modes, &log_weights(xi), sigma2).1)
}

/// k-means++ seeding on the stacked per-sample antenna vectors.
///
/// The first center is a uniformly chosen sample; each further center is a
/// sample drawn with probability proportional to its squared distance to
/// the nearest chosen center. When every sample coincides with a center,
/// the remaining centers are random samples nudged by a tiny offset.
pub fn kmeanspp_init<R: Rng + ?Sized>(
    window: &ObservationWindow,
    count: usize,
    rng: &mut R,
) -> Result<Modes> {
    kmeanspp_rows(&all_rows(window), count, rng)
}

fn kmeanspp_rows<R: Rng + ?Sized>(
    rows: &[&[Complex64]],
    count: usize,
    rng: &mut R,
) -> Result<Modes> {
    let n_samples = rows[0].len();
    if count == 0 || n_samples < count {
        return Err(Error::Shape(format!(
            "cannot seed {count} centers from {n_samples} samples"
        )));
    }
    let data = Stacked::from_rows(rows);
    let dist2 = |n: usize, c: &[Complex64]| -> f64 {
        data.sample(n)
            .iter()
            .zip(c)
            .map(|(y, m)| (y - m).norm_sqr())
            .sum()
    };
    let mut centers: Vec<Vec<Complex64>> = Vec::with_capacity(count);
    centers.push(data.sample(rng.random_range(0..n_samples)).to_vec());
    let mut nearest: Vec<f64> = (0..n_samples).map(|n| dist2(n, &centers[0])).collect();

    while centers.len() < count {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (n, &d) in nearest.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                pick = Some(n);
                if target < d {
                    break;
                }
                target -= d;
            }
            data.sample(pick.expect("positive total implies a candidate"))
                .to_vec()
        } else {
            let rms =
                (data.ys.iter().map(|y| y.norm_sqr()).sum::<f64>() / data.ys.len() as f64).sqrt();
            let scale = if rms > 0.0 { 1e-6 * rms } else { 1e-12 };
            data.sample(rng.random_range(0..n_samples))
                .iter()
                .map(|y| {
                    y + Complex64::new(
                        rng.random_range(-1.0..1.0) * scale,
                        rng.random_range(-1.0..1.0) * scale,
                    )
                })
                .collect()
        };
        for (n, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist2(n, &next));
        }
        centers.push(next);
    }

    let n_antennas = rows.len();
    Ok((0..n_antennas)
        .map(|l| centers.iter().map(|c| c[l]).collect())
        .collect())
}

/// One EM run from a fixed starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct EmRun {
    pub modes: Modes,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of the starting means and of every iterate.
    pub loglik_trace: Vec<f64>,
}

fn run_single(
    data: &Stacked,
    log_w: &[f64],
    sigma2: f64,
    init: Modes,
    epsilon: f64,
    max_iterations: usize,
) -> Result<EmRun> {
    let mut modes = init;
    let (mut resp, mut loglik) = e_step(data, &modes, log_w, sigma2);
    let mut trace = vec![loglik];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        let next = m_step(data, &resp)?;
        let change = next
            .iter()
            .zip(&modes)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()))
            .sum::<f64>()
            .sqrt();
        modes = next;
        iterations += 1;
        (resp, loglik) = e_step(data, &modes, log_w, sigma2);
        trace.push(loglik);
        if change < epsilon || change == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(EmRun {
        modes,
        loglik,
        iterations,
        converged,
        loglik_trace: trace,
    })
}

/// Runs EM from `init` without restarts, recording the likelihood path.
pub fn run_em_from(
    window: &ObservationWindow,
    xi: &[f64],
    sigma2: f64,
    init: Modes,
    epsilon: f64,
    max_iterations: usize,
) -> Result<EmRun> {
    check_modes(&init, window.n_antennas(), xi.len())?;
    let sigma2 = effective_variance(window, sigma2)?;
    let data = Stacked::from_rows(&all_rows(window));
    run_single(
        &data,
        &log_weights(xi),
        sigma2,
        init,
        epsilon,
        max_iterations,
    )
}

/// Best of all restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmOutcome {
    pub modes: Modes,
    pub loglik: f64,
    /// Iterations of the selected restart (summed over antennas in
    /// per-antenna mode).
    pub iterations: usize,
    pub converged: bool,
    pub best_restart: usize,
    pub restarts_run: usize,
    pub collapsed_restarts: usize,
}

struct RowsOutcome {
    run: EmRun,
    best_restart: usize,
    collapsed: usize,
}

fn run_restarts(
    rows: &[&[Complex64]],
    xi: &[f64],
    sigma2: f64,
    config: &EmConfig,
    seed: u64,
    antenna_subset: Option<usize>,
) -> Result<RowsOutcome> {
    let data = Stacked::from_rows(rows);
    let log_w = log_weights(xi);
    let rms = (data.ys.iter().map(|y| y.norm_sqr()).sum::<f64>() / data.ys.len() as f64).sqrt();
    let epsilon = config.epsilon.unwrap_or(1e-6 * rms);

    let mut best: Option<(usize, EmRun)> = None;
    let mut collapsed = 0;
    for r in 0..config.restarts {
        let init = match &config.init {
            InitStrategy::KMeansPlusPlus => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                kmeanspp_rows(rows, xi.len(), &mut rng)?
            }
            InitStrategy::Provided(modes) => match antenna_subset {
                Some(l) => vec![modes[l].clone()],
                None => modes.clone(),
            },
        };
        match run_single(&data, &log_w, sigma2, init, epsilon, config.max_iterations) {
            Ok(run) => {
                if best.as_ref().is_none_or(|(_, b)| run.loglik > b.loglik) {
                    best = Some((r, run));
                }
            }
            Err(Error::Estimation(_)) => collapsed += 1,
            Err(e) => return Err(e),
        }
    }
    let (best_restart, run) = best.ok_or_else(|| {
        Error::Estimation(format!("all {} EM restarts collapsed", config.restarts))
    })?;
    Ok(RowsOutcome {
        run,
        best_restart,
        collapsed,
    })
}

/// Estimates the `xi.len()` mixture means of `window`, keeping the restart
/// with the highest observed-data log-likelihood (lowest index on ties).
pub fn run_em(
    window: &ObservationWindow,
    xi: &[f64],
    sigma2: f64,
    config: &EmConfig,
) -> Result<EmOutcome> {
    config.validate()?;
    if let InitStrategy::Provided(modes) = &config.init {
        check_modes(modes, window.n_antennas(), xi.len())?;
    }
    let sigma2 = effective_variance(window, sigma2)?;
    let rows = all_rows(window);
    match config.mode {
        EmMode::Joint => {
            let out = run_restarts(&rows, xi, sigma2, config, config.seed, None)?;
            Ok(EmOutcome {
                modes: out.run.modes,
                loglik: out.run.loglik,
                iterations: out.run.iterations,
                converged: out.run.converged,
                best_restart: out.best_restart,
                restarts_run: config.restarts,
                collapsed_restarts: out.collapsed,
            })
        }
        EmMode::PerAntenna => {
            let mut modes = Vec::with_capacity(rows.len());
            let mut loglik = 0.0;
            let mut iterations = 0;
            let mut converged = true;
            let mut collapsed = 0;
            let mut best_restart = 0;
            for (l, row) in rows.iter().enumerate() {
                // Antenna 0 keeps the master seed so one antenna matches joint mode.
                let seed = if l == 0 {
                    config.seed
                } else {
                    derive_seed(config.seed, &[l as u64])
                };
                let out = run_restarts(&[row], xi, sigma2, config, seed, Some(l))?;
                modes.push(out.run.modes.into_iter().next().unwrap());
                loglik += out.run.loglik;
                iterations += out.run.iterations;
                converged &= out.run.converged;
                collapsed += out.collapsed;
                if l == 0 {
                    best_restart = out.best_restart;
                }
            }
            Ok(EmOutcome {
                modes,
                loglik,
                iterations,
                converged,
                best_restart,
                restarts_run: config.restarts * rows.len(),
                collapsed_restarts: collapsed,
            })
        }
    }
}
