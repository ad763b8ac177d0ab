//! Free-space propagation, superposition of delayed packets and complex AWGN.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{apply_delay, build_packet, window_len, DelayedWindow, PayloadBits};

/// Carrier wavelength at 1090 MHz, in meters.
pub const ADSB_WAVELENGTH_M: f64 = 0.2752;

/// Free-space path loss `(lambda / (4 pi r))^2`.
pub fn path_loss(range_m: f64, wavelength_m: f64) -> Result<f64> {
    if !(range_m > 0.0) || !(wavelength_m > 0.0) {
        return Err(Error::Domain(format!(
            "path loss needs positive range and wavelength, got r={range_m}, lambda={wavelength_m}"
        )));
    }
    Ok((wavelength_m / (4.0 * PI * range_m)).powi(2))
}

/// Ground truth for one transmitter in one observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneTruth {
    pub power_w: f64,
    pub range_m: f64,
    /// Carrier phase offset at each receive antenna, radians in `[0, 2pi)`.
    pub phases: Vec<f64>,
    pub delay: usize,
}

impl DroneTruth {
    pub fn amplitude(&self, wavelength_m: f64) -> Result<f64> {
        Ok((self.power_w * path_loss(self.range_m, wavelength_m)?).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGain {
    pub beta: f64,
    pub theta: f64,
}

impl ChannelGain {
    pub fn h(&self) -> Complex64 {
        Complex64::from_polar(self.beta, self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Variance per complex sample.
    pub sigma2: f64,
    pub seed: u64,
}

/// Received samples for one estimation window, `n_antennas` rows by
/// `n_samples` columns, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    samples: Vec<Complex64>,
    n_antennas: usize,
    n_samples: usize,
    pub wavelength_m: f64,
    pub num_drones: usize,
    pub max_delay: usize,
}

impl ObservationWindow {
    pub fn new(
        samples: Vec<Complex64>,
        n_antennas: usize,
        wavelength_m: f64,
        num_drones: usize,
        max_delay: usize,
    ) -> Result<Self> {
        let n_samples = window_len(max_delay);
        if n_antennas == 0 || samples.len() != n_antennas * n_samples {
            return Err(Error::Shape(format!(
                "expected {n_antennas} x {n_samples} samples, got {}",
                samples.len()
            )));
        }
        Ok(Self {
            samples,
            n_antennas,
            n_samples,
            wavelength_m,
            num_drones,
            max_delay,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn row(&self, antenna: usize) -> &[Complex64] {
        &self.samples[antenna * self.n_samples..(antenna + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.samples.chunks(self.n_samples)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Mean of `|y|^2` over all antennas and samples.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|y| y.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Keeps only the first `n` antennas.
    pub fn truncate_antennas(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_antennas {
            return Err(Error::Domain(format!(
                "cannot keep {n} of {} antennas",
                self.n_antennas
            )));
        }
        Ok(Self {
            samples: self.samples[..n * self.n_samples].to_vec(),
            n_antennas: n,
            ..self.clone()
        })
    }
}

/// Output of [`synthesize`]: the window plus everything needed to score it.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub window: ObservationWindow,
    /// Gains indexed `[antenna][drone]`.
    pub gains: Vec<Vec<ChannelGain>>,
    /// Noise-free chip windows per drone.
    pub chips: Vec<DelayedWindow>,
}

impl Synthesis {
    pub fn h(&self, antenna: usize) -> Vec<Complex64> {
        self.gains[antenna].iter().map(ChannelGain::h).collect()
    }
}

/// Builds `Y = H X + W` for the given drones.
///
/// Drones must be listed with strictly decreasing received power `P_k L_k`;
/// the estimator identifies transmitters only through that ordering.
pub fn synthesize(
    drones: &[DroneTruth],
    noise: NoiseParams,
    wavelength_m: f64,
    max_delay: usize,
    n_antennas: usize,
) -> Result<Synthesis> {
    if drones.is_empty() {
        return Err(Error::Config("at least one drone required".into()));
    }
    if n_antennas == 0 {
        return Err(Error::Config("at least one antenna required".into()));
    }
    if !(noise.sigma2 >= 0.0) {
        return Err(Error::Domain(format!(
            "noise variance {} < 0",
            noise.sigma2
        )));
    }
    let mut betas = Vec::with_capacity(drones.len());
    for (k, d) in drones.iter().enumerate() {
        if !(d.power_w > 0.0) {
            return Err(Error::Config(format!("drone {k}: power must be positive")));
        }
        if d.phases.len() != n_antennas {
            return Err(Error::Config(format!(
                "drone {k}: {} phases for {n_antennas} antennas",
                d.phases.len()
            )));
        }
        if d.delay > max_delay {
            return Err(Error::Config(format!(
                "drone {k}: delay {} exceeds {max_delay}",
                d.delay
            )));
        }
        betas.push(d.amplitude(wavelength_m)?);
    }
    if let Some(k) = betas.windows(2).position(|w| !(w[0] > w[1])) {
        return Err(Error::Config(format!(
            "received powers must be strictly decreasing, drone {} >= drone {}",
            k + 1,
            k
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let chips = drones
        .iter()
        .map(|d| {
            apply_delay(
                &build_packet(&PayloadBits::random(&mut rng)),
                d.delay,
                max_delay,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let gains: Vec<Vec<ChannelGain>> = (0..n_antennas)
        .map(|l| {
            drones
                .iter()
                .zip(&betas)
                .map(|(d, &beta)| ChannelGain {
                    beta,
                    theta: d.phases[l],
                })
                .collect()
        })
        .collect();

    let n_samples = window_len(max_delay);
    let noise_scale = (noise.sigma2 / 2.0).sqrt();
    let mut samples = Vec::with_capacity(n_antennas * n_samples);
    for gains_l in &gains {
        let h: Vec<Complex64> = gains_l.iter().map(ChannelGain::h).collect();
        for n in 0..n_samples {
            let mut y = Complex64::new(0.0, 0.0);
            for (hk, x) in h.iter().zip(&chips) {
                if x.chips[n] == 1 {
                    y += hk;
                }
            }
            if noise.sigma2 > 0.0 {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                y += Complex64::new(re, im) * noise_scale;
            }
            samples.push(y);
        }
    }

    Ok(Synthesis {
        window: ObservationWindow::new(samples, n_antennas, wavelength_m, drones.len(), max_delay)?,
        gains,
        chips,
    })
}

/// Noise variance that yields an average per-antenna SNR of `snr_db`.
///
/// `drones` holds `(power_w, mean_range_m)`; the average path loss of each
/// transmitter is evaluated at its mean range.
pub fn snr_to_sigma2(snr_db: f64, drones: &[(f64, f64)], wavelength_m: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::Domain(format!("SNR {snr_db} dB is not finite")));
    }
    let mut signal = 0.0;
    for &(power, mean_range) in drones {
        signal += power * path_loss(mean_range, wavelength_m)?;
    }
    Ok(signal / 10f64.powf(snr_db / 10.0))
}

const DUMP_MAGIC: &[u8; 8] = b"ADSBWIN1";

/// Writes a window as a 32-byte little-endian header followed by
/// interleaved `f64` (re, im) samples, row-major.
///
/// Header: magic (8), N_r (u32), N+1 (u32), K (u32), M (u32), wavelength (f64).
pub fn write_window<W: Write>(window: &ObservationWindow, mut out: W) -> Result<()> {
    out.write_all(DUMP_MAGIC)?;
    for v in [
        window.n_antennas,
        window.n_samples,
        window.num_drones,
        window.max_delay,
    ] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    out.write_all(&window.wavelength_m.to_le_bytes())?;
    for y in &window.samples {
        out.write_all(&y.re.to_le_bytes())?;
        out.write_all(&y.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_window<R: Read>(mut input: R) -> Result<ObservationWindow> {
    let mut header = [0u8; 32];
    input.read_exact(&mut header)?;
    if &header[..8] != DUMP_MAGIC {
        return Err(Error::Shape("bad window dump magic".into()));
    }
    let field =
        |i: usize| u32::from_le_bytes(header[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (n_antennas, n_samples, num_drones, max_delay) = (field(0), field(1), field(2), field(3));
    let wavelength_m = f64::from_le_bytes(header[24..32].try_into().unwrap());
    if n_samples != window_len(max_delay) {
        return Err(Error::Shape(format!(
            "dump has {n_samples} samples per row but M={max_delay}"
        )));
    }
    let mut buf = vec![0u8; n_antennas * n_samples * 16];
    input.read_exact(&mut buf)?;
    let samples = buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    ObservationWindow::new(samples, n_antennas, wavelength_m, num_drones, max_delay)
}
