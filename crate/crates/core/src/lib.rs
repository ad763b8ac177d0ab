//! Joint range and phase-offset estimation for colliding ADS-B packets.
//!
//! When K uncoordinated transmitters collide, each received sample is a
//! subset sum of their channel gains plus noise. Modelling the packet chips
//! as i.i.d. Bernoulli turns the samples into a `2^K`-component Gaussian
//! mixture whose singleton means are the gains themselves. The crate fits
//! that mixture with EM, resolves the order of the fitted means, and turns
//! the gains into ranges (via free-space path loss) and phase offsets.
//!
//! ```
//! use adsb_ranging::channel::{synthesize, DroneTruth, NoiseParams, ADSB_WAVELENGTH_M};
//! use adsb_ranging::pipeline::{estimate, EstimatorConfig};
//!
//! let drones = vec![
//!     DroneTruth { power_w: 1.0, range_m: 700.0, phases: vec![1.0], delay: 4 },
//!     DroneTruth { power_w: 1.0, range_m: 2600.0, phases: vec![2.5], delay: 11 },
//! ];
//! let syn = synthesize(&drones, NoiseParams { sigma2: 0.0, seed: 1 }, ADSB_WAVELENGTH_M, 20, 1)?;
//! let (est, _) = estimate(&syn.window, &[1.0, 1.0], 0.0, &EstimatorConfig::default())?;
//! assert!((est.ranges_m[0] - 700.0).abs() < 1e-6);
//! # Ok::<(), adsb_ranging::Error>(())
//! ```

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod assignment;
pub mod channel;
pub mod em;
pub mod error;
pub mod extract;
pub mod harness;
pub mod mixture;
pub mod pipeline;
pub mod reorder;
pub mod seed;
pub mod waveform;

pub use error::{Error, Result};
