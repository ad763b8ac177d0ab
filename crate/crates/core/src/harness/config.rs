//! Experiment configuration: a versioned TOML tree with environment overrides.
//!
//! Any key can be overridden with an environment variable named
//! `ADSBR_<PATH>`, where nested tables are joined by a double underscore,
//! e.g. `ADSBR_SCENARIO__TRIALS=2000` or `ADSBR_SCENARIO__EM__RESTARTS=100`.
//! Values are parsed as TOML (`[0, 10]`, `true`, `"mad"`), falling back to a
//! plain string.

use serde::{Deserialize, Serialize};

use crate::channel::ADSB_WAVELENGTH_M;
use crate::em::{EmConfig, EmMode, InitStrategy};
use crate::error::{Error, Result};
use crate::extract::OutlierFilter;
use crate::pipeline::EstimatorConfig;
use crate::reorder::{ReorderMethod, MAX_LS_CONSTRAINED_K, MAX_LS_UNCONSTRAINED_K};

pub const CONFIG_VERSION: u32 = 1;
pub const ENV_PREFIX: &str = "ADSBR_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneSpec {
    pub power_w: f64,
    pub range_min_m: f64,
    pub range_max_m: f64,
}

impl DroneSpec {
    pub fn new(power_w: f64, range_min_m: f64, range_max_m: f64) -> Self {
        Self {
            power_w,
            range_min_m,
            range_max_m,
        }
    }

    pub fn mean_range(&self) -> f64 {
        0.5 * (self.range_min_m + self.range_max_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmSettings {
    pub epsilon: Option<f64>,
    pub max_iterations: usize,
    pub restarts: usize,
    pub mode: EmMode,
}

impl Default for EmSettings {
    fn default() -> Self {
        let d = EmConfig::default();
        Self {
            epsilon: d.epsilon,
            max_iterations: d.max_iterations,
            restarts: d.restarts,
            mode: d.mode,
        }
    }
}

impl EmSettings {
    pub fn to_config(&self, seed: u64) -> EmConfig {
        EmConfig {
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            restarts: self.restarts,
            init: InitStrategy::KMeansPlusPlus,
            seed,
            mode: self.mode,
        }
    }
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Listed nearest first; mean ranges must increase.
    pub drones: Vec<DroneSpec>,
    pub max_delay: usize,
    pub n_antennas: usize,
    pub wavelength_m: f64,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub alpha_r: Vec<f64>,
    pub alpha_theta: Vec<f64>,
    pub em: EmSettings,
    pub reorder: ReorderMethod,
    pub outlier_filter: OutlierFilter,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::preset(2).expect("preset 2 exists")
    }
}

impl Scenario {
    /// Standard geometries: 1 is three drones, 2 is two, 3 is one.
    pub fn preset(id: u32) -> Result<Self> {
        let drones = match id {
            1 => vec![
                DroneSpec::new(1.0, 500.0, 1000.0),
                DroneSpec::new(1.0, 1500.0, 2000.0),
                DroneSpec::new(1.0, 2500.0, 3000.0),
            ],
            2 => vec![
                DroneSpec::new(1.0, 500.0, 1500.0),
                DroneSpec::new(1.0, 2000.0, 3000.0),
            ],
            3 => vec![DroneSpec::new(1.0, 500.0, 3000.0)],
            _ => return Err(Error::Config(format!("unknown scenario preset {id}"))),
        };
        Ok(Self {
            name: format!("scenario-{id}"),
            drones,
            max_delay: 20,
            n_antennas: 5,
            wavelength_m: ADSB_WAVELENGTH_M,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            trials: 500,
            alpha_r: vec![0.05, 0.1],
            alpha_theta: vec![0.05, 0.1],
            em: EmSettings::default(),
            reorder: ReorderMethod::LsConstrained,
            outlier_filter: OutlierFilter::default(),
        })
    }

    pub fn num_drones(&self) -> usize {
        self.drones.len()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.drones.iter().map(|d| d.power_w).collect()
    }

    pub fn estimator(&self, em_seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            em: self.em.to_config(em_seed),
            reorder: self.reorder,
            outlier_filter: self.outlier_filter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_drones();
        if k == 0 {
            return Err(Error::Config("scenario needs at least one drone".into()));
        }
        for (i, d) in self.drones.iter().enumerate() {
            if !(d.power_w > 0.0 && d.range_min_m > 0.0 && d.range_max_m >= d.range_min_m) {
                return Err(Error::Config(format!(
                    "drone {}: invalid power or range bounds",
                    i + 1
                )));
            }
        }
        if self
            .drones
            .windows(2)
            .any(|w| !(w[0].mean_range() < w[1].mean_range()))
        {
            return Err(Error::Config(
                "drone mean ranges must be strictly increasing".into(),
            ));
        }
        if self.n_antennas == 0 || self.trials == 0 {
            return Err(Error::Config(
                "n_antennas and trials must be positive".into(),
            ));
        }
        if !(self.wavelength_m > 0.0) {
            return Err(Error::Config("wavelength must be positive".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config(
                "snr_db must be a nonempty list of finite values".into(),
            ));
        }
        if self
            .alpha_r
            .iter()
            .chain(&self.alpha_theta)
            .any(|a| !(*a > 0.0))
        {
            return Err(Error::Config("outage thresholds must be positive".into()));
        }
        if let OutlierFilter::Mad { cutoff } = self.outlier_filter {
            if !(cutoff >= 0.0) {
                return Err(Error::Config("MAD cutoff must be non-negative".into()));
            }
        }
        let ok = match self.reorder {
            ReorderMethod::LsConstrained => k <= MAX_LS_CONSTRAINED_K,
            ReorderMethod::LsUnconstrained => k <= MAX_LS_UNCONSTRAINED_K,
            _ => k == 4,
        };
        if !ok {
            return Err(Error::Config(format!(
                "reorder method {} does not support K={k}",
                self.reorder
            )));
        }
        self.em.to_config(0).validate()
    }
}

/// Range-tracking experiment along fixed trajectories of three drones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSettings {
    pub packets: usize,
    pub snr_db: f64,
    pub power_w: f64,
}

impl Default for TrackingSettings {
    fn default() -> Self {
        Self {
            packets: 100,
            snr_db: 20.0,
            power_w: 1.0,
        }
    }
}

/// Sweep over the maximum delay at a single SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MSensitivitySettings {
    pub max_delays: Vec<usize>,
    pub snr_db: f64,
}

impl Default for MSensitivitySettings {
    fn default() -> Self {
        Self {
            max_delays: vec![10, 20, 40],
            snr_db: 20.0,
        }
    }
}

/// Top-level configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    /// Exit with status 2 when the fraction of failed trials exceeds this.
    pub failure_ceiling: f64,
    pub scenario: Scenario,
    pub tracking: TrackingSettings,
    pub msens: MSensitivitySettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 1,
            failure_ceiling: 0.5,
            scenario: Scenario::default(),
            tracking: TrackingSettings::default(),
            msens: MSensitivitySettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML text, applying `overrides` as `(dotted.path, value)`.
    pub fn from_toml_with<I, K, V>(text: &str, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut tree: toml::Table = text.parse()?;
        for (path, value) in overrides {
            set_path(&mut tree, path.as_ref(), parse_value(value.as_ref()))?;
        }
        let cfg: Self = toml::Value::Table(tree).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, std::iter::empty::<(String, String)>())
    }

    /// Reads `path` (or the defaults when `None`) and applies environment
    /// overrides.
    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => toml::to_string(&Self::default()).map_err(|e| Error::Config(e.to_string()))?,
        };
        Self::from_toml_with(&text, env_overrides(std::env::vars()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if !(0.0..=1.0).contains(&self.failure_ceiling) {
            return Err(Error::Config("failure_ceiling must lie in [0, 1]".into()));
        }
        if self.msens.max_delays.is_empty() {
            return Err(Error::Config("msens.max_delays must not be empty".into()));
        }
        self.scenario.validate()
    }
}

/// Collects `ADSBR_*` variables as dotted lowercase paths.
pub fn env_overrides<I: IntoIterator<Item = (String, String)>>(vars: I) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            k.strip_prefix(ENV_PREFIX)
                .map(|rest| (rest.to_ascii_lowercase().replace("__", "."), v))
        })
        .collect();
    out.sort();
    out
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(tree: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty());
    let Some(last) = last else {
        return Err(Error::Config(format!("empty override key '{path}'")));
    };
    let mut node = tree;
    for p in parts {
        node = node
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{path}': '{p}' is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_geometry() {
        let s1 = Scenario::preset(1).unwrap();
        let b: Vec<(f64, f64)> = s1
            .drones
            .iter()
            .map(|d| (d.range_min_m, d.range_max_m))
            .collect();
        assert_eq!(b, vec![(500.0, 1000.0), (1500.0, 2000.0), (2500.0, 3000.0)]);
        let s2 = Scenario::preset(2).unwrap();
        let b: Vec<(f64, f64)> = s2
            .drones
            .iter()
            .map(|d| (d.range_min_m, d.range_max_m))
            .collect();
        assert_eq!(b, vec![(500.0, 1500.0), (2000.0, 3000.0)]);
        let s3 = Scenario::preset(3).unwrap();
        assert_eq!(
            (s3.drones[0].range_min_m, s3.drones[0].range_max_m),
            (500.0, 3000.0)
        );
        assert!(Scenario::preset(4).is_err());
        for s in [s1, s2, s3] {
            s.validate().unwrap();
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("version = 1\n[scenario]\ntrials = 7\n").unwrap();
        assert_eq!(cfg.scenario.trials, 7);
        assert_eq!(cfg.scenario.n_antennas, 5);
    }

    #[test]
    fn overrides_apply() {
        let env = env_overrides(vec![
            ("ADSBR_SCENARIO__TRIALS".to_string(), "42".to_string()),
            ("ADSBR_SCENARIO__EM__RESTARTS".to_string(), "3".to_string()),
            (
                "ADSBR_SCENARIO__SNR_DB".to_string(),
                "[5.0, 15.0]".to_string(),
            ),
            (
                "ADSBR_SCENARIO__REORDER".to_string(),
                "ls-unconstrained".to_string(),
            ),
            ("ADSBR_SEED".to_string(), "99".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ]);
        assert_eq!(env.len(), 5);
        let cfg = ExperimentConfig::from_toml_with("version = 1", env).unwrap();
        assert_eq!(cfg.scenario.trials, 42);
        assert_eq!(cfg.scenario.em.restarts, 3);
        assert_eq!(cfg.scenario.snr_db, vec![5.0, 15.0]);
        assert_eq!(cfg.scenario.reorder, ReorderMethod::LsUnconstrained);
        assert_eq!(cfg.seed, 99);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("version = 2").is_err());
        assert!(ExperimentConfig::from_toml("version = 1\nbogus = 3").is_err());
        let unordered = "version = 1\n[[scenario.drones]]\npower_w = 1.0\nrange_min_m = 2000.0\nrange_max_m = 3000.0\n[[scenario.drones]]\npower_w = 1.0\nrange_min_m = 500.0\nrange_max_m = 1500.0\n";
        assert!(matches!(
            ExperimentConfig::from_toml(unordered),
            Err(Error::Config(_))
        ));
        let k4 = "version = 1\n[scenario]\nreorder = \"subset-k4\"\n";
        assert!(matches!(
            ExperimentConfig::from_toml(k4),
            Err(Error::Config(_))
        ));
    }
}
