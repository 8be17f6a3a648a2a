//! Experiment configuration, loaded from TOML.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::PolicyId;
use crate::cost::PriceVector;
use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::resource_pool::ResourceQuanta;
use crate::scenario::ScenarioConfig;
use crate::zeros::PipelineMode;

pub const SCHEMA_VERSION: u32 = 1;

/// Which modalities clients sense with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    Multimodal,
    VisualOnly,
    WirelessOnly,
}

/// Whether the gain window applies to each round or to the running total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    PerRound,
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResourceConfig {
    /// Time cells per communication round.
    pub time_cells: f64,
    /// Total bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Total compute rate, cycles/s.
    pub compute_rate: f64,
    pub quanta: ResourceQuanta,
    /// Multipliers on (time, frequency, compute) pools.
    pub scale: [f64; 3],
}

impl Default for ResourceConfig {
    fn default() -> Self {
        ResourceConfig {
            time_cells: 10.0,
            bandwidth_hz: 400e6,
            compute_rate: 1e6,
            quanta: ResourceQuanta::default(),
            scale: [1.0, 1.0, 1.0],
        }
    }
}

impl ResourceConfig {
    /// Whole-cell pool dimensions `(T̃, B̃, F̃)` after scaling; never below one.
    pub fn dims(&self) -> (usize, usize, usize) {
        let cells = |x: f64, s: f64| (x * s).max(1.0).floor() as usize;
        (
            cells(self.time_cells, self.scale[0]),
            cells((self.bandwidth_hz / self.quanta.freq).floor(), self.scale[1]),
            cells((self.compute_rate / self.quanta.compute).floor(), self.scale[2]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub model_down_bits: f64,
    pub model_up_bits: f64,
    /// CPU cycles per sample.
    pub kappa: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            model_down_bits: 100e6,
            model_up_bits: 100e6,
            kappa: 500.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketConfig {
    pub alpha: f64,
    pub beta: f64,
    pub theta0: f64,
    pub interval: f64,
    pub max_active: usize,
    pub target_mode: TargetMode,
    /// Read `theta0` and `interval` as fractions of the round's largest
    /// achievable gain.
    pub relative_target: bool,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            alpha: 1.0,
            beta: 1.0,
            theta0: 0.0,
            interval: 1e12,
            max_active: 10,
            target_mode: TargetMode::PerRound,
            relative_target: false,
        }
    }
}

impl MarketConfig {
    pub fn params(&self) -> MarketParams {
        MarketParams {
            alpha: self.alpha,
            beta: self.beta,
            theta0: self.theta0,
            interval: self.interval,
            max_active: self.max_active,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub rounds: u32,
    pub policy: PolicyId,
    pub pipeline: PipelineMode,
    pub sensing_mode: SensingMode,
    /// Learning gain per IID sample.
    pub lambda_sp: f64,
    /// Longest cost curve sampled per quote.
    pub workload_cap: u64,
    pub scenario: ScenarioConfig,
    pub resources: ResourceConfig,
    pub task: TaskConfig,
    pub prices: PriceVector,
    pub market: MarketConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            rounds: 10,
            policy: PolicyId::Siscc,
            pipeline: PipelineMode::Zeros,
            sensing_mode: SensingMode::Multimodal,
            lambda_sp: 0.05,
            workload_cap: 100_000,
            scenario: ScenarioConfig::default(),
            resources: ResourceConfig::default(),
            task: TaskConfig::default(),
            prices: PriceVector::default(),
            market: MarketConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let de = toml::Deserializer::new(s);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            cfg_err(&path, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let positive = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(cfg_err(path, format!("must be finite and positive, got {v}")))
            }
        };
        positive("lambda_sp", self.lambda_sp)?;
        for (name, v) in [
            ("prices.dt", self.prices.dt),
            ("prices.db", self.prices.db),
            ("prices.ds", self.prices.ds),
            ("prices.dtheta", self.prices.dtheta),
            ("prices.df", self.prices.df),
            ("resources.time_cells", self.resources.time_cells),
            ("resources.bandwidth_hz", self.resources.bandwidth_hz),
            ("resources.compute_rate", self.resources.compute_rate),
            ("resources.quanta.time", self.resources.quanta.time),
            ("resources.quanta.freq", self.resources.quanta.freq),
            ("resources.quanta.compute", self.resources.quanta.compute),
            ("scenario.area_side", self.scenario.area_side),
            ("scenario.geometry.d_vs", self.scenario.geometry.d_vs),
            ("scenario.sensing.f_vs", self.scenario.sensing.f_vs),
        ] {
            positive(name, v)?;
        }
        for (k, s) in self.resources.scale.iter().enumerate() {
            positive(&format!("resources.scale[{k}]"), *s)?;
        }
        if self.scenario.geometry.d_ws < self.scenario.geometry.d_vs {
            return Err(cfg_err("scenario.geometry.d_ws", "must be at least d_vs"));
        }
        if self.scenario.classes == 0 || self.scenario.classes > 255 {
            return Err(cfg_err("scenario.classes", "must be in 1..=255"));
        }
        if self.scenario.max_speed < 0.0 {
            return Err(cfg_err("scenario.max_speed", "must be nonnegative"));
        }
        for (name, v) in [
            ("task.model_down_bits", self.task.model_down_bits),
            ("task.model_up_bits", self.task.model_up_bits),
            ("task.kappa", self.task.kappa),
            ("market.alpha", self.market.alpha),
            ("market.beta", self.market.beta),
            ("market.theta0", self.market.theta0),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(cfg_err(name, format!("must be finite and nonnegative, got {v}")));
            }
        }
        if !(self.market.interval > 0.0) {
            return Err(cfg_err("market.interval", "must be positive"));
        }
        if self.workload_cap == 0 {
            return Err(cfg_err("workload_cap", "must be positive"));
        }
        Ok(())
    }

    /// Applies a `t:b:f` scale triple such as `0.25:0.5:0.5` or `1/4:1/2:1/2`.
    pub fn set_scale(&mut self, raw: &str) -> Result<()> {
        let parts: Vec<&str> = raw.split(':').collect();
        if parts.len() != 3 {
            return Err(cfg_err("resources.scale", format!("expected t:b:f, got `{raw}`")));
        }
        let mut out = [0.0; 3];
        for (k, p) in parts.iter().enumerate() {
            let v = match p.split_once('/') {
                Some((n, d)) => n.trim().parse::<f64>().ok().zip(d.trim().parse::<f64>().ok()).map(|(n, d)| n / d),
                None => p.trim().parse::<f64>().ok(),
            };
            match v {
                Some(v) if v.is_finite() && v > 0.0 => out[k] = v,
                _ => return Err(cfg_err("resources.scale", format!("bad component `{p}`"))),
            }
        }
        self.resources.scale = out;
        Ok(())
    }

    /// Sets a dotted path (for example `scenario.clients` or
    /// `resources.scale.1`) to a TOML value.
    pub fn with_override(&self, path: &str, value: toml::Value) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| cfg_err(path, e.to_string()))?;
        let mut cur = &mut root;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let last = i + 1 == keys.len();
            cur = match cur {
                toml::Value::Table(t) => {
                    let slot = t.get_mut(*key).ok_or_else(|| cfg_err(path, format!("no field `{key}`")))?;
                    if last {
                        *slot = coerce(slot, value.clone());
                        break;
                    }
                    slot
                }
                toml::Value::Array(a) => {
                    let idx: usize = key.parse().map_err(|_| cfg_err(path, format!("`{key}` is not an index")))?;
                    let slot = a.get_mut(idx).ok_or_else(|| cfg_err(path, format!("index {idx} out of range")))?;
                    if last {
                        *slot = coerce(slot, value.clone());
                        break;
                    }
                    slot
                }
                _ => return Err(cfg_err(path, format!("`{key}` is not a table"))),
            };
        }
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(root)
            .map_err(|e| cfg_err(&e.path().to_string(), e.into_inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Keeps integer/float kinds matching the field being replaced.
fn coerce(old: &toml::Value, new: toml::Value) -> toml::Value {
    match (old, &new) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
        (toml::Value::Integer(_), toml::Value::Float(f)) if f.fract() == 0.0 => toml::Value::Integer(*f as i64),
        _ => new,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn shipped_defaults_match() {
        let text = include_str!("../../../../configs/default.toml");
        assert_eq!(ExperimentConfig::from_toml_str(text).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str("schema_version = 1\nrounds = 3\n[scenario]\nclients = 5\n").unwrap();
        assert_eq!(cfg.rounds, 3);
        assert_eq!(cfg.scenario.clients, 5);
        assert_eq!(cfg.scenario.targets, 100);
    }

    #[test]
    fn unknown_key_reports_path() {
        match ExperimentConfig::from_toml_str("schema_version = 1\n[scenario]\nclientz = 5\n") {
            Err(Error::Config { path, message }) => {
                assert!(path.starts_with("scenario"), "{path}");
                assert!(message.contains("clientz"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("schema_version = 2\n"),
            Err(Error::Config { path, .. }) if path == "schema_version"
        ));
        assert!(matches!(
            ExperimentConfig::from_toml_str("[prices]\ndt = -1.0\n"),
            Err(Error::Config { path, .. }) if path == "prices.dt"
        ));
        assert!(ExperimentConfig::from_toml_str("policy = \"NOPE\"\n").is_err());
    }

    #[test]
    fn default_dims() {
        assert_eq!(ResourceConfig::default().dims(), (10, 11, 10));
        let mut r = ResourceConfig::default();
        r.scale = [0.25, 0.25, 0.25];
        assert_eq!(r.dims(), (2, 2, 2));
        r.scale = [0.01, 0.01, 0.01];
        assert_eq!(r.dims(), (1, 1, 1));
    }

    #[test]
    fn scale_and_override() {
        let mut cfg = ExperimentConfig::default();
        cfg.set_scale("1/4:1/2:0.5").unwrap();
        assert_eq!(cfg.resources.scale, [0.25, 0.5, 0.5]);
        assert!(cfg.set_scale("1:2").is_err());
        let c2 = cfg.with_override("scenario.clients", toml::Value::Integer(7)).unwrap();
        assert_eq!(c2.scenario.clients, 7);
        let c3 = cfg.with_override("resources.scale.1", toml::Value::Integer(2)).unwrap();
        assert_eq!(c3.resources.scale[1], 2.0);
        assert!(cfg.with_override("scenario.nope", toml::Value::Integer(1)).is_err());
    }
}
