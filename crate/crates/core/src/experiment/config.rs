//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, order does not matter and
//! unknown keys are rejected. [`ExperimentConfig::echo`] prints every key,
//! so an echoed config reproduces the run on its own.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::device_model::{n_max_for_bits, DeviceError, DeviceParams};
use crate::perceptron::ActivationKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: line {line}: expected `key = value`, found {text:?}")]
    Malformed {
        origin: String,
        line: usize,
        text: String,
    },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value {value:?} for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("`{key}` set twice ({origin})")]
    Duplicate { key: String, origin: String },
    #[error("{0}")]
    Invalid(String),
}

/// Either a fixed value or one estimated by the calibration pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Auto,
    Fixed(f64),
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Auto => f.write_str("auto"),
            Bound::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Bound {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Bound::Auto);
        }
        let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
        if v > 0.0 && v.is_finite() {
            Ok(Bound::Fixed(v))
        } else {
            Err("must be positive or `auto`".into())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    // device
    /// 0 selects the ideal-linear device.
    pub anl: f64,
    /// Overrides `anl` when present.
    pub k: Option<f64>,
    pub weight_bits: u32,
    pub g_min: f64,
    pub g_max: f64,
    // network
    pub hidden: usize,
    pub activation: ActivationKind,
    pub shift: f64,
    pub threshold: f64,
    pub eta: f64,
    pub upper_bound: Bound,
    // quantization
    pub quant_enabled: bool,
    pub neuron_bits: u32,
    pub backprop_bound: Bound,
    // run
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub train_limit: usize,
    pub test_limit: usize,
    pub calibration_samples: usize,
    pub histogram_bins: usize,
    pub histogram_every: usize,
    // data
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let data_dir = super::run::default_data_dir();
        Self {
            anl: 0.0,
            k: None,
            weight_bits: 8,
            g_min: 0.0,
            g_max: 1.0,
            hidden: 300,
            activation: ActivationKind::Sigmoid,
            shift: 0.0,
            threshold: 0.0,
            eta: 1.0,
            upper_bound: Bound::Auto,
            quant_enabled: true,
            neuron_bits: 8,
            backprop_bound: Bound::Auto,
            epochs: 15,
            batch: 10,
            seed: 1,
            train_limit: 0,
            test_limit: 0,
            calibration_samples: 1000,
            histogram_bins: 64,
            histogram_every: 0,
            train_images: data_dir.join("train-images-idx3-ubyte"),
            train_labels: data_dir.join("train-labels-idx1-ubyte"),
            test_images: data_dir.join("t10k-images-idx3-ubyte"),
            test_labels: data_dir.join("t10k-labels-idx1-ubyte"),
        }
    }
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "device.anl",
    "device.k",
    "device.weight_bits",
    "device.g_min",
    "device.g_max",
    "net.hidden",
    "net.activation",
    "net.s",
    "net.th",
    "net.eta",
    "net.upper_bound",
    "quant.enabled",
    "quant.neuron_bits",
    "quant.backprop_bound",
    "run.epochs",
    "run.batch",
    "run.seed",
    "run.train_limit",
    "run.test_limit",
    "run.calibration_samples",
    "run.histogram_bins",
    "run.histogram_every",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_owned(),
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_owned(),
            value: value.to_owned(),
            reason: "expected true or false".into(),
        }),
    }
}

/// Splits config text into `(line, key, value)` triples.
pub fn parse_lines(text: &str, origin: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Malformed {
                origin: origin.to_owned(),
                line: i + 1,
                text: raw.to_owned(),
            });
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Malformed {
                origin: origin.to_owned(),
                line: i + 1,
                text: raw.to_owned(),
            });
        }
        out.push((i + 1, k.to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "device.anl" => self.anl = parse(key, value)?,
            "device.k" => {
                self.k = if value.eq_ignore_ascii_case("none") || value.is_empty() {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "device.weight_bits" => self.weight_bits = parse(key, value)?,
            "device.g_min" => self.g_min = parse(key, value)?,
            "device.g_max" => self.g_max = parse(key, value)?,
            "net.hidden" => self.hidden = parse(key, value)?,
            "net.activation" => self.activation = parse(key, value)?,
            "net.s" => self.shift = parse(key, value)?,
            "net.th" => self.threshold = parse(key, value)?,
            "net.eta" => self.eta = parse(key, value)?,
            "net.upper_bound" => self.upper_bound = parse(key, value)?,
            "quant.enabled" => self.quant_enabled = parse_bool(key, value)?,
            "quant.neuron_bits" => self.neuron_bits = parse(key, value)?,
            "quant.backprop_bound" => self.backprop_bound = parse(key, value)?,
            "run.epochs" => self.epochs = parse(key, value)?,
            "run.batch" => self.batch = parse(key, value)?,
            "run.seed" => self.seed = parse(key, value)?,
            "run.train_limit" => self.train_limit = parse(key, value)?,
            "run.test_limit" => self.test_limit = parse(key, value)?,
            "run.calibration_samples" => self.calibration_samples = parse(key, value)?,
            "run.histogram_bins" => self.histogram_bins = parse(key, value)?,
            "run.histogram_every" => self.histogram_every = parse(key, value)?,
            "data.train_images" => self.train_images = PathBuf::from(value),
            "data.train_labels" => self.train_labels = PathBuf::from(value),
            "data.test_images" => self.test_images = PathBuf::from(value),
            "data.test_labels" => self.test_labels = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "device.anl" => self.anl.to_string(),
            "device.k" => self.k.map_or_else(|| "none".to_owned(), |k| k.to_string()),
            "device.weight_bits" => self.weight_bits.to_string(),
            "device.g_min" => self.g_min.to_string(),
            "device.g_max" => self.g_max.to_string(),
            "net.hidden" => self.hidden.to_string(),
            "net.activation" => self.activation.to_string(),
            "net.s" => self.shift.to_string(),
            "net.th" => self.threshold.to_string(),
            "net.eta" => self.eta.to_string(),
            "net.upper_bound" => self.upper_bound.to_string(),
            "quant.enabled" => self.quant_enabled.to_string(),
            "quant.neuron_bits" => self.neuron_bits.to_string(),
            "quant.backprop_bound" => self.backprop_bound.to_string(),
            "run.epochs" => self.epochs.to_string(),
            "run.batch" => self.batch.to_string(),
            "run.seed" => self.seed.to_string(),
            "run.train_limit" => self.train_limit.to_string(),
            "run.test_limit" => self.test_limit.to_string(),
            "run.calibration_samples" => self.calibration_samples.to_string(),
            "run.histogram_bins" => self.histogram_bins.to_string(),
            "run.histogram_every" => self.histogram_every.to_string(),
            "data.train_images" => self.train_images.display().to_string(),
            "data.train_labels" => self.train_labels.display().to_string(),
            "data.test_images" => self.test_images.display().to_string(),
            "data.test_labels" => self.test_labels.display().to_string(),
            _ => return None,
        })
    }

    /// Applies parsed entries on top of `self`; a key may appear once.
    pub fn apply_entries(
        &mut self,
        entries: &[(usize, String, String)],
        origin: &str,
    ) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for (_, k, v) in entries {
            if !seen.insert(k.as_str()) {
                return Err(ConfigError::Duplicate {
                    key: k.clone(),
                    origin: origin.to_owned(),
                });
            }
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_entries(&parse_lines(text, origin)?, origin)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `key = value` lines for every key.
    pub fn echo_lines(&self) -> Vec<String> {
        KEYS.iter()
            .map(|k| format!("{k} = {}", self.get(k).unwrap_or_default()))
            .collect()
    }

    pub fn echo(&self) -> String {
        let mut s = self.echo_lines().join("\n");
        s.push('\n');
        s
    }

    /// Resolves relative data paths against `base`.
    pub fn rebase_data_paths(&mut self, base: &Path) {
        for p in [
            &mut self.train_images,
            &mut self.train_labels,
            &mut self.test_images,
            &mut self.test_labels,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn device(&self) -> Result<DeviceParams, DeviceError> {
        let n_max = n_max_for_bits(self.weight_bits)?;
        match self.k {
            Some(k) => DeviceParams::from_k(self.g_min, self.g_max, n_max, k),
            None if self.anl == 0.0 => DeviceParams::ideal_linear(self.g_min, self.g_max, n_max),
            None => DeviceParams::from_anl(self.g_min, self.g_max, n_max, self.anl),
        }
    }

    /// ANL of the effective device.
    pub fn effective_anl(&self) -> f64 {
        self.device().map(|d| d.anl()).unwrap_or(self.anl)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.device().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.hidden == 0 {
            return invalid("net.hidden must be positive".into());
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return invalid(format!("net.eta must be finite and >= 0, got {}", self.eta));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return invalid(format!("net.th must be finite and >= 0, got {}", self.threshold));
        }
        if !self.shift.is_finite() {
            return invalid(format!("net.s must be finite, got {}", self.shift));
        }
        if !(1..=24).contains(&self.neuron_bits) {
            return invalid(format!("quant.neuron_bits must be 1..=24, got {}", self.neuron_bits));
        }
        if self.batch == 0 {
            return invalid("run.batch must be at least 1".into());
        }
        if self.histogram_bins == 0 {
            return invalid("run.histogram_bins must be at least 1".into());
        }
        Ok(())
    }
}
