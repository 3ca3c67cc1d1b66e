//! Parameter sweeps.
//!
//! A sweep file is an ordinary config plus axis lines:
//!
//! ```text
//! device.anl = 0.8
//! sweep.net.s = 0, 1.5, 3.5
//! sweep.net.th = 0, 0.6, 0.99
//! sweep.mode = cartesian      # or per-axis, zip
//! ```
//!
//! Every cell keeps the base `run.seed` unless `run.seed` is itself an axis,
//! so cells differ only in the swept settings.

use std::str::FromStr;

use rayon::prelude::*;

use super::config::{parse_lines, ConfigError, ExperimentConfig};
use super::run::{train, ExperimentRecord, TrainError};
use crate::data_ingest::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMode {
    /// Every combination of axis values; the first axis varies slowest.
    #[default]
    Cartesian,
    /// One axis at a time, the others held at the base value.
    PerAxis,
    /// The i-th cell takes the i-th value of every axis; axes must have
    /// equal length.
    Zip,
}

impl FromStr for SweepMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cartesian" => Ok(Self::Cartesian),
            "per-axis" => Ok(Self::PerAxis),
            "zip" => Ok(Self::Zip),
            _ => Err(format!("expected `cartesian`, `per-axis` or `zip`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub axes: Vec<Axis>,
    pub mode: SweepMode,
}

/// Splits config text into ordinary entries and sweep entries.
pub fn split_sweep_entries(
    entries: Vec<(usize, String, String)>,
) -> (Vec<(usize, String, String)>, Vec<(usize, String, String)>) {
    entries.into_iter().partition(|(_, k, _)| !k.starts_with("sweep."))
}

impl SweepSpec {
    /// `overrides` are applied to the base after the file and may not name
    /// sweep keys.
    pub fn from_text(text: &str, origin: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let (plain, sweep) = split_sweep_entries(parse_lines(text, origin)?);
        let mut base = ExperimentConfig::default();
        base.apply_entries(&plain, origin)?;
        for (k, v) in overrides {
            base.set(k, v)?;
        }
        let mut mode = SweepMode::default();
        let mut axes: Vec<Axis> = Vec::new();
        for (_, k, v) in sweep {
            if k == "sweep.mode" {
                mode = v.parse().map_err(|reason| ConfigError::BadValue {
                    key: k.clone(),
                    value: v.clone(),
                    reason,
                })?;
                continue;
            }
            let key = k["sweep.".len()..].to_owned();
            if base.get(&key).is_none() {
                return Err(ConfigError::UnknownKey(k));
            }
            if axes.iter().any(|a| a.key == key) {
                return Err(ConfigError::Duplicate {
                    key: k,
                    origin: origin.to_owned(),
                });
            }
            let values: Vec<String> = v
                .split(',')
                .map(|s| s.trim().to_owned())
                .filter(|s| !s.is_empty())
                .collect();
            if values.is_empty() {
                return Err(ConfigError::Invalid(format!("sweep axis `{key}` is empty")));
            }
            axes.push(Axis { key, values });
        }
        if mode == SweepMode::Zip {
            if let Some(a) = axes.iter().find(|a| a.values.len() != axes[0].values.len()) {
                return Err(ConfigError::Invalid(format!(
                    "zip sweep axes differ in length: `{}` has {}, `{}` has {}",
                    axes[0].key,
                    axes[0].values.len(),
                    a.key,
                    a.values.len()
                )));
            }
        }
        let spec = Self { base, axes, mode };
        for c in spec.cells()? {
            c.validate()?;
        }
        Ok(spec)
    }

    /// Cell configurations in run-id order. No axes gives the base alone.
    pub fn cells(&self) -> Result<Vec<ExperimentConfig>, ConfigError> {
        let mut out = Vec::new();
        match self.mode {
            SweepMode::Cartesian => {
                out.push(self.base.clone());
                for axis in &self.axes {
                    let mut next = Vec::with_capacity(out.len() * axis.values.len());
                    for c in &out {
                        for v in &axis.values {
                            let mut c = c.clone();
                            c.set(&axis.key, v)?;
                            next.push(c);
                        }
                    }
                    out = next;
                }
            }
            SweepMode::Zip => {
                let n = self.axes.first().map_or(1, |a| a.values.len());
                for i in 0..n {
                    let mut c = self.base.clone();
                    for axis in &self.axes {
                        c.set(&axis.key, &axis.values[i])?;
                    }
                    out.push(c);
                }
            }
            SweepMode::PerAxis => {
                if self.axes.is_empty() {
                    out.push(self.base.clone());
                }
                for axis in &self.axes {
                    for v in &axis.values {
                        let mut c = self.base.clone();
                        c.set(&axis.key, v)?;
                        out.push(c);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Outcome of one sweep cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub run_id: usize,
    /// Cell configuration with calibrated bounds filled in.
    pub config: ExperimentConfig,
    pub record: ExperimentRecord,
}

/// Trains every cell, running up to `jobs` at once. Results come back in
/// run-id order whatever the scheduling.
pub fn run_sweep(
    cells: &[ExperimentConfig],
    train_set: &Dataset,
    test_set: &Dataset,
    jobs: usize,
    on_done: impl Fn(&CellResult) + Sync,
) -> Result<Vec<CellResult>, (usize, TrainError)> {
    let run = || {
        cells
            .par_iter()
            .enumerate()
            .map(|(run_id, cfg)| {
                let (_, record, config) = train(cfg, train_set, test_set).map_err(|e| (run_id, e))?;
                let r = CellResult { run_id, config, record };
                on_done(&r);
                Ok(r)
            })
            .collect::<Result<Vec<_>, _>>()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}
