use std::path::PathBuf;

use thiserror::Error;

use super::config::{Bound, ConfigError, ExperimentConfig};
use super::metrics::{evaluate_with_sparsity, WeightHistogram};
use crate::data_ingest::{load_idx, minibatches, normalize_quantize, Dataset, IdxError, Split};
use crate::perceptron::{
    calibrate, one_hot, ActivationKind, ActivationSpec, Calibration, Network, NetworkConfig,
    NonFiniteLayer, PerceptronError, PulseAccumulator, PulseGrids, QuantSpec, SynapseArray,
};
use crate::perceptron::snapshot::{ConductanceGrid, Snapshot};

pub const INPUTS: usize = 784;
pub const OUTPUTS: usize = 10;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] PerceptronError),
    #[error(transparent)]
    Data(#[from] IdxError),
    #[error("non-finite value in layer {layer} at epoch {epoch}, batch {batch}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        layer: usize,
    },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("images have {found} pixels, the network expects {expected}")]
    InputSize { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Mean over training samples of the per-output squared error, taken
    /// on the forward passes made during the epoch.
    pub train_mse: f64,
    pub test_acc: f64,
    pub hidden_sparsity: f64,
    pub update_sparsity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub epochs: Vec<EpochMetrics>,
    /// `(epoch, histogram)` at each checkpoint; the last entry is always the
    /// final network.
    pub histograms: Vec<(usize, WeightHistogram)>,
}

impl ExperimentRecord {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.last().map(|m| m.test_acc)
    }
}

/// Train and test splits with default data locations.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), IdxError> {
    let raw_train = load_idx(&cfg.train_images, &cfg.train_labels)?;
    let raw_test = load_idx(&cfg.test_images, &cfg.test_labels)?;
    let q = QuantSpec::disabled();
    Ok((
        normalize_quantize(&raw_train, &q, Split::Train),
        normalize_quantize(&raw_test, &q, Split::Test),
    ))
}

fn quant_spec(cfg: &ExperimentConfig, backprop_bound: f64) -> QuantSpec {
    if cfg.quant_enabled {
        QuantSpec::new(cfg.neuron_bits, (0.0, 1.0), backprop_bound)
    } else {
        QuantSpec::disabled()
    }
}

fn activation(cfg: &ExperimentConfig, upper_bound: f64) -> ActivationSpec {
    match cfg.activation {
        ActivationKind::Sigmoid => ActivationSpec::sigmoid(cfg.shift),
        ActivationKind::Relu => ActivationSpec::relu(cfg.shift, upper_bound),
    }
}

fn network_config(cfg: &ExperimentConfig, upper_bound: f64, backprop_bound: f64) -> Result<NetworkConfig, TrainError> {
    let device = cfg
        .device()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(NetworkConfig {
        inputs: INPUTS,
        hidden: cfg.hidden,
        outputs: OUTPUTS,
        device,
        activation: activation(cfg, upper_bound),
        quant: quant_spec(cfg, backprop_bound),
        learning_rate: cfg.eta,
        threshold: cfg.threshold,
    })
}

/// Network settings for a configuration whose bounds are already fixed.
pub fn resolved_network_config(cfg: &ExperimentConfig) -> Result<NetworkConfig, TrainError> {
    let need = |key: &str, b: Bound, used: bool| match (b, used) {
        (Bound::Fixed(v), _) => Ok(v),
        (Bound::Auto, false) => Ok(1.0),
        (Bound::Auto, true) => Err(ConfigError::Invalid(format!("`{key}` must be a number here, not auto"))),
    };
    let ub = need("net.upper_bound", cfg.upper_bound, cfg.activation == ActivationKind::Relu)?;
    let bp = need("quant.backprop_bound", cfg.backprop_bound, cfg.quant_enabled)?;
    network_config(cfg, ub, bp)
}

/// Rebuilds the configuration and network stored in a snapshot.
pub fn network_from_snapshot(snap: &Snapshot) -> Result<(ExperimentConfig, Network), TrainError> {
    let mut cfg = ExperimentConfig::default();
    for (n, line) in snap.config.iter().enumerate() {
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
            origin: "snapshot".into(),
            line: n + 1,
            text: line.clone(),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    let net_cfg = resolved_network_config(&cfg)?;
    let grid = |g: &ConductanceGrid| SynapseArray::from_conductances(g.rows, g.cols, net_cfg.device, g.g.clone());
    let (l1, l2) = (grid(&snap.layer1)?, grid(&snap.layer2)?);
    if l1.cols() != l2.rows() {
        return Err(PerceptronError::DimensionMismatch {
            what: "snapshot layer 2 rows",
            expected: l1.cols(),
            got: l2.rows(),
        }
        .into());
    }
    let net_cfg = NetworkConfig {
        inputs: l1.rows(),
        hidden: l1.cols(),
        outputs: l2.cols(),
        ..net_cfg
    };
    Ok((cfg, Network::from_layers(&net_cfg, l1, l2)))
}

/// A freshly initialized network together with the configuration in which
/// every `auto` bound has been replaced by its calibrated value.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub network: Network,
    pub resolved: ExperimentConfig,
    pub calibration: Option<Calibration>,
}

/// Initializes the network from `cfg.seed` and resolves `auto` bounds with a
/// full-precision pass over the first `run.calibration_samples` training
/// images.
pub fn prepare(cfg: &ExperimentConfig, train: &Dataset) -> Result<Prepared, TrainError> {
    cfg.validate()?;
    let mut resolved = cfg.clone();
    let needs_ub = cfg.activation == ActivationKind::Relu && cfg.upper_bound == Bound::Auto;
    let needs_bp = cfg.quant_enabled && cfg.backprop_bound == Bound::Auto;
    let fixed = |b: Bound| match b {
        Bound::Fixed(v) => v,
        Bound::Auto => 1.0,
    };
    let probe_cfg = network_config(cfg, f64::INFINITY, 1.0)?;
    let mut calibration = None;
    if needs_ub || needs_bp {
        let probe = Network::init(&NetworkConfig { quant: QuantSpec::disabled(), ..probe_cfg }, cfg.seed)?;
        let inputs = train.requantized(&quant_spec(cfg, 1.0));
        let n = match cfg.calibration_samples {
            0 => inputs.len(),
            c => c.min(inputs.len()),
        };
        let cal = calibrate(&probe, (0..n).map(|i| (inputs.image(i), inputs.labels[i])))?;
        if needs_ub {
            resolved.upper_bound = Bound::Fixed(cal.relu_upper_bound());
        }
        if needs_bp {
            resolved.backprop_bound = Bound::Fixed(cal.backprop_bound());
        }
        calibration = Some(cal);
    }
    let net_cfg = network_config(&resolved, fixed(resolved.upper_bound), fixed(resolved.backprop_bound))?;
    let network = Network::init(&net_cfg, cfg.seed)?;
    Ok(Prepared {
        network,
        resolved,
        calibration,
    })
}

/// Runs `cfg.epochs` epochs of minibatch training on `net`, calling
/// `observer` after each epoch.
pub fn train_network(
    net: &mut Network,
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    mut observer: impl FnMut(&EpochMetrics, &Network),
) -> Result<ExperimentRecord, TrainError> {
    let train = train.requantized(&net.quant).truncated(cfg.train_limit);
    let test = test.requantized(&net.quant).truncated(cfg.test_limit);
    for d in [&train, &test] {
        if d.pixels_per_image != net.inputs() {
            return Err(TrainError::InputSize {
                expected: net.inputs(),
                found: d.pixels_per_image,
            });
        }
    }
    let mut record = ExperimentRecord {
        epochs: Vec::with_capacity(cfg.epochs),
        histograms: Vec::new(),
    };
    if cfg.epochs == 0 {
        return Ok(record);
    }
    if train.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let targets: Vec<Vec<f64>> = (0..net.outputs() as u8).map(|l| one_hot(l, net.outputs())).collect();
    let mut acc = PulseAccumulator::new(net);
    let mut grids = PulseGrids {
        dn1: Vec::new(),
        dn2: Vec::new(),
    };
    let mut x = Vec::with_capacity(train.pixels_per_image);
    for epoch in 1..=cfg.epochs {
        let batches = minibatches(train.len(), cfg.batch, cfg.seed, epoch as u64)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut sq_err = 0.0;
        let (mut zeros, mut total) = (0usize, 0usize);
        for (b, batch) in batches.iter().enumerate() {
            let abort = |layer| TrainError::NonFinite {
                epoch,
                batch: b + 1,
                layer,
            };
            for &i in batch {
                train.image_into(i, &mut x);
                let trace = net.forward(&x)?;
                if !trace.s_h.iter().all(|v| v.is_finite()) {
                    return Err(abort(1));
                }
                if !trace.s_o.iter().all(|v| v.is_finite()) {
                    return Err(abort(2));
                }
                let target = &targets[train.labels[i] as usize];
                sq_err += target
                    .iter()
                    .zip(&trace.o)
                    .map(|(t, o)| (t - o) * (t - o))
                    .sum::<f64>()
                    / target.len() as f64;
                let (o_bp, h_bp) = net.backward(&trace, target)?;
                if !o_bp.iter().all(|v| v.is_finite()) {
                    return Err(abort(2));
                }
                if !h_bp.iter().all(|v| v.is_finite()) {
                    return Err(abort(1));
                }
                acc.add(net, &trace, &o_bp, &h_bp)?;
            }
            acc.finish_into(&mut grids)
                .map_err(|NonFiniteLayer(layer)| abort(layer))?;
            zeros += grids.zeros();
            total += grids.len();
            net.update_weights(&grids)?;
        }
        let (test_acc, hidden_sparsity) = evaluate_with_sparsity(net, &test)?;
        let m = EpochMetrics {
            epoch,
            train_mse: sq_err / train.len() as f64,
            test_acc,
            hidden_sparsity,
            update_sparsity: if total == 0 { 0.0 } else { 100.0 * zeros as f64 / total as f64 },
        };
        record.epochs.push(m);
        let checkpoint = cfg.histogram_every > 0 && epoch % cfg.histogram_every == 0;
        if checkpoint || epoch == cfg.epochs {
            record
                .histograms
                .push((epoch, WeightHistogram::of_network(net, cfg.histogram_bins)));
        }
        observer(&m, net);
    }
    Ok(record)
}

/// [`prepare`] followed by [`train_network`].
pub fn train(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<(Network, ExperimentRecord, ExperimentConfig), TrainError> {
    let Prepared {
        mut network,
        resolved,
        ..
    } = prepare(cfg, train)?;
    let record = train_network(&mut network, &resolved, train, test, |_, _| {})?;
    Ok((network, record, resolved))
}

/// Default location of the MNIST files: `$RRAM_SIM_DATA` or `data/mnist`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os("RRAM_SIM_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}
