use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::activation::{apply_threshold, ActivationKind, ActivationSpec};
use super::quant::{QuantRange, QuantSpec};
use crate::device_model::{DeviceParams, SynapseState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptronError {
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("synapse ({i}, {j}) outside a {rows}x{cols} array")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), PerceptronError> {
    if expected == got {
        Ok(())
    } else {
        Err(PerceptronError::DimensionMismatch { what, expected, got })
    }
}

/// One fully-connected layer mapped onto a crossbar. Row `i` is the
/// pre-neuron, column `j` the post-neuron; cells are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseArray {
    rows: usize,
    cols: usize,
    cells: Vec<SynapseState>,
    g_ref: f64,
    device: DeviceParams,
}

impl SynapseArray {
    pub fn filled(rows: usize, cols: usize, device: DeviceParams, g: f64) -> Self {
        Self {
            rows,
            cols,
            cells: vec![SynapseState { g: g.clamp(device.g_min, device.g_max) }; rows * cols],
            g_ref: device.g_ref(),
            device,
        }
    }

    /// Builds an array from row-major conductances.
    pub fn from_conductances(
        rows: usize,
        cols: usize,
        device: DeviceParams,
        g: Vec<f64>,
    ) -> Result<Self, PerceptronError> {
        check_len("conductance grid", rows * cols, g.len())?;
        if let Some(bad) = g.iter().find(|&&v| !(v >= device.g_min && v <= device.g_max)) {
            return Err(PerceptronError::InvalidConfig(format!(
                "conductance {bad} outside [{}, {}]",
                device.g_min, device.g_max
            )));
        }
        Ok(Self {
            rows,
            cols,
            cells: g.into_iter().map(|g| SynapseState { g }).collect(),
            g_ref: device.g_ref(),
            device,
        })
    }

    fn random(rows: usize, cols: usize, device: DeviceParams, rng: &mut impl Rng) -> Self {
        let cells = (0..rows * cols)
            .map(|_| SynapseState {
                g: device.g_min + device.range() * rng.random::<f64>(),
            })
            .collect();
        Self {
            rows,
            cols,
            cells,
            g_ref: device.g_ref(),
            device,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn g_ref(&self) -> f64 {
        self.g_ref
    }

    pub fn device(&self) -> &DeviceParams {
        &self.device
    }

    pub fn cells(&self) -> &[SynapseState] {
        &self.cells
    }

    fn index(&self, i: usize, j: usize) -> Result<usize, PerceptronError> {
        if i < self.rows && j < self.cols {
            Ok(i * self.cols + j)
        } else {
            Err(PerceptronError::IndexOutOfRange {
                i,
                j,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    pub fn conductance(&self, i: usize, j: usize) -> Result<f64, PerceptronError> {
        Ok(self.cells[self.index(i, j)?].g)
    }

    pub fn set_conductance(&mut self, i: usize, j: usize, g: f64) -> Result<(), PerceptronError> {
        let idx = self.index(i, j)?;
        self.cells[idx].g = g.clamp(self.device.g_min, self.device.g_max);
        Ok(())
    }

    /// Signed weight seen by the weighted sum after the dummy-column
    /// subtraction.
    pub fn weight(&self, i: usize, j: usize) -> Result<f64, PerceptronError> {
        Ok(self.cells[self.index(i, j)?].g - self.g_ref)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().map(move |c| c.g - self.g_ref)
    }

    /// Applies one pulse count per synapse. Each device sees only its own
    /// state and its own count.
    pub fn apply_pulses(&mut self, dn: &[i32]) -> Result<(), PerceptronError> {
        check_len("pulse grid", self.cells.len(), dn.len())?;
        let device = self.device;
        for (cell, &d) in self.cells.iter_mut().zip(dn) {
            if d != 0 {
                *cell = device.apply_pulses(*cell, d);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub device: DeviceParams,
    pub activation: ActivationSpec,
    pub quant: QuantSpec,
    pub learning_rate: f64,
    pub threshold: f64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), PerceptronError> {
        let bad = |m: String| Err(PerceptronError::InvalidConfig(m));
        if self.inputs == 0 || self.hidden == 0 || self.outputs == 0 {
            return bad(format!(
                "layer sizes must be positive, got {}x{}x{}",
                self.inputs, self.hidden, self.outputs
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return bad(format!("threshold must be finite and >= 0, got {}", self.threshold));
        }
        if !self.activation.shift.is_finite() {
            return bad(format!("activation shift must be finite, got {}", self.activation.shift));
        }
        if self.activation.kind == ActivationKind::Relu && !(self.activation.upper_bound > 0.0) {
            return bad(format!("ReLU upper bound must be > 0, got {}", self.activation.upper_bound));
        }
        if self.quant.enabled {
            if !(1..=32).contains(&self.quant.neuron_bits) {
                return bad(format!("neuron precision must be 1..=32 bits, got {}", self.quant.neuron_bits));
            }
            if !(self.quant.backprop_bound > 0.0 && self.quant.backprop_bound.is_finite()) {
                return bad(format!("backprop bound must be positive, got {}", self.quant.backprop_bound));
            }
            if !self.activation.output_max().is_finite() {
                return bad("quantized ReLU needs a finite upper bound".into());
            }
        }
        Ok(())
    }
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub x: Vec<f64>,
    pub s_h: Vec<f64>,
    pub h: Vec<f64>,
    pub s_o: Vec<f64>,
    pub o: Vec<f64>,
}

/// Integer pulse counts for both layers, row-major like the arrays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PulseGrids {
    pub dn1: Vec<i32>,
    pub dn2: Vec<i32>,
}

impl PulseGrids {
    pub fn zeros(&self) -> usize {
        self.dn1.iter().chain(&self.dn2).filter(|&&d| d == 0).count()
    }

    pub fn len(&self) -> usize {
        self.dn1.len() + self.dn2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nonzero(&self) -> usize {
        self.len() - self.zeros()
    }
}

/// A non-finite value surfaced while accumulating or rounding pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFiniteLayer(pub usize);

/// Sums the real-valued pulse products over a minibatch; rounding happens
/// once on [`finish`](Self::finish).
#[derive(Debug, Clone)]
pub struct PulseAccumulator {
    acc1: Vec<f64>,
    acc2: Vec<f64>,
    cols1: usize,
    cols2: usize,
    // scratch for the thresholded post-neuron factors
    post1: Vec<f64>,
    post2: Vec<f64>,
    samples: usize,
}

impl PulseAccumulator {
    pub fn new(net: &Network) -> Self {
        let (r1, c1) = (net.layer1.rows, net.layer1.cols);
        let (r2, c2) = (net.layer2.rows, net.layer2.cols);
        Self {
            acc1: vec![0.0; r1 * c1],
            acc2: vec![0.0; r2 * c2],
            cols1: c1,
            cols2: c2,
            post1: vec![0.0; c1],
            post2: vec![0.0; c2],
            samples: 0,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Adds `f_th(pre) * f_th(eta * bp)` for every synapse of both layers.
    pub fn add(
        &mut self,
        net: &Network,
        trace: &ForwardTrace,
        o_bp: &[f64],
        h_bp: &[f64],
    ) -> Result<(), PerceptronError> {
        check_len("input vector", net.layer1.rows, trace.x.len())?;
        check_len("hidden values", net.layer2.rows, trace.h.len())?;
        check_len("hidden backprop values", self.cols1, h_bp.len())?;
        check_len("output backprop values", self.cols2, o_bp.len())?;
        let th = net.threshold;
        let eta = net.learning_rate;
        for (p, &b) in self.post1.iter_mut().zip(h_bp) {
            *p = apply_threshold(th, eta * b);
        }
        for (p, &b) in self.post2.iter_mut().zip(o_bp) {
            *p = apply_threshold(th, eta * b);
        }
        if self.post1.iter().any(|&p| p != 0.0) {
            for (row, &x) in self.acc1.chunks_exact_mut(self.cols1).zip(&trace.x) {
                let a = apply_threshold(th, x);
                if a != 0.0 {
                    for (acc, &p) in row.iter_mut().zip(&self.post1) {
                        *acc += a * p;
                    }
                }
            }
        }
        if self.post2.iter().any(|&p| p != 0.0) {
            for (row, &hv) in self.acc2.chunks_exact_mut(self.cols2).zip(&trace.h) {
                let a = apply_threshold(th, hv);
                if a != 0.0 {
                    for (acc, &p) in row.iter_mut().zip(&self.post2) {
                        *acc += a * p;
                    }
                }
            }
        }
        self.samples += 1;
        Ok(())
    }

    /// Rounds the accumulated products (ties away from zero) into `out` and
    /// clears the accumulator.
    pub fn finish_into(&mut self, out: &mut PulseGrids) -> Result<(), NonFiniteLayer> {
        fn round_layer(acc: &mut [f64], dst: &mut Vec<i32>, layer: usize) -> Result<(), NonFiniteLayer> {
            dst.clear();
            dst.reserve(acc.len());
            for a in acc.iter_mut() {
                if !a.is_finite() {
                    return Err(NonFiniteLayer(layer));
                }
                let r = a.round();
                // i32 saturation is far beyond any pulse budget
                dst.push(r.clamp(i32::MIN as f64, i32::MAX as f64) as i32);
                *a = 0.0;
            }
            Ok(())
        }
        self.samples = 0;
        let r1 = round_layer(&mut self.acc1, &mut out.dn1, 1);
        let r2 = round_layer(&mut self.acc2, &mut out.dn2, 2);
        if r1.is_err() || r2.is_err() {
            self.acc1.iter_mut().for_each(|a| *a = 0.0);
            self.acc2.iter_mut().for_each(|a| *a = 0.0);
        }
        r1.and(r2)
    }

    pub fn finish(&mut self) -> Result<PulseGrids, NonFiniteLayer> {
        let mut out = PulseGrids {
            dn1: Vec::new(),
            dn2: Vec::new(),
        };
        self.finish_into(&mut out)?;
        Ok(out)
    }
}

/// Two-layer perceptron on RRAM crossbars. Biases are fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layer1: SynapseArray,
    pub layer2: SynapseArray,
    pub activation: ActivationSpec,
    pub quant: QuantSpec,
    pub learning_rate: f64,
    pub threshold: f64,
}

impl Network {
    /// Random uniform conductances in `[g_min, g_max]`; the same seed gives
    /// a bit-identical network.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self, PerceptronError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer1 = SynapseArray::random(config.inputs, config.hidden, config.device, &mut rng);
        let layer2 = SynapseArray::random(config.hidden, config.outputs, config.device, &mut rng);
        Ok(Self::from_layers(config, layer1, layer2))
    }

    /// Every conductance set to `g`.
    pub fn uniform(config: &NetworkConfig, g: f64) -> Result<Self, PerceptronError> {
        config.validate()?;
        let layer1 = SynapseArray::filled(config.inputs, config.hidden, config.device, g);
        let layer2 = SynapseArray::filled(config.hidden, config.outputs, config.device, g);
        Ok(Self::from_layers(config, layer1, layer2))
    }

    pub fn from_layers(config: &NetworkConfig, layer1: SynapseArray, layer2: SynapseArray) -> Self {
        let quant = config
            .quant
            .with_forward_range(0.0, config.activation.output_max());
        Self {
            layer1,
            layer2,
            activation: config.activation,
            quant,
            learning_rate: config.learning_rate,
            threshold: config.threshold,
        }
    }

    pub fn inputs(&self) -> usize {
        self.layer1.rows
    }

    pub fn hidden(&self) -> usize {
        self.layer1.cols
    }

    pub fn outputs(&self) -> usize {
        self.layer2.cols
    }

    #[inline]
    fn quantize(&self, x: f64, range: QuantRange) -> f64 {
        self.quant.quantize(x, range)
    }

    /// Crossbar weighted sums followed by activation and quantization.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace, PerceptronError> {
        check_len("input vector", self.inputs(), x.len())?;
        let s_h = weighted_sum(&self.layer1, x);
        let h: Vec<f64> = s_h
            .iter()
            .map(|&s| self.quantize(self.activation.activate(s), QuantRange::Forward))
            .collect();
        let s_o = weighted_sum(&self.layer2, &h);
        let o: Vec<f64> = s_o
            .iter()
            .map(|&s| self.quantize(self.activation.activate(s), QuantRange::Forward))
            .collect();
        Ok(ForwardTrace {
            x: x.to_vec(),
            s_h,
            h,
            s_o,
            o,
        })
    }

    /// Output and hidden backpropagation values for a target vector.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        target: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), PerceptronError> {
        check_len("target vector", self.outputs(), target.len())?;
        check_len("output values", self.outputs(), trace.o.len())?;
        check_len("hidden pre-activations", self.hidden(), trace.s_h.len())?;
        let o_bp: Vec<f64> = target
            .iter()
            .zip(&trace.o)
            .zip(&trace.s_o)
            .map(|((&t, &o), &s)| self.quantize((t - o) * self.activation.derivative(s), QuantRange::Backprop))
            .collect();
        let g_ref = self.layer2.g_ref;
        let h_bp: Vec<f64> = self
            .layer2
            .cells
            .chunks_exact(self.outputs())
            .zip(&trace.s_h)
            .map(|(row, &s)| {
                let back: f64 = row.iter().zip(&o_bp).map(|(c, &d)| d * (c.g - g_ref)).sum();
                self.quantize(back * self.activation.derivative(s), QuantRange::Backprop)
            })
            .collect();
        Ok((o_bp, h_bp))
    }

    /// Pulse counts for a single sample.
    pub fn compute_pulse_updates(
        &self,
        trace: &ForwardTrace,
        o_bp: &[f64],
        h_bp: &[f64],
    ) -> Result<PulseGrids, PerceptronError> {
        let mut acc = PulseAccumulator::new(self);
        acc.add(self, trace, o_bp, h_bp)?;
        acc.finish().map_err(|NonFiniteLayer(layer)| {
            PerceptronError::InvalidConfig(format!("non-finite pulse count in layer {layer}"))
        })
    }

    /// Updates every synapse simultaneously from its own state and count.
    pub fn update_weights(&mut self, grids: &PulseGrids) -> Result<(), PerceptronError> {
        check_len("layer 1 pulse grid", self.layer1.cells.len(), grids.dn1.len())?;
        check_len("layer 2 pulse grid", self.layer2.cells.len(), grids.dn2.len())?;
        self.layer1.apply_pulses(&grids.dn1)?;
        self.layer2.apply_pulses(&grids.dn2)
    }

    /// Quantizes a raw input the way the input neurons would.
    pub fn quantize_input(&self, x: f64) -> f64 {
        self.quant
            .with_forward_range(0.0, 1.0)
            .quantize(x, QuantRange::Forward)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, PerceptronError> {
        Ok(argmax(&self.forward(x)?.o))
    }
}

/// `S_j = sum_i x_i * (G_ij - G_r)`; zero inputs are skipped.
fn weighted_sum(layer: &SynapseArray, x: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; layer.cols];
    let g_ref = layer.g_ref;
    for (row, &xi) in layer.cells.chunks_exact(layer.cols).zip(x) {
        if xi != 0.0 {
            for (acc, c) in s.iter_mut().zip(row) {
                *acc += xi * (c.g - g_ref);
            }
        }
    }
    s
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(label: u8, n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n];
    if (label as usize) < n {
        t[label as usize] = 1.0;
    }
    t
}

/// Bounds estimated from a full-precision pass over the initial network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Largest activation argument `S - s` seen on either layer, before
    /// power-of-two rounding.
    pub max_activation: f64,
    /// Largest backpropagation magnitude, before rounding.
    pub max_backprop: f64,
}

impl Calibration {
    pub fn relu_upper_bound(&self) -> f64 {
        next_power_of_two(self.max_activation)
    }

    pub fn backprop_bound(&self) -> f64 {
        next_power_of_two(self.max_backprop)
    }
}

/// Smallest power of two `>= x`; 1 for non-positive input.
pub fn next_power_of_two(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return 1.0;
    }
    let p = 2f64.powi(x.log2().ceil() as i32);
    if p < x {
        p * 2.0
    } else {
        p
    }
}

/// Full-precision forward/backward pass over `samples` (ReLU unclipped)
/// recording the largest activation and backprop magnitudes.
pub fn calibrate<X: AsRef<[f64]>>(
    net: &Network,
    samples: impl IntoIterator<Item = (X, u8)>,
) -> Result<Calibration, PerceptronError> {
    let mut probe = net.clone();
    probe.quant = QuantSpec::disabled();
    if probe.activation.kind == ActivationKind::Relu {
        probe.activation.upper_bound = f64::INFINITY;
    }
    let shift = probe.activation.shift;
    let mut cal = Calibration {
        max_activation: 0.0,
        max_backprop: 0.0,
    };
    for (x, label) in samples {
        let trace = probe.forward(x.as_ref())?;
        let target = one_hot(label, probe.outputs());
        let (o_bp, h_bp) = probe.backward(&trace, &target)?;
        for &s in trace.s_h.iter().chain(&trace.s_o) {
            cal.max_activation = cal.max_activation.max(s - shift);
        }
        for &b in o_bp.iter().chain(&h_bp) {
            cal.max_backprop = cal.max_backprop.max(b.abs());
        }
    }
    Ok(cal)
}
