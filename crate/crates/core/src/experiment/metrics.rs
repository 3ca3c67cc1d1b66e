use std::io::{self, Write};

use crate::data_ingest::Dataset;
use crate::perceptron::{argmax, Network, PerceptronError, SynapseArray};

/// Test accuracy in percent. Ties in the output go to the lowest index.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<f64, PerceptronError> {
    Ok(evaluate_with_sparsity(net, data)?.0)
}

/// Mean percentage of hidden neurons that are exactly zero.
pub fn hidden_sparsity(net: &Network, data: &Dataset) -> Result<f64, PerceptronError> {
    Ok(evaluate_with_sparsity(net, data)?.1)
}

/// Accuracy and hidden sparsity from one pass over `data`.
pub fn evaluate_with_sparsity(net: &Network, data: &Dataset) -> Result<(f64, f64), PerceptronError> {
    if data.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut x = Vec::with_capacity(data.pixels_per_image);
    let mut correct = 0usize;
    let mut zeros = 0usize;
    for i in 0..data.len() {
        data.image_into(i, &mut x);
        let trace = net.forward(&x)?;
        if argmax(&trace.o) == data.labels[i] as usize {
            correct += 1;
        }
        zeros += trace.h.iter().filter(|&&h| h == 0.0).count();
    }
    let n = data.len() as f64;
    Ok((
        100.0 * correct as f64 / n,
        100.0 * zeros as f64 / (n * net.hidden() as f64),
    ))
}

/// Accuracy of an arbitrary predictor over `data`.
pub fn accuracy_of(data: &Dataset, mut predict: impl FnMut(&[f64]) -> usize) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .iter()
        .filter(|(x, label)| predict(x) == *label as usize)
        .count();
    100.0 * correct as f64 / data.len() as f64
}

/// Histograms of `G - G_r` for both layers over the full representable
/// weight range `[-(g_max - g_min)/2, (g_max - g_min)/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightHistogram {
    pub lo: f64,
    pub hi: f64,
    pub layer1: Vec<u64>,
    pub layer2: Vec<u64>,
}

fn counts(layer: &SynapseArray, lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut c = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    for w in layer.weights() {
        let k = ((w - lo) / width).floor();
        let k = if k.is_nan() { 0 } else { (k.max(0.0) as usize).min(bins - 1) };
        c[k] += 1;
    }
    c
}

impl WeightHistogram {
    pub fn of_network(net: &Network, bins: usize) -> Self {
        let bins = bins.max(1);
        let d = net.layer1.device();
        let half = (d.g_max - d.g_min) / 2.0;
        Self {
            lo: -half,
            hi: half,
            layer1: counts(&net.layer1, -half, half, bins),
            layer2: counts(&net.layer2, -half, half, bins),
        }
    }

    pub fn bins(&self) -> usize {
        self.layer1.len()
    }

    /// Edges of bin `k`; the last upper edge is exactly `hi`.
    pub fn edges(&self, k: usize) -> (f64, f64) {
        let n = self.bins() as f64;
        let at = |i: usize| {
            if i == self.bins() {
                self.hi
            } else {
                self.lo + (self.hi - self.lo) * i as f64 / n
            }
        };
        (at(k), at(k + 1))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,count_layer1,count_layer2")?;
        for k in 0..self.bins() {
            let (a, b) = self.edges(k);
            writeln!(
                w,
                "{},{},{},{}",
                super::report::fmt_g(a),
                super::report::fmt_g(b),
                self.layer1[k],
                self.layer2[k]
            )?;
        }
        Ok(())
    }
}
