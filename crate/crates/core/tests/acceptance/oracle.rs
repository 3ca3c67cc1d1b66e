//! Reference-mode update against a dense-matrix SGD step, and backprop
//! values against finite differences.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rram_sim::device_model::DeviceParams;
use rram_sim::perceptron::{one_hot, ActivationSpec, Network, NetworkConfig, PulseAccumulator, QuantSpec};

const BATCH: usize = 10;

fn reference_net(seed: u64) -> Network {
    let cfg = NetworkConfig {
        inputs: 784,
        hidden: 300,
        outputs: 10,
        device: DeviceParams::ideal_linear(0.0, 1.0, 255).unwrap(),
        activation: ActivationSpec::sigmoid(0.0),
        quant: QuantSpec::disabled(),
        learning_rate: 300.0,
        threshold: 0.0,
    };
    Network::init(&cfg, seed).unwrap()
}

fn inputs(rng: &mut impl Rng) -> Vec<(Vec<f64>, u8)> {
    (0..BATCH)
        .map(|_| {
            // roughly MNIST-like: mostly zero, some bright pixels
            let x = (0..784)
                .map(|_| if rng.random_bool(0.2) { rng.random_range(0.0..=1.0) } else { 0.0 })
                .collect();
            (x, rng.random_range(0..10u8))
        })
        .collect()
}

fn weights(net: &Network) -> (DMatrix<f64>, DMatrix<f64>) {
    let w1: Vec<f64> = net.layer1.weights().collect();
    let w2: Vec<f64> = net.layer2.weights().collect();
    (
        DMatrix::from_row_slice(784, 300, &w1),
        DMatrix::from_row_slice(300, 10, &w2),
    )
}

fn sigmoid(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|s| 1.0 / (1.0 + (-s).exp()))
}

fn round_away(x: f64) -> f64 {
    x.signum() * (x.abs() + 0.5).floor()
}

pub fn check_update() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut net = reference_net(5);
    let batch = inputs(&mut rng);
    let eta = net.learning_rate;
    let (w1, w2) = weights(&net);

    let x = DMatrix::from_fn(BATCH, 784, |r, c| batch[r].0[c]);
    let t = DMatrix::from_fn(BATCH, 10, |r, c| f64::from(batch[r].1 as usize == c));
    let h = sigmoid(&(&x * &w1));
    let o = sigmoid(&(&h * &w2));
    let d_o = (&t - &o).component_mul(&o.map(|v| v * (1.0 - v)));
    let d_h = (&d_o * w2.transpose()).component_mul(&h.map(|v| v * (1.0 - v)));
    let p1 = (x.transpose() * (&d_h * eta)).map(round_away);
    let p2 = (h.transpose() * (&d_o * eta)).map(round_away);
    let step = 1.0 / 255.0;
    let want1 = (&w1 + p1.map(|n| n * step)).map(|w| w.clamp(-0.5, 0.5));
    let want2 = (&w2 + p2.map(|n| n * step)).map(|w| w.clamp(-0.5, 0.5));

    let mut acc = PulseAccumulator::new(&net);
    for (xi, label) in &batch {
        let trace = net.forward(xi).map_err(|e| e.to_string())?;
        let (ob, hb) = net.backward(&trace, &one_hot(*label, 10)).map_err(|e| e.to_string())?;
        acc.add(&net, &trace, &ob, &hb).map_err(|e| e.to_string())?;
    }
    let grids = acc.finish().map_err(|e| format!("non-finite layer {}", e.0))?;
    let moved = grids.nonzero();
    if moved < 1000 {
        return Err(format!("only {moved} synapses received pulses; the comparison would be vacuous"));
    }
    net.update_weights(&grids).map_err(|e| e.to_string())?;
    let (got1, got2) = weights(&net);

    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (got, want) in [(&got1, &want1), (&got2, &want2)] {
        for (a, b) in got.iter().zip(want.iter()) {
            let e = (a - b).abs() / b.abs().max(step);
            worst = worst.max(e);
            count += 1;
        }
    }
    if worst > 1e-9 {
        return Err(format!("max relative weight difference {worst:.2e} over {count} weights"));
    }
    Ok(format!("{count} weights, {moved} moved, max rel diff {worst:.1e}"))
}

fn loss(net: &Network, x: &[f64], t: &[f64]) -> f64 {
    let o = net.forward(x).unwrap().o;
    0.5 * t.iter().zip(&o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// `-dL/dW` from backprop, `x_pre * bp_post`, against central differences
/// on the conductance of that synapse.
pub fn check_gradients() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut net = reference_net(9);
    let (x, label) = inputs(&mut rng).swap_remove(0);
    let t = one_hot(label, 10);
    let trace = net.forward(&x).unwrap();
    let (ob, hb) = net.backward(&trace, &t).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;

    let active: Vec<usize> = (0..784).filter(|&i| x[i] > 0.0).collect();
    let mut picks: Vec<(usize, usize, usize)> = (0..300).flat_map(|j| (0..10).map(move |k| (2, j, k))).collect();
    for _ in 0..300 {
        picks.push((1, active[rng.random_range(0..active.len())], rng.random_range(0..300)));
    }
    for (layer, i, j) in picks {
        let analytic = if layer == 1 { x[i] * hb[j] } else { trace.h[i] * ob[j] };
        if analytic.abs() < 1e-7 {
            continue;
        }
        let arr = if layer == 1 { &mut net.layer1 } else { &mut net.layer2 };
        let g0 = arr.conductance(i, j).unwrap();
        if g0 - h < 0.0 || g0 + h > 1.0 {
            continue;
        }
        arr.set_conductance(i, j, g0 + h).unwrap();
        let up = loss(&net, &x, &t);
        let arr = if layer == 1 { &mut net.layer1 } else { &mut net.layer2 };
        arr.set_conductance(i, j, g0 - h).unwrap();
        let down = loss(&net, &x, &t);
        let arr = if layer == 1 { &mut net.layer1 } else { &mut net.layer2 };
        arr.set_conductance(i, j, g0).unwrap();
        let fd = -(up - down) / (2.0 * h);
        let e = (fd - analytic).abs() / analytic.abs();
        worst = worst.max(e);
        checked += 1;
        if e > 1e-4 {
            return Err(format!("layer {layer} ({i},{j}): backprop {analytic:e} vs finite difference {fd:e}"));
        }
    }
    if checked < 500 {
        return Err(format!("only {checked} gradients were large enough to check"));
    }
    Ok(format!("{checked} gradients, max rel diff {worst:.1e}"))
}
