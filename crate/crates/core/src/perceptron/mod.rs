//! Hardware-applicable two-layer perceptron.
//!
//! Signed weights are emulated by subtracting a dummy column held at the
//! midpoint conductance. Each synapse is updated with an integer pulse count
//! taken from the outer product of pre-neuron values and scaled
//! post-neuron backpropagation values, optionally with small factors cut
//! off by a threshold before the product is formed.

mod activation;
mod network;
mod quant;
pub mod snapshot;

pub use activation::{apply_threshold, ActivationKind, ActivationSpec};
pub use network::{
    argmax, calibrate, next_power_of_two, one_hot, Calibration, ForwardTrace, Network, NetworkConfig,
    NonFiniteLayer, PerceptronError, PulseAccumulator, PulseGrids, SynapseArray,
};
pub use quant::{QuantRange, QuantSpec};
