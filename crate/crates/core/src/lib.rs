//! Online-training simulator for two-layer perceptrons whose weights are
//! analog RRAM conductances with asymmetric nonlinear pulse response.

pub mod data_ingest;
pub mod device_model;
pub mod cli;
pub mod experiment;
pub mod perceptron;
