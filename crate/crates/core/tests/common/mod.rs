#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rram_sim::data_ingest::{load_idx, normalize_quantize, Dataset, Split, IMAGES_MAGIC, LABELS_MAGIC};
use rram_sim::experiment::ExperimentConfig;
use rram_sim::perceptron::QuantSpec;

/// Ten easily separable 28x28 classes: class `c` lights two rows of a band
/// whose position depends on `c`, plus sparse noise.
pub fn synthetic(count: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0u8; count * 784];
    let mut labels = Vec::with_capacity(count);
    for n in 0..count {
        let c = rng.random_range(0..10u8);
        labels.push(c);
        let img = &mut pixels[n * 784..(n + 1) * 784];
        let top = 2 + 2 * c as usize;
        for r in top..top + 2 {
            for col in 4..24 {
                img[r * 28 + col] = rng.random_range(160..=255);
            }
        }
        for _ in 0..20 {
            img[rng.random_range(0..784)] = rng.random_range(0..=255);
        }
    }
    (pixels, labels)
}

pub fn idx_images(count: usize, pixels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [IMAGES_MAGIC, count as u32, 28, 28] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(pixels);
    b
}

pub fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [LABELS_MAGIC, labels.len() as u32] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(labels);
    b
}

/// Writes a synthetic train/test pair into `dir` and returns a config
/// pointing at it.
pub fn write_synthetic(dir: &Path, train: usize, test: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (name, count, seed) in [("train", train, 11), ("test", test, 12)] {
        let (px, lb) = synthetic(count, seed);
        let img = dir.join(format!("{name}-images"));
        let lab = dir.join(format!("{name}-labels"));
        std::fs::write(&img, idx_images(count, &px)).unwrap();
        std::fs::write(&lab, idx_labels(&lb)).unwrap();
        if name == "train" {
            cfg.train_images = img;
            cfg.train_labels = lab;
        } else {
            cfg.test_images = img;
            cfg.test_labels = lab;
        }
    }
    cfg.hidden = 20;
    cfg.epochs = 3;
    cfg.batch = 5;
    cfg.eta = 20.0;
    cfg.calibration_samples = 50;
    cfg
}

pub fn load(cfg: &ExperimentConfig) -> (Dataset, Dataset) {
    let q = QuantSpec::disabled();
    let tr = load_idx(&cfg.train_images, &cfg.train_labels).unwrap();
    let te = load_idx(&cfg.test_images, &cfg.test_labels).unwrap();
    (
        normalize_quantize(&tr, &q, Split::Train),
        normalize_quantize(&te, &q, Split::Test),
    )
}

/// MNIST directory: `$RRAM_SIM_DATA`, else `data/mnist` at the workspace root.
pub fn mnist_dir() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("RRAM_SIM_DATA").map(PathBuf::from),
        Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")),
    ];
    candidates
        .into_iter()
        .flatten()
        .find(|d| d.join("train-images-idx3-ubyte").is_file() || d.join("train-images-idx3-ubyte.gz").is_file())
}

/// Points the data keys of `cfg` at the MNIST files in `dir`.
pub fn use_mnist(cfg: &mut ExperimentConfig, dir: &Path) {
    let pick = |name: &str| {
        let plain = dir.join(name);
        if plain.is_file() {
            plain
        } else {
            dir.join(format!("{name}.gz"))
        }
    };
    cfg.train_images = pick("train-images-idx3-ubyte");
    cfg.train_labels = pick("train-labels-idx1-ubyte");
    cfg.test_images = pick("t10k-images-idx3-ubyte");
    cfg.test_labels = pick("t10k-labels-idx1-ubyte");
}
