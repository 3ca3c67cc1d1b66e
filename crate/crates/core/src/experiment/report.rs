//! Results CSV.

use std::io::{self, Write};

use super::config::ExperimentConfig;
use super::run::ExperimentRecord;

pub const RESULTS_HEADER: &str = "run_id,anl,activation,s,th,weight_bits,neuron_bits,eta,batch,seed,epoch,train_mse,test_acc,hidden_sparsity,update_sparsity";

/// `printf("%g")`: six significant digits, trailing zeros dropped.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_header<W: Write>(mut w: W) -> io::Result<()> {
    writeln!(w, "{RESULTS_HEADER}")
}

/// One row per recorded epoch.
pub fn write_rows<W: Write>(mut w: W, run_id: usize, cfg: &ExperimentConfig, record: &ExperimentRecord) -> io::Result<()> {
    for m in &record.epochs {
        writeln!(
            w,
            "{run_id},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_g(cfg.effective_anl()),
            cfg.activation,
            fmt_g(cfg.shift),
            fmt_g(cfg.threshold),
            cfg.weight_bits,
            if cfg.quant_enabled { cfg.neuron_bits.to_string() } else { "full".into() },
            fmt_g(cfg.eta),
            cfg.batch,
            cfg.seed,
            m.epoch,
            fmt_g(m.train_mse),
            fmt_g(m.test_acc),
            fmt_g(m.hidden_sparsity),
            fmt_g(m.update_sparsity),
        )?;
    }
    Ok(())
}

/// A parsed results row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run_id: usize,
    pub anl: f64,
    pub activation: String,
    pub s: f64,
    pub th: f64,
    pub weight_bits: u32,
    pub neuron_bits: String,
    pub eta: f64,
    pub batch: usize,
    pub seed: u64,
    pub epoch: usize,
    pub train_mse: f64,
    pub test_acc: f64,
    pub hidden_sparsity: f64,
    pub update_sparsity: f64,
}

/// Parses a results CSV written by [`write_rows`].
pub fn read_results(text: &str) -> Result<Vec<ResultRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == RESULTS_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(format!("row {}: expected 15 fields, found {}", n + 2, f.len()));
        }
        let bad = |i: usize| format!("row {}: bad field {:?}", n + 2, f[i]);
        macro_rules! p {
            ($i:expr) => {
                f[$i].parse().map_err(|_| bad($i))?
            };
        }
        rows.push(ResultRow {
            run_id: p!(0),
            anl: p!(1),
            activation: f[2].to_owned(),
            s: p!(3),
            th: p!(4),
            weight_bits: p!(5),
            neuron_bits: f[6].to_owned(),
            eta: p!(7),
            batch: p!(8),
            seed: p!(9),
            epoch: p!(10),
            train_mse: p!(11),
            test_acc: p!(12),
            hidden_sparsity: p!(13),
            update_sparsity: p!(14),
        });
    }
    Ok(rows)
}
