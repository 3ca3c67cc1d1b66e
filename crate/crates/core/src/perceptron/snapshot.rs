//! Plain-text network snapshots.
//!
//! ```text
//! rram-sim snapshot v1
//! seed 42
//! step 18000
//! config 3
//! device.anl = 0.8
//! ...
//! layer1 784 300
//! <one row of conductances per line, space separated>
//! layer2 300 10
//! ...
//! end
//! ```
//!
//! Conductances are printed with the shortest representation that parses
//! back to the same `f64`, so a snapshot round-trips bit-exactly.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

use super::network::{Network, SynapseArray};

const MAGIC: &str = "rram-sim snapshot v1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceGrid {
    pub rows: usize,
    pub cols: usize,
    pub g: Vec<f64>,
}

impl From<&SynapseArray> for ConductanceGrid {
    fn from(a: &SynapseArray) -> Self {
        Self {
            rows: a.rows(),
            cols: a.cols(),
            g: a.cells().iter().map(|c| c.g).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Effective configuration as `key = value` lines.
    pub config: Vec<String>,
    pub seed: u64,
    pub step: u64,
    pub layer1: ConductanceGrid,
    pub layer2: ConductanceGrid,
}

impl Snapshot {
    pub fn capture(net: &Network, config: Vec<String>, seed: u64, step: u64) -> Self {
        Self {
            config,
            seed,
            step,
            layer1: (&net.layer1).into(),
            layer2: (&net.layer2).into(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "step {}", self.step)?;
        writeln!(w, "config {}", self.config.len())?;
        for line in &self.config {
            writeln!(w, "{line}")?;
        }
        for (name, grid) in [("layer1", &self.layer1), ("layer2", &self.layer2)] {
            writeln!(w, "{name} {} {}", grid.rows, grid.cols)?;
            let mut buf = String::new();
            for row in grid.g.chunks(grid.cols.max(1)) {
                buf.clear();
                for (n, g) in row.iter().enumerate() {
                    if n > 0 {
                        buf.push(' ');
                    }
                    let _ = write!(buf, "{g}");
                }
                writeln!(w, "{buf}")?;
            }
        }
        writeln!(w, "end")?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, SnapshotError> {
        let mut rd = Lines {
            inner: r.lines(),
            line: 0,
        };
        let (n, magic) = rd.next("header")?;
        if magic.trim() != MAGIC {
            return Err(format_err(n, format!("not a snapshot (header {magic:?})")));
        }
        let (n, v) = rd.field("seed")?;
        let seed = parse_u64(n, v.first())?;
        let (n, v) = rd.field("step")?;
        let step = parse_u64(n, v.first())?;
        let (n, v) = rd.field("config")?;
        let count = parse_u64(n, v.first())? as usize;
        let mut config = Vec::with_capacity(count);
        for _ in 0..count {
            config.push(rd.next("config line")?.1);
        }
        let layer1 = rd.grid("layer1")?;
        let layer2 = rd.grid("layer2")?;
        let (n, end) = rd.next("end")?;
        if end.trim() != "end" {
            return Err(format_err(n, format!("expected `end`, found {end:?}")));
        }
        Ok(Self {
            config,
            seed,
            step,
            layer1,
            layer2,
        })
    }
}

fn format_err(line: usize, message: String) -> SnapshotError {
    SnapshotError::Format { line, message }
}

fn parse_u64(line: usize, v: Option<&String>) -> Result<u64, SnapshotError> {
    v.and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(line, "expected an unsigned integer".into()))
}

struct Lines<L> {
    inner: L,
    line: usize,
}

impl<L: Iterator<Item = std::io::Result<String>>> Lines<L> {
    fn next(&mut self, expect: &str) -> Result<(usize, String), SnapshotError> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok((self.line, l)),
            Some(Err(e)) => Err(e.into()),
            None => Err(format_err(self.line, format!("unexpected end of file, expected {expect}"))),
        }
    }

    fn field(&mut self, name: &str) -> Result<(usize, Vec<String>), SnapshotError> {
        let (n, l) = self.next(name)?;
        let parts: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
        if parts.first().map(String::as_str) != Some(name) {
            return Err(format_err(n, format!("expected `{name}`, found {l:?}")));
        }
        Ok((n, parts[1..].to_vec()))
    }

    fn grid(&mut self, name: &str) -> Result<ConductanceGrid, SnapshotError> {
        let (n, v) = self.field(name)?;
        let rows = parse_u64(n, v.first())? as usize;
        let cols = parse_u64(n, v.get(1))? as usize;
        let mut g = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, l) = self.next("grid row")?;
            let before = g.len();
            for tok in l.split_whitespace() {
                g.push(
                    tok.parse::<f64>()
                        .map_err(|e| format_err(n, format!("bad conductance {tok:?}: {e}")))?,
                );
            }
            if g.len() - before != cols {
                return Err(format_err(n, format!("expected {cols} values, found {}", g.len() - before)));
            }
        }
        Ok(ConductanceGrid { rows, cols, g })
    }
}
