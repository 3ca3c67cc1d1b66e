/// Which quantizer range a value goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantRange {
    /// `forward_range`, endpoint-inclusive grid of `2^bits` levels.
    Forward,
    /// Symmetric `[-B, B]` grid that contains zero.
    Backprop,
}

/// Finite neuron precision applied to forward and backpropagated values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantSpec {
    pub neuron_bits: u32,
    pub forward_range: (f64, f64),
    pub backprop_bound: f64,
    pub enabled: bool,
}

impl QuantSpec {
    pub fn new(neuron_bits: u32, forward_range: (f64, f64), backprop_bound: f64) -> Self {
        Self {
            neuron_bits,
            forward_range,
            backprop_bound,
            enabled: true,
        }
    }

    /// Full-precision reference mode.
    pub fn disabled() -> Self {
        Self {
            neuron_bits: 32,
            forward_range: (0.0, 1.0),
            backprop_bound: 1.0,
            enabled: false,
        }
    }

    pub fn with_forward_range(self, lo: f64, hi: f64) -> Self {
        Self {
            forward_range: (lo, hi),
            ..self
        }
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.neuron_bits.min(63)
    }

    /// Spacing of the forward grid.
    pub fn forward_step(&self) -> f64 {
        let (lo, hi) = self.forward_range;
        (hi - lo) / (self.levels() - 1) as f64
    }

    /// Number of nonzero magnitudes on each side of the backprop grid.
    fn backprop_magnitudes(&self) -> f64 {
        (((1u64 << (self.neuron_bits.min(63) - 1)) - 1).max(1)) as f64
    }

    pub fn backprop_step(&self) -> f64 {
        self.backprop_bound / self.backprop_magnitudes()
    }

    /// Clamps to the range and rounds to the nearest level, ties away from
    /// zero. Identity when disabled.
    #[inline]
    pub fn quantize(&self, x: f64, range: QuantRange) -> f64 {
        if !self.enabled {
            return x;
        }
        match range {
            QuantRange::Forward => {
                let (lo, hi) = self.forward_range;
                let top = (self.levels() - 1) as f64;
                let idx = ((x.clamp(lo, hi) - lo) / (hi - lo) * top).round();
                if idx >= top {
                    hi
                } else {
                    lo + idx * (hi - lo) / top
                }
            }
            QuantRange::Backprop => {
                let b = self.backprop_bound;
                let m = self.backprop_magnitudes();
                let idx = (x.clamp(-b, b) / b * m).round();
                if idx >= m {
                    b
                } else if idx <= -m {
                    -b
                } else {
                    idx * b / m
                }
            }
        }
    }

    /// Index of `x` on the forward grid; used to check grid membership.
    pub fn forward_level(&self, x: f64) -> Option<u64> {
        let (lo, hi) = self.forward_range;
        let top = (self.levels() - 1) as f64;
        let idx = ((x - lo) / (hi - lo) * top).round();
        if idx < 0.0 || idx > top {
            return None;
        }
        let level = if idx >= top {
            hi
        } else {
            lo + idx * (hi - lo) / top
        };
        (level == x).then_some(idx as u64)
    }
}
