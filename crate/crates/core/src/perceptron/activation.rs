use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Sigmoid,
    Relu,
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Sigmoid => f.write_str("sigmoid"),
            ActivationKind::Relu => f.write_str("relu"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "relu" => Ok(ActivationKind::Relu),
            other => Err(format!("unknown activation {other:?} (expected sigmoid or relu)")),
        }
    }
}

/// Activation shared by the hidden and output layers, shifted right by
/// `shift` along the input axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub shift: f64,
    /// Clip level for ReLU outputs. Ignored by the sigmoid.
    pub upper_bound: f64,
}

impl ActivationSpec {
    pub fn sigmoid(shift: f64) -> Self {
        Self {
            kind: ActivationKind::Sigmoid,
            shift,
            upper_bound: 1.0,
        }
    }

    pub fn relu(shift: f64, upper_bound: f64) -> Self {
        Self {
            kind: ActivationKind::Relu,
            shift,
            upper_bound,
        }
    }

    /// Largest value the activation can emit.
    pub fn output_max(&self) -> f64 {
        match self.kind {
            ActivationKind::Sigmoid => 1.0,
            ActivationKind::Relu => self.upper_bound,
        }
    }

    #[inline]
    pub fn activate(&self, x: f64) -> f64 {
        let z = x - self.shift;
        match self.kind {
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            ActivationKind::Relu => z.max(0.0).min(self.upper_bound),
        }
    }

    /// Derivative with respect to the pre-activation. The clipped ReLU has
    /// zero slope below the shift and above `shift + upper_bound`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let z = x - self.shift;
        match self.kind {
            ActivationKind::Sigmoid => {
                let f = 1.0 / (1.0 + (-z).exp());
                f * (1.0 - f)
            }
            ActivationKind::Relu => {
                if z > 0.0 && z < self.upper_bound {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Cutoff applied to every factor of the pulse product: values whose
/// magnitude is below `th` are dropped.
#[inline]
pub fn apply_threshold(th: f64, x: f64) -> f64 {
    if x.abs() >= th {
        x
    } else {
        0.0
    }
}
