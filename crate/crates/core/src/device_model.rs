//! Analog RRAM synapse model.
//!
//! Conductance follows a saturating curve in the cumulative pulse count:
//!
//! ```text
//! G_P(n) = G_min + A * n / (n + e^k)                 (potentiation)
//! G_D(n) = G_max - A * (N - n) / ((N - n) + e^k)     (depression)
//! A      = (G_max - G_min) * (1 + e^k / N)
//! ANL    = [G_P(N/2) - G_D(N/2)] / (G_max - G_min) = (N/2) / (N/2 + e^k)
//! ```
//!
//! A device only stores its conductance. A pulse update converts the
//! conductance into an equivalent position along the curve selected by the
//! sign of the update, moves that position by the pulse count and reads the
//! conductance back. Mixed potentiation/depression sequences therefore trace
//! a hysteresis loop whenever the two curves differ.

use std::fmt;
use std::io::BufRead;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("conductance range is empty: g_min = {g_min}, g_max = {g_max}")]
    EmptyRange { g_min: f64, g_max: f64 },
    #[error("maximum pulse count must be at least 2, got {0}")]
    PulseBudget(u32),
    #[error("ANL must lie strictly inside (0, 1), got {0}; use the ideal-linear device for ANL = 0")]
    AnlOutOfRange(f64),
    #[error("fitting parameter k must be finite, got {0}")]
    NonFiniteK(f64),
    #[error("pulse position {n} outside [0, {n_max}]")]
    PulseOutOfRange { n: f64, n_max: u32 },
    #[error("conductance {g} outside [{g_min}, {g_max}]")]
    ConductanceOutOfRange { g: f64, g_min: f64, g_max: f64 },
    #[error("weight precision must be between 1 and 24 bits, got {0}")]
    WeightBits(u32),
}

/// Shape of the conductance-versus-pulse curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateCurve {
    /// Symmetric device: every pulse moves the conductance by
    /// `(g_max - g_min) / n_max`.
    IdealLinear,
    /// Asymmetric nonlinear device with cached derived quantities.
    Nonlinear {
        k: f64,
        exp_k: f64,
        /// Prefactor `A`.
        a: f64,
        anl: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    pub g_min: f64,
    pub g_max: f64,
    pub n_max: u32,
    pub curve: UpdateCurve,
}

/// Conductance state of one synapse.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
#[repr(transparent)]
pub struct SynapseState {
    pub g: f64,
}

/// Number of pulses that spans the full conductance range at `bits` of
/// weight precision (`2^bits - 1`, endpoint-inclusive states).
pub fn n_max_for_bits(bits: u32) -> Result<u32, DeviceError> {
    if !(1..=24).contains(&bits) {
        return Err(DeviceError::WeightBits(bits));
    }
    let n = (1u32 << bits) - 1;
    if n < 2 {
        return Err(DeviceError::PulseBudget(n));
    }
    Ok(n)
}

fn check_range(g_min: f64, g_max: f64, n_max: u32) -> Result<(), DeviceError> {
    if !(g_max > g_min) || !g_min.is_finite() || !g_max.is_finite() {
        return Err(DeviceError::EmptyRange { g_min, g_max });
    }
    if n_max < 2 {
        return Err(DeviceError::PulseBudget(n_max));
    }
    Ok(())
}

impl DeviceParams {
    pub fn ideal_linear(g_min: f64, g_max: f64, n_max: u32) -> Result<Self, DeviceError> {
        check_range(g_min, g_max, n_max)?;
        Ok(Self {
            g_min,
            g_max,
            n_max,
            curve: UpdateCurve::IdealLinear,
        })
    }

    /// Builds a nonlinear device directly from the fitting parameter `k`.
    pub fn from_k(g_min: f64, g_max: f64, n_max: u32, k: f64) -> Result<Self, DeviceError> {
        check_range(g_min, g_max, n_max)?;
        if !k.is_finite() {
            return Err(DeviceError::NonFiniteK(k));
        }
        let exp_k = k.exp();
        let n = f64::from(n_max);
        let a = (g_max - g_min) * (1.0 + exp_k / n);
        let half = n / 2.0;
        let anl = half / (half + exp_k);
        Ok(Self {
            g_min,
            g_max,
            n_max,
            curve: UpdateCurve::Nonlinear { k, exp_k, a, anl },
        })
    }

    /// Builds a nonlinear device with the requested asymmetric nonlinearity.
    ///
    /// Solves `ANL = (N/2) / (N/2 + e^k)` for `k`.
    pub fn from_anl(g_min: f64, g_max: f64, n_max: u32, anl: f64) -> Result<Self, DeviceError> {
        check_range(g_min, g_max, n_max)?;
        if !(anl > 0.0 && anl < 1.0) {
            return Err(DeviceError::AnlOutOfRange(anl));
        }
        let half = f64::from(n_max) / 2.0;
        let k = (half * (1.0 - anl) / anl).ln();
        Self::from_k(g_min, g_max, n_max, k)
    }

    pub fn range(&self) -> f64 {
        self.g_max - self.g_min
    }

    /// Reference conductance of the dummy column, the midpoint of the range.
    pub fn g_ref(&self) -> f64 {
        (self.g_max + self.g_min) / 2.0
    }

    /// Asymmetric nonlinearity factor; 0 for the ideal-linear device.
    pub fn anl(&self) -> f64 {
        match self.curve {
            UpdateCurve::IdealLinear => 0.0,
            UpdateCurve::Nonlinear { anl, .. } => anl,
        }
    }

    pub fn k(&self) -> Option<f64> {
        match self.curve {
            UpdateCurve::IdealLinear => None,
            UpdateCurve::Nonlinear { k, .. } => Some(k),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.curve, UpdateCurve::IdealLinear)
    }

    fn check_pulse(&self, n: f64) -> Result<(), DeviceError> {
        if n >= 0.0 && n <= f64::from(self.n_max) {
            Ok(())
        } else {
            Err(DeviceError::PulseOutOfRange { n, n_max: self.n_max })
        }
    }

    fn check_conductance(&self, g: f64) -> Result<(), DeviceError> {
        if g >= self.g_min && g <= self.g_max {
            Ok(())
        } else {
            Err(DeviceError::ConductanceOutOfRange {
                g,
                g_min: self.g_min,
                g_max: self.g_max,
            })
        }
    }

    pub fn g_potentiation(&self, n_p: f64) -> Result<f64, DeviceError> {
        self.check_pulse(n_p)?;
        Ok(self.potentiation_unchecked(n_p))
    }

    pub fn g_depression(&self, n_d: f64) -> Result<f64, DeviceError> {
        self.check_pulse(n_d)?;
        Ok(self.depression_unchecked(n_d))
    }

    pub fn invert_potentiation(&self, g: f64) -> Result<f64, DeviceError> {
        self.check_conductance(g)?;
        Ok(self.invert_potentiation_unchecked(g).clamp(0.0, f64::from(self.n_max)))
    }

    pub fn invert_depression(&self, g: f64) -> Result<f64, DeviceError> {
        self.check_conductance(g)?;
        Ok(self.invert_depression_unchecked(g).clamp(0.0, f64::from(self.n_max)))
    }

    #[inline]
    fn potentiation_unchecked(&self, n_p: f64) -> f64 {
        match self.curve {
            UpdateCurve::IdealLinear => self.g_min + self.range() * n_p / f64::from(self.n_max),
            UpdateCurve::Nonlinear { exp_k, a, .. } => self.g_min + a * n_p / (n_p + exp_k),
        }
    }

    #[inline]
    fn depression_unchecked(&self, n_d: f64) -> f64 {
        match self.curve {
            UpdateCurve::IdealLinear => self.g_min + self.range() * n_d / f64::from(self.n_max),
            UpdateCurve::Nonlinear { exp_k, a, .. } => {
                let m = f64::from(self.n_max) - n_d;
                self.g_max - a * m / (m + exp_k)
            }
        }
    }

    #[inline]
    fn invert_potentiation_unchecked(&self, g: f64) -> f64 {
        match self.curve {
            UpdateCurve::IdealLinear => (g - self.g_min) / self.range() * f64::from(self.n_max),
            UpdateCurve::Nonlinear { exp_k, a, .. } => {
                let d = g - self.g_min;
                exp_k * d / (a - d)
            }
        }
    }

    #[inline]
    fn invert_depression_unchecked(&self, g: f64) -> f64 {
        match self.curve {
            UpdateCurve::IdealLinear => (g - self.g_min) / self.range() * f64::from(self.n_max),
            UpdateCurve::Nonlinear { exp_k, a, .. } => {
                let d = self.g_max - g;
                f64::from(self.n_max) - exp_k * d / (a - d)
            }
        }
    }

    /// Applies `delta_n` pulses (positive: potentiation, negative:
    /// depression) and returns the new state. Positions past either end of
    /// the curve saturate.
    #[inline]
    pub fn apply_pulses(&self, s: SynapseState, delta_n: i32) -> SynapseState {
        let n_max = f64::from(self.n_max);
        let g = match delta_n {
            0 => return s,
            d if d > 0 => {
                let n = (self.invert_potentiation_unchecked(s.g) + f64::from(d)).clamp(0.0, n_max);
                self.potentiation_unchecked(n)
            }
            d => {
                let n = (self.invert_depression_unchecked(s.g) + f64::from(d)).clamp(0.0, n_max);
                self.depression_unchecked(n)
            }
        };
        SynapseState {
            g: g.clamp(self.g_min, self.g_max),
        }
    }
}

impl fmt::Display for DeviceParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.curve {
            UpdateCurve::IdealLinear => write!(
                f,
                "ideal-linear device g=[{}, {}] N={}",
                self.g_min, self.g_max, self.n_max
            ),
            UpdateCurve::Nonlinear { k, anl, .. } => write!(
                f,
                "nonlinear device g=[{}, {}] N={} k={} ANL={}",
                self.g_min, self.g_max, self.n_max, k, anl
            ),
        }
    }
}

// ---------------------------------------------------------------------------
// Curve fitting
// ---------------------------------------------------------------------------

/// One conductance reading during a potentiation/depression cycle.
///
/// Pulse indices `0..=n_max` lie on the potentiation sweep (`n_p = index`).
/// Indices `n_max+1..=2*n_max` lie on the following depression sweep, where
/// the position along the depression curve is `n_d = 2*n_max - index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub pulse_index: u32,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative improvement in the sum of squares that counts as converged.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceFit {
    pub params: DeviceParams,
    pub residual_rms: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least 3 potentiation and 3 depression points, got {potentiation} and {depression}")]
    TooFewPoints { potentiation: usize, depression: usize },
    #[error("pulse index {index} exceeds the cycle length 2*{n_max}")]
    IndexOutOfCycle { index: u32, n_max: u32 },
    #[error("measurements carry no conductance change; the curve shape is unidentifiable")]
    Degenerate,
    #[error("fit did not converge after {iterations} iterations (residual rms {})", best.residual_rms)]
    NotConverged { iterations: usize, best: Box<DeviceFit> },
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Parses a two-column `pulse_index, conductance` table. Columns may be
/// separated by commas or whitespace; `#` starts a comment.
pub fn read_measurements<R: BufRead>(reader: R) -> Result<Vec<Measurement>, FitError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| FitError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(FitError::Parse {
                line: line_no,
                message: format!("expected 2 columns, found {}", fields.len()),
            });
        }
        let pulse_index = fields[0].parse::<u32>().map_err(|e| FitError::Parse {
            line: line_no,
            message: format!("bad pulse index {:?}: {e}", fields[0]),
        })?;
        let g = fields[1].parse::<f64>().map_err(|e| FitError::Parse {
            line: line_no,
            message: format!("bad conductance {:?}: {e}", fields[1]),
        })?;
        out.push(Measurement { pulse_index, g });
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Sweep {
    Potentiation(f64),
    Depression(f64),
}

/// Model value and gradient with respect to `(g_min, g_max, k)`.
fn model_with_gradient(theta: &Vector3<f64>, n_max: f64, sweep: Sweep) -> (f64, Vector3<f64>) {
    let (g_min, g_max, k) = (theta[0], theta[1], theta[2]);
    let span = g_max - g_min;
    let e = k.exp();
    // u(m) = (1 + e/N) m / (m + e); du/de = m (m - N) / (N (m + e)^2)
    let u = |m: f64| (1.0 + e / n_max) * m / (m + e);
    let du = |m: f64| m * (m - n_max) / (n_max * (m + e) * (m + e));
    match sweep {
        Sweep::Potentiation(n) => {
            let un = u(n);
            (
                g_min + span * un,
                Vector3::new(1.0 - un, un, span * e * du(n)),
            )
        }
        Sweep::Depression(n) => {
            let m = n_max - n;
            let um = u(m);
            (
                g_max - span * um,
                Vector3::new(um, 1.0 - um, -span * e * du(m)),
            )
        }
    }
}

/// Least-squares fit of `(g_min, g_max, k)` to a measured cycle, with the
/// prefactor tied to the range. Uses Levenberg-Marquardt damping on the
/// 3x3 normal equations.
pub fn fit_device(
    measurements: &[Measurement],
    n_max: u32,
    opts: FitOptions,
) -> Result<DeviceFit, FitError> {
    if n_max < 2 {
        return Err(DeviceError::PulseBudget(n_max).into());
    }
    let n = f64::from(n_max);
    let mut points = Vec::with_capacity(measurements.len());
    let (mut n_pot, mut n_dep) = (0usize, 0usize);
    for m in measurements {
        let sweep = if m.pulse_index <= n_max {
            n_pot += 1;
            Sweep::Potentiation(f64::from(m.pulse_index))
        } else if m.pulse_index <= 2 * n_max {
            n_dep += 1;
            Sweep::Depression(f64::from(2 * n_max - m.pulse_index))
        } else {
            return Err(FitError::IndexOutOfCycle {
                index: m.pulse_index,
                n_max,
            });
        };
        points.push((sweep, m.g));
    }
    if n_pot < 3 || n_dep < 3 {
        return Err(FitError::TooFewPoints {
            potentiation: n_pot,
            depression: n_dep,
        });
    }

    let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    if !(hi - lo > 1e-12 * scale) {
        return Err(FitError::Degenerate);
    }

    let cost = |theta: &Vector3<f64>| -> f64 {
        points
            .iter()
            .map(|&(sw, g)| {
                let r = model_with_gradient(theta, n, sw).0 - g;
                r * r
            })
            .sum()
    };

    // Coarse scan over k to land in the right basin before damping.
    let mut theta = Vector3::new(lo, hi, 0.0);
    let mut best_cost = f64::INFINITY;
    for step in -40..=80 {
        let k = f64::from(step) * 0.25;
        let cand = Vector3::new(lo, hi, k);
        let c = cost(&cand);
        if c < best_cost {
            best_cost = c;
            theta = cand;
        }
    }

    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for &(sw, g) in &points {
            let (value, grad) = model_with_gradient(&theta, n, sw);
            let r = value - g;
            jtj += grad * grad.transpose();
            jtr += grad * r;
        }
        if best_cost == 0.0 {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut damped = jtj;
            for d in 0..3 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let cand = theta + step;
            let c = cost(&cand);
            if c.is_finite() && c < best_cost {
                let rel = (best_cost - c) / best_cost;
                theta = cand;
                best_cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < opts.tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let residual_rms = (best_cost / points.len() as f64).sqrt();
    let span = theta[1] - theta[0];
    if !(span > 1e-12 * scale) || !theta[2].is_finite() {
        return Err(FitError::Degenerate);
    }
    let params = DeviceParams::from_k(theta[0], theta[1], n_max, theta[2])?;
    let fit = DeviceFit {
        params,
        residual_rms,
        iterations,
    };
    if converged {
        Ok(fit)
    } else {
        Err(FitError::NotConverged {
            iterations,
            best: Box::new(fit),
        })
    }
}
