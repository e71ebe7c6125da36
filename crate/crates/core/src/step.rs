//! Right-continuous step records for length processes and Rayleigh paths.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A càdlàg function given by breakpoints, post-jump values and a common
/// slope between breakpoints (0 for pure jumps, 1 for unit-speed growth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    slope: f64,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, slope: f64) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return invalid("breakpoints and values must be non-empty and of equal length");
        }
        if breakpoints[0] != 0.0 {
            return invalid("first breakpoint must be 0");
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return invalid("breakpoints must be strictly increasing");
        }
        if !slope.is_finite() {
            return invalid("slope must be finite");
        }
        Ok(Self { breakpoints, values, slope })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// Value at `t`; at a breakpoint this is the post-jump value.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return invalid(format!("evaluation time must be >= 0, got {t}"));
        }
        let i = self.breakpoints.partition_point(|&b| b <= t) - 1;
        Ok(self.values[i] + self.slope * (t - self.breakpoints[i]))
    }

    /// Left limit at `t > 0`.
    pub fn eval_left(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return invalid(format!("left limit needs t > 0, got {t}"));
        }
        let i = self.breakpoints.partition_point(|&b| b < t) - 1;
        Ok(self.values[i] + self.slope * (t - self.breakpoints[i]))
    }
}

/// Free-function form of [`StepFunction::eval`].
pub fn step_eval(f: &StepFunction, t: f64) -> Result<f64> {
    f.eval(t)
}
