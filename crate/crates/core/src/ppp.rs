//! Poisson point processes with the two intensities used throughout the crate.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// Points of a Poisson process on `(0, t_max]` with intensity `t^beta dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet1D {
    pub beta: f64,
    pub t_max: f64,
    /// Strictly increasing, all in `(0, t_max]`.
    pub points: Vec<f64>,
}

/// Points of a Poisson process on `(0, t_max] x (0, y_max]` with intensity
/// `k y^{k-1} ds dy`, sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet2D {
    pub k: usize,
    pub t_max: f64,
    pub y_max: f64,
    /// `(s, x)` pairs sorted by `s`.
    pub points: Vec<(f64, f64)>,
}

/// Cumulative intensity `t^{beta+1} / (beta+1)`.
pub fn cumulative_intensity(beta: f64, t: f64) -> f64 {
    t.powf(beta + 1.0) / (beta + 1.0)
}

/// Maps an arrival `u` of a unit-rate process to the arrival of the
/// `t^beta` process, inverting the cumulative intensity.
#[inline]
pub fn map_unit_arrival(beta: f64, u: f64) -> f64 {
    ((beta + 1.0) * u).powf(1.0 / (beta + 1.0))
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return invalid(format!("beta must be finite and >= 0, got {beta}"));
    }
    Ok(())
}

fn check_window(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return invalid(format!("{name} must be finite and > 0, got {v}"));
    }
    Ok(())
}

/// Samples the `t^beta` process on `(0, t_max]` by mapping unit-rate arrivals
/// through the inverse cumulative intensity.
pub fn ppp_halfline(beta: f64, t_max: f64, rng: &mut RngStream) -> Result<PointSet1D> {
    check_beta(beta)?;
    check_window("t_max", t_max)?;
    let limit = cumulative_intensity(beta, t_max);
    let mut points = Vec::new();
    let mut u = 0.0;
    loop {
        u += rng.exp1();
        if u > limit {
            break;
        }
        let t = map_unit_arrival(beta, u).min(t_max);
        // guard against rounding collapsing two arrivals into one value
        if points.last().is_some_and(|&p| t <= p) {
            continue;
        }
        points.push(t);
    }
    Ok(PointSet1D { beta, t_max, points })
}

/// The first `count` arrivals of the `t^beta` process on the whole half-line.
pub fn halfline_arrivals(beta: f64, count: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let mut out = Vec::with_capacity(count);
    let mut u = 0.0;
    while out.len() < count {
        u += rng.exp1();
        let t = map_unit_arrival(beta, u);
        if out.last().is_some_and(|&p| t <= p) {
            continue;
        }
        out.push(t);
    }
    Ok(out)
}

/// Samples `Pi_k` restricted to the window `(0, t_max] x (0, y_max]`.
///
/// The count is Poisson with mean `t_max * y_max^k`; given the count, times
/// are uniform and heights are `y_max * U^{1/k}`.
pub fn ppp_strip(k: usize, t_max: f64, y_max: f64, rng: &mut RngStream) -> Result<PointSet2D> {
    if k == 0 {
        return invalid("k must be >= 1");
    }
    check_window("t_max", t_max)?;
    check_window("y_max", y_max)?;
    let mean = t_max * y_max.powi(k as i32);
    if !mean.is_finite() {
        return invalid(format!("window mass {mean} is not finite"));
    }
    let count = if mean > 0.0 {
        let d = Poisson::new(mean).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
        d.sample(rng) as usize
    } else {
        0
    };
    let inv_k = 1.0 / k as f64;
    let mut points: Vec<(f64, f64)> = (0..count)
        .map(|_| {
            let s = t_max * rng.open01();
            let x = y_max * rng.open01().powf(inv_k);
            (s, x)
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    points.dedup();
    Ok(PointSet2D { k, t_max, y_max, points })
}

impl PointSet1D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl PointSet2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points inside `(0, t] x (0, y]`.
    pub fn count_within(&self, t: f64, y: f64) -> usize {
        self.points.iter().filter(|&&(s, x)| s <= t && x <= y).count()
    }
}
