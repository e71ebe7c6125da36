//! The generalized k-Rayleigh process and its grid coupling with the
//! loop-erased length recursion.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ppp::{ppp_strip, PointSet2D};
use crate::rng::RngStream;
use crate::step::StepFunction;

/// Largest number of grid columns `coupled_pair` will build.
pub const MAX_COUPLED_COLUMNS: usize = 50_000_000;

/// A sample path of `R^k` on `[0, t_max]`: unit-speed growth from each jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighPath {
    pub k: usize,
    pub t_max: f64,
    /// `(s, x)`: time of a jump and the value just after it.
    pub jumps: Vec<(f64, f64)>,
}

impl RayleighPath {
    /// `R_t` for `0 <= t <= t_max`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.t_max) {
            return Err(Error::Range(format!("t = {t} outside [0, {}]", self.t_max)));
        }
        Ok(self.eval_unchecked(t))
    }

    #[inline]
    fn eval_unchecked(&self, t: f64) -> f64 {
        let i = self.jumps.partition_point(|&(s, _)| s <= t);
        if i == 0 {
            t
        } else {
            let (s, x) = self.jumps[i - 1];
            x + (t - s)
        }
    }

    /// Left limit `R_{t-}`.
    pub fn eval_left(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= self.t_max) {
            return Err(Error::Range(format!("t = {t} outside (0, {}]", self.t_max)));
        }
        let i = self.jumps.partition_point(|&(s, _)| s < t);
        Ok(if i == 0 { t } else { self.jumps[i - 1].1 + (t - self.jumps[i - 1].0) })
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    /// The path as a unit-slope step record.
    pub fn to_step_function(&self) -> StepFunction {
        let mut b = vec![0.0];
        let mut v = vec![0.0];
        for &(s, x) in &self.jumps {
            if s > 0.0 {
                b.push(s);
                v.push(x);
            } else {
                v[0] = x;
            }
        }
        StepFunction::new(b, v, 1.0).expect("jump times are strictly increasing")
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return invalid("k must be >= 1");
    }
    Ok(())
}

/// Time until the next jump from level `r`, given a unit exponential `e`.
#[inline]
pub fn next_gap(k: usize, r: f64, e: f64) -> f64 {
    let kp1 = (k + 1) as f64;
    ((kp1 * e + r.powf(kp1)).powf(1.0 / kp1) - r).max(0.0)
}

/// Exact event-driven sample of `R^k` on `[0, t_max]`, started from 0.
pub fn sample_rayleigh(k: usize, t_max: f64, rng: &mut RngStream) -> Result<RayleighPath> {
    check_k(k)?;
    if !(t_max.is_finite() && t_max > 0.0) {
        return invalid(format!("t_max must be finite and > 0, got {t_max}"));
    }
    let inv_k = 1.0 / k as f64;
    let mut t = 0.0;
    let mut r = 0.0;
    let mut jumps = Vec::new();
    loop {
        let gap = next_gap(k, r, rng.exp1());
        if t + gap > t_max {
            break;
        }
        t += gap;
        let before = r + gap;
        r = before * rng.open01().powf(inv_k);
        if r < before && jumps.last().is_none_or(|&(s, _)| t > s) {
            jumps.push((t, r));
        } else {
            r = before;
        }
    }
    Ok(RayleighPath { k, t_max, jumps })
}

/// `R^k_t` at each of the sorted `times`, without keeping the path.
pub fn rayleigh_values_at(k: usize, times: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    check_k(k)?;
    if times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) || !times.windows(2).all(|w| w[0] <= w[1]) {
        return invalid("times must be finite, non-negative and sorted");
    }
    let inv_k = 1.0 / k as f64;
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut r = 0.0;
    let mut pending = rng.exp1();
    for &target in times {
        loop {
            let gap = next_gap(k, r, pending);
            if t + gap > target {
                // the exponential clock is memoryless in cumulative hazard
                let used = ((r + target - t).powf((k + 1) as f64) - r.powf((k + 1) as f64)) / (k + 1) as f64;
                pending = (pending - used).max(0.0);
                r += target - t;
                t = target;
                break;
            }
            t += gap;
            r = (r + gap) * rng.open01().powf(inv_k);
            pending = rng.exp1();
        }
        out.push(r);
    }
    Ok(out)
}

/// Builds the path determined by a concrete point set:
/// `R_t = min(t, min over points (s, x) with s <= t of x + (t - s))`.
pub fn rayleigh_from_points(points: &PointSet2D) -> RayleighPath {
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    for &(s, x) in &points.points {
        let before = match jumps.last() {
            None => s,
            Some(&(s0, x0)) => x0 + (s - s0),
        };
        if x < before {
            if jumps.last().is_some_and(|&(s0, _)| s0 == s) {
                jumps.pop();
            }
            jumps.push((s, x));
        }
    }
    RayleighPath { k: points.k, t_max: points.t_max, jumps }
}

/// Stationary tail `P(R > t) = exp(-t^{k+1}/(k+1))`.
pub fn stationary_tail(k: usize, t: f64) -> Result<f64> {
    check_k(k)?;
    if !(t >= 0.0) {
        return invalid(format!("t must be >= 0, got {t}"));
    }
    let kp1 = (k + 1) as f64;
    Ok((-t.powf(kp1) / kp1).exp())
}

/// The discrete recursion `C_m` driven by box occupancy of a shared point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledGridPair {
    pub n: usize,
    pub k: usize,
    /// Grid scale `n^{k/(k+1)}`; boxes have side `1/scale`.
    pub scale: f64,
    /// `C_0, C_1, ..`, one per grid column.
    pub c_values: Vec<u32>,
    pub point_set: PointSet2D,
}

impl CoupledGridPair {
    /// `(row, column)` of the box holding a point; both start at 1.
    pub fn box_of(&self, point: (f64, f64)) -> (u64, u64) {
        box_index(self.scale, point)
    }

    /// Whether box `(i, j)` holds at least one point.
    pub fn occupied(&self, i: u64, j: u64) -> bool {
        self.point_set.points.iter().any(|&p| self.box_of(p) == (i, j))
    }

    /// Columns `m` at which `|C_m/scale - R(m/scale)| > 1/scale`.
    pub fn violations(&self, path: &RayleighPath) -> Vec<usize> {
        let tol = 1.0 / self.scale + 1e-12;
        self.c_values
            .iter()
            .enumerate()
            .filter(|&(m, &c)| {
                let t = (m as f64 / self.scale).min(path.t_max);
                (c as f64 / self.scale - path.eval_unchecked(t)).abs() > tol
            })
            .map(|(m, _)| m)
            .collect()
    }

    /// Largest `|C_m/scale - R(m/scale)|` over the window.
    pub fn max_deviation(&self, path: &RayleighPath) -> f64 {
        self.c_values
            .iter()
            .enumerate()
            .map(|(m, &c)| {
                let t = (m as f64 / self.scale).min(path.t_max);
                (c as f64 / self.scale - path.eval_unchecked(t)).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[inline]
fn box_index(scale: f64, (s, x): (f64, f64)) -> (u64, u64) {
    ((x * scale).ceil().max(1.0) as u64, (s * scale).ceil().max(1.0) as u64)
}

/// Samples one realization of `Pi_k` on `(0, t_max]^2` and derives from it both
/// the grid recursion `C_m` (with `n`) and the exact Rayleigh path.
pub fn coupled_pair(n: usize, k: usize, t_max: f64, rng: &mut RngStream) -> Result<(CoupledGridPair, RayleighPath)> {
    check_k(k)?;
    if n < 1 {
        return invalid("n must be >= 1");
    }
    if !(t_max.is_finite() && t_max > 0.0) {
        return invalid(format!("t_max must be finite and > 0, got {t_max}"));
    }
    let scale = crate::length_scale(n, k);
    let columns = (t_max * scale).floor();
    if !(columns <= MAX_COUPLED_COLUMNS as f64) {
        return Err(Error::ResourceLimit(format!(
            "{columns} grid columns exceed the limit of {MAX_COUPLED_COLUMNS}"
        )));
    }
    let columns = columns as usize;
    // R_t <= t <= t_max, so heights above t_max never matter
    let points = ppp_strip(k, t_max, t_max, rng)?;

    // lowest occupied row per column, only for columns that have points
    let mut lowest: HashMap<u64, u64> = HashMap::new();
    for &p in &points.points {
        let (i, j) = box_index(scale, p);
        lowest.entry(j).and_modify(|r| *r = (*r).min(i)).or_insert(i);
    }
    let mut c_values = Vec::with_capacity(columns + 1);
    let mut c: u64 = 1;
    c_values.push(1u32);
    for m in 1..=columns as u64 {
        c = match lowest.get(&m) {
            Some(&row) if row <= c => row,
            _ => c + 1,
        };
        c_values.push(u32::try_from(c).map_err(|_| Error::ResourceLimit("C_m overflow".into()))?);
    }
    let path = rayleigh_from_points(&points);
    Ok((CoupledGridPair { n, k, scale, c_values, point_set: points }, path))
}
