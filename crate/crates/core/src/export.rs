//! CSV and JSON views of samples and reports.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ppp::{PointSet1D, PointSet2D};
use crate::rayleigh::RayleighPath;
use crate::stats::TestReport;
use crate::step::StepFunction;
use crate::trees::LabeledTree;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

fn write_rows<W: Write, R: Serialize>(w: W, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// `m,vertex` for each walk step.
pub fn write_walk_csv<W: Write>(w: W, trajectory: &[u32]) -> Result<()> {
    write_rows(w, &["m", "vertex"], trajectory.iter().enumerate())
}

/// `m,Z` for `m = 0..=horizon`.
pub fn write_le_csv<W: Write>(w: W, z: &StepFunction, horizon: usize) -> Result<()> {
    let rows: Result<Vec<(usize, u64)>> = (0..=horizon).map(|m| Ok((m, z.eval(m as f64)? as u64))).collect();
    write_rows(w, &["m", "Z"], rows?)
}

/// `t,value` on a grid of times.
pub fn write_rayleigh_grid_csv<W: Write>(w: W, path: &RayleighPath, grid: &[f64]) -> Result<()> {
    let rows: Result<Vec<(f64, f64)>> = grid.iter().map(|&t| Ok((t, path.eval(t)?))).collect();
    write_rows(w, &["t", "value"], rows?)
}

/// `s,x` for each jump.
pub fn write_jumps_csv<W: Write>(w: W, path: &RayleighPath) -> Result<()> {
    write_rows(w, &["s", "x"], path.jumps.iter())
}

pub fn write_points1d_csv<W: Write>(w: W, ps: &PointSet1D) -> Result<()> {
    write_rows(w, &["index", "s"], ps.points.iter().enumerate())
}

pub fn write_points2d_csv<W: Write>(w: W, ps: &PointSet2D) -> Result<()> {
    write_rows(w, &["index", "s", "x"], ps.points.iter().enumerate().map(|(i, &(s, x))| (i, s, x)))
}

/// `code,count`.
pub fn write_histogram_csv<W: Write>(w: W, hist: &BTreeMap<String, u64>) -> Result<()> {
    write_rows(w, &["code", "count"], hist.iter())
}

/// `i,j,distance` for every ordered pair.
pub fn write_distance_csv<W: Write, T: Serialize + Copy>(w: W, matrix: &[Vec<T>]) -> Result<()> {
    let rows = matrix.iter().enumerate().flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &d)| (i, j, d)));
    write_rows(w, &["i", "j", "distance"], rows)
}

#[derive(Serialize)]
struct TreeJson<'a> {
    n: usize,
    k: usize,
    algorithm: &'a str,
    variant: &'a str,
    edges: Vec<[u32; 2]>,
    first_entry: Vec<Option<u64>>,
    sigma: &'a [u64],
}

/// `{n, k, algorithm, variant, edges, first_entry, sigma}`; absent vertices have a null entry time.
pub fn tree_json(tree: &LabeledTree) -> Result<String> {
    let j = TreeJson {
        n: tree.n,
        k: tree.k,
        algorithm: tree.algorithm.as_str(),
        variant: tree.variant.as_str(),
        edges: tree.edges().into_iter().map(|(p, v)| [p, v]).collect(),
        first_entry: tree.first_entry.iter().map(|&t| (t != crate::trees::NO_TIME).then_some(t)).collect(),
        sigma: &tree.sigma,
    };
    Ok(serde_json::to_string(&j)?)
}

#[derive(Serialize)]
struct SticksJson<'a> {
    beta: f64,
    gamma: f64,
    y: &'a [f64],
    z: &'a [f64],
}

/// `{beta, gamma, y, z}`.
pub fn sticks_json(beta: f64, gamma: f64, y: &[f64], z: &[f64]) -> Result<String> {
    Ok(serde_json::to_string(&SticksJson { beta, gamma, y, z })?)
}

/// One JSON object per line.
pub fn write_reports_jsonl<W: Write>(mut w: W, reports: &[TestReport]) -> Result<()> {
    for r in reports {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}

/// `name,statistic,threshold,n_samples,pass`.
pub fn write_summary_csv<W: Write>(w: W, reports: &[TestReport]) -> Result<()> {
    write_rows(
        w,
        &["name", "statistic", "threshold", "n_samples", "pass"],
        reports.iter().map(|r| (&r.name, r.statistic, r.threshold, r.n_samples, r.pass)),
    )
}
