//! Stick-breaking trees embedded in a coordinate space with the absolute-sum
//! metric, and the Pólya-type urn.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ppp::halfline_arrivals;
use crate::rng::RngStream;

/// A point of the tree: `None` branch is the root, otherwise a distance along a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreePoint {
    pub branch: Option<usize>,
    pub offset: f64,
}

impl TreePoint {
    pub const ROOT: TreePoint = TreePoint { branch: None, offset: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub length: f64,
    /// Branch the base is glued to; `None` for the root.
    pub attach_branch: Option<usize>,
    pub attach_offset: f64,
}

/// Branch `j` is the stick `(y[j], y[j+1]]`, glued at `rho(z[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedTree {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub branches: Vec<Branch>,
}

/// Deterministic stick-breaking from cut points `y` and glue points `z`.
pub fn sb_build(y: &[f64], z: &[f64]) -> Result<EmbeddedTree> {
    if y.len() < 2 || y[0] != 0.0 {
        return invalid("y must start at 0 and have at least two entries");
    }
    if y.iter().any(|v| !v.is_finite()) || !y.windows(2).all(|w| w[0] < w[1]) {
        return invalid("y must be finite and strictly increasing");
    }
    if z.len() + 1 != y.len() {
        return invalid(format!("expected {} glue points, got {}", y.len() - 1, z.len()));
    }
    let mut branches = Vec::with_capacity(z.len());
    for (j, &zj) in z.iter().enumerate() {
        if !(zj >= 0.0 && zj <= y[j]) {
            return invalid(format!("glue point z[{j}] = {zj} must lie in [0, {}]", y[j]));
        }
        let base = locate(y, zj);
        branches.push(Branch {
            length: y[j + 1] - y[j],
            attach_branch: base.branch,
            attach_offset: base.offset,
        });
    }
    Ok(EmbeddedTree { y: y.to_vec(), z: z.to_vec(), branches })
}

fn locate(y: &[f64], t: f64) -> TreePoint {
    if t <= 0.0 {
        return TreePoint::ROOT;
    }
    // t in (y[b], y[b+1]]
    let b = y.partition_point(|&v| v < t) - 1;
    TreePoint { branch: Some(b), offset: t - y[b] }
}

impl EmbeddedTree {
    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn total_length(&self) -> f64 {
        *self.y.last().unwrap()
    }

    /// The tree made of the first `i` branches.
    pub fn truncated(&self, i: usize) -> Result<EmbeddedTree> {
        if i == 0 || i > self.branch_count() {
            return Err(Error::Range(format!("cannot keep {i} of {} branches", self.branch_count())));
        }
        sb_build(&self.y[..=i], &self.z[..i])
    }

    pub fn tip(&self, b: usize) -> TreePoint {
        TreePoint { branch: Some(b), offset: self.branches[b].length }
    }

    fn parent_of(&self, p: TreePoint) -> TreePoint {
        let b = &self.branches[p.branch.expect("root has no parent")];
        TreePoint { branch: b.attach_branch, offset: b.attach_offset }
    }

    /// Path distance between two points.
    pub fn distance(&self, mut a: TreePoint, mut b: TreePoint) -> f64 {
        let mut d = 0.0;
        // branches only glue onto earlier ones, so climb the later branch first
        while a.branch != b.branch {
            if a.branch > b.branch {
                d += a.offset;
                a = self.parent_of(a);
            } else {
                d += b.offset;
                b = self.parent_of(b);
            }
        }
        d + (a.offset - b.offset).abs()
    }

    /// Sparse coordinates: entry `j` is the length of the root path lying on branch `j`.
    pub fn coordinates(&self, mut p: TreePoint) -> BTreeMap<usize, f64> {
        let mut c = BTreeMap::new();
        while let Some(b) = p.branch {
            if p.offset > 0.0 {
                c.insert(b, p.offset);
            }
            p = self.parent_of(p);
        }
        c
    }

    /// Distance from `p` to the subtree made of branches `0..i`.
    fn climb_to(&self, mut p: TreePoint, i: usize) -> f64 {
        let mut d = 0.0;
        while p.branch.is_some_and(|b| b >= i) {
            d += p.offset;
            p = self.parent_of(p);
        }
        d
    }
}

/// Absolute-sum distance between two coordinate vectors.
pub fn l1_distance(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> f64 {
    let mut d = 0.0;
    for (k, va) in a {
        d += (va - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, vb) in b {
        if !a.contains_key(k) {
            d += vb.abs();
        }
    }
    d
}

/// Image of stick position `t` in the tree.
pub fn project_rho(tree: &EmbeddedTree, t: f64) -> Result<TreePoint> {
    if !(t >= 0.0) {
        return invalid(format!("t must be >= 0, got {t}"));
    }
    if t > tree.total_length() {
        return Err(Error::Range(format!("t = {t} beyond built length {}", tree.total_length())));
    }
    Ok(locate(&tree.y, t))
}

fn check_sb_params(beta: f64, gamma: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return invalid(format!("beta must be finite and > 0, got {beta}"));
    }
    if !(gamma >= 0.0 && gamma <= beta - 1.0) {
        return invalid(format!("gamma must lie in [0, beta - 1], got {gamma} with beta = {beta}"));
    }
    Ok(())
}

/// Random stick-breaking with `j` branches: cuts at the arrivals of a Poisson
/// process with intensity `t^beta`, each stick glued at a point of density
/// proportional to `u^gamma` on the sticks before it.
pub fn sb_sample(beta: f64, gamma: f64, j: usize, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>, EmbeddedTree)> {
    check_sb_params(beta, gamma)?;
    if j == 0 {
        return invalid("need at least one branch");
    }
    let mut y = vec![0.0];
    y.extend(halfline_arrivals(beta, j, rng)?);
    let mut z = vec![0.0];
    let inv = 1.0 / (gamma + 1.0);
    for &yi in &y[1..j] {
        z.push(yi * rng.open01().powf(inv));
    }
    let tree = sb_build(&y, &z)?;
    Ok((y, z, tree))
}

/// A point drawn from the glue measure on the whole built tree.
pub fn sample_measure_point(tree: &EmbeddedTree, gamma: f64, rng: &mut RngStream) -> Result<TreePoint> {
    if !(gamma >= 0.0) {
        return invalid("gamma must be >= 0");
    }
    let u = tree.total_length() * rng.open01().powf(1.0 / (gamma + 1.0));
    project_rho(tree, u)
}

/// Mass of the first `i` branches under the glue measure on the first `j`.
pub fn sb_measure_mass(tree: &EmbeddedTree, gamma: f64, i: usize, j: usize) -> Result<f64> {
    if i > j {
        return invalid(format!("i = {i} exceeds j = {j}"));
    }
    if j == 0 || j > tree.branch_count() {
        return Err(Error::Range(format!("j = {j} outside 1..={}", tree.branch_count())));
    }
    if !(gamma >= 0.0) {
        return invalid("gamma must be >= 0");
    }
    Ok((tree.y[i] / tree.y[j]).powf(gamma + 1.0))
}

/// Hausdorff distance between the subtrees made of the first `i` and first `j` branches.
pub fn hausdorff_partial(tree: &EmbeddedTree, i: usize, j: usize) -> Result<f64> {
    if i > j || j > tree.branch_count() {
        return Err(Error::Range(format!("need i <= j <= {}, got i = {i}, j = {j}", tree.branch_count())));
    }
    Ok((i..j).map(|b| tree.climb_to(tree.tip(b), i)).fold(0.0, f64::max))
}

/// Black and white masses of the urn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrnState {
    pub u: f64,
    pub v: f64,
}

impl UrnState {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if !(u >= 0.0 && v >= 0.0 && u.is_finite() && v.is_finite() && u + v > 0.0) {
            return invalid(format!("urn masses must be finite, non-negative, not both zero: ({u}, {v})"));
        }
        Ok(Self { u, v })
    }

    pub fn ratio(&self) -> f64 {
        self.u / (self.u + self.v)
    }
}

/// Runs the urn: each step picks black with probability `U/(U+V)` and adds
/// the next delta to the picked colour. Returns `R_0, .., R_M`.
pub fn urn_run(state: &mut UrnState, deltas: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    UrnState::new(state.u, state.v)?;
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return invalid(format!("deltas must be finite and >= 0, got {d}"));
    }
    let mut out = Vec::with_capacity(deltas.len() + 1);
    out.push(state.ratio());
    for &d in deltas {
        if rng.open01() <= state.ratio() {
            state.u += d;
        } else {
            state.v += d;
        }
        out.push(state.ratio());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_one_sample;
    use proptest::prelude::*;

    #[test]
    fn single_branch() {
        let t = sb_build(&[0.0, 1.0], &[0.0]).unwrap();
        let tip = project_rho(&t, 1.0).unwrap();
        assert_eq!(t.distance(TreePoint::ROOT, tip), 1.0);
    }

    #[test]
    fn two_branches() {
        let t = sb_build(&[0.0, 1.0, 2.0], &[0.0, 0.5]).unwrap();
        assert_eq!(t.branches[1].attach_branch, Some(0));
        assert_eq!(t.branches[1].attach_offset, 0.5);
        assert!((t.distance(t.tip(0), t.tip(1)) - 1.5).abs() < 1e-15);
        let p = project_rho(&t, 1.25).unwrap();
        assert_eq!(p, TreePoint { branch: Some(1), offset: 0.25 });
        assert!((t.distance(TreePoint::ROOT, p) - 0.75).abs() < 1e-15);
        let t = sb_build(&[0.0, 1.0, 2.0], &[0.0, 1.0]).unwrap();
        assert!((t.distance(t.tip(0), t.tip(1)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rho_boundaries() {
        let t = sb_build(&[0.0, 1.0, 3.0, 3.5], &[0.0, 0.2, 2.5]).unwrap();
        assert_eq!(project_rho(&t, 0.0).unwrap(), TreePoint::ROOT);
        for b in 0..3 {
            assert_eq!(project_rho(&t, t.y[b + 1]).unwrap(), t.tip(b));
        }
        assert!(matches!(project_rho(&t, 3.6), Err(Error::Range(_))));
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(sb_build(&[0.0, 1.0, 1.0], &[0.0, 0.5]).is_err());
        assert!(sb_build(&[0.0, 1.0, 2.0], &[0.0, 1.5]).is_err());
        assert!(sb_build(&[0.0, 1.0, 2.0], &[0.0]).is_err());
        assert!(sb_build(&[0.5, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn mass_examples() {
        let t = sb_build(&[0.0, 1.0, 2.0], &[0.0, 0.5]).unwrap();
        assert_eq!(sb_measure_mass(&t, 1.0, 2, 2).unwrap(), 1.0);
        assert!((sb_measure_mass(&t, 0.0, 1, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((sb_measure_mass(&t, 1.0, 1, 2).unwrap() - 0.25).abs() < 1e-15);
        assert!(sb_measure_mass(&t, 1.0, 2, 1).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let t = sb_build(&[0.0, 1.0, 2.0], &[0.0, 0.5]).unwrap();
        assert_eq!(hausdorff_partial(&t, 1, 1).unwrap(), 0.0);
        assert!((hausdorff_partial(&t, 1, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!(hausdorff_partial(&t, 2, 1).is_err());
        let (_, _, t) = sb_sample(2.0, 1.0, 30, &mut RngStream::new(1, 0)).unwrap();
        for i in 1..10 {
            for j in i..29 {
                assert!(hausdorff_partial(&t, i, j).unwrap() <= hausdorff_partial(&t, i, j + 1).unwrap());
            }
        }
    }

    #[test]
    fn sample_rejects_bad_parameters() {
        let mut rng = RngStream::new(0, 0);
        assert!(sb_sample(0.0, 0.0, 3, &mut rng).is_err());
        assert!(sb_sample(2.0, 1.5, 3, &mut rng).is_err());
        assert!(sb_sample(2.0, -0.1, 3, &mut rng).is_err());
        assert!(sb_sample(2.0, 1.0, 0, &mut rng).is_err());
    }

    #[test]
    fn first_stick_survival() {
        let ys: Vec<f64> = (0..100_000).map(|r| sb_sample(2.0, 1.0, 1, &mut RngStream::new(2, r)).unwrap().0[1]).collect();
        let rep = ks_one_sample(&ys, |x| 1.0 - (-x.max(0.0).powi(3) / 3.0).exp(), 0.02).unwrap();
        assert!(rep.pass, "D = {}", rep.statistic);
    }

    #[test]
    fn glue_ratio_laws() {
        for (gamma, pow) in [(0.0, 1), (1.0, 2)] {
            let ratios: Vec<f64> = (0..50_000)
                .map(|r| {
                    let (y, z, _) = sb_sample(2.0, gamma, 3, &mut RngStream::new(3, r)).unwrap();
                    z[2] / y[2]
                })
                .collect();
            let rep = ks_one_sample(&ratios, |u| u.clamp(0.0, 1.0).powi(pow), 0.02).unwrap();
            assert!(rep.pass, "gamma {gamma}: D = {}", rep.statistic);
        }
    }

    #[test]
    fn glue_increments_conditional_law() {
        let beta: f64 = 2.0;
        let mut low = Vec::new();
        let mut high = Vec::new();
        for r in 0..40_000 {
            let (y, _, _) = sb_sample(beta, 1.0, 3, &mut RngStream::new(4, r)).unwrap();
            let (a, b) = (y[2], y[3]);
            // conditional survival of the increment, which is uniform given y[2]
            let s = (-((b).powf(beta + 1.0) - a.powf(beta + 1.0)) / (beta + 1.0)).exp();
            if a < 1.8 { low.push(s) } else { high.push(s) }
        }
        for bin in [low, high] {
            let rep = ks_one_sample(&bin, |u| u.clamp(0.0, 1.0), 0.03).unwrap();
            assert!(rep.pass, "D = {}", rep.statistic);
        }
    }

    #[test]
    fn descendance_consistency() {
        let (y, z, big) = sb_sample(2.0, 1.0, 25, &mut RngStream::new(5, 0)).unwrap();
        let small = sb_build(&y[..=20], &z[..20]).unwrap();
        for i in 0..200 {
            let t = y[20] * i as f64 / 199.0;
            let a = project_rho(&small, t).unwrap();
            let b = project_rho(&big, t).unwrap();
            assert_eq!(small.coordinates(a), big.coordinates(b));
        }
        assert_eq!(big.truncated(20).unwrap(), small);
    }

    #[test]
    fn hausdorff_median_shrinks() {
        let mut medians = Vec::new();
        for i in [1usize, 2, 4, 8] {
            let mut hs: Vec<f64> = (0..1000)
                .map(|r| {
                    let (_, _, t) = sb_sample(2.0, 1.0, 2 * i, &mut RngStream::new(6, r)).unwrap();
                    hausdorff_partial(&t, i, 2 * i).unwrap()
                })
                .collect();
            hs.sort_by(f64::total_cmp);
            medians.push(hs[500]);
        }
        assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
    }

    #[test]
    fn measure_points_follow_glue_density() {
        let (_, _, t) = sb_sample(2.0, 1.0, 10, &mut RngStream::new(7, 0)).unwrap();
        let mut rng = RngStream::new(7, 1);
        let total = t.total_length();
        // the stick position of a measure point has CDF (u/total)^2
        let us: Vec<f64> = (0..20_000)
            .map(|_| {
                let p = sample_measure_point(&t, 1.0, &mut rng).unwrap();
                let b = p.branch.unwrap();
                t.y[b] + p.offset
            })
            .collect();
        let rep = ks_one_sample(&us, |u| (u / total).clamp(0.0, 1.0).powi(2), 0.02).unwrap();
        assert!(rep.pass, "D = {}", rep.statistic);
    }

    #[test]
    fn mass_matches_sampled_fraction() {
        let gamma = 0.5;
        let (_, _, t) = sb_sample(3.0, gamma, 8, &mut RngStream::new(21, 0)).unwrap();
        let j = t.y.len() - 1;
        let total = t.total_length();
        let mut rng = RngStream::new(21, 1);
        let draws = 40_000;
        let pos: Vec<f64> = (0..draws)
            .map(|_| {
                let p = sample_measure_point(&t, gamma, &mut rng).unwrap();
                t.y[p.branch.unwrap()] + p.offset
            })
            .collect();
        for i in 1..j {
            // points of T^(i) relative to the whole tree
            let frac = pos.iter().filter(|&&u| u <= t.y[i]).count() as f64 / draws as f64;
            let want = (t.y[i] / total).powf(gamma + 1.0);
            assert!((frac - want).abs() < 0.01, "i={i}: {frac} vs {want}");
            assert!((sb_measure_mass(&t, gamma, i, j).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn urn_constant_without_increments() {
        let mut s = UrnState::new(1.0, 2.0).unwrap();
        let r = urn_run(&mut s, &[0.0; 20], &mut RngStream::new(8, 0)).unwrap();
        assert!(r.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(urn_run(&mut s, &[1.0, -1.0], &mut RngStream::new(8, 0)).is_err());
        assert!(UrnState::new(0.0, 0.0).is_err());
    }

    #[test]
    fn urn_martingale_and_variance_bound() {
        let runs = 100_000;
        let m = 50;
        let deltas = vec![1.0; m];
        let mut sum = vec![0.0; m + 1];
        let mut sum2 = vec![0.0; m + 1];
        let mut sum4 = vec![0.0; m + 1];
        for r in 0..runs {
            let mut s = UrnState::new(1.0, 2.0).unwrap();
            let trace = urn_run(&mut s, &deltas, &mut RngStream::new(9, r)).unwrap();
            for (i, x) in trace.iter().enumerate() {
                sum[i] += x;
                sum2[i] += x * x;
                sum4[i] += x.powi(4);
            }
        }
        let nf = runs as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let var: Vec<f64> = (0..=m).map(|i| sum2[i] / nf - mean[i] * mean[i]).collect();
        let sd = var[m].sqrt();
        assert!((mean[m] - 1.0 / 3.0).abs() < 3.0 * sd / nf.sqrt());
        for i in 0..m {
            let bound = (1.0 / (3.0 + i as f64)).powi(2);
            // crude standard error of the variance estimate
            let se = ((sum4[i + 1] / nf) / nf).sqrt();
            assert!(var[i + 1] - var[i] <= bound + 3.0 * se, "step {i}");
        }
    }

    proptest! {
        #[test]
        fn metric_axioms(seed in 0u64..500) {
            let mut rng = RngStream::new(seed, 10);
            let (_, _, t) = sb_sample(2.0, 1.0, 12, &mut rng).unwrap();
            let total = t.total_length();
            for _ in 0..20 {
                let p: Vec<TreePoint> = (0..3).map(|_| project_rho(&t, total * rng.open01()).unwrap()).collect();
                let d = |a: usize, b: usize| t.distance(p[a], p[b]);
                prop_assert_eq!(d(0, 0), 0.0);
                prop_assert!((d(0, 1) - d(1, 0)).abs() < 1e-12);
                prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
                let l1 = l1_distance(&t.coordinates(p[0]), &t.coordinates(p[1]));
                prop_assert!((l1 - d(0, 1)).abs() < 1e-9);
            }
        }
    }
}
