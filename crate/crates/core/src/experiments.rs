//! Named Monte Carlo experiments. Each returns a combined [`TestReport`] plus
//! the per-case reports it was built from.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rayleigh::{coupled_pair, rayleigh_values_at, stationary_tail};
use crate::rng::{derive_seed, RngStream};
use crate::stats::{chi_square_gof, chi_square_two_sample, ks_one_sample, ks_two_sample_with_threshold, loglog_slope, marginal_vector_compare, TestReport};
use crate::stickbreak::{sb_sample, urn_run, UrnState};
use crate::trees::{canonical_tree_code, stick_vector, AbSampler, LabeledTree, WilsonSampler};
use crate::walk::{ChoiceRule, LeLengthSampler, Variant};

pub const EXPERIMENTS: &[&str] = &[
    "rayleigh-tail",
    "coupling-bound",
    "branch-hazard-ab",
    "branch-hazard-wilson",
    "tree-equality",
    "le-vs-rayleigh",
    "stick-marginals",
    "attachment-law",
    "scaling-exponent",
    "urn-martingale",
    "first-stick",
    "k1-regression",
];

/// Overrides for an experiment; unset fields take the experiment's defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub variant: Option<Variant>,
    pub replicas: Option<usize>,
    pub t_max: Option<f64>,
}

impl ExperimentParams {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    fn ks(&self, default: &[usize]) -> Vec<usize> {
        self.k.map_or_else(|| default.to_vec(), |k| vec![k])
    }

    fn variants(&self) -> Vec<Variant> {
        self.variant.map_or_else(|| vec![Variant::Maximal, Variant::Uniform], |v| vec![v])
    }

    fn replicas(&self, default: usize) -> usize {
        self.replicas.unwrap_or(default)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Outcome {
    pub report: TestReport,
    pub parts: Vec<TestReport>,
}

impl Outcome {
    fn from_parts(name: &str, parts: Vec<TestReport>) -> Self {
        Self { report: TestReport::all_of(name, &parts), parts }
    }
}

/// Runs the experiment called `name`.
pub fn run_experiment(name: &str, p: &ExperimentParams) -> Result<Outcome> {
    let jobs = p.jobs.unwrap_or(1);
    if jobs == 0 {
        return invalid("jobs must be >= 1");
    }
    if p.replicas == Some(0) {
        return invalid("replicas must be >= 1");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::ResourceLimit(e.to_string()))?;
    pool.install(|| match name {
        "rayleigh-tail" => rayleigh_tail(p),
        "coupling-bound" => coupling_bound(p),
        "branch-hazard-ab" => branch_hazard_ab(p),
        "branch-hazard-wilson" => branch_hazard_wilson(p),
        "tree-equality" => tree_equality(p),
        "le-vs-rayleigh" => le_vs_rayleigh(p),
        "stick-marginals" => stick_marginals(p),
        "attachment-law" => attachment_law(p),
        "scaling-exponent" => scaling_exponent(p),
        "urn-martingale" => urn_martingale(p),
        "first-stick" => first_stick(p),
        "k1-regression" => k1_regression(p),
        _ => invalid(format!("unknown experiment '{name}'; known: {}", EXPERIMENTS.join(", "))),
    })
}

fn tag(label: &str) -> u64 {
    // FNV-1a
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn sub_seed(seed: u64, label: &str) -> u64 {
    derive_seed(seed, tag(label))
}

/// Replica `r` always draws from stream `r`, so results do not depend on threading.
fn replicate<T, S, I, F>(count: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, u64) -> T + Sync + Send,
{
    (0..count as u64).into_par_iter().map_init(init, f).collect()
}

fn rayleigh_tail(p: &ExperimentParams) -> Result<Outcome> {
    let horizon = p.t_max.unwrap_or(20.0);
    let reps = p.replicas(100_000);
    let grid = [0.25, 0.5, 1.0, 1.5];
    let mut parts = Vec::new();
    for k in p.ks(&[1, 2, 3]) {
        let seed = sub_seed(p.seed, &format!("rayleigh-tail/k{k}"));
        let vals: Vec<f64> = replicate(reps, || (), |_, r| {
            rayleigh_values_at(k, &[horizon], &mut RngStream::new(seed, r)).map(|v| v[0])
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let mut rep = TestReport::new(format!("rayleigh-tail k={k}"), 0.0, 0.01, reps, true);
        for &t in &grid {
            let emp = vals.iter().filter(|&&v| v > t).count() as f64 / reps as f64;
            let exact = stationary_tail(k, t)?;
            let err = (emp - exact).abs();
            rep.details.insert(format!("P(R>{t})"), emp);
            rep.details.insert(format!("exact(R>{t})"), exact);
            rep.statistic = rep.statistic.max(err);
        }
        rep.pass = rep.statistic <= rep.threshold;
        parts.push(rep);
    }
    Ok(Outcome::from_parts("rayleigh-tail", parts))
}

fn coupling_bound(p: &ExperimentParams) -> Result<Outcome> {
    let n = p.n.unwrap_or(10_000);
    let t_max = p.t_max.unwrap_or(5.0);
    let reps = p.replicas(100);
    let mut parts = Vec::new();
    for k in p.ks(&[2]) {
        let seed = sub_seed(p.seed, &format!("coupling-bound/k{k}"));
        let res: Vec<(usize, f64)> = replicate(reps, || (), |_, r| {
            coupled_pair(n, k, t_max, &mut RngStream::new(seed, r))
                .map(|(g, path)| (g.violations(&path).len(), g.max_deviation(&path) * g.scale))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let violations: usize = res.iter().map(|r| r.0).sum();
        let worst = res.iter().map(|r| r.1).fold(0.0, f64::max);
        parts.push(
            TestReport::new(format!("coupling-bound k={k}"), violations as f64, 0.0, reps, violations == 0)
                .with_detail("max_scaled_deviation", worst)
                .with_detail("n", n as f64),
        );
    }
    Ok(Outcome::from_parts("coupling-bound", parts))
}

/// Extension trials grouped by cell, with the predicted extension probability.
#[derive(Default)]
struct HazardCells {
    cells: BTreeMap<(usize, usize), (u64, u64, f64)>,
    trials: u64,
}

impl HazardCells {
    fn add(&mut self, cell: (usize, usize), extended: bool, p: f64) {
        let e = self.cells.entry(cell).or_insert((0, 0, p));
        e.0 += 1;
        e.1 += extended as u64;
        self.trials += 1;
    }

    fn merge(&mut self, other: HazardCells) {
        for (c, (t, s, p)) in other.cells {
            let e = self.cells.entry(c).or_insert((0, 0, p));
            e.0 += t;
            e.1 += s;
        }
        self.trials += other.trials;
    }

    fn report(&self, name: String, min_obs: u64) -> TestReport {
        let mut worst: f64 = 0.0;
        let mut tested = 0;
        for &(t, s, p) in self.cells.values() {
            if t < min_obs {
                continue;
            }
            tested += 1;
            let phat = s as f64 / t as f64;
            let sd = (p * (1.0 - p) / t as f64).sqrt();
            let z = if sd > 0.0 {
                (phat - p).abs() / sd
            } else if (phat - p).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
        TestReport::new(name, worst, 3.0, self.trials as usize, worst <= 3.0 && tested > 0)
            .with_detail("cells_tested", tested as f64)
            .with_detail("cells", self.cells.len() as f64)
    }
}

/// Adds trees in fixed-size chunks until enough trials have accumulated.
fn hazard_until<F>(target: u64, f: F) -> HazardCells
where
    F: Fn(u64) -> HazardCells + Sync + Send,
{
    const CHUNK: u64 = 256;
    let mut acc = HazardCells::default();
    let mut next = 0;
    while acc.trials < target {
        let parts: Vec<HazardCells> = (next..next + CHUNK).into_par_iter().map(&f).collect();
        for h in parts {
            acc.merge(h);
        }
        next += CHUNK;
    }
    acc
}

fn ab_hazard_cells(tree: &LabeledTree, n: usize, k: usize) -> HazardCells {
    let mut h = HazardCells::default();
    let nf = n as f64;
    let mut prev_sigma = 0u64;
    for i in 0..=tree.branch_count() {
        let l = tree.size_at_branch(i);
        let (fresh, collided) = if i < tree.branch_count() {
            let s = tree.sigma[i];
            let f = (s - prev_sigma - 1) as usize;
            prev_sigma = s;
            (f, true)
        } else {
            (tree.size() - l, false)
        };
        for q in 1..=fresh + collided as usize {
            let p = 1.0 - ((l + q - 1) as f64 / nf).powi(k as i32);
            h.add((l, q), q <= fresh, p);
        }
    }
    h
}

fn branch_hazard_ab(p: &ExperimentParams) -> Result<Outcome> {
    let n = p.n.unwrap_or(50);
    let target = p.replicas(100_000) as u64;
    let mut parts = Vec::new();
    for k in p.ks(&[2, 3]) {
        for variant in p.variants() {
            AbSampler::new(n, k, variant)?;
            let seed = sub_seed(p.seed, &format!("branch-hazard-ab/k{k}/{variant}"));
            let cells = hazard_until(target, |r| {
                let mut s = AbSampler::new(n, k, variant).expect("validated");
                let t = s.sample(None, &mut RngStream::new(seed, r));
                ab_hazard_cells(&t, n, k)
            });
            parts.push(cells.report(format!("branch-hazard-ab k={k} {variant}"), 200));
        }
    }
    Ok(Outcome::from_parts("branch-hazard-ab", parts))
}

fn wilson_hazard_cells(tree: &LabeledTree, n: usize, k: usize) -> HazardCells {
    let mut h = HazardCells::default();
    let nf = n as f64;
    for b in 0..tree.branch_count() {
        let m = tree.size_at_branch(b);
        let len = tree.size_at_branch(b + 1) - m;
        for i in 0..len {
            let p = 1.0 - ((m + i + 1) as f64 / nf).powi(k as i32);
            h.add((m, i), i + 1 < len, p);
        }
    }
    h
}

fn branch_hazard_wilson(p: &ExperimentParams) -> Result<Outcome> {
    let n = p.n.unwrap_or(50);
    let target = p.replicas(100_000) as u64;
    let mut parts = Vec::new();
    for k in p.ks(&[2, 3]) {
        for variant in p.variants() {
            WilsonSampler::new(n, k, variant)?;
            let seed = sub_seed(p.seed, &format!("branch-hazard-wilson/k{k}/{variant}"));
            let cells = hazard_until(target, |r| {
                let mut s = WilsonSampler::new(n, k, variant).expect("validated");
                let t = s.sample(&mut RngStream::new(seed, r));
                wilson_hazard_cells(&t, n, k)
            });
            parts.push(cells.report(format!("branch-hazard-wilson k={k} {variant}"), 200));
        }
    }
    Ok(Outcome::from_parts("branch-hazard-wilson", parts))
}

fn histogram(codes: Vec<String>) -> BTreeMap<String, u64> {
    let mut h = BTreeMap::new();
    for c in codes {
        *h.entry(c).or_insert(0) += 1;
    }
    h
}

/// Labeled-tree histograms of the AB and Wilson samplers.
pub fn tree_histograms(n: usize, k: usize, variant: Variant, reps: usize, seed: u64) -> Result<[BTreeMap<String, u64>; 2]> {
    AbSampler::new(n, k, variant)?;
    let sa = derive_seed(seed, 1);
    let sw = derive_seed(seed, 2);
    let ab = replicate(reps, || AbSampler::new(n, k, variant).expect("validated"), |s, r| {
        canonical_tree_code(&s.sample(None, &mut RngStream::new(sa, r))).expect("spanning")
    });
    let wi = replicate(reps, || WilsonSampler::new(n, k, variant).expect("validated"), |s, r| {
        canonical_tree_code(&s.sample(&mut RngStream::new(sw, r))).expect("spanning")
    });
    Ok([histogram(ab), histogram(wi)])
}

fn tree_equality(p: &ExperimentParams) -> Result<Outcome> {
    let reps = p.replicas(100_000);
    let ns = p.n.map_or_else(|| vec![3, 4], |n| vec![n]);
    let mut parts = Vec::new();
    for &n in &ns {
        for k in p.ks(&[2, 3]) {
            for variant in p.variants() {
                let seed = sub_seed(p.seed, &format!("tree-equality/n{n}/k{k}/{variant}"));
                let [a, w] = tree_histograms(n, k, variant, reps, seed)?;
                parts.push(chi_square_two_sample(&a, &w)?.renamed(format!("tree-equality n={n} k={k} {variant}")));
            }
        }
    }
    Ok(Outcome::from_parts("tree-equality", parts))
}

/// Loop-erased lengths `Z_m` (vertex counts) at each step count, one vector per replica.
pub fn le_lengths(n: usize, k: usize, variant: Variant, steps: &[usize], reps: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let rule = ChoiceRule::new(variant, k)?;
    LeLengthSampler::new(n, rule)?;
    Ok(replicate(reps, || LeLengthSampler::new(n, rule).expect("validated"), |s, r| {
        s.sample_at(steps, &mut RngStream::new(seed, r))
    }))
}

/// Compares `(Z_m - 1)/N` at `m = floor(tN)` with `R` at the grid time `m/N`,
/// so both sides measure length in edges at the same rescaled time.
fn le_vs_rayleigh_for(n: usize, k: usize, reps: usize, seed: u64) -> Result<Vec<TestReport>> {
    let times = [0.5, 1.0, 2.0];
    let scale = crate::length_scale(n, k);
    let steps: Vec<usize> = times.iter().map(|t| (t * scale).floor() as usize).collect();
    let grid: Vec<f64> = steps.iter().map(|&m| m as f64 / scale).collect();
    let z = le_lengths(n, k, Variant::Maximal, &steps, reps, derive_seed(seed, 1))?;
    let rs = derive_seed(seed, 2);
    let r: Vec<Vec<f64>> = replicate(reps, || (), |_, i| rayleigh_values_at(k, &grid, &mut RngStream::new(rs, i)))
        .into_iter()
        .collect::<Result<_>>()?;
    times
        .iter()
        .enumerate()
        .map(|(c, t)| {
            let a: Vec<f64> = z.iter().map(|v| (v[c] - 1) as f64 / scale).collect();
            let b: Vec<f64> = r.iter().map(|v| v[c]).collect();
            Ok(ks_two_sample_with_threshold(&a, &b, 0.05)?.renamed(format!("le-vs-rayleigh n={n} k={k} t={t}")))
        })
        .collect()
}

fn le_vs_rayleigh(p: &ExperimentParams) -> Result<Outcome> {
    let n = p.n.unwrap_or(10_000);
    let reps = p.replicas(10_000);
    let mut parts = Vec::new();
    for k in p.ks(&[1, 2]) {
        parts.extend(le_vs_rayleigh_for(n, k, reps, sub_seed(p.seed, &format!("le-vs-rayleigh/k{k}")))?);
    }
    Ok(Outcome::from_parts("le-vs-rayleigh", parts))
}

/// Stick vectors of AB partial trees with `branches` branch ends.
pub fn ab_stick_vectors(n: usize, k: usize, variant: Variant, branches: usize, reps: usize, seed: u64) -> Result<Vec<crate::trees::StickVector>> {
    AbSampler::new(n, k, variant)?;
    replicate(reps, || AbSampler::new(n, k, variant).expect("validated"), |s, r| {
        let t = s.sample(Some(branches), &mut RngStream::new(seed, r));
        stick_vector(&t, branches)
    })
    .into_iter()
    .collect()
}

fn stick_marginals(p: &ExperimentParams) -> Result<Outcome> {
    let n = p.n.unwrap_or(10_000);
    let reps = p.replicas(10_000);
    let mut parts = Vec::new();
    for k in p.ks(&[2]) {
        for variant in p.variants() {
            let gamma = if variant == Variant::Maximal { k as f64 - 1.0 } else { 0.0 };
            let seed = sub_seed(p.seed, &format!("stick-marginals/k{k}/{variant}"));
            let ab: Vec<Vec<f64>> = ab_stick_vectors(n, k, variant, 4, reps, derive_seed(seed, 1))?
                .into_iter()
                .map(|sv| sv.y[1..=4].iter().chain(&sv.z[1..=3]).copied().collect())
                .collect();
            let ss = derive_seed(seed, 2);
            let sb: Vec<Vec<f64>> = replicate(reps, || (), |_, r| {
                sb_sample(k as f64, gamma, 4, &mut RngStream::new(ss, r))
                    .map(|(y, z, _)| y[1..=4].iter().chain(&z[1..=3]).copied().collect())
            })
            .into_iter()
            .collect::<Result<_>>()?;
            parts.push(marginal_vector_compare(&ab, &sb, 0.05)?.renamed(format!("stick-marginals k={k} {variant} gamma={gamma}")));
        }
    }
    Ok(Outcome::from_parts("stick-marginals", parts))
}

fn attachment_law(p: &ExperimentParams) -> Result<Outcome> {
    let n = p.n.unwrap_or(10_000);
    let reps = p.replicas(10_000);
    let mut parts = Vec::new();
    for k in p.ks(&[2]) {
        for variant in p.variants() {
            let seed = sub_seed(p.seed, &format!("attachment-law/k{k}/{variant}"));
            let ratios: Vec<f64> = ab_stick_vectors(n, k, variant, 1, reps, seed)?
                .into_iter()
                .filter(|sv| sv.y[1] > 0.0)
                .map(|sv| sv.z[1] / sv.y[1])
                .collect();
            let skipped = reps - ratios.len();
            let rep = match variant {
                Variant::Maximal => ks_one_sample(&ratios, |a| a.clamp(0.0, 1.0).powi(k as i32), 0.05)?,
                Variant::Uniform => ks_one_sample(&ratios, |a| a.clamp(0.0, 1.0), 0.05)?,
            };
            parts.push(rep.renamed(format!("attachment-law k={k} {variant}")).with_detail("skipped", skipped as f64));
        }
    }
    Ok(Outcome::from_parts("attachment-law", parts))
}

fn scaling_exponent(p: &ExperimentParams) -> Result<Outcome> {
    let reps = p.replicas(4_000);
    let ns: Vec<usize> = [3.0, 3.5, 4.0, 4.5, 5.0].iter().map(|&e: &f64| 10f64.powf(e).round() as usize).collect();
    let mut parts = Vec::new();
    for k in p.ks(&[2]) {
        let seed = sub_seed(p.seed, &format!("scaling-exponent/k{k}"));
        let mut pairs = Vec::new();
        let mut rep = TestReport::new(format!("scaling-exponent k={k}"), 0.0, 0.05, reps * ns.len(), true);
        for &n in &ns {
            let m = (2.0 * crate::length_scale(n, k)).floor() as usize;
            let z = le_lengths(n, k, Variant::Maximal, &[m], reps, derive_seed(seed, n as u64))?;
            let mean = z.iter().map(|v| v[0] as f64).sum::<f64>() / reps as f64;
            rep.details.insert(format!("E[Z] n={n}"), mean);
            pairs.push((n as f64, mean));
        }
        let slope = loglog_slope(&pairs)?;
        let target = crate::scaling_exponent(k);
        rep.statistic = (slope - target).abs();
        rep.pass = rep.statistic <= rep.threshold;
        rep.details.insert("slope".into(), slope);
        rep.details.insert("target".into(), target);
        parts.push(rep);
    }
    Ok(Outcome::from_parts("scaling-exponent", parts))
}

fn urn_martingale(p: &ExperimentParams) -> Result<Outcome> {
    let runs = p.replicas(100_000);
    let steps = 50;
    let seed = sub_seed(p.seed, "urn-martingale");
    let deltas = vec![1.0; steps];
    let finals: Vec<f64> = replicate(runs, || (), |_, r| {
        let mut s = UrnState::new(1.0, 2.0)?;
        urn_run(&mut s, &deltas, &mut RngStream::new(seed, r)).map(|t| t[steps])
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let nf = runs as f64;
    let mean = finals.iter().sum::<f64>() / nf;
    let sd = (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let r0 = 1.0 / 3.0;
    let stat = (mean - r0).abs();
    let thr = 3.0 * sd / nf.sqrt();
    let rep = TestReport::new("urn-martingale", stat, thr, runs, stat < thr)
        .with_detail("mean", mean)
        .with_detail("R0", r0)
        .with_detail("sd", sd);
    Ok(Outcome::from_parts("urn-martingale", vec![rep]))
}

fn first_stick(p: &ExperimentParams) -> Result<Outcome> {
    let n = p.n.unwrap_or(10_000);
    let mut parts = Vec::new();
    for k in p.ks(&[2]) {
        let seed = sub_seed(p.seed, &format!("first-stick/k{k}"));
        let cdf = |x: f64| 1.0 - (-(x.max(0.0)).powi(k as i32 + 1) / (k as f64 + 1.0)).exp();
        let variant = p.variant.unwrap_or(Variant::Maximal);
        let ab: Vec<f64> = ab_stick_vectors(n, k, variant, 1, p.replicas(10_000), derive_seed(seed, 1))?
            .into_iter()
            .map(|sv| sv.y[1])
            .collect();
        parts.push(ks_one_sample(&ab, cdf, 0.05)?.renamed(format!("first-stick ab n={n} k={k} {variant}")));
        let ss = derive_seed(seed, 2);
        let sb: Vec<f64> = replicate(100_000, || (), |_, r| sb_sample(k as f64, 0.0, 1, &mut RngStream::new(ss, r)).map(|s| s.0[1]))
            .into_iter()
            .collect::<Result<_>>()?;
        parts.push(ks_one_sample(&sb, cdf, 0.02)?.renamed(format!("first-stick sb beta={k}")));
    }
    Ok(Outcome::from_parts("first-stick", parts))
}

fn k1_regression(p: &ExperimentParams) -> Result<Outcome> {
    let reps = p.replicas(100_000);
    let mut parts = Vec::new();
    for variant in p.variants() {
        let seed = sub_seed(p.seed, &format!("k1-regression/{variant}"));
        let [a, w] = tree_histograms(3, 1, variant, reps, seed)?;
        let uniform = |_: &str| 1.0 / 3.0;
        parts.push(chi_square_gof(&a, &uniform, 0.01)?.renamed(format!("k1-regression ab K3 {variant}")));
        parts.push(chi_square_gof(&w, &uniform, 0.01)?.renamed(format!("k1-regression wilson K3 {variant}")));
    }
    let n = p.n.unwrap_or(10_000);
    parts.extend(le_vs_rayleigh_for(n, 1, 10_000, sub_seed(p.seed, "k1-regression/le"))?);
    Ok(Outcome::from_parts("k1-regression", parts))
}
