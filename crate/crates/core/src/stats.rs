//! Goodness-of-fit and two-sample tests with pass/fail reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

/// Outcome of one statistical check.
///
/// For threshold tests `pass` means `statistic < threshold`; for chi-square
/// tests the threshold is the critical value at the stated level, so `pass`
/// coincides with `p_value >= level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub n_samples: usize,
    pub pass: bool,
    pub details: BTreeMap<String, f64>,
}

impl TestReport {
    pub fn new(name: impl Into<String>, statistic: f64, threshold: f64, n_samples: usize, pass: bool) -> Self {
        Self { name: name.into(), statistic, threshold, n_samples, pass, details: BTreeMap::new() }
    }

    pub fn with_detail(mut self, key: impl Into<String>, value: f64) -> Self {
        self.details.insert(key.into(), value);
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }

    /// Folds several reports into one that passes iff all of them pass; the
    /// statistic is the worst `statistic / threshold` ratio.
    pub fn all_of(name: impl Into<String>, parts: &[TestReport]) -> TestReport {
        let mut worst: f64 = 0.0;
        let mut n = 0;
        let mut details = BTreeMap::new();
        for p in parts {
            let ratio = if p.threshold > 0.0 { p.statistic / p.threshold } else { p.statistic };
            worst = worst.max(ratio);
            n += p.n_samples;
            details.insert(format!("{}.statistic", p.name), p.statistic);
            details.insert(format!("{}.threshold", p.name), p.threshold);
            details.insert(format!("{}.pass", p.name), p.pass as u8 as f64);
        }
        TestReport {
            name: name.into(),
            statistic: worst,
            threshold: 1.0,
            n_samples: n,
            pass: parts.iter().all(|p| p.pass),
            details,
        }
    }
}

/// Asymptotic Kolmogorov critical constant `sqrt(-ln(alpha/2)/2)`.
pub fn ks_critical_constant(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Kolmogorov distribution survival `P(K > x)`.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * x * x).exp();
        s += if j as u64 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return invalid("samples must be non-empty");
    }
    if xs.iter().any(|x| x.is_nan()) {
        return invalid("samples contain NaN");
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `sup |F_emp - cdf|` over the sample.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let v = sorted(samples)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        let f = cdf(v[i]);
        d = d.max((f - i as f64 / n).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    Ok(d)
}

/// One-sample Kolmogorov–Smirnov test; passes when `D < threshold`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64, threshold: f64) -> Result<TestReport> {
    let d = ks_statistic(samples, cdf)?;
    let n = samples.len();
    Ok(TestReport::new("ks_one_sample", d, threshold, n, d < threshold)
        .with_detail("p_value", kolmogorov_survival(d * (n as f64).sqrt())))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Two-sample KS with an explicit threshold on `D`.
pub fn ks_two_sample_with_threshold(a: &[f64], b: &[f64], threshold: f64) -> Result<TestReport> {
    let d = ks_two_sample_statistic(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let en = (na * nb / (na + nb)).sqrt();
    Ok(TestReport::new("ks_two_sample", d, threshold, a.len() + b.len(), d < threshold)
        .with_detail("p_value", kolmogorov_survival(d * en)))
}

/// Two-sample KS at significance `alpha` using the asymptotic critical value.
pub fn ks_two_sample_at(a: &[f64], b: &[f64], alpha: f64) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid("alpha must lie in (0, 1)");
    }
    if a.is_empty() || b.is_empty() {
        return invalid("samples must be non-empty");
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let threshold = ks_critical_constant(alpha) * ((na + nb) / (na * nb)).sqrt();
    Ok(ks_two_sample_with_threshold(a, b, threshold)?.with_detail("alpha", alpha))
}

/// Two-sample KS at level 0.01.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestReport> {
    ks_two_sample_at(a, b, 0.01)
}

const OTHER: &str = "~other";

/// Merges sparse categories: those with expected count below 5 go to a
/// shared bucket, which joins the smallest category if still too sparse.
fn pool(cats: Vec<(String, Vec<f64>, f64)>) -> Vec<(String, Vec<f64>, f64)> {
    // each entry: (label, observed counts per sample, min expected count)
    let (mut keep, sparse): (Vec<_>, Vec<_>) = cats.into_iter().partition(|c| c.2 >= 5.0);
    if sparse.is_empty() {
        return keep;
    }
    let width = sparse[0].1.len();
    let mut obs = vec![0.0; width];
    let mut exp = 0.0;
    for (_, o, e) in &sparse {
        for (a, b) in obs.iter_mut().zip(o) {
            *a += b;
        }
        exp += e;
    }
    if exp >= 5.0 || keep.is_empty() {
        keep.push((OTHER.to_string(), obs, exp));
    } else {
        let smallest = (0..keep.len()).min_by(|&a, &b| keep[a].2.total_cmp(&keep[b].2)).unwrap();
        let c = &mut keep[smallest];
        for (a, b) in c.1.iter_mut().zip(&obs) {
            *a += b;
        }
        c.2 += exp;
    }
    keep
}

fn chi_report(name: &str, stat: f64, df: usize, n: usize, alpha: f64) -> Result<TestReport> {
    if df == 0 {
        return invalid("need at least two categories after pooling");
    }
    let dist = ChiSquared::new(df as f64).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let p = dist.sf(stat);
    let crit = dist.inverse_cdf(1.0 - alpha);
    Ok(TestReport::new(name, stat, crit, n, p >= alpha)
        .with_detail("p_value", p)
        .with_detail("df", df as f64)
        .with_detail("alpha", alpha))
}

/// Pearson contingency statistic for two histograms, without pooling.
pub fn pearson_two_sample(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>) -> Result<f64> {
    let cats: Vec<(String, Vec<f64>, f64)> = contingency(a, b)?;
    Ok(pearson(&cats, a.values().sum::<u64>() as f64, b.values().sum::<u64>() as f64))
}

fn contingency(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>) -> Result<Vec<(String, Vec<f64>, f64)>> {
    let na = a.values().sum::<u64>() as f64;
    let nb = b.values().sum::<u64>() as f64;
    if na == 0.0 || nb == 0.0 {
        return invalid("histograms must be non-empty");
    }
    let total = na + nb;
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    Ok(keys
        .into_iter()
        .map(|k| {
            let oa = a.get(k).copied().unwrap_or(0) as f64;
            let ob = b.get(k).copied().unwrap_or(0) as f64;
            let col = oa + ob;
            (k.clone(), vec![oa, ob], (na * col / total).min(nb * col / total))
        })
        .filter(|c| c.1[0] + c.1[1] > 0.0)
        .collect())
}

fn pearson(cats: &[(String, Vec<f64>, f64)], na: f64, nb: f64) -> f64 {
    let total = na + nb;
    cats.iter()
        .map(|(_, o, _)| {
            let col = o[0] + o[1];
            let ea = na * col / total;
            let eb = nb * col / total;
            (o[0] - ea).powi(2) / ea + (o[1] - eb).powi(2) / eb
        })
        .sum()
}

/// Pearson chi-square test that two histograms share one law.
pub fn chi_square_two_sample_at(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>, alpha: f64) -> Result<TestReport> {
    let cats = pool(contingency(a, b)?);
    let na = a.values().sum::<u64>() as f64;
    let nb = b.values().sum::<u64>() as f64;
    let stat = pearson(&cats, na, nb);
    Ok(chi_report("chi_square_two_sample", stat, cats.len().saturating_sub(1), (na + nb) as usize, alpha)?
        .with_detail("categories", cats.len() as f64))
}

/// Two-sample chi-square at level 0.01.
pub fn chi_square_two_sample(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>) -> Result<TestReport> {
    chi_square_two_sample_at(a, b, 0.01)
}

/// Pearson goodness of fit of a histogram against category probabilities.
pub fn chi_square_gof(hist: &BTreeMap<String, u64>, prob: &dyn Fn(&str) -> f64, alpha: f64) -> Result<TestReport> {
    let n = hist.values().sum::<u64>() as f64;
    if n == 0.0 {
        return invalid("histogram must be non-empty");
    }
    let mut cats = Vec::with_capacity(hist.len());
    let mut covered = 0.0;
    for (k, &c) in hist {
        let p = prob(k);
        if !(p > 0.0) {
            return invalid(format!("category '{k}' observed but has probability {p}"));
        }
        covered += p;
        cats.push((k.clone(), vec![c as f64], n * p));
    }
    if covered < 1.0 - 1e-9 {
        // probability mass on categories never observed
        cats.push((OTHER.to_string() + "-unseen", vec![0.0], n * (1.0 - covered)));
    }
    let cats = pool(cats);
    let stat: f64 = cats.iter().map(|(_, o, e)| (o[0] - e).powi(2) / e).sum();
    chi_report("chi_square_gof", stat, cats.len().saturating_sub(1), n as usize, alpha)
}

/// Least-squares slope of `ln(value)` against `ln(n)`.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return invalid("need at least three points");
    }
    if pairs.iter().any(|&(n, v)| !(n > 0.0 && v > 0.0)) {
        return invalid("all entries must be positive");
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("n values must not all coincide");
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Per-coordinate two-sample KS; passes iff every coordinate has `D < tol`.
pub fn marginal_vector_compare(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> Result<TestReport> {
    if a.is_empty() || b.is_empty() {
        return invalid("samples must be non-empty");
    }
    let dim = a[0].len();
    if a.iter().chain(b).any(|v| v.len() != dim) {
        return invalid("all vectors must have the same dimension");
    }
    let mut rep = TestReport::new("marginal_vector_compare", 0.0, tol, a.len() + b.len(), true);
    for c in 0..dim {
        let xa: Vec<f64> = a.iter().map(|v| v[c]).collect();
        let xb: Vec<f64> = b.iter().map(|v| v[c]).collect();
        let d = ks_two_sample_statistic(&xa, &xb)?;
        rep.details.insert(format!("D[{c}]"), d);
        rep.statistic = rep.statistic.max(d);
        rep.pass &= d < tol;
    }
    Ok(rep)
}
