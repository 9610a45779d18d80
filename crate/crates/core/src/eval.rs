//! Prediction-quality statistics and the paired model comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::datasets::Distortion;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {min} observations, got {got}")]
    TooShort { got: usize, min: usize },
    #[error("degenerate variance: an input has no spread in rank")]
    DegenerateVariance,
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("result sets are not paired: {0}")]
    UnpairedRounds(String),
    #[error("results table: {0}")]
    Table(String),
}

fn check_lengths(a: usize, b: usize, min: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch(a, b));
    }
    if a < min {
        return Err(EvalError::TooShort { got: a, min });
    }
    Ok(())
}

/// 1-based ranks, ties receive the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::DegenerateVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank-order correlation.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_lengths(x.len(), y.len(), 3)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

fn tied_pairs(sorted_runs: impl Iterator<Item = u64>) -> u64 {
    sorted_runs.map(|t| t * (t - 1) / 2).sum()
}

/// Counts inversions while merge-sorting `v` in place.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps =
        merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

fn run_lengths<T: PartialEq>(items: impl Iterator<Item = T>) -> Vec<u64> {
    let mut out = Vec::new();
    let mut prev: Option<T> = None;
    for it in items {
        match &prev {
            Some(p) if *p == it => *out.last_mut().unwrap() += 1,
            _ => out.push(1),
        }
        prev = Some(it);
    }
    out
}

/// Kendall's tau-b in `O(n log n)`.
pub fn krocc(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_lengths(x.len(), y.len(), 2)?;
    let n = x.len() as u64;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(y[i].total_cmp(&y[j])));

    let ties_x = tied_pairs(run_lengths(idx.iter().map(|&i| x[i])).into_iter());
    let ties_xy = tied_pairs(run_lengths(idx.iter().map(|&i| (x[i], y[i]))).into_iter());

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = merge_count(&mut ys, &mut buf);
    let ties_y = tied_pairs(run_lengths(ys.iter().copied()).into_iter());

    let total = n * (n - 1) / 2;
    let (dx, dy) = ((total - ties_x) as f64, (total - ties_y) as f64);
    if dx == 0.0 || dy == 0.0 {
        return Err(EvalError::DegenerateVariance);
    }
    let s = total as f64 - ties_x as f64 - ties_y as f64 + ties_xy as f64 - 2.0 * swaps as f64;
    Ok((s / (dx * dy).sqrt()).clamp(-1.0, 1.0))
}

/// Fraction of exact label matches.
pub fn accuracy<T: PartialEq>(predicted: &[T], truth: &[T]) -> Result<f64, EvalError> {
    check_lengths(predicted.len(), truth.len(), 1)?;
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Which of the two paired samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn other(self) -> Self {
        match self {
            Group::A => Group::B,
            Group::B => Group::A,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WilcoxonMethod {
    /// Exact for `n_effective <= 25`, normal approximation above.
    #[default]
    Auto,
    Exact,
    Normal,
}

pub const EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonOutcome {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub reject: bool,
    /// Group with the larger mean, set only when the null is rejected.
    pub direction: Option<Group>,
    pub exact: bool,
}

/// Exact two-sided p-value of `W+ = w_plus2 / 2` given doubled ranks.
fn exact_p(ranks2: &[usize], w_plus2: usize) -> f64 {
    let total: usize = ranks2.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in ranks2 {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(ranks2.len() as i32);
    let cdf: f64 = counts[..=w_plus2].iter().sum::<f64>() / all;
    let sf: f64 = counts[w_plus2..].iter().sum::<f64>() / all;
    (2.0 * cdf.min(sf)).min(1.0)
}

fn normal_p(abs_diffs_ranks: &[f64], w_plus: f64) -> f64 {
    let n = abs_diffs_ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let ties: f64 = run_lengths({
        let mut r = abs_diffs_ranks.to_vec();
        r.sort_by(f64::total_cmp);
        r.into_iter()
    })
    .into_iter()
    .map(|t| {
        let t = t as f64;
        t * t * t - t
    })
    .sum();
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    let d = w_plus - mean;
    if var <= 0.0 {
        return 1.0;
    }
    let d = (d.abs() - 0.5).max(0.0);
    let z = d / var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - std.cdf(z))).min(1.0)
}

pub fn wilcoxon_paired(a: &[f64], b: &[f64], alpha: f64) -> Result<WilcoxonOutcome, EvalError> {
    wilcoxon_paired_with(a, b, alpha, WilcoxonMethod::Auto)
}

/// Paired signed-rank test on `a - b`; zero differences are dropped.
pub fn wilcoxon_paired_with(
    a: &[f64],
    b: &[f64],
    alpha: f64,
    method: WilcoxonMethod,
) -> Result<WilcoxonOutcome, EvalError> {
    check_lengths(a.len(), b.len(), 1)?;
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(EvalError::AllZeroDifferences);
    }
    let n = diffs.len();
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let w_minus = (n * (n + 1)) as f64 / 2.0 - w_plus;

    let exact = match method {
        WilcoxonMethod::Auto => n <= EXACT_LIMIT,
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
    };
    let p_value = if exact {
        let ranks2: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        exact_p(&ranks2, (2.0 * w_plus).round() as usize)
    } else {
        normal_p(&ranks, w_plus)
    };
    let reject = p_value < alpha;
    let direction = reject.then(|| {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(a), mean(b));
        if ma > mb || (ma == mb && w_plus > w_minus) {
            Group::A
        } else {
            Group::B
        }
    });
    Ok(WilcoxonOutcome {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        p_value,
        n_effective: n,
        reject,
        direction,
        exact,
    })
}

/// Rank correlations restricted to one distortion class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScores {
    pub srocc: Option<f64>,
    pub krocc: Option<f64>,
}

/// Metrics of one (round, test set) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub round: usize,
    pub test_set: String,
    pub srocc: Option<f64>,
    pub krocc: Option<f64>,
    pub accuracy: Option<f64>,
    pub per_class: BTreeMap<Distortion, ClassScores>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Srocc,
    Krocc,
    Accuracy,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Srocc, Metric::Krocc, Metric::Accuracy];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Srocc => "srocc",
            Metric::Krocc => "krocc",
            Metric::Accuracy => "accuracy",
        }
    }
}

impl RoundResult {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Srocc => self.srocc,
            Metric::Krocc => self.krocc,
            Metric::Accuracy => self.accuracy,
        }
    }
}

pub fn results_header() -> Vec<String> {
    let mut h: Vec<String> = ["round", "test_set", "srocc", "krocc", "accuracy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for d in Distortion::ALL {
        h.push(format!("srocc_{}", d.name()));
        h.push(format!("krocc_{}", d.name()));
    }
    h
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn result_record(r: &RoundResult) -> Vec<String> {
    let mut rec = vec![
        r.round.to_string(),
        r.test_set.clone(),
        cell(r.srocc),
        cell(r.krocc),
        cell(r.accuracy),
    ];
    for d in Distortion::ALL {
        let s = r.per_class.get(&d).copied().unwrap_or_default();
        rec.push(cell(s.srocc));
        rec.push(cell(s.krocc));
    }
    rec
}

pub fn write_results(w: impl Write, results: &[RoundResult]) -> Result<(), EvalError> {
    let table = |e: csv::Error| EvalError::Table(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(results_header()).map_err(table)?;
    for r in results {
        out.write_record(result_record(r)).map_err(table)?;
    }
    out.flush().map_err(|e| EvalError::Table(e.to_string()))
}

pub fn read_results(r: impl Read) -> Result<Vec<RoundResult>, EvalError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| EvalError::Table(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if header != results_header() {
        return Err(EvalError::Table(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |what: &str| EvalError::Table(format!("line {line}: {what}"));
        let rec = rec.map_err(|e| bad(&e.to_string()))?;
        let opt = |k: usize| -> Result<Option<f64>, EvalError> {
            let s = &rec[k];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| bad(&format!("bad number `{s}`")))
            }
        };
        let mut per_class = BTreeMap::new();
        for (j, d) in Distortion::ALL.into_iter().enumerate() {
            let s = ClassScores {
                srocc: opt(5 + 2 * j)?,
                krocc: opt(6 + 2 * j)?,
            };
            if s != ClassScores::default() {
                per_class.insert(d, s);
            }
        }
        out.push(RoundResult {
            round: rec[0].parse().map_err(|_| bad("bad round id"))?,
            test_set: rec[1].to_string(),
            srocc: opt(2)?,
            krocc: opt(3)?,
            accuracy: opt(4)?,
            per_class,
        });
    }
    Ok(out)
}

/// One row of the significance table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub test_set: String,
    pub metric: Metric,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_pairs: usize,
    /// `None` when every paired difference is zero.
    pub test: Option<WilcoxonOutcome>,
    /// Group whose improvement is significant, if any.
    pub winner: Option<Group>,
}

pub const ALPHA: f64 = 0.05;

/// Pairs results by `(round, test_set)` and runs a Wilcoxon test per test set and metric.
pub fn compare_models(
    a: &[RoundResult],
    b: &[RoundResult],
    alpha: f64,
) -> Result<Vec<ComparisonRow>, EvalError> {
    let key = |r: &RoundResult| (r.test_set.clone(), r.round);
    let index_b: BTreeMap<_, _> = b.iter().map(|r| (key(r), r)).collect();
    let index_a: BTreeMap<_, _> = a.iter().map(|r| (key(r), r)).collect();
    if index_a.len() != a.len() || index_b.len() != b.len() {
        return Err(EvalError::UnpairedRounds(
            "duplicate (round, test_set) entries".into(),
        ));
    }
    if let Some(k) = index_a.keys().find(|k| !index_b.contains_key(*k)) {
        return Err(EvalError::UnpairedRounds(format!(
            "round {} of `{}` missing from second set",
            k.1, k.0
        )));
    }
    if let Some(k) = index_b.keys().find(|k| !index_a.contains_key(*k)) {
        return Err(EvalError::UnpairedRounds(format!(
            "round {} of `{}` missing from first set",
            k.1, k.0
        )));
    }

    let mut sets: Vec<String> = index_a.keys().map(|k| k.0.clone()).collect();
    sets.dedup();
    let mut rows = Vec::new();
    for set in sets {
        for metric in Metric::ALL {
            let (mut xa, mut xb) = (Vec::new(), Vec::new());
            for ((s, _), ra) in &index_a {
                if *s != set {
                    continue;
                }
                let rb = index_b[&(s.clone(), ra.round)];
                if let (Some(u), Some(v)) = (ra.metric(metric), rb.metric(metric)) {
                    xa.push(u);
                    xb.push(v);
                }
            }
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    f64::NAN
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            let test = if xa.is_empty() {
                None
            } else {
                match wilcoxon_paired(&xa, &xb, alpha) {
                    Ok(o) => Some(o),
                    Err(EvalError::AllZeroDifferences) => None,
                    Err(e) => return Err(e),
                }
            };
            rows.push(ComparisonRow {
                test_set: set.clone(),
                metric,
                mean_a: mean(&xa),
                mean_b: mean(&xb),
                n_pairs: xa.len(),
                winner: test.as_ref().and_then(|t| t.direction),
                test,
            });
        }
    }
    Ok(rows)
}

pub fn write_comparison_csv(
    w: impl Write,
    rows: &[ComparisonRow],
    labels: (&str, &str),
) -> Result<(), EvalError> {
    let table = |e: csv::Error| EvalError::Table(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "test_set",
        "metric",
        "mean_a",
        "mean_b",
        "n_pairs",
        "statistic",
        "p_value",
        "reject",
        "winner",
    ])
    .map_err(table)?;
    for r in rows {
        let winner = match r.winner {
            Some(Group::A) => labels.0,
            Some(Group::B) => labels.1,
            None => "",
        };
        out.write_record([
            r.test_set.clone(),
            r.metric.name().to_string(),
            r.mean_a.to_string(),
            r.mean_b.to_string(),
            r.n_pairs.to_string(),
            r.test
                .as_ref()
                .map(|t| t.statistic.to_string())
                .unwrap_or_default(),
            r.test
                .as_ref()
                .map(|t| t.p_value.to_string())
                .unwrap_or_default(),
            r.test
                .as_ref()
                .map(|t| t.reject.to_string())
                .unwrap_or_else(|| "false".into()),
            winner.to_string(),
        ])
        .map_err(table)?;
    }
    out.flush().map_err(|e| EvalError::Table(e.to_string()))
}

/// Plain-text table: one line per test set, metrics side by side, significant
/// winners marked with `*`.
pub fn comparison_report(rows: &[ComparisonRow], labels: (&str, &str)) -> String {
    let mut sets: Vec<&str> = rows.iter().map(|r| r.test_set.as_str()).collect();
    sets.dedup();
    let width = sets.iter().map(|s| s.len()).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "test set");
    for m in Metric::ALL {
        let _ = write!(
            out,
            "  {:>10} {:>10} {:>8}",
            format!("{}:{}", m.name(), labels.0),
            format!("{}:{}", m.name(), labels.1),
            "p"
        );
    }
    out.push('\n');
    for set in sets {
        let _ = write!(out, "{set:<width$}");
        for m in Metric::ALL {
            let Some(r) = rows.iter().find(|r| r.test_set == set && r.metric == m) else {
                continue;
            };
            let mark = |g: Group| if r.winner == Some(g) { "*" } else { " " };
            let p = r
                .test
                .as_ref()
                .map(|t| format!("{:.4}", t.p_value))
                .unwrap_or_else(|| "-".into());
            let _ = write!(
                out,
                "  {:>9.4}{} {:>9.4}{} {:>8}",
                r.mean_a,
                mark(Group::A),
                r.mean_b,
                mark(Group::B),
                p
            );
        }
        out.push('\n');
    }
    out
}

/// Mean of each metric over the results of one test set.
pub fn summarize(results: &[RoundResult]) -> Vec<(String, Metric, Option<f64>, usize)> {
    let mut sets: Vec<String> = results.iter().map(|r| r.test_set.clone()).collect();
    sets.sort();
    sets.dedup();
    let mut out = Vec::new();
    for set in sets {
        for m in Metric::ALL {
            let vals: Vec<f64> = results
                .iter()
                .filter(|r| r.test_set == set)
                .filter_map(|r| r.metric(m))
                .collect();
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            out.push((set.clone(), m, mean, vals.len()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kendall_pairs(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut s, mut tx, mut ty) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let dx = (x[i] - x[j]).signum() * ((x[i] != x[j]) as i32 as f64);
                let dy = (y[i] - y[j]).signum() * ((y[i] != y[j]) as i32 as f64);
                s += dx * dy;
                tx += (dx == 0.0) as i32 as f64;
                ty += (dy == 0.0) as i32 as f64;
            }
        }
        let n0 = (n * (n - 1) / 2) as f64;
        s / ((n0 - tx) * (n0 - ty)).sqrt()
    }

    fn spearman_bruteforce(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    let less = v.iter().filter(|b| *b < a).count() as f64;
                    let eq = v.iter().filter(|b| *b == a).count() as f64;
                    less + (eq + 1.0) / 2.0
                })
                .collect()
        };
        let (rx, ry) = (rank(x), rank(y));
        let n = x.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    /// Enumerates all sign assignments of the ranks.
    fn wilcoxon_enumerated(a: &[f64], b: &[f64]) -> f64 {
        let diffs: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(x, y)| x - y)
            .filter(|d| *d != 0.0)
            .collect();
        let n = diffs.len();
        let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        let ranks: Vec<f64> = mags
            .iter()
            .map(|m| {
                let less = mags.iter().filter(|v| *v < m).count() as f64;
                let eq = mags.iter().filter(|v| *v == m).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect();
        let observed: f64 = diffs
            .iter()
            .zip(&ranks)
            .filter(|(d, _)| **d > 0.0)
            .map(|(_, r)| r)
            .sum();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            le += (w <= observed) as u64;
            ge += (w >= observed) as u64;
        }
        let all = (1u64 << n) as f64;
        (2.0 * (le as f64 / all).min(ge as f64 / all)).min(1.0)
    }

    #[test]
    fn srocc_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(srocc(&x, &x.map(|v: f64| v.exp())).unwrap(), 1.0);
        assert_eq!(srocc(&x, &x.map(|v| -v)).unwrap(), -1.0);
        assert!((srocc(&x, &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(srocc(&x, &[1.0; 5]), Err(EvalError::DegenerateVariance));
        assert_eq!(srocc(&x, &[1.0; 4]), Err(EvalError::LengthMismatch(5, 4)));
    }

    #[test]
    fn krocc_examples() {
        assert_eq!(krocc(&[1.0, 2.0, 3.0], &[4.0, 5.0, 9.0]).unwrap(), 1.0);
        assert_eq!(krocc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(
            krocc(&[1.0, 1.0], &[1.0, 2.0]),
            Err(EvalError::DegenerateVariance)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        assert!((krocc(&x, &y).unwrap() - kendall_pairs(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 3], &[2, 3, 1]).unwrap(), 0.0);
        assert_eq!(
            accuracy(&['a', 'b', 'c', 'd'], &['a', 'b', 'c', 'x']).unwrap(),
            0.75
        );
        assert!(accuracy::<u8>(&[], &[]).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn wilcoxon_examples() {
        let a: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        assert_eq!(
            wilcoxon_paired(&a, &a, ALPHA),
            Err(EvalError::AllZeroDifferences)
        );

        let b: Vec<f64> = a.iter().map(|v| v - 1.0).collect();
        let out = wilcoxon_paired(&a, &b, ALPHA).unwrap();
        assert!(out.reject && out.direction == Some(Group::A) && !out.exact);
        assert_eq!(out.statistic, 0.0);

        let a10 = [1.83, 0.50, 1.62, 2.48, 1.68, 1.88, 1.55, 3.06, 1.30, 0.2];
        let b10 = [0.878, 0.647, 0.598, 2.05, 1.06, 1.29, 1.06, 3.14, 1.29, 0.8];
        let out = wilcoxon_paired(&a10, &b10, ALPHA).unwrap();
        assert!(out.exact);
        assert!((out.p_value - wilcoxon_enumerated(&a10, &b10)).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_exact_matches_enumeration_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=12 {
            for _ in 0..20 {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
                let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
                match wilcoxon_paired_with(&a, &b, ALPHA, WilcoxonMethod::Exact) {
                    Ok(o) => assert!((o.p_value - wilcoxon_enumerated(&a, &b)).abs() < 1e-12),
                    Err(e) => assert_eq!(e, EvalError::AllZeroDifferences),
                }
            }
        }
    }

    #[test]
    fn exact_and_normal_agree_at_crossover() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..25).map(|_| rng.random::<f64>() + 0.1).collect();
            let e = wilcoxon_paired_with(&a, &b, ALPHA, WilcoxonMethod::Exact).unwrap();
            let z = wilcoxon_paired_with(&a, &b, ALPHA, WilcoxonMethod::Normal).unwrap();
            assert!(
                (e.p_value - z.p_value).abs() <= 0.01,
                "{} vs {}",
                e.p_value,
                z.p_value
            );
        }
    }

    fn rounds(set: &str, base: f64, n: usize, seed: u64) -> Vec<RoundResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| RoundResult {
                round: i,
                test_set: set.into(),
                srocc: Some(base + rng.random_range(-0.02..0.02)),
                krocc: Some(base - 0.1 + rng.random_range(-0.02..0.02)),
                accuracy: Some(0.8 + rng.random_range(-0.02..0.02)),
                per_class: BTreeMap::new(),
            })
            .collect()
    }

    #[test]
    fn comparison_of_identical_sets_has_no_rejections() {
        let a = [rounds("live", 0.8, 200, 1), rounds("tid", 0.7, 200, 2)].concat();
        let rows = compare_models(&a, &a, ALPHA).unwrap();
        assert_eq!(rows.len(), 2 * Metric::ALL.len());
        assert!(rows
            .iter()
            .all(|r| r.winner.is_none() && r.mean_a == r.mean_b));
    }

    #[test]
    fn comparison_detects_uniform_shift_antisymmetrically() {
        let a = rounds("live", 0.8, 200, 4);
        let b: Vec<RoundResult> = a
            .iter()
            .map(|r| RoundResult {
                srocc: r.srocc.map(|v| v + 0.05),
                ..r.clone()
            })
            .collect();
        let ab = compare_models(&a, &b, ALPHA).unwrap();
        let ba = compare_models(&b, &a, ALPHA).unwrap();
        let srocc = ab.iter().find(|r| r.metric == Metric::Srocc).unwrap();
        assert_eq!(srocc.winner, Some(Group::B));
        for (x, y) in ab.iter().zip(&ba) {
            assert_eq!(x.winner.map(Group::other), y.winner);
            assert_eq!(
                x.test.as_ref().map(|t| t.p_value),
                y.test.as_ref().map(|t| t.p_value)
            );
        }
        let report = comparison_report(&ab, ("m1", "base"));
        assert!(report.contains('*'));
    }

    #[test]
    fn unpaired_rounds_are_rejected() {
        let a = rounds("live", 0.8, 5, 1);
        assert!(matches!(
            compare_models(&a, &a[..4], ALPHA),
            Err(EvalError::UnpairedRounds(_))
        ));
    }

    #[test]
    fn results_csv_roundtrip() {
        let mut r = rounds("csiq", 0.7, 3, 9);
        r[1].srocc = None;
        r[2].per_class.insert(
            Distortion::Wn,
            ClassScores {
                srocc: Some(0.99),
                krocc: None,
            },
        );
        let mut buf = Vec::new();
        write_results(&mut buf, &r).unwrap();
        assert_eq!(read_results(buf.as_slice()).unwrap(), r);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn correlations_match_bruteforce(pairs in prop::collection::vec((0i32..20, 0i32..20), 3..60)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            match krocc(&x, &y) {
                Ok(t) => prop_assert!((t - kendall_pairs(&x, &y)).abs() < 1e-12),
                Err(e) => prop_assert_eq!(e, EvalError::DegenerateVariance),
            }
            match srocc(&x, &y) {
                Ok(r) => prop_assert!((r - spearman_bruteforce(&x, &y)).abs() < 1e-12),
                Err(e) => prop_assert_eq!(e, EvalError::DegenerateVariance),
            }
        }

        #[test]
        fn monotone_transform_invariance(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..50)) {
            let x: Vec<f64> = v.iter().map(|p| p.0).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1).collect();
            let tx: Vec<f64> = x.iter().map(|a| (a / 100.0).exp() * 3.0 + 1.0).collect();
            if let (Ok(a), Ok(b)) = (srocc(&x, &y), srocc(&tx, &y)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            if let (Ok(a), Ok(b)) = (krocc(&x, &y), krocc(&tx, &y)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
