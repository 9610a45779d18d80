//! Built-in property checks, runnable from a release binary without test data.
//!
//! Each group compares the library against an independent, deliberately naive
//! reimplementation or against an exact mathematical identity.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::eval::{self, WilcoxonMethod};
use crate::fdct::{CurveletConfig, CurveletTransform};
use crate::robust_stats as rs;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Random blocks per transform check.
    pub blocks: usize,
    /// Scale one window by this factor before the transform checks (negative control).
    pub perturb_window: Option<f64>,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self {
            seed: 20_240_101,
            blocks: 8,
            perturb_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation and its threshold, or the first failure.
    pub detail: String,
    pub elapsed: Duration,
}

type Check = fn(&SelftestOptions) -> Result<String, String>;

pub const GROUPS: [&str; 5] = [
    "fdct-roundtrip",
    "tight-frame",
    "robust-stats",
    "correlation",
    "wilcoxon",
];

pub fn run(opts: &SelftestOptions) -> Vec<GroupOutcome> {
    let checks: [Check; 5] = [roundtrip, tight_frame, robust_stats, correlation, wilcoxon];
    GROUPS
        .iter()
        .zip(checks)
        .map(|(&name, check)| {
            let start = Instant::now();
            let res = check(opts);
            GroupOutcome {
                name,
                passed: res.is_ok(),
                detail: res.unwrap_or_else(|e| e),
                elapsed: start.elapsed(),
            }
        })
        .collect()
}

fn within(what: &str, worst: f64, limit: f64) -> Result<String, String> {
    let msg = format!("{what}: worst {worst:.3e} (limit {limit:.0e})");
    if worst <= limit {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn transform(opts: &SelftestOptions) -> Result<CurveletTransform, String> {
    let mut t = CurveletTransform::new(CurveletConfig::default()).map_err(|e| e.to_string())?;
    if let Some(f) = opts.perturb_window {
        t.perturb_window(3, 5, f);
    }
    Ok(t)
}

fn random_block(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..255.0))
}

fn norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn roundtrip(opts: &SelftestOptions) -> Result<String, String> {
    let t = transform(opts)?;
    let n = t.config().size;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;
    for _ in 0..opts.blocks {
        let x = random_block(&mut rng, n);
        let back = t
            .inverse(&t.forward(&x).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        worst = worst.max(norm(&(&back - &x)) / norm(&x));
    }
    within("relative reconstruction error", worst, 1e-6)
}

fn tight_frame(opts: &SelftestOptions) -> Result<String, String> {
    let t = transform(opts)?;
    let partition = t.partition_deviation();
    within("partition of unity", partition, 1e-10)?;
    let n = t.config().size;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 1);
    let mut worst = 0.0f64;
    for _ in 0..opts.blocks.max(2) / 2 {
        let (x, y) = (random_block(&mut rng, n), random_block(&mut rng, n));
        let (fx, fy) = (
            t.forward(&x).map_err(|e| e.to_string())?,
            t.forward(&y).map_err(|e| e.to_string())?,
        );
        let direct: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        worst = worst.max((fx.inner(&fy) - direct).abs() / direct.abs());
    }
    within("inner-product preservation", worst, 1e-9)
        .map(|m| format!("{m}; partition {partition:.1e}"))
}

/// Quantile from an insertion-sorted copy with explicit rank arithmetic.
fn naive_quantile(data: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = Vec::with_capacity(data.len());
    for &x in data {
        let at = v.iter().position(|&y| y > x).unwrap_or(v.len());
        v.insert(at, x);
    }
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor();
    v[lo as usize] + (h - lo) * (v[h.ceil() as usize] - v[lo as usize])
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn robust_stats(opts: &SelftestOptions) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 2);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let n = rng.random_range(8..60);
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..100.0)).collect();
        let q = |p| naive_quantile(&data, p);
        let med = q(0.5);
        let dev: Vec<f64> = data.iter().map(|x| (x - med).abs()).collect();
        let mad = naive_quantile(&dev, 0.5);
        let oc = rs::octiles(&data).map_err(|e| e.to_string())?;
        let iqr = q(0.75) - q(0.25);
        let pairs = [
            (
                rs::qcd(&data).map_err(|e| e.to_string())?,
                iqr / (q(0.75) + q(0.25)),
            ),
            (rs::mad(&data).map_err(|e| e.to_string())?, mad),
            (rs::rmad(&data).map_err(|e| e.to_string())?, mad / med),
            (
                rs::bowley_skew(&oc).map_err(|e| e.to_string())?,
                (q(0.75) + q(0.25) - 2.0 * med) / iqr,
            ),
            (
                rs::moors_kurt(&oc).map_err(|e| e.to_string())?,
                (q(0.875) - q(0.625) + q(0.375) - q(0.125)) / iqr,
            ),
        ];
        for (got, want) in pairs {
            worst = worst.max(rel_err(got, want));
        }
    }
    within("quantile statistics vs naive oracle", worst, 1e-12)?;
    let normal: Vec<f64> = (0..100_000)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let k = rs::moors_kurt(&rs::octiles(&normal).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    if (k - 1.233).abs() > 0.02 {
        return Err(format!(
            "normal octile kurtosis {k:.4}, expected 1.233 ± 0.02"
        ));
    }
    Ok(format!(
        "oracle deviation {worst:.1e}; normal kurtosis {k:.4}"
    ))
}

fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Kendall's tau-b by pair enumeration.
fn naive_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let (mut conc, mut disc, mut tx, mut ty) = (0.0f64, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1.0,
                (false, true) => ty += 1.0,
                _ if dx * dy > 0.0 => conc += 1.0,
                _ => disc += 1.0,
            }
        }
    }
    (conc - disc) / ((conc + disc + tx) * (conc + disc + ty)).sqrt()
}

fn correlation(opts: &SelftestOptions) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 3);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let n = rng.random_range(3..40);
        // Coarse integer values force ties.
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| v + rng.random_range(0..5) as f64)
            .collect();
        let (Ok(s), Ok(k)) = (eval::srocc(&x, &y), eval::krocc(&x, &y)) else {
            continue;
        };
        worst = worst
            .max((s - pearson(&naive_ranks(&x), &naive_ranks(&y))).abs())
            .max((k - naive_tau_b(&x, &y)).abs());
    }
    within("rank correlations vs naive oracle", worst, 1e-12)
}

/// Two-sided exact p-value by enumerating every sign assignment.
fn enumerated_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let total = 1u64 << n;
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0..total {
        let w: f64 = (0..n)
            .filter(|b| mask >> b & 1 == 1)
            .map(|b| ranks[b])
            .sum();
        if w <= w_plus + 1e-9 {
            le += 1;
        }
        if w >= w_plus - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

fn wilcoxon(opts: &SelftestOptions) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 4);
    let mut worst = 0.0f64;
    for n in 1..=12 {
        for _ in 0..4 {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
            let b: Vec<f64> = (0..n)
                .map(|_| rng.random_range(0..6) as f64 + 0.5 * rng.random_range(0..2) as f64)
                .collect();
            let Ok(out) = eval::wilcoxon_paired_with(&a, &b, 0.05, WilcoxonMethod::Exact) else {
                continue;
            };
            let diffs: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| x - y)
                .filter(|d| *d != 0.0)
                .collect();
            let ranks = naive_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
            let w_plus: f64 = diffs
                .iter()
                .zip(&ranks)
                .filter(|(d, _)| **d > 0.0)
                .map(|(_, r)| r)
                .sum();
            worst = worst.max((out.p_value - enumerated_p(&ranks, w_plus)).abs());
        }
    }
    within("exact p vs enumeration", worst, 1e-12)?;
    let mut gap = 0.0f64;
    for _ in 0..20 {
        let a: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + rng.random_range(-0.3..0.4)).collect();
        let exact = eval::wilcoxon_paired_with(&a, &b, 0.05, WilcoxonMethod::Exact)
            .map_err(|e| e.to_string())?;
        let approx = eval::wilcoxon_paired_with(&a, &b, 0.05, WilcoxonMethod::Normal)
            .map_err(|e| e.to_string())?;
        gap = gap.max((exact.p_value - approx.p_value).abs());
    }
    within("exact vs normal p at n = 25", gap, 0.01)
        .map(|m| format!("enumeration {worst:.1e}; {m}"))
}
