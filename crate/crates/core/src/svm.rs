//! RBF-kernel support vector machines.
//!
//! * [`SvcModel`] is a soft-margin C-SVC, one-vs-one, with Platt-calibrated pairwise
//!   probabilities coupled into a multiclass distribution.
//! * [`SvrModel`] is a ν-SVR.
//!
//! Both duals are solved by SMO with second-order working-set selection. The
//! penalty follows the per-sample convention: each dual variable is bounded by `C`
//! (so duplicating every training sample is equivalent to doubling `C`). Ties in
//! working-set selection go to the lowest index, and training data are put into a
//! canonical order first, so results do not depend on the order samples are given in.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training data contain a single class")]
    SingleClass,
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model was trained without probability calibration")]
    UntrainedModel,
    #[error("model file: {0}")]
    Format(String),
    #[error("model file version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_EPS: f64 = 1e-3;
const TAU: f64 = 1e-12;

/// Column-wise zero-mean, unit-variance scaling (population variance).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Constant columns get `std = 1`.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, SvmError> {
        if rows.len() < 2 {
            return Err(SvmError::EmptyInput);
        }
        let dim = check_rows(rows)?;
        let n = rows.len() as f64;
        let means: Vec<f64> = (0..dim)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let stds = (0..dim)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn unapply(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn apply_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize, SvmError> {
    let dim = rows.first().ok_or(SvmError::EmptyInput)?.len();
    for r in rows {
        if r.len() != dim {
            return Err(SvmError::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite);
        }
    }
    Ok(dim)
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-γ‖x − y‖²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok((-gamma * sq_dist(x, y)).exp())
}

/// Pairwise squared distances of a fixed sample set; kernels for any γ derive from it.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    d2: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut d2 = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = sq_dist(&rows[i], &rows[j]);
                d2[i * n + j] = d;
                d2[j * n + i] = d;
            }
        }
        Self { n, d2 }
    }

    fn kernel(&self, idx: &[usize], gamma: f64) -> Vec<f64> {
        let l = idx.len();
        let mut k = vec![0.0; l * l];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate().skip(a) {
                let v = (-gamma * self.d2[i * self.n + j]).exp();
                k[a * l + b] = v;
                k[b * l + a] = v;
            }
        }
        k
    }
}

/// SMO solver for `min ½ αᵀQα + pᵀα` s.t. `yᵀα = const`, `0 ≤ α ≤ C`,
/// where `Q_ij = y_i y_j K(i mod l, j mod l)`.
struct Solver<'a> {
    kernel: &'a [f64],
    l: usize,
    y: Vec<f64>,
    p: Vec<f64>,
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    eps: f64,
    /// Separate equality constraint per sign (ν formulations).
    split: bool,
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    gap: f64,
    iterations: usize,
}

impl Solver<'_> {
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.kernel[(i % self.l) * self.l + (j % self.l)]
    }

    fn qd(&self, i: usize) -> f64 {
        let b = i % self.l;
        self.kernel[b * self.l + b]
    }

    fn upper(&self, i: usize) -> bool {
        self.alpha[i] >= self.c
    }

    fn lower(&self, i: usize) -> bool {
        self.alpha[i] <= 0.0
    }

    fn solve(mut self) -> Solution {
        let m = self.y.len();
        self.grad = self.p.clone();
        for i in 0..m {
            if self.alpha[i] != 0.0 {
                self.add_column(i, self.alpha[i], None);
            }
        }
        let max_iter = (100 * m).max(10_000_000);
        let mut iterations = 0;
        let mut gap;
        loop {
            let (sel, g) = if self.split {
                self.select_split()
            } else {
                self.select()
            };
            gap = g;
            let Some((i, j)) = sel else { break };
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            self.update(i, j);
        }
        let rho = if self.split {
            self.rho_split()
        } else {
            self.rho()
        };
        Solution {
            alpha: self.alpha,
            rho,
            gap,
            iterations,
        }
    }

    fn second_order(&self, i: usize, j: usize, grad_diff: f64) -> f64 {
        let kij = self.kernel[(i % self.l) * self.l + (j % self.l)];
        let quad = self.qd(i) + self.qd(j) - 2.0 * kij;
        -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU }
    }

    /// Returns the working pair (or `None` at optimality) and the KKT gap `m(α) − M(α)`.
    fn select(&self) -> (Option<(usize, usize)>, f64) {
        let m = self.y.len();
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..m {
            let v = if self.y[t] > 0.0 {
                (!self.upper(t)).then(|| -self.grad[t])
            } else {
                (!self.lower(t)).then(|| self.grad[t])
            };
            if let Some(v) = v {
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        for j in 0..m {
            let (eligible, gj) = if self.y[j] > 0.0 {
                (!self.lower(j), self.grad[j])
            } else {
                (!self.upper(j), -self.grad[j])
            };
            if !eligible {
                continue;
            }
            gmax2 = gmax2.max(gj);
            if let Some(i) = i_sel {
                let grad_diff = gmax + gj;
                if grad_diff > 0.0 {
                    let obj = self.second_order(i, j, grad_diff);
                    if obj < best {
                        best = obj;
                        j_sel = Some(j);
                    }
                }
            }
        }
        let gap = gmax + gmax2;
        match (i_sel, j_sel) {
            (Some(i), Some(j)) if gap >= self.eps => (Some((i, j)), gap),
            _ => (None, gap.max(0.0)),
        }
    }

    fn select_split(&self) -> (Option<(usize, usize)>, f64) {
        let m = self.y.len();
        let (mut gp, mut gn) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let (mut ip, mut in_) = (None, None);
        for t in 0..m {
            if self.y[t] > 0.0 {
                if !self.upper(t) && -self.grad[t] > gp {
                    gp = -self.grad[t];
                    ip = Some(t);
                }
            } else if !self.lower(t) && self.grad[t] > gn {
                gn = self.grad[t];
                in_ = Some(t);
            }
        }
        let (mut gp2, mut gn2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        for j in 0..m {
            if self.y[j] > 0.0 {
                if self.lower(j) {
                    continue;
                }
                gp2 = gp2.max(self.grad[j]);
                if let Some(i) = ip {
                    let grad_diff = gp + self.grad[j];
                    if grad_diff > 0.0 {
                        let obj = self.second_order(i, j, grad_diff);
                        if obj < best {
                            best = obj;
                            j_sel = Some(j);
                        }
                    }
                }
            } else {
                if self.upper(j) {
                    continue;
                }
                gn2 = gn2.max(-self.grad[j]);
                if let Some(i) = in_ {
                    let grad_diff = gn - self.grad[j];
                    if grad_diff > 0.0 {
                        let obj = self.second_order(i, j, grad_diff);
                        if obj < best {
                            best = obj;
                            j_sel = Some(j);
                        }
                    }
                }
            }
        }
        let gap = (gp + gp2).max(gn + gn2);
        match j_sel {
            Some(j) if gap >= self.eps => {
                let i = if self.y[j] > 0.0 { ip } else { in_ };
                (Some((i.expect("partner exists"), j)), gap)
            }
            _ => (None, gap.max(0.0)),
        }
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let qij = self.q(i, j);
        let (mut ai, mut aj) = (old_i, old_j);
        if self.y[i] != self.y[j] {
            let mut quad = self.qd(i) + self.qd(j) + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = self.qd(i) + self.qd(j) - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        self.add_column(i, di, Some((j, dj)));
    }

    /// `grad += Q[:, i]·di (+ Q[:, j]·dj)`, walking contiguous kernel rows.
    fn add_column(&mut self, i: usize, di: f64, other: Option<(usize, f64)>) {
        let l = self.l;
        let row = |t: usize| &self.kernel[(t % l) * l..(t % l + 1) * l];
        let (ki, ci) = (row(i), self.y[i] * di);
        let (kj, cj) = match other {
            Some((j, dj)) => (row(j), self.y[j] * dj),
            None => (ki, 0.0),
        };
        for (g, y) in self.grad.chunks_mut(l).zip(self.y.chunks(l)) {
            for b in 0..l {
                g[b] += y[b] * (ci * ki[b] + cj * kj[b]);
            }
        }
    }

    fn rho(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum, mut free) = (0.0, 0usize);
        for i in 0..self.y.len() {
            let yg = self.y[i] * self.grad[i];
            if self.upper(i) {
                if self.y[i] < 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else if self.lower(i) {
                if self.y[i] > 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        if free > 0 {
            sum / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }

    fn rho_split(&self) -> f64 {
        let mut acc = [(f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize); 2];
        for i in 0..self.y.len() {
            let s = &mut acc[(self.y[i] < 0.0) as usize];
            let g = self.grad[i];
            if self.upper(i) {
                s.1 = s.1.max(g);
            } else if self.lower(i) {
                s.0 = s.0.min(g);
            } else {
                s.2 += g;
                s.3 += 1;
            }
        }
        let r = |(ub, lb, sum, n): (f64, f64, f64, usize)| {
            if n > 0 {
                sum / n as f64
            } else {
                (ub + lb) / 2.0
            }
        };
        (r(acc[0]) - r(acc[1])) / 2.0
    }
}

fn check_params(c: f64, gamma: f64, eps: f64) -> Result<(), SvmError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(SvmError::InvalidParameter(format!(
            "C = {c} must be positive"
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(SvmError::InvalidParameter(format!(
            "gamma = {gamma} must be positive"
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(SvmError::InvalidParameter(format!(
            "tolerance {eps} must be positive"
        )));
    }
    Ok(())
}

/// Sort order used to make training independent of input order.
pub(crate) fn canonical_order(rows: &[Vec<f64>], key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| {
        key(a).total_cmp(&key(b)).then_with(|| {
            rows[a]
                .iter()
                .zip(&rows[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcParams {
    pub c: f64,
    pub gamma: f64,
    pub eps: f64,
    /// Fit Platt sigmoids on internal cross-validated decision values.
    pub probability: bool,
    pub seed: u64,
}

impl SvcParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            eps: DEFAULT_EPS,
            probability: true,
            seed: 0,
        }
    }
}

/// One one-vs-one sub-problem: positive decision favours `classes[pos]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub pos: usize,
    pub neg: usize,
    pub support: Vec<Vec<f64>>,
    /// `y_i α_i`; positive for the `pos` class.
    pub coef: Vec<f64>,
    pub rho: f64,
    /// Platt sigmoid `P(pos | f) = 1 / (1 + exp(A f + B))`.
    pub sigmoid: Option<(f64, f64)>,
    pub kkt_gap: f64,
    pub iterations: usize,
}

impl PairModel {
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * (-gamma * sq_dist(s, x)).exp())
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcModel {
    /// Sorted class labels; probabilities are reported in this order.
    pub classes: Vec<usize>,
    pub c: f64,
    pub gamma: f64,
    pub pairs: Vec<PairModel>,
    pub dim: usize,
}

struct BinaryFit {
    coef: Vec<f64>,
    rho: f64,
    gap: f64,
    iterations: usize,
}

fn fit_binary(
    dist: &DistanceMatrix,
    idx: &[usize],
    y: &[f64],
    c: f64,
    gamma: f64,
    eps: f64,
) -> BinaryFit {
    let kernel = dist.kernel(idx, gamma);
    let l = idx.len();
    let sol = Solver {
        kernel: &kernel,
        l,
        y: y.to_vec(),
        p: vec![-1.0; l],
        c,
        alpha: vec![0.0; l],
        grad: Vec::new(),
        eps,
        split: false,
    }
    .solve();
    BinaryFit {
        coef: sol.alpha.iter().zip(y).map(|(a, y)| a * y).collect(),
        rho: sol.rho,
        gap: sol.gap,
        iterations: sol.iterations,
    }
}

fn binary_decision(
    dist: &DistanceMatrix,
    train: &[usize],
    fit: &BinaryFit,
    at: usize,
    gamma: f64,
) -> f64 {
    train
        .iter()
        .zip(&fit.coef)
        .filter(|(_, c)| **c != 0.0)
        .map(|(&i, c)| c * (-gamma * dist.d2[i * dist.n + at]).exp())
        .sum::<f64>()
        - fit.rho
}

/// Platt's sigmoid fit with regularized targets, Newton steps and backtracking.
pub fn sigmoid_train(dec: &[f64], positive: &[bool]) -> (f64, f64) {
    let prior1 = positive.iter().filter(|p| **p).count() as f64;
    let prior0 = positive.len() as f64 - prior1;
    let (max_iter, min_step, sigma, eps) = (100, 1e-10, 1e-12, 1e-5);
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&t)
            .map(|(d, t)| {
                let f = d * a + b;
                if f >= 0.0 {
                    t * f + (-f).exp().ln_1p()
                } else {
                    (t - 1.0) * f + f.exp().ln_1p()
                }
            })
            .sum()
    };
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..max_iter {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (d, t) in dec.iter().zip(&t) {
            let f = d * a + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += d * d * d2;
            h22 += d2;
            h21 += d * d2;
            let d1 = t - p;
            g1 += d * d1;
            g2 += d1;
        }
        if g1.abs() < eps && g2.abs() < eps {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < min_step {
            break;
        }
    }
    (a, b)
}

pub fn sigmoid_predict(dec: f64, a: f64, b: f64) -> f64 {
    let f = dec * a + b;
    if f >= 0.0 {
        (-f).exp() / (1.0 + (-f).exp())
    } else {
        1.0 / (1.0 + f.exp())
    }
}

/// Couples pairwise probabilities `r[i][j] ≈ P(i | i or j)` into a distribution.
pub fn couple_pairwise(r: &[Vec<f64>]) -> Vec<f64> {
    let k = r.len();
    let mut q = vec![vec![0.0; k]; k];
    for t in 0..k {
        for j in 0..k {
            if j != t {
                q[t][t] += r[j][t] * r[j][t];
                q[t][j] = -r[j][t] * r[t][j];
            }
        }
    }
    let mut p = vec![1.0 / k as f64; k];
    let mut qp = vec![0.0; k];
    let eps = 0.005 / k as f64;
    for _ in 0..100.max(k) {
        let mut pqp = 0.0;
        for t in 0..k {
            qp[t] = (0..k).map(|j| q[t][j] * p[j]).sum();
            pqp += p[t] * qp[t];
        }
        let max_err = qp.iter().map(|v| (v - pqp).abs()).fold(0.0, f64::max);
        if max_err < eps {
            break;
        }
        for t in 0..k {
            let diff = (-qp[t] + pqp) / q[t][t];
            p[t] += diff;
            pqp = (pqp + diff * (diff * q[t][t] + 2.0 * qp[t])) / (1.0 + diff) / (1.0 + diff);
            for j in 0..k {
                qp[j] = (qp[j] + diff * q[t][j]) / (1.0 + diff);
                p[j] /= 1.0 + diff;
            }
        }
    }
    let total: f64 = p.iter().sum();
    p.iter().map(|v| v / total).collect()
}

const MIN_PROB: f64 = 1e-7;
const PROB_FOLDS: usize = 5;

impl SvcModel {
    pub fn fit(rows: &[Vec<f64>], labels: &[usize], params: &SvcParams) -> Result<Self, SvmError> {
        if rows.len() != labels.len() {
            return Err(SvmError::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let dim = check_rows(rows)?;
        check_params(params.c, params.gamma, params.eps)?;
        let order = canonical_order(rows, |i| labels[i] as f64);
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        let dist = DistanceMatrix::new(&rows);
        let all: Vec<usize> = (0..rows.len()).collect();
        Self::fit_indexed(&rows, &dist, &all, &labels, dim, params)
    }

    /// Trains on `rows[idx]`, which must already be in canonical order.
    pub(crate) fn fit_indexed(
        rows: &[Vec<f64>],
        dist: &DistanceMatrix,
        idx: &[usize],
        labels: &[usize],
        dim: usize,
        params: &SvcParams,
    ) -> Result<Self, SvmError> {
        let mut classes: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(SvmError::SingleClass);
        }
        let mut pairs = Vec::new();
        for a in 0..classes.len() {
            for b in a + 1..classes.len() {
                let sub: Vec<usize> = idx
                    .iter()
                    .copied()
                    .filter(|&i| labels[i] == classes[a] || labels[i] == classes[b])
                    .collect();
                let y: Vec<f64> = sub
                    .iter()
                    .map(|&i| if labels[i] == classes[a] { 1.0 } else { -1.0 })
                    .collect();
                let sigmoid = params
                    .probability
                    .then(|| Self::platt(dist, &sub, &y, params, (a * classes.len() + b) as u64));
                let fit = fit_binary(dist, &sub, &y, params.c, params.gamma, params.eps);
                let (support, coef) = sub
                    .iter()
                    .zip(&fit.coef)
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(&i, &c)| (rows[i].clone(), c))
                    .unzip();
                pairs.push(PairModel {
                    pos: a,
                    neg: b,
                    support,
                    coef,
                    rho: fit.rho,
                    sigmoid,
                    kkt_gap: fit.gap,
                    iterations: fit.iterations,
                });
            }
        }
        Ok(Self {
            classes,
            c: params.c,
            gamma: params.gamma,
            pairs,
            dim,
        })
    }

    fn platt(
        dist: &DistanceMatrix,
        sub: &[usize],
        y: &[f64],
        params: &SvcParams,
        stream: u64,
    ) -> (f64, f64) {
        let l = sub.len();
        let mut perm: Vec<usize> = (0..l).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(params.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        perm.shuffle(&mut rng);
        let mut dec = vec![0.0; l];
        for f in 0..PROB_FOLDS {
            let (lo, hi) = (f * l / PROB_FOLDS, (f + 1) * l / PROB_FOLDS);
            let mut held: Vec<usize> = perm[lo..hi].to_vec();
            held.sort_unstable();
            let mut train: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
            train.sort_unstable();
            let ty: Vec<f64> = train.iter().map(|&k| y[k]).collect();
            let pos = ty.iter().filter(|v| **v > 0.0).count();
            let neg = ty.len() - pos;
            if pos == 0 || neg == 0 {
                let v = if pos > 0 {
                    1.0
                } else if neg > 0 {
                    -1.0
                } else {
                    0.0
                };
                for &k in &held {
                    dec[k] = v;
                }
                continue;
            }
            let train_idx: Vec<usize> = train.iter().map(|&k| sub[k]).collect();
            let fit = fit_binary(dist, &train_idx, &ty, params.c, params.gamma, params.eps);
            for &k in &held {
                dec[k] = binary_decision(dist, &train_idx, &fit, sub[k], params.gamma);
            }
        }
        let positive: Vec<bool> = y.iter().map(|v| *v > 0.0).collect();
        sigmoid_train(&dec, &positive)
    }

    pub fn has_probability(&self) -> bool {
        self.pairs.iter().all(|p| p.sigmoid.is_some())
    }

    /// Largest KKT gap over the pairwise duals.
    pub fn kkt_gap(&self) -> f64 {
        self.pairs.iter().map(|p| p.kkt_gap).fold(0.0, f64::max)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), SvmError> {
        if x.len() != self.dim {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        self.check_dim(x)?;
        Ok(self
            .pairs
            .iter()
            .map(|p| p.decision(x, self.gamma))
            .collect())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        if !self.has_probability() {
            return Err(SvmError::UntrainedModel);
        }
        let dec = self.decision_values(x)?;
        let k = self.classes.len();
        let mut r = vec![vec![0.0; k]; k];
        for (p, d) in self.pairs.iter().zip(dec) {
            let (a, b) = p.sigmoid.expect("checked above");
            let v = sigmoid_predict(d, a, b).clamp(MIN_PROB, 1.0 - MIN_PROB);
            r[p.pos][p.neg] = v;
            r[p.neg][p.pos] = 1.0 - v;
        }
        Ok(couple_pairwise(&r))
    }

    /// One-vs-one voting; ties go to the lower class index.
    pub fn predict_vote(&self, x: &[f64]) -> Result<usize, SvmError> {
        let dec = self.decision_values(x)?;
        let mut votes = vec![0usize; self.classes.len()];
        for (p, d) in self.pairs.iter().zip(dec) {
            votes[if d > 0.0 { p.pos } else { p.neg }] += 1;
        }
        Ok(self.classes[argmax(votes.iter().map(|&v| v as f64))])
    }

    /// Probability argmax when calibrated, voting otherwise.
    pub fn predict(&self, x: &[f64]) -> Result<usize, SvmError> {
        if self.has_probability() {
            Ok(self.classes[argmax(self.predict_proba(x)?.into_iter())])
        } else {
            self.predict_vote(x)
        }
    }
}

/// Index of the first maximum.
pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: f64,
    pub nu: f64,
    pub eps: f64,
}

impl SvrParams {
    pub fn new(c: f64, gamma: f64, nu: f64) -> Self {
        Self {
            c,
            gamma,
            nu,
            eps: DEFAULT_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub c: f64,
    pub gamma: f64,
    pub nu: f64,
    pub support: Vec<Vec<f64>>,
    /// `α_i − α*_i`, each in `[-C, C]`.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub n_train: usize,
    /// Training samples with `α_i` or `α*_i` at the bound `C`.
    pub n_bounded: usize,
    pub kkt_gap: f64,
    pub iterations: usize,
    pub dim: usize,
}

impl SvrModel {
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], params: &SvrParams) -> Result<Self, SvmError> {
        if rows.len() != targets.len() {
            return Err(SvmError::DimensionMismatch {
                expected: rows.len(),
                got: targets.len(),
            });
        }
        if rows.len() < 2 {
            return Err(SvmError::EmptyInput);
        }
        let dim = check_rows(rows)?;
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(SvmError::NonFinite);
        }
        check_params(params.c, params.gamma, params.eps)?;
        let order = canonical_order(rows, |i| targets[i]);
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let targets: Vec<f64> = order.iter().map(|&i| targets[i]).collect();
        let dist = DistanceMatrix::new(&rows);
        let all: Vec<usize> = (0..rows.len()).collect();
        Self::fit_indexed(&rows, &dist, &all, &targets, dim, params)
    }

    pub(crate) fn fit_indexed(
        rows: &[Vec<f64>],
        dist: &DistanceMatrix,
        idx: &[usize],
        targets: &[f64],
        dim: usize,
        params: &SvrParams,
    ) -> Result<Self, SvmError> {
        if !(params.nu > 0.0 && params.nu < 1.0) {
            return Err(SvmError::InvalidParameter(format!(
                "nu = {} must lie in (0, 1)",
                params.nu
            )));
        }
        check_params(params.c, params.gamma, params.eps)?;
        let l = idx.len();
        if l < 2 {
            return Err(SvmError::EmptyInput);
        }
        let kernel = dist.kernel(idx, params.gamma);
        let c = params.c;
        let mut budget = c * params.nu * l as f64 / 2.0;
        let mut alpha = vec![0.0; 2 * l];
        for i in 0..l {
            let a = budget.min(c);
            alpha[i] = a;
            alpha[i + l] = a;
            budget -= a;
        }
        let mut p = vec![0.0; 2 * l];
        let mut y = vec![0.0; 2 * l];
        for (k, &i) in idx.iter().enumerate() {
            p[k] = -targets[i];
            y[k] = 1.0;
            p[k + l] = targets[i];
            y[k + l] = -1.0;
        }
        let sol = Solver {
            kernel: &kernel,
            l,
            y,
            p,
            c,
            alpha,
            grad: Vec::new(),
            eps: params.eps,
            split: true,
        }
        .solve();
        let n_bounded = (0..l)
            .filter(|&i| sol.alpha[i] >= c || sol.alpha[i + l] >= c)
            .count();
        let (support, coef) = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| (i, sol.alpha[k] - sol.alpha[k + l]))
            .filter(|(_, c)| *c != 0.0)
            .map(|(i, c)| (rows[i].clone(), c))
            .unzip();
        Ok(Self {
            c,
            gamma: params.gamma,
            nu: params.nu,
            support,
            coef,
            rho: sol.rho,
            n_train: l,
            n_bounded,
            kkt_gap: sol.gap,
            iterations: sol.iterations,
            dim,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, SvmError> {
        if x.len() != self.dim {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self
            .support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * (-self.gamma * sq_dist(s, x)).exp())
            .sum::<f64>()
            - self.rho)
    }

    pub fn support_fraction(&self) -> f64 {
        self.coef.len() as f64 / self.n_train as f64
    }

    pub fn bounded_fraction(&self) -> f64 {
        self.n_bounded as f64 / self.n_train as f64
    }
}

/// Little-endian binary encoding shared by the model containers.
pub mod codec {
    use super::*;

    pub const MAGIC: &[u8; 4] = b"CIQM";
    pub const VERSION: u32 = 1;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    #[repr(u8)]
    pub enum ModelKind {
        Classifier = 1,
        Regressor = 2,
        TwoStage = 3,
    }

    pub fn write_header(w: &mut impl Write, kind: ModelKind) -> Result<(), SvmError> {
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;
        w.write_all(&[kind as u8])?;
        Ok(())
    }

    pub fn read_header(r: &mut impl Read) -> Result<ModelKind, SvmError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SvmError::Format("not a model file (bad magic)".into()));
        }
        let version = get_u32(r)?;
        if version != VERSION {
            return Err(SvmError::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        match kind[0] {
            1 => Ok(ModelKind::Classifier),
            2 => Ok(ModelKind::Regressor),
            3 => Ok(ModelKind::TwoStage),
            k => Err(SvmError::Format(format!("unknown model kind {k}"))),
        }
    }

    pub fn put_u32(w: &mut impl Write, v: u32) -> Result<(), SvmError> {
        Ok(w.write_all(&v.to_le_bytes())?)
    }

    pub fn put_f64(w: &mut impl Write, v: f64) -> Result<(), SvmError> {
        Ok(w.write_all(&v.to_le_bytes())?)
    }

    pub fn put_len(w: &mut impl Write, n: usize) -> Result<(), SvmError> {
        put_u32(
            w,
            u32::try_from(n).map_err(|_| SvmError::Format("length overflow".into()))?,
        )
    }

    pub fn put_f64s(w: &mut impl Write, v: &[f64]) -> Result<(), SvmError> {
        put_len(w, v.len())?;
        v.iter().try_for_each(|x| put_f64(w, *x))
    }

    pub fn put_str(w: &mut impl Write, s: &str) -> Result<(), SvmError> {
        put_len(w, s.len())?;
        Ok(w.write_all(s.as_bytes())?)
    }

    pub fn get_u32(r: &mut impl Read) -> Result<u32, SvmError> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn get_f64(r: &mut impl Read) -> Result<f64, SvmError> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    pub fn get_len(r: &mut impl Read) -> Result<usize, SvmError> {
        let n = get_u32(r)? as usize;
        if n > 1 << 28 {
            return Err(SvmError::Format(format!("implausible length {n}")));
        }
        Ok(n)
    }

    pub fn get_f64s(r: &mut impl Read) -> Result<Vec<f64>, SvmError> {
        let n = get_len(r)?;
        (0..n).map(|_| get_f64(r)).collect()
    }

    pub fn get_str(r: &mut impl Read) -> Result<String, SvmError> {
        let n = get_len(r)?;
        let mut b = vec![0u8; n];
        r.read_exact(&mut b)?;
        String::from_utf8(b).map_err(|e| SvmError::Format(e.to_string()))
    }

    pub fn put_rows(w: &mut impl Write, rows: &[Vec<f64>], dim: usize) -> Result<(), SvmError> {
        put_len(w, rows.len())?;
        put_len(w, dim)?;
        rows.iter().flatten().try_for_each(|x| put_f64(w, *x))
    }

    pub fn get_rows(r: &mut impl Read) -> Result<(Vec<Vec<f64>>, usize), SvmError> {
        let n = get_len(r)?;
        let dim = get_len(r)?;
        let rows = (0..n)
            .map(|_| (0..dim).map(|_| get_f64(r)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok((rows, dim))
    }
}

use codec::*;

impl Standardizer {
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), SvmError> {
        put_f64s(w, &self.means)?;
        put_f64s(w, &self.stds)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, SvmError> {
        let means = get_f64s(r)?;
        let stds = get_f64s(r)?;
        if means.len() != stds.len() {
            return Err(SvmError::Format("standardizer length mismatch".into()));
        }
        Ok(Self { means, stds })
    }
}

impl SvcModel {
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), SvmError> {
        put_f64(w, self.c)?;
        put_f64(w, self.gamma)?;
        put_len(w, self.dim)?;
        put_len(w, self.classes.len())?;
        self.classes.iter().try_for_each(|&c| put_len(w, c))?;
        put_len(w, self.pairs.len())?;
        for p in &self.pairs {
            put_len(w, p.pos)?;
            put_len(w, p.neg)?;
            put_f64(w, p.rho)?;
            let (a, b) = p.sigmoid.unwrap_or((f64::NAN, f64::NAN));
            put_f64(w, a)?;
            put_f64(w, b)?;
            put_f64(w, p.kkt_gap)?;
            put_len(w, p.iterations)?;
            put_rows(w, &p.support, self.dim)?;
            put_f64s(w, &p.coef)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, SvmError> {
        let c = get_f64(r)?;
        let gamma = get_f64(r)?;
        let dim = get_len(r)?;
        let k = get_len(r)?;
        let classes = (0..k).map(|_| get_len(r)).collect::<Result<Vec<_>, _>>()?;
        let n_pairs = get_len(r)?;
        let mut pairs = Vec::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            let pos = get_len(r)?;
            let neg = get_len(r)?;
            let rho = get_f64(r)?;
            let (a, b) = (get_f64(r)?, get_f64(r)?);
            let kkt_gap = get_f64(r)?;
            let iterations = get_len(r)?;
            let (support, d) = get_rows(r)?;
            let coef = get_f64s(r)?;
            if d != dim || coef.len() != support.len() || pos >= k || neg >= k {
                return Err(SvmError::Format("inconsistent classifier pair".into()));
            }
            let sigmoid = (!a.is_nan()).then_some((a, b));
            pairs.push(PairModel {
                pos,
                neg,
                support,
                coef,
                rho,
                sigmoid,
                kkt_gap,
                iterations,
            });
        }
        Ok(Self {
            classes,
            c,
            gamma,
            pairs,
            dim,
        })
    }

    /// Writes a standalone classifier file.
    pub fn save(&self, w: &mut impl Write) -> Result<(), SvmError> {
        write_header(w, ModelKind::Classifier)?;
        self.write_to(w)
    }

    pub fn load(r: &mut impl Read) -> Result<Self, SvmError> {
        match read_header(r)? {
            ModelKind::Classifier => Self::read_from(r),
            k => Err(SvmError::Format(format!(
                "expected a classifier, found {k:?}"
            ))),
        }
    }
}

impl SvrModel {
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), SvmError> {
        for v in [self.c, self.gamma, self.nu, self.rho, self.kkt_gap] {
            put_f64(w, v)?;
        }
        put_len(w, self.n_train)?;
        put_len(w, self.n_bounded)?;
        put_len(w, self.iterations)?;
        put_rows(w, &self.support, self.dim)?;
        put_f64s(w, &self.coef)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, SvmError> {
        let (c, gamma, nu, rho, kkt_gap) = (
            get_f64(r)?,
            get_f64(r)?,
            get_f64(r)?,
            get_f64(r)?,
            get_f64(r)?,
        );
        let n_train = get_len(r)?;
        let n_bounded = get_len(r)?;
        let iterations = get_len(r)?;
        let (support, dim) = get_rows(r)?;
        let coef = get_f64s(r)?;
        if coef.len() != support.len() {
            return Err(SvmError::Format(
                "regressor coefficient count mismatch".into(),
            ));
        }
        Ok(Self {
            c,
            gamma,
            nu,
            support,
            coef,
            rho,
            n_train,
            n_bounded,
            kkt_gap,
            iterations,
            dim,
        })
    }

    pub fn save(&self, w: &mut impl Write) -> Result<(), SvmError> {
        write_header(w, ModelKind::Regressor)?;
        self.write_to(w)
    }

    pub fn load(r: &mut impl Read) -> Result<Self, SvmError> {
        match read_header(r)? {
            ModelKind::Regressor => Self::read_from(r),
            k => Err(SvmError::Format(format!(
                "expected a regressor, found {k:?}"
            ))),
        }
    }
}
