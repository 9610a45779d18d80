//! Frequency windows of the wrapping curvelet transform.
//!
//! Radial structure: nested separable low-pass windows `P_j(k) = L_j(k1) L_j(k2)`
//! with `L_j = 1` for `|k| <= floor(M_j)` and `0` for `|k| >= floor(2 M_j)`, where
//! `M_j = extent · N / 2^(J-j)`. Scale `j` gets `R_j = P_j · sqrt(1 - P_{j-1}²)`
//! (coarsest: `P_1`, finest: `sqrt(1 - P_{J-1}²)`), so `Σ R_j² = 1`.
//!
//! Angular structure: a pseudo-angle `s ∈ [0, 8)` runs once around the square
//! `max(|k1|, |k2|) = const`, two units per side. With `A` wedges, wedge `ℓ` is
//! centred at `(ℓ + ½)·h`, `h = 8/A`, and has `V_ℓ = cos(π/2 · ν(|t|/h))` for
//! periodic offset `|t| < h`. Neighbouring windows are a cos/sin pair, so
//! `Σ V_ℓ² = 1`. Wedge boundaries fall on the square's corners.
//!
//! Wrapping: each wedge is wrapped onto a `rows × cols` rectangle by
//! `(k1 mod rows, k2 mod cols)`. Along the wedge's radial axis the rectangle spans
//! the full radial extent of the support; across it, the widest per-line support.
//! This makes the wrap injective on the support.

use super::{CurveletConfig, FdctError};

/// Meyer auxiliary polynomial: `ν(0) = 0`, `ν(1) = 1`, `ν(x) + ν(1-x) = 1`.
pub(crate) fn meyer_nu(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x * x * x)
}

/// One-dimensional low-pass with a Meyer ramp between `flat` and `stop`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Lowpass {
    flat: i64,
    stop: i64,
}

impl Lowpass {
    pub(crate) fn value(&self, k: i64) -> f64 {
        let a = k.abs();
        if a <= self.flat {
            1.0
        } else if a >= self.stop {
            0.0
        } else {
            let u = (a - self.flat) as f64 / (self.stop - self.flat) as f64;
            (std::f64::consts::FRAC_PI_2 * meyer_nu(u)).cos()
        }
    }
}

/// Signed DFT frequency of index `i` on an `n`-point grid.
pub(crate) fn signed_freq(i: usize, n: usize) -> i64 {
    if i >= n.div_ceil(2) {
        i as i64 - n as i64
    } else {
        i as i64
    }
}

/// Position of a nonzero frequency on the perimeter of its centred square, in `[0, 8)`.
pub(crate) fn pseudo_angle(k1: i64, k2: i64) -> f64 {
    let (f1, f2) = (k1 as f64, k2 as f64);
    if k1 >= k2.abs() {
        1.0 + f2 / f1
    } else if k2 >= k1.abs() {
        3.0 - f1 / f2
    } else if -k1 >= k2.abs() {
        5.0 - f2 / -f1
    } else {
        (7.0 + f1 / -f2).rem_euclid(8.0)
    }
}

/// Angular weight of wedge `l` of `count` at pseudo-angle `s`.
pub(crate) fn angular_weight(s: f64, l: usize, count: usize) -> f64 {
    let h = 8.0 / count as f64;
    let centre = (l as f64 + 0.5) * h;
    let t = (s - centre + 4.0).rem_euclid(8.0) - 4.0;
    let u = t.abs() / h;
    if u >= 1.0 {
        0.0
    } else {
        (std::f64::consts::FRAC_PI_2 * meyer_nu(u)).cos()
    }
}

/// Wrapped window of one wedge: which grid frequency lands where, with what weight.
#[derive(Debug, Clone)]
pub(crate) struct Wedge {
    pub rows: usize,
    pub cols: usize,
    pub taps: Vec<Tap>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    pub grid: u32,
    pub panel: u32,
    pub weight: f64,
}

struct RawTap {
    k1: i64,
    k2: i64,
    grid: u32,
    weight: f64,
}

/// Builds every wedge of every scale. `wedges[j][l]` is scale `j+1`, orientation `l`.
pub(crate) fn build(cfg: &CurveletConfig) -> Result<Vec<Vec<Wedge>>, FdctError> {
    cfg.validate()?;
    let n = cfg.size;
    let scales = cfg.n_scales;
    let freqs: Vec<i64> = (0..n).map(|i| signed_freq(i, n)).collect();

    let lowpasses: Vec<Lowpass> = (1..scales)
        .map(|j| {
            let m = cfg.corona_extent * n as f64 / 2f64.powi((scales - j) as i32);
            Lowpass {
                flat: m.floor() as i64,
                stop: (2.0 * m).floor() as i64,
            }
        })
        .collect();
    // 1-D tables, indexed [lowpass][grid index]
    let tables: Vec<Vec<f64>> = lowpasses
        .iter()
        .map(|lp| freqs.iter().map(|&k| lp.value(k)).collect())
        .collect();

    let mut raw: Vec<Vec<Vec<RawTap>>> = cfg
        .angles_per_scale
        .iter()
        .map(|&a| (0..a).map(|_| Vec::new()).collect())
        .collect();

    let mut radial = vec![0.0; scales];
    for (i1, &k1) in freqs.iter().enumerate() {
        for (i2, &k2) in freqs.iter().enumerate() {
            let grid = (i1 * n + i2) as u32;
            if scales == 1 {
                radial[0] = 1.0;
            } else {
                let p = |j: usize| tables[j][i1] * tables[j][i2];
                radial[0] = p(0);
                for (j, r) in radial.iter_mut().enumerate().take(scales - 1).skip(1) {
                    let prev = p(j - 1);
                    *r = p(j) * (1.0 - prev * prev).max(0.0).sqrt();
                }
                let last = p(scales - 2);
                radial[scales - 1] = (1.0 - last * last).max(0.0).sqrt();
            }
            let s = (k1 != 0 || k2 != 0).then(|| pseudo_angle(k1, k2));
            for (j, &r) in radial.iter().enumerate() {
                if r <= 0.0 {
                    continue;
                }
                let count = cfg.angles_per_scale[j];
                if count == 1 {
                    raw[j][0].push(RawTap {
                        k1,
                        k2,
                        grid,
                        weight: r,
                    });
                    continue;
                }
                let s = s.expect("origin carries no band-pass energy");
                let h = 8.0 / count as f64;
                let below = ((s / h - 0.5).floor() as i64).rem_euclid(count as i64) as usize;
                for l in [below, (below + 1) % count] {
                    let w = r * angular_weight(s, l, count);
                    if w > 0.0 {
                        raw[j][l].push(RawTap {
                            k1,
                            k2,
                            grid,
                            weight: w,
                        });
                    }
                }
            }
        }
    }

    raw.into_iter()
        .enumerate()
        .map(|(j, scale)| {
            let count = scale.len();
            scale
                .into_iter()
                .enumerate()
                .map(|(l, taps)| {
                    if taps.is_empty() {
                        return Err(FdctError::Config(format!(
                            "scale {} wedge {l} has empty support; angle count {count} not achievable",
                            j + 1
                        )));
                    }
                    // Radial axis is k1 on the sides where |k1| dominates.
                    let vertical = count == 1 || {
                        let centre = (l as f64 + 0.5) * 8.0 / count as f64;
                        ((centre / 2.0).floor() as usize) % 2 == 0
                    };
                    Ok(wrap(taps, vertical))
                })
                .collect()
        })
        .collect()
}

fn wrap(taps: Vec<RawTap>, vertical: bool) -> Wedge {
    let axes = |t: &RawTap| if vertical { (t.k1, t.k2) } else { (t.k2, t.k1) };
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    for t in &taps {
        let (a, _) = axes(t);
        lo = lo.min(a);
        hi = hi.max(a);
    }
    let along = (hi - lo + 1) as usize;
    let mut line_lo = vec![i64::MAX; along];
    let mut line_hi = vec![i64::MIN; along];
    for t in &taps {
        let (a, b) = axes(t);
        let i = (a - lo) as usize;
        line_lo[i] = line_lo[i].min(b);
        line_hi[i] = line_hi[i].max(b);
    }
    let across = line_lo
        .iter()
        .zip(&line_hi)
        .filter(|(l, _)| **l != i64::MAX)
        .map(|(l, h)| (h - l + 1) as usize)
        .max()
        .unwrap_or(1);
    let (rows, cols) = if vertical {
        (along, across)
    } else {
        (across, along)
    };
    let taps: Vec<Tap> = taps
        .into_iter()
        .map(|t| {
            let r = t.k1.rem_euclid(rows as i64) as usize;
            let c = t.k2.rem_euclid(cols as i64) as usize;
            Tap {
                grid: t.grid,
                panel: (r * cols + c) as u32,
                weight: t.weight,
            }
        })
        .collect();
    debug_assert!({
        let mut seen = vec![false; rows * cols];
        taps.iter()
            .all(|t| !std::mem::replace(&mut seen[t.panel as usize], true))
    });
    Wedge { rows, cols, taps }
}
