//! Quantile-based robust descriptors.
//!
//! Percentiles use linear interpolation at fractional rank `(n-1)·p` on the sorted
//! sample. Statistics whose denominator vanishes report [`StatsError::DegenerateScale`].

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate scale: {0} is zero")]
    DegenerateScale(&'static str),
}

/// The seven cut points `p(k/8)`, `k = 1..=7`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctileSet(pub [f64; 7]);

impl OctileSet {
    /// `Oc_k` for `k` in `1..=7`.
    pub fn oc(&self, k: usize) -> f64 {
        self.0[k - 1]
    }
    pub fn lower_quartile(&self) -> f64 {
        self.0[1]
    }
    pub fn median(&self) -> f64 {
        self.0[3]
    }
    pub fn upper_quartile(&self) -> f64 {
        self.0[5]
    }
    pub fn iqr(&self) -> f64 {
        self.upper_quartile() - self.lower_quartile()
    }
}

fn sorted(data: &[f64]) -> Result<Vec<f64>, StatsError> {
    if data.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Percentile of an already-sorted, non-empty slice.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn percentile(data: &[f64], p: f64) -> Result<f64, StatsError> {
    Ok(percentile_sorted(&sorted(data)?, p))
}

pub fn median(data: &[f64]) -> Result<f64, StatsError> {
    percentile(data, 0.5)
}

pub fn octiles(data: &[f64]) -> Result<OctileSet, StatsError> {
    let s = sorted(data)?;
    Ok(OctileSet(std::array::from_fn(|i| {
        percentile_sorted(&s, (i + 1) as f64 / 8.0)
    })))
}

/// Quartile coefficient of dispersion `(Q3 - Q1) / (Q3 + Q1)`.
pub fn qcd(data: &[f64]) -> Result<f64, StatsError> {
    let s = sorted(data)?;
    let q1 = percentile_sorted(&s, 0.25);
    let q3 = percentile_sorted(&s, 0.75);
    if q3 + q1 == 0.0 {
        return Err(StatsError::DegenerateScale("Q3 + Q1"));
    }
    Ok((q3 - q1) / (q3 + q1))
}

/// Median absolute deviation from the median.
pub fn mad(data: &[f64]) -> Result<f64, StatsError> {
    let m = median(data)?;
    let dev: Vec<f64> = data.iter().map(|x| (x - m).abs()).collect();
    median(&dev)
}

/// MAD divided by the median.
pub fn rmad(data: &[f64]) -> Result<f64, StatsError> {
    let m = median(data)?;
    if m == 0.0 {
        return Err(StatsError::DegenerateScale("median"));
    }
    Ok(mad(data)? / m)
}

pub fn bowley_skew(oc: &OctileSet) -> Result<f64, StatsError> {
    let spread = oc.iqr();
    if spread == 0.0 {
        return Err(StatsError::DegenerateScale("interquartile range"));
    }
    Ok((oc.oc(6) + oc.oc(2) - 2.0 * oc.oc(4)) / spread)
}

pub fn moors_kurt(oc: &OctileSet) -> Result<f64, StatsError> {
    let spread = oc.iqr();
    if spread == 0.0 {
        return Err(StatsError::DegenerateScale("interquartile range"));
    }
    Ok(((oc.oc(7) - oc.oc(5)) + (oc.oc(3) - oc.oc(1))) / spread)
}
