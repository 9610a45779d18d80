//! The eleven M1 descriptors of a block and their per-image mean.
//!
//! Three families, in fixed order:
//!
//! | family | features | source |
//! |---|---|---|
//! | scale energy | `d1 d2 d3` | differences of mean `log10|c|` between scales 1–4 |
//! | orientation energy | `qcd4 rmad4 area4` | mean `|c|` per orientation panel of scale 4 |
//! | finest scale | `med5 iqr5 mad5 skew5 kurt5` | octile statistics of `log10|c|` on scale 5 |
//!
//! Magnitudes are clamped at [`LOG_FLOOR`] before taking logs. A statistic whose
//! scale is degenerate (for instance on a flat block) is reported as 0.

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::fdct::{CoefficientPyramid, CurveletConfig, CurveletTransform, FdctError};
use crate::image_io::{fragment, BlockPolicy, GrayImage};
use crate::robust_stats::{self, octiles};

pub const LOG_FLOOR: f64 = 1e-30;

pub const FEATURE_NAMES: [&str; 11] = [
    "d1", "d2", "d3", "qcd4", "rmad4", "area4", "med5", "iqr5", "mad5", "skew5", "kurt5",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("scale {scale} out of range (pyramid has {available})")]
    ScaleOutOfRange { scale: usize, available: usize },
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("image has no analysis blocks")]
    NoBlocks,
    #[error(transparent)]
    Transform(#[from] FdctError),
    #[error("feature table: {0}")]
    Table(String),
}

/// M1 descriptors of one block or, after pooling, one image.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub qcd4: f64,
    pub rmad4: f64,
    pub area4: f64,
    pub med5: f64,
    pub iqr5: f64,
    pub mad5: f64,
    pub skew5: f64,
    pub kurt5: f64,
}

/// Per-block descriptors share the image-level layout.
pub type BlockFeatures = FeatureVector;

impl FeatureVector {
    pub const LEN: usize = 11;

    pub fn to_array(&self) -> [f64; 11] {
        [
            self.d1, self.d2, self.d3, self.qcd4, self.rmad4, self.area4, self.med5, self.iqr5,
            self.mad5, self.skew5, self.kurt5,
        ]
    }

    pub fn from_array(v: [f64; 11]) -> Self {
        let [d1, d2, d3, qcd4, rmad4, area4, med5, iqr5, mad5, skew5, kurt5] = v;
        Self {
            d1,
            d2,
            d3,
            qcd4,
            rmad4,
            area4,
            med5,
            iqr5,
            mad5,
            skew5,
            kurt5,
        }
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        <[f64; 11]>::try_from(v).ok().map(Self::from_array)
    }

    /// Componentwise mean, summed in the given order.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a FeatureVector>) -> Option<Self> {
        let mut acc = [0.0; 11];
        let mut n = 0usize;
        for f in items {
            for (a, v) in acc.iter_mut().zip(f.to_array()) {
                *a += v;
            }
            n += 1;
        }
        (n > 0).then(|| Self::from_array(acc.map(|a| a / n as f64)))
    }
}

/// Mean orientation magnitude of each scale-4 panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Emo4Series(pub Vec<f64>);

fn log_mag(c: &num_complex::Complex64) -> f64 {
    c.norm().max(LOG_FLOOR).log10()
}

fn or_zero(r: Result<f64, robust_stats::StatsError>) -> f64 {
    r.unwrap_or(0.0)
}

pub fn mean_log_energy(pyr: &CoefficientPyramid, scale: usize) -> Result<f64, FeatureError> {
    let panels = pyr.scale(scale).ok_or(FeatureError::ScaleOutOfRange {
        scale,
        available: pyr.n_scales(),
    })?;
    let (sum, n) = panels
        .iter()
        .flat_map(|p| p.iter())
        .fold((0.0, 0usize), |(s, n), c| (s + log_mag(c), n + 1));
    Ok(sum / n as f64)
}

/// Differences of mean log-energy between consecutive scales 1..4.
pub fn mes_features(pyr: &CoefficientPyramid) -> Result<(f64, f64, f64), FeatureError> {
    let e: Vec<f64> = (1..=4)
        .map(|j| mean_log_energy(pyr, j))
        .collect::<Result<_, _>>()?;
    Ok((e[0] - e[1], e[1] - e[2], e[2] - e[3]))
}

pub fn emo4(pyr: &CoefficientPyramid) -> Result<Emo4Series, FeatureError> {
    let panels = pyr.scale(4).ok_or(FeatureError::ScaleOutOfRange {
        scale: 4,
        available: pyr.n_scales(),
    })?;
    Ok(Emo4Series(
        panels
            .iter()
            .map(|p| p.iter().map(|c| c.norm()).sum::<f64>() / p.len() as f64)
            .collect(),
    ))
}

/// `(qcd, rmad, area)` of an orientation-energy series; `area` is the plain sum.
pub fn oed4_features(series: &Emo4Series) -> (f64, f64, f64) {
    let v = &series.0;
    (
        or_zero(robust_stats::qcd(v)),
        or_zero(robust_stats::rmad(v)),
        v.iter().sum(),
    )
}

/// `(median, iqr, mad, bowley, moors)` of a log-magnitude sample.
pub fn sfs5_from_logs(e5: &[f64]) -> (f64, f64, f64, f64, f64) {
    let Ok(oc) = octiles(e5) else {
        return (0.0, 0.0, 0.0, 0.0, 0.0);
    };
    (
        oc.median(),
        oc.iqr(),
        or_zero(robust_stats::mad(e5)),
        or_zero(robust_stats::bowley_skew(&oc)),
        or_zero(robust_stats::moors_kurt(&oc)),
    )
}

pub fn sfs5_features(pyr: &CoefficientPyramid) -> Result<(f64, f64, f64, f64, f64), FeatureError> {
    let finest = pyr.n_scales();
    if finest < 5 {
        return Err(FeatureError::ScaleOutOfRange {
            scale: 5,
            available: finest,
        });
    }
    let e5: Vec<f64> = pyr
        .scale(5)
        .unwrap()
        .iter()
        .flat_map(|p| p.iter())
        .map(log_mag)
        .collect();
    Ok(sfs5_from_logs(&e5))
}

pub fn features_from_pyramid(pyr: &CoefficientPyramid) -> Result<FeatureVector, FeatureError> {
    let (d1, d2, d3) = mes_features(pyr)?;
    let (qcd4, rmad4, area4) = oed4_features(&emo4(pyr)?);
    let (med5, iqr5, mad5, skew5, kurt5) = sfs5_features(pyr)?;
    Ok(FeatureVector {
        d1,
        d2,
        d3,
        qcd4,
        rmad4,
        area4,
        med5,
        iqr5,
        mad5,
        skew5,
        kurt5,
    })
}

pub fn extract_block(
    transform: &CurveletTransform,
    block: &Array2<f64>,
) -> Result<FeatureVector, FeatureError> {
    features_from_pyramid(&transform.forward(block)?)
}

/// Block features computed in parallel, pooled by mean in block order.
pub fn extract_image(
    transform: &CurveletTransform,
    img: &GrayImage,
    policy: BlockPolicy,
) -> Result<FeatureVector, FeatureError> {
    let blocks = fragment(img, policy);
    let per_block: Vec<FeatureVector> = blocks
        .blocks
        .par_iter()
        .map(|b| extract_block(transform, b))
        .collect::<Result<_, _>>()?;
    FeatureVector::mean(&per_block).ok_or(FeatureError::NoBlocks)
}

/// Eigenvalues (descending) of the correlation matrix of the feature columns.
///
/// Columns are standardized first so that features on very different numeric
/// scales are compared fairly; a constant column standardizes to zeros and
/// contributes a zero eigenvalue.
pub fn redundancy_check(rows: &[Vec<f64>]) -> Result<Vec<f64>, FeatureError> {
    let n = rows.len();
    let dim = rows.first().map_or(0, |r| r.len());
    if n < dim + 1 || n < 12 {
        return Err(FeatureError::InsufficientSamples {
            got: n,
            need: (dim + 1).max(12),
        });
    }
    if rows.iter().any(|r| r.len() != dim) {
        return Err(FeatureError::Table("ragged feature matrix".into()));
    }
    let mut x = DMatrix::from_fn(n, dim, |i, j| rows[i][j]);
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n as f64).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
    let cov = x.transpose() * &x / n as f64;
    let mut eig: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// Pluggable per-image feature extractor.
pub trait FeatureExtractor: Send + Sync {
    fn names(&self) -> Vec<String>;
    fn extract(&self, img: &GrayImage) -> Result<Vec<f64>, FeatureError>;
}

/// The eleven-feature curvelet extractor.
#[derive(Debug, Clone)]
pub struct M1Extractor {
    transform: Arc<CurveletTransform>,
    policy: BlockPolicy,
}

impl M1Extractor {
    pub fn new(policy: BlockPolicy) -> Result<Self, FeatureError> {
        Ok(Self {
            transform: Arc::new(CurveletTransform::new(CurveletConfig::default())?),
            policy,
        })
    }

    pub fn with_transform(transform: Arc<CurveletTransform>, policy: BlockPolicy) -> Self {
        Self { transform, policy }
    }

    pub fn transform(&self) -> &CurveletTransform {
        &self.transform
    }

    pub fn extract_vector(&self, img: &GrayImage) -> Result<FeatureVector, FeatureError> {
        extract_image(&self.transform, img, self.policy)
    }
}

impl FeatureExtractor for M1Extractor {
    fn names(&self) -> Vec<String> {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn extract(&self, img: &GrayImage) -> Result<Vec<f64>, FeatureError> {
        Ok(self.extract_vector(img)?.to_array().to_vec())
    }
}

/// Named feature rows, e.g. one per image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    /// CSV with an `image` column followed by one column per feature. Floats are
    /// written in shortest round-trip form.
    pub fn write_csv(&self, w: impl Write) -> Result<(), FeatureError> {
        let table = |e: csv::Error| FeatureError::Table(e.to_string());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["image".to_string()];
        header.extend(self.names.iter().cloned());
        out.write_record(&header).map_err(table)?;
        for (id, row) in self.ids.iter().zip(&self.rows) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec).map_err(table)?;
        }
        out.flush().map_err(|e| FeatureError::Table(e.to_string()))
    }

    pub fn read_csv(r: impl Read) -> Result<Self, FeatureError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr
            .headers()
            .map_err(|e| FeatureError::Table(e.to_string()))?
            .clone();
        if header.get(0) != Some("image") {
            return Err(FeatureError::Table("first column must be `image`".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| FeatureError::Table(format!("line {line}: {e}")))?;
            ids.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| FeatureError::Table(format!("line {line}: `{s}`: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { names, ids, rows })
    }
}
