//! Fast discrete curvelet transform, frequency-wrapping variant.
//!
//! `forward` takes the unitary 2-D FFT of a block, multiplies it by one smooth
//! window per (scale, orientation), wraps each windowed spectrum onto a rectangle
//! covering the window's support and takes a unitary inverse FFT of each rectangle.
//! The windows square-sum to one at every frequency, so the transform is a tight
//! frame: it preserves inner products and `inverse` (its adjoint) reconstructs
//! the block. See [`windows`] for the window geometry.
//!
//! Scales are numbered from 1 (coarsest, low-pass) to `n_scales` (finest). With
//! the default configuration a 256×256 block yields 1, 32, 64, 64 and 1 panels.

mod container;
mod fft;
mod windows;

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

pub use container::{read_pyramid, write_pyramid};
pub use fft::{Fft2, RustFft2};

use windows::Wedge;

#[derive(Debug, Error)]
pub enum FdctError {
    #[error("block is {rows}x{cols}, transform expects {size}x{size}")]
    Shape {
        rows: usize,
        cols: usize,
        size: usize,
    },
    #[error("invalid curvelet configuration: {0}")]
    Config(String),
    #[error("block contains non-finite values")]
    NonFinite,
    #[error("pyramid container: {0}")]
    Container(String),
}

/// Scale and orientation layout of the transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveletConfig {
    /// Block side length.
    pub size: usize,
    pub n_scales: usize,
    /// Orientations per scale, coarsest first. Band-pass counts must be multiples of 4.
    pub angles_per_scale: Vec<usize>,
    /// Finest scale is a single isotropic high-pass panel.
    pub finest_is_wavelet: bool,
    /// Outer edge of the finest curvelet corona as a fraction of `size`
    /// (where the outermost low-pass reaches zero). Coronae halve inward from there.
    pub corona_extent: f64,
}

impl Default for CurveletConfig {
    fn default() -> Self {
        Self {
            size: crate::image_io::BLOCK_SIZE,
            n_scales: 5,
            angles_per_scale: vec![1, 32, 64, 64, 1],
            finest_is_wavelet: true,
            corona_extent: 0.375,
        }
    }
}

impl CurveletConfig {
    pub fn validate(&self) -> Result<(), FdctError> {
        let err = |m: String| Err(FdctError::Config(m));
        if self.size < 4 {
            return err(format!("block size {} too small", self.size));
        }
        if self.n_scales == 0 {
            return err("need at least one scale".into());
        }
        if self.angles_per_scale.len() != self.n_scales {
            return err(format!(
                "{} angle counts for {} scales",
                self.angles_per_scale.len(),
                self.n_scales
            ));
        }
        if self.angles_per_scale[0] != 1 {
            return err("coarsest scale must have exactly one orientation".into());
        }
        if self.n_scales == 1 {
            return Ok(());
        }
        if !(self.corona_extent > 0.0 && self.corona_extent <= 0.5) {
            return err(format!(
                "corona extent {} outside (0, 0.5]",
                self.corona_extent
            ));
        }
        let coarsest = self.corona_extent * self.size as f64 / 2f64.powi(self.n_scales as i32 - 1);
        if coarsest.floor() < 1.0 {
            return err(format!(
                "{} scales do not fit a {}-pixel block",
                self.n_scales, self.size
            ));
        }
        for (j, &a) in self.angles_per_scale.iter().enumerate().skip(1) {
            let finest = j + 1 == self.n_scales;
            if finest && self.finest_is_wavelet {
                if a != 1 {
                    return err(format!("wavelet finest scale needs 1 orientation, got {a}"));
                }
            } else if a < 4 || a % 4 != 0 {
                return err(format!(
                    "scale {} has {a} orientations; band-pass scales need a positive multiple of 4",
                    j + 1
                ));
            }
        }
        Ok(())
    }
}

/// Complex curvelet coefficients of one block, `scales[j][l]` for scale `j+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPyramid {
    pub scales: Vec<Vec<Array2<Complex64>>>,
}

impl CoefficientPyramid {
    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    /// Panels of scale `j`, 1-based (`S₁` is the coarsest).
    pub fn scale(&self, j: usize) -> Option<&[Array2<Complex64>]> {
        j.checked_sub(1)
            .and_then(|i| self.scales.get(i))
            .map(|v| v.as_slice())
    }

    /// Number of coefficients at scale `j` (1-based).
    pub fn scale_len(&self, j: usize) -> usize {
        self.scale(j)
            .map(|p| p.iter().map(|a| a.len()).sum())
            .unwrap_or(0)
    }

    pub fn panel_counts(&self) -> Vec<usize> {
        self.scales.iter().map(|s| s.len()).collect()
    }

    pub fn energy(&self) -> f64 {
        self.scales
            .iter()
            .flatten()
            .flat_map(|p| p.iter())
            .map(|c| c.norm_sqr())
            .sum()
    }

    /// Real inner product `Re ⟨self, other⟩` over all coefficients.
    pub fn inner(&self, other: &Self) -> f64 {
        self.scales
            .iter()
            .flatten()
            .zip(other.scales.iter().flatten())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            scales: self
                .scales
                .iter()
                .map(|s| s.iter().map(|p| Array2::zeros(p.raw_dim())).collect())
                .collect(),
        }
    }

    /// Elementwise `self + other`; shapes must match.
    pub fn add(&self, other: &Self) -> Self {
        Self {
            scales: self
                .scales
                .iter()
                .zip(&other.scales)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }
}

/// Precomputed curvelet transform for one configuration. Immutable and shareable
/// across threads.
pub struct CurveletTransform {
    cfg: CurveletConfig,
    wedges: Vec<Vec<Wedge>>,
    fft: Arc<dyn Fft2>,
}

impl std::fmt::Debug for CurveletTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CurveletTransform")
            .field("cfg", &self.cfg)
            .field("panel_counts", &self.panel_counts())
            .finish()
    }
}

impl CurveletTransform {
    pub fn new(cfg: CurveletConfig) -> Result<Self, FdctError> {
        Self::with_backend(cfg, Arc::new(RustFft2::new()))
    }

    pub fn with_backend(cfg: CurveletConfig, fft: Arc<dyn Fft2>) -> Result<Self, FdctError> {
        let wedges = windows::build(&cfg)?;
        Ok(Self { cfg, wedges, fft })
    }

    pub fn config(&self) -> &CurveletConfig {
        &self.cfg
    }

    pub fn panel_counts(&self) -> Vec<usize> {
        self.wedges.iter().map(|s| s.len()).collect()
    }

    /// Panel shapes `(rows, cols)` per scale.
    pub fn panel_shapes(&self) -> Vec<Vec<(usize, usize)>> {
        self.wedges
            .iter()
            .map(|s| s.iter().map(|w| (w.rows, w.cols)).collect())
            .collect()
    }

    /// Coefficient count of scale `j` (1-based).
    pub fn scale_len(&self, j: usize) -> usize {
        j.checked_sub(1)
            .and_then(|i| self.wedges.get(i))
            .map(|s| s.iter().map(|w| w.rows * w.cols).sum())
            .unwrap_or(0)
    }

    /// Max over the frequency grid of `|Σ |U_{j,l}|² − 1|`.
    pub fn partition_deviation(&self) -> f64 {
        let n = self.cfg.size;
        let mut acc = vec![0.0; n * n];
        for t in self.wedges.iter().flatten().flat_map(|w| &w.taps) {
            acc[t.grid as usize] += t.weight * t.weight;
        }
        acc.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Scales one window by `factor`. Used by the self-test to check that a broken
    /// partition of unity is detected.
    #[doc(hidden)]
    pub fn perturb_window(&mut self, scale: usize, orientation: usize, factor: f64) {
        for t in &mut self.wedges[scale - 1][orientation].taps {
            t.weight *= factor;
        }
    }

    fn check_shape(&self, rows: usize, cols: usize) -> Result<(), FdctError> {
        if rows != self.cfg.size || cols != self.cfg.size {
            return Err(FdctError::Shape {
                rows,
                cols,
                size: self.cfg.size,
            });
        }
        Ok(())
    }

    pub fn forward(&self, block: &Array2<f64>) -> Result<CoefficientPyramid, FdctError> {
        let (rows, cols) = block.dim();
        self.check_shape(rows, cols)?;
        if block.iter().any(|v| !v.is_finite()) {
            return Err(FdctError::NonFinite);
        }
        let n = self.cfg.size;
        // DC is added back analytically so flat blocks give exact zeros off the
        // coarse scale.
        let mean = block.iter().sum::<f64>() / (n * n) as f64;
        let mut spectrum: Vec<Complex64> = block
            .iter()
            .map(|&v| Complex64::new(v - mean, 0.0))
            .collect();
        self.fft.process_unitary(&mut spectrum, n, n, false);
        spectrum[0] += Complex64::new(mean * n as f64, 0.0);

        let scales = self
            .wedges
            .iter()
            .map(|scale| {
                scale
                    .iter()
                    .map(|w| {
                        let mut panel = vec![Complex64::new(0.0, 0.0); w.rows * w.cols];
                        for t in &w.taps {
                            panel[t.panel as usize] = spectrum[t.grid as usize] * t.weight;
                        }
                        self.fft.process_unitary(&mut panel, w.rows, w.cols, true);
                        Array2::from_shape_vec((w.rows, w.cols), panel)
                            .expect("panel shape matches buffer")
                    })
                    .collect()
            })
            .collect();
        Ok(CoefficientPyramid { scales })
    }

    /// Adjoint of [`forward`](Self::forward); reconstructs the block for pyramids
    /// produced by `forward`. Returns the real part.
    pub fn inverse(&self, pyr: &CoefficientPyramid) -> Result<Array2<f64>, FdctError> {
        if pyr.panel_counts() != self.panel_counts() {
            return Err(FdctError::Config(format!(
                "pyramid has panel counts {:?}, transform expects {:?}",
                pyr.panel_counts(),
                self.panel_counts()
            )));
        }
        let n = self.cfg.size;
        let mut spectrum = vec![Complex64::new(0.0, 0.0); n * n];
        for (scale, panels) in self.wedges.iter().zip(&pyr.scales) {
            for (w, panel) in scale.iter().zip(panels) {
                let (r, c) = panel.dim();
                if (r, c) != (w.rows, w.cols) {
                    return Err(FdctError::Shape {
                        rows: r,
                        cols: c,
                        size: self.cfg.size,
                    });
                }
                let mut buf: Vec<Complex64> = panel.iter().copied().collect();
                self.fft.process_unitary(&mut buf, w.rows, w.cols, false);
                for t in &w.taps {
                    spectrum[t.grid as usize] += buf[t.panel as usize] * t.weight;
                }
            }
        }
        self.fft.process_unitary(&mut spectrum, n, n, true);
        Ok(
            Array2::from_shape_vec((n, n), spectrum.into_iter().map(|c| c.re).collect())
                .expect("grid shape matches buffer"),
        )
    }
}

/// Partition-of-unity deviation of the windows `cfg` describes.
pub fn window_partition_check(cfg: &CurveletConfig) -> Result<f64, FdctError> {
    Ok(CurveletTransform::new(cfg.clone())?.partition_deviation())
}
