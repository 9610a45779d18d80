use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Minimal 2-D complex FFT interface the curvelet transform is written against.
pub trait Fft2: Send + Sync {
    /// In-place unnormalized 2-D DFT of a row-major `rows × cols` buffer.
    fn process(&self, data: &mut [Complex64], rows: usize, cols: usize, inverse: bool);

    /// Unitary variant: scales the unnormalized transform by `1/sqrt(rows·cols)`.
    fn process_unitary(&self, data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
        self.process(data, rows, cols, inverse);
        let scale = 1.0 / ((rows * cols) as f64).sqrt();
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// [`Fft2`] backed by `rustfft`, row pass then column pass via transposition.
pub struct RustFft2 {
    planner: Mutex<FftPlanner<f64>>,
}

impl Default for RustFft2 {
    fn default() -> Self {
        Self {
            planner: Mutex::new(FftPlanner::new()),
        }
    }
}

impl RustFft2 {
    pub fn new() -> Self {
        Self::default()
    }

    fn plan(&self, len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
        let mut planner = self.planner.lock().expect("fft planner poisoned");
        if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

impl Fft2 for RustFft2 {
    fn process(&self, data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
        assert_eq!(data.len(), rows * cols, "buffer does not match shape");
        if data.is_empty() {
            return;
        }
        self.plan(cols, inverse).process(data);
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        transpose(data, &mut t, rows, cols);
        self.plan(rows, inverse).process(&mut t);
        transpose(&t, data, cols, rows);
    }
}
