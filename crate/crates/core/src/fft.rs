use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Multi-dimensional complex FFT over a row-major array.
///
/// `dims` lists axis lengths from slowest to fastest varying.
pub(crate) struct NdFft {
    dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    line: Vec<Complex64>,
}

impl NdFft {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dims: dims.to_vec(),
            forward: dims.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
            line: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Unnormalized inverse transform.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    fn transform(&mut self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.len());
        let total = data.len();
        let mut stride = total;
        for axis in 0..self.dims.len() {
            let n = self.dims[axis];
            stride /= n;
            if n == 1 {
                continue;
            }
            let plan = if inverse {
                &self.inverse[axis]
            } else {
                &self.forward[axis]
            };
            self.line.resize(n, Complex64::default());
            let block = n * stride;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (i, v) in self.line.iter_mut().enumerate() {
                        *v = data[base + i * stride];
                    }
                    plan.process(&mut self.line);
                    for (i, v) in self.line.iter().enumerate() {
                        data[base + i * stride] = *v;
                    }
                }
            }
        }
    }
}
