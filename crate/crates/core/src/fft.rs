//! Multi-dimensional complex FFT on the periodic grid.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::Grid;

pub(crate) struct FftNd {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftNd {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform, normalized so that `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        let len = self.grid.len();
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // axis 0 is contiguous
        plan.process_with_scratch(data, &mut scratch);
        let mut line = vec![Complex64::default(); n];
        for axis in 1..self.grid.dimension {
            let stride = self.grid.stride(axis);
            let block = stride * n;
            for base in (0..len).step_by(block) {
                for off in 0..stride {
                    let start = base + off;
                    for (j, z) in line.iter_mut().enumerate() {
                        *z = data[start + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, z) in line.iter().enumerate() {
                        data[start + j * stride] = *z;
                    }
                }
            }
        }
    }

    /// Forward transform of real data.
    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut z: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut z);
        z
    }

    /// Inverse transform keeping the real part.
    pub fn inverse_real(&self, mut z: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut z);
        z.into_iter().map(|c| c.re).collect()
    }
}

/// Angles `θ = 2π m / n` of every Fourier mode along `axis`, flattened like the grid.
pub(crate) fn mode_angles(grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.n() as f64;
    (0..grid.len())
        .map(|i| 2.0 * PI * grid.coord(i, axis) as f64 / n)
        .collect()
}

/// Symbol of the standard `2d+1`-point negative Laplacian: `Σ_k (4/h²) sin²(θ_k/2)`.
pub(crate) fn laplacian_symbol(grid: &Grid) -> Vec<f64> {
    let h2 = grid.spacing().powi(2);
    let mut sym = vec![0.0; grid.len()];
    for axis in 0..grid.dimension {
        for (s, th) in sym.iter_mut().zip(mode_angles(grid, axis)) {
            *s += 4.0 / h2 * (0.5 * th).sin().powi(2);
        }
    }
    sym
}

/// Symbol of the staggered difference `(u(x + h/2) − u(x − h/2))/h` along `axis`,
/// with the Nyquist mode removed so that the derivative of a real field stays real.
pub(crate) fn staggered_derivative_symbol(grid: &Grid, axis: usize) -> Vec<Complex64> {
    let n = grid.n();
    let h = grid.spacing();
    (0..grid.len())
        .map(|i| {
            let m = grid.coord(i, axis);
            if m == n / 2 {
                return Complex64::default();
            }
            let th = 2.0 * PI * m as f64 / n as f64;
            let th = if m > n / 2 { th - 2.0 * PI } else { th };
            Complex64::new(0.0, 2.0 / h * (0.5 * th).sin())
        })
        .collect()
}
