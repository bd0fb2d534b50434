use crate::fft::{laplacian_symbol, FftNd};
use crate::field::{Grid, GridField};

/// Constant-coefficient operators inverted exactly in the Fourier basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralOperator {
    /// `−Δ`, solved in the zero-mean gauge.
    NegLaplacian,
    /// `1/T − Δ`.
    Massive { t: f64 },
}

impl SpectralOperator {
    fn shift(&self) -> f64 {
        match *self {
            SpectralOperator::NegLaplacian => 0.0,
            SpectralOperator::Massive { t } => 1.0 / t,
        }
    }
}

pub(crate) fn inverse_symbol(grid: &Grid, op: SpectralOperator) -> Vec<f64> {
    let shift = op.shift();
    laplacian_symbol(grid)
        .into_iter()
        .map(|s| {
            let v = shift + s;
            if v == 0.0 {
                0.0
            } else {
                1.0 / v
            }
        })
        .collect()
}

pub(crate) fn solve_component(fft: &FftNd, inv_symbol: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut z = fft.forward_real(rhs);
    for (c, s) in z.iter_mut().zip(inv_symbol) {
        *c *= *s;
    }
    fft.inverse_real(z)
}

/// Component-wise exact solve with the standard `2d+1`-point Laplacian.
///
/// For `−Δ` the mean of the right-hand side is dropped and the solution has zero mean.
pub fn solve_spectral(rhs: &GridField, op: SpectralOperator) -> GridField {
    let grid = rhs.grid;
    let fft = FftNd::new(grid);
    let inv = inverse_symbol(&grid, op);
    let mut out = rhs.clone();
    for comp in &mut out.components {
        *comp = solve_component(&fft, &inv, comp);
    }
    out
}

/// Apply the operator with the real-space stencil.
pub fn apply_spectral_operator(u: &GridField, op: SpectralOperator) -> GridField {
    let grid = u.grid;
    let inv_h2 = 1.0 / grid.spacing().powi(2);
    let shift = op.shift();
    let mut out = u.clone();
    for (dst, src) in out.components.iter_mut().zip(&u.components) {
        for c in 0..grid.len() {
            let mut s = shift * src[c];
            for k in 0..grid.dimension {
                s += inv_h2 * (2.0 * src[c] - src[grid.forward(c, k)] - src[grid.backward(c, k)]);
            }
            dst[c] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Support;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random(grid: Grid, seed: u64) -> GridField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GridField::scalar(
            grid,
            Support::Everywhere,
            (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn zero_in_zero_out() {
        let g = Grid::new(2, 16, 4.0).unwrap();
        let u = solve_spectral(
            &GridField::zeros(g, Support::Everywhere),
            SpectralOperator::NegLaplacian,
        );
        assert!(u.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_mode_divides_by_symbol() {
        let g = Grid::new(2, 16, 2.0).unwrap();
        let h = g.spacing();
        let th = [2.0 * PI * 3.0 / 16.0, 2.0 * PI * 1.0 / 16.0];
        let sym: f64 = th
            .iter()
            .map(|t| 4.0 / (h * h) * (t / 2.0).sin().powi(2))
            .sum();
        let rhs: Vec<f64> = (0..g.len())
            .map(|i| (th[0] * g.coord(i, 0) as f64 + th[1] * g.coord(i, 1) as f64).sin())
            .collect();
        let rhs = GridField::scalar(g, Support::Everywhere, rhs);
        for op in [
            SpectralOperator::NegLaplacian,
            SpectralOperator::Massive { t: 3.0 },
        ] {
            let shift = if let SpectralOperator::Massive { t } = op {
                1.0 / t
            } else {
                0.0
            };
            let u = solve_spectral(&rhs, op);
            let expect: Vec<f64> = rhs.values().iter().map(|v| v / (sym + shift)).collect();
            assert!(rel_err(u.values(), &expect) < 1e-12);
        }
    }

    #[test]
    fn apply_then_solve_round_trip() {
        for (d, n) in [(2usize, 32usize), (3, 8)] {
            let g = Grid::new(d, n, 5.0).unwrap();
            let mut u = random(g, 7 + d as u64);
            let mean = u.means()[0];
            u.values_mut().iter_mut().for_each(|v| *v -= mean);
            for op in [
                SpectralOperator::NegLaplacian,
                SpectralOperator::Massive { t: 10.0 },
            ] {
                let back = solve_spectral(&apply_spectral_operator(&u, op), op);
                assert!(rel_err(back.values(), u.values()) < 1e-12);
            }
        }
    }

    #[test]
    fn laplace_solution_has_zero_mean() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        let u = solve_spectral(&random(g, 3), SpectralOperator::NegLaplacian);
        assert!(u.means()[0].abs() < 1e-15);
    }
}
