/// Outcome of a conjugate-gradient run: iterations and final relative residual.
pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG for an SPD operator, starting from `x`.
///
/// Convergence is declared on the true residual `‖b − A x‖ / ‖b‖`; when the recursive
/// residual drifts below tolerance but the true one does not, the iteration restarts.
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tolerance: f64,
    max_iterations: usize,
) -> CgOutcome {
    let m = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; m];
    let mut z = vec![0.0; m];
    let mut p = vec![0.0; m];
    let mut q = vec![0.0; m];

    let true_residual = |x: &[f64], r: &mut [f64], q: &mut [f64]| {
        apply(x, q);
        for i in 0..m {
            r[i] = b[i] - q[i];
        }
        dot(r, r).sqrt() / bnorm
    };

    let mut rel = true_residual(x, &mut r, &mut q);
    let mut iterations = 0;
    'restart: while iterations < max_iterations {
        precond(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iterations {
            if rel <= tolerance {
                break 'restart;
            }
            apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                break 'restart;
            }
            let alpha = rz / pq;
            for i in 0..m {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            iterations += 1;
            rel = dot(&r, &r).sqrt() / bnorm;
            if rel <= tolerance {
                rel = true_residual(x, &mut r, &mut q);
                if rel <= tolerance {
                    break 'restart;
                }
                continue 'restart;
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..m {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    CgOutcome {
        iterations,
        residual: rel,
        converged: rel <= tolerance,
    }
}
