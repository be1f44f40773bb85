//! Conjugate-gradient solver for the Hodge Laplacian on the torus.

use super::FormField;
use crate::error::{GlbError, Result};

/// Result of a Poisson solve: -Δτ = rhs - H(rhs), τ with zero harmonic part.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub tau: FormField,
    /// Per-combo means of the rhs (the harmonic projection H(rhs)).
    pub harmonic: Vec<f64>,
    pub iterations: usize,
    /// Relative residual ‖-Δτ - (rhs - H(rhs))‖ / ‖rhs - H(rhs)‖ achieved.
    pub residual: f64,
}

pub(super) fn solve(rhs: &FormField, tol_rel: f64, max_iter: usize) -> Result<PoissonSolution> {
    let lat = rhs.lattice().clone();
    let k = rhs.degree();
    let ns = lat.num_sites();
    let harmonic = rhs.combo_means();

    // b = rhs - H(rhs)
    let mut b = rhs.values().to_vec();
    for (c, &m) in harmonic.iter().enumerate() {
        for site in 0..ns {
            b[c * ns + site] -= m;
        }
    }

    let bnorm = lat.norm(&b);
    let mut tau = FormField::zeros(rhs.lattice(), k);
    if bnorm == 0.0 {
        return Ok(PoissonSolution {
            tau,
            harmonic,
            iterations: 0,
            residual: 0.0,
        });
    }

    let mut x = vec![0.0; b.len()];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; b.len()];
    let mut scratch = Vec::new();

    let mut rs = lat.inner(&r, &r);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        lat.laplacian_into(k, &p, &mut ap, &mut scratch);
        let pap = lat.inner(&p, &ap);
        if pap <= 0.0 {
            break; // numerically singular direction
        }
        let alpha = rs / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let rs_new = lat.inner(&r, &r);
        if rs_new.sqrt() <= tol_rel * bnorm {
            rs = rs_new;
            converged = true;
            break;
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }

    let residual = rs.sqrt() / bnorm;
    if !converged {
        return Err(GlbError::Solver {
            residual,
            iterations,
        });
    }

    // Remove the harmonic drift accumulated by rounding.
    for c in 0..lat.num_combos(k) {
        let mut m = 0.0;
        for site in 0..ns {
            m += x[c * ns + site];
        }
        m /= ns as f64;
        for site in 0..ns {
            x[c * ns + site] -= m;
        }
    }

    tau.values_mut().copy_from_slice(&x);
    debug_assert!(tau.is_finite());
    Ok(PoissonSolution {
        tau,
        harmonic,
        iterations,
        residual,
    })
}
