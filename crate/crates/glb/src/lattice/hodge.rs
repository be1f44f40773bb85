//! Hodge decomposition of 1-forms on the torus: A = dχ + δψ + ζ.

use super::{codiff, exterior_d, solve_poisson, FormField};
use crate::error::Result;

/// Exact, coexact and harmonic parts of a 1-form. On the torus the harmonic
/// 1-forms are the constants, one per axis direction.
#[derive(Debug, Clone)]
pub struct HodgeParts {
    pub chi: FormField,
    pub psi: FormField,
    pub zeta: Vec<f64>,
}

impl HodgeParts {
    /// dχ + δψ + ζ.
    pub fn reconstruct(&self) -> Result<FormField> {
        let lat = self.chi.lattice().clone();
        let mut out = exterior_d(&self.chi)?;
        let co = codiff(&self.psi)?;
        let ns = lat.num_sites();
        for (o, c) in out.values_mut().iter_mut().zip(co.values()) {
            *o += c;
        }
        for (c, &z) in self.zeta.iter().enumerate() {
            for site in 0..ns {
                out.values_mut()[c * ns + site] += z;
            }
        }
        Ok(out)
    }

    pub fn exact_part(&self) -> Result<FormField> {
        exterior_d(&self.chi)
    }
    pub fn coexact_part(&self) -> Result<FormField> {
        codiff(&self.psi)
    }
}

/// Decompose a 1-form: χ from a 0-form Poisson solve on δA, ψ from a 2-form
/// solve on dA, ζ the per-direction mean.
pub fn hodge_decompose(a: &FormField) -> Result<HodgeParts> {
    assert_eq!(a.degree(), 1);
    let del_a = codiff(a)?;
    let chi = solve_poisson(&del_a)?.tau;
    let d_a = exterior_d(a)?;
    let psi = solve_poisson(&d_a)?.tau;
    let zeta = a.combo_means();
    Ok(HodgeParts { chi, psi, zeta })
}
