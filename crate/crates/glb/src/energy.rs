//! Discrete Yang-Mills-Higgs energy, analytic gradient, Euler-Lagrange and
//! London residuals, |u|-equation residual, and the stress-energy tensor.
//!
//! Energy terms live on their natural cells: kinetic on edges, curvature on
//! plaquettes, potential on vertices, each weighted by h^n.

use crate::bundle::{curvature, State};
use crate::error::{GlbError, Result};
use crate::lattice::{codiff, exterior_d, FormField};
use num_complex::Complex64;

/// Additive breakdown of the total energy.
#[derive(Debug, Clone, Copy)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub curvature: f64,
    pub potential: f64,
    pub total: f64,
    pub epsilon: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(GlbError::Parameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

/// Total energy ½Σ|Du|²h^n + ½Σ|F|²h^n + Σ(1−|u|²)²/(4ε²)h^n.
pub fn energy(state: &State, epsilon: f64) -> Result<EnergyBreakdown> {
    check_epsilon(epsilon)?;
    let lat = state.lattice().clone();
    let w = lat.cell_weight();
    let du = crate::bundle::covariant_derivative(state);
    let mut kin = 0.0;
    for v in &du {
        kin += v.norm_sqr();
    }
    let kin = 0.5 * w * kin;
    let f = curvature(state);
    let mut cur = 0.0;
    for v in f.values() {
        cur += v * v;
    }
    let cur = 0.5 * w * cur;
    let mut pot = 0.0;
    for z in &state.u {
        let s = 1.0 - z.norm_sqr();
        pot += s * s;
    }
    let pot = w * pot / (4.0 * epsilon * epsilon);
    Ok(EnergyBreakdown {
        kinetic: kin,
        curvature: cur,
        potential: pot,
        total: kin + cur + pot,
        epsilon,
    })
}

/// Per-vertex energy density (0-form): each edge term is split ½/½ among its
/// endpoints, each plaquette term ¼ per corner. Σ density·h^n = total.
pub fn energy_density(state: &State, epsilon: f64) -> Result<FormField> {
    check_epsilon(epsilon)?;
    let lat = state.lattice().clone();
    let ns = lat.num_sites();
    let mut dens = FormField::zeros(state.lattice(), 0);
    let du = crate::bundle::covariant_derivative(state);
    for ci in 0..lat.num_combos(1) {
        let dir = lat.combo_dirs(1, ci)[0];
        for site in 0..ns {
            let q = 0.25 * du[ci * ns + site].norm_sqr();
            dens.values_mut()[site] += q;
            dens.values_mut()[lat.shift(site, dir, 1)] += q;
        }
    }
    let f = curvature(state);
    for ci in 0..lat.num_combos(2) {
        let dirs: Vec<usize> = lat.combo_dirs(2, ci).to_vec();
        for site in 0..ns {
            // plaquette term ½F²; ¼ of it to each of the 4 corners
            let share = 0.125 * f.values()[ci * ns + site].powi(2);
            let si = lat.shift(site, dirs[0], 1);
            let sj = lat.shift(site, dirs[1], 1);
            let sij = lat.shift(si, dirs[1], 1);
            for corner in [site, si, sj, sij] {
                dens.values_mut()[corner] += share;
            }
        }
    }
    let inv4e2 = 1.0 / (4.0 * epsilon * epsilon);
    for (dv, z) in dens.values_mut().iter_mut().zip(&state.u) {
        let s = 1.0 - z.norm_sqr();
        *dv += s * s * inv4e2;
    }
    Ok(dens)
}

/// Exact analytic gradient of the total energy.
#[derive(Debug, Clone)]
pub struct Gradient {
    /// d/d(Re u, Im u) packed as a complex number per vertex.
    pub u: Vec<Complex64>,
    /// d/dA per edge.
    pub a: FormField,
}

/// Fused energy + gradient evaluation (the solver's inner loop).
pub fn energy_and_gradient(
    state: &State,
    epsilon: f64,
    gu: &mut Vec<Complex64>,
    ga: &mut FormField,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    let lat = state.lattice().clone();
    let ns = lat.num_sites();
    let h = lat.spacing();
    let w = lat.cell_weight();
    let wk = w / (h * h); // h^{n-2}

    gu.clear();
    gu.resize(ns, Complex64::new(0.0, 0.0));
    debug_assert_eq!(ga.degree(), 1);
    ga.values_mut().fill(0.0);

    let mut kin = 0.0;
    for ci in 0..lat.num_combos(1) {
        let dir = lat.combo_dirs(1, ci)[0];
        for site in 0..ns {
            let e = ci * ns + site;
            let head = lat.shift(site, dir, 1);
            let phase = Complex64::from_polar(1.0, -state.edge_angle(e));
            let transported = phase * state.u[head];
            let wdiff = transported - state.u[site];
            kin += wdiff.norm_sqr();
            gu[site] -= wk * wdiff;
            gu[head] += wk * wdiff * phase.conj();
            // ∂(½|w|²h^{n-2})/∂A_e = -h^n j_e with j_e = Im(ū_t e^{-iφ}u_h)/h
            ga.values_mut()[e] += w / h * (wdiff.conj() * transported).im;
        }
    }
    let kin = 0.5 * wk * kin;

    let f = curvature(state);
    let mut cur = 0.0;
    for v in f.values() {
        cur += v * v;
    }
    let cur = 0.5 * w * cur;
    let delf = codiff(&f)?;
    for (g, d) in ga.values_mut().iter_mut().zip(delf.values()) {
        *g += w * d;
    }

    let inv_e2 = 1.0 / (epsilon * epsilon);
    let mut pot = 0.0;
    for (g, z) in gu.iter_mut().zip(&state.u) {
        let s = 1.0 - z.norm_sqr();
        pot += s * s;
        *g += w * inv_e2 * (z.norm_sqr() - 1.0) * z;
    }
    let pot = 0.25 * w * inv_e2 * pot;

    Ok(kin + cur + pot)
}

/// Gradient of the total energy with respect to (u, A).
pub fn gradient(state: &State, epsilon: f64) -> Result<Gradient> {
    let mut gu = Vec::new();
    let mut ga = FormField::zeros(state.lattice(), 1);
    energy_and_gradient(state, epsilon, &mut gu, &mut ga)?;
    Ok(Gradient { u: gu, a: ga })
}

/// Euler-Lagrange, London and |u|-equation residuals.
#[derive(Debug, Clone)]
pub struct Residuals {
    /// D*Du + ε⁻²(|u|²−1)u per vertex.
    pub el_u: Vec<Complex64>,
    pub el_u_l2: f64,
    pub el_u_inf: f64,
    /// δF − j per edge.
    pub el_a: FormField,
    pub el_a_l2: f64,
    pub el_a_inf: f64,
    /// −ΔF + F − 2J as a 2-form; computed as exterior_d(el_a) so the
    /// discrete Bianchi link d(δF − j) = dδF − dj holds bit-exactly
    /// (dF ≡ 0 since F = F₀ + dA).
    pub london_form: FormField,
    pub london: f64,
    pub modulus_eq: f64,
}

/// Compute all residuals of the critical-point equations.
pub fn residuals(state: &State, epsilon: f64) -> Result<Residuals> {
    check_epsilon(epsilon)?;
    let lat = state.lattice().clone();
    let ns = lat.num_sites();
    let w = lat.cell_weight();

    let grad = gradient(state, epsilon)?;
    let inv_w = 1.0 / w;
    let el_u: Vec<Complex64> = grad.u.iter().map(|g| g * inv_w).collect();
    let mut el_a = grad.a;
    for v in el_a.values_mut() {
        *v *= inv_w;
    }

    let mut el_u_l2 = 0.0;
    let mut el_u_inf: f64 = 0.0;
    for z in &el_u {
        el_u_l2 += z.norm_sqr();
        el_u_inf = el_u_inf.max(z.norm());
    }
    let el_u_l2 = (w * el_u_l2).sqrt();
    let el_a_l2 = el_a.norm();
    let el_a_inf = el_a.norm_inf();

    let london_form = exterior_d(&el_a)?;
    let london = london_form.norm();

    // |u|-equation: ½δd(|u|²) + ε⁻²(|u|²−1)|u|² + ⟨|Du|²⟩_v,
    // with ⟨|Du|²⟩_v the per-direction in/out average at the vertex.
    let m2: Vec<f64> = state.u.iter().map(|z| z.norm_sqr()).collect();
    let m2f = FormField::from_values(state.lattice(), 0, m2.clone());
    let lap = codiff(&exterior_d(&m2f)?)?;
    let du = crate::bundle::covariant_derivative(state);
    let inv_e2 = 1.0 / (epsilon * epsilon);
    let mut mod_l2 = 0.0;
    for site in 0..ns {
        let mut du2 = 0.0;
        for ci in 0..lat.num_combos(1) {
            let dir = lat.combo_dirs(1, ci)[0];
            let e_out = ci * ns + site;
            let e_in = ci * ns + lat.shift(site, dir, -1);
            du2 += 0.5 * (du[e_out].norm_sqr() + du[e_in].norm_sqr());
        }
        let r = 0.5 * lap.values()[site] + inv_e2 * (m2[site] - 1.0) * m2[site] + du2;
        mod_l2 += r * r;
    }
    let modulus_eq = (w * mod_l2).sqrt();

    Ok(Residuals {
        el_u,
        el_u_l2,
        el_u_inf,
        el_a,
        el_a_l2,
        el_a_inf,
        london_form,
        london,
        modulus_eq,
    })
}

/// Rescaled stress-energy tensor field at vertices, with divergence and the
/// per-cell quantities entering the trace identity.
#[derive(Debug, Clone)]
pub struct StressField {
    pub n: usize,
    /// Row-major n×n per vertex.
    pub tensors: Vec<f64>,
    /// Centered-difference divergence, n components per vertex.
    pub divergence: Vec<f64>,
    /// Vertex-assembled energy density consistent with the tensors.
    pub e_cell: Vec<f64>,
    /// Vertex potential density (1−|u|²)²/(4ε²).
    pub v_cell: Vec<f64>,
    /// Vertex |F|² = Σ_{i<j} F̄_ij².
    pub fbar_sq: Vec<f64>,
    pub log_eps_abs: f64,
}

impl StressField {
    pub fn entry(&self, vertex: usize, i: usize, j: usize) -> f64 {
        self.tensors[vertex * self.n * self.n + i * self.n + j]
    }
    pub fn trace(&self, vertex: usize) -> f64 {
        (0..self.n).map(|i| self.entry(vertex, i, i)).sum()
    }
    /// L² norm of the divergence over the torus (weight h^n per vertex).
    pub fn divergence_l2(&self, cell_weight: f64) -> f64 {
        let s: f64 = self.divergence.iter().map(|v| v * v).sum();
        (cell_weight * s).sqrt()
    }
}

/// Assemble T = (e·g − Du*⊗Du − F∘F)/|log ε| at vertices. Edge covariant
/// derivatives are transported to the vertex (out-edge directly, in-edge via
/// its holonomy), curvature components are 4-plaquette corner averages, and
/// e is assembled from the same vertex quantities so the trace identity
/// |log ε|·Tr T = (n−2)e + (1/(2ε²))(1−|u|²)² − |F|² is exact algebra.
pub fn stress_tensor(state: &State, epsilon: f64) -> Result<StressField> {
    check_epsilon(epsilon)?;
    let log_eps_abs = epsilon.ln().abs();
    if log_eps_abs < 1e-12 {
        return Err(GlbError::Parameter(
            "epsilon = 1 degenerates the |log eps| rescaling".into(),
        ));
    }
    let lat = state.lattice().clone();
    let n = lat.dim();
    let ns = lat.num_sites();
    let du = crate::bundle::covariant_derivative(state);
    let f = curvature(state);

    // combo index of the plaquette family {i,j}, i<j
    let mut plaq_combo = vec![vec![usize::MAX; n]; n];
    for ci in 0..lat.num_combos(2) {
        let d = lat.combo_dirs(2, ci);
        plaq_combo[d[0]][d[1]] = ci;
        plaq_combo[d[1]][d[0]] = ci;
    }

    let inv4e2 = 1.0 / (4.0 * epsilon * epsilon);
    let inv_log = 1.0 / log_eps_abs;
    let mut tensors = vec![0.0; ns * n * n];
    let mut e_cell = vec![0.0; ns];
    let mut v_cell = vec![0.0; ns];
    let mut fbar_sq = vec![0.0; ns];

    let mut duv = vec![Complex64::new(0.0, 0.0); n];
    let mut fbar = vec![0.0; n * n];
    for site in 0..ns {
        for (i, dv) in duv.iter_mut().enumerate() {
            let e_out = i * ns + site;
            let tail_in = lat.shift(site, i, -1);
            let e_in = i * ns + tail_in;
            // e^{-iφ} transports head→tail, so tail→head uses e^{+iφ}
            let transport = Complex64::from_polar(1.0, state.edge_angle(e_in));
            *dv = 0.5 * (du[e_out] + transport * du[e_in]);
        }
        fbar.fill(0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let ci = plaq_combo[i][j];
                let si = lat.shift(site, i, -1);
                let sj = lat.shift(site, j, -1);
                let sij = lat.shift(si, j, -1);
                let avg = 0.25
                    * (f.values()[ci * ns + site]
                        + f.values()[ci * ns + si]
                        + f.values()[ci * ns + sj]
                        + f.values()[ci * ns + sij]);
                fbar[i * n + j] = avg;
                fbar[j * n + i] = -avg;
            }
        }

        let k: f64 = duv.iter().map(|z| z.norm_sqr()).sum();
        let mut c2 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                c2 += fbar[i * n + j] * fbar[i * n + j];
            }
        }
        let s = 1.0 - state.u[site].norm_sqr();
        let v = s * s * inv4e2;
        let e = 0.5 * k + 0.5 * c2 + v;
        e_cell[site] = e;
        v_cell[site] = v;
        fbar_sq[site] = c2;

        let t = &mut tensors[site * n * n..(site + 1) * n * n];
        for i in 0..n {
            for j in 0..n {
                let mut val = if i == j { e } else { 0.0 };
                val -= (duv[i].conj() * duv[j]).re;
                let mut ff = 0.0;
                for kk in 0..n {
                    ff += fbar[i * n + kk] * fbar[j * n + kk];
                }
                val -= ff;
                t[i * n + j] = val * inv_log;
            }
        }
    }

    let mut divergence = vec![0.0; ns * n];
    let inv2h = 1.0 / (2.0 * lat.spacing());
    for site in 0..ns {
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                let up = lat.shift(site, j, 1);
                let dn = lat.shift(site, j, -1);
                s += (tensors[up * n * n + i * n + j] - tensors[dn * n * n + i * n + j]) * inv2h;
            }
            divergence[site * n + i] = s;
        }
    }

    Ok(StressField {
        n,
        tensors,
        divergence,
        e_cell,
        v_cell,
        fbar_sq,
        log_eps_abs,
    })
}
