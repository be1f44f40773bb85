//! Gauge-invariant diagnostics: pre-Jacobian, Jacobian, vortex sets, radial
//! energy profiles, clearing-out and curvature-decay probes, the covariant
//! derivative decomposition check, and the rescaled energy measure.

use crate::bundle::{covariant_derivative, curvature, xy_flux_per_slice, State};
use crate::energy::energy_density;
use crate::error::{GlbError, Result};
use crate::lattice::{exterior_d, fit_line, FormField, LineFit};
use num_complex::Complex64;

/// Pre-Jacobian j and Jacobian J = ½dj + ½F.
#[derive(Debug, Clone)]
pub struct JacobianField {
    pub j: FormField,
    pub jj: FormField,
}

/// Gauge-invariant pre-Jacobian j_e = Im(ū_tail e^{−iφ_e} u_head)/h.
///
/// Sign convention: positive bundle degree yields positive total Jacobian
/// (Σ J·h² = +π d), fixed by the quantization tests.
pub fn prejacobian(state: &State) -> FormField {
    let lat = state.lattice().clone();
    let ns = lat.num_sites();
    let h = lat.spacing();
    let mut j = FormField::zeros(state.lattice(), 1);
    for ci in 0..lat.num_combos(1) {
        let dir = lat.combo_dirs(1, ci)[0];
        for site in 0..ns {
            let e = ci * ns + site;
            let head = lat.shift(site, dir, 1);
            let phase = Complex64::from_polar(1.0, -state.edge_angle(e));
            j.values_mut()[e] = (state.u[site].conj() * phase * state.u[head]).im / h;
        }
    }
    j
}

/// Jacobian J = ½ exterior_d(j) + ½ F. Per-slice Σ J·h² = πd for any state.
pub fn jacobian(state: &State) -> JacobianField {
    let j = prejacobian(state);
    let dj = exterior_d(&j).expect("1-form below top degree");
    let f = curvature(state);
    let mut jj = FormField::zeros(state.lattice(), 2);
    for ((o, d), fv) in jj.values_mut().iter_mut().zip(dj.values()).zip(f.values()) {
        *o = 0.5 * d + 0.5 * fv;
    }
    JacobianField { j, jj }
}

/// Per-z-slice Jacobian sums Σ J·h² (global sum in 2D).
pub fn jacobian_slice_sums(field: &JacobianField) -> Vec<f64> {
    xy_flux_per_slice(&field.jj)
}

/// Sub-threshold vertex set and its connected components.
#[derive(Debug, Clone)]
pub struct VortexReport {
    pub threshold: f64,
    pub cells: Vec<usize>,
    pub components: usize,
    /// Per-z-slice topological charge Σ J·h²/π (single entry in 2D).
    pub slice_charges: Vec<f64>,
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let nxt = self.parent[c];
            self.parent[c] = r;
            c = nxt;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Vertices with |u| below the threshold, grouped into periodic
/// 2n-neighbour connected components.
pub fn vortex_set(state: &State, threshold: f64) -> Result<VortexReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(GlbError::Parameter(format!(
            "vortex threshold must lie in (0,1), got {threshold}"
        )));
    }
    let lat = state.lattice().clone();
    let ns = lat.num_sites();
    let below: Vec<bool> = state.u.iter().map(|z| z.norm() < threshold).collect();
    let cells: Vec<usize> = (0..ns).filter(|&v| below[v]).collect();

    let mut dsu = Dsu::new(ns);
    for &v in &cells {
        for axis in 0..lat.dim() {
            let up = lat.shift(v, axis, 1);
            if below[up] {
                dsu.union(v, up);
            }
        }
    }
    let mut roots: Vec<usize> = cells.iter().map(|&v| dsu.find(v)).collect();
    roots.sort_unstable();
    roots.dedup();

    let field = jacobian(state);
    let slice_charges: Vec<f64> = jacobian_slice_sums(&field)
        .iter()
        .map(|s| s / std::f64::consts::PI)
        .collect();

    Ok(VortexReport {
        threshold,
        cells,
        components: roots.len(),
        slice_charges,
    })
}

/// Ball energies, frontier fluxes and density ratios around a center.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub center: usize,
    pub radii: Vec<f64>,
    /// Ball energy E_ε(x₀,ρ); nondecreasing, built by exact shell telescoping.
    pub e: Vec<f64>,
    /// Shell energy between consecutive radii; e[i+1] = e[i] + shell_e[i]
    /// bit-exactly.
    pub shell_e: Vec<f64>,
    /// Frontier term X_ε(x₀,ρ).
    pub x: Vec<f64>,
    /// f(ρ) = ρ^{2−n} E.
    pub f: Vec<f64>,
    /// Potential fraction p_ε(ρ) = ρ^{2−n} ε^{−2} ∫_{B_ρ}(1−|u|²)².
    pub p_eps: Vec<f64>,
    /// Density estimate Θ(ρ) = f(ρ)/|log ε|.
    pub theta: Vec<f64>,
    /// max over consecutive radii of (f(ρ₁) − f(ρ₂))⁺ / f(ρ₂).
    pub violation: f64,
}

fn check_radii(lat: &crate::lattice::Lattice, radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(GlbError::Range("empty radius list".into()));
    }
    let lo = 4.0 * lat.spacing();
    let hi = lat.min_length() / 4.0;
    for w in radii.windows(2) {
        if w[1] <= w[0] {
            return Err(GlbError::Range(format!(
                "radii must be strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
    }
    for &r in radii {
        if !(r >= lo && r <= hi) {
            return Err(GlbError::Range(format!(
                "radius {r} outside [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

/// Per-cell energy terms as (distance-to-center, term) with a canonical
/// deterministic ordering by (distance, degree, cell id).
fn energy_terms_by_distance(state: &State, epsilon: f64, center: usize) -> Vec<(f64, usize, usize, f64)> {
    let lat = state.lattice().clone();
    let n = lat.dim();
    let h = lat.spacing();
    let w = lat.cell_weight();
    let c: Vec<f64> = (0..n)
        .map(|a| lat.site_coord(center, a) as f64 * h)
        .collect();
    let du = covariant_derivative(state);
    let f = curvature(state);
    let inv4e2 = 1.0 / (4.0 * epsilon * epsilon);
    let mut out = Vec::with_capacity(lat.cell_count(0) + lat.cell_count(1) + lat.cell_count(2));
    for cell in 0..lat.cell_count(0) {
        let s = 1.0 - state.u[cell].norm_sqr();
        let dist = lat.periodic_dist(&c, &lat.cell_barycenter(0, cell));
        out.push((dist, 0, cell, s * s * inv4e2 * w));
    }
    for cell in 0..lat.cell_count(1) {
        let dist = lat.periodic_dist(&c, &lat.cell_barycenter(1, cell));
        out.push((dist, 1, cell, 0.5 * du[cell].norm_sqr() * w));
    }
    for cell in 0..lat.cell_count(2) {
        let dist = lat.periodic_dist(&c, &lat.cell_barycenter(2, cell));
        out.push((dist, 2, cell, 0.5 * f.values()[cell].powi(2) * w));
    }
    out.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    out
}

/// Frontier term X_ε at one radius: normal covariant-derivative components
/// from edges crossing the sphere, normal curvature contractions from the
/// plaquettes containing those edges, plus the ball potential term.
fn frontier_x(state: &State, epsilon: f64, center: usize, rho: f64) -> f64 {
    let lat = state.lattice().clone();
    let n = lat.dim();
    let ns = lat.num_sites();
    let h = lat.spacing();
    let c: Vec<f64> = (0..n)
        .map(|a| lat.site_coord(center, a) as f64 * h)
        .collect();
    let du = covariant_derivative(state);
    let f = curvature(state);
    let surf_w = h.powi(n as i32 - 1);

    // plaquette combo lookup for direction pairs
    let mut plaq_combo = vec![vec![usize::MAX; n]; n];
    for ci in 0..lat.num_combos(2) {
        let d = lat.combo_dirs(2, ci);
        plaq_combo[d[0]][d[1]] = ci;
        plaq_combo[d[1]][d[0]] = ci;
    }

    // vertex distances
    let dist_v: Vec<f64> = (0..ns)
        .map(|v| lat.periodic_dist(&c, &lat.cell_barycenter(0, v)))
        .collect();

    let mut x = 0.0;
    for ci in 0..lat.num_combos(1) {
        let dir = lat.combo_dirs(1, ci)[0];
        for site in 0..ns {
            let head = lat.shift(site, dir, 1);
            let (dt, dh) = (dist_v[site], dist_v[head]);
            if (dt < rho) == (dh < rho) {
                continue;
            }
            let e = ci * ns + site;
            let bary = lat.cell_barycenter(1, e);
            let delta = lat.periodic_delta(&c, &bary);
            let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-300);
            let nu: Vec<f64> = delta.iter().map(|d| d / norm).collect();
            // |D_ν u|² ≈ ν_dir² |Du_e|²
            x += surf_w * nu[dir] * nu[dir] * du[e].norm_sqr();
            // |i_ν F|² from the plaquettes containing this edge
            for j in 0..n {
                if j == dir {
                    continue;
                }
                let cj = plaq_combo[dir][j];
                let p1 = cj * ns + site;
                let p2 = cj * ns + lat.shift(site, j, -1);
                let favg2 = 0.5 * (f.values()[p1].powi(2) + f.values()[p2].powi(2));
                x += surf_w * nu[j] * nu[j] * favg2;
            }
        }
    }

    // potential term (1/(2ε²ρ)) ∫_{B_ρ} (1−|u|²)²
    let w = lat.cell_weight();
    let mut pot = 0.0;
    for v in 0..ns {
        if dist_v[v] < rho {
            let s = 1.0 - state.u[v].norm_sqr();
            pot += s * s;
        }
    }
    x + pot * w / (2.0 * epsilon * epsilon * rho)
}

/// Radial energy profile around a center vertex.
pub fn radial_profile(
    state: &State,
    epsilon: f64,
    center: usize,
    radii: &[f64],
) -> Result<RadialProfile> {
    if !(epsilon > 0.0) {
        return Err(GlbError::Parameter(format!("epsilon {epsilon} must be > 0")));
    }
    let lat = state.lattice().clone();
    check_radii(&lat, radii)?;
    let n = lat.dim();
    let terms = energy_terms_by_distance(state, epsilon, center);

    // Shell-telescoped ball energies: each shell is summed with a fresh
    // accumulator so E(ρ_{i+1}) = E(ρ_i) + shell exactly.
    let mut e = Vec::with_capacity(radii.len());
    let mut shell_e = Vec::with_capacity(radii.len().saturating_sub(1));
    let mut idx = 0usize;
    let mut prev_total = 0.0;
    for (ri, &rho) in radii.iter().enumerate() {
        let mut shell = 0.0;
        while idx < terms.len() && terms[idx].0 < rho {
            shell += terms[idx].3;
            idx += 1;
        }
        let total = prev_total + shell;
        if ri > 0 {
            shell_e.push(shell);
        }
        e.push(total);
        prev_total = total;
    }

    let log_eps_abs = epsilon.ln().abs().max(1e-300);
    let mut x = Vec::with_capacity(radii.len());
    let mut ff = Vec::with_capacity(radii.len());
    let mut p_eps = Vec::with_capacity(radii.len());
    let mut theta = Vec::with_capacity(radii.len());
    let w = lat.cell_weight();
    let c: Vec<f64> = (0..n)
        .map(|a| lat.site_coord(center, a) as f64 * lat.spacing())
        .collect();
    for (ri, &rho) in radii.iter().enumerate() {
        let scale = rho.powi(2 - n as i32);
        let fv = scale * e[ri];
        ff.push(fv);
        theta.push(fv / log_eps_abs);
        x.push(frontier_x(state, epsilon, center, rho));
        let mut pot = 0.0;
        for v in 0..lat.num_sites() {
            if lat.periodic_dist(&c, &lat.cell_barycenter(0, v)) < rho {
                let s = 1.0 - state.u[v].norm_sqr();
                pot += s * s;
            }
        }
        p_eps.push(scale / (epsilon * epsilon) * pot * w);
    }

    let mut violation: f64 = 0.0;
    for i in 0..radii.len().saturating_sub(1) {
        if ff[i + 1] > 0.0 {
            violation = violation.max((ff[i] - ff[i + 1]).max(0.0) / ff[i + 1]);
        }
    }

    Ok(RadialProfile {
        center,
        radii: radii.to_vec(),
        e,
        shell_e,
        x,
        f: ff,
        p_eps,
        theta,
        violation,
    })
}

/// One clearing-out evaluation at a center.
#[derive(Debug, Clone)]
pub struct ClearingEntry {
    pub center: usize,
    /// μ(B_R)/R^{n−2} with μ = energy/|log ε|.
    pub mass_ratio: f64,
    /// min |u| over B_{3R/4}.
    pub min_u: f64,
    /// E_ε(x₀,R) ≤ η₀ R^{n−2} log(R/ε).
    pub hypothesis: bool,
    /// hypothesis ⟹ min|u| ≥ ½ (vacuously true when hypothesis fails).
    pub pass: bool,
}

/// Clearing-out report for a set of centers.
#[derive(Debug, Clone)]
pub struct ClearingReport {
    pub r: f64,
    pub eta0: f64,
    pub entries: Vec<ClearingEntry>,
}

/// Evaluate the clearing-out hypothesis and conclusion at each center.
pub fn clearing_probe(
    state: &State,
    epsilon: f64,
    centers: &[usize],
    r: f64,
    eta0: f64,
) -> Result<ClearingReport> {
    let lat = state.lattice().clone();
    let lo = 8.0 * lat.spacing();
    let hi = lat.min_length() / 4.0;
    if !(r >= lo && r <= hi) {
        return Err(GlbError::Range(format!("R = {r} outside [{lo}, {hi}]")));
    }
    if !(epsilon > 0.0 && epsilon < r) {
        return Err(GlbError::Range(format!("epsilon {epsilon} must lie in (0, R)")));
    }
    let n = lat.dim();
    let h = lat.spacing();
    let log_eps_abs = epsilon.ln().abs().max(1e-300);
    let bound = eta0 * r.powi(n as i32 - 2) * (r / epsilon).ln();

    let mut entries = Vec::with_capacity(centers.len());
    for &center in centers {
        let terms = energy_terms_by_distance(state, epsilon, center);
        let mut eball = 0.0;
        for t in &terms {
            if t.0 < r {
                eball += t.3;
            } else {
                break;
            }
        }
        let c: Vec<f64> = (0..n)
            .map(|a| lat.site_coord(center, a) as f64 * h)
            .collect();
        let mut min_u = f64::INFINITY;
        for v in 0..lat.num_sites() {
            if lat.periodic_dist(&c, &lat.cell_barycenter(0, v)) < 0.75 * r {
                min_u = min_u.min(state.u[v].norm());
            }
        }
        let hypothesis = eball <= bound;
        let pass = !hypothesis || min_u >= 0.5;
        entries.push(ClearingEntry {
            center,
            mass_ratio: eball / (log_eps_abs * r.powi(n as i32 - 2)),
            min_u,
            hypothesis,
            pass,
        });
    }
    Ok(ClearingReport { r, eta0, entries })
}

/// Curvature-mass decay fit ∫_{B_r}|F|² ~ r^q.
#[derive(Debug, Clone)]
pub struct CurvatureDecay {
    pub degenerate: bool,
    pub fit: Option<LineFit>,
}

/// Least-squares exponent of log ∫_{B_r}|F|²h^n vs log r.
pub fn curvature_decay_probe(
    state: &State,
    center: usize,
    radii: &[f64],
) -> Result<CurvatureDecay> {
    let lat = state.lattice().clone();
    check_radii(&lat, radii)?;
    let n = lat.dim();
    let h = lat.spacing();
    let w = lat.cell_weight();
    let f = curvature(state);
    let c: Vec<f64> = (0..n)
        .map(|a| lat.site_coord(center, a) as f64 * h)
        .collect();
    let mut dist_mass: Vec<(f64, f64)> = (0..lat.cell_count(2))
        .map(|cell| {
            (
                lat.periodic_dist(&c, &lat.cell_barycenter(2, cell)),
                f.values()[cell].powi(2) * w,
            )
        })
        .collect();
    dist_mass.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut acc = 0.0;
    let mut idx = 0usize;
    for &rho in radii {
        while idx < dist_mass.len() && dist_mass[idx].0 < rho {
            acc += dist_mass[idx].1;
            idx += 1;
        }
        if acc > 1e-300 {
            xs.push(rho.ln());
            ys.push(acc.ln());
        }
    }
    if xs.len() < 2 {
        return Ok(CurvatureDecay {
            degenerate: true,
            fit: None,
        });
    }
    Ok(CurvatureDecay {
        degenerate: false,
        fit: Some(fit_line(&xs, &ys)),
    })
}

/// Result of the per-edge |Du|² = |d|u||² + |j|²/|u|² comparison.
#[derive(Debug, Clone)]
pub struct DecompositionCheck {
    pub degenerate: bool,
    pub max_mismatch: f64,
    pub checked_edges: usize,
}

/// Compare |Du|² against |d|u||² + j²/|u_tail|² on edges whose endpoints
/// have modulus above the mask threshold 1e-8.
pub fn decomposition_check(state: &State) -> DecompositionCheck {
    let lat = state.lattice().clone();
    let ns = lat.num_sites();
    let h = lat.spacing();
    let du = covariant_derivative(state);
    let j = prejacobian(state);
    let moduli: Vec<f64> = state.u.iter().map(|z| z.norm()).collect();
    let mut max_mismatch: f64 = 0.0;
    let mut checked = 0usize;
    for ci in 0..lat.num_combos(1) {
        let dir = lat.combo_dirs(1, ci)[0];
        for site in 0..ns {
            let head = lat.shift(site, dir, 1);
            if moduli[site] <= 1e-8 || moduli[head] <= 1e-8 {
                continue;
            }
            let e = ci * ns + site;
            let dmod = (moduli[head] - moduli[site]) / h;
            let rhs = dmod * dmod + j.values()[e].powi(2) / (moduli[site] * moduli[site]);
            max_mismatch = max_mismatch.max((du[e].norm_sqr() - rhs).abs());
            checked += 1;
        }
    }
    DecompositionCheck {
        degenerate: checked == 0,
        max_mismatch,
        checked_edges: checked,
    }
}

/// log₂ convergence slope from mismatches of the same smooth family at
/// spacings h, h/2, h/4, ... (coarsest first).
pub fn decomposition_refinement_slope(mismatches: &[f64]) -> Result<f64> {
    if mismatches.len() < 2 || mismatches.iter().any(|m| !(*m > 0.0)) {
        return Err(GlbError::Parameter(
            "need at least two positive mismatches".into(),
        ));
    }
    let mut s = 0.0;
    for w in mismatches.windows(2) {
        s += (w[0] / w[1]).log2();
    }
    Ok(s / (mismatches.len() - 1) as f64)
}

/// Rescaled energy measure μ_ε = e_ε/|log ε| per vertex; with
/// `pi_normalized` the denominator is π|log ε|.
pub fn measure_field(state: &State, epsilon: f64, pi_normalized: bool) -> Result<FormField> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(GlbError::Parameter(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    let mut dens = energy_density(state, epsilon)?;
    let mut denom = epsilon.ln().abs();
    if pi_normalized {
        denom *= std::f64::consts::PI;
    }
    for v in dens.values_mut() {
        *v /= denom;
    }
    Ok(dens)
}

/// Centers on the vortex line: the per-z-slice argmin of |u| at `count`
/// evenly spaced slices (n = 3), or the global argmin (n = 2).
pub fn online_centers(state: &State, count: usize) -> Vec<usize> {
    let lat = state.lattice().clone();
    let ns = lat.num_sites();
    if lat.dim() == 2 {
        let mut best = 0;
        for v in 1..ns {
            if state.u[v].norm() < state.u[best].norm() {
                best = v;
            }
        }
        return vec![best];
    }
    let nz = lat.sizes()[2];
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let z = (k * nz) / count.max(1);
        let mut best = usize::MAX;
        let mut bestv = f64::INFINITY;
        for v in 0..ns {
            if lat.site_coord(v, 2) == z {
                let m = state.u[v].norm();
                if m < bestv {
                    bestv = m;
                    best = v;
                }
            }
        }
        out.push(best);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{gauge_transform, make_reference_connection, State};
    use crate::lattice::build_lattice;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_state(n: usize, sz: usize, d: i64, seed: u64) -> State {
        let lat = build_lattice(n, &vec![sz; n], &vec![1.0; n]).unwrap();
        let conn = Arc::new(make_reference_connection(&lat, d));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<Complex64> = (0..lat.num_sites())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut a = FormField::zeros(&lat, 1);
        for v in a.values_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        State::new(&conn, u, a)
    }

    fn vacuum(n: usize, sz: usize) -> State {
        let lat = build_lattice(n, &vec![sz; n], &vec![1.0; n]).unwrap();
        let conn = Arc::new(make_reference_connection(&lat, 0));
        let u = vec![Complex64::new(1.0, 0.0); lat.num_sites()];
        State::new(&conn, u, FormField::zeros(&lat, 1))
    }

    #[test]
    fn prejacobian_vacuum_zero() {
        let st = vacuum(2, 8);
        assert_eq!(prejacobian(&st).norm_inf(), 0.0);
        let field = jacobian(&st);
        assert_eq!(field.jj.norm_inf(), 0.0);
    }

    #[test]
    fn prejacobian_real_positive_zero() {
        let lat = build_lattice(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let conn = Arc::new(make_reference_connection(&lat, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<Complex64> = (0..lat.num_sites())
            .map(|_| Complex64::new(rng.gen_range(0.1..1.0), 0.0))
            .collect();
        let st = State::new(&conn, u, FormField::zeros(&lat, 1));
        assert_eq!(prejacobian(&st).norm_inf(), 0.0);
    }

    #[test]
    fn prejacobian_gauge_invariant() {
        let st = random_state(2, 8, 1, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let chi: Vec<f64> = (0..st.lattice().num_sites())
            .map(|_| rng.gen_range(-3.0..3.0))
            .collect();
        let j1 = prejacobian(&st);
        let j2 = prejacobian(&gauge_transform(&st, &chi));
        for (a, b) in j1.values().iter().zip(j2.values()) {
            assert!((a - b).abs() < 1e-13 * j1.norm_inf().max(1.0));
        }
    }

    #[test]
    fn prejacobian_edge_bound() {
        let st = random_state(2, 8, 2, 7);
        let j = prejacobian(&st);
        let du = covariant_derivative(&st);
        let ns = st.lattice().num_sites();
        for e in 0..st.lattice().cell_count(1) {
            let tail = e % ns;
            let bound = st.u[tail].norm() * du[e].norm();
            assert!(j.values()[e].abs() <= bound + 1e-14 * bound.max(1.0));
        }
    }

    #[test]
    fn quantization_2d_random() {
        for d in [-3i64, -1, 0, 2, 3] {
            let st = random_state(2, 8, d, (100 + d) as u64);
            let sums = jacobian_slice_sums(&jacobian(&st));
            let expect = std::f64::consts::PI * d as f64;
            assert!(
                (sums[0] - expect).abs() < 1e-11,
                "d={d}: got {} expect {expect}",
                sums[0]
            );
        }
    }

    #[test]
    fn quantization_3d_per_slice() {
        let st = random_state(3, 6, 2, 9);
        let sums = jacobian_slice_sums(&jacobian(&st));
        assert_eq!(sums.len(), 6);
        for s in sums {
            assert!((s - 2.0 * std::f64::consts::PI).abs() < 1e-11);
        }
    }

    #[test]
    fn vortex_vacuum_empty() {
        let st = vacuum(2, 8);
        let rep = vortex_set(&st, 0.5).unwrap();
        assert!(rep.cells.is_empty());
        assert_eq!(rep.components, 0);
    }

    #[test]
    fn vortex_threshold_validation() {
        let st = vacuum(2, 8);
        assert!(vortex_set(&st, 1.5).is_err());
        assert!(vortex_set(&st, 0.0).is_err());
    }

    #[test]
    fn vortex_two_clusters() {
        let mut st = vacuum(2, 16);
        let lat = st.lattice().clone();
        // two separated periodic clusters, one wrapping the boundary
        for c in [[0usize, 0usize], [15, 0], [0, 15]] {
            st.u[lat.site_of_coords(&c)] = Complex64::new(0.1, 0.0);
        }
        for c in [[8usize, 8usize], [8, 9]] {
            st.u[lat.site_of_coords(&c)] = Complex64::new(0.1, 0.0);
        }
        let rep = vortex_set(&st, 0.5).unwrap();
        assert_eq!(rep.cells.len(), 5);
        assert_eq!(rep.components, 2);
    }

    #[test]
    fn radial_profile_uniform_density() {
        // u ≡ 0, trivial bundle: density is the constant 1/(4ε²)
        let lat = build_lattice(3, &[32, 32, 32], &[1.0, 1.0, 1.0]).unwrap();
        let conn = Arc::new(make_reference_connection(&lat, 0));
        let st = State::new(
            &conn,
            vec![Complex64::new(0.0, 0.0); lat.num_sites()],
            FormField::zeros(&lat, 1),
        );
        let eps = 0.1;
        let radii = [0.125, 0.15625, 0.1875, 0.25];
        let p = radial_profile(&st, eps, 0, &radii).unwrap();
        assert_eq!(p.violation, 0.0);
        for i in 0..radii.len() - 1 {
            assert!(p.e[i + 1] >= p.e[i]);
            assert_eq!(p.e[i] + p.shell_e[i], p.e[i + 1]); // bit-exact
            assert!(p.f[i + 1] > p.f[i]); // f ∝ ρ² for uniform density
        }
        // f(ρ) ≈ c·vol(B_ρ)/ρ with c = 1/(4ε²)
        let c = 1.0 / (4.0 * eps * eps);
        let rho = radii[3];
        let expect = c * (4.0 / 3.0) * std::f64::consts::PI * rho.powi(3) / rho;
        assert!((p.f[3] - expect).abs() / expect < 0.1, "f = {} vs {expect}", p.f[3]);
    }

    #[test]
    fn radial_profile_matches_ball_energy() {
        let st = random_state(2, 32, 1, 11);
        let eps = 0.2;
        let radii = [0.125, 0.25];
        let p = radial_profile(&st, eps, 3, &radii).unwrap();
        // direct ball-energy oracle at the largest radius
        let terms = energy_terms_by_distance(&st, eps, 3);
        let direct: f64 = terms.iter().filter(|t| t.0 < 0.25).map(|t| t.3).sum();
        assert!((p.e[1] - direct).abs() < 1e-12 * direct.max(1.0));
        assert!(p.e[1] >= p.e[0]);
    }

    #[test]
    fn radial_profile_range_errors() {
        let st = vacuum(2, 16);
        assert!(radial_profile(&st, 0.1, 0, &[0.5]).is_err()); // > L/4
        assert!(radial_profile(&st, 0.1, 0, &[0.1, 0.1]).is_err()); // not increasing
        assert!(radial_profile(&st, 0.1, 0, &[]).is_err());
    }

    #[test]
    fn clearing_vacuum_passes() {
        let st = vacuum(3, 32);
        let rep = clearing_probe(&st, 0.05, &[0, 7, 100], 0.25, 0.1).unwrap();
        for e in &rep.entries {
            assert!(e.pass);
            assert!(e.hypothesis);
            assert_eq!(e.mass_ratio, 0.0);
            assert!(e.min_u >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn clearing_range_errors() {
        let st = vacuum(3, 32);
        assert!(clearing_probe(&st, 0.05, &[0], 0.5, 0.1).is_err()); // R > L/4
        assert!(clearing_probe(&st, 0.3, &[0], 0.25, 0.1).is_err()); // eps ≥ R
    }

    #[test]
    fn curvature_decay_vacuum_degenerate() {
        let st = vacuum(2, 64);
        let radii = [0.0625, 0.125, 0.25];
        let d = curvature_decay_probe(&st, 0, &radii).unwrap();
        assert!(d.degenerate);
    }

    #[test]
    fn curvature_decay_uniform() {
        // reference connection alone: |F| ≡ const, so mass ∝ vol(B_r) ~ r^n
        for (n, sz) in [(2usize, 32usize), (3, 32)] {
            let lat = build_lattice(n, &vec![sz; n], &vec![1.0; n]).unwrap();
            let conn = Arc::new(make_reference_connection(&lat, 1));
            let st = State::new(
                &conn,
                vec![Complex64::new(1.0, 0.0); lat.num_sites()],
                FormField::zeros(&lat, 1),
            );
            let radii = [0.125, 0.1767766952966369, 0.25];
            let d = curvature_decay_probe(&st, 0, &radii).unwrap();
            let q = d.fit.unwrap().slope;
            assert!((q - n as f64).abs() < 0.1, "n={n} q={q}");
        }
    }

    #[test]
    fn decomposition_real_positive_exact() {
        let lat = build_lattice(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let conn = Arc::new(make_reference_connection(&lat, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u: Vec<Complex64> = (0..lat.num_sites())
            .map(|_| Complex64::new(rng.gen_range(0.2..1.0), 0.0))
            .collect();
        let st = State::new(&conn, u, FormField::zeros(&lat, 1));
        let chk = decomposition_check(&st);
        assert!(!chk.degenerate);
        assert_eq!(chk.max_mismatch, 0.0);
    }

    #[test]
    fn decomposition_zero_degenerate() {
        let lat = build_lattice(2, &[8, 8], &[1.0, 1.0]).unwrap();
        let conn = Arc::new(make_reference_connection(&lat, 0));
        let st = State::new(
            &conn,
            vec![Complex64::new(0.0, 0.0); lat.num_sites()],
            FormField::zeros(&lat, 1),
        );
        assert!(decomposition_check(&st).degenerate);
    }

    fn smooth_state(nside: usize) -> State {
        let lat = build_lattice(2, &[nside, nside], &[1.0, 1.0]).unwrap();
        let conn = Arc::new(make_reference_connection(&lat, 0));
        let tau = std::f64::consts::TAU;
        let h = lat.spacing();
        let u: Vec<Complex64> = (0..lat.num_sites())
            .map(|v| {
                let x = lat.site_coord(v, 0) as f64 * h;
                let y = lat.site_coord(v, 1) as f64 * h;
                let m = 0.7 + 0.25 * (tau * x).cos() * (tau * y).sin();
                Complex64::from_polar(m, (tau * (x + 2.0 * y)).sin())
            })
            .collect();
        let mut a = FormField::zeros(&lat, 1);
        let ns = lat.num_sites();
        for v in 0..ns {
            let x = lat.site_coord(v, 0) as f64 * h;
            let y = lat.site_coord(v, 1) as f64 * h;
            a.values_mut()[v] = 0.4 * (tau * y).cos();
            a.values_mut()[ns + v] = 0.3 * (tau * x).sin();
        }
        State::new(&conn, u, a)
    }

    #[test]
    fn decomposition_refinement_first_order() {
        let mismatches: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| decomposition_check(&smooth_state(n)).max_mismatch)
            .collect();
        let slope = decomposition_refinement_slope(&mismatches).unwrap();
        assert!(slope >= 0.9, "slope {slope} from {mismatches:?}");
    }

    #[test]
    fn measure_field_contract() {
        let st = vacuum(2, 8);
        let m = measure_field(&st, 0.1, false).unwrap();
        assert_eq!(m.norm_inf(), 0.0);
        assert!(measure_field(&st, 1.0, false).is_err());
        assert!(measure_field(&st, -0.5, false).is_err());

        let st = random_state(2, 8, 1, 15);
        let eps = 0.1;
        let m = measure_field(&st, eps, false).unwrap();
        let mpi = measure_field(&st, eps, true).unwrap();
        let w = st.lattice().cell_weight();
        let total: f64 = m.values().iter().sum::<f64>() * w;
        let expect = crate::energy::energy(&st, eps).unwrap().total / eps.ln().abs();
        assert!((total - expect).abs() < 1e-12 * expect);
        // π-normalized variant is exactly the default divided by π
        for (a, b) in m.values().iter().zip(mpi.values()) {
            assert!((a / std::f64::consts::PI - b).abs() < 1e-15 * a.abs().max(1.0));
        }
        // block additivity over an 8-way split of the vertex list
        let vals = m.values();
        let mut block_total = 0.0;
        for chunk in vals.chunks(vals.len() / 8) {
            block_total += chunk.iter().sum::<f64>();
        }
        assert!((block_total * w - total).abs() < 1e-12 * total.abs());
    }
}
