//! Hermitian line bundle over the lattice torus: reference connection of
//! prescribed degree, sections, gauge fields, gauge transformations,
//! covariant derivative, curvature and Coulomb gauge fixing.
//!
//! Holonomy convention: the total angle on an edge is φ_e = a0_e + h·A_e
//! (reference angle plus h times the dynamical 1-form) and the transport
//! factor from head to tail is e^{-iφ_e}, so the continuum limit of the
//! covariant difference is ∂u - i(a0 + A)u, matching D_A = D_0 - iA.

use crate::error::{GlbError, Result};
use crate::lattice::{codiff, exterior_d, hodge_decompose, FormField, Lattice};
use num_complex::Complex64;
use std::io::{Read, Write};
use std::sync::Arc;

/// Reference metric connection carrying the bundle degree.
///
/// The curvature F0 is constant on xy-plaquettes, 2πd/(Lx·Ly), and zero on
/// plaquettes containing the z direction; the edge angles realize it in a
/// Landau-style gauge with one correction column, with plaquette sums equal
/// to F0·h² modulo 2π.
#[derive(Debug, Clone)]
pub struct RefConnection {
    pub degree: i64,
    /// Holonomy angle per edge (radians).
    pub angles: FormField,
    /// Reference curvature 2-form (units 1/length²).
    pub f0: FormField,
    lattice: Arc<Lattice>,
}

impl RefConnection {
    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }
}

/// Build the reference connection of first Chern number `d` over the (x,y)
/// 2-torus factor.
pub fn make_reference_connection(lattice: &Arc<Lattice>, d: i64) -> RefConnection {
    let n = lattice.dim();
    let ns = lattice.num_sites();
    let (nx, ny) = (lattice.sizes()[0], lattice.sizes()[1]);
    let gamma = 2.0 * std::f64::consts::PI * d as f64 / (nx * ny) as f64;

    let mut angles = FormField::zeros(lattice, 1);
    // y-edges are combo index 1 ({1}); x-edges combo 0 ({0}).
    for site in 0..ns {
        let x = lattice.site_coord(site, 0);
        let y = lattice.site_coord(site, 1);
        angles.values_mut()[ns + site] = gamma * x as f64;
        if x == nx - 1 {
            angles.values_mut()[site] = -gamma * nx as f64 * y as f64;
        }
    }

    let mut f0 = FormField::zeros(lattice, 2);
    let h = lattice.spacing();
    let f_const = gamma / (h * h); // = 2πd / (Lx·Ly)
    for site in 0..ns {
        f0.values_mut()[site] = f_const; // xy-combo is index 0 for n = 2 and 3
    }

    // Construction-time plaquette audit: oriented angle sums reproduce
    // F0·h² modulo 2π on every xy-plaquette.
    if cfg!(debug_assertions) {
        for site in 0..ns {
            let up_x = lattice.shift(site, 0, 1);
            let up_y = lattice.shift(site, 1, 1);
            let s = angles.values()[ns + up_x] - angles.values()[ns + site]
                - (angles.values()[up_y] - angles.values()[site]);
            let twopi = std::f64::consts::TAU;
            let frac = ((s - gamma) / twopi).round() * twopi;
            debug_assert!(
                (s - gamma - frac).abs() < 1e-9,
                "plaquette audit failed at site {site}: {s} vs {gamma}"
            );
        }
    }
    let _ = n;

    RefConnection {
        degree: d,
        angles,
        f0,
        lattice: Arc::clone(lattice),
    }
}

/// A section u on vertices plus a real gauge 1-form A on edges, bound to a
/// reference connection.
#[derive(Debug, Clone)]
pub struct State {
    pub u: Vec<Complex64>,
    pub a: FormField,
    conn: Arc<RefConnection>,
}

impl State {
    pub fn new(conn: &Arc<RefConnection>, u: Vec<Complex64>, a: FormField) -> Self {
        assert_eq!(u.len(), conn.lattice().num_sites());
        assert_eq!(a.degree(), 1);
        State {
            u,
            a,
            conn: Arc::clone(conn),
        }
    }

    pub fn connection(&self) -> &Arc<RefConnection> {
        &self.conn
    }
    pub fn lattice(&self) -> &Arc<Lattice> {
        self.conn.lattice()
    }

    pub fn max_modulus(&self) -> f64 {
        self.u.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
    pub fn min_modulus(&self) -> f64 {
        self.u.iter().fold(f64::INFINITY, |m, z| m.min(z.norm()))
    }

    /// Total edge holonomy angle φ_e.
    #[inline]
    pub fn edge_angle(&self, edge: usize) -> f64 {
        self.conn.angles.values()[edge] + self.lattice().spacing() * self.a.values()[edge]
    }
}

/// Apply the gauge transformation (u, A) -> (e^{iχ}u, A + dχ).
pub fn gauge_transform(state: &State, chi: &[f64]) -> State {
    let lat = state.lattice();
    let ns = lat.num_sites();
    assert_eq!(chi.len(), ns);
    let h = lat.spacing();
    let u: Vec<Complex64> = state
        .u
        .iter()
        .zip(chi)
        .map(|(z, &c)| z * Complex64::from_polar(1.0, c))
        .collect();
    let mut a = state.a.clone();
    for ci in 0..lat.num_combos(1) {
        let dir = lat.combo_dirs(1, ci)[0];
        for site in 0..ns {
            let head = lat.shift(site, dir, 1);
            a.values_mut()[ci * ns + site] += (chi[head] - chi[site]) / h;
        }
    }
    State::new(&state.conn, u, a)
}

/// Per-edge covariant difference (e^{-iφ_e} u_head - u_tail) / h.
pub fn covariant_derivative(state: &State) -> Vec<Complex64> {
    let lat = state.lattice();
    let ns = lat.num_sites();
    let h = lat.spacing();
    let mut out = vec![Complex64::new(0.0, 0.0); lat.cell_count(1)];
    for ci in 0..lat.num_combos(1) {
        let dir = lat.combo_dirs(1, ci)[0];
        for site in 0..ns {
            let e = ci * ns + site;
            let head = lat.shift(site, dir, 1);
            let phi = state.edge_angle(e);
            out[e] = (Complex64::from_polar(1.0, -phi) * state.u[head] - state.u[site]) / h;
        }
    }
    out
}

/// Curvature 2-form F = F0 + dA; gauge-invariant, dF = 0 exactly.
pub fn curvature(state: &State) -> FormField {
    let da = exterior_d(&state.a).expect("1-form in dimension >= 2");
    let mut f = state.conn.f0.clone();
    for (fv, dv) in f.values_mut().iter_mut().zip(da.values()) {
        *fv += dv;
    }
    f
}

/// Report from Coulomb gauge fixing.
#[derive(Debug, Clone)]
pub struct CoulombReport {
    pub delta_a_inf: f64,
    pub zeta_inf: f64,
    pub solver_residual: f64,
}

/// Gauge-fix to Coulomb gauge: remove the exact part of A by a gauge
/// transformation with χ = -(exact potential).
pub fn coulomb_fix(state: &State) -> Result<(State, CoulombReport)> {
    let parts = hodge_decompose(&state.a)?;
    let chi: Vec<f64> = parts.chi.values().iter().map(|v| -v).collect();
    let fixed = gauge_transform(state, &chi);
    let del = codiff(&fixed.a)?;
    let report = CoulombReport {
        delta_a_inf: del.norm_inf(),
        zeta_inf: parts.zeta.iter().fold(0.0f64, |m, z| m.max(z.abs())),
        solver_residual: del.norm() / state.a.norm().max(1e-300),
    };
    Ok((fixed, report))
}

/// Per-z-slice sum of an xy-plaquette field times h² (n = 3), or the global
/// sum (n = 2). Used for topological charge checks.
pub fn xy_flux_per_slice(f: &FormField) -> Vec<f64> {
    let lat = f.lattice().clone();
    let h2 = lat.spacing() * lat.spacing();
    let ns = lat.num_sites();
    if lat.dim() == 2 {
        let total: f64 = f.values()[..ns].iter().sum();
        return vec![total * h2];
    }
    let nz = lat.sizes()[2];
    let mut out = vec![0.0; nz];
    for site in 0..ns {
        let z = lat.site_coord(site, 2);
        out[z] += f.values()[site]; // combo 0 = {x,y}
    }
    for v in out.iter_mut() {
        *v *= h2;
    }
    out
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"GLB1";

/// Write a state snapshot: magic "GLB1", then n, N_i, L_i, d, ε as
/// little-endian 64-bit values, then u (re/im interleaved) and A as
/// little-endian f64 in canonical enumeration order.
pub fn write_snapshot<W: Write>(w: &mut W, state: &State, epsilon: f64) -> Result<()> {
    let lat = state.lattice();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(lat.dim() as u64).to_le_bytes())?;
    for &s in lat.sizes() {
        w.write_all(&(s as u64).to_le_bytes())?;
    }
    for &l in lat.lengths() {
        w.write_all(&l.to_le_bytes())?;
    }
    w.write_all(&state.conn.degree.to_le_bytes())?;
    w.write_all(&epsilon.to_le_bytes())?;
    for z in &state.u {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    for &v in state.a.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a snapshot written by [`write_snapshot`]; rebuilds the lattice and
/// reference connection.
pub fn read_snapshot<R: Read>(r: &mut R) -> Result<(State, f64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(GlbError::Snapshot("bad magic".into()));
    }
    let mut buf8 = [0u8; 8];
    let mut read_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut buf8)?;
        Ok(u64::from_le_bytes(buf8))
    };
    let n = read_u64(r)? as usize;
    if n != 2 && n != 3 {
        return Err(GlbError::Snapshot(format!("bad dimension {n}")));
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        sizes.push(u64::from_le_bytes(b) as usize);
    }
    let mut lengths = Vec::with_capacity(n);
    for _ in 0..n {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        lengths.push(f64::from_le_bytes(b));
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let d = i64::from_le_bytes(b);
    r.read_exact(&mut b)?;
    let epsilon = f64::from_le_bytes(b);

    let lattice = crate::lattice::build_lattice(n, &sizes, &lengths)?;
    let conn = Arc::new(make_reference_connection(&lattice, d));
    let ns = lattice.num_sites();
    let mut u = Vec::with_capacity(ns);
    for _ in 0..ns {
        r.read_exact(&mut b)?;
        let re = f64::from_le_bytes(b);
        r.read_exact(&mut b)?;
        let im = f64::from_le_bytes(b);
        u.push(Complex64::new(re, im));
    }
    let mut a = FormField::zeros(&lattice, 1);
    for i in 0..lattice.cell_count(1) {
        r.read_exact(&mut b)?;
        a.values_mut()[i] = f64::from_le_bytes(b);
    }
    Ok((State::new(&conn, u, a), epsilon))
}
