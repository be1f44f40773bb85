//! Periodic flat-torus geometry and discrete exterior calculus.
//!
//! Cells of degree `k` are indexed as `combo * num_sites + site`, where
//! `combo` enumerates the C(n,k) direction subsets (ascending bitmask
//! order) and `site` is the linear index of the cell's base vertex,
//! `site = x0 + N0*(x1 + N1*x2)`. All neighbour lookups wrap periodically.

mod ball;
mod hodge;
mod poisson;
mod probes;

pub use ball::BallIndex;
pub use hodge::{hodge_decompose, HodgeParts};
pub use poisson::PoissonSolution;
pub use probes::{fit_line, gaffney_probe, green_decay_probe, poincare_probe, GaffneyStats, LineFit};

use crate::error::{GlbError, Result};
use std::sync::Arc;

/// Periodic cubic lattice with enumerated k-cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    n: usize,
    sizes: Vec<usize>,
    lengths: Vec<f64>,
    h: f64,
    strides: Vec<usize>,
    num_sites: usize,
    /// combos[k][ci] = sorted direction set of the ci-th k-cell family.
    combos: Vec<Vec<Vec<usize>>>,
    /// For output degree k+1: per output combo, (input combo, direction, sign).
    d_stencil: Vec<Vec<Vec<(usize, usize, f64)>>>,
    /// For input degree k: per output combo of degree k-1, (input combo, direction, sign).
    codiff_stencil: Vec<Vec<Vec<(usize, usize, f64)>>>,
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut c = 1usize;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c
}

/// Build a lattice for `n` in {2,3} with equal spacing on all axes.
pub fn build_lattice(n: usize, sizes: &[usize], lengths: &[f64]) -> Result<Arc<Lattice>> {
    if n != 2 && n != 3 {
        return Err(GlbError::Config(format!("dimension must be 2 or 3, got {n}")));
    }
    if sizes.len() != n || lengths.len() != n {
        return Err(GlbError::Config(format!(
            "expected {n} sizes and lengths, got {} and {}",
            sizes.len(),
            lengths.len()
        )));
    }
    for &s in sizes {
        if s < 4 {
            return Err(GlbError::Config(format!("axis size {s} < 4")));
        }
    }
    for &l in lengths {
        if !(l > 0.0) {
            return Err(GlbError::Config(format!("axis length {l} must be positive")));
        }
    }
    let h = lengths[0] / sizes[0] as f64;
    for i in 1..n {
        let hi = lengths[i] / sizes[i] as f64;
        if (hi - h).abs() > 1e-12 * h {
            return Err(GlbError::Config(format!(
                "anisotropic spacing: h0 = {h}, h{i} = {hi}"
            )));
        }
    }

    let mut strides = vec![1usize; n];
    for i in 1..n {
        strides[i] = strides[i - 1] * sizes[i - 1];
    }
    let num_sites: usize = sizes.iter().product();

    // Direction subsets in ascending bitmask order (lexicographic by sorted dirs).
    let mut combos: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n + 1];
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones() as usize;
        let dirs: Vec<usize> = (0..n).filter(|d| mask & (1 << d) != 0).collect();
        combos[k].push(dirs);
    }
    let combo_index = |k: usize, dirs: &[usize], combos: &Vec<Vec<Vec<usize>>>| -> usize {
        combos[k].iter().position(|c| c == dirs).unwrap()
    };

    // d: output degree k+1 from degree k.
    let mut d_stencil = vec![Vec::new(); n + 1];
    for k in 0..n {
        let mut per_out = Vec::new();
        for out in &combos[k + 1] {
            let mut entries = Vec::new();
            for (p, &dir) in out.iter().enumerate() {
                let sub: Vec<usize> = out.iter().copied().filter(|&d| d != dir).collect();
                let ci = combo_index(k, &sub, &combos);
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                entries.push((ci, dir, sign));
            }
            per_out.push(entries);
        }
        d_stencil[k] = per_out;
    }

    // codiff: output degree k-1 from degree k (formal adjoint of d).
    let mut codiff_stencil = vec![Vec::new(); n + 1];
    for k in 1..=n {
        let mut per_out = Vec::new();
        for out in &combos[k - 1] {
            let mut entries = Vec::new();
            for dir in 0..n {
                if out.contains(&dir) {
                    continue;
                }
                let mut sup = out.clone();
                sup.push(dir);
                sup.sort_unstable();
                let p = sup.iter().position(|&d| d == dir).unwrap();
                let ci = combo_index(k, &sup, &combos);
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                entries.push((ci, dir, sign));
            }
            per_out.push(entries);
        }
        codiff_stencil[k] = per_out;
    }

    Ok(Arc::new(Lattice {
        n,
        sizes: sizes.to_vec(),
        lengths: lengths.to_vec(),
        h,
        strides,
        num_sites,
        combos,
        d_stencil,
        codiff_stencil,
    }))
}

impl Lattice {
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    pub fn num_sites(&self) -> usize {
        self.num_sites
    }
    pub fn min_length(&self) -> f64 {
        self.lengths.iter().cloned().fold(f64::INFINITY, f64::min)
    }
    /// Torus volume.
    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }
    /// Cell volume weight used by the discrete L^2 inner product.
    pub fn cell_weight(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    pub fn cell_count(&self, k: usize) -> usize {
        binomial(self.n, k) * self.num_sites
    }
    pub fn num_combos(&self, k: usize) -> usize {
        binomial(self.n, k)
    }
    pub fn combo_dirs(&self, k: usize, ci: usize) -> &[usize] {
        &self.combos[k][ci]
    }

    pub fn site_coord(&self, site: usize, axis: usize) -> usize {
        (site / self.strides[axis]) % self.sizes[axis]
    }
    pub fn site_of_coords(&self, coords: &[usize]) -> usize {
        let mut s = 0;
        for i in 0..self.n {
            s += (coords[i] % self.sizes[i]) * self.strides[i];
        }
        s
    }
    /// Periodic shift of a site by one step along `axis`.
    #[inline]
    pub fn shift(&self, site: usize, axis: usize, delta: i64) -> usize {
        let nn = self.sizes[axis];
        let st = self.strides[axis];
        let c = (site / st) % nn;
        let nc = (c as i64 + delta).rem_euclid(nn as i64) as usize;
        site + nc * st - c * st
    }

    /// Decompose a cell id of degree k into (combo index, site).
    pub fn cell_split(&self, _k: usize, cell: usize) -> (usize, usize) {
        (cell / self.num_sites, cell % self.num_sites)
    }
    pub fn cell_id(&self, _k: usize, combo: usize, site: usize) -> usize {
        combo * self.num_sites + site
    }

    /// Barycenter of a cell in physical coordinates.
    pub fn cell_barycenter(&self, k: usize, cell: usize) -> Vec<f64> {
        let (ci, site) = self.cell_split(k, cell);
        let dirs = &self.combos[k][ci];
        let mut x = vec![0.0; self.n];
        for a in 0..self.n {
            x[a] = self.site_coord(site, a) as f64 * self.h;
            if dirs.contains(&a) {
                x[a] += 0.5 * self.h;
            }
        }
        x
    }

    /// Periodic (minimum-image) distance between two points.
    pub fn periodic_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let l = self.lengths[i];
            let mut d = (a[i] - b[i]).abs() % l;
            if d > 0.5 * l {
                d = l - d;
            }
            s += d * d;
        }
        s.sqrt()
    }

    /// Minimum-image displacement b - a per axis.
    pub fn periodic_delta(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let l = self.lengths[i];
            let mut d = (b[i] - a[i]) % l;
            if d > 0.5 * l {
                d -= l;
            }
            if d < -0.5 * l {
                d += l;
            }
            out[i] = d;
        }
        out
    }

    /// Coboundary into a caller-provided slice; `src` has degree `k`.
    pub fn d_into(&self, k: usize, src: &[f64], dst: &mut [f64]) {
        debug_assert!(k < self.n);
        debug_assert_eq!(src.len(), self.cell_count(k));
        debug_assert_eq!(dst.len(), self.cell_count(k + 1));
        dst.fill(0.0);
        let ns = self.num_sites;
        let inv_h = 1.0 / self.h;
        for (co, entries) in self.d_stencil[k].iter().enumerate() {
            let out = &mut dst[co * ns..(co + 1) * ns];
            for &(ci, dir, sign) in entries {
                let inp = &src[ci * ns..(ci + 1) * ns];
                let sh = sign * inv_h;
                for site in 0..ns {
                    let up = self.shift(site, dir, 1);
                    out[site] += sh * (inp[up] - inp[site]);
                }
            }
        }
    }

    /// Codifferential into a caller-provided slice; `src` has degree `k`.
    pub fn codiff_into(&self, k: usize, src: &[f64], dst: &mut [f64]) {
        debug_assert!(k >= 1);
        debug_assert_eq!(src.len(), self.cell_count(k));
        debug_assert_eq!(dst.len(), self.cell_count(k - 1));
        dst.fill(0.0);
        let ns = self.num_sites;
        let inv_h = 1.0 / self.h;
        for (co, entries) in self.codiff_stencil[k].iter().enumerate() {
            let out = &mut dst[co * ns..(co + 1) * ns];
            for &(ci, dir, sign) in entries {
                let inp = &src[ci * ns..(ci + 1) * ns];
                let sh = sign * inv_h;
                for site in 0..ns {
                    let dn = self.shift(site, dir, -1);
                    out[site] += sh * (inp[dn] - inp[site]);
                }
            }
        }
    }

    /// Hodge Laplacian -Δ = dδ + δd into `dst`, with scratch space.
    pub fn laplacian_into(&self, k: usize, src: &[f64], dst: &mut [f64], scratch: &mut Vec<f64>) {
        dst.fill(0.0);
        if k >= 1 {
            scratch.resize(self.cell_count(k - 1), 0.0);
            self.codiff_into(k, src, scratch);
            let mut tmp = vec![0.0; self.cell_count(k)];
            self.d_into(k - 1, scratch, &mut tmp);
            for (d, t) in dst.iter_mut().zip(&tmp) {
                *d += t;
            }
        }
        if k < self.n {
            scratch.resize(self.cell_count(k + 1), 0.0);
            self.d_into(k, src, scratch);
            let mut tmp = vec![0.0; self.cell_count(k)];
            self.codiff_into(k + 1, scratch, &mut tmp);
            for (d, t) in dst.iter_mut().zip(&tmp) {
                *d += t;
            }
        }
    }

    /// Discrete L^2 inner product (weight h^n per cell).
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = self.cell_weight();
        let mut s = 0.0;
        for (x, y) in a.iter().zip(b) {
            s += x * y;
        }
        w * s
    }
    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }
}

/// Real-valued field on the k-cells of a lattice.
#[derive(Debug, Clone)]
pub struct FormField {
    degree: usize,
    values: Vec<f64>,
    lattice: Arc<Lattice>,
}

impl FormField {
    pub fn zeros(lattice: &Arc<Lattice>, degree: usize) -> Self {
        assert!(degree <= lattice.n);
        FormField {
            degree,
            values: vec![0.0; lattice.cell_count(degree)],
            lattice: Arc::clone(lattice),
        }
    }

    pub fn from_values(lattice: &Arc<Lattice>, degree: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), lattice.cell_count(degree));
        FormField {
            degree,
            values,
            lattice: Arc::clone(lattice),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Per-combo means (the harmonic projection on the torus).
    pub fn combo_means(&self) -> Vec<f64> {
        let ns = self.lattice.num_sites;
        let nc = self.lattice.num_combos(self.degree);
        let mut out = vec![0.0; nc];
        for c in 0..nc {
            let mut s = 0.0;
            for site in 0..ns {
                s += self.values[c * ns + site];
            }
            out[c] = s / ns as f64;
        }
        out
    }

    pub fn inner(&self, other: &FormField) -> f64 {
        assert_eq!(self.degree, other.degree);
        self.lattice.inner(&self.values, &other.values)
    }
    pub fn norm(&self) -> f64 {
        self.lattice.norm(&self.values)
    }
    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Exterior differential (forward-difference coboundary divided by h).
pub fn exterior_d(omega: &FormField) -> Result<FormField> {
    let lat = omega.lattice();
    if omega.degree() == lat.dim() {
        return Err(GlbError::Degree(format!(
            "exterior_d undefined on top-degree forms (k = {})",
            omega.degree()
        )));
    }
    let mut out = FormField::zeros(lat, omega.degree() + 1);
    let k = omega.degree();
    let lat = Arc::clone(lat);
    lat.d_into(k, omega.values(), out.values_mut());
    Ok(out)
}

/// Codifferential, the formal adjoint of `exterior_d` in the h^n-weighted inner product.
pub fn codiff(omega: &FormField) -> Result<FormField> {
    let lat = omega.lattice();
    if omega.degree() == 0 {
        return Err(GlbError::Degree("codiff undefined on 0-forms".into()));
    }
    let mut out = FormField::zeros(lat, omega.degree() - 1);
    let k = omega.degree();
    let lat = Arc::clone(lat);
    lat.codiff_into(k, omega.values(), out.values_mut());
    Ok(out)
}

/// Solve -Δτ = rhs - H(rhs) by conjugate gradients; see `PoissonSolution`.
pub fn solve_poisson(rhs: &FormField) -> Result<PoissonSolution> {
    poisson::solve(rhs, 1e-11, 10 * rhs.values().len().max(100))
}

/// Ball/shell indexing around a center vertex.
pub fn ball_index(lattice: &Arc<Lattice>, center: usize, rho: f64) -> Result<BallIndex> {
    ball::build(lattice, center, rho)
}
