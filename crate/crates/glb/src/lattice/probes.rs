//! Empirical inequality probes: Gaffney-type ratio on balls, Green-function
//! decay, Poincaré constants for compactly supported forms.

use super::{ball_index, codiff, exterior_d, solve_poisson, FormField, Lattice};
use crate::error::{GlbError, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Least-squares line fit with coefficient of determination.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LineFit { slope, intercept, r2 }
}

/// Ratio statistics from the Gaffney probe.
#[derive(Debug, Clone)]
pub struct GaffneyStats {
    pub max: f64,
    pub median: f64,
    pub used: usize,
    pub skipped: usize,
}

fn bump(t: f64) -> f64 {
    if t < 1.0 {
        let s = 1.0 - t * t;
        s * s
    } else {
        0.0
    }
}

/// Sample coexact 1-forms ω = δψ supported inside B_ρ and measure
/// ‖ω‖₂(B_ρ) / (ρ‖dω‖₂(B_ρ)). Samples are self-similar in ρ (wavelengths
/// scale with the ball) so the statistic probes radius independence.
pub fn gaffney_probe(
    lattice: &Arc<Lattice>,
    center: usize,
    rho: f64,
    sample_count: usize,
    seed: u64,
) -> Result<GaffneyStats> {
    if sample_count < 1 {
        return Err(GlbError::Parameter("sample_count must be >= 1".into()));
    }
    let idx = ball_index(lattice, center, rho)?;
    let n = lattice.dim();
    let h = lattice.spacing();
    let c: Vec<f64> = (0..n)
        .map(|a| lattice.site_coord(center, a) as f64 * h)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::new();
    let mut skipped = 0usize;

    let support = 0.7 * rho;
    for _ in 0..sample_count {
        let mut psi = FormField::zeros(lattice, 2);
        let ncomp = lattice.num_combos(2);
        // 3 random plane waves per component, wavelength tied to rho
        let mut waves = Vec::new();
        for _ in 0..ncomp {
            let mut comp_waves = Vec::new();
            for _ in 0..3 {
                let amp: f64 = rng.gen_range(-1.0..1.0);
                let kmag = 2.0 * std::f64::consts::PI / rho * rng.gen_range(0.5..2.0);
                let mut kv = vec![0.0; n];
                let mut norm = 0.0;
                for x in kv.iter_mut() {
                    *x = rng.gen_range(-1.0..1.0f64);
                    norm += *x * *x;
                }
                let norm = norm.sqrt().max(1e-9);
                for x in kv.iter_mut() {
                    *x *= kmag / norm;
                }
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                comp_waves.push((amp, kv, phase));
            }
            waves.push(comp_waves);
        }
        let ns = lattice.num_sites();
        for cell in 0..lattice.cell_count(2) {
            let b = lattice.cell_barycenter(2, cell);
            let dist = lattice.periodic_dist(&c, &b);
            if dist >= support {
                continue;
            }
            let delta = lattice.periodic_delta(&c, &b);
            let comp = cell / ns;
            let mut v = 0.0;
            for (amp, kv, phase) in &waves[comp] {
                let arg: f64 = kv.iter().zip(&delta).map(|(k, d)| k * d).sum::<f64>() + phase;
                v += amp * arg.cos();
            }
            psi.values_mut()[cell] = v * bump(dist / support);
        }

        let omega = codiff(&psi)?;
        let domega = exterior_d(&omega)?;
        let w = lattice.cell_weight();
        let mut num = 0.0;
        for &e in &idx.interior[1] {
            num += omega.values()[e] * omega.values()[e];
        }
        let mut den = 0.0;
        for &p in &idx.interior[2] {
            den += domega.values()[p] * domega.values()[p];
        }
        let num = (w * num).sqrt();
        let den = (w * den).sqrt();
        if den < 1e-300 {
            skipped += 1;
            continue;
        }
        ratios.push(num / (rho * den));
    }

    if ratios.is_empty() {
        return Ok(GaffneyStats {
            max: 0.0,
            median: 0.0,
            used: 0,
            skipped,
        });
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let max = *sorted.last().unwrap();
    Ok(GaffneyStats {
        max,
        median,
        used: ratios.len(),
        skipped,
    })
}

/// Green-function decay probe (n = 3 only).
#[derive(Debug, Clone)]
pub struct GreenDecay {
    pub fit: LineFit,
    pub points: usize,
}

/// Solve -Δτ = δ_src - H(δ_src) for a unit point source on k-forms and fit
/// the log-log decay of |τ| over periodic distance in [4h, L/4].
pub fn green_decay_probe(lattice: &Arc<Lattice>, k: usize, source_vertex: usize) -> Result<GreenDecay> {
    if lattice.dim() != 3 {
        return Err(GlbError::Parameter(
            "green_decay_probe requires n = 3 (slope degenerate in 2D)".into(),
        ));
    }
    if k > lattice.dim() {
        return Err(GlbError::Degree(format!("degree {k} out of range")));
    }
    let mut rhs = FormField::zeros(lattice, k);
    let w = lattice.cell_weight();
    rhs.values_mut()[source_vertex] = 1.0 / w; // unit point mass on combo 0
    let sol = solve_poisson(&rhs)?;
    let h = lattice.spacing();
    let src: Vec<f64> = (0..3)
        .map(|a| lattice.site_coord(source_vertex, a) as f64 * h)
        .collect();
    let lo = 4.0 * h;
    let hi = lattice.min_length() / 4.0;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for cell in 0..lattice.cell_count(k) {
        let b = lattice.cell_barycenter(k, cell);
        let dist = lattice.periodic_dist(&src, &b);
        let v = sol.tau.values()[cell].abs();
        if dist >= lo && dist <= hi && v > 1e-300 {
            xs.push(dist.ln());
            ys.push(v.ln());
        }
    }
    if xs.len() < 2 {
        return Err(GlbError::Range("no cells in the fit window".into()));
    }
    Ok(GreenDecay {
        fit: fit_line(&xs, &ys),
        points: xs.len(),
    })
}

/// Poincaré probe: max of ‖ω‖₂ / (R(‖dω‖₂+‖δω‖₂)) over random smooth
/// k-forms vanishing outside B_R.
pub fn poincare_probe(
    lattice: &Arc<Lattice>,
    center: usize,
    radius: f64,
    k: usize,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    if k == 0 || k > lattice.dim() {
        // d and δ must both exist; the probe targets middle degrees
        return Err(GlbError::Degree(format!(
            "poincare probe needs 1 <= k <= n-? got {k}"
        )));
    }
    let n = lattice.dim();
    let h = lattice.spacing();
    let c: Vec<f64> = (0..n)
        .map(|a| lattice.site_coord(center, a) as f64 * h)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = 0.9 * radius;
    let mut cmax: f64 = 0.0;
    for _ in 0..sample_count {
        let mut omega = FormField::zeros(lattice, k);
        let ncomp = lattice.num_combos(k);
        let ns = lattice.num_sites();
        let mut waves = Vec::new();
        for _ in 0..ncomp {
            let mut comp_waves = Vec::new();
            for _ in 0..3 {
                let amp: f64 = rng.gen_range(-1.0..1.0);
                let kmag = 2.0 * std::f64::consts::PI / radius * rng.gen_range(0.5..1.5);
                let mut kv = vec![0.0; n];
                let mut nr = 0.0;
                for x in kv.iter_mut() {
                    *x = rng.gen_range(-1.0..1.0f64);
                    nr += *x * *x;
                }
                let nr = nr.sqrt().max(1e-9);
                for x in kv.iter_mut() {
                    *x *= kmag / nr;
                }
                comp_waves.push((amp, kv, rng.gen_range(0.0..std::f64::consts::TAU)));
            }
            waves.push(comp_waves);
        }
        for cell in 0..lattice.cell_count(k) {
            let b = lattice.cell_barycenter(k, cell);
            let dist = lattice.periodic_dist(&c, &b);
            if dist >= support {
                continue;
            }
            let delta = lattice.periodic_delta(&c, &b);
            let comp = cell / ns;
            let mut v = 0.0;
            for (amp, kv, phase) in &waves[comp] {
                let arg: f64 = kv.iter().zip(&delta).map(|(kk, d)| kk * d).sum::<f64>() + phase;
                v += amp * arg.cos();
            }
            omega.values_mut()[cell] = v * bump(dist / support);
        }
        let mut grad = 0.0;
        if k < n {
            grad += exterior_d(&omega)?.norm();
        }
        grad += codiff(&omega)?.norm();
        if grad < 1e-300 {
            continue;
        }
        cmax = cmax.max(omega.norm() / (radius * grad));
    }
    Ok(cmax)
}
