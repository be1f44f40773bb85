//! Geodesic (periodic-distance) ball and shell indexing.

use super::Lattice;
use crate::error::{GlbError, Result};
use std::sync::Arc;

/// Interior and shell cell lists of a ball around a center vertex.
///
/// A cell is interior iff its barycenter's periodic distance to the center
/// is strictly below the radius. Shell bucket `b` holds the interior cells
/// with distance in [b·h, (b+1)·h).
#[derive(Debug, Clone)]
pub struct BallIndex {
    pub center: usize,
    pub rho: f64,
    /// interior[k] = interior cell ids of degree k, canonical order.
    pub interior: Vec<Vec<usize>>,
    /// shells[k][bucket] = cell ids of degree k with dist in the bucket.
    pub shells: Vec<Vec<Vec<usize>>>,
}

pub(super) fn build(lattice: &Arc<Lattice>, center: usize, rho: f64) -> Result<BallIndex> {
    let max = 0.5 * lattice.min_length();
    if !(rho > 0.0 && rho < max) {
        return Err(GlbError::Range(format!(
            "ball radius {rho} out of range (0, {max})"
        )));
    }
    let n = lattice.dim();
    let h = lattice.spacing();
    let c: Vec<f64> = (0..n)
        .map(|a| lattice.site_coord(center, a) as f64 * h)
        .collect();
    let nbuckets = (rho / h).ceil() as usize + 1;
    let mut interior = Vec::with_capacity(n + 1);
    let mut shells = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut cells = Vec::new();
        let mut buckets = vec![Vec::new(); nbuckets];
        for cell in 0..lattice.cell_count(k) {
            let b = lattice.cell_barycenter(k, cell);
            let dist = lattice.periodic_dist(&c, &b);
            if dist < rho {
                cells.push(cell);
                buckets[(dist / h) as usize].push(cell);
            }
        }
        interior.push(cells);
        shells.push(buckets);
    }
    Ok(BallIndex {
        center,
        rho,
        interior,
        shells,
    })
}
