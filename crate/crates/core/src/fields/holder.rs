//! Discrete Hölder norms `‖f‖_{m,α,O}`.
//!
//! Derivatives come from the lattice difference operators on the restriction to
//! `O`; the Hölder quotient of the top-order derivatives is maximized over all
//! node pairs closer than `4 max(hx, hy)`.

use serde::Serialize;

use super::ops::{d1, d2};
use super::{ScalarField, VectorField};
use crate::error::{Error, Result};
use crate::geometry::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderEstimate {
    pub m: usize,
    pub alpha: f64,
    pub value: f64,
    /// `Σ_{|β|<=m} max |D^β f|`.
    pub sup_part: f64,
    /// `Σ_{|β|=m}` of the max Hölder quotients.
    pub quotient_part: f64,
}

/// Pair offsets `(di, dj)` in a half plane with `|offset| <= 4 max(hx, hy)`.
pub(crate) fn pair_offsets(hx: f64, hy: f64) -> Vec<(isize, isize, f64)> {
    let r = 4.0 * hx.max(hy) * (1.0 + 1e-12);
    let ri = (r / hx).floor() as isize;
    let rj = (r / hy).floor() as isize;
    let mut out = Vec::new();
    for dj in 0..=rj {
        for di in -ri..=ri {
            if dj == 0 && di <= 0 {
                continue;
            }
            let d = ((di as f64) * hx).hypot((dj as f64) * hy);
            if d <= r {
                out.push((di, dj, d));
            }
        }
    }
    out
}

/// All derivative fields `D^β f` with `|β| = order`, from a table of lower orders.
fn next_order(prev: &[Vec<ScalarField>]) -> Vec<ScalarField> {
    // prev[c][b] holds ∂₁^{order-1-b} ∂₂^{b} of component c
    prev.iter()
        .map(|comp| {
            let mut out: Vec<ScalarField> = comp.iter().map(d1).collect();
            out.push(d2(comp.last().unwrap()));
            out
        })
        .flatten()
        .collect()
}

fn holder_components(comps: &[ScalarField], m: usize, alpha: f64) -> Result<HolderEstimate> {
    if m > 3 {
        return Err(Error::UnsupportedOrder(m));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("Hölder exponent must lie in (0,1], got {alpha}")));
    }
    let nc = comps.len();
    let lat = comps[0].lattice;
    // derivs[c] = list of ∂₁^{o-b}∂₂^b for current order o
    let mut derivs: Vec<Vec<ScalarField>> = comps.iter().map(|c| vec![c.clone()]).collect();
    let norm_at = |fields: &[&ScalarField], k: usize| -> f64 {
        fields.iter().map(|f| f.data[k] * f.data[k]).sum::<f64>().sqrt()
    };
    let mut sup_part = 0.0;
    for order in 0..=m {
        if order > 0 {
            let flat = next_order(&derivs);
            derivs = flat.chunks(order + 1).map(|c| c.to_vec()).collect();
        }
        for b in 0..=order {
            let fields: Vec<&ScalarField> = (0..nc).map(|c| &derivs[c][b]).collect();
            let mx = (0..lat.len()).map(|k| norm_at(&fields, k)).fold(0.0, f64::max);
            sup_part += mx;
        }
    }
    let offsets = pair_offsets(lat.hx, lat.hy);
    let mut quotient_part = 0.0;
    for b in 0..=m {
        let fields: Vec<&ScalarField> = (0..nc).map(|c| &derivs[c][b]).collect();
        let mut q: f64 = 0.0;
        for &(di, dj, dist) in &offsets {
            let inv = dist.powf(-alpha);
            let i_lo = (-di).max(0) as usize;
            let i_hi = (lat.nx as isize - di.max(0)) as usize;
            for j in 0..lat.ny.saturating_sub(dj as usize) {
                let j2 = j + dj as usize;
                for i in i_lo..i_hi {
                    let i2 = (i as isize + di) as usize;
                    let k1 = lat.idx(i, j);
                    let k2 = lat.idx(i2, j2);
                    let diff2: f64 = fields.iter().map(|f| (f.data[k1] - f.data[k2]).powi(2)).sum();
                    q = q.max(diff2.sqrt() * inv);
                }
            }
        }
        quotient_part += q;
    }
    Ok(HolderEstimate {
        m,
        alpha,
        value: sup_part + quotient_part,
        sup_part,
        quotient_part,
    })
}

/// Hölder norm of a scalar field over the nodes in `region`.
pub fn holder_norm(f: &ScalarField, m: usize, alpha: f64, region: &Rect) -> Result<HolderEstimate> {
    let r = f.restrict(region)?;
    holder_components(&[r], m, alpha)
}

/// Hölder norm of a vector field; pointwise values use the Euclidean norm.
pub fn holder_norm_vec(v: &VectorField, m: usize, alpha: f64, region: &Rect) -> Result<HolderEstimate> {
    let r = v.restrict(region)?;
    holder_components(&[r.x, r.y], m, alpha)
}
