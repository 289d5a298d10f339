//! Extension operators `π₁, π₂` from fields on `Ω̄` to fields on `Ω̄₃`.
//!
//! Each face is crossed with the reflection
//! `f(-s) = 10 f(s) - 20 f(2s) + 15 f(3s) - 4 f(4s)`, which matches derivatives up
//! to order 3 at the face, then the result is multiplied by a smooth cutoff that is 1 on `Ω̄`
//! and vanishes at distance `extension_reach` from it.

use super::{holder_norm, Lattice, ScalarField, VectorField};
use crate::error::{Error, Result};
use crate::geometry::{smooth_step, DomainSpec, Rect};

/// Weights of `f(s), ..., f(4s)` in the reflected value `f(-s)`.
pub const REFLECTION_COEFFS: [f64; 4] = [10.0, -20.0, 15.0, -4.0];

/// Distance from `Ω` at which the extension cutoff reaches 0.
pub fn extension_reach(domain: &DomainSpec) -> f64 {
    (0.75 * domain.margin).min(domain.length.min(domain.width) / 4.0)
}

fn cutoff(dist: f64, reach: f64) -> f64 {
    1.0 - smooth_step(dist / reach)
}

/// Integer position of the `Ω` lattice inside the target lattice.
fn offsets(src: &Lattice, dst: &Lattice) -> Result<(usize, usize)> {
    let (i0, j0, sub) = dst.sub(&src.bounds())?;
    if sub.nx != src.nx || sub.ny != src.ny || (sub.hx - src.hx).abs() > 1e-12 || (sub.hy - src.hy).abs() > 1e-12 {
        return Err(Error::UnsupportedDomain("source lattice is not a sub-lattice of the target".into()));
    }
    Ok((i0, j0))
}

/// Extends one line of `n + 1` samples to the index range `-lo..=n + hi`.
/// Indices whose reflection needs samples beyond the line are left at 0;
/// the caller only keeps indices inside the cutoff reach.
fn extend_line(v: &[f64], lo: usize, hi: usize, keep: usize) -> Vec<f64> {
    let n = v.len() - 1;
    let mut out = vec![0.0; lo + n + 1 + hi];
    out[lo..lo + n + 1].copy_from_slice(v);
    let [c1, c2, c3, c4] = REFLECTION_COEFFS;
    for s in 1..=lo.min(keep) {
        if 4 * s <= n {
            out[lo - s] = c1 * v[s] + c2 * v[2 * s] + c3 * v[3 * s] + c4 * v[4 * s];
        }
    }
    for s in 1..=hi.min(keep) {
        if 4 * s <= n {
            out[lo + n + s] = c1 * v[n - s] + c2 * v[n - 2 * s] + c3 * v[n - 3 * s] + c4 * v[n - 4 * s];
        }
    }
    out
}

/// Scalar extension `π₁ f` sampled on `target`. `f` must live on the `Ω` lattice.
pub fn extend_pi(f: &ScalarField, target: &Lattice, domain: &DomainSpec) -> Result<ScalarField> {
    let src = f.lattice;
    let (i0, j0) = offsets(&src, target)?;
    let reach = extension_reach(domain);
    let keep_x = (reach / src.hx).ceil() as usize;
    let keep_y = (reach / src.hy).ceil() as usize;
    let (lo_x, hi_x) = (i0, target.nx - i0 - src.nx);
    let (lo_y, hi_y) = (j0, target.ny - j0 - src.ny);

    // rows of Ω extended across x
    let rows: Vec<Vec<f64>> = (0..src.ny)
        .map(|j| extend_line(&f.data[j * src.nx..(j + 1) * src.nx], lo_x, hi_x, keep_x))
        .collect();
    let omega = src.bounds();
    let wx: Vec<f64> = (0..target.nx)
        .map(|i| {
            let x = target.node(i, 0)[0];
            cutoff((omega.x0 - x).max(x - omega.x1).max(0.0), reach)
        })
        .collect();
    let wy: Vec<f64> = (0..target.ny)
        .map(|j| {
            let y = target.node(0, j)[1];
            cutoff((omega.y0 - y).max(y - omega.y1).max(0.0), reach)
        })
        .collect();

    let mut out = ScalarField::zeros(*target);
    let mut col = vec![0.0; src.ny];
    for i in 0..target.nx {
        if wx[i] == 0.0 {
            continue;
        }
        for (j, c) in col.iter_mut().enumerate() {
            *c = rows[j][i];
        }
        let ext = extend_line(&col, lo_y, hi_y, keep_y);
        for j in 0..target.ny {
            if wy[j] == 0.0 {
                continue;
            }
            // inside Ω both weights are exactly 1
            out.set(i, j, wx[i] * wy[j] * ext[j]);
        }
    }
    Ok(out)
}

/// Componentwise extension `π₂ v`.
pub fn extend_pi_vec(v: &VectorField, target: &Lattice, domain: &DomainSpec) -> Result<VectorField> {
    Ok(VectorField {
        x: extend_pi(&v.x, target, domain)?,
        y: extend_pi(&v.y, target, domain)?,
    })
}

fn probes(omega: Rect) -> Vec<Box<dyn Fn([f64; 2]) -> f64>> {
    let (l, w) = (omega.width(), omega.height());
    let pi = std::f64::consts::PI;
    vec![
        Box::new(|_| 1.0),
        Box::new(move |p| p[0] / l),
        Box::new(move |p| p[1] / w),
        Box::new(move |p| (pi * p[0] / l).cos() * (pi * p[1] / w).sin()),
        Box::new(move |p| (2.0 * pi * p[0] / l).sin() * (pi * p[1] / w).cos()),
        Box::new(move |p| (p[0] / l) * (p[1] / w) * (1.0 - p[1] / w)),
        Box::new(move |p| (-((p[0] - 0.3 * l).powi(2) + (p[1] - 0.6 * w).powi(2))).exp()),
        Box::new(move |p| (p[0] / l).powi(3) - (p[1] / w).powi(2)),
    ]
}

/// Empirical operator constant: the largest ratio
/// `‖π f‖_{m,α,Ω₃} / ‖f‖_{m,α,Ω}` over a fixed set of smooth probes.
pub fn measure_extension_norm(domain: &DomainSpec, target: &Lattice, m: usize, alpha: f64) -> Result<f64> {
    let omega = domain.omega();
    let (i0, j0, sub) = target.sub(&omega)?;
    let _ = (i0, j0);
    let o3 = target.bounds();
    let mut worst: f64 = 0.0;
    for f in probes(omega) {
        let base = ScalarField::from_fn(sub, &f);
        let ext = extend_pi(&base, target, domain)?;
        let num = holder_norm(&ext, m, alpha, &o3)?.value;
        let den = holder_norm(&base, m, alpha, &omega)?.value;
        worst = worst.max(num / den);
    }
    Ok(worst)
}
