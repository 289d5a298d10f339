//! Bicubic (Catmull-Rom) evaluation of lattice fields at arbitrary points.
//!
//! Near the lattice edge the missing stencil node is replaced by quadratic
//! extrapolation, so the interpolant reproduces quadratics everywhere.

use super::{Lattice, ScalarField, VectorField};
use crate::geometry::Point;

/// Precomputed 4x4 stencil for one evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub i0: usize,
    pub j0: usize,
    pub wx: [f64; 4],
    pub wy: [f64; 4],
}

#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[inline]
fn axis(s: f64, n: usize) -> (usize, [f64; 4]) {
    let smax = (n - 1) as f64;
    let s = s.clamp(0.0, smax);
    let mut i = s.floor() as usize;
    if i > n - 2 {
        i = n - 2;
    }
    let w = catmull_rom(s - i as f64);
    if i == 0 {
        // ghost at -1: 3 f0 - 3 f1 + f2
        (0, [w[1] + 3.0 * w[0], w[2] - 3.0 * w[0], w[3] + w[0], 0.0])
    } else if i == n - 2 {
        // ghost at n: 3 f(n-1) - 3 f(n-2) + f(n-3); stencil starts at n-4
        (n - 4, [0.0, w[0] + w[3], w[1] - 3.0 * w[3], w[2] + 3.0 * w[3]])
    } else {
        (i - 1, w)
    }
}

/// Stateless evaluator over one lattice.
#[derive(Debug, Clone, Copy)]
pub struct Bicubic {
    pub lattice: Lattice,
}

impl Bicubic {
    pub fn new(lattice: Lattice) -> Self {
        assert!(lattice.nx >= 4 && lattice.ny >= 4, "bicubic needs at least 4x4 nodes");
        Bicubic { lattice }
    }

    #[inline]
    pub fn stencil(&self, p: Point) -> Stencil {
        let l = &self.lattice;
        let (i0, wx) = axis((p[0] - l.x0) / l.hx, l.nx);
        let (j0, wy) = axis((p[1] - l.y0) / l.hy, l.ny);
        Stencil { i0, j0, wx, wy }
    }

    #[inline]
    pub fn apply(&self, s: &Stencil, data: &[f64]) -> f64 {
        let nx = self.lattice.nx;
        let mut acc = 0.0;
        for (b, wy) in s.wy.iter().enumerate() {
            if *wy == 0.0 {
                continue;
            }
            let row = (s.j0 + b) * nx + s.i0;
            let r = &data[row..row + 4];
            acc += wy * (s.wx[0] * r[0] + s.wx[1] * r[1] + s.wx[2] * r[2] + s.wx[3] * r[3]);
        }
        acc
    }

    pub fn eval(&self, f: &ScalarField, p: Point) -> f64 {
        self.apply(&self.stencil(p), &f.data)
    }

    pub fn eval_vec(&self, v: &VectorField, p: Point) -> Point {
        let s = self.stencil(p);
        [self.apply(&s, &v.x.data), self.apply(&s, &v.y.data)]
    }
}
