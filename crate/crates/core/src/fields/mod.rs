//! Grid-sampled scalar and vector fields and the operators acting on them.

mod extension;
mod holder;
mod interp;
mod ops;
mod snapshot;

pub use extension::{extend_pi, extend_pi_vec, extension_reach, measure_extension_norm, REFLECTION_COEFFS};
pub use holder::{holder_norm, holder_norm_vec, HolderEstimate};
pub use interp::{Bicubic, Stencil};
pub use ops::{curl2d, d1, d2, div2d, grad, perp_grad};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Point, Rect};

/// Uniform node lattice: `nx * ny` nodes at `(x0 + i hx, y0 + j hy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Lattice {
    pub fn from_grid(grid: &GridSpec) -> Self {
        Lattice {
            nx: grid.nx + 1,
            ny: grid.ny + 1,
            hx: grid.hx,
            hy: grid.hy,
            x0: grid.x0,
            y0: grid.y0,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        [self.x0 + i as f64 * self.hx, self.y0 + j as f64 * self.hy]
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(
            self.x0,
            self.x0 + (self.nx - 1) as f64 * self.hx,
            self.y0,
            self.y0 + (self.ny - 1) as f64 * self.hy,
        )
    }

    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| self.node(i, j)))
    }

    /// Index offsets and sub-lattice for the nodes of `self` lying in `rect`.
    /// The rectangle edges must fall on grid lines.
    pub fn sub(&self, rect: &Rect) -> Result<(usize, usize, Lattice)> {
        let fi = |x: f64, x0: f64, h: f64| (x - x0) / h;
        let a = fi(rect.x0, self.x0, self.hx);
        let b = fi(rect.x1, self.x0, self.hx);
        let c = fi(rect.y0, self.y0, self.hy);
        let d = fi(rect.y1, self.y0, self.hy);
        let aligned = [a, b, c, d].iter().all(|v| (v - v.round()).abs() < 1e-7);
        if !aligned {
            return Err(Error::UnsupportedDomain(format!("rectangle {rect:?} is not aligned with the lattice")));
        }
        let (i0, i1, j0, j1) = (a.round(), b.round(), c.round(), d.round());
        if i0 < 0.0 || j0 < 0.0 || i1 > (self.nx - 1) as f64 || j1 > (self.ny - 1) as f64 || i1 <= i0 || j1 <= j0 {
            return Err(Error::UnsupportedDomain(format!("rectangle {rect:?} exceeds the lattice")));
        }
        let (i0, i1, j0, j1) = (i0 as usize, i1 as usize, j0 as usize, j1 as usize);
        Ok((
            i0,
            j0,
            Lattice {
                nx: i1 - i0 + 1,
                ny: j1 - j0 + 1,
                hx: self.hx,
                hy: self.hy,
                x0: self.x0 + i0 as f64 * self.hx,
                y0: self.y0 + j0 as f64 * self.hy,
            },
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub lattice: Lattice,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(lattice: Lattice) -> Self {
        ScalarField {
            lattice,
            data: vec![0.0; lattice.len()],
        }
    }

    pub fn from_fn<F: Fn(Point) -> f64>(lattice: Lattice, f: F) -> Self {
        let data = lattice.nodes().map(f).collect();
        ScalarField { lattice, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.lattice.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.lattice.idx(i, j);
        self.data[k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            lattice: self.lattice,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.lattice.len(), other.lattice.len());
        ScalarField {
            lattice: self.lattice,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// Restriction to the nodes inside `rect`.
    pub fn restrict(&self, rect: &Rect) -> Result<ScalarField> {
        let (i0, j0, sub) = self.lattice.sub(rect)?;
        let mut data = Vec::with_capacity(sub.len());
        for j in 0..sub.ny {
            let row = (j0 + j) * self.lattice.nx + i0;
            data.extend_from_slice(&self.data[row..row + sub.nx]);
        }
        Ok(ScalarField { lattice: sub, data })
    }

    /// Max-norm over the nodes inside `rect`.
    pub fn max_abs_in(&self, rect: &Rect) -> f64 {
        let l = &self.lattice;
        let mut m: f64 = 0.0;
        for j in 0..l.ny {
            for i in 0..l.nx {
                if rect.contains(l.node(i, j), 1e-9 * l.h()) {
                    m = m.max(self.at(i, j).abs());
                }
            }
        }
        m
    }

    /// Trapezoid-weighted integral over the lattice rectangle.
    pub fn integral(&self) -> f64 {
        let l = &self.lattice;
        let mut s = 0.0;
        for j in 0..l.ny {
            let wy = if j == 0 || j == l.ny - 1 { 0.5 } else { 1.0 };
            for i in 0..l.nx {
                let wx = if i == 0 || i == l.nx - 1 { 0.5 } else { 1.0 };
                s += wx * wy * self.at(i, j);
            }
        }
        s * l.hx * l.hy
    }

    pub fn mean(&self) -> f64 {
        let b = self.lattice.bounds();
        self.integral() / (b.width() * b.height())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(lattice: Lattice) -> Self {
        VectorField {
            x: ScalarField::zeros(lattice),
            y: ScalarField::zeros(lattice),
        }
    }

    pub fn from_fn<F: Fn(Point) -> Point>(lattice: Lattice, f: F) -> Self {
        let vals: Vec<Point> = lattice.nodes().map(f).collect();
        VectorField {
            x: ScalarField {
                lattice,
                data: vals.iter().map(|v| v[0]).collect(),
            },
            y: ScalarField {
                lattice,
                data: vals.iter().map(|v| v[1]).collect(),
            },
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.x.lattice
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Point {
        [self.x.at(i, j), self.y.at(i, j)]
    }

    /// Max over nodes of the Euclidean norm.
    pub fn max_abs(&self) -> f64 {
        self.x
            .data
            .iter()
            .zip(&self.y.data)
            .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scale(&self, a: f64) -> Self {
        VectorField {
            x: self.x.scale(a),
            y: self.y.scale(a),
        }
    }

    pub fn add(&self, o: &VectorField) -> Self {
        VectorField {
            x: self.x.add(&o.x),
            y: self.y.add(&o.y),
        }
    }

    pub fn sub(&self, o: &VectorField) -> Self {
        VectorField {
            x: self.x.sub(&o.x),
            y: self.y.sub(&o.y),
        }
    }

    /// `a * self + b * o`.
    pub fn axpby(&self, a: f64, o: &VectorField, b: f64) -> Self {
        VectorField {
            x: self.x.zip_with(&o.x, |u, v| a * u + b * v),
            y: self.y.zip_with(&o.y, |u, v| a * u + b * v),
        }
    }

    pub fn restrict(&self, rect: &Rect) -> Result<VectorField> {
        Ok(VectorField {
            x: self.x.restrict(rect)?,
            y: self.y.restrict(rect)?,
        })
    }

    /// Discrete divergence-free flag threshold `10 h² ‖v‖∞`.
    pub fn div_tol(&self) -> f64 {
        let h = self.lattice().h();
        10.0 * h * h * self.max_abs()
    }

    /// `(interior, edge)` maxima of `|div v|`. Interior nodes use centered
    /// differences only; edge nodes see the one-sided stencils.
    pub fn div_split(&self) -> (f64, f64) {
        let d = ops::div2d(self);
        let l = d.lattice;
        let (mut inner, mut edge) = (0.0f64, 0.0f64);
        for j in 0..l.ny {
            for i in 0..l.nx {
                let a = d.at(i, j).abs();
                if i == 0 || j == 0 || i == l.nx - 1 || j == l.ny - 1 {
                    edge = edge.max(a);
                } else {
                    inner = inner.max(a);
                }
            }
        }
        (inner, edge)
    }

    /// Max of `|v·n|` over nodes on the top and bottom rows.
    pub fn wall_normal_max(&self) -> f64 {
        let l = self.lattice();
        (0..l.nx)
            .map(|i| self.y.at(i, 0).abs().max(self.y.at(i, l.ny - 1).abs()))
            .fold(0.0, f64::max)
    }
}

/// Writes `src` into the sub-block of `dst` whose lower-left node is `(i0, j0)`.
pub fn embed(dst: &mut ScalarField, src: &ScalarField, i0: usize, j0: usize) {
    for j in 0..src.lattice.ny {
        for i in 0..src.lattice.nx {
            dst.set(i0 + i, j0 + j, src.at(i, j));
        }
    }
}
