//! Five-point Poisson solvers on lattice rectangles.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fields::{Lattice, ScalarField};
use crate::geometry::Rect;

/// Relative residual demanded from both solvers.
pub const SOLVER_RTOL: f64 = 1e-10;

/// Orthonormal sine basis of the 1D Dirichlet Laplacian on `n - 1` interior nodes.
struct SineBasis {
    m: usize,
    /// `m x m`, symmetric and orthogonal.
    s: Vec<f64>,
    eig: Vec<f64>,
}

impl SineBasis {
    fn new(cells: usize, h: f64) -> Self {
        let m = cells - 1;
        let norm = (2.0 / cells as f64).sqrt();
        let mut s = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                s[a * m + b] = norm * (PI * ((a + 1) * (b + 1)) as f64 / cells as f64).sin();
            }
        }
        let eig = (1..=m)
            .map(|k| (2.0 - 2.0 * (PI * k as f64 / cells as f64).cos()) / (h * h))
            .collect();
        SineBasis { m, s, eig }
    }
}

/// Fast-diagonalization solver for `-Δφ = f`, `φ = 0` on the boundary.
pub struct DirichletSolver {
    lattice: Lattice,
    bx: SineBasis,
    by: SineBasis,
}

impl DirichletSolver {
    pub fn new(lattice: Lattice) -> Result<Self> {
        if lattice.nx < 3 || lattice.ny < 3 {
            return Err(Error::UnsupportedDomain("Dirichlet rectangle needs interior nodes".into()));
        }
        Ok(DirichletSolver {
            bx: SineBasis::new(lattice.nx - 1, lattice.hx),
            by: SineBasis::new(lattice.ny - 1, lattice.hy),
            lattice,
        })
    }

    fn apply_inverse(&self, f: &[f64], out: &mut [f64]) {
        // f, out: interior values, row-major my x mx
        let (mx, my) = (self.bx.m, self.by.m);
        let mut t = vec![0.0; mx * my];
        // t = f Sx (transform along x)
        for j in 0..my {
            let row = &f[j * mx..(j + 1) * mx];
            for b in 0..mx {
                let mut acc = 0.0;
                for a in 0..mx {
                    acc += row[a] * self.bx.s[a * mx + b];
                }
                t[j * mx + b] = acc;
            }
        }
        // u = Sy t, divided by eigenvalues
        let mut u = vec![0.0; mx * my];
        for k in 0..my {
            for j in 0..my {
                let w = self.by.s[k * my + j];
                if w == 0.0 {
                    continue;
                }
                let src = &t[j * mx..(j + 1) * mx];
                let dst = &mut u[k * mx..(k + 1) * mx];
                for b in 0..mx {
                    dst[b] += w * src[b];
                }
            }
            for b in 0..mx {
                u[k * mx + b] /= self.bx.eig[b] + self.by.eig[k];
            }
        }
        // back: out = Sy u Sx
        let mut v = vec![0.0; mx * my];
        for j in 0..my {
            for k in 0..my {
                let w = self.by.s[j * my + k];
                let src = &u[k * mx..(k + 1) * mx];
                let dst = &mut v[j * mx..(j + 1) * mx];
                for b in 0..mx {
                    dst[b] += w * src[b];
                }
            }
        }
        for j in 0..my {
            let row = &v[j * mx..(j + 1) * mx];
            for a in 0..mx {
                let mut acc = 0.0;
                for b in 0..mx {
                    acc += self.bx.s[a * mx + b] * row[b];
                }
                out[j * mx + a] = acc;
            }
        }
    }

    fn residual(&self, phi: &[f64], f: &[f64], r: &mut [f64]) {
        let (mx, my) = (self.bx.m, self.by.m);
        let (ix, iy) = (1.0 / (self.lattice.hx * self.lattice.hx), 1.0 / (self.lattice.hy * self.lattice.hy));
        let at = |a: isize, b: isize| -> f64 {
            if a < 0 || b < 0 || a >= mx as isize || b >= my as isize {
                0.0
            } else {
                phi[b as usize * mx + a as usize]
            }
        };
        for j in 0..my {
            for i in 0..mx {
                let (a, b) = (i as isize, j as isize);
                let c = at(a, b);
                let lap = (2.0 * c - at(a - 1, b) - at(a + 1, b)) * ix + (2.0 * c - at(a, b - 1) - at(a, b + 1)) * iy;
                r[j * mx + i] = f[j * mx + i] - lap;
            }
        }
    }

    /// Solves `-Δφ = rhs` with homogeneous Dirichlet data; boundary values of `rhs` are ignored.
    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField> {
        let l = self.lattice;
        if rhs.lattice.nx != l.nx || rhs.lattice.ny != l.ny {
            return Err(Error::UnsupportedDomain("right-hand side lives on a different lattice".into()));
        }
        let (mx, my) = (self.bx.m, self.by.m);
        let mut f = vec![0.0; mx * my];
        for j in 0..my {
            for i in 0..mx {
                f[j * mx + i] = rhs.at(i + 1, j + 1);
            }
        }
        let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut out = ScalarField::zeros(l);
        if fmax == 0.0 {
            return Ok(out);
        }
        let mut phi = vec![0.0; mx * my];
        self.apply_inverse(&f, &mut phi);
        let mut r = vec![0.0; mx * my];
        let mut corr = vec![0.0; mx * my];
        let mut rmax = f64::INFINITY;
        for _ in 0..3 {
            self.residual(&phi, &f, &mut r);
            rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if rmax <= SOLVER_RTOL * fmax {
                break;
            }
            self.apply_inverse(&r, &mut corr);
            phi.iter_mut().zip(&corr).for_each(|(p, c)| *p += c);
        }
        if rmax > SOLVER_RTOL * fmax {
            return Err(Error::SolverStalled {
                iters: 3,
                residual: rmax / fmax,
            });
        }
        for j in 0..my {
            for i in 0..mx {
                out.set(i + 1, j + 1, phi[j * mx + i]);
            }
        }
        Ok(out)
    }
}

/// `-Δφ = rhs` on the lattice rectangle `region` with `φ = 0` on its boundary.
/// `rhs` may live on a larger lattice; the result lives on the sub-lattice of `region`.
pub fn poisson_dirichlet(rhs: &ScalarField, region: &Rect) -> Result<ScalarField> {
    let r = rhs.restrict(region)?;
    DirichletSolver::new(r.lattice)?.solve(&r)
}

/// Outward normal derivatives on the four edges of a lattice rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannData {
    /// `x = x0`, indexed by `j`.
    pub left: Vec<f64>,
    /// `x = x1`, indexed by `j`.
    pub right: Vec<f64>,
    /// `y = y0`, indexed by `i`.
    pub bottom: Vec<f64>,
    /// `y = y1`, indexed by `i`.
    pub top: Vec<f64>,
}

impl NeumannData {
    pub fn zeros(l: &Lattice) -> Self {
        NeumannData {
            left: vec![0.0; l.ny],
            right: vec![0.0; l.ny],
            bottom: vec![0.0; l.nx],
            top: vec![0.0; l.nx],
        }
    }

    /// Outward normal derivatives `∇f·n` of an analytic gradient.
    pub fn from_gradient(l: &Lattice, g: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        NeumannData {
            left: (0..l.ny).map(|j| -g(l.node(0, j))[0]).collect(),
            right: (0..l.ny).map(|j| g(l.node(l.nx - 1, j))[0]).collect(),
            bottom: (0..l.nx).map(|i| -g(l.node(i, 0))[1]).collect(),
            top: (0..l.nx).map(|i| g(l.node(i, l.ny - 1))[1]).collect(),
        }
    }

    fn shift(&mut self, c: f64) {
        for v in [&mut self.left, &mut self.right, &mut self.bottom, &mut self.top] {
            v.iter_mut().for_each(|x| *x += c);
        }
    }
}

/// Outcome of a Neumann solve.
#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub field: ScalarField,
    /// Compatibility defect before projection, as an integral over the domain.
    pub defect: f64,
    pub iterations: usize,
    pub residual: f64,
}

fn trap_weight(k: usize, n: usize) -> f64 {
    if k == 0 || k == n - 1 {
        0.5
    } else {
        1.0
    }
}

/// Applies the ghost-node Neumann Laplacian (homogeneous closure) scaled by the
/// trapezoid weights, which makes it symmetric.
fn weighted_laplacian(l: &Lattice, q: &[f64], out: &mut [f64]) {
    let (nx, ny) = (l.nx, l.ny);
    let (ix, iy) = (1.0 / (l.hx * l.hx), 1.0 / (l.hy * l.hy));
    for j in 0..ny {
        let wy = trap_weight(j, ny);
        for i in 0..nx {
            let c = q[j * nx + i];
            let xm = if i == 0 { q[j * nx + 1] } else { q[j * nx + i - 1] };
            let xp = if i == nx - 1 { q[j * nx + nx - 2] } else { q[j * nx + i + 1] };
            let ym = if j == 0 { q[nx + i] } else { q[(j - 1) * nx + i] };
            let yp = if j == ny - 1 { q[(ny - 2) * nx + i] } else { q[(j + 1) * nx + i] };
            let lap = (xm - 2.0 * c + xp) * ix + (ym - 2.0 * c + yp) * iy;
            out[j * nx + i] = wy * trap_weight(i, nx) * lap;
        }
    }
}

/// Contribution of the Neumann data to the boundary rows of `Δq`.
fn boundary_term(l: &Lattice, g: &NeumannData) -> Vec<f64> {
    let (nx, ny) = (l.nx, l.ny);
    let mut b = vec![0.0; nx * ny];
    for j in 0..ny {
        b[j * nx] += 2.0 * g.left[j] / l.hx;
        b[j * nx + nx - 1] += 2.0 * g.right[j] / l.hx;
    }
    for i in 0..nx {
        b[i] += 2.0 * g.bottom[i] / l.hy;
        b[(ny - 1) * nx + i] += 2.0 * g.top[i] / l.hy;
    }
    b
}

fn weighted_sum(l: &Lattice, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..l.ny {
        for i in 0..l.nx {
            s += trap_weight(i, l.nx) * trap_weight(j, l.ny) * v[j * l.nx + i];
        }
    }
    s * l.hx * l.hy
}

/// `Δq = rhs` on the lattice of `rhs` with `∂ₙq = g`, normalized to zero mean.
///
/// The data `g` is shifted by a constant to restore discrete compatibility; a
/// defect larger than `10 compat_tol` before the shift is an error.
pub fn poisson_neumann(rhs: &ScalarField, g: &NeumannData, compat_tol: f64) -> Result<NeumannSolution> {
    let l = rhs.lattice;
    let n = l.len();
    let mut g = g.clone();
    // compatibility: Σ w (rhs - B g) = 0
    let b = boundary_term(&l, &g);
    let defect = weighted_sum(&l, &rhs.data.iter().zip(&b).map(|(r, b)| r - b).collect::<Vec<_>>());
    if defect.abs() > 10.0 * compat_tol {
        return Err(Error::Compatibility {
            defect: defect.abs(),
            limit: 10.0 * compat_tol,
        });
    }
    let unit = NeumannData {
        left: vec![1.0; l.ny],
        right: vec![1.0; l.ny],
        bottom: vec![1.0; l.nx],
        top: vec![1.0; l.nx],
    };
    let per_unit = weighted_sum(&l, &boundary_term(&l, &unit));
    g.shift(defect / per_unit);
    let b = boundary_term(&l, &g);

    // W (Δ_h q) = W (rhs - B g), solved as a positive semidefinite system for -W Δ_h
    let mut f = vec![0.0; n];
    for j in 0..l.ny {
        for i in 0..l.nx {
            let k = j * l.nx + i;
            f[k] = -trap_weight(i, l.nx) * trap_weight(j, l.ny) * (rhs.data[k] - b[k]);
        }
    }
    let fmean = f.iter().sum::<f64>() / n as f64;
    f.iter_mut().for_each(|v| *v -= fmean);
    let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut q = vec![0.0; n];
    let (iterations, residual) = if fnorm == 0.0 {
        (0, 0.0)
    } else {
        cg(&l, &f, &mut q, fnorm)?
    };
    let mut field = ScalarField { lattice: l, data: q };
    let mean = field.mean();
    field.data.iter_mut().for_each(|v| *v -= mean);
    Ok(NeumannSolution {
        field,
        defect,
        iterations,
        residual,
    })
}

fn cg(l: &Lattice, f: &[f64], q: &mut [f64], fnorm: f64) -> Result<(usize, f64)> {
    let n = f.len();
    let apply = |x: &[f64], out: &mut [f64]| {
        weighted_laplacian(l, x, out);
        out.iter_mut().for_each(|v| *v = -*v);
    };
    let project = |v: &mut [f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= m);
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut r = f.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let max_iter = 20 * (l.nx + l.ny) + 200;
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            q[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        project(&mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= 0.1 * SOLVER_RTOL * fnorm {
            // confirm with the true residual
            apply(q, &mut ap);
            let true_r = f.iter().zip(&ap).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / fnorm;
            if true_r <= SOLVER_RTOL {
                return Ok((it, true_r));
            }
        }
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    Err(Error::SolverStalled {
        iters: max_iter,
        residual: rr.sqrt() / fnorm,
    })
}

/// The discrete Neumann operator applied to `q` with data `g`: `Δ_h q` with the
/// ghost-node closure, for residual checks.
pub fn neumann_laplacian(q: &ScalarField, g: &NeumannData) -> ScalarField {
    let l = q.lattice;
    let mut out = vec![0.0; l.len()];
    weighted_laplacian(&l, &q.data, &mut out);
    let b = boundary_term(&l, g);
    for j in 0..l.ny {
        for i in 0..l.nx {
            let k = j * l.nx + i;
            out[k] = out[k] / (trap_weight(i, l.nx) * trap_weight(j, l.ny)) + b[k];
        }
    }
    ScalarField { lattice: l, data: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_lattice(n: usize) -> Lattice {
        // Ω₁-like rectangle 2.5 x 1
        Lattice {
            nx: 5 * n / 2 + 1,
            ny: n + 1,
            hx: 1.0 / n as f64,
            hy: 1.0 / n as f64,
            x0: -0.25,
            y0: 0.0,
        }
    }

    #[test]
    fn dirichlet_manufactured_order_two() {
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let l = rect_lattice(n);
            let b = l.bounds();
            let xi = move |p: [f64; 2]| [(p[0] - b.x0) / b.width(), (p[1] - b.y0) / b.height()];
            let k2 = PI * PI * (1.0 / (b.width() * b.width()) + 1.0 / (b.height() * b.height()));
            let exact = ScalarField::from_fn(l, |p| {
                let x = xi(p);
                (PI * x[0]).sin() * (PI * x[1]).sin()
            });
            let rhs = exact.scale(k2);
            let phi = DirichletSolver::new(l).unwrap().solve(&rhs).unwrap();
            errs.push(phi.sub(&exact).max_abs());
        }
        for w in errs.windows(2) {
            let o = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&o), "{errs:?}");
        }
    }

    #[test]
    fn dirichlet_zero_and_linearity() {
        let l = rect_lattice(16);
        let s = DirichletSolver::new(l).unwrap();
        assert_eq!(s.solve(&ScalarField::zeros(l)).unwrap().max_abs(), 0.0);
        let r1 = ScalarField::from_fn(l, |p| (3.0 * p[0]).sin() + p[1]);
        let r2 = ScalarField::from_fn(l, |p| p[0] * p[1] * p[1]);
        let lhs = s.solve(&r1.scale(2.5).add(&r2)).unwrap();
        let rhs = s.solve(&r1).unwrap().scale(2.5).add(&s.solve(&r2).unwrap());
        assert!(lhs.sub(&rhs).max_abs() < 1e-12);
    }

    #[test]
    fn dirichlet_rejects_misaligned_region() {
        let l = rect_lattice(16);
        let f = ScalarField::zeros(l);
        assert!(matches!(
            poisson_dirichlet(&f, &Rect::new(0.01, 1.0, 0.0, 1.0)),
            Err(Error::UnsupportedDomain(_))
        ));
    }

    fn omega_lattice(n: usize) -> Lattice {
        Lattice {
            nx: 2 * n + 1,
            ny: n + 1,
            hx: 1.0 / n as f64,
            hy: 1.0 / n as f64,
            x0: 0.0,
            y0: 0.0,
        }
    }

    #[test]
    fn neumann_manufactured_order_two() {
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let l = omega_lattice(n);
            let q = |p: [f64; 2]| (PI * p[0] / 2.0).cos() + p[0] * p[0] * p[1] - (2.0 * p[1]).sin();
            let grad = |p: [f64; 2]| {
                [
                    -PI / 2.0 * (PI * p[0] / 2.0).sin() + 2.0 * p[0] * p[1],
                    p[0] * p[0] - 2.0 * (2.0 * p[1]).cos(),
                ]
            };
            let rhs = ScalarField::from_fn(l, |p| -(PI / 2.0).powi(2) * (PI * p[0] / 2.0).cos() + 2.0 * p[1] + 4.0 * (2.0 * p[1]).sin());
            let g = NeumannData::from_gradient(&l, grad);
            let sol = poisson_neumann(&rhs, &g, 1.0).unwrap();
            let mut exact = ScalarField::from_fn(l, q);
            let m = exact.mean();
            exact.data.iter_mut().for_each(|v| *v -= m);
            assert!(sol.field.mean().abs() < 1e-12);
            errs.push(sol.field.sub(&exact).max_abs());
        }
        for w in errs.windows(2) {
            let o = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&o), "{errs:?}");
        }
    }

    #[test]
    fn neumann_zero_data_gives_zero() {
        let l = omega_lattice(8);
        let s = poisson_neumann(&ScalarField::zeros(l), &NeumannData::zeros(&l), 1e-12).unwrap();
        assert_eq!(s.field.max_abs(), 0.0);
    }

    #[test]
    fn neumann_rejects_incompatible_data() {
        let l = omega_lattice(8);
        let rhs = ScalarField::from_fn(l, |_| 1.0);
        assert!(matches!(
            poisson_neumann(&rhs, &NeumannData::zeros(&l), 1e-3),
            Err(Error::Compatibility { .. })
        ));
    }

    #[test]
    fn neumann_residual_is_small() {
        let l = omega_lattice(16);
        let rhs = ScalarField::from_fn(l, |p| (PI * p[0]).cos() * (PI * p[1]).cos());
        let g = NeumannData::zeros(&l);
        let sol = poisson_neumann(&rhs, &g, 1.0).unwrap();
        let r = neumann_laplacian(&sol.field, &g).sub(&rhs);
        assert!(r.max_abs() <= 1e-8 * rhs.max_abs(), "{}", r.max_abs());
    }
}
