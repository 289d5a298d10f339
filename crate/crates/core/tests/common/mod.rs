//! Manufactured solutions shared by the convergence and acceptance tests.

use std::f64::consts::PI;

use duct_control::fields::{Lattice, ScalarField};
use duct_control::flow::{FlowMap, FnField};
use duct_control::solvers::{poisson_neumann, transport_solve, DirichletSolver, NeumannData};

/// Spatial resolutions `1/n` of the refinement ladder.
pub const LEVELS: [usize; 4] = [16, 32, 64, 128];

pub fn orders(errs: &[f64]) -> Vec<f64> {
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// `Ω₁`-shaped lattice `(-0.25, 2.25) × (0, 1)`.
fn omega1(n: usize) -> Lattice {
    Lattice {
        nx: 5 * n / 2 + 1,
        ny: n + 1,
        hx: 1.0 / n as f64,
        hy: 1.0 / n as f64,
        x0: -0.25,
        y0: 0.0,
    }
}

fn omega(n: usize) -> Lattice {
    Lattice {
        nx: 2 * n + 1,
        ny: n + 1,
        hx: 1.0 / n as f64,
        hy: 1.0 / n as f64,
        x0: 0.0,
        y0: 0.0,
    }
}

/// Max error of the Dirichlet solve for `φ = sin(πξ) sin(πy) eˣ`.
pub fn dirichlet_error(n: usize) -> f64 {
    let l = omega1(n);
    let exact = ScalarField::from_fn(l, |p| {
        let xi = (p[0] + 0.25) / 2.5;
        (PI * xi).sin() * (PI * p[1]).sin() * p[0].exp()
    });
    let rhs = ScalarField::from_fn(l, |p| {
        let (xi, k) = ((p[0] + 0.25) / 2.5, PI / 2.5);
        let (s, c) = ((PI * xi).sin(), (PI * xi).cos());
        let sy = (PI * p[1]).sin();
        let e = p[0].exp();
        let phi_xx = e * sy * (s - k * k * s + 2.0 * k * c);
        let phi_yy = -PI * PI * s * sy * e;
        -(phi_xx + phi_yy)
    });
    let phi = DirichletSolver::new(l).unwrap().solve(&rhs).unwrap();
    phi.sub(&exact).max_abs()
}

/// Max error (mean removed) of the Neumann solve on `Ω`.
pub fn neumann_error(n: usize) -> f64 {
    let q = |p: [f64; 2]| (PI * p[0] / 2.0).cos() * (1.0 + p[1] * p[1]) + (3.0 * p[1]).sin() * p[0];
    let grad = |p: [f64; 2]| {
        [
            -PI / 2.0 * (PI * p[0] / 2.0).sin() * (1.0 + p[1] * p[1]) + (3.0 * p[1]).sin(),
            2.0 * p[1] * (PI * p[0] / 2.0).cos() + 3.0 * (3.0 * p[1]).cos() * p[0],
        ]
    };
    let lap = |p: [f64; 2]| {
        -(PI / 2.0).powi(2) * (PI * p[0] / 2.0).cos() * (1.0 + p[1] * p[1]) + 2.0 * (PI * p[0] / 2.0).cos()
            - 9.0 * (3.0 * p[1]).sin() * p[0]
    };
    let l = omega(n);
    let sol = poisson_neumann(&ScalarField::from_fn(l, lap), &NeumannData::from_gradient(&l, grad), 1.0).unwrap();
    let mut exact = ScalarField::from_fn(l, q);
    let m = exact.mean();
    exact.data.iter_mut().for_each(|v| *v -= m);
    sol.field.sub(&exact).max_abs()
}

/// Max error over all levels of a forced transport solve on the unit square with
/// a wall-tangent velocity, `nt = 4n`.
pub fn transport_error(n: usize) -> f64 {
    // z = ∇⊥ψ with ψ = a sin²(πx) sin²(πy)
    let a = 0.15;
    let z = move |p: [f64; 2], t: f64| {
        let (sx, cx, sy, cy) = ((PI * p[0]).sin(), (PI * p[0]).cos(), (PI * p[1]).sin(), (PI * p[1]).cos());
        let s = a * (1.0 + 0.5 * t);
        [2.0 * PI * s * sx * sx * sy * cy, -2.0 * PI * s * sx * cx * sy * sy]
    };
    let j = |p: [f64; 2], t: f64| (PI * p[0] + 0.5 * t).cos() * (PI * p[1]).cos();
    let g = move |p: [f64; 2], t: f64| {
        let ph = PI * p[0] + 0.5 * t;
        let jt = -0.5 * ph.sin() * (PI * p[1]).cos();
        let jx = -PI * ph.sin() * (PI * p[1]).cos();
        let jy = -PI * ph.cos() * (PI * p[1]).sin();
        let v = z(p, t);
        jt + v[0] * jx + v[1] * jy
    };
    let l = Lattice {
        nx: n + 1,
        ny: n + 1,
        hx: 1.0 / n as f64,
        hy: 1.0 / n as f64,
        x0: 0.0,
        y0: 0.0,
    };
    // fixed Courant number about 0.35
    let nt = 4 * n;
    let field = FnField(z);
    let map = FlowMap::new(&field, 0.25 / nt as f64, l.bounds(), l.h());
    let src: Vec<ScalarField> = (0..=nt)
        .map(|k| {
            let t = k as f64 / nt as f64;
            ScalarField::from_fn(l, |p| g(p, t))
        })
        .collect();
    let sol = transport_solve(&ScalarField::from_fn(l, |p| j(p, 0.0)), &map, Some(&src), nt).unwrap();
    sol.iter()
        .enumerate()
        .map(|(k, s)| s.sub(&ScalarField::from_fn(l, |p| j(p, k as f64 / nt as f64))).max_abs())
        .fold(0.0, f64::max)
}
