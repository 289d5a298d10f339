//! Second-order finite differences: centered inside, one-sided at the lattice edges.

use super::{ScalarField, VectorField};

fn diff_line(src: &[f64], stride: usize, n: usize, h: f64, out: &mut [f64]) {
    let inv2h = 0.5 / h;
    let v = |k: usize| src[k * stride];
    out[0] = (-3.0 * v(0) + 4.0 * v(1) - v(2)) * inv2h;
    for k in 1..n - 1 {
        out[k * stride] = (v(k + 1) - v(k - 1)) * inv2h;
    }
    out[(n - 1) * stride] = (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) * inv2h;
}

/// `∂₁ f`.
pub fn d1(f: &ScalarField) -> ScalarField {
    let l = f.lattice;
    assert!(l.nx >= 3, "need at least 3 nodes per line");
    let mut out = ScalarField::zeros(l);
    for j in 0..l.ny {
        let r = j * l.nx;
        diff_line(&f.data[r..r + l.nx], 1, l.nx, l.hx, &mut out.data[r..r + l.nx]);
    }
    out
}

/// `∂₂ f`.
pub fn d2(f: &ScalarField) -> ScalarField {
    let l = f.lattice;
    assert!(l.ny >= 3, "need at least 3 nodes per line");
    let mut out = ScalarField::zeros(l);
    for i in 0..l.nx {
        diff_line(&f.data[i..], l.nx, l.ny, l.hy, &mut out.data[i..]);
    }
    out
}

pub fn curl2d(v: &VectorField) -> ScalarField {
    d1(&v.y).sub(&d2(&v.x))
}

pub fn div2d(v: &VectorField) -> ScalarField {
    d1(&v.x).add(&d2(&v.y))
}

pub fn grad(f: &ScalarField) -> VectorField {
    VectorField { x: d1(f), y: d2(f) }
}

/// `∇⊥ f = (∂₂ f, -∂₁ f)`.
pub fn perp_grad(f: &ScalarField) -> VectorField {
    VectorField {
        x: d2(f),
        y: d1(f).scale(-1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Lattice;

    fn lat(n: usize) -> Lattice {
        let h = 1.0 / (n - 1) as f64;
        Lattice {
            nx: 2 * n - 1,
            ny: n,
            hx: h,
            hy: h,
            x0: -0.3,
            y0: 0.1,
        }
    }

    #[test]
    fn rotation_field_has_curl_two_and_no_divergence() {
        let v = VectorField::from_fn(lat(17), |p| [-p[1], p[0]]);
        assert!(curl2d(&v).data.iter().all(|c| (c - 2.0).abs() <= 1e-12));
        assert!(div2d(&v).max_abs() <= 1e-12);
    }

    #[test]
    fn perp_grad_of_product() {
        let l = lat(17);
        let f = ScalarField::from_fn(l, |p| p[0] * p[1]);
        let g = perp_grad(&f);
        for j in 0..l.ny {
            for i in 0..l.nx {
                let p = l.node(i, j);
                assert!((g.x.at(i, j) - p[0]).abs() < 1e-12);
                assert!((g.y.at(i, j) + p[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn div_of_perp_grad_vanishes() {
        let f = ScalarField::from_fn(lat(33), |p| (3.0 * p[0]).sin() * (2.0 * p[1]).cos() + p[0].powi(3));
        assert!(div2d(&perp_grad(&f)).max_abs() <= 1e-10);
    }

    #[test]
    fn curl_of_grad_is_second_order() {
        let mut errs = Vec::new();
        for n in [17, 33, 65] {
            let f = ScalarField::from_fn(lat(n), |p| (3.0 * p[0]).sin() * (2.0 * p[1]).cos());
            errs.push(curl2d(&grad(&f)).max_abs());
        }
        // operators along different axes commute, so this is exact up to rounding
        assert!(errs.iter().all(|e| *e < 1e-9), "{errs:?}");
    }

    #[test]
    fn one_sided_edges_are_second_order() {
        let mut errs = Vec::new();
        for n in [17, 33, 65] {
            let l = lat(n);
            let f = ScalarField::from_fn(l, |p| (2.0 * p[0]).exp());
            let d = d1(&f);
            let e = (0..l.ny)
                .map(|j| (d.at(0, j) - 2.0 * (2.0 * l.node(0, j)[0]).exp()).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "{errs:?}");
        }
    }
}
