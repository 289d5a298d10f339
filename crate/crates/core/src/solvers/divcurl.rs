//! Reconstruction of `z̃ = ∇⊥φ + y* + λ π₂ z₀` on `Ω₁` from a prescribed curl.

use super::poisson::DirichletSolver;
use crate::error::Result;
use crate::fields::{curl2d, extend_pi_vec, perp_grad, Lattice, ScalarField, VectorField};
use crate::geometry::{DomainSpec, ReturnProfile};

/// Precomputed pieces of the reconstruction for one initial datum `z₀`.
pub struct DivCurl {
    pub omega1: Lattice,
    /// `π₂ z₀` on the full lattice.
    pub ext: VectorField,
    /// `curl2d(π₂ z₀)` on the full lattice.
    pub curl_ext: ScalarField,
    ext1: VectorField,
    curl_ext1: ScalarField,
    solver: DirichletSolver,
}

impl DivCurl {
    /// `z0` lives on the `Ω` lattice, `full` is the `Ω₃` lattice.
    pub fn new(z0: &VectorField, full: &Lattice, domain: &DomainSpec) -> Result<Self> {
        let ext = extend_pi_vec(z0, full, domain)?;
        let curl_ext = curl2d(&ext);
        let o1 = domain.omega1();
        let ext1 = ext.restrict(&o1)?;
        let curl_ext1 = curl_ext.restrict(&o1)?;
        let omega1 = ext1.lattice();
        Ok(DivCurl {
            omega1,
            solver: DirichletSolver::new(omega1)?,
            ext,
            curl_ext,
            ext1,
            curl_ext1,
        })
    }

    /// `curl2d(π₂ z₀)` restricted to `Ω₁`.
    pub fn curl_on_omega1(&self) -> &ScalarField {
        &self.curl_ext1
    }

    /// `z̃(·,t)` on `Ω₁` for the curl `j` (on the `Ω₁` lattice).
    pub fn reconstruct(&self, j: &ScalarField, t: f64, profile: &ReturnProfile) -> Result<VectorField> {
        let lam = profile.lambda(t);
        let rhs = if lam == 0.0 {
            j.clone()
        } else {
            j.zip_with(&self.curl_ext1, |a, b| a - lam * b)
        };
        let phi = self.solver.solve(&rhs)?;
        let mut z = perp_grad(&phi);
        let g = profile.gamma(t);
        let l = self.omega1;
        for jj in 0..l.ny {
            for i in 0..l.nx {
                let k = l.idx(i, jj);
                let y = if g == 0.0 { 0.0 } else { g * profile.chi(l.node(i, jj)) };
                z.x.data[k] += y + lam * self.ext1.x.data[k];
                z.y.data[k] += lam * self.ext1.y.data[k];
            }
        }
        Ok(z)
    }
}

/// One-shot form of [`DivCurl::reconstruct`].
pub fn div_curl_reconstruct(
    j: &ScalarField,
    z0: &VectorField,
    t: f64,
    profile: &ReturnProfile,
    full: &Lattice,
) -> Result<VectorField> {
    DivCurl::new(z0, full, &profile.domain)?.reconstruct(j, t, profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::div2d;
    use crate::geometry::{build_domains, GridSpec};

    fn setup(h: f64) -> (ReturnProfile, Lattice, Lattice) {
        let d = build_domains(2.0, 1.0, 0.5).unwrap();
        let g = GridSpec::with_spacing(&d, h, 8).unwrap();
        let full = Lattice::from_grid(&g);
        let (_, _, om) = full.sub(&d.omega()).unwrap();
        (ReturnProfile::new(d, 7.5, 0.1).unwrap(), full, om)
    }

    #[test]
    fn zero_curl_and_data_give_the_return_field() {
        let (p, full, om) = setup(1.0 / 16.0);
        let dc = DivCurl::new(&VectorField::zeros(om), &full, &p.domain).unwrap();
        let z = dc.reconstruct(&ScalarField::zeros(dc.omega1), 0.5, &p).unwrap();
        assert!(z.x.data.iter().all(|v| *v == 7.5));
        assert_eq!(z.y.max_abs(), 0.0);
        let z1 = dc.reconstruct(&ScalarField::zeros(dc.omega1), 1.0, &p).unwrap();
        assert_eq!(z1.max_abs(), 0.0);
    }

    #[test]
    fn curl_is_matched_to_second_order() {
        let mut errs = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let (p, full, om) = setup(h);
            let dc = DivCurl::new(&VectorField::zeros(om), &full, &p.domain).unwrap();
            let j = ScalarField::from_fn(dc.omega1, |x| (2.0 * x[0]).sin() * (3.0 * x[1]).cos() + x[1]);
            let z = dc.reconstruct(&j, 0.7, &p).unwrap();
            let c = curl2d(&z);
            let l = dc.omega1;
            let mut e: f64 = 0.0;
            // corner singularities of φ spoil the rate near ∂Ω₁
            let inner = l.bounds().inflate(-0.25);
            for jj in 0..l.ny {
                for i in 0..l.nx {
                    if inner.contains(l.node(i, jj), 1e-12) {
                        e = e.max((c.at(i, jj) - j.at(i, jj)).abs());
                    }
                }
            }
            errs.push(e);
        }
        assert!(errs[2] < errs[0] / 8.0, "{errs:?}");
    }

    #[test]
    fn walls_are_tangent_and_divergence_small() {
        let (p, full, om) = setup(1.0 / 32.0);
        let z0 = VectorField::from_fn(om, |x| {
            let s = std::f64::consts::PI;
            [(s * x[1]).cos() * x[0], -(s * x[1]).sin() / s]
        });
        let dc = DivCurl::new(&z0, &full, &p.domain).unwrap();
        let j = ScalarField::from_fn(dc.omega1, |x| x[0] * x[1]);
        let z = dc.reconstruct(&j, 0.15, &p).unwrap();
        assert!(z.wall_normal_max() < 1e-15);
        let zo = z.restrict(&p.domain.omega()).unwrap();
        assert!(div2d(&zo).max_abs() <= zo.div_tol() + 1e-9);
    }
}
