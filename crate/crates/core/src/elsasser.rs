//! Elsässer variables `z± = u ± √μ H`, the coupling terms and pressure recovery.

use crate::error::{Error, Result};
use crate::fields::{d1, d2, div2d, ScalarField, VectorField};
use crate::solvers::{poisson_neumann, NeumannData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn other(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElsasserState {
    pub zp: VectorField,
    pub zm: VectorField,
    pub mu: f64,
}

impl ElsasserState {
    pub fn get(&self, s: Sign) -> &VectorField {
        match s {
            Sign::Plus => &self.zp,
            Sign::Minus => &self.zm,
        }
    }
}

pub fn check_mu(mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("permeability must be positive, got {mu}")));
    }
    Ok(mu.sqrt())
}

pub fn to_elsasser(u: &VectorField, h: &VectorField, mu: f64) -> Result<ElsasserState> {
    let s = check_mu(mu)?;
    Ok(ElsasserState {
        zp: u.axpby(1.0, h, s),
        zm: u.axpby(1.0, h, -s),
        mu,
    })
}

/// `(u, H) = ((z⁺+z⁻)/2, (z⁺-z⁻)/(2√μ))`.
pub fn from_elsasser(state: &ElsasserState) -> Result<(VectorField, VectorField)> {
    let s = check_mu(state.mu)?;
    Ok((state.zp.axpby(0.5, &state.zm, 0.5), state.zp.axpby(0.5 / s, &state.zm, -0.5 / s)))
}

struct Jac {
    a11: ScalarField,
    a12: ScalarField,
    a21: ScalarField,
    a22: ScalarField,
}

/// `a_ik = ∂_k v_i`.
fn jac(v: &VectorField) -> Jac {
    Jac {
        a11: d1(&v.x),
        a12: d2(&v.x),
        a21: d1(&v.y),
        a22: d2(&v.y),
    }
}

/// The structured coupling term
///
/// `G± = -(∂₁𝔷∓₁ - ∂₁𝔷±₁) ∂₁(𝔷±₂ - y*₂) - (∂₁𝔷∓₁ - ∂₁𝔷±₁) ∂₂(𝔷±₁ - y*₁)
///       - (∂₁𝔷±₂ - ∂₁𝔷∓₂) ∂₁(𝔷±₁ - y*₁) - (∂₂𝔷±₁ - ∂₂𝔷∓₁) ∂₁(𝔷±₁ - y*₁)`.
#[allow(non_snake_case)]
pub fn coupling_G(zp: &VectorField, zm: &VectorField, ystar: &VectorField, sign: Sign) -> ScalarField {
    let (own, oth) = match sign {
        Sign::Plus => (zp, zm),
        Sign::Minus => (zm, zp),
    };
    let a = jac(own);
    let b = jac(oth);
    let w = jac(&own.sub(ystar));
    let n = a.a11.data.len();
    let mut out = ScalarField::zeros(zp.lattice());
    for k in 0..n {
        let d11 = b.a11.data[k] - a.a11.data[k];
        out.data[k] = -d11 * w.a21.data[k] - d11 * w.a12.data[k]
            - (a.a21.data[k] - b.a21.data[k]) * w.a11.data[k]
            - (a.a12.data[k] - b.a12.data[k]) * w.a11.data[k];
    }
    out
}

/// [`coupling_G`] from the perturbations `w± = 𝔷± - y*` alone; equal to it in exact
/// arithmetic because `y*` cancels in every difference.
#[allow(non_snake_case)]
pub fn coupling_G_perturbation(wp: &VectorField, wm: &VectorField, sign: Sign) -> ScalarField {
    let (own, oth) = match sign {
        Sign::Plus => (wp, wm),
        Sign::Minus => (wm, wp),
    };
    let a = jac(own);
    let b = jac(oth);
    let n = a.a11.data.len();
    let mut out = ScalarField::zeros(wp.lattice());
    for k in 0..n {
        let d11 = b.a11.data[k] - a.a11.data[k];
        out.data[k] = -d11 * a.a21.data[k] - d11 * a.a12.data[k]
            - (a.a21.data[k] - b.a21.data[k]) * a.a11.data[k]
            - (a.a12.data[k] - b.a12.data[k]) * a.a11.data[k];
    }
    out
}

/// The unstructured coupling term
/// `g± = ∂₂z∓₁ ∂₁z±₁ + ∂₂z∓₂ ∂₂z±₁ - ∂₁z∓₁ ∂₁z±₂ - ∂₁z∓₂ ∂₂z±₂`.
pub fn coupling_g_unstructured(zp: &VectorField, zm: &VectorField, sign: Sign) -> ScalarField {
    let (own, oth) = match sign {
        Sign::Plus => (zp, zm),
        Sign::Minus => (zm, zp),
    };
    let a = jac(own);
    let b = jac(oth);
    let n = a.a11.data.len();
    let mut out = ScalarField::zeros(zp.lattice());
    for k in 0..n {
        out.data[k] = b.a12.data[k] * a.a11.data[k] + b.a22.data[k] * a.a12.data[k]
            - b.a11.data[k] * a.a21.data[k]
            - b.a21.data[k] * a.a22.data[k];
    }
    out
}

/// Second-order time derivative of a series with step `dt`: centered inside,
/// one-sided at both ends.
pub fn time_derivative(series: &[VectorField], dt: f64) -> Vec<VectorField> {
    let n = series.len();
    assert!(n >= 3, "need at least three slices");
    (0..n)
        .map(|k| {
            if k == 0 {
                series[0].axpby(-3.0, &series[1], 4.0).axpby(1.0, &series[2], -1.0).scale(0.5 / dt)
            } else if k == n - 1 {
                series[n - 1].axpby(3.0, &series[n - 2], -4.0).axpby(1.0, &series[n - 3], 1.0).scale(0.5 / dt)
            } else {
                series[k + 1].sub(&series[k - 1]).scale(0.5 / dt)
            }
        })
        .collect()
}

/// `(a·∇) b`.
pub fn advect(a: &VectorField, b: &VectorField) -> VectorField {
    let jb = jac(b);
    let n = jb.a11.data.len();
    let mut out = VectorField::zeros(a.lattice());
    for k in 0..n {
        let (a1, a2) = (a.x.data[k], a.y.data[k]);
        out.x.data[k] = a1 * jb.a11.data[k] + a2 * jb.a12.data[k];
        out.y.data[k] = a1 * jb.a21.data[k] + a2 * jb.a22.data[k];
    }
    out
}

/// Outward normal trace `v·n` on the lattice boundary.
pub fn normal_trace(v: &VectorField) -> NeumannData {
    let l = v.lattice();
    NeumannData {
        left: (0..l.ny).map(|j| -v.x.at(0, j)).collect(),
        right: (0..l.ny).map(|j| v.x.at(l.nx - 1, j)).collect(),
        bottom: (0..l.nx).map(|i| -v.y.at(i, 0)).collect(),
        top: (0..l.nx).map(|i| v.y.at(i, l.ny - 1)).collect(),
    }
}

/// Solves `∇P = R` in the least-squares sense: `ΔP = div R`, `∂ₙP = R·n`, zero mean.
pub fn potential_of(r: &VectorField, compat_tol: f64) -> Result<ScalarField> {
    Ok(poisson_neumann(&div2d(r), &normal_trace(r), compat_tol)?.field)
}

/// The induction defect `∂_t H + (u·∇)H - (H·∇)u`.
pub fn induction_defect(u: &VectorField, h: &VectorField, dth: &VectorField) -> VectorField {
    dth.add(&advect(u, h)).sub(&advect(h, u))
}

/// Neumann data of the harmonic corrector:
/// `∂ₙq = -sign(n₁)(∂_t H₁ + (u·∇)H₁ - (H·∇)u₁)` on the vertical walls and
/// `∂ₙq = 0` on the horizontal ones.
pub fn q_corrector_data(u: &VectorField, h: &VectorField, dth: &VectorField) -> NeumannData {
    let r = induction_defect(u, h, dth);
    let l = u.lattice();
    NeumannData {
        // sign(n₁) = -1 on x = 0 and +1 on x = L
        left: (0..l.ny).map(|j| r.x.at(0, j)).collect(),
        right: (0..l.ny).map(|j| -r.x.at(l.nx - 1, j)).collect(),
        bottom: vec![0.0; l.nx],
        top: vec![0.0; l.nx],
    }
}

/// The harmonic corrector: `Δq = 0` with [`q_corrector_data`], zero mean.
pub fn q_corrector(u: &VectorField, h: &VectorField, dth: &VectorField, compat_tol: f64) -> Result<ScalarField> {
    let g = q_corrector_data(u, h, dth);
    Ok(poisson_neumann(&ScalarField::zeros(u.lattice()), &g, compat_tol)?.field)
}

/// Elsässer trajectory on `Ω` sampled at `t_n = t0 + n dt`.
#[derive(Debug, Clone)]
pub struct ElsasserTrajectory {
    pub zp: Vec<VectorField>,
    pub zm: Vec<VectorField>,
    pub mu: f64,
    pub dt: f64,
}

impl ElsasserTrajectory {
    pub fn len(&self) -> usize {
        self.zp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zp.is_empty()
    }

    pub fn get(&self, s: Sign) -> &[VectorField] {
        match s {
            Sign::Plus => &self.zp,
            Sign::Minus => &self.zm,
        }
    }

    pub fn state(&self, n: usize) -> ElsasserState {
        ElsasserState {
            zp: self.zp[n].clone(),
            zm: self.zm[n].clone(),
            mu: self.mu,
        }
    }

    pub fn scale(&self) -> f64 {
        self.zp.iter().chain(&self.zm).fold(0.0, |m, v| m.max(v.max_abs()))
    }
}

#[derive(Debug, Clone)]
pub struct Pressures {
    pub pp: Vec<ScalarField>,
    pub pm: Vec<ScalarField>,
    pub p: Vec<ScalarField>,
    pub q: Vec<ScalarField>,
}

/// `p±` from `∇p± = -∂_t z± - (z∓·∇)z±` per slice, then `p = (p⁺+p⁻)/2` and
/// `q = (p⁺-p⁻)/(2√μ)`; all zero-mean.
pub fn recover_pressures(traj: &ElsasserTrajectory, compat_tol: f64) -> Result<Pressures> {
    let s = check_mu(traj.mu)?;
    let dzp = time_derivative(&traj.zp, traj.dt);
    let dzm = time_derivative(&traj.zm, traj.dt);
    let n = traj.len();
    let mut out = Pressures {
        pp: Vec::with_capacity(n),
        pm: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
    };
    for k in 0..n {
        let rp = dzp[k].add(&advect(&traj.zm[k], &traj.zp[k])).scale(-1.0);
        let rm = dzm[k].add(&advect(&traj.zp[k], &traj.zm[k])).scale(-1.0);
        let pp = potential_of(&rp, compat_tol)?;
        let pm = potential_of(&rm, compat_tol)?;
        out.p.push(pp.zip_with(&pm, |a, b| 0.5 * (a + b)));
        out.q.push(pp.zip_with(&pm, |a, b| 0.5 * (a - b) / s));
        out.pp.push(pp);
        out.pm.push(pm);
    }
    Ok(out)
}
