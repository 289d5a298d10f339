//! Post-hoc checks on stored trajectories: PDE residuals, the energy estimate
//! for two runs, the transport estimate and the composition bound.
//!
//! Every check is a pure function of its inputs and returns a report; the
//! pass/fail decision is recorded in a [`VerifyReport`] table.

use std::fmt::Write as _;

use serde::Serialize;

use crate::elsasser::{
    advect, coupling_g_unstructured, from_elsasser, induction_defect, normal_trace, q_corrector, q_corrector_data,
    time_derivative, ElsasserTrajectory, Pressures, Sign,
};
use crate::error::{Error, Result};
use crate::fields::{curl2d, d1, d2, div2d, grad, holder_norm, holder_norm_vec, Bicubic, Lattice, ScalarField, VectorField};
use crate::flow::{FlowMap, VelocityField};
use crate::geometry::Rect;
use crate::solvers::{neumann_laplacian, poisson_neumann, NeumannData, SOLVER_RTOL};

/// Boundary layers left out of interior residuals; one-sided differences live there.
pub const INTERIOR_LAYERS: usize = 2;

/// `factor (h² + dt²) scale`.
pub fn res_tol(factor: f64, h: f64, dt: f64, scale: f64) -> f64 {
    factor * (h * h + dt * dt) * scale
}

fn interior_max(f: &ScalarField, layers: usize) -> f64 {
    let l = f.lattice;
    let mut m: f64 = 0.0;
    for j in layers..l.ny.saturating_sub(layers) {
        for i in layers..l.nx.saturating_sub(layers) {
            m = m.max(f.at(i, j).abs());
        }
    }
    m
}

fn interior_max_vec(v: &VectorField, layers: usize) -> f64 {
    let l = v.lattice();
    let mut m: f64 = 0.0;
    for j in layers..l.ny.saturating_sub(layers) {
        for i in layers..l.nx.saturating_sub(layers) {
            m = m.max(v.x.at(i, j).hypot(v.y.at(i, j)));
        }
    }
    m
}

fn time_derivative_scalar(series: &[ScalarField], dt: f64) -> Vec<ScalarField> {
    let wrapped: Vec<VectorField> = series
        .iter()
        .map(|s| VectorField {
            x: s.clone(),
            y: ScalarField::zeros(s.lattice),
        })
        .collect();
    time_derivative(&wrapped, dt).into_iter().map(|v| v.x).collect()
}

/// `(a·∇) f` for a scalar `f`.
fn advect_scalar(a: &VectorField, f: &ScalarField) -> ScalarField {
    let (fx, fy) = (d1(f), d2(f));
    let mut out = ScalarField::zeros(f.lattice);
    for k in 0..out.data.len() {
        out.data[k] = a.x.data[k] * fx.data[k] + a.y.data[k] * fy.data[k];
    }
    out
}

/// Interior max-norm residual per slice and the largest equation term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub per_slice: Vec<f64>,
    pub max: f64,
    /// Largest interior magnitude of any single term of the equation.
    pub scale: f64,
}

impl Residual {
    fn from_parts(per_slice: Vec<f64>, scale: f64) -> Self {
        let max = per_slice.iter().fold(0.0f64, |m, r| m.max(*r));
        Residual { per_slice, max, scale }
    }
}

/// `∂_t j± + (z∓·∇)j± - g±` with `j± = curl z±`, for both signs.
pub fn residual_curled(traj: &ElsasserTrajectory) -> Result<[Residual; 2]> {
    if traj.len() < 3 {
        return Err(Error::InvalidParameter("residuals need at least three slices".into()));
    }
    let mut out = Vec::with_capacity(2);
    for sign in [Sign::Plus, Sign::Minus] {
        let own = traj.get(sign);
        let oth = traj.get(sign.other());
        let j: Vec<ScalarField> = own.iter().map(curl2d).collect();
        let dj = time_derivative_scalar(&j, traj.dt);
        let mut per = Vec::with_capacity(traj.len());
        let mut scale: f64 = 0.0;
        for n in 0..traj.len() {
            let adv = advect_scalar(&oth[n], &j[n]);
            let g = coupling_g_unstructured(&traj.zp[n], &traj.zm[n], sign);
            let r = dj[n].add(&adv).sub(&g);
            per.push(interior_max(&r, INTERIOR_LAYERS));
            for t in [&dj[n], &adv, &g] {
                scale = scale.max(interior_max(t, INTERIOR_LAYERS));
            }
        }
        out.push(Residual::from_parts(per, scale));
    }
    let minus = out.pop().unwrap();
    let plus = out.pop().unwrap();
    Ok([plus, minus])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MhdResidual {
    /// `∂_t u + (u·∇)u - μ(H·∇)H + ∇p`.
    pub momentum: Residual,
    /// `∂_t H + (u·∇)H - (H·∇)u + ∇q`.
    pub induction: Residual,
}

/// Residuals of the corrected MHD system on a uniformly sampled segment.
pub fn residual_mhd(
    u: &[VectorField],
    h: &[VectorField],
    p: &[ScalarField],
    q: &[ScalarField],
    dt: f64,
    mu: f64,
) -> Result<MhdResidual> {
    let n = u.len();
    if n < 3 || h.len() != n || p.len() != n || q.len() != n {
        return Err(Error::InvalidParameter(format!(
            "segment needs at least three slices of equal count (u {n}, H {}, p {}, q {})",
            h.len(),
            p.len(),
            q.len()
        )));
    }
    let du = time_derivative(u, dt);
    let dh = time_derivative(h, dt);
    let (mut rm, mut ri) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut sm, mut si): (f64, f64) = (0.0, 0.0);
    for k in 0..n {
        let terms_m = [du[k].clone(), advect(&u[k], &u[k]), advect(&h[k], &h[k]).scale(-mu), grad(&p[k])];
        let terms_i = [dh[k].clone(), advect(&u[k], &h[k]), advect(&h[k], &u[k]).scale(-1.0), grad(&q[k])];
        let sum = |t: &[VectorField; 4]| t[1..].iter().fold(t[0].clone(), |acc, x| acc.add(x));
        rm.push(interior_max_vec(&sum(&terms_m), INTERIOR_LAYERS));
        ri.push(interior_max_vec(&sum(&terms_i), INTERIOR_LAYERS));
        sm = terms_m.iter().fold(sm, |m, t| m.max(interior_max_vec(t, INTERIOR_LAYERS)));
        si = terms_i.iter().fold(si, |m, t| m.max(interior_max_vec(t, INTERIOR_LAYERS)));
    }
    Ok(MhdResidual {
        momentum: Residual::from_parts(rm, sm),
        induction: Residual::from_parts(ri, si),
    })
}

/// `max_n (max|v| + max|∇v|)`, the pointwise `C¹` size of a series.
pub fn c1_size(series: &[VectorField]) -> f64 {
    series.iter().fold(0.0f64, |m, v| {
        let (jx, jy) = (grad(&v.x), grad(&v.y));
        let mut g: f64 = 0.0;
        for k in 0..v.x.data.len() {
            let f = jx.x.data[k].powi(2) + jx.y.data[k].powi(2) + jy.x.data[k].powi(2) + jy.y.data[k].powi(2);
            g = g.max(f.sqrt());
        }
        m.max(v.max_abs() + g)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `e(t_n) = ‖Z⁺‖² + ‖Z⁻‖²` in `L²(Ω)`.
    pub e: Vec<f64>,
    /// `e(0) + K ∫₀ᵗ e`, trapezoid in time.
    pub envelope: Vec<f64>,
    /// `2 max_± sup_t ‖z±‖_{C¹}` of the second run.
    pub k: f64,
    /// `min_n (envelope - e)`.
    pub slack: f64,
    pub max_envelope: f64,
}

impl EnergyReport {
    /// Slack at least `-rel` times the largest envelope value.
    pub fn holds(&self, rel: f64) -> bool {
        self.slack >= -rel * self.max_envelope
    }
}

/// Grönwall check for the difference of two runs with identical data.
pub fn uniqueness_energy_check(a: &ElsasserTrajectory, b: &ElsasserTrajectory) -> Result<EnergyReport> {
    if a.len() != b.len() || a.len() < 2 || (a.dt - b.dt).abs() > 1e-15 {
        return Err(Error::InvalidParameter("trajectories must share one time grid".into()));
    }
    let sq = |v: &VectorField| v.x.map(|x| x * x).add(&v.y.map(|y| y * y)).integral();
    let e: Vec<f64> = (0..a.len())
        .map(|n| sq(&a.zp[n].sub(&b.zp[n])) + sq(&a.zm[n].sub(&b.zm[n])))
        .collect();
    let k = 2.0 * c1_size(&b.zp).max(c1_size(&b.zm));
    let mut envelope = Vec::with_capacity(e.len());
    let mut integral = 0.0;
    envelope.push(e[0]);
    for n in 1..e.len() {
        integral += 0.5 * a.dt * (e[n - 1] + e[n]);
        envelope.push(e[0] + k * integral);
    }
    let slack = e.iter().zip(&envelope).fold(f64::INFINITY, |m, (e, env)| m.min(env - e));
    let max_envelope = envelope.iter().fold(0.0f64, |m, x| m.max(*x));
    Ok(EnergyReport {
        e,
        envelope,
        k,
        slack,
        max_envelope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportEstimate {
    /// `(t, ‖v(t)‖_{0,α}, bound)` at the sampled levels.
    pub samples: Vec<(f64, f64, f64)>,
    /// `min (bound - lhs) / bound` over the samples.
    pub slack: f64,
}

/// `‖v(t)‖_{0,α} ≤ (∫₀ᵗ‖g‖_{0,α} + ‖v(0)‖_{0,α}) exp(α ∫₀ᵗ‖z‖_{1,α})` at
/// `samples` equally spaced levels of a forward transport solve.
pub fn transport_estimate_check(
    v: &[ScalarField],
    z: &[VectorField],
    g: Option<&[ScalarField]>,
    dt: f64,
    alpha: f64,
    samples: usize,
) -> Result<TransportEstimate> {
    let n = v.len();
    if n < 2 || z.len() != n || g.is_some_and(|g| g.len() != n) || samples == 0 {
        return Err(Error::InvalidParameter("transport check needs matching series".into()));
    }
    let region = v[0].lattice.bounds();
    let zn = z
        .iter()
        .map(|zz| Ok(holder_norm_vec(zz, 1, alpha, &zz.lattice().bounds())?.value))
        .collect::<Result<Vec<f64>>>()?;
    let gn = match g {
        Some(g) => g.iter().map(|gg| Ok(holder_norm(gg, 0, alpha, &region)?.value)).collect::<Result<Vec<f64>>>()?,
        None => vec![0.0; n],
    };
    let v0 = holder_norm(&v[0], 0, alpha, &region)?.value;
    let (mut iz, mut ig) = (vec![0.0; n], vec![0.0; n]);
    for k in 1..n {
        iz[k] = iz[k - 1] + 0.5 * dt * (zn[k - 1] + zn[k]);
        ig[k] = ig[k - 1] + 0.5 * dt * (gn[k - 1] + gn[k]);
    }
    let mut out = Vec::with_capacity(samples);
    let mut slack = f64::INFINITY;
    for s in 1..=samples {
        let k = (s * (n - 1) + samples / 2) / samples;
        let lhs = holder_norm(&v[k], 0, alpha, &region)?.value;
        let bound = (ig[k] + v0) * (alpha * iz[k]).exp();
        slack = slack.min(if bound > 0.0 { (bound - lhs) / bound } else if lhs == 0.0 { 0.0 } else { -1.0 });
        out.push((k as f64 * dt, lhs, bound));
    }
    Ok(TransportEstimate { samples: out, slack })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositionReport {
    /// `‖f∘Z‖_{0,α}` over the evaluation region.
    pub composed: f64,
    /// `‖f‖_{0,α}` over the lattice of `f`.
    pub base: f64,
    /// `max |∇Z|` (spectral norm).
    pub lip: f64,
    /// `(1 + lip^α) base`.
    pub bound: f64,
}

impl CompositionReport {
    pub fn holds(&self) -> bool {
        self.composed <= self.bound
    }
}

/// Composes `f` with the flow `Z(·, 0, σ)` on the nodes of `region` and compares
/// Hölder norms.
pub fn composition_check<V: VelocityField + ?Sized>(
    map: &FlowMap<V>,
    f: &ScalarField,
    sigma: f64,
    region: &Rect,
    alpha: f64,
) -> Result<CompositionReport> {
    let (_, _, sub) = f.lattice.sub(region)?;
    let nodes: Vec<_> = sub.nodes().collect();
    let feet = map.trajectories(&nodes, 0.0, sigma, 1)?.pop().unwrap();
    let interp = Bicubic::new(f.lattice);
    let composed = ScalarField {
        lattice: sub,
        data: feet.iter().map(|p| interp.eval(f, *p)).collect(),
    };
    let zx = ScalarField {
        lattice: sub,
        data: feet.iter().map(|p| p[0]).collect(),
    };
    let zy = ScalarField {
        lattice: sub,
        data: feet.iter().map(|p| p[1]).collect(),
    };
    let (gx, gy) = (grad(&zx), grad(&zy));
    let mut lip: f64 = 0.0;
    for k in 0..nodes.len() {
        let (a, b, c, d) = (gx.x.data[k], gx.y.data[k], gy.x.data[k], gy.y.data[k]);
        // largest singular value of [[a, b], [c, d]]
        let s = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
        lip = lip.max((0.5 * (s + disc)).sqrt());
    }
    let base = holder_norm(f, 0, alpha, &f.lattice.bounds())?.value;
    let comp = holder_norm(&composed, 0, alpha, &sub.bounds())?.value;
    Ok(CompositionReport {
        composed: comp,
        base,
        lip,
        bound: (1.0 + lip.powf(alpha)) * base,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QConsistency {
    /// `max_n max |q_rec - q_cor|`, reported only.
    pub max_diff: f64,
    /// `max_n max |P|` with `ΔP = div r`, `∂ₙP = r·n - g_cor`: the part of the gap
    /// caused by the discrete divergence of the induction defect `-r`.
    pub defect_potential: f64,
    /// `max_n max |q_rec - q_cor - P|`.
    pub algebraic: f64,
    /// `10 SOLVER_RTOL (diam² max|div r| + diam max|r·n|)`.
    pub algebraic_tol: f64,
    /// Interior `max |Δ_h q_cor|`.
    pub laplace_residual: f64,
    /// `SOLVER_RTOL · 2 max|∂ₙq| / h`.
    pub laplace_tol: f64,
    /// Largest `|∇q_rec|` seen, reported for information only.
    pub max_grad_q: f64,
}

impl QConsistency {
    pub fn holds(&self) -> bool {
        self.algebraic <= self.algebraic_tol && self.laplace_residual <= self.laplace_tol
    }
}

fn edge_max(g: &NeumannData) -> f64 {
    g.left.iter().chain(&g.right).chain(&g.bottom).chain(&g.top).fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Compares the recovered `q` with the harmonic corrector built from `(u, H)`.
///
/// Both are Neumann solves for `∇q = r` with `r` the negated induction defect; they
/// differ by the potential of `div r`, which vanishes only for exact solutions.
/// That potential is solved for separately, so the remaining mismatch measures the
/// consistency of the two solves.
pub fn q_consistency(traj: &ElsasserTrajectory, pressures: &Pressures, compat_tol: f64) -> Result<QConsistency> {
    let n = traj.len();
    if pressures.q.len() != n {
        return Err(Error::InvalidParameter("pressure series does not match the trajectory".into()));
    }
    let mut u = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = from_elsasser(&traj.state(k))?;
        u.push(a);
        h.push(b);
    }
    let dh = time_derivative(&h, traj.dt);
    let lat: Lattice = u[0].lattice();
    let diam = lat.bounds().width().hypot(lat.bounds().height());
    let mut out = QConsistency {
        max_diff: 0.0,
        defect_potential: 0.0,
        algebraic: 0.0,
        algebraic_tol: 0.0,
        laplace_residual: 0.0,
        laplace_tol: 0.0,
        max_grad_q: 0.0,
    };
    let (mut gmax, mut data_scale): (f64, f64) = (0.0, 0.0);
    for k in 0..n {
        let qc = q_corrector(&u[k], &h[k], &dh[k], compat_tol)?;
        let gc = q_corrector_data(&u[k], &h[k], &dh[k]);
        let r = induction_defect(&u[k], &h[k], &dh[k]).scale(-1.0);
        let gr = normal_trace(&r);
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>();
        let gd = NeumannData {
            left: sub(&gr.left, &gc.left),
            right: sub(&gr.right, &gc.right),
            bottom: sub(&gr.bottom, &gc.bottom),
            top: sub(&gr.top, &gc.top),
        };
        let divr = div2d(&r);
        let pd = poisson_neumann(&divr, &gd, compat_tol)?.field;
        let gap = pressures.q[k].sub(&qc);
        out.max_diff = out.max_diff.max(gap.max_abs());
        out.defect_potential = out.defect_potential.max(pd.max_abs());
        out.algebraic = out.algebraic.max(gap.sub(&pd).max_abs());
        out.laplace_residual = out.laplace_residual.max(interior_max(&neumann_laplacian(&qc, &gc), 1));
        out.max_grad_q = out.max_grad_q.max(grad(&pressures.q[k]).max_abs());
        gmax = gmax.max(edge_max(&gc));
        data_scale = data_scale.max(diam * diam * divr.max_abs() + diam * edge_max(&gr));
    }
    out.algebraic_tol = 10.0 * SOLVER_RTOL * data_scale;
    out.laplace_tol = SOLVER_RTOL * 2.0 * gmax / lat.h();
    Ok(out)
}

/// One row of the verification table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    /// Records `value <= threshold`.
    pub fn at_most(&mut self, name: &str, value: f64, threshold: f64) {
        self.rows.push(CheckRow {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        });
    }

    /// Records `value >= threshold`.
    pub fn at_least(&mut self, name: &str, value: f64, threshold: f64) {
        self.rows.push(CheckRow {
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
        });
    }

    /// A measured value without a pass criterion.
    pub fn note(&mut self, name: &str, value: f64) {
        self.rows.push(CheckRow {
            name: name.into(),
            value,
            threshold: f64::NAN,
            pass: true,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_table(&self) -> String {
        let w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:<w$}  {:>12}  {:>12}  result\n", "check", "value", "threshold");
        for r in &self.rows {
            let (th, res) = if r.threshold.is_nan() {
                ("-".to_string(), "INFO")
            } else {
                (format!("{:.4e}", r.threshold), if r.pass { "PASS" } else { "FAIL" })
            };
            let _ = writeln!(s, "{:<w$}  {:>12.4e}  {:>12}  {}", r.name, r.value, th, res);
        }
        s
    }
}
