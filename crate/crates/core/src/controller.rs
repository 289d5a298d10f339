//! The fixed-point map `F`, membership diagnostics and the Picard iteration for
//! local null control on `[0, 1]`.
//!
//! The transported curl is assembled from three characteristic quantities on the
//! `Ω₃` lattice, each advanced by the opposite extended flow:
//!
//! * `A(x,t) = Z(x,t,0)`, the foot at `t = 0` (coordinates transported, no source);
//! * `S(x,t) = ∫₀ᵗ G(Z(x,t,s),s) ds` (transported from zero with source `G`);
//! * `K(x,t) = ∫ₜ¹ G(Z(x,t,s),s) ds` (transported backward from zero at `t = 1`).
//!
//! With `c = curl(π₂ z₀)` the curl is `j = c(A) - χ̃(A)(S + K) + S`, which equals
//! the characteristic solution started from `j₀ = c - χ̃ ∫₀¹ G` and vanishes
//! identically at `t = 1` wherever `χ̃(A) = 1`.

use std::fmt::Write as _;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::elsasser::{coupling_G_perturbation, ElsasserState, ElsasserTrajectory, Sign};
use crate::error::{Error, Result};
use crate::fields::{extend_pi_vec, holder_norm_vec, measure_extension_norm, Bicubic, Lattice, ScalarField, VectorField};
use crate::flow::{choose_m, flush_check, origin_sets, ExtendedField, FlowMap, FlushReport, OriginCutoff, VelocityField};
use crate::geometry::{DomainSpec, GridSpec, Point, ReturnProfile, Weight};
use crate::solvers::{transport_chains, Chain, DivCurl, Direction};

/// Tunables of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlParams {
    /// Exponent of the weight `ω_k`.
    pub k: f64,
    pub m_tilde: usize,
    pub alpha: f64,
    pub tol_x: f64,
    pub max_iter: usize,
    pub lambda_d: f64,
    /// Subcycling of the flow integrator relative to `dt`.
    pub flow_substeps: usize,
    pub nu_bisections: usize,
    pub nu_probes: usize,
    pub seed: u64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            k: 8.0,
            m_tilde: 3,
            alpha: 0.5,
            tol_x: 1e-8,
            max_iter: 40,
            lambda_d: 0.1,
            flow_substeps: 4,
            nu_bisections: 8,
            nu_probes: 16,
            seed: 0,
        }
    }
}

/// Everything fixed before the iteration starts.
#[derive(Debug, Clone)]
pub struct Problem {
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub profile: ReturnProfile,
    pub params: ControlParams,
    /// `Ω₃` lattice.
    pub full: Lattice,
    pub omega: Lattice,
    pub omega2: Lattice,
    pub dt_flow: f64,
    /// Extension constant in the `C^{m̃,α}` norm.
    pub c_pi: f64,
    pub nu: f64,
    pub weight: Weight,
}

impl Problem {
    /// Chooses `M`, measures `C_π` and calibrates `ν`.
    pub fn new(domain: DomainSpec, grid: GridSpec, params: ControlParams) -> Result<Self> {
        let full = Lattice::from_grid(&grid);
        let dt_flow = grid.dt / params.flow_substeps.max(1) as f64;
        let m = choose_m(&domain, &full, params.lambda_d, dt_flow)?;
        let profile = ReturnProfile::new(domain, m, params.lambda_d)?;
        let c_pi = measure_extension_norm(&domain, &full, params.m_tilde, params.alpha)?;
        let nu = calibrate_nu(&profile, &full, dt_flow, c_pi, params.nu_bisections)?;
        info!("M = {m}, C_pi = {c_pi:.3}, nu = {nu:.4e}");
        Self::with_constants(domain, grid, params, m, c_pi, nu)
    }

    /// Builds a problem from known constants, skipping the calibration runs.
    pub fn with_constants(domain: DomainSpec, grid: GridSpec, params: ControlParams, m: f64, c_pi: f64, nu: f64) -> Result<Self> {
        if !(params.alpha > 0.0 && params.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1], got {}", params.alpha)));
        }
        if !(params.tol_x > 0.0) || params.max_iter == 0 {
            return Err(Error::InvalidParameter("tol_x and max_iter must be positive".into()));
        }
        let full = Lattice::from_grid(&grid);
        let (_, _, omega) = full.sub(&domain.omega())?;
        let (_, _, omega2) = full.sub(&domain.omega2())?;
        Ok(Problem {
            profile: ReturnProfile::new(domain, m, params.lambda_d)?,
            dt_flow: grid.dt / params.flow_substeps.max(1) as f64,
            weight: Weight::new(params.k)?,
            domain,
            grid,
            params,
            full,
            omega,
            omega2,
            c_pi,
            nu,
        })
    }

    pub fn nt(&self) -> usize {
        self.grid.nt
    }

    /// Smallness threshold `ν / (4 C_π 2^k)` for the data.
    pub fn delta(&self) -> f64 {
        self.nu / (4.0 * self.c_pi * 2f64.powf(self.params.k))
    }

    /// `ȳ(·, t)` on `Ω`.
    pub fn ybar(&self, t: f64) -> VectorField {
        VectorField::from_fn(self.omega, |p| self.profile.y_star_at(p, t))
    }

    pub fn return_trajectory(&self, mu: f64) -> ElsasserTrajectory {
        let z: Vec<VectorField> = self.grid.times().iter().map(|t| self.ybar(*t)).collect();
        ElsasserTrajectory {
            zp: z.clone(),
            zm: z,
            mu,
            dt: self.grid.dt,
        }
    }

    /// The seed iterate `(ȳ + λ z₀⁺, ȳ + λ z₀⁻)`.
    pub fn seed(&self, data: &ElsasserState) -> ElsasserTrajectory {
        let mut zp = Vec::with_capacity(self.nt() + 1);
        let mut zm = Vec::with_capacity(self.nt() + 1);
        for t in self.grid.times() {
            let y = self.ybar(t);
            let lam = self.profile.lambda(t);
            zp.push(y.axpby(1.0, &data.zp, lam));
            zm.push(y.axpby(1.0, &data.zm, lam));
        }
        ElsasserTrajectory {
            zp,
            zm,
            mu: data.mu,
            dt: self.grid.dt,
        }
    }

    /// `‖z₀⁺‖ + ‖z₀⁻‖` in `C^{m̃,α}(Ω)`.
    pub fn data_norm(&self, data: &ElsasserState) -> Result<f64> {
        let r = self.domain.omega();
        let (m, a) = (self.params.m_tilde, self.params.alpha);
        Ok(holder_norm_vec(&data.zp, m, a, &r)?.value + holder_norm_vec(&data.zm, m, a, &r)?.value)
    }

    /// `10 (h² + dt²) · max ‖z₀±‖∞`.
    pub fn cancel_tol(&self, data: &ElsasserState) -> f64 {
        let h = self.grid.h();
        10.0 * (h * h + self.grid.dt * self.grid.dt) * data.zp.max_abs().max(data.zm.max_abs())
    }

    fn flow_map<'a, V: VelocityField + ?Sized>(&self, field: &'a V) -> FlowMap<'a, V> {
        FlowMap::new(field, self.dt_flow, self.domain.omega3(), self.full.h())
    }
}

/// `y* - a ψ e₁` with `ψ` the indicator of `Ω₂`: the largest drift of size `a`
/// against the flushing direction.
#[derive(Debug, Clone, Copy)]
pub struct WorstCaseField {
    pub profile: ReturnProfile,
    pub amp: f64,
}

impl VelocityField for WorstCaseField {
    fn velocity(&self, p: Point, t: f64) -> Point {
        let y = self.profile.y_star_at(p, t);
        if self.profile.domain.omega2().contains(p, 0.0) {
            [y[0] - self.amp, y[1]]
        } else {
            y
        }
    }

    fn velocity_batch(&self, ps: &[Point], t: f64, out: &mut [Point]) {
        let g = self.profile.gamma(t);
        let o2 = self.profile.domain.omega2();
        for (o, p) in out.iter_mut().zip(ps) {
            let y = if g == 0.0 { 0.0 } else { g * self.profile.chi(*p) };
            *o = if o2.contains(*p, 0.0) { [y - self.amp, 0.0] } else { [y, 0.0] };
        }
    }
}

/// `ν = a / C_π` for the largest drift `a ∈ (0, M]` (bisection) under which the
/// worst-case field still carries every seed of `Ω̄₂` out through its right side.
/// Exits to the left do not count: a strong enough adverse drift ejects seeds
/// leftward, which would make the test non-monotone in `a`.
pub fn calibrate_nu(profile: &ReturnProfile, lattice: &Lattice, dt_flow: f64, c_pi: f64, steps: usize) -> Result<f64> {
    let d = profile.domain;
    let passes = |amp: f64| -> Result<bool> {
        let field = WorstCaseField { profile: *profile, amp };
        let map = FlowMap::new(&field, dt_flow, d.omega3(), lattice.h());
        match flush_check(&map, &d, lattice) {
            Ok(r) => Ok(r.margin > 0.0),
            Err(Error::FlowBlowup { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let (mut lo, mut hi) = (0.0, profile.speed);
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(Error::Geometry(format!("nu bisection collapsed to 0 (M = {})", profile.speed)));
    }
    Ok(lo / c_pi)
}

/// A smooth random perturbation of `y*` supported in `Ω₂` with sup-norm at most `amp`.
#[derive(Debug, Clone)]
pub struct RandomPerturbation {
    pub profile: ReturnProfile,
    /// `(a_x, a_y, k_x, k_y, phase, frequency)` per mode, amplitudes normalized.
    modes: Vec<[f64; 6]>,
}

impl RandomPerturbation {
    #[inline]
    fn add(&self, p: Point, t: f64, w: &mut Point) {
        let o2 = self.profile.domain.omega2();
        let u = (p[0] - o2.x0) / o2.width();
        let v = (p[1] - o2.y0) / o2.height();
        if u <= 0.0 || u >= 1.0 || v <= 0.0 || v >= 1.0 {
            return;
        }
        let b = (16.0 * u * (1.0 - u) * v * (1.0 - v)).powi(2);
        for m in &self.modes {
            let (s, c) = (m[2] * p[0] + m[3] * p[1] + m[4] + m[5] * t).sin_cos();
            w[0] += b * m[0] * s;
            w[1] += b * m[1] * c;
        }
    }
}

impl VelocityField for RandomPerturbation {
    fn velocity(&self, p: Point, t: f64) -> Point {
        let mut w = self.profile.y_star_at(p, t);
        self.add(p, t, &mut w);
        w
    }

    fn velocity_batch(&self, ps: &[Point], t: f64, out: &mut [Point]) {
        let g = self.profile.gamma(t);
        for (o, p) in out.iter_mut().zip(ps) {
            let mut w = if g == 0.0 { [0.0, 0.0] } else { [g * self.profile.chi(*p), 0.0] };
            self.add(*p, t, &mut w);
            *o = w;
        }
    }
}

pub fn random_perturbation(profile: ReturnProfile, amp: f64, seed: u64) -> RandomPerturbation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes: Vec<[f64; 6]> = (0..6)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1.0..4.0),
                rng.gen_range(1.0..4.0),
                rng.gen_range(0.0..6.3),
                rng.gen_range(0.5..3.0),
            ]
        })
        .collect();
    let norm: f64 = modes.iter().map(|m| m[0].abs().max(m[1].abs())).sum::<f64>().max(1e-300);
    for m in &mut modes {
        m[0] *= amp / norm;
        m[1] *= amp / norm;
    }
    RandomPerturbation { profile, modes }
}

/// Flush reports under `count` random perturbations of sup-norm at most `amp`.
pub fn perturbed_flush_reports(problem: &Problem, amp: f64, count: usize, seed: u64) -> Result<Vec<FlushReport>> {
    (0..count)
        .map(|i| {
            let field = random_perturbation(problem.profile, amp, seed.wrapping_add(i as u64));
            flush_check(&problem.flow_map(&field), &problem.domain, &problem.full)
        })
        .collect()
}

/// Which extended flow advects which curl.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wiring {
    /// `j⁺` by `𝔷⁻` and `j⁻` by `𝔷⁺`.
    Crossed,
    /// Deliberately wrong pairing, kept for negative controls.
    Swapped,
}

/// Per-application diagnostics of `F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    /// `max |j±(·,1)|` on `Ω₁`.
    pub cancel_j: f64,
    /// `max |z±(·,1)|` on `Ω`.
    pub cancel_z: f64,
    pub max_source: f64,
}

/// Curls `j±` on `Ω₁` and the initial curl `j₀±` on `Ω₃` produced by one application.
#[derive(Debug, Clone)]
pub struct Curls {
    pub jp: Vec<ScalarField>,
    pub jm: Vec<ScalarField>,
    pub j0p: ScalarField,
    pub j0m: ScalarField,
}

/// Extended perturbations `π₂(z̄± - ȳ)` on `Ω₃` per slice.
fn extended_perturbations(problem: &Problem, cur: &ElsasserTrajectory, sign: Sign) -> Result<Vec<VectorField>> {
    cur.get(sign)
        .iter()
        .enumerate()
        .map(|(n, z)| {
            let w = z.sub(&problem.ybar(problem.grid.time(n)));
            extend_pi_vec(&w, &problem.full, &problem.domain)
        })
        .collect()
}

/// The extended fields `𝔷± = y* + π₂(z̄± - ȳ)`.
pub fn extended_fields(problem: &Problem, cur: &ElsasserTrajectory) -> Result<(ExtendedField, ExtendedField)> {
    let mk = |s: Sign| -> Result<ExtendedField> {
        let slices = extended_perturbations(problem, cur, s)?
            .iter()
            .map(|w| w.restrict(&problem.domain.omega2()))
            .collect::<Result<Vec<_>>>()?;
        ExtendedField::new(problem.profile, slices)
    };
    Ok((mk(Sign::Plus)?, mk(Sign::Minus)?))
}

/// The frozen cutoff `χ̃` built on the origin sets of the seed flows.
pub fn seed_cutoff(problem: &Problem, seed: &ElsasserTrajectory) -> Result<OriginCutoff> {
    let (fp, fm) = extended_fields(problem, seed)?;
    let sets = origin_sets(&problem.flow_map(&fp), &problem.flow_map(&fm), &problem.domain, &problem.full)?;
    debug!("origin hull {:?}, distance {:.4}", sets.hull, sets.distance);
    Ok(sets.cutoff)
}

/// Curl of one sign on `Ω₁` at every level, plus `j₀` on `Ω₃`.
fn transported_curl<V: VelocityField + ?Sized>(
    problem: &Problem,
    map: &FlowMap<V>,
    source: &[ScalarField],
    c: &ScalarField,
    cutoff: &OriginCutoff,
) -> Result<(Vec<ScalarField>, ScalarField)> {
    let full = problem.full;
    let nt = problem.nt();
    let (i0, j0, l1) = full.sub(&problem.domain.omega1())?;
    let idx: Vec<usize> = (0..l1.ny).flat_map(|j| (0..l1.nx).map(move |i| full.idx(i0 + i, j0 + j))).collect();
    let pick = |f: &ScalarField| -> Vec<f64> { idx.iter().map(|k| f.data[*k]).collect() };

    let coords = [
        ScalarField::from_fn(full, |p| p[0]),
        ScalarField::from_fn(full, |p| p[1]),
    ];
    let mut feet = vec![Vec::new(); nt + 1];
    let mut s = vec![Vec::new(); nt + 1];
    transport_chains(
        map,
        full,
        nt,
        Direction::Forward,
        &[
            Chain {
                data: coords[0].clone(),
                source: None,
            },
            Chain {
                data: coords[1].clone(),
                source: None,
            },
            Chain {
                data: ScalarField::zeros(full),
                source: Some(source),
            },
        ],
        |n, v| {
            feet[n] = pick(&v[0]).into_iter().zip(pick(&v[1])).map(|(x, y)| [x, y]).collect::<Vec<Point>>();
            s[n] = pick(&v[2]);
            Ok(())
        },
    )?;

    let mut k = vec![Vec::new(); nt + 1];
    let mut kfull = ScalarField::zeros(full);
    transport_chains(
        map,
        full,
        nt,
        Direction::Backward,
        &[Chain {
            data: ScalarField::zeros(full),
            source: Some(source),
        }],
        |n, v| {
            k[n] = pick(&v[0]);
            if n == 0 {
                kfull = v[0].clone();
            }
            Ok(())
        },
    )?;

    for (q, a) in feet[nt].iter().enumerate() {
        if !cutoff.is_full(*a) {
            return Err(Error::FlushViolation(format!(
                "foot ({:.4}, {:.4}) of an Ω₁ node lies outside the full cutoff region",
                a[0], a[1]
            )));
        }
        debug_assert!(q < idx.len());
    }

    let interp = Bicubic::new(full);
    let c1 = ScalarField {
        lattice: l1,
        data: pick(c),
    };
    let mut out = Vec::with_capacity(nt + 1);
    out.push(c1);
    for n in 1..=nt {
        let mut j = ScalarField::zeros(l1);
        for q in 0..idx.len() {
            let a = feet[n][q];
            let ct = cutoff.eval(a);
            j.data[q] = interp.eval(c, a) - ct * (s[n][q] + k[n][q]) + s[n][q];
        }
        out.push(j);
    }
    let j0 = ScalarField::from_fn(full, |p| cutoff.eval(p)).zip_with(&kfull, |ct, kv| ct * kv);
    let j0 = c.sub(&j0);
    Ok((out, j0))
}

/// One application of `F` to `cur` for the data `data`.
pub fn apply_f(
    problem: &Problem,
    cur: &ElsasserTrajectory,
    data: &ElsasserState,
    cutoff: &OriginCutoff,
    wiring: Wiring,
) -> Result<(ElsasserTrajectory, Curls, StepReport)> {
    let nt = problem.nt();
    if cur.len() != nt + 1 {
        return Err(Error::InvalidParameter(format!("iterate has {} slices, expected {}", cur.len(), nt + 1)));
    }
    let clock = std::time::Instant::now();
    let wp = extended_perturbations(problem, cur, Sign::Plus)?;
    let wm = extended_perturbations(problem, cur, Sign::Minus)?;
    let gp: Vec<ScalarField> = wp.iter().zip(&wm).map(|(a, b)| coupling_G_perturbation(a, b, Sign::Plus)).collect();
    let gm: Vec<ScalarField> = wp.iter().zip(&wm).map(|(a, b)| coupling_G_perturbation(a, b, Sign::Minus)).collect();
    let max_source = gp.iter().chain(&gm).fold(0.0f64, |m, g| m.max(g.max_abs()));

    let o2 = problem.domain.omega2();
    let restrict = |w: &[VectorField]| w.iter().map(|v| v.restrict(&o2)).collect::<Result<Vec<_>>>();
    let fp = ExtendedField::new(problem.profile, restrict(&wp)?)?;
    let fm = ExtendedField::new(problem.profile, restrict(&wm)?)?;
    drop((wp, wm));
    debug!("apply_f: sources ready after {:?}", clock.elapsed());
    let (mp, mm) = (problem.flow_map(&fp), problem.flow_map(&fm));
    let (adv_p, adv_m) = match wiring {
        Wiring::Crossed => (&mm, &mp),
        Wiring::Swapped => (&mp, &mm),
    };

    let dcp = DivCurl::new(&data.zp, &problem.full, &problem.domain)?;
    let dcm = DivCurl::new(&data.zm, &problem.full, &problem.domain)?;
    let (jp, j0p) = transported_curl(problem, adv_p, &gp, &dcp.curl_ext, cutoff)?;
    let (jm, j0m) = transported_curl(problem, adv_m, &gm, &dcm.curl_ext, cutoff)?;

    debug!("apply_f: transport done after {:?}", clock.elapsed());
    let omega = problem.domain.omega();
    let build = |dc: &DivCurl, j: &[ScalarField]| -> Result<Vec<VectorField>> {
        j.iter()
            .enumerate()
            .map(|(n, jn)| dc.reconstruct(jn, problem.grid.time(n), &problem.profile)?.restrict(&omega))
            .collect()
    };
    let zp = build(&dcp, &jp)?;
    let zm = build(&dcm, &jm)?;

    debug!("apply_f: reconstruction done after {:?}", clock.elapsed());
    let report = StepReport {
        cancel_j: jp[nt].max_abs().max(jm[nt].max_abs()),
        cancel_z: zp[nt].max_abs().max(zm[nt].max_abs()),
        max_source,
    };
    let tol = problem.cancel_tol(data);
    if report.cancel_j > 10.0 * tol || report.cancel_z > 10.0 * tol {
        let (what, value) = if report.cancel_j > 10.0 * tol {
            ("curl at t = 1", report.cancel_j)
        } else {
            ("field at t = 1", report.cancel_z)
        };
        return Err(Error::Cancellation {
            what,
            value,
            limit: 10.0 * tol,
        });
    }
    Ok((
        ElsasserTrajectory {
            zp,
            zm,
            mu: data.mu,
            dt: problem.grid.dt,
        },
        Curls { jp, jm, j0p, j0m },
        report,
    ))
}

/// `max_t (‖Δz⁺‖_{1,α,Ω} + ‖Δz⁻‖_{1,α,Ω})`.
pub fn x_distance(problem: &Problem, a: &ElsasserTrajectory, b: &ElsasserTrajectory) -> Result<f64> {
    let r = problem.domain.omega();
    let al = problem.params.alpha;
    let mut d: f64 = 0.0;
    for n in 0..a.len() {
        let p = holder_norm_vec(&a.zp[n].sub(&b.zp[n]), 1, al, &r)?.value;
        let m = holder_norm_vec(&a.zm[n].sub(&b.zm[n]), 1, al, &r)?.value;
        d = d.max(p + m);
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Membership {
    /// `max_t ω_k(t) ‖z± - ȳ‖_{m̃,α,Ω}(t)` for `+` and `-`.
    pub weighted: [f64; 2],
    pub nu: f64,
    pub inside: bool,
    /// `max_t ‖z±‖∞` against `ν + max_t ‖ȳ‖∞`.
    pub uniform: f64,
    pub uniform_bound: f64,
}

pub fn membership_check(problem: &Problem, traj: &ElsasserTrajectory, nu: f64) -> Result<Membership> {
    let r = problem.domain.omega();
    let (m, al) = (problem.params.m_tilde, problem.params.alpha);
    let mut weighted = [0.0f64; 2];
    let mut uniform: f64 = 0.0;
    let mut ymax: f64 = 0.0;
    for n in 0..traj.len() {
        let t = problem.grid.time(n);
        let y = problem.ybar(t);
        let w = problem.weight.eval(t);
        ymax = ymax.max(y.max_abs());
        for (s, z) in [&traj.zp[n], &traj.zm[n]].into_iter().enumerate() {
            weighted[s] = weighted[s].max(w * holder_norm_vec(&z.sub(&y), m, al, &r)?.value);
            uniform = uniform.max(z.max_abs());
        }
    }
    Ok(Membership {
        weighted,
        nu,
        inside: weighted[0] < nu && weighted[1] < nu,
        uniform,
        uniform_bound: nu + ymax,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub d_x: f64,
    pub ratio: Option<f64>,
    pub max_weighted_norm: f64,
    pub flush_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub records: Vec<IterationRecord>,
    pub nu: f64,
    pub k: f64,
    pub delta: f64,
    pub data_norm: f64,
    pub converged: bool,
    pub cancel_j: f64,
    pub cancel_z: f64,
}

impl IterationReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.ratio).collect()
    }

    /// Smallest `κ` with `d_{i+1} <= κ d_i` over the recorded ratios whose
    /// distances stay above `floor`.
    pub fn fitted_kappa(&self, floor: f64) -> Option<f64> {
        self.records
            .windows(2)
            .filter(|w| w[1].d_x > floor)
            .map(|w| w[1].d_x / w[0].d_x)
            .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,d_X,ratio,max_weighted_norm,flush_margin\n");
        for r in &self.records {
            let ratio = r.ratio.map(|x| format!("{x:.6e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:.6e},{},{:.6e},{:.6e}", r.iter, r.d_x, ratio, r.max_weighted_norm, r.flush_margin);
        }
        s
    }
}

/// The converged (or last) iterate with its curls.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub traj: ElsasserTrajectory,
    pub curls: Curls,
    pub report: IterationReport,
    pub cutoff: OriginCutoff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateOptions {
    pub tol_x: f64,
    pub max_iter: usize,
    pub wiring: Wiring,
    /// Evaluate the flushing margin of every iterate's extended flows.
    pub track_flush: bool,
    /// Evaluate the weighted `C^{m̃,α}` norms of every iterate.
    pub track_membership: bool,
}

impl IterateOptions {
    pub fn from_params(p: &ControlParams) -> Self {
        IterateOptions {
            tol_x: p.tol_x,
            max_iter: p.max_iter,
            wiring: Wiring::Crossed,
            track_flush: true,
            track_membership: true,
        }
    }
}

/// Picard iteration of `F` from the seed `(ȳ + λ z₀⁺, ȳ + λ z₀⁻)`.
pub fn iterate_to_fixed_point(problem: &Problem, data: &ElsasserState, opts: IterateOptions) -> Result<FixedPoint> {
    let data_norm = problem.data_norm(data)?;
    let delta = problem.delta();
    if data_norm > delta {
        warn!("data norm {data_norm:.3e} exceeds the smallness threshold {delta:.3e}");
    }
    let mut cur = problem.seed(data);
    let cutoff = seed_cutoff(problem, &cur)?;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut bad = 0usize;
    for iter in 1..=opts.max_iter {
        let (next, curls, step) = apply_f(problem, &cur, data, &cutoff, opts.wiring)?;
        let d_x = x_distance(problem, &next, &cur)?;
        let ratio = records.last().map(|r| d_x / r.d_x);
        let max_weighted_norm = if opts.track_membership {
            let m = membership_check(problem, &next, problem.nu)?;
            m.weighted[0].max(m.weighted[1])
        } else {
            f64::NAN
        };
        let flush_margin = if opts.track_flush {
            let (fp, fm) = extended_fields(problem, &next)?;
            let a = flush_check(&problem.flow_map(&fp), &problem.domain, &problem.full)?;
            let b = flush_check(&problem.flow_map(&fm), &problem.domain, &problem.full)?;
            a.margin.min(b.margin)
        } else {
            f64::NAN
        };
        info!("iter {iter}: d_X = {d_x:.3e}, ratio = {ratio:?}");
        records.push(IterationRecord {
            iter,
            d_x,
            ratio,
            max_weighted_norm,
            flush_margin,
        });
        let done = d_x < opts.tol_x;
        if done || iter == opts.max_iter {
            let report = IterationReport {
                records,
                nu: problem.nu,
                k: problem.params.k,
                delta,
                data_norm,
                converged: done,
                cancel_j: step.cancel_j,
                cancel_z: step.cancel_z,
            };
            if !done {
                return Err(Error::NotConverged {
                    tol: opts.tol_x,
                    max_iter: opts.max_iter,
                    last: d_x,
                });
            }
            return Ok(FixedPoint {
                traj: next,
                curls,
                report,
                cutoff,
            });
        }
        if ratio.is_some_and(|r| r >= 1.0) {
            bad += 1;
            if bad >= 3 {
                return Err(Error::NoContraction {
                    ratios: records.iter().filter_map(|r| r.ratio).collect(),
                });
            }
        } else {
            bad = 0;
        }
        cur = next;
    }
    unreachable!("loop returns on the last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_domains;

    fn coarse() -> Problem {
        let d = build_domains(2.0, 1.0, 0.5).unwrap();
        let g = GridSpec::with_spacing(&d, 1.0 / 16.0, 64).unwrap();
        Problem::with_constants(d, g, ControlParams::default(), 7.5, 40.0, 0.1).unwrap()
    }

    fn zero_data(p: &Problem) -> ElsasserState {
        ElsasserState {
            zp: VectorField::zeros(p.omega),
            zm: VectorField::zeros(p.omega),
            mu: 1.0,
        }
    }

    #[test]
    fn zero_data_returns_the_return_trajectory() {
        let p = coarse();
        let data = zero_data(&p);
        let mut opts = IterateOptions::from_params(&p.params);
        opts.track_flush = false;
        let fp = iterate_to_fixed_point(&p, &data, opts).unwrap();
        assert_eq!(fp.report.records.len(), 1);
        let ret = p.return_trajectory(1.0);
        for n in 0..=p.nt() {
            assert_eq!(fp.traj.zp[n], ret.zp[n]);
            assert_eq!(fp.traj.zm[n], ret.zm[n]);
        }
        let m = membership_check(&p, &fp.traj, p.nu).unwrap();
        assert_eq!(m.weighted, [0.0, 0.0]);
        assert!(m.inside && m.uniform <= m.uniform_bound);
    }

    #[test]
    fn calibrated_drift_is_the_flushing_threshold() {
        let p = coarse();
        let nu = calibrate_nu(&p.profile, &p.full, p.dt_flow, 40.0, 6).unwrap();
        let amp = nu * 40.0;
        assert!(amp > 0.0 && amp < p.profile.speed);
        let margin = |a: f64| {
            let f = WorstCaseField { profile: p.profile, amp: a };
            flush_check(&p.flow_map(&f), &p.domain, &p.full).map(|r| r.margin).unwrap_or(f64::NEG_INFINITY)
        };
        let worst = margin(amp);
        assert!(worst > 0.0);
        // one bisection step above fails
        assert!(margin(amp + p.profile.speed / 64.0) <= 0.0);
        for r in perturbed_flush_reports(&p, amp, 4, 9).unwrap() {
            assert!(r.passed && r.margin >= worst, "{r:?} vs {worst}");
        }
    }

    #[test]
    fn random_perturbation_is_bounded_and_batched() {
        let p = coarse();
        let f = random_perturbation(p.profile, 0.7, 3);
        let pts: Vec<Point> = p.full.nodes().collect();
        let mut out = vec![[0.0; 2]; pts.len()];
        for t in [0.0, 0.3, 0.5] {
            f.velocity_batch(&pts, t, &mut out);
            for (q, o) in pts.iter().zip(&out) {
                assert_eq!(*o, f.velocity(*q, t));
                let y = p.profile.y_star_at(*q, t);
                assert!((o[0] - y[0]).abs().max((o[1] - y[1]).abs()) <= 0.7);
                if !p.domain.omega2().contains(*q, 0.0) {
                    assert_eq!(*o, y);
                }
            }
        }
    }

    #[test]
    fn delta_shrinks_with_k() {
        let mut p = coarse();
        let a = p.delta();
        p.params.k = 16.0;
        assert!((a / p.delta() - 256.0).abs() < 1e-9);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = IterationReport {
            records: vec![
                IterationRecord {
                    iter: 1,
                    d_x: 1.0,
                    ratio: None,
                    max_weighted_norm: 0.5,
                    flush_margin: 0.1,
                },
                IterationRecord {
                    iter: 2,
                    d_x: 0.1,
                    ratio: Some(0.1),
                    max_weighted_norm: 0.5,
                    flush_margin: 0.1,
                },
            ],
            nu: 1.0,
            k: 8.0,
            delta: 1e-3,
            data_norm: 1e-4,
            converged: true,
            cancel_j: 0.0,
            cancel_z: 0.0,
        };
        let csv = r.to_csv();
        assert!(csv.starts_with("iter,d_X,ratio,max_weighted_norm,flush_margin\n"));
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(r.fitted_kappa(0.0), Some(0.1));
    }
}
