//! Global exact control on `[0, T]` from two local null-control runs.
//!
//! The first leg steers `(ε u₀, ε H₀)` to rest on `[0, 1]` and is rescaled to
//! `[0, ε]` by `u(x,t) = ε⁻¹ u*(x, ε⁻¹ t)` (pressures by `ε⁻²`). The second leg
//! steers `(-ε u_T, -ε H_T)` to rest, is rescaled the same way and then reversed
//! in time onto `[T - ε, T]`. The state is zero in between.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::Serialize;

use crate::controller::{iterate_to_fixed_point, IterateOptions, IterationReport, Problem};
use crate::elsasser::{check_mu, from_elsasser, recover_pressures, to_elsasser, ElsasserTrajectory};
use crate::error::{Error, Result};
use crate::fields::{read_snapshot, write_snapshot, Lattice, ScalarField, VectorField};
use crate::geometry::Point;
use crate::verify::{res_tol, residual_mhd, VerifyReport};

/// Recovered pressures are defined up to the discrete compatibility shift of their
/// Neumann data, which absorbs discretization defects of any size.
const PRESSURE_COMPAT_TOL: f64 = f64::INFINITY;

/// A uniformly sampled piece `t_k = t0 + k dt` of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub dt: f64,
    pub u: Vec<VectorField>,
    pub h: Vec<VectorField>,
    pub p: Vec<ScalarField>,
    pub q: Vec<ScalarField>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Three zero slices on `[t0, t1]`.
    pub fn zeros(lattice: Lattice, t0: f64, t1: f64) -> Self {
        Segment {
            t0,
            dt: 0.5 * (t1 - t0),
            u: vec![VectorField::zeros(lattice); 3],
            h: vec![VectorField::zeros(lattice); 3],
            p: vec![ScalarField::zeros(lattice); 3],
            q: vec![ScalarField::zeros(lattice); 3],
        }
    }

    /// `(u, H, p, q)` of a controller trajectory on `[0, 1]`, rescaled to `[0, ε]`.
    pub fn from_leg(traj: &ElsasserTrajectory, eps: f64) -> Result<Self> {
        let pr = recover_pressures(traj, PRESSURE_COMPAT_TOL)?;
        let (ie, ie2) = (1.0 / eps, 1.0 / (eps * eps));
        let mut u = Vec::with_capacity(traj.len());
        let mut h = Vec::with_capacity(traj.len());
        for n in 0..traj.len() {
            let (a, b) = from_elsasser(&traj.state(n))?;
            u.push(a.scale(ie));
            h.push(b.scale(ie));
        }
        Ok(Segment {
            t0: 0.0,
            dt: eps * traj.dt,
            u,
            h,
            p: pr.p.iter().map(|f| f.scale(ie2)).collect(),
            q: pr.q.iter().map(|f| f.scale(ie2)).collect(),
        })
    }
}

/// The return trajectory `(ȳ, 0)` on `[0, 1]` with `p = -x₁ γ'(t)`, `q = 0`.
pub fn return_segment(problem: &Problem) -> Segment {
    let times = problem.grid.times();
    let n = times.len();
    Segment {
        t0: 0.0,
        dt: problem.grid.dt,
        u: times.iter().map(|t| problem.ybar(*t)).collect(),
        h: vec![VectorField::zeros(problem.omega); n],
        p: times
            .iter()
            .map(|t| ScalarField::from_fn(problem.omega, |x| -x[0] * problem.profile.gamma_deriv(*t)))
            .collect(),
        q: vec![ScalarField::zeros(problem.omega); n],
    }
}

/// `û(x,t) = -u(x, a+b-t)`, `Ĥ = -H(·, a+b-t)`, `p̂ = p(·, a+b-t)`, `q̂ = q(·, a+b-t)`
/// on the same interval `[a, b]`.
pub fn time_reverse(seg: &Segment) -> Segment {
    let rev_v = |v: &[VectorField]| v.iter().rev().map(|f| f.scale(-1.0)).collect();
    let rev_s = |v: &[ScalarField]| v.iter().rev().cloned().collect();
    Segment {
        t0: seg.t0,
        dt: seg.dt,
        u: rev_v(&seg.u),
        h: rev_v(&seg.h),
        p: rev_s(&seg.p),
        q: rev_s(&seg.q),
    }
}

/// Shifts a segment in time.
fn shifted(mut seg: Segment, t0: f64) -> Segment {
    seg.t0 = t0;
    seg
}

/// The assembled trajectory on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    /// Consecutive segments; each joint appears as the last slice of one segment
    /// and the first slice of the next.
    pub segments: Vec<Segment>,
    pub t_final: f64,
    pub eps: f64,
    pub mu: f64,
}

impl ControlTrajectory {
    pub fn lattice(&self) -> Lattice {
        self.segments[0].u[0].lattice()
    }

    pub fn slice_count(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    pub fn times(&self) -> Vec<f64> {
        self.segments.iter().flat_map(|s| (0..s.len()).map(move |k| s.time(k))).collect()
    }

    /// `(t, u, H)` of every slice in time order.
    pub fn states(&self) -> impl Iterator<Item = (f64, &VectorField, &VectorField)> {
        self.segments.iter().flat_map(|s| (0..s.len()).map(move |k| (s.time(k), &s.u[k], &s.h[k])))
    }

    pub fn initial(&self) -> (&VectorField, &VectorField) {
        (&self.segments[0].u[0], &self.segments[0].h[0])
    }

    pub fn terminal(&self) -> (&VectorField, &VectorField) {
        let s = self.segments.last().unwrap();
        (s.u.last().unwrap(), s.h.last().unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlueOptions {
    pub t_final: f64,
    /// Upper bound for the first `ε`.
    pub eps_cap: f64,
    pub max_halvings: usize,
    pub iterate: IterateOptions,
}

impl GlueOptions {
    pub fn new(t_final: f64, iterate: IterateOptions) -> Self {
        GlueOptions {
            t_final,
            eps_cap: 0.25,
            max_halvings: 10,
            iterate,
        }
    }
}

/// The global run with both controller reports.
#[derive(Debug, Clone)]
pub struct GlobalRun {
    pub traj: ControlTrajectory,
    pub eps: f64,
    pub first: IterationReport,
    pub second: IterationReport,
    /// `(ε, reason)` for every rejected `ε`.
    pub rejected: Vec<(f64, String)>,
}

/// Failures that smaller data may cure.
fn is_admission_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NoContraction { .. }
            | Error::NotConverged { .. }
            | Error::FlushViolation(_)
            | Error::Cancellation { .. }
            | Error::FlowBlowup { .. }
    )
}

/// Runs both legs with a common `ε`, halving it from `min(T/4, eps_cap)` until
/// the controller converges for both.
pub fn assemble_global(
    problem: &Problem,
    (u0, h0): (&VectorField, &VectorField),
    (ut, ht): (&VectorField, &VectorField),
    mu: f64,
    opts: &GlueOptions,
) -> Result<GlobalRun> {
    check_mu(mu)?;
    let t = opts.t_final;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("control time must be positive, got {t}")));
    }
    if !(opts.eps_cap > 0.0) {
        return Err(Error::InvalidParameter(format!("eps cap must be positive, got {}", opts.eps_cap)));
    }
    let mut eps = (0.25 * t).min(opts.eps_cap);
    let mut rejected = Vec::new();
    for attempt in 0..=opts.max_halvings {
        let a = to_elsasser(&u0.scale(eps), &h0.scale(eps), mu)?;
        let b = to_elsasser(&ut.scale(-eps), &ht.scale(-eps), mu)?;
        let last_norm = problem.data_norm(&a)?.max(problem.data_norm(&b)?);
        info!("eps = {eps:.4e} (attempt {attempt}): scaled data norm {last_norm:.3e}");
        let run = iterate_to_fixed_point(problem, &a, opts.iterate)
            .and_then(|fa| Ok((fa, iterate_to_fixed_point(problem, &b, opts.iterate)?)));
        match run {
            Ok((fa, fb)) => {
                let first = Segment::from_leg(&fa.traj, eps)?;
                let second = Segment::from_leg(&fb.traj, eps)?;
                let l = first.u[0].lattice();
                let traj = ControlTrajectory {
                    segments: vec![
                        first,
                        Segment::zeros(l, eps, 0.5 * t),
                        Segment::zeros(l, 0.5 * t, t - eps),
                        shifted(time_reverse(&second), t - eps),
                    ],
                    t_final: t,
                    eps,
                    mu,
                };
                return Ok(GlobalRun {
                    traj,
                    eps,
                    first: fa.report,
                    second: fb.report,
                    rejected,
                });
            }
            Err(e) if is_admission_failure(&e) => {
                warn!("eps = {eps:.4e} rejected: {e}");
                rejected.push((eps, e.to_string()));
                if attempt == opts.max_halvings {
                    return Err(Error::NotAdmitted {
                        halvings: opts.max_halvings,
                        eps,
                        data_norm: last_norm,
                        delta: problem.delta(),
                        cause: e.to_string(),
                    });
                }
                eps *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("the last attempt returns")
}

/// Boundary data on `Γ₀` (the walls `x₁ = 0` and `x₁ = L`) at one slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryTrace {
    pub t: f64,
    /// `z±·n` on the left wall (bottom to top), then the right wall.
    pub normal: [Vec<f64>; 2],
    /// `∫_{Γ₀} z±·n`.
    pub flux: [f64; 2],
    pub flux_tol: f64,
    /// `(node, z⁺)` where `z⁻` enters.
    pub plus_on_minus_inflow: Vec<(Point, Point)>,
    /// `(node, z⁻)` where `z⁺` enters.
    pub minus_on_plus_inflow: Vec<(Point, Point)>,
}

impl BoundaryTrace {
    pub fn flux_ok(&self) -> bool {
        self.flux[0].abs() <= self.flux_tol && self.flux[1].abs() <= self.flux_tol
    }
}

/// Samples the controls on `Γ₀` for every slice. The net-flux tolerance is
/// `h |Γ₀| max|z|`.
pub fn extract_controls(traj: &ControlTrajectory) -> Result<Vec<BoundaryTrace>> {
    let l = traj.lattice();
    let mut out = Vec::with_capacity(traj.slice_count());
    let wall_len = 2.0 * (l.ny - 1) as f64 * l.hy;
    for (t, u, h) in traj.states() {
        let st = to_elsasser(u, h, traj.mu)?;
        let zs = [&st.zp, &st.zm];
        let mut normal = [Vec::with_capacity(2 * l.ny), Vec::with_capacity(2 * l.ny)];
        let mut flux = [0.0; 2];
        let mut nodes = Vec::with_capacity(2 * l.ny);
        for (i, sign) in [(0, -1.0), (l.nx - 1, 1.0)] {
            for j in 0..l.ny {
                let w = if j == 0 || j == l.ny - 1 { 0.5 } else { 1.0 };
                nodes.push((l.node(i, j), i, j));
                for s in 0..2 {
                    let vn = sign * zs[s].x.at(i, j);
                    normal[s].push(vn);
                    flux[s] += w * l.hy * vn;
                }
            }
        }
        let zmax = st.zp.max_abs().max(st.zm.max_abs());
        let mut pm = Vec::new();
        let mut mp = Vec::new();
        for (k, (x, i, j)) in nodes.iter().enumerate() {
            if normal[1][k] < 0.0 {
                pm.push((*x, st.zp.at(*i, *j)));
            }
            if normal[0][k] < 0.0 {
                mp.push((*x, st.zm.at(*i, *j)));
            }
        }
        out.push(BoundaryTrace {
            t,
            normal,
            flux,
            flux_tol: l.h() * wall_len * zmax,
            plus_on_minus_inflow: pm,
            minus_on_plus_inflow: mp,
        });
    }
    Ok(out)
}

fn ratio(v: f64, tol: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else if tol > 0.0 {
        v / tol
    } else {
        f64::INFINITY
    }
}

/// Residual, invariant and control checks on an assembled trajectory.
/// Time steps enter the residual tolerance relative to each segment's span.
pub fn check_trajectory(traj: &ControlTrajectory, res_factor: f64) -> Result<VerifyReport> {
    let mut rep = VerifyReport::default();
    let h = traj.lattice().h();
    // worst (value, tolerance) by ratio, per equation
    let mut worst = [(0.0f64, 0.0f64); 2];
    for seg in &traj.segments {
        let r = residual_mhd(&seg.u, &seg.h, &seg.p, &seg.q, seg.dt, traj.mu)?;
        let span = seg.t_end() - seg.t0;
        let dt = if span > 0.0 { seg.dt / span } else { 0.0 };
        for (w, res) in worst.iter_mut().zip([&r.momentum, &r.induction]) {
            let tol = res_tol(res_factor, h, dt, res.scale);
            if ratio(res.max, tol) > ratio(w.0, w.1) {
                *w = (res.max, tol);
            }
        }
    }
    rep.at_most("mhd momentum residual", worst[0].0, worst[0].1);
    rep.at_most("mhd induction residual", worst[1].0, worst[1].1);
    let (mut dv, mut dtol, mut edge, mut wall) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let h_inv = 1.0 / traj.lattice().h();
    for (_, u, hh) in traj.states() {
        // u and H are both combined from z±, so both carry rounding of that size
        let tol = 1e3 * f64::EPSILON * u.max_abs().max(hh.max_abs()) * h_inv;
        for v in [u, hh] {
            let (inner, e) = v.div_split();
            if ratio(inner, tol) > ratio(dv, dtol) {
                (dv, dtol) = (inner, tol);
            }
            edge = edge.max(e);
            wall = wall.max(v.wall_normal_max());
        }
    }
    rep.at_most("divergence, interior nodes (worst slice)", dv, dtol);
    rep.note("divergence, edge nodes (truncation)", edge);
    rep.at_most("wall normal component", wall, 0.0);
    let controls = extract_controls(traj)?;
    let worst = controls
        .iter()
        .map(|c| (c.flux[0].abs().max(c.flux[1].abs()), c.flux_tol))
        .fold((0.0f64, 0.0f64), |a, b| if ratio(b.0, b.1) > ratio(a.0, a.1) { b } else { a });
    rep.at_most("net control flux on the controlled walls", worst.0, worst.1);
    Ok(rep)
}

const FIELDS: [&str; 6] = ["u_x", "u_y", "h_x", "h_y", "p", "q"];

fn slice_path(dir: &Path, k: usize, name: &str) -> std::path::PathBuf {
    dir.join(format!("slice_{k:05}_{name}.txt"))
}

/// Writes one snapshot per field and slice plus `manifest.txt`.
pub fn export_trajectory(traj: &ControlTrajectory, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let l = traj.lattice();
    let mut m = String::new();
    writeln!(m, "slices {}", traj.slice_count()).unwrap();
    writeln!(m, "T {:.16e}", traj.t_final).unwrap();
    writeln!(m, "eps {:.16e}", traj.eps).unwrap();
    writeln!(m, "mu {:.16e}", traj.mu).unwrap();
    writeln!(m, "grid {} {} {:.16e} {:.16e} {:.16e} {:.16e}", l.nx, l.ny, l.hx, l.hy, l.x0, l.y0).unwrap();
    writeln!(m, "segments {}", traj.segments.len()).unwrap();
    for s in &traj.segments {
        writeln!(m, "segment {:.16e} {:.16e} {}", s.t0, s.dt, s.len()).unwrap();
    }
    writeln!(m, "times").unwrap();
    for t in traj.times() {
        writeln!(m, "{t:.16e}").unwrap();
    }
    let mut k = 0;
    for s in &traj.segments {
        for n in 0..s.len() {
            let fields = [&s.u[n].x, &s.u[n].y, &s.h[n].x, &s.h[n].y, &s.p[n], &s.q[n]];
            for (name, f) in FIELDS.iter().zip(fields) {
                write_snapshot(&slice_path(dir, k, name), f)?;
            }
            k += 1;
        }
    }
    fs::write(dir.join("manifest.txt"), m)?;
    Ok(())
}

/// Reads a directory written by [`export_trajectory`].
pub fn import_trajectory(dir: &Path) -> Result<ControlTrajectory> {
    let path = dir.join("manifest.txt");
    let err = |msg: String| Error::Format {
        path: path.clone(),
        msg,
    };
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let mut field = |key: &str| -> Result<Vec<String>> {
        let line = lines.next().ok_or_else(|| err(format!("missing {key}")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(err(format!("expected {key}, found {line:?}")));
        }
        Ok(parts.map(String::from).collect())
    };
    let num = |v: &[String], i: usize| -> Result<f64> {
        v.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| err(format!("bad number in {v:?}")))
    };
    let slices = num(&field("slices")?, 0)? as usize;
    let t_final = num(&field("T")?, 0)?;
    let eps = num(&field("eps")?, 0)?;
    let mu = num(&field("mu")?, 0)?;
    let _grid = field("grid")?;
    let nseg = num(&field("segments")?, 0)? as usize;
    let mut heads = Vec::with_capacity(nseg);
    for _ in 0..nseg {
        let s = field("segment")?;
        heads.push((num(&s, 0)?, num(&s, 1)?, num(&s, 2)? as usize));
    }
    if heads.iter().map(|h| h.2).sum::<usize>() != slices {
        return Err(err("segment lengths do not add up to the slice count".into()));
    }
    let mut segments = Vec::with_capacity(nseg);
    let mut k = 0;
    for (t0, dt, len) in heads {
        let mut seg = Segment {
            t0,
            dt,
            u: Vec::with_capacity(len),
            h: Vec::with_capacity(len),
            p: Vec::with_capacity(len),
            q: Vec::with_capacity(len),
        };
        for _ in 0..len {
            let f: Vec<ScalarField> = FIELDS
                .iter()
                .map(|name| read_snapshot(&slice_path(dir, k, name)))
                .collect::<Result<_>>()?;
            let mut it = f.into_iter();
            let mut next = || it.next().unwrap();
            seg.u.push(VectorField { x: next(), y: next() });
            seg.h.push(VectorField { x: next(), y: next() });
            seg.p.push(next());
            seg.q.push(next());
            k += 1;
        }
        segments.push(seg);
    }
    Ok(ControlTrajectory {
        segments,
        t_final,
        eps,
        mu,
    })
}
