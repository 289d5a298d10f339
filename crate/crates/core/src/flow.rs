//! Characteristic flows of the extended advecting fields, flushing checks and
//! origin sets.

use crate::error::{Error, Result};
use crate::fields::{Bicubic, Lattice, VectorField};
use crate::geometry::{smooth_step, DomainSpec, Point, Rect, ReturnProfile};

pub trait VelocityField {
    fn velocity(&self, p: Point, t: f64) -> Point;

    /// Closed set outside of which the velocity vanishes at all times, if known.
    fn support(&self) -> Option<Rect> {
        None
    }

    /// `out[i] = v(ps[i], t)`.
    fn velocity_batch(&self, ps: &[Point], t: f64, out: &mut [Point]) {
        for (o, p) in out.iter_mut().zip(ps) {
            *o = self.velocity(*p, t);
        }
    }
}

/// Closed support of `χ`.
pub fn chi_support(profile: &ReturnProfile) -> Rect {
    let d = profile.domain;
    d.omega2().inflate(d.margin - d.chi_margin)
}

/// The return field `y*` alone.
#[derive(Debug, Clone, Copy)]
pub struct ReturnField {
    pub profile: ReturnProfile,
}

impl VelocityField for ReturnField {
    #[inline]
    fn velocity(&self, p: Point, t: f64) -> Point {
        self.profile.y_star_at(p, t)
    }

    fn velocity_batch(&self, ps: &[Point], t: f64, out: &mut [Point]) {
        let g = self.profile.gamma(t);
        for (o, p) in out.iter_mut().zip(ps) {
            *o = if g == 0.0 { [0.0, 0.0] } else { [g * self.profile.chi(*p), 0.0] };
        }
    }

    fn support(&self) -> Option<Rect> {
        Some(chi_support(&self.profile))
    }
}

/// Any closure `(x, t) -> v`.
pub struct FnField<F>(pub F);

impl<F: Fn(Point, f64) -> Point> VelocityField for FnField<F> {
    #[inline]
    fn velocity(&self, p: Point, t: f64) -> Point {
        (self.0)(p, t)
    }
}

/// `y* + w` with a gridded perturbation `w` given on the slices of the
/// controller time grid: bicubic in space, linear in time, zero off its lattice.
pub struct ExtendedField {
    pub profile: ReturnProfile,
    pub slices: Vec<VectorField>,
    pub dt: f64,
    interp: Bicubic,
    support: Rect,
}

impl ExtendedField {
    pub fn new(profile: ReturnProfile, slices: Vec<VectorField>) -> Result<Self> {
        if slices.len() < 2 {
            return Err(Error::InvalidParameter("need at least two time slices".into()));
        }
        let lattice = slices[0].lattice();
        let dt = 1.0 / (slices.len() - 1) as f64;
        Ok(ExtendedField {
            profile,
            dt,
            interp: Bicubic::new(lattice),
            support: lattice.bounds(),
            slices,
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.interp.lattice
    }

    fn slot(&self, t: f64) -> (usize, f64) {
        let nt = self.slices.len() - 1;
        let s = (t / self.dt).clamp(0.0, nt as f64);
        let n = (s.floor() as usize).min(nt - 1);
        (n, s - n as f64)
    }

    /// The perturbation `w(p, t)`.
    #[inline]
    pub fn perturbation(&self, p: Point, t: f64) -> Point {
        if !self.support.contains(p, 0.0) {
            return [0.0, 0.0];
        }
        let (n, th) = self.slot(t);
        let st = self.interp.stencil(p);
        let (a, b) = (&self.slices[n], &self.slices[n + 1]);
        let mut v = [0.0, 0.0];
        if th < 1.0 {
            v[0] += (1.0 - th) * self.interp.apply(&st, &a.x.data);
            v[1] += (1.0 - th) * self.interp.apply(&st, &a.y.data);
        }
        if th > 0.0 {
            v[0] += th * self.interp.apply(&st, &b.x.data);
            v[1] += th * self.interp.apply(&st, &b.y.data);
        }
        v
    }
}

impl VelocityField for ExtendedField {
    #[inline]
    fn velocity(&self, p: Point, t: f64) -> Point {
        let y = self.profile.y_star_at(p, t);
        let w = self.perturbation(p, t);
        [y[0] + w[0], y[1] + w[1]]
    }

    fn velocity_batch(&self, ps: &[Point], t: f64, out: &mut [Point]) {
        let g = self.profile.gamma(t);
        let (n, th) = self.slot(t);
        let (a, b) = (&self.slices[n], &self.slices[n + 1]);
        let blend = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(u, v)| (1.0 - th) * u + th * v).collect() };
        let (wx, wy) = if th == 0.0 {
            (a.x.data.clone(), a.y.data.clone())
        } else if th == 1.0 {
            (b.x.data.clone(), b.y.data.clone())
        } else {
            (blend(&a.x.data, &b.x.data), blend(&a.y.data, &b.y.data))
        };
        for (o, p) in out.iter_mut().zip(ps) {
            let mut v = if g == 0.0 { [0.0, 0.0] } else { [g * self.profile.chi(*p), 0.0] };
            if self.support.contains(*p, 0.0) {
                let st = self.interp.stencil(*p);
                v[0] += self.interp.apply(&st, &wx);
                v[1] += self.interp.apply(&st, &wy);
            }
            *o = v;
        }
    }

    fn support(&self) -> Option<Rect> {
        let c = chi_support(&self.profile);
        let s = self.support;
        Some(Rect::new(c.x0.min(s.x0), c.x1.max(s.x1), c.y0.min(s.y0), c.y1.max(s.y1)))
    }
}

/// Integrator for `d/dt Z(x,s,t) = v(Z, t)`, `Z(x,s,s) = x`, confined to `bounds`.
pub struct FlowMap<'a, V: VelocityField + ?Sized> {
    pub field: &'a V,
    pub dt_flow: f64,
    pub bounds: Rect,
    /// Largest overshoot that is clamped back instead of reported.
    pub clamp_tol: f64,
}

impl<'a, V: VelocityField + ?Sized> FlowMap<'a, V> {
    pub fn new(field: &'a V, dt_flow: f64, bounds: Rect, clamp_tol: f64) -> Self {
        FlowMap {
            field,
            dt_flow,
            bounds,
            clamp_tol,
        }
    }

    #[inline]
    fn rk4(&self, p: Point, t: f64, h: f64) -> Point {
        let v = |q: Point, s: f64| self.field.velocity(q, s);
        let k1 = v(p, t);
        let k2 = v([p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]], t + 0.5 * h);
        let k3 = v([p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]], t + 0.5 * h);
        let k4 = v([p[0] + h * k3[0], p[1] + h * k3[1]], t + h);
        [
            p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }

    #[inline]
    fn confine(&self, x: Point, p: Point, t: f64) -> Result<Point> {
        let b = &self.bounds;
        let over = b.distance(p);
        if over == 0.0 {
            return Ok(p);
        }
        if over > self.clamp_tol {
            return Err(Error::FlowBlowup {
                x0: x[0],
                y0: x[1],
                t,
                overshoot: over,
            });
        }
        Ok([p[0].clamp(b.x0, b.x1), p[1].clamp(b.y0, b.y1)])
    }

    /// `Z(x, s, t)`, forward or backward in time.
    pub fn integrate(&self, x: Point, s: f64, t: f64) -> Result<Point> {
        if s == t {
            return Ok(x);
        }
        let n = ((t - s).abs() / self.dt_flow - 1e-9).ceil().max(1.0) as usize;
        let h = (t - s) / n as f64;
        let mut p = x;
        for k in 0..n {
            let tk = s + k as f64 * h;
            p = self.confine(x, self.rk4(p, tk, h), tk + h)?;
        }
        Ok(p)
    }

    /// Batched [`FlowMap::trajectory`]: `out[k][i]` is the position of `xs[i]` at the
    /// `k`-th sample time. Nodes outside the field's support stay put.
    pub fn trajectories(&self, xs: &[Point], s: f64, t: f64, n_samples: usize) -> Result<Vec<Vec<Point>>> {
        let mut out = vec![xs.to_vec()];
        let support = self.field.support();
        let active: Vec<usize> = (0..xs.len()).filter(|i| support.is_none_or(|r| r.contains(xs[*i], 0.0))).collect();
        let origin: Vec<Point> = active.iter().map(|i| xs[*i]).collect();
        let mut p = origin.clone();
        let span = (t - s) / n_samples as f64;
        let sub = ((span.abs() / self.dt_flow - 1e-9).ceil().max(1.0)) as usize;
        let h = span / sub as f64;
        let m = p.len();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![[0.0; 2]; m], vec![[0.0; 2]; m], vec![[0.0; 2]; m], vec![[0.0; 2]; m]);
        let mut q = vec![[0.0; 2]; m];
        let v = self.field;
        for k in 0..n_samples {
            for r in 0..sub {
                let tk = s + k as f64 * span + r as f64 * h;
                v.velocity_batch(&p, tk, &mut k1);
                for i in 0..m {
                    q[i] = [p[i][0] + 0.5 * h * k1[i][0], p[i][1] + 0.5 * h * k1[i][1]];
                }
                v.velocity_batch(&q, tk + 0.5 * h, &mut k2);
                for i in 0..m {
                    q[i] = [p[i][0] + 0.5 * h * k2[i][0], p[i][1] + 0.5 * h * k2[i][1]];
                }
                v.velocity_batch(&q, tk + 0.5 * h, &mut k3);
                for i in 0..m {
                    q[i] = [p[i][0] + h * k3[i][0], p[i][1] + h * k3[i][1]];
                }
                v.velocity_batch(&q, tk + h, &mut k4);
                for i in 0..m {
                    let np = [
                        p[i][0] + h / 6.0 * (k1[i][0] + 2.0 * k2[i][0] + 2.0 * k3[i][0] + k4[i][0]),
                        p[i][1] + h / 6.0 * (k1[i][1] + 2.0 * k2[i][1] + 2.0 * k3[i][1] + k4[i][1]),
                    ];
                    p[i] = self.confine(origin[i], np, tk + h)?;
                }
            }
            let mut level = xs.to_vec();
            for (i, idx) in active.iter().enumerate() {
                level[*idx] = p[i];
            }
            out.push(level);
        }
        Ok(out)
    }

    /// Positions at every sample time `s + k (t-s)/n_samples`, `k = 0..=n_samples`;
    /// each sample interval is subdivided so that steps do not exceed `dt_flow`.
    pub fn trajectory(&self, x: Point, s: f64, t: f64, n_samples: usize) -> Result<Vec<Point>> {
        let mut out = Vec::with_capacity(n_samples + 1);
        out.push(x);
        let mut p = x;
        let span = (t - s) / n_samples as f64;
        let sub = ((span.abs() / self.dt_flow - 1e-9).ceil().max(1.0)) as usize;
        let h = span / sub as f64;
        for k in 0..n_samples {
            for q in 0..sub {
                let tk = s + k as f64 * span + q as f64 * h;
                p = self.confine(x, self.rk4(p, tk, h), tk + h)?;
            }
            out.push(p);
        }
        Ok(out)
    }
}

/// Nodes of `lattice` inside the closed rectangle `r`.
pub fn seeds_in(lattice: &Lattice, r: &Rect) -> Vec<Point> {
    let slack = 1e-9 * lattice.h();
    lattice.nodes().filter(|p| r.contains(*p, slack)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlushReport {
    pub passed: bool,
    /// `min θ(Z(x,0,1)) - (L + l)` over the seeds.
    pub margin: f64,
    pub seeds: usize,
}

/// Integrates every lattice seed of `Ω̄₂` from `t = 0` to `t = 1`; passes iff every
/// endpoint lies outside `Ω̄₂`.
pub fn flush_check<V: VelocityField + ?Sized>(map: &FlowMap<V>, domain: &DomainSpec, lattice: &Lattice) -> Result<FlushReport> {
    let o2 = domain.omega2();
    let seeds = seeds_in(lattice, &o2);
    let mut passed = true;
    let mut margin = f64::INFINITY;
    let ends = map.trajectories(&seeds, 0.0, 1.0, 1)?.pop().unwrap_or_default();
    for z in ends {
        if o2.contains(z, 0.0) {
            passed = false;
        }
        margin = margin.min(z[0] - o2.x1);
    }
    Ok(FlushReport {
        passed,
        margin,
        seeds: seeds.len(),
    })
}

/// Smallest `M` (from `2.5 (L + 2l)`, doubling at most 8 times) whose return
/// flow flushes `Ω̄₂`.
pub fn choose_m(domain: &DomainSpec, lattice: &Lattice, lambda_d: f64, dt_flow: f64) -> Result<f64> {
    let mut m = 2.5 * (domain.length + 2.0 * domain.margin);
    for _ in 0..=8 {
        let profile = ReturnProfile::new(*domain, m, lambda_d)?;
        let field = ReturnField { profile };
        let map = FlowMap::new(&field, dt_flow, domain.omega3(), lattice.h());
        if flush_check(&map, domain, lattice)?.passed {
            return Ok(m);
        }
        m *= 2.0;
    }
    Err(Error::Config("return flow does not flush Ω₂ after 8 doublings of M".into()))
}

/// The cutoff `χ̃`: 1 on the hull of the origin sets, 0 for `x₁ >= -l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginCutoff {
    pub hull: Rect,
    /// `x₁` at which `χ̃` reaches 0.
    pub right: f64,
    pub decay_y: f64,
}

impl OriginCutoff {
    pub fn eval(&self, p: Point) -> f64 {
        let fx = if p[0] <= self.hull.x1 {
            1.0
        } else {
            1.0 - smooth_step((p[0] - self.hull.x1) / (self.right - self.hull.x1))
        };
        if fx == 0.0 {
            return 0.0;
        }
        let dy = (self.hull.y0 - p[1]).max(p[1] - self.hull.y1).max(0.0);
        fx * (1.0 - smooth_step(dy / self.decay_y))
    }

    /// True if `p` lies where `χ̃ = 1` exactly.
    pub fn is_full(&self, p: Point) -> bool {
        p[0] <= self.hull.x1 && p[1] >= self.hull.y0 && p[1] <= self.hull.y1
    }
}

#[derive(Debug, Clone)]
pub struct OriginSets {
    pub plus: Vec<Point>,
    pub minus: Vec<Point>,
    /// Bounding box of both sets inflated by `2h`.
    pub hull: Rect,
    /// `dist(Õ, Ω̄₂)`.
    pub distance: f64,
    pub cutoff: OriginCutoff,
}

/// Backward images `Z±(x̃, 1, 0)` of the `Ω₁` lattice nodes under both flows and
/// the cutoff `χ̃` built on their hull.
pub fn origin_sets<A, B>(map_plus: &FlowMap<A>, map_minus: &FlowMap<B>, domain: &DomainSpec, lattice: &Lattice) -> Result<OriginSets>
where
    A: VelocityField + ?Sized,
    B: VelocityField + ?Sized,
{
    let seeds = seeds_in(lattice, &domain.omega1());
    let back = |f: &dyn Fn(Point) -> Result<Point>| seeds.iter().map(|x| f(*x)).collect::<Result<Vec<_>>>();
    let plus = back(&|x| map_plus.integrate(x, 1.0, 0.0))?;
    let minus = back(&|x| map_minus.integrate(x, 1.0, 0.0))?;
    let all: Vec<Point> = plus.iter().chain(&minus).copied().collect();
    let hull = Rect::bounding(&all)
        .ok_or_else(|| Error::Geometry("Ω₁ has no lattice nodes".into()))?
        .inflate(2.0 * lattice.h());
    let o2 = domain.omega2();
    let distance = hull.distance_to(&o2);
    if distance <= 0.0 || hull.x1 >= o2.x0 {
        return Err(Error::FlushViolation(format!(
            "origin hull [{:.4}, {:.4}] x [{:.4}, {:.4}] meets Ω̄₂",
            hull.x0, hull.x1, hull.y0, hull.y1
        )));
    }
    let cutoff = OriginCutoff {
        hull,
        right: o2.x0,
        decay_y: domain.margin / 4.0,
    };
    Ok(OriginSets {
        plus,
        minus,
        hull,
        distance,
        cutoff,
    })
}

/// Max deviation from 1 of the Jacobian determinant of `Z(·, 0, t)`, by centered
/// differences of step `h`, over the given seeds.
pub fn jacobian_deviation<V: VelocityField + ?Sized>(map: &FlowMap<V>, seeds: &[Point], t: f64, h: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in seeds {
        let f = |dx: f64, dy: f64| map.integrate([x[0] + dx, x[1] + dy], 0.0, t);
        let (xp, xm, yp, ym) = (f(h, 0.0)?, f(-h, 0.0)?, f(0.0, h)?, f(0.0, -h)?);
        let a = (xp[0] - xm[0]) / (2.0 * h);
        let b = (yp[0] - ym[0]) / (2.0 * h);
        let c = (xp[1] - xm[1]) / (2.0 * h);
        let d = (yp[1] - ym[1]) / (2.0 * h);
        worst = worst.max((a * d - b * c - 1.0).abs());
    }
    Ok(worst)
}
