//! Duct geometry, nested extension domains, the return profile and the time weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const ALIGN_TOL: f64 = 1e-9;

/// Axis-aligned closed rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    /// Closed containment with an absolute slack.
    pub fn contains(&self, p: Point, slack: f64) -> bool {
        p[0] >= self.x0 - slack && p[0] <= self.x1 + slack && p[1] >= self.y0 - slack && p[1] <= self.y1 + slack
    }

    /// Open containment: strictly inside by more than `slack`.
    pub fn contains_open(&self, p: Point, slack: f64) -> bool {
        p[0] > self.x0 + slack && p[0] < self.x1 - slack && p[1] > self.y0 + slack && p[1] < self.y1 - slack
    }

    pub fn contains_rect(&self, other: &Rect, slack: f64) -> bool {
        other.x0 >= self.x0 - slack && other.x1 <= self.x1 + slack && other.y0 >= self.y0 - slack && other.y1 <= self.y1 + slack
    }

    pub fn inflate(&self, by: f64) -> Rect {
        Rect::new(self.x0 - by, self.x1 + by, self.y0 - by, self.y1 + by)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Euclidean distance from `p` to the rectangle (0 inside).
    pub fn distance(&self, p: Point) -> f64 {
        let dx = (self.x0 - p[0]).max(0.0).max(p[0] - self.x1);
        let dy = (self.y0 - p[1]).max(0.0).max(p[1] - self.y1);
        dx.hypot(dy)
    }

    /// Distance between two rectangles (0 if they intersect).
    pub fn distance_to(&self, other: &Rect) -> f64 {
        let dx = (other.x0 - self.x1).max(self.x0 - other.x1).max(0.0);
        let dy = (other.y0 - self.y1).max(self.y0 - other.y1).max(0.0);
        dx.hypot(dy)
    }

    pub fn bounding(points: &[Point]) -> Option<Rect> {
        let first = points.first()?;
        let mut r = Rect::new(first[0], first[0], first[1], first[1]);
        for p in points {
            r.x0 = r.x0.min(p[0]);
            r.x1 = r.x1.max(p[0]);
            r.y0 = r.y0.min(p[1]);
            r.y1 = r.y1.max(p[1]);
        }
        Some(r)
    }
}

/// The physical duct `(0,L) x (0,W)` and its non-physical extensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub length: f64,
    pub width: f64,
    /// Extension margin `l`.
    pub margin: f64,
    pub omega1_margin: f64,
    pub chi_margin: f64,
}

impl DomainSpec {
    pub fn omega(&self) -> Rect {
        Rect::new(0.0, self.length, 0.0, self.width)
    }

    /// `Ω₁ = (-l/2, L+l/2) x (0, W)`; shares the top and bottom walls with `Ω`.
    pub fn omega1(&self) -> Rect {
        Rect::new(-self.omega1_margin, self.length + self.omega1_margin, 0.0, self.width)
    }

    pub fn omega2(&self) -> Rect {
        self.omega().inflate(self.margin)
    }

    pub fn omega3(&self) -> Rect {
        self.omega().inflate(2.0 * self.margin)
    }

    /// True when `p` lies on the controlled vertical walls `Γ₀`.
    pub fn on_controlled_boundary(&self, p: Point, tol: f64) -> bool {
        let on_x = p[0].abs() <= tol || (p[0] - self.length).abs() <= tol;
        on_x && p[1] > tol && p[1] < self.width - tol
    }
}

/// Builds the nested domains `Ω ⊂ Ω₁ ⊂ Ω₂ ⊂ Ω₃` for a duct of length `L`, width `W` and margin `l`.
pub fn build_domains(length: f64, width: f64, margin: f64) -> Result<DomainSpec> {
    for (name, v) in [("L", length), ("W", width), ("l", margin)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(DomainSpec {
        length,
        width,
        margin,
        omega1_margin: margin / 2.0,
        chi_margin: margin / 2.0,
    })
}

/// Uniform node lattice covering `Ω̄₃`, plus the controller time grid on `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Cell counts over `Ω₃`.
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub x0: f64,
    pub y0: f64,
    pub nt: usize,
    pub dt: f64,
}

fn divides(h: f64, len: f64) -> bool {
    let q = len / h;
    (q - q.round()).abs() < ALIGN_TOL * q.max(1.0)
}

impl GridSpec {
    pub fn new(domain: &DomainSpec, nx: usize, ny: usize, nt: usize) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidParameter(format!("grid {nx}x{ny} too coarse")));
        }
        if nt < 2 || nt % 2 != 0 {
            return Err(Error::InvalidParameter(format!("nt must be even and >= 2, got {nt}")));
        }
        let o3 = domain.omega3();
        let hx = o3.width() / nx as f64;
        let hy = o3.height() / ny as f64;
        let checks = [
            ("hx | L", divides(hx, domain.length)),
            ("hx | l", divides(hx, domain.margin)),
            ("hx | l/2", divides(hx, domain.omega1_margin)),
            ("hy | W", divides(hy, domain.width)),
            ("hy | l", divides(hy, domain.margin)),
        ];
        if let Some((what, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(Error::InvalidParameter(format!(
                "grid {nx}x{ny} not aligned with the domain ({what} fails, hx={hx}, hy={hy})"
            )));
        }
        Ok(GridSpec {
            nx,
            ny,
            hx,
            hy,
            x0: o3.x0,
            y0: o3.y0,
            nt,
            dt: 1.0 / nt as f64,
        })
    }

    /// Grid with square cells of size `h` and `nt` time steps.
    pub fn with_spacing(domain: &DomainSpec, h: f64, nt: usize) -> Result<Self> {
        let o3 = domain.omega3();
        let nx = (o3.width() / h).round() as usize;
        let ny = (o3.height() / h).round() as usize;
        Self::new(domain, nx, ny, nt)
    }

    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.nt).map(|n| self.time(n)).collect()
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        [self.x0 + i as f64 * self.hx, self.y0 + j as f64 * self.hy]
    }
}

/// `C^∞` step: 0 for `u <= 0`, 1 for `u >= 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

pub fn smooth_step_deriv(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        let v = 1.0 - u;
        let a = (-1.0 / u).exp();
        let b = (-1.0 / v).exp();
        let da = a / (u * u);
        let db = b / (v * v);
        (da * b + a * db) / ((a + b) * (a + b))
    }
}

/// Bump with plateau exactly on `[1/6, 5/6]` and support `[0, 1]`.
fn plateau_bump(s: f64) -> f64 {
    smooth_step(6.0 * s) * smooth_step(6.0 * (1.0 - s))
}

fn plateau_bump_deriv(s: f64) -> f64 {
    6.0 * smooth_step_deriv(6.0 * s) * smooth_step(6.0 * (1.0 - s))
        - 6.0 * smooth_step(6.0 * s) * smooth_step_deriv(6.0 * (1.0 - s))
}

/// The return profile `y*(x,t) = γ(t) χ(x) e₁` together with the cutoff `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnProfile {
    pub domain: DomainSpec,
    /// Plateau speed `M`.
    pub speed: f64,
    /// `λ = 1` on `[0,d]`, `λ = 0` on `[2d,1]`.
    pub lambda_d: f64,
}

impl ReturnProfile {
    pub fn new(domain: DomainSpec, speed: f64, lambda_d: f64) -> Result<Self> {
        if !(speed > 0.0) {
            return Err(Error::InvalidParameter(format!("plateau speed must be positive, got {speed}")));
        }
        if !(lambda_d > 0.0 && lambda_d < 0.5) {
            return Err(Error::InvalidParameter(format!("d must lie in (0, 1/2), got {lambda_d}")));
        }
        if !(domain.chi_margin > 0.0 && domain.chi_margin < domain.margin) {
            return Err(Error::InvalidParameter("chi margin must lie in (0, l)".into()));
        }
        Ok(ReturnProfile { domain, speed, lambda_d })
    }

    pub fn gamma(&self, t: f64) -> f64 {
        self.speed * plateau_bump((t - 0.125) / 0.75)
    }

    pub fn gamma_deriv(&self, t: f64) -> f64 {
        self.speed * plateau_bump_deriv((t - 0.125) / 0.75) / 0.75
    }

    fn chi_1d(&self, s: f64, lo: f64, hi: f64) -> f64 {
        let w = self.domain.margin - self.domain.chi_margin;
        if s < lo {
            1.0 - smooth_step((lo - s) / w)
        } else if s > hi {
            1.0 - smooth_step((s - hi) / w)
        } else {
            1.0
        }
    }

    /// Spatial cutoff: 1 on `Ω̄₂`, vanishing `chi_margin` inside `∂Ω₃`.
    pub fn chi(&self, p: Point) -> f64 {
        let o2 = self.domain.omega2();
        self.chi_1d(p[0], o2.x0, o2.x1) * self.chi_1d(p[1], o2.y0, o2.y1)
    }

    pub fn lambda(&self, t: f64) -> f64 {
        1.0 - smooth_step((t - self.lambda_d) / self.lambda_d)
    }

    /// `y*` without the domain check; zero outside `supp χ`.
    #[inline]
    pub fn y_star_at(&self, p: Point, t: f64) -> Point {
        let g = self.gamma(t);
        if g == 0.0 {
            return [0.0, 0.0];
        }
        [g * self.chi(p), 0.0]
    }

    pub fn y_star(&self, p: Point, t: f64) -> Result<Point> {
        if !self.domain.omega3().contains(p, 1e-12) {
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
        Ok(self.y_star_at(p, t))
    }

    /// `∫₀¹ γ`, by composite Simpson on a fine grid.
    pub fn gamma_integral(&self) -> f64 {
        let n = 4096;
        let h = 1.0 / n as f64;
        let mut s = self.gamma(0.0) + self.gamma(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * self.gamma(i as f64 * h);
        }
        s * h / 3.0
    }
}

/// The decreasing time weight `ω_k(t) = (1/2 + t/8)^(-k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight {
    pub k: f64,
}

impl Weight {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::InvalidParameter(format!("weight exponent must be positive, got {k}")));
        }
        Ok(Weight { k })
    }

    pub fn eval(&self, t: f64) -> f64 {
        (0.5 + t / 8.0).powf(-self.k)
    }

    /// `∫₀¹ ω_k(s)^{-2} ds` by composite Simpson with `n` (even) subintervals.
    pub fn inverse_square_integral(&self, n: usize) -> f64 {
        simpson(|s| self.eval(s).powi(-2), 0.0, 1.0, n)
    }

    /// `∫₀ᵗ ω_k(s)^{-1} ds` by composite Simpson.
    pub fn inverse_integral(&self, t: f64, n: usize) -> f64 {
        simpson(|s| 1.0 / self.eval(s), 0.0, t, n)
    }

    /// `sup_t ω_k(t) ∫₀¹ ω_k^{-2}` over `nt+1` sampled times; the quadrature uses
    /// 64 Simpson subintervals per sample interval.
    pub fn trick_value(&self, nt: usize) -> f64 {
        let integral = self.inverse_square_integral(64 * nt.max(2));
        (0..=nt)
            .map(|i| self.eval(i as f64 / nt as f64) * integral)
            .fold(0.0, f64::max)
    }

    /// The bound `5 / (2k + 1)`.
    pub fn trick_bound(&self) -> f64 {
        5.0 / (2.0 * self.k + 1.0)
    }
}

/// Weighted sup check `sup_t ω_k(t) ∫₀¹ ω_k^{-2} <= 5/(2k+1)`, returned as `(value, bound)`.
pub fn weight_trick_bound(k: f64, nt: usize) -> Result<(f64, f64)> {
    let w = Weight::new(k)?;
    Ok((w.trick_value(nt), w.trick_bound()))
}

pub(crate) fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 1 { n + 1 } else { n.max(2) };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_domain() -> DomainSpec {
        build_domains(2.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn omega2_matches_margin() {
        let d = default_domain();
        assert_eq!(d.omega2(), Rect::new(-0.5, 2.5, -0.5, 1.5));
        let o1 = d.omega1();
        assert_eq!((o1.y0, o1.y1), (0.0, 1.0));
    }

    #[test]
    fn rejects_nonpositive_dimensions() {
        assert!(matches!(build_domains(0.0, 1.0, 0.5), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_domains(1.0, -1.0, 0.5), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_domains(1.0, 1.0, 0.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn nesting_holds_on_every_node() {
        let d = build_domains(1.0, 1.0, 0.25).unwrap();
        let g = GridSpec::with_spacing(&d, 1.0 / 32.0, 16).unwrap();
        let (o, o1, o2, o3) = (d.omega(), d.omega1(), d.omega2(), d.omega3());
        let eps = 1e-12;
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                let p = g.node(i, j);
                assert!(o3.contains(p, eps));
                if o.contains(p, eps) {
                    assert!(o1.contains(p, eps));
                }
                if o1.contains(p, eps) {
                    assert!(o2.contains_open(p, eps));
                    assert!(p[1] >= -eps && p[1] <= d.width + eps);
                }
                if o2.contains(p, eps) {
                    assert!(o3.contains_open(p, eps));
                }
            }
        }
    }

    #[test]
    fn misaligned_grid_is_rejected() {
        let d = default_domain();
        assert!(GridSpec::new(&d, 128, 64, 256).is_err());
        let g = GridSpec::new(&d, 128, 96, 256).unwrap();
        assert!((g.hx - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_support_and_plateau() {
        let p = ReturnProfile::new(default_domain(), 7.5, 0.1).unwrap();
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            let g = p.gamma(t);
            assert!(g >= 0.0 && g <= 7.5 + 1e-12);
            if (0.25..=0.75).contains(&t) {
                assert_eq!(g, 7.5);
            }
            if t <= 0.125 || t >= 0.875 {
                assert_eq!(g, 0.0);
            }
        }
    }

    #[test]
    fn gamma_derivative_matches_finite_difference() {
        let p = ReturnProfile::new(default_domain(), 7.5, 0.1).unwrap();
        for &t in &[0.15, 0.2, 0.23, 0.5, 0.8, 0.86] {
            let h = 1e-6;
            let fd = (p.gamma(t + h) - p.gamma(t - h)) / (2.0 * h);
            assert!((fd - p.gamma_deriv(t)).abs() < 1e-5 * (1.0 + fd.abs()), "t={t}");
        }
    }

    #[test]
    fn chi_and_lambda_constraints() {
        let d = default_domain();
        let p = ReturnProfile::new(d, 7.5, 0.1).unwrap();
        let g = GridSpec::new(&d, 128, 96, 256).unwrap();
        let o2 = d.omega2();
        let o3 = d.omega3();
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                let x = g.node(i, j);
                let c = p.chi(x);
                assert!((0.0..=1.0).contains(&c));
                if o2.contains(x, 1e-12) {
                    assert_eq!(c, 1.0);
                }
                if !o3.inflate(-d.chi_margin).contains(x, -1e-12) {
                    assert_eq!(c, 0.0);
                }
            }
        }
        let mut prev = 1.0;
        for n in 0..=256 {
            let t = n as f64 / 256.0;
            let l = p.lambda(t);
            assert!(l <= prev + 1e-15);
            prev = l;
            if t <= 0.1 {
                assert_eq!(l, 1.0);
            }
            if t >= 0.2 {
                assert_eq!(l, 0.0);
            }
        }
    }

    #[test]
    fn y_star_values() {
        let d = default_domain();
        let p = ReturnProfile::new(d, 7.5, 0.1).unwrap();
        assert_eq!(p.y_star([1.0, 0.5], 0.5).unwrap(), [7.5, 0.0]);
        assert_eq!(p.y_star([-0.5, 1.5], 0.5).unwrap(), [7.5, 0.0]);
        assert_eq!(p.y_star([1.3, 0.2], 0.0).unwrap(), [0.0, 0.0]);
        assert_eq!(p.y_star([-1.0, 0.3], 0.5).unwrap(), [0.0, 0.0]);
        assert_eq!(p.y_star([3.0, 2.0], 0.5).unwrap(), [0.0, 0.0]);
        assert!(matches!(p.y_star([3.1, 0.0], 0.5), Err(Error::OutsideDomain(..))));
    }

    #[test]
    fn weight_endpoints() {
        for k in [1.0, 4.0, 8.0, 13.0] {
            let w = Weight::new(k).unwrap();
            assert!((w.eval(0.0) - 2f64.powf(k)).abs() <= 1e-12 * 2f64.powf(k));
            assert!((w.eval(1.0) - 1.6f64.powf(k)).abs() <= 1e-12 * 1.6f64.powf(k));
            let mut prev = f64::INFINITY;
            for i in 0..=64 {
                let v = w.eval(i as f64 / 64.0);
                assert!(v > 1.0 && v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn weight_trick_against_closed_form() {
        for k in [4.0, 8.0, 16.0, 32.0] {
            let w = Weight::new(k).unwrap();
            let quad = w.inverse_square_integral(64 * 256);
            let exact = 8.0 / (2.0 * k + 1.0) * (0.625f64.powf(2.0 * k + 1.0) - 0.5f64.powf(2.0 * k + 1.0));
            // error of the weighted quantity, which is what the bound constrains
            assert!(w.eval(0.0) * (quad - exact).abs() <= 1e-10, "k={k}");
            let (v, b) = weight_trick_bound(k, 256).unwrap();
            assert!(v <= b, "k={k}: {v} > {b}");
        }
        assert!((Weight::new(8.0).unwrap().trick_bound() - 5.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_weight_product_decays_in_k() {
        for &t in &[0.1, 0.5, 1.0] {
            let mut prev = f64::INFINITY;
            for k in [4.0, 8.0, 16.0, 32.0, 64.0] {
                let w = Weight::new(k).unwrap();
                let v = w.eval(t) * w.inverse_integral(t, 4096);
                assert!(v < prev, "t={t}, k={k}");
                prev = v;
            }
        }
    }
}
