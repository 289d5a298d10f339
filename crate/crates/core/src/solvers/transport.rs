//! Semi-Lagrangian transport along characteristics.
//!
//! Values are carried along feet of the flow over two time steps, so the even and
//! odd levels form two interleaved chains; the source integral over each double
//! step uses Simpson's rule on the trajectory (the first odd step uses the
//! trapezoid rule). Several quantities sharing one flow are advanced together.

use crate::error::Result;
use crate::fields::{Bicubic, Lattice, ScalarField};
use crate::flow::{FlowMap, VelocityField};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `∂_t v + (z·∇)v = G`, data at `t = 0`.
    Forward,
    /// `∂_t v + (z·∇)v = -G`, data at `t = 1`; `v(x,t) = v(Z(x,t,1),1) + ∫_t^1 G(Z(x,t,s),s) ds`.
    Backward,
}

/// One transported quantity: its data on the lattice and an optional source per slice.
pub struct Chain<'a> {
    pub data: ScalarField,
    pub source: Option<&'a [ScalarField]>,
}

/// Feet of every lattice node at levels `n ∓ 1` and `n ∓ 2`.
fn feet<V: VelocityField + ?Sized>(
    map: &FlowMap<V>,
    nodes: &[Point],
    t: f64,
    step: f64,
    two: bool,
) -> Result<(Vec<Point>, Vec<Point>)> {
    let samples = if two { 2 } else { 1 };
    let mut tr = map.trajectories(nodes, t, t + samples as f64 * step, samples)?;
    let f2 = if two { tr.pop().unwrap() } else { Vec::new() };
    Ok((tr.swap_remove(1), f2))
}

/// Advances all chains over the controller time grid with `nt` steps and calls
/// `observe(level, values)` at every level, in the order of integration.
pub fn transport_chains<V, O>(
    map: &FlowMap<V>,
    lattice: Lattice,
    nt: usize,
    direction: Direction,
    chains: &[Chain],
    mut observe: O,
) -> Result<()>
where
    V: VelocityField + ?Sized,
    O: FnMut(usize, &[ScalarField]) -> Result<()>,
{
    let dt = 1.0 / nt as f64;
    let interp = Bicubic::new(lattice);
    let nodes: Vec<Point> = lattice.nodes().collect();
    let (start, sign): (usize, isize) = match direction {
        Direction::Forward => (0, 1),
        Direction::Backward => (nt, -1),
    };
    let level = |k: usize| (start as isize + sign * k as isize) as usize;
    let step = -(sign as f64) * dt;

    let current: Vec<ScalarField> = chains.iter().map(|c| c.data.clone()).collect();
    observe(start, &current)?;
    // values at levels k-1 and k-2 (in integration order)
    let mut prev1 = current;
    let mut prev2: Option<Vec<ScalarField>> = None;

    for k in 1..=nt {
        let n = level(k);
        let t = n as f64 * dt;
        let two = k >= 2;
        let (f1, f2) = feet(map, &nodes, t, step, two)?;
        let mut next = Vec::with_capacity(chains.len());
        for (c, chain) in chains.iter().enumerate() {
            let mut out = ScalarField::zeros(lattice);
            let src = chain.source;
            for (idx, x) in nodes.iter().enumerate() {
                let _ = x;
                let s1 = interp.stencil(f1[idx]);
                let v = if two {
                    let s2 = interp.stencil(f2[idx]);
                    let mut v = interp.apply(&s2, &prev2.as_ref().unwrap()[c].data);
                    if let Some(g) = src {
                        v += dt / 3.0
                            * (interp.apply(&s2, &g[level(k - 2)].data)
                                + 4.0 * interp.apply(&s1, &g[level(k - 1)].data)
                                + g[n].data[idx]);
                    }
                    v
                } else {
                    let mut v = interp.apply(&s1, &prev1[c].data);
                    if let Some(g) = src {
                        v += 0.5 * dt * (interp.apply(&s1, &g[level(k - 1)].data) + g[n].data[idx]);
                    }
                    v
                };
                out.data[idx] = v;
            }
            next.push(out);
        }
        observe(n, &next)?;
        prev2 = Some(std::mem::replace(&mut prev1, next));
    }
    Ok(())
}

/// Solves `∂_t j + (z·∇)j = G`, `j(·,0) = j0`, on the lattice of `j0`; returns all
/// `nt + 1` levels.
pub fn transport_solve<V: VelocityField + ?Sized>(
    j0: &ScalarField,
    map: &FlowMap<V>,
    source: Option<&[ScalarField]>,
    nt: usize,
) -> Result<Vec<ScalarField>> {
    let mut out = vec![ScalarField::zeros(j0.lattice); nt + 1];
    transport_chains(
        map,
        j0.lattice,
        nt,
        Direction::Forward,
        &[Chain {
            data: j0.clone(),
            source,
        }],
        |n, v| {
            out[n] = v[0].clone();
            Ok(())
        },
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FnField;
    use crate::geometry::Rect;

    fn lattice(n: usize) -> Lattice {
        Lattice {
            nx: 2 * n + 1,
            ny: n + 1,
            hx: 1.0 / n as f64,
            hy: 1.0 / n as f64,
            x0: -1.0,
            y0: 0.0,
        }
    }

    fn bump(p: Point) -> f64 {
        let r2 = ((p[0] + 0.4) / 0.2).powi(2) + ((p[1] - 0.5) / 0.2).powi(2);
        if r2 < 1.0 {
            (1.0 - r2).powi(4)
        } else {
            0.0
        }
    }

    #[test]
    fn constant_velocity_translates() {
        let l = lattice(32);
        let field = FnField(|_: Point, _: f64| [0.5, 0.0]);
        let map = FlowMap::new(&field, 1.0 / 128.0, l.bounds(), l.h());
        let j0 = ScalarField::from_fn(l, bump);
        let sol = transport_solve(&j0, &map, None, 32).unwrap();
        let exact = ScalarField::from_fn(l, |p| bump([p[0] - 0.5, p[1]]));
        assert!(sol[32].sub(&exact).max_abs() < 0.05);
    }

    #[test]
    fn pure_source_integrates_in_time() {
        let l = lattice(8);
        let field = FnField(|_: Point, _: f64| [0.3, -0.1]);
        let map = FlowMap::new(&field, 1.0 / 64.0, Rect::new(-100.0, 100.0, -100.0, 100.0), 1.0);
        let nt = 16;
        let g: Vec<ScalarField> = (0..=nt)
            .map(|n| {
                let t = n as f64 / nt as f64;
                ScalarField::from_fn(l, |_| 3.0 * t * t + 1.0)
            })
            .collect();
        let sol = transport_solve(&ScalarField::zeros(l), &map, Some(&g), nt).unwrap();
        for (n, s) in sol.iter().enumerate() {
            let t = n as f64 / nt as f64;
            // Simpson is exact for quadratics, trapezoid only on the first odd step
            let tol = if n % 2 == 1 { 1e-3 } else { 1e-12 };
            assert!(s.data.iter().all(|v| (v - (t * t * t + t)).abs() < tol), "level {n}");
        }
    }

    #[test]
    fn range_is_preserved_without_source() {
        let l = lattice(32);
        let field = FnField(|p: Point, t: f64| {
            let s = (std::f64::consts::PI * p[1]).sin();
            [0.6 * s * (1.0 + t), 0.1 * (std::f64::consts::PI * p[0]).sin() * s]
        });
        let map = FlowMap::new(&field, 1.0 / 128.0, l.bounds(), l.h());
        let j0 = ScalarField::from_fn(l, |p| (2.0 * p[0]).sin() * (3.0 * p[1]).cos());
        let (lo, hi) = j0.min_max();
        let sol = transport_solve(&j0, &map, None, 32).unwrap();
        for s in &sol {
            let (a, b) = s.min_max();
            assert!(a >= lo - 1e-3 * (hi - lo) && b <= hi + 1e-3 * (hi - lo));
        }
    }

    #[test]
    fn backward_direction_mirrors_forward() {
        let l = lattice(8);
        let field = FnField(|_: Point, _: f64| [0.0, 0.0]);
        let map = FlowMap::new(&field, 1.0 / 64.0, l.bounds(), l.h());
        let nt = 8;
        let g: Vec<ScalarField> = (0..=nt).map(|n| ScalarField::from_fn(l, |_| (n as f64 / nt as f64) * 2.0)).collect();
        let mut k0 = None;
        transport_chains(
            &map,
            l,
            nt,
            Direction::Backward,
            &[Chain {
                data: ScalarField::zeros(l),
                source: Some(&g),
            }],
            |n, v| {
                if n == 0 {
                    k0 = Some(v[0].clone());
                }
                Ok(())
            },
        )
        .unwrap();
        // ∫_0^1 2t dt = 1
        assert!(k0.unwrap().data.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}
