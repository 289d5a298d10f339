//! Divergence-free, wall-tangent data from truncated stream-function series
//! `ψ = Σ a_mn cos(mπx/L) sin(nπy/W)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elsasser::{to_elsasser, ElsasserState};
use crate::error::{Error, Result};
use crate::fields::{perp_grad, Lattice, ScalarField, VectorField};
use crate::geometry::DomainSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub m: usize,
    /// Must be at least 1.
    pub n: usize,
    pub a: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamFunction {
    pub modes: Vec<Mode>,
}

impl StreamFunction {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        if let Some(md) = modes.iter().find(|md| md.n == 0 || !md.a.is_finite()) {
            return Err(Error::DataRejected(format!("invalid stream mode {md:?}")));
        }
        Ok(StreamFunction { modes })
    }

    /// `count` modes with `m < 4`, `1 <= n < 4` and amplitudes uniform in
    /// `[-1, 1] / (m + n)²`.
    pub fn random(seed: u64, count: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (0..count)
            .map(|_| {
                let m = rng.gen_range(0..4);
                let n = rng.gen_range(1..4);
                Mode {
                    m,
                    n,
                    a: rng.gen_range(-1.0..1.0) / ((m + n) * (m + n)) as f64,
                }
            })
            .collect();
        StreamFunction { modes }
    }

    pub fn scaled(&self, s: f64) -> Self {
        StreamFunction {
            modes: self.modes.iter().map(|md| Mode { a: md.a * s, ..*md }).collect(),
        }
    }

    /// `ψ` on the `Ω` lattice; rows on the walls are exactly zero.
    pub fn psi(&self, omega: Lattice, domain: &DomainSpec) -> ScalarField {
        let pi = std::f64::consts::PI;
        let (l, w) = (domain.length, domain.width);
        let mut f = ScalarField::from_fn(omega, |p| {
            self.modes
                .iter()
                .map(|md| md.a * (md.m as f64 * pi * p[0] / l).cos() * (md.n as f64 * pi * p[1] / w).sin())
                .sum()
        });
        for i in 0..omega.nx {
            f.set(i, 0, 0.0);
            f.set(i, omega.ny - 1, 0.0);
        }
        f
    }

    /// `∇⊥ψ`: discretely divergence-free, normal component zero on the walls.
    pub fn field(&self, omega: Lattice, domain: &DomainSpec) -> VectorField {
        perp_grad(&self.psi(omega, domain))
    }
}

/// MHD data `(u, H)` generated from two stream functions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MhdData {
    pub u: StreamFunction,
    pub h: StreamFunction,
}

impl MhdData {
    pub fn random(seed: u64, count: usize, amplitude: f64) -> Self {
        MhdData {
            u: StreamFunction::random(seed, count).scaled(amplitude),
            h: StreamFunction::random(seed.wrapping_add(0x9e37_79b9), count).scaled(amplitude),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        MhdData {
            u: self.u.scaled(s),
            h: self.h.scaled(s),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.u.modes.iter().chain(&self.h.modes).all(|m| m.a == 0.0)
    }

    pub fn fields(&self, omega: Lattice, domain: &DomainSpec) -> (VectorField, VectorField) {
        (self.u.field(omega, domain), self.h.field(omega, domain))
    }

    pub fn elsasser(&self, omega: Lattice, domain: &DomainSpec, mu: f64) -> Result<ElsasserState> {
        let (u, h) = self.fields(omega, domain);
        to_elsasser(&u, &h, mu)
    }
}
