//! Run configuration (TOML).
//!
//! ```toml
//! [domain]
//! L = 2.0
//! W = 1.0
//! l = 0.5
//!
//! [grid]
//! nx = 128
//! ny = 96
//! nt = 256
//!
//! [control]
//! k = 8.0
//! d = 0.1
//! # M = 7.5
//!
//! [data]
//! mu = 1.0
//! T = 1.0
//! [[data.initial.u.modes]]
//! m = 1
//! n = 1
//! a = 0.01
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{ControlParams, Problem};
use crate::data::{MhdData, StreamFunction};
use crate::error::{Error, Result};
use crate::fields::{measure_extension_norm, Lattice};
use crate::flow::choose_m;
use crate::geometry::{build_domains, DomainSpec, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "W")]
    pub width: f64,
    #[serde(rename = "l")]
    pub margin: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            length: 2.0,
            width: 1.0,
            margin: 0.5,
        }
    }
}

/// Cell counts over `Ω₃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { nx: 128, ny: 96, nt: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub k: f64,
    /// Ramp length of `λ`.
    pub d: f64,
    /// Return speed; chosen by the flushing test when absent.
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m_override: Option<f64>,
    /// Extension constant; measured when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_pi: Option<f64>,
    /// Membership radius; calibrated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    pub m_tilde: usize,
    pub alpha: f64,
    pub tol_x: f64,
    pub max_iter: usize,
    pub flow_substeps: usize,
    pub nu_bisections: usize,
    pub nu_probes: usize,
    pub track_flush: bool,
    pub track_membership: bool,
}

impl Default for ControlConfig {
    fn default() -> Self {
        let p = ControlParams::default();
        ControlConfig {
            k: p.k,
            d: p.lambda_d,
            m_override: None,
            c_pi: None,
            nu: None,
            m_tilde: p.m_tilde,
            alpha: p.alpha,
            tol_x: p.tol_x,
            max_iter: p.max_iter,
            flow_substeps: p.flow_substeps,
            nu_bisections: p.nu_bisections,
            nu_probes: p.nu_probes,
            track_flush: false,
            track_membership: false,
        }
    }
}

/// Random stream-function data; replaces `initial` and `target` when present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomData {
    pub modes: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub mu: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub eps_cap: f64,
    pub max_halvings: usize,
    pub initial: MhdData,
    pub target: MhdData,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomData>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            mu: 1.0,
            t_final: 1.0,
            eps_cap: 0.25,
            max_halvings: 10,
            initial: MhdData::default(),
            target: MhdData::default(),
            random: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Factor in `res_tol = factor (h² + dt²) scale`.
    pub res_factor: f64,
    /// Trajectory directory for `verify`; defaults to `<out-dir>/trajectory`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            res_factor: 50.0,
            snapshot_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaConfig {
    pub ks: Vec<f64>,
    pub transport_samples: usize,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        LemmaConfig {
            ks: vec![4.0, 8.0, 16.0, 32.0],
            transport_samples: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub plots: bool,
    /// Number of evenly spaced slices that get a plot.
    pub plot_slices: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            plots: true,
            plot_slices: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub control: ControlConfig,
    pub data: DataConfig,
    pub verify: VerifyConfig,
    pub lemma: LemmaConfig,
    pub output: OutputConfig,
    pub seed: u64,
}

fn check_modes(what: &str, d: &MhdData) -> Result<()> {
    for f in [&d.u, &d.h] {
        StreamFunction::new(f.modes.clone()).map_err(|e| Error::Config(format!("{what}: {e}")))?;
    }
    Ok(())
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let d = &self.data;
        if !(d.mu > 0.0 && d.mu.is_finite()) {
            return bad(format!("mu must be positive, got {}", d.mu));
        }
        if !(d.t_final > 0.0 && d.t_final.is_finite()) {
            return bad(format!("T must be positive, got {}", d.t_final));
        }
        if !(d.eps_cap > 0.0) {
            return bad(format!("eps_cap must be positive, got {}", d.eps_cap));
        }
        if let Some(r) = d.random {
            if r.modes == 0 || !(r.amplitude >= 0.0 && r.amplitude.is_finite()) {
                return bad(format!("invalid random data {r:?}"));
            }
        }
        check_modes("initial data", &d.initial)?;
        check_modes("target data", &d.target)?;
        if !(self.verify.res_factor > 0.0) {
            return bad("res_factor must be positive".into());
        }
        if self.lemma.ks.iter().any(|k| !(*k > 0.0)) || self.lemma.transport_samples == 0 {
            return bad("lemma ks must be positive and transport_samples nonzero".into());
        }
        if let Some(m) = self.control.m_override {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("M must be positive, got {m}"));
            }
        }
        Ok(())
    }

    /// Refines (or coarsens) space and time by `scale`; `nt` is rounded to an even count.
    pub fn with_resolution_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("resolution scale must be positive, got {scale}")));
        }
        let g = &mut self.grid;
        g.nx = (g.nx as f64 * scale).round() as usize;
        g.ny = (g.ny as f64 * scale).round() as usize;
        g.nt = 2 * ((g.nt as f64 * scale / 2.0).round() as usize).max(1);
        Ok(self)
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        build_domains(self.domain.length, self.domain.width, self.domain.margin)
    }

    pub fn grid_spec(&self, domain: &DomainSpec) -> Result<GridSpec> {
        GridSpec::new(domain, self.grid.nx, self.grid.ny, self.grid.nt)
    }

    pub fn params(&self) -> ControlParams {
        let c = &self.control;
        ControlParams {
            k: c.k,
            m_tilde: c.m_tilde,
            alpha: c.alpha,
            tol_x: c.tol_x,
            max_iter: c.max_iter,
            lambda_d: c.d,
            flow_substeps: c.flow_substeps,
            nu_bisections: c.nu_bisections,
            nu_probes: c.nu_probes,
            seed: self.seed,
        }
    }

    /// Builds the problem, measuring only the constants the config leaves open.
    pub fn problem(&self) -> Result<Problem> {
        let domain = self.domain_spec()?;
        let grid = self.grid_spec(&domain)?;
        let params = self.params();
        let c = &self.control;
        if c.m_override.is_none() && c.c_pi.is_none() && c.nu.is_none() {
            return Problem::new(domain, grid, params);
        }
        let full = Lattice::from_grid(&grid);
        let dt_flow = grid.dt / params.flow_substeps.max(1) as f64;
        let m = match c.m_override {
            Some(m) => m,
            None => choose_m(&domain, &full, params.lambda_d, dt_flow)?,
        };
        let c_pi = match c.c_pi {
            Some(v) => v,
            None => measure_extension_norm(&domain, &full, params.m_tilde, params.alpha)?,
        };
        let nu = match c.nu {
            Some(v) => v,
            None => {
                let profile = crate::geometry::ReturnProfile::new(domain, m, params.lambda_d)?;
                crate::controller::calibrate_nu(&profile, &full, dt_flow, c_pi, params.nu_bisections)?
            }
        };
        Problem::with_constants(domain, grid, params, m, c_pi, nu)
    }

    /// `(initial, target)`, drawn from the seed when `data.random` is set.
    pub fn mhd_data(&self) -> (MhdData, MhdData) {
        match self.data.random {
            Some(r) => (
                MhdData::random(self.seed, r.modes, r.amplitude),
                MhdData::random(self.seed.wrapping_add(1), r.modes, r.amplitude),
            ),
            None => (self.data.initial.clone(), self.data.target.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!((c.grid.nx, c.grid.ny, c.grid.nt), (128, 96, 256));
        assert_eq!(c.params(), ControlParams::default());
    }

    #[test]
    fn round_trip_and_spec_key_names() {
        let text = r#"
seed = 7
[domain]
L = 3.0
W = 1.0
l = 0.5
[grid]
nx = 64
ny = 32
nt = 32
[control]
k = 4.0
d = 0.2
M = 9.0
[data]
T = 2.0
[[data.initial.u.modes]]
m = 1
n = 2
a = 0.01
"#;
        let c = Config::from_toml(text).unwrap();
        assert_eq!(c.domain.length, 3.0);
        assert_eq!(c.control.m_override, Some(9.0));
        assert_eq!(c.data.t_final, 2.0);
        assert_eq!(c.data.initial.u.modes[0].n, 2);
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        for text in [
            "[grid]\nnx = \"many\"",
            "bogus = 1",
            "[data]\nmu = -1.0",
            "[data]\nT = 0.0",
            "[[data.initial.h.modes]]\nm = 1\nn = 0\na = 1.0",
            "[control]\nM = -2.0",
            "[lemma]\nks = [4.0, 0.0]",
        ] {
            assert!(matches!(Config::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn resolution_scale_refines_all_axes() {
        let c = Config::default().with_resolution_scale(0.5).unwrap();
        assert_eq!((c.grid.nx, c.grid.ny, c.grid.nt), (64, 48, 128));
        let d = c.domain_spec().unwrap();
        assert_eq!(c.grid_spec(&d).unwrap().h(), 1.0 / 16.0);
        assert!(Config::default().with_resolution_scale(0.0).is_err());
        // misaligned grids surface when the grid is built
        let c = Config::default().with_resolution_scale(0.3).unwrap();
        assert!(c.grid_spec(&d).is_err());
    }

    #[test]
    fn random_data_follows_the_seed() {
        let mut c = Config::default();
        c.data.random = Some(RandomData { modes: 4, amplitude: 0.1 });
        c.seed = 3;
        let (a, b) = c.mhd_data();
        assert_ne!(a, b);
        assert_eq!(c.mhd_data(), (a.clone(), b));
        c.seed = 4;
        assert_ne!(c.mhd_data().0, a);
    }

    #[test]
    fn explicit_constants_skip_calibration() {
        let mut c = Config::default().with_resolution_scale(0.5).unwrap();
        c.grid.nt = 16;
        c.control.m_override = Some(7.5);
        c.control.c_pi = Some(40.0);
        c.control.nu = Some(0.1);
        let p = c.problem().unwrap();
        assert_eq!((p.profile.speed, p.c_pi, p.nu), (7.5, 40.0, 0.1));
    }
}
