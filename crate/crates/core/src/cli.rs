//! Command-line run modes and their artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use log::info;

use crate::config::Config;
use crate::controller::{iterate_to_fixed_point, perturbed_flush_reports, IterateOptions, Problem};
use crate::error::{Error, Result};
use crate::fields::{measure_extension_norm, ScalarField, VectorField};
use crate::flow::{flush_check, FlowMap, FnField, ReturnField};
use crate::geometry::weight_trick_bound;
use crate::glue::{
    assemble_global, check_trajectory, export_trajectory, extract_controls, import_trajectory, return_segment, ControlTrajectory, GlueOptions,
    Segment,
};
use crate::plot;
use crate::solvers::transport_solve;
use crate::verify::{res_tol, residual_curled, transport_estimate_check, VerifyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    DemoReturn,
    NullControl,
    GlobalControl,
    Verify,
    LemmaChecks,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "duct-control", version, about = "Boundary control of 2D ideal MHD in a duct")]
pub struct Cli {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// TOML configuration; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplies nx, ny and nt.
    #[arg(long, default_value_t = 1.0)]
    pub resolution_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 2,
    NumericalFailure = 3,
    VerificationFailure = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Exit status for an error raised while running `mode`.
pub fn classify(mode: Mode, e: &Error) -> ExitStatus {
    match e {
        Error::Format { .. } if mode == Mode::Verify => ExitStatus::VerificationFailure,
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::UnsupportedOrder(_)
        | Error::UnsupportedDomain(_)
        | Error::Geometry(_)
        | Error::DataRejected(_)
        | Error::Format { .. }
        | Error::Io(_) => ExitStatus::ConfigError,
        _ => ExitStatus::NumericalFailure,
    }
}

/// Loads the configuration and applies the command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.with_resolution_scale(cli.resolution_scale)
}

/// Runs one mode; returns the report whose failures map to exit status 4.
pub fn execute(cli: &Cli, cfg: &Config) -> Result<VerifyReport> {
    let out = &cli.out_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    let report = match cli.mode {
        Mode::DemoReturn => demo_return(cfg, out)?,
        Mode::NullControl => null_control(cfg, out)?,
        Mode::GlobalControl => global_control(cfg, out)?,
        Mode::Verify => verify_stored(cfg, out)?,
        Mode::LemmaChecks => lemma_checks(cfg, out)?,
    };
    fs::write(out.join("report.txt"), report.to_table())?;
    Ok(report)
}

/// Full command: config, run, report. Prints the table on stdout and a single
/// diagnostic line on stderr for failures.
pub fn run(cli: &Cli) -> ExitStatus {
    let cfg = match resolve_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitStatus::ConfigError;
        }
    };
    match execute(cli, &cfg) {
        Ok(rep) => {
            print!("{}", rep.to_table());
            if rep.all_pass() {
                ExitStatus::Success
            } else {
                let failed: Vec<&str> = rep.rows.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
                eprintln!("verification failed: {}", failed.join(", "));
                ExitStatus::VerificationFailure
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            classify(cli.mode, &e)
        }
    }
}

fn write_summary(out: &Path, rows: &[(&str, String)]) -> Result<()> {
    let mut s = String::new();
    for (k, v) in rows {
        let _ = writeln!(s, "{k} = {v}");
    }
    fs::write(out.join("summary.txt"), s)?;
    Ok(())
}

fn problem_summary(p: &Problem) -> Vec<(&'static str, String)> {
    vec![
        ("M", format!("{:.6e}", p.profile.speed)),
        ("c_pi", format!("{:.6e}", p.c_pi)),
        ("nu", format!("{:.6e}", p.nu)),
        ("delta", format!("{:.6e}", p.delta())),
        ("h", format!("{:.6e}", p.grid.h())),
        ("dt", format!("{:.6e}", p.grid.dt)),
    ]
}

fn iterate_options(cfg: &Config, p: &Problem) -> IterateOptions {
    let mut it = IterateOptions::from_params(&p.params);
    it.track_flush = cfg.control.track_flush;
    it.track_membership = cfg.control.track_membership;
    it
}

/// `u_x` and `H_x` at evenly spaced slices.
fn plot_trajectory(cfg: &Config, traj: &ControlTrajectory, out: &Path) -> Result<()> {
    if !cfg.output.plots || cfg.output.plot_slices == 0 {
        return Ok(());
    }
    let dir = out.join("plots");
    let states: Vec<(f64, &VectorField, &VectorField)> = traj.states().collect();
    let n = states.len();
    let count = cfg.output.plot_slices.min(n);
    for s in 0..count {
        let k = if count == 1 { 0 } else { s * (n - 1) / (count - 1) };
        let (_, u, h) = states[k];
        plot::emit(&dir, &format!("slice_{k:05}_u_x"), &u.x)?;
        plot::emit(&dir, &format!("slice_{k:05}_h_x"), &h.x)?;
    }
    Ok(())
}

fn single_segment(seg: Segment, mu: f64) -> ControlTrajectory {
    ControlTrajectory {
        t_final: seg.t_end(),
        segments: vec![seg],
        eps: 1.0,
        mu,
    }
}

fn demo_return(cfg: &Config, out: &Path) -> Result<VerifyReport> {
    let p = cfg.problem()?;
    let traj = single_segment(return_segment(&p), cfg.data.mu);
    export_trajectory(&traj, &out.join("trajectory"))?;
    let base = flush_check(&FlowMap::new(&ReturnField { profile: p.profile }, p.dt_flow, p.domain.omega3(), p.full.h()), &p.domain, &p.full)?;
    let amp = p.nu * p.c_pi;
    let perturbed = perturbed_flush_reports(&p, amp, p.params.nu_probes, cfg.seed)?;
    let mut csv = String::from("case,passed,margin,seeds\n");
    let _ = writeln!(csv, "return,{},{:.10e},{}", base.passed, base.margin, base.seeds);
    for (i, r) in perturbed.iter().enumerate() {
        let _ = writeln!(csv, "perturbed_{i},{},{:.10e},{}", r.passed, r.margin, r.seeds);
    }
    fs::write(out.join("flush_report.csv"), csv)?;
    let mut rep = check_trajectory(&traj, cfg.verify.res_factor)?;
    rep.at_least("flush margin of the return flow", base.margin, 0.0);
    let worst = perturbed.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    if !perturbed.is_empty() {
        rep.at_least("flush margin under perturbations", worst, 0.0);
    }
    let mut summary = problem_summary(&p);
    summary.push(("perturbation_amplitude", format!("{amp:.6e}")));
    write_summary(out, &summary)?;
    plot_trajectory(cfg, &traj, out)?;
    Ok(rep)
}

fn null_control(cfg: &Config, out: &Path) -> Result<VerifyReport> {
    let p = cfg.problem()?;
    let (d0, _) = cfg.mhd_data();
    let data = d0.elsasser(p.omega, &p.domain, cfg.data.mu)?;
    let fp = iterate_to_fixed_point(&p, &data, iterate_options(cfg, &p))?;
    fs::write(out.join("iteration_log.csv"), fp.report.to_csv())?;
    let traj = single_segment(Segment::from_leg(&fp.traj, 1.0)?, cfg.data.mu);
    export_trajectory(&traj, &out.join("trajectory"))?;

    let (h, dt) = (p.grid.h(), p.grid.dt);
    let mut rep = VerifyReport::default();
    let start = fp.traj.state(0);
    let mismatch = start.zp.sub(&data.zp).max_abs().max(start.zm.sub(&data.zm).max_abs());
    rep.at_most("initial data mismatch", mismatch, 0.0);
    let tol = p.cancel_tol(&data);
    rep.at_most("terminal curl |j(1)|", fp.report.cancel_j, tol);
    rep.at_most("terminal state |z(1)|", fp.report.cancel_z, tol);
    for (name, r) in ["curled residual (+)", "curled residual (-)"].iter().zip(residual_curled(&fp.traj)?) {
        rep.at_most(name, r.max, res_tol(cfg.verify.res_factor, h, dt, r.scale));
    }
    rep.rows.extend(check_trajectory(&traj, cfg.verify.res_factor)?.rows);

    let mut summary = problem_summary(&p);
    summary.push(("data_norm", format!("{:.6e}", fp.report.data_norm)));
    summary.push(("iterations", fp.report.records.len().to_string()));
    if let Some(k) = fp.report.fitted_kappa(10.0 * p.params.tol_x) {
        summary.push(("fitted_kappa", format!("{k:.6e}")));
    }
    write_summary(out, &summary)?;
    plot_trajectory(cfg, &traj, out)?;
    Ok(rep)
}

fn global_control(cfg: &Config, out: &Path) -> Result<VerifyReport> {
    let p = cfg.problem()?;
    let (d0, dt_data) = cfg.mhd_data();
    let (u0, h0) = d0.fields(p.omega, &p.domain);
    let (ut, ht) = dt_data.fields(p.omega, &p.domain);
    let mut g = GlueOptions::new(cfg.data.t_final, iterate_options(cfg, &p));
    g.eps_cap = cfg.data.eps_cap;
    g.max_halvings = cfg.data.max_halvings;
    let run = assemble_global(&p, (&u0, &h0), (&ut, &ht), cfg.data.mu, &g)?;
    fs::write(out.join("iteration_log_first.csv"), run.first.to_csv())?;
    fs::write(out.join("iteration_log_second.csv"), run.second.to_csv())?;
    export_trajectory(&run.traj, &out.join("trajectory"))?;
    write_controls(&run.traj, out)?;

    let mut rep = VerifyReport::default();
    let scale = [&u0, &h0, &ut, &ht].iter().map(|f| f.max_abs()).fold(0.0, f64::max);
    let (a, b) = run.traj.initial();
    // the ε-scaling round trip may move the last bit
    rep.at_most(
        "initial data mismatch",
        a.sub(&u0).max_abs().max(b.sub(&h0).max_abs()),
        4.0 * f64::EPSILON * scale,
    );
    let (a, b) = run.traj.terminal();
    let terminal = a.sub(&ut).max_abs() + b.sub(&ht).max_abs();
    rep.at_most(
        "terminal data mismatch",
        terminal,
        res_tol(cfg.verify.res_factor, p.grid.h(), p.grid.dt, scale),
    );
    rep.rows.extend(check_trajectory(&run.traj, cfg.verify.res_factor)?.rows);

    let mut summary = problem_summary(&p);
    summary.push(("eps", format!("{:.6e}", run.eps)));
    summary.push(("rejected_eps", run.rejected.len().to_string()));
    summary.push(("iterations_first", run.first.records.len().to_string()));
    summary.push(("iterations_second", run.second.records.len().to_string()));
    write_summary(out, &summary)?;
    plot_trajectory(cfg, &run.traj, out)?;
    Ok(rep)
}

/// `controls.csv` (net fluxes) and `controls_normal.csv` (wall traces).
fn write_controls(traj: &ControlTrajectory, out: &Path) -> Result<()> {
    let controls = extract_controls(traj)?;
    let l = traj.lattice();
    let mut flux = String::from("t,flux_plus,flux_minus,flux_tol\n");
    let mut normal = String::from("t,wall,y,zp_n,zm_n\n");
    for c in &controls {
        let _ = writeln!(flux, "{:.10e},{:.10e},{:.10e},{:.10e}", c.t, c.flux[0], c.flux[1], c.flux_tol);
        for (k, (wall, j)) in (0..2).flat_map(|w| (0..l.ny).map(move |j| (w, j))).enumerate() {
            let y = l.node(0, j)[1];
            let _ = writeln!(normal, "{:.10e},{},{:.10e},{:.10e},{:.10e}", c.t, wall, y, c.normal[0][k], c.normal[1][k]);
        }
    }
    fs::write(out.join("controls.csv"), flux)?;
    fs::write(out.join("controls_normal.csv"), normal)?;
    Ok(())
}

fn verify_stored(cfg: &Config, out: &Path) -> Result<VerifyReport> {
    let dir = cfg.verify.snapshot_dir.clone().unwrap_or_else(|| out.join("trajectory"));
    if !dir.join("manifest.txt").is_file() {
        return Err(Error::Config(format!("no trajectory manifest in {}", dir.display())));
    }
    let traj = import_trajectory(&dir)?;
    info!("loaded {} slices from {}", traj.slice_count(), dir.display());
    check_trajectory(&traj, cfg.verify.res_factor)
}

fn lemma_checks(cfg: &Config, out: &Path) -> Result<VerifyReport> {
    let p = cfg.problem()?;
    let mut rep = VerifyReport::default();
    for k in &cfg.lemma.ks {
        let (v, bound) = weight_trick_bound(*k, p.nt())?;
        rep.at_most(&format!("weight trick k={k}"), v, bound);
    }

    let base = flush_check(&FlowMap::new(&ReturnField { profile: p.profile }, p.dt_flow, p.domain.omega3(), p.full.h()), &p.domain, &p.full)?;
    rep.at_least("flush margin of the return flow", base.margin, 0.0);
    let perturbed = perturbed_flush_reports(&p, p.nu * p.c_pi, p.params.nu_probes, cfg.seed)?;
    if !perturbed.is_empty() {
        let worst = perturbed.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        rep.at_least("flush margin under perturbations", worst, 0.0);
    }

    let c1 = measure_extension_norm(&p.domain, &p.full, 1, p.params.alpha)?;
    rep.at_least("extension constant (m=1)", c1, 1.0);
    rep.at_least(&format!("extension constant (m={})", p.params.m_tilde), p.c_pi, 1.0);

    // a bump sheared by a wall-tangent flow on the Ω lattice
    let l = p.omega;
    let (w, cx) = (p.domain.width, 0.5 * p.domain.length);
    let v0 = ScalarField::from_fn(l, |x| (-8.0 * ((x[0] - cx).powi(2) + (x[1] - 0.5 * w).powi(2))).exp());
    let flow = FnField(move |x: [f64; 2], _: f64| [0.5 * (std::f64::consts::PI * x[1] / w).sin(), 0.0]);
    let map = FlowMap::new(&flow, p.dt_flow, l.bounds(), l.h());
    let nt = p.nt();
    let v = transport_solve(&v0, &map, None, nt)?;
    let z = vec![VectorField::from_fn(l, |x| flow.0(x, 0.0)); nt + 1];
    let est = transport_estimate_check(&v, &z, None, p.grid.dt, p.params.alpha, cfg.lemma.transport_samples)?;
    let mut csv = String::from("t,lhs,bound\n");
    for (t, a, b) in &est.samples {
        let _ = writeln!(csv, "{t:.10e},{a:.10e},{b:.10e}");
    }
    fs::write(out.join("transport_estimate.csv"), csv)?;
    rep.at_least("transport estimate slack", est.slack, 0.0);
    write_summary(out, &problem_summary(&p))?;
    Ok(rep)
}
