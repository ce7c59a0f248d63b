//! The `plflow` command line.
//!
//! Exit codes: 0 success, 1 a verify check failed, 2 bad arguments or
//! malformed input, 3 I/O failure, 4 degenerate metric, 5 flow degenerated or
//! its step underflowed, 6 flow hit `--t-max` without converging.

pub mod mesh_file;
pub mod trace_file;
pub mod verify;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::complex::{Builtin, Triangulation};
use crate::curvature::{
    self, curvature_state, first_degenerate_tet, jacobian_l, rank_check, stability_check, CurvatureError, PLMetric,
    EIG_REL_TOL,
};
use crate::flows::{self, run_flow, trial_rng, FlowConfig, FlowError, FlowKind, FlowStatus};
use mesh_file::{Mesh, MeshError};
use trace_file::{write_trace, TraceError};
use verify::{run_suite, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_FLOW_FAILED: i32 = 5;
pub const EXIT_MAX_TIME: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "plflow", version, about = "Combinatorial Ricci curvature and curvature flows on PL 3-manifolds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a built-in triangulation with uniform edge lengths.
    Mesh(MeshArgs),
    /// Edge curvatures and global functionals of a mesh.
    Curvature(CurvatureArgs),
    /// Curvature Jacobian diagnostics.
    Laplacian(LaplacianArgs),
    /// Integrate a curvature flow.
    Flow(FlowArgs),
    /// Run the built-in numerical checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum BuiltinArg {
    SixteenCell,
    Pentachoron,
    SingleTet,
}

impl From<BuiltinArg> for Builtin {
    fn from(b: BuiltinArg) -> Self {
        match b {
            BuiltinArg::SixteenCell => Builtin::SixteenCell,
            BuiltinArg::Pentachoron => Builtin::Pentachoron,
            BuiltinArg::SingleTet => Builtin::SingleTet,
        }
    }
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[arg(long, value_enum)]
    pub builtin: BuiltinArg,
    /// Common edge length.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2, allow_negative_numbers = true)]
    pub length: f64,
    /// Background curvature stored in the file.
    #[arg(short = 'K', long = "k", default_value_t = 0.0, allow_negative_numbers = true)]
    pub k: f64,
    /// Output path; standard output when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurvatureArgs {
    pub mesh: PathBuf,
    /// Override the background curvature of the file.
    #[arg(short = 'K', long = "k", allow_negative_numbers = true)]
    pub k: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LaplacianArgs {
    pub mesh: PathBuf,
    #[arg(short = 'K', long = "k", allow_negative_numbers = true)]
    pub k: Option<f64>,
    /// Include all eigenvalues of the symmetrized Jacobian.
    #[arg(long)]
    pub spectrum: bool,
    /// Include a kernel basis.
    #[arg(long)]
    pub kernel: bool,
    /// Include the linear stability report (Einstein or flat metrics only).
    #[arg(long)]
    pub stability: bool,
    /// Relative finite-difference step.
    #[arg(long, default_value_t = curvature::DEFAULT_H_REL)]
    pub h_rel: f64,
    /// Relative threshold for zero eigenvalues.
    #[arg(long, default_value_t = EIG_REL_TOL)]
    pub rank_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlowArg {
    Crf,
    Ncrf,
    Lcf,
    Nlcf,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    pub mesh: PathBuf,
    #[arg(long, value_enum)]
    pub flow: FlowArg,
    /// Mesh whose curvature is the target of `nlcf`.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(short = 'K', long = "k", allow_negative_numbers = true)]
    pub k: Option<f64>,
    /// Initial step.
    #[arg(long, default_value_t = FlowConfig::default().dt0)]
    pub dt: f64,
    #[arg(long, default_value_t = FlowConfig::default().dt_min)]
    pub dt_min: f64,
    #[arg(long, default_value_t = FlowConfig::default().t_max)]
    pub t_max: f64,
    /// Convergence tolerance on the curvature residual.
    #[arg(long, default_value_t = FlowConfig::default().tol_converge)]
    pub tol: f64,
    /// Relative slack for the monotone functional.
    #[arg(long, default_value_t = FlowConfig::default().tol_mono)]
    pub tol_mono: f64,
    #[arg(long, default_value_t = FlowConfig::default().h_rel)]
    pub h_rel: f64,
    /// Seed for `--perturb`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiply each length by a uniform factor in [1 - amp, 1 + amp] first.
    #[arg(long)]
    pub perturb: Option<f64>,
    /// Keep integrating after convergence until `--t-max`.
    #[arg(long)]
    pub no_stop: bool,
    /// Trace CSV path.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write the final metric as a mesh file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Identities,
    Regular,
    Flows,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Identities => Suite::Identities,
            SuiteArg::Regular => Suite::Regular,
            SuiteArg::Flows => Suite::Flows,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    pub suite: SuiteArg,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("degenerate metric at tetrahedron {tet} {vertices:?}")]
    Degenerate { tet: usize, vertices: [usize; 4] },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Degenerate { .. } | CliError::Numerical(_) => EXIT_DEGENERATE,
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Io(e.to_string())
    }
}

fn degenerate(tri: &Triangulation, l: &PLMetric, k: f64, err: CurvatureError) -> CliError {
    let tet = match err {
        CurvatureError::DegenerateMetric { tet } => Some(tet),
        _ => first_degenerate_tet(tri, l, k),
    };
    match tet {
        Some(tet) => CliError::Degenerate {
            tet,
            vertices: tri.tetrahedra()[tet],
        },
        None => CliError::Numerical(err.to_string()),
    }
}

fn print_json<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn load(path: &Path, k: Option<f64>) -> Result<Mesh, CliError> {
    let mut mesh = Mesh::load(path)?;
    if let Some(k) = k {
        if !k.is_finite() {
            return Err(CliError::Usage("K must be finite".into()));
        }
        mesh.k = k;
    }
    Ok(mesh)
}

/// Run one command, writing its report to `out`. Returns the exit code for
/// commands that complete; errors carry their own code.
pub fn run<W: Write>(cli: Cli, out: &mut W) -> Result<i32, CliError> {
    match cli.command {
        Command::Mesh(a) => cmd_mesh(a, out),
        Command::Curvature(a) => cmd_curvature(a, out),
        Command::Laplacian(a) => cmd_laplacian(a, out),
        Command::Flow(a) => cmd_flow(a, out),
        Command::Verify(a) => cmd_verify(a, out),
    }
}

pub fn cmd_mesh<W: Write>(a: MeshArgs, out: &mut W) -> Result<i32, CliError> {
    if !(a.length > 0.0 && a.length.is_finite()) {
        return Err(CliError::Usage(format!("--length must be positive, got {}", a.length)));
    }
    let b = Builtin::from(a.builtin);
    let tri = Triangulation::builtin(b);
    let l = PLMetric::uniform(tri.num_edges(), a.length).map_err(|e| CliError::Usage(e.to_string()))?;
    let mesh = Mesh::new(Some(b.name().to_string()), tri, l, a.k)?;
    match a.out {
        Some(path) => {
            mesh.save(&path)?;
            Mesh::load(&path)?;
        }
        None => out.write_all(mesh.to_json().as_bytes())?,
    }
    Ok(EXIT_OK)
}

pub fn cmd_curvature<W: Write>(a: CurvatureArgs, out: &mut W) -> Result<i32, CliError> {
    let mesh = load(&a.mesh, a.k)?;
    let st = curvature_state(&mesh.tri, &mesh.metric, mesh.k).map_err(|e| degenerate(&mesh.tri, &mesh.metric, mesh.k, e))?;
    print_json(
        out,
        &json!({
            "name": mesh.name,
            "K": mesh.k,
            "num_edges": mesh.tri.num_edges(),
            "ricci": st.ricci,
            "S": st.total,
            "C": st.energy,
            "lambda": st.lambda,
            "einstein_residual": st.einstein_residual,
            "einstein_residual_abs": st.einstein_residual_abs,
            "flat_residual": st.flat_residual,
        }),
    )?;
    Ok(EXIT_OK)
}

pub fn cmd_laplacian<W: Write>(a: LaplacianArgs, out: &mut W) -> Result<i32, CliError> {
    if !(a.h_rel > 0.0 && a.h_rel < 0.5) {
        return Err(CliError::Usage("--h-rel must lie in (0, 0.5)".into()));
    }
    let mesh = load(&a.mesh, a.k)?;
    let (tri, l, k) = (&mesh.tri, &mesh.metric, mesh.k);
    let lap = jacobian_l(tri, l, k, a.h_rel).map_err(|e| degenerate(tri, l, k, e))?;
    let rank = rank_check(&lap, a.rank_tol);
    let eig = lap.eigenvalues();
    let max_abs = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_abs = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let thr = a.rank_tol * max_abs;
    let mut report = json!({
        "name": mesh.name,
        "K": k,
        "dim": lap.dim(),
        "asymmetry": lap.asymmetry,
        "euler_residual": lap.euler_residual,
        "left_euler_residual": lap.left_euler_residual,
        "rank": rank.rank,
        "rank_threshold": rank.threshold,
        "nonsingular": rank.rank == rank.dim,
        "indefinite": eig.iter().any(|&v| v < -thr) && eig.iter().any(|&v| v > thr),
        "min_abs_eigenvalue": min_abs,
        "max_abs_eigenvalue": max_abs,
        "kernel_dim": rank.kernel.len(),
        "kernel_alignment": rank.kernel_alignment,
        "kernel_parallel_to_metric": rank.kernel_parallel_to_metric,
    });
    if a.spectrum {
        report["eigenvalues"] = json!(eig);
    }
    if a.kernel {
        report["kernel"] = json!(rank.kernel);
    }
    if a.stability {
        let st = curvature_state(tri, l, k).map_err(|e| degenerate(tri, l, k, e))?;
        report["stability"] = match stability_check(&st, l, &lap) {
            Ok(s) => json!({
                "lambda_de": s.lambda_de,
                "max_eig_condition": s.max_eig_condition,
                "first_eig_l": s.first_eig_l,
                "first_eig_exceeds_lambda": s.first_eig_exceeds_lambda,
                "tol": s.tol,
                "satisfied": s.satisfied,
            }),
            Err(e) => json!({ "skipped": e.to_string() }),
        };
    }
    print_json(out, &report)?;
    Ok(EXIT_OK)
}

pub fn exit_code_for(status: FlowStatus) -> i32 {
    match status {
        FlowStatus::ConvergedEinstein | FlowStatus::ConvergedFlat => EXIT_OK,
        FlowStatus::Degenerated | FlowStatus::StepUnderflow => EXIT_FLOW_FAILED,
        FlowStatus::MaxTimeReached => EXIT_MAX_TIME,
    }
}

pub fn cmd_flow<W: Write>(a: FlowArgs, out: &mut W) -> Result<i32, CliError> {
    let started = Instant::now();
    let mesh = load(&a.mesh, a.k)?;
    let (tri, k) = (&mesh.tri, mesh.k);

    let kind = match (a.flow, &a.target) {
        (FlowArg::Nlcf, None) => return Err(CliError::Usage("--flow nlcf needs --target".into())),
        (FlowArg::Nlcf, Some(path)) => {
            let target = Mesh::load(path)?;
            if target.tri != *tri {
                return Err(CliError::Usage(format!(
                    "target mesh `{}` has a different triangulation",
                    path.display()
                )));
            }
            let r = curvature::ricci(tri, &target.metric, k)
                .map_err(|e| CliError::Usage(format!("target mesh `{}`: {e}", path.display())))?;
            FlowKind::Nlcf { target: r }
        }
        (_, Some(_)) => return Err(CliError::Usage("--target only applies to nlcf".into())),
        (FlowArg::Crf, None) => FlowKind::Crf,
        (FlowArg::Ncrf, None) => FlowKind::Ncrf,
        (FlowArg::Lcf, None) => FlowKind::Lcf,
    };

    let start = match a.perturb {
        Some(amp) if !(0.0..1.0).contains(&amp) => {
            return Err(CliError::Usage(format!("--perturb must lie in [0, 1), got {amp}")));
        }
        Some(amp) => flows::perturb(&mesh.metric, amp, &mut trial_rng(a.seed, 0))
            .map_err(|e| CliError::Usage(e.to_string()))?,
        None => mesh.metric.clone(),
    };
    let cfg = FlowConfig {
        k,
        dt0: a.dt,
        dt_min: a.dt_min,
        t_max: a.t_max,
        tol_converge: a.tol,
        tol_mono: a.tol_mono,
        h_rel: a.h_rel,
        stop_on_convergence: !a.no_stop,
        seed: a.perturb.map(|_| a.seed),
    };
    let res = match run_flow(&kind, tri, &start, &cfg) {
        Ok(r) => r,
        Err(FlowError::Curvature(e)) => return Err(degenerate(tri, &start, k, e)),
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };

    if let Some(path) = &a.trace {
        let f = File::create(path).map_err(|e| CliError::Io(format!("cannot write `{}`: {e}", path.display())))?;
        write_trace(&res.trace, BufWriter::new(f))?;
    }
    if let Some(path) = &a.out {
        Mesh::new(mesh.name.clone(), tri.clone(), res.metric.clone(), k)?.save(path)?;
    }
    let last = res.trace.records.last().expect("trace is never empty");
    print_json(
        out,
        &json!({
            "flow": kind.name(),
            "K": k,
            "status": res.status.name(),
            "t_final": last.t,
            "steps": res.trace.records.len() - 1,
            "steps_rejected": res.steps_rejected,
            "seed": cfg.seed,
            "S": res.state.total,
            "C": res.state.energy,
            "lambda": res.state.lambda,
            "einstein_residual": res.state.einstein_residual,
            "flat_residual": res.state.flat_residual,
            "norm_l_sq": last.norm_l_sq,
            "min_degeneracy_margin": last.min_degeneracy_margin,
            "SK_rel": last.sk_rel,
            "wall_time_s": started.elapsed().as_secs_f64(),
        }),
    )?;
    Ok(exit_code_for(res.status))
}

pub fn cmd_verify<W: Write>(a: VerifyArgs, out: &mut W) -> Result<i32, CliError> {
    let report = run_suite(a.suite.into());
    match a.format {
        Format::Json => print_json(out, &report)?,
        Format::Table => {
            for c in &report.checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                writeln!(
                    out,
                    "{verdict}  {:<34} measured {:<24e} bound {:e}{}",
                    c.name,
                    c.measured,
                    c.bound,
                    c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default()
                )?;
            }
            writeln!(out, "{} of {} checks failed", report.num_failed, report.checks.len())?;
        }
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

/// Read `PLFLOW_THREADS`: `Ok(None)` when unset, an error unless it is a positive integer.
pub fn threads_from_env(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("PLFLOW_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}
