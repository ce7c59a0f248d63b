//! Self-checks run by `plflow verify`.
//!
//! Every check records a measured value and the bound it is compared with.
//! Suites that exercise flows take tens of seconds in release builds.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use serde::Serialize;

use crate::complex::{Builtin, Triangulation};
use crate::curvature::{self, jacobian_l, rank_check, ricci, PLMetric, DEFAULT_H_REL, EIG_REL_TOL};
use crate::flows::{self, attractor_runs, monitors, trial_rng, FlowConfig, FlowKind, FlowResult, Quantity};
use crate::geometry::{ck, face_angle, fk, sk};
use crate::regular::{eigen_report, regular_matrix, regular_xyz};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Identities,
    Regular,
    Flows,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Regular => "regular",
            Suite::Flows => "flows",
            Suite::All => "all",
        }
    }
}

/// How a measured value is compared with its bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub comparison: Comparison,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn new(name: &str, measured: f64, comparison: Comparison, bound: f64) -> Self {
        let passed = match comparison {
            Comparison::AtMost => measured <= bound,
            Comparison::AtLeast => measured >= bound,
            Comparison::Above => measured > bound,
        };
        Self {
            name: name.to_string(),
            measured,
            bound,
            comparison,
            passed,
            note: None,
        }
    }

    fn at_most(name: &str, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, Comparison::AtMost, bound)
    }

    fn at_least(name: &str, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, Comparison::AtLeast, bound)
    }

    fn above(name: &str, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, Comparison::Above, bound)
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// A check that could not be evaluated.
    fn error(name: &str, err: impl std::fmt::Display) -> Self {
        Self {
            name: name.to_string(),
            measured: f64::NAN,
            bound: f64::NAN,
            comparison: Comparison::AtMost,
            passed: false,
            note: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: &'static str,
    pub passed: bool,
    pub num_failed: usize,
    pub checks: Vec<Check>,
}

pub fn run_suite(suite: Suite) -> VerifyReport {
    let checks = match suite {
        Suite::Identities => identities(),
        Suite::Regular => regular(),
        Suite::Flows => flow_checks(),
        Suite::All => {
            let mut c = identities();
            c.extend(regular());
            c.extend(flow_checks());
            c
        }
    };
    let num_failed = checks.iter().filter(|c| !c.passed).count();
    VerifyReport {
        suite: suite.name(),
        passed: num_failed == 0,
        num_failed,
        checks,
    }
}

fn builtin(b: Builtin, len: f64) -> (Triangulation, PLMetric) {
    let tri = Triangulation::builtin(b);
    let l = PLMetric::uniform(tri.num_edges(), len).expect("positive length");
    (tri, l)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

const SEED: u64 = 42;

pub fn identities() -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = trial_rng(SEED, 0);

    // law of cosines in the Euclidean case
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let b: f64 = rng.random_range(0.05..3.0);
        let c: f64 = rng.random_range(0.05..3.0);
        let gap = (b - c).abs();
        let a = gap + (b + c - gap) * rng.random_range(0.01..0.99);
        let got = face_angle(0.0, a, b, c).unwrap_or(f64::NAN);
        let want = ((b * b + c * c - a * a) / (2.0 * b * c)).acos();
        worst = worst.max((got - want).abs());
    }
    out.push(Check::at_most("cosine_law_euclidean", worst, 1e-12));

    // C_K(a) = C_K(b)C_K(c) + K S_K(b)S_K(c) cos A
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random_range(0.01..2.0);
        let scale = if k > 0.0 { 0.9 * PI / (3.0 * k.sqrt()) } else { 2.0 };
        let b = rng.random_range(0.05..1.0) * scale;
        let c = rng.random_range(0.05..1.0) * scale;
        let gap = (b - c).abs();
        let a = gap + (b + c - gap) * rng.random_range(0.01..0.99);
        match face_angle(k, a, b, c) {
            Ok(ang) => {
                let rhs = ck(k, b) * ck(k, c) + k * sk(k, b) * sk(k, c) * ang.cos();
                worst = worst.max((ck(k, a) - rhs).abs() / ck(k, a).abs().max(1.0));
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    out.push(Check::at_most("cosine_law_space_form", worst, 1e-12));

    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k: f64 = rng.random_range(-2.0..2.0);
        let r: f64 = rng.random_range(1e-4..1.5);
        let two_s = 2.0 * sk(k, 0.5 * r).powi(2);
        worst = worst.max((fk(k, r) - two_s).abs());
    }
    out.push(Check::at_most("fk_identity", worst, 1e-12));

    let beta = (1.0f64 / 3.0).acos();
    let (tri, l) = builtin(Builtin::SixteenCell, FRAC_PI_2);
    match curvature::curvature_state(&tri, &l, 0.0) {
        Ok(st) => {
            let r0 = TAU - 4.0 * beta;
            let dev = st.ricci.iter().map(|r| (r - r0).abs()).fold(0.0, f64::max);
            out.push(Check::at_most("sixteen_cell_curvature", dev, 1e-12));
            let lam = (4.0 * PI - 8.0 * beta) / PI;
            out.push(Check::at_most("sixteen_cell_lambda", (st.lambda - lam).abs(), 1e-12));
            out.push(Check::at_most("sixteen_cell_einstein_residual", st.einstein_residual, 1e-12));
        }
        Err(e) => out.push(Check::error("sixteen_cell_curvature", e)),
    }
    let (tri, l) = builtin(Builtin::Pentachoron, 1.0);
    match ricci(&tri, &l, 0.0) {
        Ok(r) => {
            let dev = r.iter().map(|x| (x - (TAU - 3.0 * beta)).abs()).fold(0.0, f64::max);
            out.push(Check::at_most("pentachoron_curvature", dev, 1e-12));
        }
        Err(e) => out.push(Check::error("pentachoron_curvature", e)),
    }

    // Euler formula and symmetry on the unit 16-cell and seeded perturbations
    let (tri, l) = builtin(Builtin::SixteenCell, 1.0);
    let (mut euler, mut left, mut asym) = (0.0f64, 0.0f64, 0.0f64);
    let mut failure = None;
    for trial in 0..=20u64 {
        let metric = if trial == 0 {
            Ok(l.clone())
        } else {
            flows::perturb(&l, 0.05, &mut trial_rng(SEED, trial))
        };
        match metric.and_then(|m| jacobian_l(&tri, &m, 0.0, DEFAULT_H_REL)) {
            Ok(lap) => {
                euler = euler.max(lap.euler_residual);
                left = left.max(lap.left_euler_residual);
                asym = asym.max(lap.asymmetry);
            }
            Err(e) => failure = Some(e),
        }
    }
    match failure {
        None => {
            out.push(Check::at_most("euler_formula", euler, 1e-6));
            out.push(Check::at_most("left_euler_formula", left, 1e-6));
            out.push(Check::at_most("laplacian_symmetry", asym, 1e-6));
        }
        Some(e) => out.push(Check::error("euler_formula", e)),
    }

    match jacobian_l(&tri, &l, 0.0, DEFAULT_H_REL) {
        Ok(lap) => {
            let rep = rank_check(&lap, EIG_REL_TOL);
            out.push(Check::at_least("sixteen_cell_rank", rep.rank as f64, 23.0));
            out.push(Check::at_most("sixteen_cell_corank", (rep.dim - rep.rank) as f64, 1.0));
            out.push(Check::at_least(
                "sixteen_cell_kernel_alignment",
                rep.kernel_alignment.unwrap_or(0.0),
                1.0 - 1e-6,
            ));
        }
        Err(e) => out.push(Check::error("sixteen_cell_rank", e)),
    }

    let mut worst = 0.0f64;
    for b in Builtin::ALL {
        let (tri, l) = builtin(b, 1.0);
        let Ok(base) = ricci(&tri, &l, 0.0) else {
            worst = f64::INFINITY;
            continue;
        };
        for t in [0.5, 2.0, 10.0] {
            match l.scaled(t).and_then(|m| ricci(&tri, &m, 0.0)) {
                Ok(r) => worst = worst.max(max_abs_diff(&r, &base)),
                Err(_) => worst = f64::INFINITY,
            }
        }
    }
    out.push(Check::at_most("scale_invariance", worst, 1e-12));
    out
}

const REGULAR_K: [f64; 4] = [-1.0, -0.25, 0.25, 1.0];
const REGULAR_L0: [f64; 3] = [0.3, 0.7, 1.1];

pub fn regular() -> Vec<Check> {
    let mut out = Vec::new();
    let tri = Triangulation::builtin(Builtin::SingleTet);
    let (mut fd_dev, mut spec_dev) = (0.0f64, 0.0f64);
    let (mut min_mid, mut sign_mismatch) = (f64::INFINITY, 0usize);
    let mut failure = None;
    for k in REGULAR_K {
        for l0 in REGULAR_L0 {
            if k > 0.0 && l0 >= PI / k.sqrt() {
                continue;
            }
            let entries = match regular_xyz(k, l0) {
                Ok(e) => e,
                Err(e) => {
                    failure = Some(e.to_string());
                    continue;
                }
            };
            let expect = regular_matrix(entries.x, entries.y, entries.z);
            let fd = PLMetric::uniform(6, l0).and_then(|l| jacobian_l(&tri, &l, k, DEFAULT_H_REL));
            match fd {
                // for one tetrahedron R = 2π - β, so ∂β/∂l = -L
                Ok(lap) => fd_dev = fd_dev.max((-&lap.matrix - &expect).amax()),
                Err(e) => failure = Some(e.to_string()),
            }
            spec_dev = spec_dev.max(eigen_report(&entries).max_deviation);
            let (x, y, z) = (entries.x, entries.y, entries.z);
            min_mid = min_mid.min(x + z - 2.0 * y);
            if (x + z + 4.0 * y).signum() != k.signum() {
                sign_mismatch += 1;
            }
        }
    }
    if let Some(e) = failure {
        out.push(Check::error("regular_entries_vs_fd", e));
    } else {
        out.push(Check::at_most("regular_entries_vs_fd", fd_dev, 1e-5));
    }
    out.push(Check::at_most("regular_spectrum", spec_dev, 1e-10));
    out.push(Check::above("regular_x_plus_z_minus_2y", min_mid, 0.0));
    out.push(Check::at_most("regular_sign_x_plus_z_plus_4y", sign_mismatch as f64, 0.0));

    let mut worst = 0.0f64;
    for l0 in REGULAR_L0.into_iter().chain([1.0, 2.5]) {
        match regular_xyz(0.0, l0) {
            Ok(e) => worst = worst.max((e.x + e.z + 4.0 * e.y).abs()),
            Err(_) => worst = f64::INFINITY,
        }
    }
    out.push(Check::at_most("regular_euclidean_zero_mode", worst, 1e-12));

    match PLMetric::uniform(6, 1.0).and_then(|l| jacobian_l(&tri, &l, 0.0, DEFAULT_H_REL)) {
        Ok(lap) => {
            let ev = lap.eigenvalues();
            let scale = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let min = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
            out.push(Check::at_most("single_tet_euclidean_singular", min / scale, 1e-7));
        }
        Err(e) => out.push(Check::error("single_tet_euclidean_singular", e)),
    }

    let (tri, l) = builtin(Builtin::SixteenCell, FRAC_PI_2);
    match ricci(&tri, &l, 1.0) {
        Ok(r) => {
            let flat = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            out.push(Check::at_most("space_form_flat", flat, 1e-10));
        }
        Err(e) => out.push(Check::error("space_form_flat", e)),
    }
    match jacobian_l(&tri, &l, 1.0, DEFAULT_H_REL) {
        Ok(lap) => {
            let ev = lap.eigenvalues();
            let scale = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let min = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
            let zeros = ev.iter().filter(|v| v.abs() <= EIG_REL_TOL * scale).count();
            out.push(
                Check::above("space_form_nonsingular", min / scale, EIG_REL_TOL).note(format!(
                    "{zeros} of {} eigenvalues vanish at this metric",
                    ev.len()
                )),
            );
            let both = ev.iter().any(|&v| v < -EIG_REL_TOL * scale) && ev.iter().any(|&v| v > EIG_REL_TOL * scale);
            out.push(Check::at_least("space_form_indefinite", f64::from(u8::from(both)), 1.0));
        }
        Err(e) => out.push(Check::error("space_form_nonsingular", e)),
    }
    out
}

fn with_runs(name: &str, runs: Result<Vec<FlowResult>, impl std::fmt::Display>, f: impl FnOnce(&[FlowResult]) -> Vec<Check>) -> Vec<Check> {
    match runs {
        Ok(r) => f(&r),
        Err(e) => vec![Check::error(name, e)],
    }
}

fn worst_excess(runs: &[FlowResult], kind: &FlowKind, q: Quantity) -> f64 {
    runs.iter()
        .map(|r| match monitors(&r.trace, kind, 1e-10) {
            Ok(rep) => rep.get(q).map_or(f64::INFINITY, |c| c.max_excess),
            // a trace with a single record has no increments
            Err(_) => f64::NEG_INFINITY,
        })
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0)
}

fn converged_count(runs: &[FlowResult]) -> f64 {
    runs.iter().filter(|r| r.status.is_converged()).count() as f64
}

pub fn flow_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let (tri, unit) = builtin(Builtin::SixteenCell, 1.0);

    // normalized flow near the unit 16-cell over t in [0, 10]
    let cfg = FlowConfig {
        dt0: 1e-3,
        t_max: 10.0,
        stop_on_convergence: false,
        seed: Some(SEED),
        ..FlowConfig::default()
    };
    let run = flows::perturb(&unit, 0.01, &mut trial_rng(SEED, 0))
        .map_err(flows::FlowError::from)
        .and_then(|start| flows::run_flow(&FlowKind::Ncrf, &tri, &start, &cfg));
    out.extend(with_runs("ncrf_conservation", run.map(|r| vec![r]), |runs| {
        let r = &runs[0];
        let n0 = r.trace.records[0].norm_l_sq;
        let drift = r
            .trace
            .records
            .iter()
            .map(|x| ((x.norm_l_sq - n0) / n0).abs())
            .fold(0.0, f64::max);
        vec![
            Check::at_least("ncrf_reaches_t10", r.t_final(), 10.0).note(r.status.name()),
            Check::at_most("ncrf_norm_drift", drift, 1e-8),
            Check::at_most("ncrf_lambda_monotone", worst_excess(runs, &FlowKind::Ncrf, Quantity::Lambda), 0.0),
            Check::at_most("ncrf_total_monotone", worst_excess(runs, &FlowKind::Ncrf, Quantity::TotalCurvature), 0.0),
        ]
    }));

    let base = FlowConfig {
        t_max: 50.0,
        seed: Some(SEED),
        ..FlowConfig::default()
    };
    let runs = attractor_runs(&FlowKind::Ncrf, &tri, &unit, &base, 10, 0.01, SEED);
    out.extend(with_runs("ncrf_attractor", runs, |runs| {
        vec![Check::at_least("ncrf_attractor", converged_count(runs), 10.0)]
    }));

    let target = ricci(&tri, &unit, 0.0);
    let runs = target
        .map_err(flows::FlowError::from)
        .and_then(|target| attractor_runs(&FlowKind::Nlcf { target }, &tri, &unit, &base, 10, 0.01, SEED));
    out.extend(with_runs("nlcf_attractor", runs, |runs| {
        let kind = FlowKind::Nlcf { target: Vec::new() };
        vec![
            Check::at_least("nlcf_attractor", converged_count(runs), 10.0),
            Check::at_most("nlcf_energy_monotone", worst_excess(runs, &kind, Quantity::TargetEnergy), 0.0),
        ]
    }));

    let (tri, half_pi) = builtin(Builtin::SixteenCell, FRAC_PI_2);
    let cfg = FlowConfig { k: 1.0, ..base };
    let runs = attractor_runs(&FlowKind::Lcf, &tri, &half_pi, &cfg, 10, 0.01, SEED);
    out.extend(with_runs("lcf_space_form_attractor", runs, |runs| {
        let worst = runs.iter().map(|r| r.state.flat_residual).fold(0.0, f64::max);
        vec![
            Check::at_least("lcf_space_form_attractor", converged_count(runs), 10.0),
            Check::at_most("lcf_space_form_flat_residual", worst, 1e-8),
            Check::at_most("lcf_energy_monotone", worst_excess(runs, &FlowKind::Lcf, Quantity::Energy), 0.0),
        ]
    }));
    out
}
