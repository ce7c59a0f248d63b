//! Curvature flows on the space of PL-metrics.
//!
//! Four flow fields are supported:
//!
//! | kind   | field                 |
//! |--------|-----------------------|
//! | `Crf`  | `l̇ = -R`              |
//! | `Ncrf` | `l̇ = -R + λ l`        |
//! | `Lcf`  | `l̇ = -Lᵀ R`           |
//! | `Nlcf` | `l̇ = Lᵀ (R_DE - R)`   |
//!
//! Integration uses fixed classic RK4. A step is retried with half the step
//! size when it leaves the nondegenerate region or when the flow's monotone
//! functional increases by more than the configured slack. Convergence is
//! declared from the curvature residuals of the state, never from `‖l̇‖`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::complex::Triangulation;
use crate::curvature::{
    self, curvature_state, degeneracy_margin, jacobian_l, metric_nondegenerate, CurvatureError,
    CurvatureState, PLMetric,
};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("target curvature has {got} entries, expected {expected}")]
    TargetDimension { expected: usize, got: usize },
    #[error("trace needs at least two records")]
    TraceTooShort,
    #[error("trace record {0} carries no metric/curvature snapshot")]
    MissingSnapshots(usize),
    #[error("unknown flow `{0}` (expected crf, ncrf, lcf or nlcf)")]
    UnknownFlow(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind {
    /// `l̇ = -R`.
    Crf,
    /// `l̇ = -R + λ l`, preserves `‖l‖²`.
    Ncrf,
    /// `l̇ = -Lᵀ R`, gradient flow of the quadratic energy.
    Lcf,
    /// `l̇ = Lᵀ (R_DE - R)` towards a stored target curvature.
    Nlcf { target: Vec<f64> },
}

impl FlowKind {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Crf => "crf",
            FlowKind::Ncrf => "ncrf",
            FlowKind::Lcf => "lcf",
            FlowKind::Nlcf { .. } => "nlcf",
        }
    }

    fn target(&self) -> Option<&[f64]> {
        match self {
            FlowKind::Nlcf { target } => Some(target),
            _ => None,
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses the kinds that need no extra data; `nlcf` yields an empty target
/// that the caller must fill in.
impl FromStr for FlowKind {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "crf" => Ok(FlowKind::Crf),
            "ncrf" => Ok(FlowKind::Ncrf),
            "lcf" => Ok(FlowKind::Lcf),
            "nlcf" => Ok(FlowKind::Nlcf { target: Vec::new() }),
            other => Err(FlowError::UnknownFlow(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Background curvature.
    pub k: f64,
    pub dt0: f64,
    pub dt_min: f64,
    pub t_max: f64,
    /// Residual below which the run counts as converged.
    pub tol_converge: f64,
    /// Relative slack for the monotone functional, `tol_mono·(1 + |value|)`.
    pub tol_mono: f64,
    /// Relative finite-difference step for `L`.
    pub h_rel: f64,
    /// Stop at the first converged state; otherwise integrate to `t_max`.
    pub stop_on_convergence: bool,
    /// Seed used to perturb the initial metric, recorded in the trace.
    pub seed: Option<u64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            k: 0.0,
            dt0: 1e-2,
            dt_min: 1e-9,
            t_max: 50.0,
            tol_converge: 1e-8,
            tol_mono: 1e-10,
            h_rel: curvature::DEFAULT_H_REL,
            stop_on_convergence: true,
            seed: None,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidConfig(m.to_string()));
        if !self.k.is_finite() {
            return bad("K must be finite");
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt0 && self.dt0.is_finite()) {
            return bad("need 0 < dt_min <= dt0");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive");
        }
        if !(self.tol_converge >= 0.0 && self.tol_mono >= 0.0) {
            return bad("tolerances must be nonnegative");
        }
        if !(self.h_rel > 0.0 && self.h_rel < 0.5) {
            return bad("h_rel must lie in (0, 0.5)");
        }
        Ok(())
    }
}

/// Flow velocity at `l`.
pub fn flow_field(
    kind: &FlowKind,
    tri: &Triangulation,
    l: &PLMetric,
    k: f64,
    h_rel: f64,
) -> Result<Vec<f64>, FlowError> {
    if let Some(target) = kind.target() {
        if target.len() != tri.num_edges() {
            return Err(FlowError::TargetDimension {
                expected: tri.num_edges(),
                got: target.len(),
            });
        }
    }
    let r = curvature::ricci(tri, l, k)?;
    let field = match kind {
        FlowKind::Crf => r.iter().map(|x| -x).collect(),
        FlowKind::Ncrf => {
            let lam = r.iter().zip(l.lengths()).map(|(a, b)| a * b).sum::<f64>() / l.norm_sq();
            r.iter().zip(l.lengths()).map(|(a, b)| lam * b - a).collect()
        }
        FlowKind::Lcf | FlowKind::Nlcf { .. } => {
            let lap = jacobian_l(tri, l, k, h_rel)?;
            let ls = lap.symmetrized();
            let rhs = match kind.target() {
                Some(target) => DVector::from_iterator(r.len(), target.iter().zip(&r).map(|(a, b)| a - b)),
                None => -DVector::from_column_slice(&r),
            };
            ls.tr_mul(&rhs).iter().copied().collect()
        }
    };
    Ok(field)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub metric: Vec<f64>,
    pub ricci: Vec<f64>,
}

/// One accepted state of a flow run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub total: f64,
    pub energy: f64,
    pub lambda: f64,
    pub einstein_residual: f64,
    pub flat_residual: f64,
    pub norm_l_sq: f64,
    /// Smallest signed Cayley–Menger squared volume (`K = 0`) or vertex-link margin.
    pub min_degeneracy_margin: f64,
    /// Step that produced this record (0 for the initial record).
    pub dt: f64,
    /// `S_K(t) - S_K(0)` by trapezoidal quadrature of `Rᵀ dl`.
    pub sk_rel: f64,
    /// `Σ (R_DE - R)²` for `Nlcf`.
    pub target_energy: Option<f64>,
    pub snapshot: Option<Snapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub flow: String,
    pub k: f64,
    pub seed: Option<u64>,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    ConvergedEinstein,
    ConvergedFlat,
    Degenerated,
    StepUnderflow,
    MaxTimeReached,
}

impl FlowStatus {
    pub fn is_converged(self) -> bool {
        matches!(self, FlowStatus::ConvergedEinstein | FlowStatus::ConvergedFlat)
    }

    pub fn name(self) -> &'static str {
        match self {
            FlowStatus::ConvergedEinstein => "ConvergedEinstein",
            FlowStatus::ConvergedFlat => "ConvergedFlat",
            FlowStatus::Degenerated => "Degenerated",
            FlowStatus::StepUnderflow => "StepUnderflow",
            FlowStatus::MaxTimeReached => "MaxTimeReached",
        }
    }
}

impl fmt::Display for FlowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub status: FlowStatus,
    pub metric: PLMetric,
    pub state: CurvatureState,
    pub trace: FlowTrace,
    pub steps_rejected: usize,
}

impl FlowResult {
    pub fn t_final(&self) -> f64 {
        self.trace.records.last().map_or(0.0, |r| r.t)
    }
}

/// Converged status for the targets a flow can reach, checked flat-first.
fn converged(kind: &FlowKind, k: f64, st: &CurvatureState, tol: f64) -> Option<FlowStatus> {
    if st.flat_residual < tol {
        return Some(FlowStatus::ConvergedFlat);
    }
    let einstein_target = match kind {
        FlowKind::Crf => false,
        FlowKind::Ncrf | FlowKind::Nlcf { .. } => true,
        FlowKind::Lcf => k == 0.0,
    };
    (einstein_target && st.einstein_residual < tol).then_some(FlowStatus::ConvergedEinstein)
}

/// Residual for the targets a flow can reach (smallest of the applicable ones).
pub fn target_residual(kind: &FlowKind, k: f64, st: &CurvatureState) -> f64 {
    match kind {
        FlowKind::Crf => st.flat_residual,
        FlowKind::Lcf if k != 0.0 => st.flat_residual,
        _ => st.flat_residual.min(st.einstein_residual),
    }
}

fn target_energy(kind: &FlowKind, r: &[f64]) -> Option<f64> {
    kind.target()
        .map(|t| t.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Monotone quantities a flow is known to decrease, as `(name, value)` for a record.
fn monotone_quantities(kind: &FlowKind, k: f64) -> &'static [Quantity] {
    match kind {
        FlowKind::Crf if k == 0.0 => &[Quantity::TotalCurvature, Quantity::SkRel],
        FlowKind::Crf => &[Quantity::SkRel],
        FlowKind::Ncrf if k == 0.0 => &[Quantity::TotalCurvature, Quantity::Lambda],
        FlowKind::Ncrf => &[],
        FlowKind::Lcf => &[Quantity::Energy],
        FlowKind::Nlcf { .. } => &[Quantity::TargetEnergy],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    TotalCurvature,
    Lambda,
    Energy,
    TargetEnergy,
    SkRel,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::TotalCurvature => "S",
            Quantity::Lambda => "lambda",
            Quantity::Energy => "C",
            Quantity::TargetEnergy => "C_target",
            Quantity::SkRel => "SK_rel",
        }
    }

    fn of(self, r: &TraceRecord) -> f64 {
        match self {
            Quantity::TotalCurvature => r.total,
            Quantity::Lambda => r.lambda,
            Quantity::Energy => r.energy,
            Quantity::TargetEnergy => r.target_energy.unwrap_or(f64::NAN),
            Quantity::SkRel => r.sk_rel,
        }
    }
}

fn violates(prev: f64, next: f64, slack: f64) -> bool {
    !(next - prev <= slack * (1.0 + prev.abs()))
}

fn record(
    kind: &FlowKind,
    tri: &Triangulation,
    k: f64,
    l: &PLMetric,
    st: &CurvatureState,
    t: f64,
    dt: f64,
    sk_rel: f64,
) -> TraceRecord {
    TraceRecord {
        t,
        total: st.total,
        energy: st.energy,
        lambda: st.lambda,
        einstein_residual: st.einstein_residual,
        flat_residual: st.flat_residual,
        norm_l_sq: l.norm_sq(),
        min_degeneracy_margin: degeneracy_margin(tri, l, k),
        dt,
        sk_rel,
        target_energy: target_energy(kind, &st.ricci),
        snapshot: Some(Snapshot {
            metric: l.lengths().to_vec(),
            ricci: st.ricci.clone(),
        }),
    }
}

enum StepFailure {
    Degenerate,
    Monitor,
}

fn axpy(l: &[f64], a: f64, v: &[f64]) -> Result<PLMetric, CurvatureError> {
    PLMetric::new(l.iter().zip(v).map(|(x, y)| x + a * y).collect())
}

fn rk4_step(
    kind: &FlowKind,
    tri: &Triangulation,
    l: &PLMetric,
    cfg: &FlowConfig,
    dt: f64,
) -> Result<PLMetric, FlowError> {
    let f = |m: &PLMetric| flow_field(kind, tri, m, cfg.k, cfg.h_rel);
    let base = l.lengths();
    let k1 = f(l)?;
    let k2 = f(&axpy(base, 0.5 * dt, &k1)?)?;
    let k3 = f(&axpy(base, 0.5 * dt, &k2)?)?;
    let k4 = f(&axpy(base, dt, &k3)?)?;
    let next = base
        .iter()
        .enumerate()
        .map(|(i, x)| x + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    Ok(PLMetric::new(next)?)
}

/// Integrate `kind` from `l0`.
///
/// Fails only on invalid input (bad configuration, degenerate `l0`, wrong
/// target dimension); every runtime outcome is reported through [`FlowStatus`].
pub fn run_flow(
    kind: &FlowKind,
    tri: &Triangulation,
    l0: &PLMetric,
    cfg: &FlowConfig,
) -> Result<FlowResult, FlowError> {
    cfg.validate()?;
    metric_nondegenerate(tri, l0, cfg.k)?;
    if let Some(target) = kind.target() {
        if target.len() != tri.num_edges() {
            return Err(FlowError::TargetDimension {
                expected: tri.num_edges(),
                got: target.len(),
            });
        }
    }
    let k = cfg.k;
    let quantities = monotone_quantities(kind, k);

    let mut l = l0.clone();
    let mut state = curvature_state(tri, &l, k)?;
    let mut t = 0.0;
    let mut sk_rel = 0.0;
    let mut records = vec![record(kind, tri, k, &l, &state, t, 0.0, sk_rel)];
    let mut steps_rejected = 0;

    let mut status = converged(kind, k, &state, cfg.tol_converge)
        .filter(|_| cfg.stop_on_convergence);

    while status.is_none() && t < cfg.t_max {
        let mut dt = cfg.dt0.min(cfg.t_max - t);
        let accepted = loop {
            let attempt = rk4_step(kind, tri, &l, cfg, dt)
                .map_err(|_| StepFailure::Degenerate)
                .and_then(|next| {
                    metric_nondegenerate(tri, &next, k).map_err(|_| StepFailure::Degenerate)?;
                    let st = curvature_state(tri, &next, k).map_err(|_| StepFailure::Degenerate)?;
                    let dsk: f64 = state
                        .ricci
                        .iter()
                        .zip(&st.ricci)
                        .zip(next.lengths().iter().zip(l.lengths()))
                        .map(|((r0, r1), (a, b))| 0.5 * (r0 + r1) * (a - b))
                        .sum();
                    let mut t_next = t + dt;
                    if cfg.t_max - t_next < 1e-9 * cfg.dt0 {
                        t_next = cfg.t_max;
                    }
                    let rec = record(kind, tri, k, &next, &st, t_next, dt, sk_rel + dsk);
                    let prev = records.last().expect("trace starts with the initial record");
                    if quantities
                        .iter()
                        .any(|q| violates(q.of(prev), q.of(&rec), cfg.tol_mono))
                    {
                        return Err(StepFailure::Monitor);
                    }
                    Ok((next, st, rec))
                });
            match attempt {
                Ok(ok) => break Ok(ok),
                Err(why) => {
                    steps_rejected += 1;
                    dt *= 0.5;
                    if dt < cfg.dt_min {
                        break Err(why);
                    }
                }
            }
        };
        match accepted {
            Ok((next, st, rec)) => {
                t = rec.t;
                sk_rel = rec.sk_rel;
                l = next;
                state = st;
                records.push(rec);
                if cfg.stop_on_convergence {
                    status = converged(kind, k, &state, cfg.tol_converge);
                }
            }
            Err(StepFailure::Degenerate) => status = Some(FlowStatus::Degenerated),
            Err(StepFailure::Monitor) => status = Some(FlowStatus::StepUnderflow),
        }
    }
    let status = status.unwrap_or_else(|| {
        converged(kind, k, &state, cfg.tol_converge).unwrap_or(FlowStatus::MaxTimeReached)
    });

    Ok(FlowResult {
        status,
        metric: l,
        state,
        trace: FlowTrace {
            flow: kind.name().to_string(),
            k,
            seed: cfg.seed,
            records,
        },
        steps_rejected,
    })
}

/// Worst behaviour of one monotone quantity along a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCheck {
    pub quantity: Quantity,
    /// Largest increase between consecutive records.
    pub max_increase: f64,
    /// Largest `increase - slack·(1 + |previous|)`; nonpositive when the check passes.
    pub max_excess: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub checks: Vec<MonotoneCheck>,
}

impl MonotonicityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, q: Quantity) -> Option<&MonotoneCheck> {
        self.checks.iter().find(|c| c.quantity == q)
    }
}

/// Check every monotonicity claim that applies to `kind` at the trace's `K`.
pub fn monitors(trace: &FlowTrace, kind: &FlowKind, slack: f64) -> Result<MonotonicityReport, FlowError> {
    if trace.records.len() < 2 {
        return Err(FlowError::TraceTooShort);
    }
    let checks = monotone_quantities(kind, trace.k)
        .iter()
        .map(|&q| {
            let (mut max_increase, mut max_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for w in trace.records.windows(2) {
                let (a, b) = (q.of(&w[0]), q.of(&w[1]));
                max_increase = max_increase.max(b - a);
                max_excess = max_excess.max(b - a - slack * (1.0 + a.abs()));
            }
            MonotoneCheck {
                quantity: q,
                max_increase,
                max_excess,
                passed: max_excess <= 0.0,
            }
        })
        .collect();
    Ok(MonotonicityReport { checks })
}

/// `S_K(t) - S_K(0)` along the trace by trapezoidal quadrature of `Σ R_i dl_i`.
pub fn sk_relative(trace: &FlowTrace) -> Result<Vec<f64>, FlowError> {
    let snaps: Vec<&Snapshot> = trace
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| r.snapshot.as_ref().ok_or(FlowError::MissingSnapshots(i)))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(snaps.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in snaps.windows(2) {
        acc += w[0]
            .ricci
            .iter()
            .zip(&w[1].ricci)
            .zip(w[0].metric.iter().zip(&w[1].metric))
            .map(|((r0, r1), (a, b))| 0.5 * (r0 + r1) * (b - a))
            .sum::<f64>();
        out.push(acc);
    }
    Ok(out)
}

/// Multiply every length by an independent uniform factor in `[1 - amp, 1 + amp]`.
pub fn perturb<R: Rng + ?Sized>(l: &PLMetric, amp: f64, rng: &mut R) -> Result<PLMetric, CurvatureError> {
    PLMetric::new(
        l.lengths()
            .iter()
            .map(|x| x * (1.0 + amp * (2.0 * rng.random::<f64>() - 1.0)))
            .collect(),
    )
}

/// Generator for trial `trial` of a run seeded with `seed`: one ChaCha stream per trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub status: FlowStatus,
    pub residual: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorReport {
    pub trials: Vec<TrialOutcome>,
    pub success_rate: f64,
    pub worst_residual: f64,
}

/// Run `n_trials` flows from independently perturbed copies of `l_de`.
///
/// Trial `i` draws its perturbation from [`trial_rng`]`(seed, i)`, so the
/// results are identical for sequential and parallel execution.
pub fn attractor_runs(
    kind: &FlowKind,
    tri: &Triangulation,
    l_de: &PLMetric,
    cfg: &FlowConfig,
    n_trials: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<FlowResult>, FlowError> {
    cfg.validate()?;
    par::map_indexed(n_trials, |i| {
        let start = perturb(l_de, noise, &mut trial_rng(seed, i as u64))?;
        run_flow(kind, tri, &start, cfg)
    })
    .into_iter()
    .collect()
}

/// Summary of [`attractor_runs`].
pub fn attractor_probe(
    kind: &FlowKind,
    tri: &Triangulation,
    l_de: &PLMetric,
    cfg: &FlowConfig,
    n_trials: usize,
    noise: f64,
    seed: u64,
) -> Result<AttractorReport, FlowError> {
    let trials: Vec<TrialOutcome> = attractor_runs(kind, tri, l_de, cfg, n_trials, noise, seed)?
        .into_iter()
        .map(|res| TrialOutcome {
            status: res.status,
            residual: target_residual(kind, cfg.k, &res.state),
            t_final: res.t_final(),
        })
        .collect();
    let n_ok = trials.iter().filter(|t| t.status.is_converged()).count();
    let worst_residual = trials.iter().map(|t| t.residual).fold(0.0, f64::max);
    Ok(AttractorReport {
        success_rate: if n_trials == 0 { 0.0 } else { n_ok as f64 / n_trials as f64 },
        worst_residual,
        trials,
    })
}
