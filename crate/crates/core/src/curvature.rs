//! Edge curvature, the curvature Jacobian and the global functionals built on them.
//!
//! The combinatorial Ricci curvature of edge `e` is `2π` minus the sum of the
//! dihedral angles at `e` over every incident tetrahedron. The Laplacian `L` is
//! its Jacobian `∂R/∂l`, assembled column by column with central differences.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::complex::Triangulation;
use crate::geometry::{self, dihedral_angles, tet_nondegenerate, TetLengths};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurvatureError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("edge {edge} has non-positive or non-finite length {value}")]
    NonPositiveLength { edge: usize, value: f64 },
    #[error("metric is degenerate at tetrahedron {tet}")]
    DegenerateMetric { tet: usize },
    #[error("finite-difference step for edge {edge} leaves the nondegenerate region after halving")]
    StepTooLarge { edge: usize },
    #[error("metric is not Einstein (residual {residual:e})")]
    NotEinstein { residual: f64 },
}

/// Positive edge lengths in canonical edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct PLMetric(Vec<f64>);

impl PLMetric {
    pub fn new(lengths: Vec<f64>) -> Result<Self, CurvatureError> {
        if let Some((edge, &value)) = lengths
            .iter()
            .enumerate()
            .find(|(_, &l)| !(l > 0.0 && l.is_finite()))
        {
            return Err(CurvatureError::NonPositiveLength { edge, value });
        }
        Ok(Self(lengths))
    }

    pub fn uniform(m: usize, length: f64) -> Result<Self, CurvatureError> {
        Self::new(vec![length; m])
    }

    /// Metric sized for `tri`, checking the dimension.
    pub fn for_complex(tri: &Triangulation, lengths: Vec<f64>) -> Result<Self, CurvatureError> {
        check_dim(tri.num_edges(), lengths.len())?;
        Self::new(lengths)
    }

    pub fn lengths(&self) -> &[f64] {
        &self.0
    }

    pub fn into_lengths(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|l| l * l).sum()
    }

    pub fn scaled(&self, t: f64) -> Result<Self, CurvatureError> {
        Self::new(self.0.iter().map(|l| l * t).collect())
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), CurvatureError> {
    if expected == got {
        Ok(())
    } else {
        Err(CurvatureError::DimensionMismatch { expected, got })
    }
}

/// Edge lengths of tetrahedron `tet` in local order.
pub fn tet_lengths(tri: &Triangulation, l: &[f64], tet: usize) -> TetLengths {
    TetLengths(tri.tet_edges()[tet].map(|e| l[e]))
}

/// Returns the first degenerate tetrahedron, if any.
pub fn first_degenerate_tet(tri: &Triangulation, l: &PLMetric, k: f64) -> Option<usize> {
    (0..tri.num_tets()).find(|&t| !tet_nondegenerate(k, &tet_lengths(tri, l.lengths(), t)))
}

/// Membership test for the space of nondegenerate metrics.
pub fn metric_nondegenerate(tri: &Triangulation, l: &PLMetric, k: f64) -> Result<(), CurvatureError> {
    check_dim(tri.num_edges(), l.len())?;
    match first_degenerate_tet(tri, l, k) {
        Some(tet) => Err(CurvatureError::DegenerateMetric { tet }),
        None => Ok(()),
    }
}

/// Smallest per-tetrahedron degeneracy margin (see [`geometry::degeneracy_margin`]).
pub fn degeneracy_margin(tri: &Triangulation, l: &PLMetric, k: f64) -> f64 {
    (0..tri.num_tets())
        .map(|t| geometry::degeneracy_margin(k, &tet_lengths(tri, l.lengths(), t)))
        .fold(f64::INFINITY, f64::min)
}

/// Combinatorial Ricci curvature `R_e = 2π - Σ β_e(τ)`.
pub fn ricci(tri: &Triangulation, l: &PLMetric, k: f64) -> Result<Vec<f64>, CurvatureError> {
    check_dim(tri.num_edges(), l.len())?;
    let mut r = vec![TAU; tri.num_edges()];
    for (t, edges) in tri.tet_edges().iter().enumerate() {
        let lens = tet_lengths(tri, l.lengths(), t);
        if !tet_nondegenerate(k, &lens) {
            return Err(CurvatureError::DegenerateMetric { tet: t });
        }
        let beta = dihedral_angles(k, &lens).map_err(|_| CurvatureError::DegenerateMetric { tet: t })?;
        for (slot, &e) in edges.iter().enumerate() {
            r[e] -= beta.0[slot];
        }
    }
    Ok(r)
}

/// Curvature vector together with the derived global functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureState {
    pub ricci: Vec<f64>,
    /// Total curvature `Σ R_i l_i`.
    pub total: f64,
    /// Quadratic energy `Σ R_i²`.
    pub energy: f64,
    /// `S/‖l‖²`.
    pub lambda: f64,
    /// `‖R - λl‖₂ / max(‖R‖₂, 1e-30)`.
    pub einstein_residual: f64,
    /// `‖R - λl‖∞`.
    pub einstein_residual_abs: f64,
    /// `‖R‖∞`.
    pub flat_residual: f64,
}

const RESIDUAL_FLOOR: f64 = 1e-30;

pub fn functionals(r: &[f64], l: &PLMetric) -> Result<CurvatureState, CurvatureError> {
    check_dim(l.len(), r.len())?;
    let l = l.lengths();
    let total: f64 = r.iter().zip(l).map(|(a, b)| a * b).sum();
    let energy: f64 = r.iter().map(|a| a * a).sum();
    let lambda = total / l.iter().map(|b| b * b).sum::<f64>();
    let (mut dev_sq, mut dev_inf) = (0.0f64, 0.0f64);
    for (a, b) in r.iter().zip(l) {
        let d = a - lambda * b;
        dev_sq += d * d;
        dev_inf = dev_inf.max(d.abs());
    }
    Ok(CurvatureState {
        ricci: r.to_vec(),
        total,
        energy,
        lambda,
        einstein_residual: dev_sq.sqrt() / energy.sqrt().max(RESIDUAL_FLOOR),
        einstein_residual_abs: dev_inf,
        flat_residual: r.iter().fold(0.0f64, |m, a| m.max(a.abs())),
    })
}

/// `ricci` followed by `functionals`.
pub fn curvature_state(tri: &Triangulation, l: &PLMetric, k: f64) -> Result<CurvatureState, CurvatureError> {
    functionals(&ricci(tri, l, k)?, l)
}

/// Gradient of the normalized total curvature `S/‖l‖^r`.
pub fn grad_sr(r: &[f64], l: &PLMetric, power: f64) -> Vec<f64> {
    let norm_sq = l.norm_sq();
    let s: f64 = r.iter().zip(l.lengths()).map(|(a, b)| a * b).sum();
    let scale = norm_sq.powf(-0.5 * power);
    let coef = power * s / norm_sq;
    r.iter()
        .zip(l.lengths())
        .map(|(a, b)| scale * (a - coef * b))
        .collect()
}

/// Default relative finite-difference step.
pub const DEFAULT_H_REL: f64 = 1e-5;
const MAX_HALVINGS: usize = 8;

/// Curvature Jacobian `∂R/∂l` with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    /// Raw finite-difference Jacobian; column `j` is `∂R/∂l_j`.
    pub matrix: DMatrix<f64>,
    /// `max |L - Lᵀ|`.
    pub asymmetry: f64,
    /// `‖L l‖∞`.
    pub euler_residual: f64,
    /// `‖lᵀ L‖∞`.
    pub left_euler_residual: f64,
    pub h_rel: f64,
    /// Step actually used for each column after any halving.
    pub steps: Vec<f64>,
    /// Metric at which `L` was assembled.
    pub at: PLMetric,
}

impl Laplacian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `(L + Lᵀ)/2`.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        (&self.matrix + self.matrix.transpose()) * 0.5
    }

    /// Eigenvalues of the symmetrized matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigen(self.symmetrized()).0
    }
}

/// Symmetric eigen-decomposition with eigenvalues sorted ascending; the
/// columns of the returned matrix are the matching unit eigenvectors.
pub fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

type Column = (Vec<(usize, f64)>, f64);

fn fd_column(
    tri: &Triangulation,
    l: &PLMetric,
    k: f64,
    h_rel: f64,
    j: usize,
) -> Result<Column, CurvatureError> {
    let lj = l.lengths()[j];
    let mut h = h_rel * lj.max(1.0);
    let tets = tri.tets_of_edge(j);
    'halving: for _ in 0..=MAX_HALVINGS {
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(6 * tets.len());
        for &t in tets {
            let edges = tri.tet_edges()[t];
            let slot = edges.iter().position(|&e| e == j).expect("incidence is consistent");
            let base = tet_lengths(tri, l.lengths(), t);
            let (mut plus, mut minus) = (base, base);
            plus.0[slot] += h;
            minus.0[slot] -= h;
            if !(tet_nondegenerate(k, &plus) && tet_nondegenerate(k, &minus)) {
                h *= 0.5;
                continue 'halving;
            }
            let (bp, bm) = match (dihedral_angles(k, &plus), dihedral_angles(k, &minus)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => {
                    h *= 0.5;
                    continue 'halving;
                }
            };
            for (s, &e) in edges.iter().enumerate() {
                entries.push((e, -(bp.0[s] - bm.0[s]) / (2.0 * h)));
            }
        }
        return Ok((entries, h));
    }
    Err(CurvatureError::StepTooLarge { edge: j })
}

/// Assemble `L = ∂R/∂l` by central differences with step `h_rel·max(1, l_j)`.
///
/// Only the tetrahedra incident to edge `j` change when `l_j` moves, so each
/// column is accumulated from those tetrahedra alone. Columns are independent
/// and are evaluated in parallel when the `parallel` feature is on.
pub fn jacobian_l(tri: &Triangulation, l: &PLMetric, k: f64, h_rel: f64) -> Result<Laplacian, CurvatureError> {
    metric_nondegenerate(tri, l, k)?;
    let m = tri.num_edges();
    let columns = par::map_indexed(m, |j| fd_column(tri, l, k, h_rel, j));
    assemble(l, h_rel, m, columns)
}

/// Same as [`jacobian_l`] but always single-threaded.
pub fn jacobian_l_sequential(
    tri: &Triangulation,
    l: &PLMetric,
    k: f64,
    h_rel: f64,
) -> Result<Laplacian, CurvatureError> {
    metric_nondegenerate(tri, l, k)?;
    let m = tri.num_edges();
    let columns = par::map_indexed_seq(m, |j| fd_column(tri, l, k, h_rel, j));
    assemble(l, h_rel, m, columns)
}

fn assemble(
    l: &PLMetric,
    h_rel: f64,
    m: usize,
    columns: Vec<Result<Column, CurvatureError>>,
) -> Result<Laplacian, CurvatureError> {
    let mut matrix = DMatrix::zeros(m, m);
    let mut steps = Vec::with_capacity(m);
    for (j, col) in columns.into_iter().enumerate() {
        let (entries, h) = col?;
        for (i, v) in entries {
            matrix[(i, j)] += v;
        }
        steps.push(h);
    }
    let lv = DVector::from_column_slice(l.lengths());
    let asymmetry = (&matrix - matrix.transpose()).amax();
    let euler_residual = (&matrix * &lv).amax();
    let left_euler_residual = (matrix.transpose() * &lv).amax();
    Ok(Laplacian {
        matrix,
        asymmetry,
        euler_residual,
        left_euler_residual,
        h_rel,
        steps,
        at: l.clone(),
    })
}

/// Gradient of the quadratic energy, `2 Lᵀ R`, with the raw `L`.
pub fn nabla_c(lap: &Laplacian, r: &[f64]) -> Result<Vec<f64>, CurvatureError> {
    check_dim(lap.dim(), r.len())?;
    let rv = DVector::from_column_slice(r);
    Ok((lap.matrix.tr_mul(&rv) * 2.0).iter().copied().collect())
}

/// Relative tolerance for semidefiniteness and rank decisions.
pub const EIG_REL_TOL: f64 = 1e-7;
/// Einstein residual required before a stability analysis is attempted.
pub const EINSTEIN_TOL: f64 = 1e-6;

/// Linear stability of an Einstein metric under the normalized second-order flow.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub lambda_de: f64,
    /// Largest eigenvalue of `λ(I - llᵀ/‖l‖²) - L_sym`.
    pub max_eig_condition: f64,
    /// Smallest eigenvalue of `L_sym` on the orthogonal complement of `l`.
    pub first_eig_l: f64,
    /// Whether `first_eig_l > lambda_de`.
    pub first_eig_exceeds_lambda: bool,
    pub tol: f64,
    /// `max_eig_condition <= tol`.
    pub satisfied: bool,
}

fn projector(l: &[f64]) -> DMatrix<f64> {
    let m = l.len();
    let lv = DVector::from_column_slice(l);
    let n2 = lv.norm_squared();
    DMatrix::identity(m, m) - (&lv * lv.transpose()) / n2
}

pub fn stability_check(
    state: &CurvatureState,
    l_de: &PLMetric,
    lap: &Laplacian,
) -> Result<StabilityReport, CurvatureError> {
    check_dim(lap.dim(), l_de.len())?;
    check_dim(lap.dim(), state.ricci.len())?;
    // a Ricci-flat metric is Einstein with λ = 0
    if !(state.einstein_residual < EINSTEIN_TOL || state.flat_residual < EINSTEIN_TOL) {
        return Err(CurvatureError::NotEinstein {
            residual: state.einstein_residual,
        });
    }
    let ls = lap.symmetrized();
    let sigma_max = spectral_radius(&ls);
    let tol = EIG_REL_TOL * sigma_max;
    let p = projector(l_de.lengths());
    let lambda = state.lambda;
    let cond = &p * lambda - &ls;
    let (cond_eigs, _) = sorted_eigen(cond);
    let max_eig_condition = *cond_eigs.last().unwrap();

    let (restricted, vecs) = sorted_eigen(&p * &ls * &p);
    let lhat = DVector::from_column_slice(l_de.lengths()).normalize();
    let drop = (0..restricted.len())
        .max_by(|&a, &b| {
            let ca = vecs.column(a).dot(&lhat).abs();
            let cb = vecs.column(b).dot(&lhat).abs();
            ca.total_cmp(&cb)
        })
        .unwrap();
    let first_eig_l = restricted
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != drop)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);

    Ok(StabilityReport {
        lambda_de: lambda,
        max_eig_condition,
        first_eig_l,
        first_eig_exceeds_lambda: first_eig_l > lambda,
        tol,
        satisfied: max_eig_condition <= tol,
    })
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    sorted_eigen(m.clone()).0.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Numerical rank of `L_sym` and its kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub dim: usize,
    pub rank: usize,
    /// Singular values of `L_sym`, descending.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    /// Orthonormal kernel basis.
    pub kernel: Vec<Vec<f64>>,
    pub corank_one: bool,
    /// `|cos|` of the angle between the kernel vector and `l` when the corank is one.
    pub kernel_alignment: Option<f64>,
    pub kernel_parallel_to_metric: bool,
}

pub fn rank_check(lap: &Laplacian, tol: f64) -> RankReport {
    let m = lap.dim();
    let (values, vectors) = sorted_eigen(lap.symmetrized());
    let sigma_max = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let threshold = tol * sigma_max;
    let mut singular_values: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let kernel: Vec<Vec<f64>> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= threshold)
        .map(|(i, _)| vectors.column(i).iter().copied().collect())
        .collect();
    let rank = m - kernel.len();
    let corank_one = kernel.len() == 1;
    let kernel_alignment = corank_one.then(|| {
        let lhat = DVector::from_column_slice(lap.at.lengths()).normalize();
        DVector::from_column_slice(&kernel[0]).dot(&lhat).abs()
    });
    RankReport {
        dim: m,
        rank,
        singular_values,
        threshold,
        kernel,
        corank_one,
        kernel_alignment,
        kernel_parallel_to_metric: kernel_alignment.is_some_and(|c| c > 1.0 - 1e-6),
    }
}
