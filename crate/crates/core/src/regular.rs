//! Closed-form Jacobian of the dihedral angles of a regular tetrahedron.
//!
//! For a regular tetrahedron of edge length `l0` in the model space of
//! curvature `K`, `∂β/∂l` (which is `-L` for a single tetrahedron) has only
//! three distinct entries: `x` on the diagonal, `z` between opposite edges and
//! `y` elsewhere. Its spectrum is `x - z` (×3), `x + z - 2y` (×2) and
//! `x + z + 4y` (×1). These are used as oracles for the finite-difference
//! Laplacian.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::complex::OPPOSITE_EDGE;
use crate::curvature::sorted_eigen;
use crate::geometry::{ck, sk};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularError {
    #[error("regular tetrahedron with K = {k}, l0 = {l0} does not exist")]
    OutOfModelRange { k: f64, l0: f64 },
}

fn check_range(k: f64, l0: f64) -> Result<(), RegularError> {
    let ok = l0 > 0.0 && l0.is_finite() && k.is_finite() && 1.0 + 3.0 * ck(k, l0) > 0.0;
    let ok = ok && (k <= 0.0 || k * l0 * l0 < std::f64::consts::PI.powi(2));
    if ok {
        Ok(())
    } else {
        Err(RegularError::OutOfModelRange { k, l0 })
    }
}

/// `cos β = C_K(l0) / (1 + 2 C_K(l0))`.
pub fn regular_cos_beta(k: f64, l0: f64) -> Result<f64, RegularError> {
    check_range(k, l0)?;
    let c = ck(k, l0);
    Ok(c / (1.0 + 2.0 * c))
}

/// Entries of `∂β/∂l` for the regular tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularEntries {
    /// `∂β_e/∂l_e`.
    pub x: f64,
    /// `∂β_e/∂l_f` for `f` adjacent to `e`.
    pub y: f64,
    /// `∂β_e/∂l_f` for `f` opposite to `e`.
    pub z: f64,
}

pub fn regular_xyz(k: f64, l0: f64) -> Result<RegularEntries, RegularError> {
    check_range(k, l0)?;
    let c = ck(k, l0);
    let ch = ck(k, 0.5 * l0);
    let sh = sk(k, 0.5 * l0);
    let q = (1.0 + 3.0 * c).sqrt();
    let r2 = std::f64::consts::SQRT_2;
    Ok(RegularEntries {
        x: r2 * c * c / (sh * q * (1.0 + 2.0 * c)),
        y: -r2 * c * ch * ch / (sh * (1.0 + 2.0 * c) * q),
        z: r2 * ch * ch / (sh * q),
    })
}

/// 6×6 matrix with `x` on the diagonal, `z` at opposite-edge positions
/// `(AB,CD), (AC,BD), (AD,BC)` and `y` everywhere else.
pub fn regular_matrix(x: f64, y: f64, z: f64) -> DMatrix<f64> {
    DMatrix::from_fn(6, 6, |i, j| {
        if i == j {
            x
        } else if OPPOSITE_EDGE[i] == j {
            z
        } else {
            y
        }
    })
}

/// Formula and numerical spectra of the regular matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    /// `(value, multiplicity)` for `x - z`, `x + z - 2y`, `x + z + 4y`.
    pub formula: [(f64, usize); 3],
    /// Numerical eigenvalues, ascending.
    pub numerical: Vec<f64>,
    /// Largest deviation between the sorted formula multiset and `numerical`.
    pub max_deviation: f64,
    /// `x - y`, reported alongside `x - z`.
    pub x_minus_y: f64,
}

pub fn eigen_report(e: &RegularEntries) -> EigenReport {
    let RegularEntries { x, y, z } = *e;
    let formula = [(x - z, 3), (x + z - 2.0 * y, 2), (x + z + 4.0 * y, 1)];
    let mut expected: Vec<f64> = formula
        .iter()
        .flat_map(|&(v, mult)| std::iter::repeat_n(v, mult))
        .collect();
    expected.sort_by(f64::total_cmp);
    let (numerical, _) = sorted_eigen(regular_matrix(x, y, z));
    let max_deviation = expected
        .iter()
        .zip(&numerical)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    EigenReport {
        formula,
        numerical,
        max_deviation,
        x_minus_y: x - y,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularClass {
    IndefiniteNonsingular,
    Singular,
    /// Not expected for a regular tetrahedron; kept so every spectrum has a class.
    Definite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class: RegularClass,
    pub entries: RegularEntries,
    pub eigen: EigenReport,
}

/// Relative threshold below which an eigenvalue counts as zero.
pub const ZERO_EIG_REL: f64 = 1e-10;

pub fn regular_classify(k: f64, l0: f64) -> Result<Classification, RegularError> {
    let entries = regular_xyz(k, l0)?;
    let eigen = eigen_report(&entries);
    let scale = eigen.numerical.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let class = if eigen.numerical.iter().any(|v| v.abs() <= ZERO_EIG_REL * scale) {
        RegularClass::Singular
    } else if eigen.numerical[0] < 0.0 && *eigen.numerical.last().unwrap() > 0.0 {
        RegularClass::IndefiniteNonsingular
    } else {
        RegularClass::Definite
    };
    Ok(Classification { class, entries, eigen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dihedral_angles, TetLengths};
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    #[test]
    fn cos_beta() {
        for l0 in [0.1, 1.0, 7.0] {
            assert!((regular_cos_beta(0.0, l0).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        }
        assert!(regular_cos_beta(1.0, FRAC_PI_2).unwrap().abs() < 1e-16);
        let c = 0.7f64.cosh();
        let direct = dihedral_angles(-1.0, &TetLengths::regular(0.7)).unwrap();
        let formula = regular_cos_beta(-1.0, 0.7).unwrap();
        assert!((formula - c / (1.0 + 2.0 * c)).abs() < 1e-15);
        assert!(direct.0.iter().all(|b| (b.cos() - formula).abs() < 1e-10));
    }

    #[test]
    fn xyz_values() {
        let e = regular_xyz(0.0, 1.0).unwrap();
        assert!((e.x - SQRT_2 / 3.0).abs() < 1e-15);
        assert!((e.y + SQRT_2 / 3.0).abs() < 1e-15);
        assert!((e.z - SQRT_2).abs() < 1e-15);
        assert!((e.x + e.z + 4.0 * e.y).abs() < 1e-12);

        let e = regular_xyz(1.0, FRAC_PI_2).unwrap();
        assert!(e.x.abs() < 1e-15 && e.y.abs() < 1e-15);
        assert!((e.z - 1.0).abs() < 1e-15);
    }

    #[test]
    fn xyz_matches_finite_differences() {
        // independent oracle: central differences of the dihedral angles
        for &(k, l0) in &[(-1.0, 0.7), (1.0, 0.7), (0.25, 1.1), (0.0, 1.3)] {
            let e = regular_xyz(k, l0).unwrap();
            let expect = regular_matrix(e.x, e.y, e.z);
            let h = 1e-6;
            for j in 0..6 {
                let mut p = TetLengths::regular(l0);
                let mut m = TetLengths::regular(l0);
                p.0[j] += h;
                m.0[j] -= h;
                let bp = dihedral_angles(k, &p).unwrap();
                let bm = dihedral_angles(k, &m).unwrap();
                for i in 0..6 {
                    let fd = (bp.0[i] - bm.0[i]) / (2.0 * h);
                    assert!((fd - expect[(i, j)]).abs() < 1e-5, "K={k} l0={l0} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn matrix_pattern() {
        assert_eq!(regular_matrix(1.0, 0.0, 0.0), DMatrix::identity(6, 6));
        let p = regular_matrix(0.0, 0.0, 1.0);
        assert_eq!(p[(0, 5)], 1.0);
        assert_eq!(p[(1, 4)], 1.0);
        assert_eq!(p[(2, 3)], 1.0);
        assert_eq!(p, p.transpose());
        let rep = eigen_report(&RegularEntries { x: 0.0, y: 0.0, z: 1.0 });
        let (neg, pos): (Vec<f64>, Vec<f64>) = rep.numerical.iter().partition(|&&v| v < 0.0);
        assert_eq!((neg.len(), pos.len()), (3, 3));
        assert!(rep.max_deviation < 1e-12);
        assert_eq!(rep.formula.map(|f| f.0), [-1.0, 1.0, 1.0]);

        let e = regular_xyz(0.0, 1.0).unwrap();
        let rep = eigen_report(&e);
        assert!(rep.numerical.iter().any(|v| v.abs() < 1e-12));
        assert!(rep.max_deviation < 1e-10);
    }

    #[test]
    fn classification() {
        let c = regular_classify(1.0, 0.3).unwrap();
        assert_eq!(c.class, RegularClass::IndefiniteNonsingular);
        assert_eq!(regular_classify(0.0, 1.0).unwrap().class, RegularClass::Singular);
        let c = regular_classify(-1.0, 1.2).unwrap();
        assert_eq!(c.class, RegularClass::IndefiniteNonsingular);
        let e = c.entries;
        assert!(e.x + e.z + 4.0 * e.y < 0.0);
    }

    #[test]
    fn sign_laws_and_continuity() {
        for &k in &[-1.0, -0.25, 0.25, 1.0] {
            for &l0 in &[0.3, 0.7, 1.1] {
                let e = regular_xyz(k, l0).unwrap();
                assert!(e.x + e.z - 2.0 * e.y > 0.0);
                assert_eq!((e.x + e.z + 4.0 * e.y).signum(), f64::signum(k));
                // x - z = -√2 √(1+3C) / (2 S(l0/2) (1+2C)) < 0
                let c = ck(k, l0);
                let closed = -SQRT_2 * (1.0 + 3.0 * c).sqrt() / (2.0 * sk(k, 0.5 * l0) * (1.0 + 2.0 * c));
                assert!((e.x - e.z - closed).abs() < 1e-12);
                assert!(e.x - e.z < 0.0);
                // x - y has the sign of C_K(l0), positive on this grid
                assert!(eigen_report(&e).x_minus_y > 0.0);
            }
        }
        for l0 in [0.3, 0.7, 1.1] {
            let base = regular_xyz(0.0, l0).unwrap();
            for k in [1e-8, -1e-8] {
                let e = regular_xyz(k, l0).unwrap();
                assert!((e.x - base.x).abs() < 1e-6);
                assert!((e.y - base.y).abs() < 1e-6);
                assert!((e.z - base.z).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn out_of_range() {
        assert!(regular_xyz(1.0, 3.5).is_err());
        assert!(regular_cos_beta(0.0, 0.0).is_err());
        // 1 + 3 C_1(2.0) < 0
        assert!(regular_xyz(1.0, 2.0).is_err());
    }
}
