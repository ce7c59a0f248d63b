//! Per-tetrahedron metric geometry in the Euclidean space (`K = 0`) and in the
//! constant-curvature model spaces (`K > 0` spherical, `K < 0` hyperbolic).
//!
//! Dihedral angles are computed the same way for every `K`: the three face
//! angles at a vertex come from the space-form cosine law, they form a
//! spherical triangle (the vertex link), and the dihedral angle along an edge
//! is the angle of that link triangle, obtained from the spherical cosine law.

use std::f64::consts::PI;

use nalgebra::Matrix5;
use thiserror::Error;

use crate::complex::LOCAL_EDGES;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("sides ({opp}, {b}, {c}) do not form a nondegenerate triangle for K = {k}")]
    InvalidTriangle { k: f64, opp: f64, b: f64, c: f64 },
    #[error("tetrahedron is degenerate for K = {k}")]
    DegenerateTet { k: f64 },
}

/// Generalized sine: `sin(√K t)/√K`, `t`, or `sinh(√-K t)/√-K`.
pub fn sk(k: f64, t: f64) -> f64 {
    if k == 0.0 {
        t
    } else if k > 0.0 {
        let s = k.sqrt();
        (s * t).sin() / s
    } else {
        let s = (-k).sqrt();
        (s * t).sinh() / s
    }
}

/// Generalized cosine: `cos(√K t)`, `1`, or `cosh(√-K t)`.
pub fn ck(k: f64, t: f64) -> f64 {
    if k == 0.0 {
        1.0
    } else if k > 0.0 {
        (k.sqrt() * t).cos()
    } else {
        ((-k).sqrt() * t).cosh()
    }
}

/// `∫₀ʳ S_K(t) dt`, i.e. `(1 - C_K(r))/K`, or `r²/2` at `K = 0`.
pub fn fk(k: f64, r: f64) -> f64 {
    if k == 0.0 {
        return 0.5 * r * r;
    }
    let u = k * r * r;
    if u.abs() < 1e-2 {
        // (1 - cos√u)/K = r² Σ (-u)^n / (2n+2)!
        let mut term = 0.5 * r * r;
        let mut sum = term;
        for n in 1..8 {
            let d = ((2 * n + 1) * (2 * n + 2)) as f64;
            term *= -u / d;
            sum += term;
        }
        sum
    } else {
        (1.0 - ck(k, r)) / k
    }
}

/// Six edge lengths of a tetrahedron in local order `ij, ik, il, jk, jl, kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetLengths(pub [f64; 6]);

/// Six dihedral angles (radians) in local edge order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetAngles(pub [f64; 6]);

impl TetLengths {
    pub fn regular(l0: f64) -> Self {
        Self([l0; 6])
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self(self.0.map(|l| l * t))
    }

    /// Length of the edge between local vertices `a` and `b`.
    pub fn between(&self, a: usize, b: usize) -> f64 {
        self.0[local_edge(a, b)]
    }
}

/// Local edge slot for local vertices `a != b` in `0..4`.
pub fn local_edge(a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    LOCAL_EDGES
        .iter()
        .position(|&e| e == (a, b))
        .expect("local vertices must be distinct and < 4")
}

/// Euclidean volume from the Cayley–Menger determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmVolume {
    /// `√(det/288)` when the determinant is nonnegative, else `0`.
    pub volume: f64,
    /// `det/288`, i.e. the signed squared volume.
    pub signed_sq: f64,
}

/// Bordered 5×5 Cayley–Menger determinant of the squared edge lengths.
pub fn cm_determinant(lens: &TetLengths) -> f64 {
    let [a, b, c, d, e, f] = lens.0.map(|l| l * l);
    Matrix5::new(
        0.0, 1.0, 1.0, 1.0, 1.0, //
        1.0, 0.0, a, b, c, //
        1.0, a, 0.0, d, e, //
        1.0, b, d, 0.0, f, //
        1.0, c, e, f, 0.0,
    )
    .determinant()
}

pub fn cm_volume(lens: &TetLengths) -> CmVolume {
    let signed_sq = cm_determinant(lens) / 288.0;
    CmVolume {
        volume: if signed_sq > 0.0 { signed_sq.sqrt() } else { 0.0 },
        signed_sq,
    }
}

/// Strict triangle inequalities, plus the perimeter and side bounds for `K > 0`.
pub fn triangle_valid(k: f64, a: f64, b: f64, c: f64) -> bool {
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return false;
    }
    if !(a < b + c && b < a + c && c < a + b) {
        return false;
    }
    if k > 0.0 {
        let diam = PI / k.sqrt();
        a < diam && b < diam && c < diam && a + b + c < 2.0 * diam
    } else {
        true
    }
}

/// Angle between sides `b` and `c` of a triangle whose third side is `opp`.
pub fn face_angle(k: f64, opp: f64, b: f64, c: f64) -> Result<f64, GeometryError> {
    if !triangle_valid(k, opp, b, c) {
        return Err(GeometryError::InvalidTriangle { k, opp, b, c });
    }
    let cos = if k == 0.0 {
        (b * b + c * c - opp * opp) / (2.0 * b * c)
    } else {
        1.0 - (fk(k, opp) - fk(k, b - c)) / (sk(k, b) * sk(k, c))
    };
    Ok(cos.clamp(-1.0, 1.0).acos())
}

/// Face angles at each vertex `p`, ordered by the two other endpoints:
/// `angles[p][slot]` where slot enumerates pairs `(q, r)` of the remaining
/// vertices in increasing order.
type VertexFaceAngles = [[f64; 3]; 4];

fn others(p: usize) -> [usize; 3] {
    let mut o = [0usize; 3];
    for (slot, v) in o.iter_mut().zip((0..4).filter(|&v| v != p)) {
        *slot = v;
    }
    o
}

/// Index of the pair `(q, r)` among the pairs of `others(p)`: (0,1)->0, (0,2)->1, (1,2)->2.
fn pair_slot(o: &[usize; 3], q: usize, r: usize) -> usize {
    let iq = o.iter().position(|&v| v == q).unwrap();
    let ir = o.iter().position(|&v| v == r).unwrap();
    match (iq.min(ir), iq.max(ir)) {
        (0, 1) => 0,
        (0, 2) => 1,
        _ => 2,
    }
}

fn vertex_face_angles(k: f64, lens: &TetLengths) -> Result<VertexFaceAngles, GeometryError> {
    let mut out = [[0.0; 3]; 4];
    for (p, row) in out.iter_mut().enumerate() {
        let o = others(p);
        for (slot, (q, r)) in [(o[0], o[1]), (o[0], o[2]), (o[1], o[2])].into_iter().enumerate() {
            row[slot] = face_angle(k, lens.between(q, r), lens.between(p, q), lens.between(p, r))
                .map_err(|_| GeometryError::DegenerateTet { k })?;
        }
    }
    Ok(out)
}

/// Signed slack of the strict spherical-triangle conditions for sides `t`.
fn link_slack(t: &[f64; 3]) -> f64 {
    let [a, b, c] = *t;
    (b + c - a)
        .min(a + c - b)
        .min(a + b - c)
        .min(2.0 * PI - (a + b + c))
}

/// Smallest vertex-link slack over the four vertices. Negative or `-inf`
/// (invalid face) means degenerate.
pub fn link_margin(k: f64, lens: &TetLengths) -> f64 {
    match vertex_face_angles(k, lens) {
        Ok(fa) => fa.iter().map(link_slack).fold(f64::INFINITY, f64::min),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Which endpoint's vertex link is used to evaluate the dihedral angle along each edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkEndpoint {
    First,
    Second,
}

fn link_angle(link: &[f64; 3], o: &[usize; 3], q: usize, k: f64) -> Result<f64, GeometryError> {
    // sides adjacent to the q-direction, and the opposite side
    let [r, s] = {
        let mut rs = [0usize; 2];
        for (slot, &v) in rs.iter_mut().zip(o.iter().filter(|&&v| v != q)) {
            *slot = v;
        }
        rs
    };
    let t_qr = link[pair_slot(o, q, r)];
    let t_qs = link[pair_slot(o, q, s)];
    let t_rs = link[pair_slot(o, r, s)];
    let cos = (t_rs.cos() - t_qr.cos() * t_qs.cos()) / (t_qr.sin() * t_qs.sin());
    if !(cos > -1.0 && cos < 1.0) {
        return Err(GeometryError::DegenerateTet { k });
    }
    Ok(cos.acos())
}

/// Dihedral angles evaluated from the chosen endpoint of every edge.
pub fn dihedral_angles_from(
    k: f64,
    lens: &TetLengths,
    endpoint: LinkEndpoint,
) -> Result<TetAngles, GeometryError> {
    let fa = vertex_face_angles(k, lens)?;
    if fa.iter().any(|t| !(link_slack(t) > 0.0)) {
        return Err(GeometryError::DegenerateTet { k });
    }
    let mut out = [0.0; 6];
    for (slot, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
        let (p, q) = match endpoint {
            LinkEndpoint::First => (a, b),
            LinkEndpoint::Second => (b, a),
        };
        out[slot] = link_angle(&fa[p], &others(p), q, k)?;
    }
    Ok(TetAngles(out))
}

/// Dihedral angles along the six edges, in local edge order.
pub fn dihedral_angles(k: f64, lens: &TetLengths) -> Result<TetAngles, GeometryError> {
    dihedral_angles_from(k, lens, LinkEndpoint::First)
}

/// Nondegeneracy of a single tetrahedron.
///
/// `K = 0`: positive lengths, positive Cayley–Menger volume and the triangle
/// inequality on every face. `K != 0`: valid faces and strictly valid vertex
/// links (with the `π/√K` length bound when `K > 0`).
pub fn tet_nondegenerate(k: f64, lens: &TetLengths) -> bool {
    if lens.0.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return false;
    }
    let faces_ok = (0..4).all(|p| {
        let o = others(p);
        triangle_valid(
            k,
            lens.between(o[0], o[1]),
            lens.between(o[0], o[2]),
            lens.between(o[1], o[2]),
        )
    });
    if !faces_ok {
        return false;
    }
    if k == 0.0 {
        cm_determinant(lens) > 0.0
    } else {
        link_margin(k, lens) > 0.0
    }
}

/// Degeneracy monitor: the signed Cayley–Menger squared volume at `K = 0`,
/// the vertex-link margin otherwise. Positive iff nondegenerate.
pub fn degeneracy_margin(k: f64, lens: &TetLengths) -> f64 {
    if !tet_nondegenerate(k, lens) {
        return if k == 0.0 {
            cm_volume(lens).signed_sq.min(0.0)
        } else {
            link_margin(k, lens).min(0.0)
        };
    }
    if k == 0.0 {
        cm_volume(lens).signed_sq
    } else {
        link_margin(k, lens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ARCCOS_THIRD: f64 = 1.230_959_417_340_774_6;

    #[test]
    fn trig_basics() {
        assert_eq!(sk(0.0, 0.7), 0.7);
        assert_eq!(ck(0.0, 0.7), 1.0);
        assert!((fk(0.0, 0.7) - 0.245).abs() < 1e-16);
        assert!((sk(1.0, PI / 2.0) - 1.0).abs() < 1e-15);
        assert!(ck(1.0, PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn fk_half_angle_identity_hyperbolic() {
        for i in 1..200 {
            let r = 2.0 * i as f64 / 200.0;
            let lhs = fk(-1.0, r);
            let rhs = 2.0 * sk(-1.0, r / 2.0).powi(2);
            assert!((lhs - rhs).abs() < 1e-12, "r = {r}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn addition_laws() {
        for &(k, a, b) in &[(1.0, 0.3, 0.9), (-1.0, 0.4, 1.3), (0.25, 1.1, 0.2), (0.0, 0.5, 0.5)] {
            let s = sk(k, a) * ck(k, b) + ck(k, a) * sk(k, b);
            let c = ck(k, a) * ck(k, b) - k * sk(k, a) * sk(k, b);
            assert!((sk(k, a + b) - s).abs() < 1e-12);
            assert!((ck(k, a + b) - c).abs() < 1e-12);
        }
        // S_K(a)S_K(b) + C_K(a)C_K(b) is not an addition law: at a = b = π/3
        // it gives 3/4 + 1/4 = 1 while sin(2π/3) = √3/2
        let a = PI / 3.0;
        let printed = sk(1.0, a) * sk(1.0, a) + ck(1.0, a) * ck(1.0, a);
        assert!((printed - sk(1.0, 2.0 * a)).abs() > 0.1);
    }

    #[test]
    fn cm_volume_regular_matches_coordinates() {
        // regular tet from coordinates: (0,0,0), (1,0,0), (1/2,√3/2,0), (1/2,√3/6,√(2/3))
        let p = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.5, 3f64.sqrt() / 2.0, 0.0],
            [0.5, 3f64.sqrt() / 6.0, (2.0f64 / 3.0).sqrt()],
        ];
        let d = |i: usize, j: usize| -> [f64; 3] { [0, 1, 2].map(|c| p[j][c] - p[i][c]) };
        let (u, v, w) = (d(0, 1), d(0, 2), d(0, 3));
        let triple = u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
            + u[2] * (v[0] * w[1] - v[1] * w[0]);
        let vol = cm_volume(&TetLengths::regular(1.0));
        assert!((vol.volume - triple.abs() / 6.0).abs() < 1e-14);
        assert!((vol.volume - 2f64.sqrt() / 12.0).abs() < 1e-14);
        assert!((vol.volume - 0.117_851_1).abs() < 1e-7);
    }

    #[test]
    fn cm_volume_flat_and_negative() {
        let s2 = 2f64.sqrt();
        // unit square 0-1-2-3 with diagonals 02 and 13
        let square = TetLengths([1.0, s2, 1.0, 1.0, s2, 1.0]);
        let v = cm_volume(&square);
        assert_eq!(v.volume, 0.0);
        assert!(v.signed_sq.abs() < 1e-14);
        // faces (3,4,5), (3,5,4), (4,5,2), (5,4,2) are valid, but the
        // determinant (exact integer arithmetic) is -6210
        let bad = TetLengths([3.0, 4.0, 5.0, 5.0, 4.0, 2.0]);
        assert!((cm_determinant(&bad) + 6210.0).abs() < 1e-8);
        assert!(cm_volume(&bad).signed_sq < 0.0);
        assert!(!tet_nondegenerate(0.0, &bad));
    }

    #[test]
    fn triangle_validity() {
        assert!(triangle_valid(0.0, 1.0, 1.0, 1.0));
        assert!(!triangle_valid(0.0, 1.0, 1.0, 2.0));
        assert!(triangle_valid(1.0, PI / 2.0, PI / 2.0, PI / 2.0));
        assert!(!triangle_valid(1.0, 3.0, 3.0, 1.0)); // perimeter 7 > 2π
        assert!(!triangle_valid(-1.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn face_angle_examples() {
        assert!((face_angle(0.0, 1.0, 1.0, 1.0).unwrap() - PI / 3.0).abs() < 1e-15);
        assert!((face_angle(1.0, PI / 2.0, PI / 2.0, PI / 2.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((face_angle(0.0, 5.0, 4.0, 3.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!(matches!(
            face_angle(0.0, 2.0, 1.0, 1.0),
            Err(GeometryError::InvalidTriangle { .. })
        ));
    }

    #[test]
    fn face_angle_matches_space_form_cosine_law() {
        // C_K(c) = C_K(a)C_K(b) + K S_K(a)S_K(b) cos C
        for &(k, c, a, b) in &[(1.0, 0.9, 0.7, 0.5), (-1.0, 1.3, 0.8, 0.9), (0.25, 1.0, 1.2, 0.4)] {
            let ang = face_angle(k, c, a, b).unwrap();
            let rhs = ck(k, a) * ck(k, b) + k * sk(k, a) * sk(k, b) * ang.cos();
            assert!((ck(k, c) - rhs).abs() < 1e-13);
        }
    }

    #[test]
    fn dihedral_examples() {
        let eu = dihedral_angles(0.0, &TetLengths::regular(1.0)).unwrap();
        assert!(eu.0.iter().all(|&b| (b - ARCCOS_THIRD).abs() < 1e-12));
        assert!((ARCCOS_THIRD - (1.0f64 / 3.0).acos()).abs() < 1e-15);
        let sph = dihedral_angles(1.0, &TetLengths::regular(PI / 2.0)).unwrap();
        assert!(sph.0.iter().all(|&b| (b - PI / 2.0).abs() < 1e-12));
        let s2 = 2f64.sqrt();
        let square = TetLengths([1.0, s2, 1.0, 1.0, s2, 1.0]);
        assert!(matches!(
            dihedral_angles(0.0, &square),
            Err(GeometryError::DegenerateTet { .. })
        ));
    }

    #[test]
    fn nondegeneracy_examples() {
        assert!(tet_nondegenerate(0.0, &TetLengths::regular(1.0)));
        let s2 = 2f64.sqrt();
        assert!(!tet_nondegenerate(0.0, &TetLengths([1.0, s2, 1.0, 1.0, s2, 1.0])));
        assert!(tet_nondegenerate(-1.0, &TetLengths::regular(0.7)));
        assert!(link_margin(-1.0, &TetLengths::regular(0.7)) > 0.0);
        assert!(!tet_nondegenerate(0.0, &TetLengths([1.0, 1.0, 1.0, 1.0, 1.0, 1.99])));
        // beyond π/√K on the sphere
        assert!(!tet_nondegenerate(1.0, &TetLengths::regular(3.2)));
        assert!(degeneracy_margin(0.0, &TetLengths([1.0, 1.0, 1.0, 1.0, 1.0, 1.99])) < 0.0);
    }

    #[test]
    fn continuity_in_k() {
        let lens = TetLengths::regular(1.0);
        let base = dihedral_angles(0.0, &lens).unwrap();
        for k in [1e-8, -1e-8] {
            let a = dihedral_angles(k, &lens).unwrap();
            for i in 0..6 {
                assert!((a.0[i] - base.0[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scale_invariance_euclidean() {
        let lens = TetLengths([1.0, 1.1, 0.9, 1.2, 1.05, 0.95]);
        let base = dihedral_angles(0.0, &lens).unwrap();
        for t in [0.5, 2.0, 10.0] {
            let a = dihedral_angles(0.0, &lens.scaled(t)).unwrap();
            for i in 0..6 {
                assert!((a.0[i] - base.0[i]).abs() < 1e-12);
            }
        }
    }

    fn arb_k() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), -1.0..1.0f64]
    }

    proptest! {
        #[test]
        fn fk_identity(k in -4.0..4.0f64, r in 0.0..1.5f64) {
            prop_assert!((fk(k, r) - 2.0 * sk(k, r / 2.0).powi(2)).abs() < 1e-12);
        }

        #[test]
        fn pythagorean_identity(k in -4.0..4.0f64, a in 0.0..1.5f64) {
            prop_assert!((k * sk(k, a).powi(2) + ck(k, a).powi(2) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn euclidean_cosine_law(b in 0.1..10.0f64, c in 0.1..10.0f64, t in 0.01..0.99f64) {
            let opp = (b - c).abs() + t * (b + c - (b - c).abs());
            prop_assume!(triangle_valid(0.0, opp, b, c));
            let expect = ((b * b + c * c - opp * opp) / (2.0 * b * c)).acos();
            prop_assert!((face_angle(0.0, opp, b, c).unwrap() - expect).abs() < 1e-12);
        }

        #[test]
        fn link_consistency(k in arb_k(), jitter in proptest::array::uniform6(-0.15..0.15f64)) {
            let lens = TetLengths(jitter.map(|j| 0.8 * (1.0 + j)));
            prop_assume!(tet_nondegenerate(k, &lens));
            let a = dihedral_angles_from(k, &lens, LinkEndpoint::First).unwrap();
            let b = dihedral_angles_from(k, &lens, LinkEndpoint::Second).unwrap();
            for i in 0..6 {
                prop_assert!((a.0[i] - b.0[i]).abs() < 1e-9);
                prop_assert!(a.0[i] > 0.0 && a.0[i] < PI);
            }
        }
    }
}
