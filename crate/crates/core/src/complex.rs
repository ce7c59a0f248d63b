//! Combinatorial 3-dimensional triangulations.
//!
//! A [`Triangulation`] is built from a list of tetrahedra. Edges are derived
//! and indexed in lexicographic order of their sorted vertex pairs, so the
//! same input always yields the same edge numbering. Non-closed complexes
//! (faces with a single incident tetrahedron) are accepted; [`Triangulation::is_closed`]
//! reports whether every face is shared by exactly two tetrahedra.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Local edge order inside a tetrahedron `[i, j, k, l]`: `ij, ik, il, jk, jl, kl`.
pub const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// For each local edge, the local index of the opposite edge.
pub const OPPOSITE_EDGE: [usize; 6] = [5, 4, 3, 2, 1, 0];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ComplexError {
    #[error("the complex has no tetrahedra")]
    EmptyComplex,
    #[error("tetrahedron {tet} repeats vertex {vertex}")]
    DuplicateVertexInTet { tet: usize, vertex: usize },
    #[error("tetrahedron {tet} references vertex {vertex} but only {num_vertices} vertices exist")]
    VertexIndexOutOfRange {
        tet: usize,
        vertex: usize,
        num_vertices: usize,
    },
    #[error("tetrahedron index {index} out of range ({len} tetrahedra)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown builtin mesh `{0}`")]
    UnknownBuiltin(String),
}

/// Sorted vertex pair.
pub type Edge = [usize; 2];
/// Sorted vertex triple.
pub type Face = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    num_vertices: usize,
    tets: Vec<[usize; 4]>,
    edges: Vec<Edge>,
    edge_of_pair: HashMap<Edge, usize>,
    tets_of_edge: Vec<Vec<usize>>,
    tet_edges: Vec<[usize; 6]>,
    /// Face -> number of incident tetrahedra.
    faces: BTreeMap<Face, usize>,
    closed: bool,
}

fn sorted_pair(a: usize, b: usize) -> Edge {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl Triangulation {
    /// Build the complex, derive the canonical edge list and all incidence maps.
    pub fn new(num_vertices: usize, tets: &[[usize; 4]]) -> Result<Self, ComplexError> {
        if tets.is_empty() {
            return Err(ComplexError::EmptyComplex);
        }
        for (t, tet) in tets.iter().enumerate() {
            for (a, &v) in tet.iter().enumerate() {
                if v >= num_vertices {
                    return Err(ComplexError::VertexIndexOutOfRange {
                        tet: t,
                        vertex: v,
                        num_vertices,
                    });
                }
                if tet[..a].contains(&v) {
                    return Err(ComplexError::DuplicateVertexInTet { tet: t, vertex: v });
                }
            }
        }

        let mut edges: Vec<Edge> = tets
            .iter()
            .flat_map(|tet| LOCAL_EDGES.iter().map(move |&(a, b)| sorted_pair(tet[a], tet[b])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let edge_of_pair: HashMap<Edge, usize> =
            edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();

        let mut tets_of_edge = vec![Vec::new(); edges.len()];
        let mut tet_edges = Vec::with_capacity(tets.len());
        let mut faces: BTreeMap<Face, usize> = BTreeMap::new();
        for (t, tet) in tets.iter().enumerate() {
            let mut local = [0usize; 6];
            for (slot, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
                let e = edge_of_pair[&sorted_pair(tet[a], tet[b])];
                local[slot] = e;
                tets_of_edge[e].push(t);
            }
            tet_edges.push(local);
            for skip in 0..4 {
                let mut face = [0usize; 3];
                let mut k = 0;
                for (a, &v) in tet.iter().enumerate() {
                    if a != skip {
                        face[k] = v;
                        k += 1;
                    }
                }
                face.sort_unstable();
                *faces.entry(face).or_insert(0) += 1;
            }
        }
        let closed = faces.values().all(|&c| c == 2);

        Ok(Self {
            num_vertices,
            tets: tets.to_vec(),
            edges,
            edge_of_pair,
            tets_of_edge,
            tet_edges,
            faces,
            closed,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn tetrahedra(&self) -> &[[usize; 4]] {
        &self.tets
    }

    /// Canonical edge list, lexicographically sorted.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Index of the edge joining `a` and `b`, in either order.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_of_pair.get(&sorted_pair(a, b)).copied()
    }

    /// Tetrahedra incident to edge `e`.
    pub fn tets_of_edge(&self, e: usize) -> &[usize] {
        &self.tets_of_edge[e]
    }

    /// Triangular faces with the number of tetrahedra sharing each.
    pub fn faces(&self) -> &BTreeMap<Face, usize> {
        &self.faces
    }

    /// True iff every triangular face is shared by exactly two tetrahedra.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Global edge indices of tetrahedron `tet` in local order `ij, ik, il, jk, jl, kl`.
    pub fn tet_edge_indices(&self, tet: usize) -> Result<[usize; 6], ComplexError> {
        self.tet_edges
            .get(tet)
            .copied()
            .ok_or(ComplexError::IndexOutOfRange {
                index: tet,
                len: self.tets.len(),
            })
    }

    pub(crate) fn tet_edges(&self) -> &[[usize; 6]] {
        &self.tet_edges
    }

    pub fn builtin(name: Builtin) -> Self {
        let (n, tets) = name.tets();
        Self::new(n, &tets).expect("builtin meshes are valid")
    }
}

/// Built-in example complexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    /// Boundary of the 4-dimensional cross-polytope: vertices
    /// `A1, A2, B1, B2, C1, C2, D1, D2` (indices 0..8) and the 16 tetrahedra `Ai Bj Ck Dl`.
    SixteenCell,
    /// Boundary of the 4-simplex: the five 4-subsets of 5 vertices.
    Pentachoron,
    SingleTet,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::SixteenCell, Builtin::Pentachoron, Builtin::SingleTet];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::SixteenCell => "sixteen_cell",
            Builtin::Pentachoron => "pentachoron",
            Builtin::SingleTet => "single_tet",
        }
    }

    fn tets(self) -> (usize, Vec<[usize; 4]>) {
        match self {
            Builtin::SixteenCell => {
                let mut tets = Vec::with_capacity(16);
                for a in 0..2 {
                    for b in 2..4 {
                        for c in 4..6 {
                            for d in 6..8 {
                                tets.push([a, b, c, d]);
                            }
                        }
                    }
                }
                (8, tets)
            }
            Builtin::Pentachoron => {
                let tets = (0..5)
                    .rev()
                    .map(|skip| {
                        let mut t = [0usize; 4];
                        for (slot, v) in t.iter_mut().zip((0..5).filter(|&v| v != skip)) {
                            *slot = v;
                        }
                        t
                    })
                    .collect();
                (5, tets)
            }
            Builtin::SingleTet => (4, vec![[0, 1, 2, 3]]),
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = ComplexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| ComplexError::UnknownBuiltin(s.to_string()))
    }
}

/// Convenience wrapper for name-based lookup.
pub fn make_builtin(name: &str) -> Result<Triangulation, ComplexError> {
    Ok(Triangulation::builtin(name.parse()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_cell_counts() {
        let tri = Triangulation::builtin(Builtin::SixteenCell);
        assert_eq!(tri.num_vertices(), 8);
        assert_eq!(tri.num_edges(), 24);
        assert_eq!(tri.num_tets(), 16);
        assert!(tri.is_closed());
        for e in 0..24 {
            assert_eq!(tri.tets_of_edge(e).len(), 4);
        }
        // no A1A2-type edges
        assert!(tri.edge_index(0, 1).is_none());
        assert!(tri.edge_index(6, 7).is_none());
    }

    #[test]
    fn pentachoron_counts() {
        let tri = Triangulation::builtin(Builtin::Pentachoron);
        assert_eq!((tri.num_vertices(), tri.num_edges(), tri.num_tets()), (5, 10, 5));
        assert!(tri.is_closed());
        assert!((0..10).all(|e| tri.tets_of_edge(e).len() == 3));
    }

    #[test]
    fn single_tet_is_open() {
        let tri = Triangulation::builtin(Builtin::SingleTet);
        assert_eq!(tri.num_edges(), 6);
        assert!(!tri.is_closed());
        assert_eq!(
            tri.edges(),
            &[[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]
        );
        assert_eq!(tri.tet_edge_indices(0).unwrap(), [0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn local_order_follows_tet_vertex_order() {
        let tri = Triangulation::new(4, &[[3, 1, 0, 2]]).unwrap();
        let idx = tri.tet_edge_indices(0).unwrap();
        let e = |a, b| tri.edge_index(a, b).unwrap();
        assert_eq!(idx, [e(3, 1), e(3, 0), e(3, 2), e(1, 0), e(1, 2), e(0, 2)]);
    }

    #[test]
    fn pentachoron_tet_edges() {
        let tri = Triangulation::builtin(Builtin::Pentachoron);
        let t = tri
            .tetrahedra()
            .iter()
            .position(|t| *t == [0, 1, 2, 3])
            .unwrap();
        let idx = tri.tet_edge_indices(t).unwrap();
        // canonical order over 5 vertices: 01,02,03,04,12,13,14,23,24,34
        assert_eq!(idx, [0, 1, 2, 4, 5, 7]);
    }

    #[test]
    fn errors() {
        assert_eq!(Triangulation::new(4, &[]), Err(ComplexError::EmptyComplex));
        assert!(matches!(
            Triangulation::new(4, &[[0, 1, 2, 4]]),
            Err(ComplexError::VertexIndexOutOfRange { vertex: 4, .. })
        ));
        assert!(matches!(
            Triangulation::new(4, &[[0, 1, 1, 3]]),
            Err(ComplexError::DuplicateVertexInTet { vertex: 1, .. })
        ));
        let tri = Triangulation::builtin(Builtin::SingleTet);
        assert!(matches!(
            tri.tet_edge_indices(1),
            Err(ComplexError::IndexOutOfRange { index: 1, len: 1 })
        ));
        assert!(matches!(
            make_builtin("torus"),
            Err(ComplexError::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn incidence_identity_and_consistency() {
        for b in Builtin::ALL {
            let tri = Triangulation::builtin(b);
            let total: usize = (0..tri.num_edges()).map(|e| tri.tets_of_edge(e).len()).sum();
            assert_eq!(total, 6 * tri.num_tets());
            for (e, &[a, c]) in tri.edges().iter().enumerate() {
                for (t, tet) in tri.tetrahedra().iter().enumerate() {
                    let incident = tet.contains(&a) && tet.contains(&c);
                    assert_eq!(incident, tri.tets_of_edge(e).contains(&t));
                }
            }
            assert_eq!(tri, Triangulation::builtin(b));
        }
    }

    #[test]
    fn sixteen_cell_tet_edges_distinct() {
        let tri = Triangulation::builtin(Builtin::SixteenCell);
        for t in 0..16 {
            let mut idx = tri.tet_edge_indices(t).unwrap().to_vec();
            assert!(idx.iter().all(|&i| i < 24));
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 6);
        }
    }
}
