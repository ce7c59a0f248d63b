//! Mesh files: a JSON document holding a triangulation and its PL-metric.
//!
//! ```json
//! {
//!   "name": "sixteen_cell",
//!   "num_vertices": 8,
//!   "tetrahedra": [[0, 2, 4, 6], ...],
//!   "edges": [[0, 2], [0, 3], ...],
//!   "lengths": [1.5707963267948966, ...],
//!   "K": 0.0
//! }
//! ```
//!
//! Vertex indices are 0-based. `edges` must list the sorted vertex pairs of
//! the triangulation in lexicographic order and `lengths` runs parallel to
//! it. `K` defaults to 0 and `name` is optional.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use thiserror::Error;

use crate::complex::{ComplexError, Triangulation};
use crate::curvature::{CurvatureError, PLMetric};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cannot read or write `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed mesh JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("edge list has {got} entries, the triangulation has {expected}")]
    EdgeCount { expected: usize, got: usize },
    #[error("edge {index} is {got:?}, expected {expected:?}")]
    EdgeMismatch {
        index: usize,
        expected: [usize; 2],
        got: [usize; 2],
    },
    #[error(transparent)]
    Lengths(#[from] CurvatureError),
    #[error("K must be finite")]
    NonFiniteK,
}

impl MeshError {
    pub fn is_io(&self) -> bool {
        matches!(self, MeshError::Io { .. })
    }
}

/// On-disk layout, field order as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub num_vertices: usize,
    pub tetrahedra: Vec<[usize; 4]>,
    pub edges: Vec<[usize; 2]>,
    pub lengths: Vec<f64>,
    #[serde(rename = "K", default)]
    pub k: f64,
}

/// A validated mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub name: Option<String>,
    pub tri: Triangulation,
    pub metric: PLMetric,
    pub k: f64,
}

impl Mesh {
    pub fn new(name: Option<String>, tri: Triangulation, metric: PLMetric, k: f64) -> Result<Self, MeshError> {
        if !k.is_finite() {
            return Err(MeshError::NonFiniteK);
        }
        let metric = PLMetric::for_complex(&tri, metric.into_lengths())?;
        Ok(Self { name, tri, metric, k })
    }

    pub fn from_file(file: MeshFile) -> Result<Self, MeshError> {
        let tri = Triangulation::new(file.num_vertices, &file.tetrahedra)?;
        if file.edges.len() != tri.num_edges() {
            return Err(MeshError::EdgeCount {
                expected: tri.num_edges(),
                got: file.edges.len(),
            });
        }
        if let Some((index, (&got, &expected))) = file
            .edges
            .iter()
            .zip(tri.edges())
            .enumerate()
            .find(|(_, (a, b))| a != b)
        {
            return Err(MeshError::EdgeMismatch { index, expected, got });
        }
        let metric = PLMetric::for_complex(&tri, file.lengths)?;
        Self::new(file.name, tri, metric, file.k)
    }

    pub fn to_file(&self) -> MeshFile {
        MeshFile {
            name: self.name.clone(),
            num_vertices: self.tri.num_vertices(),
            tetrahedra: self.tri.tetrahedra().to_vec(),
            edges: self.tri.edges().to_vec(),
            lengths: self.metric.lengths().to_vec(),
            k: self.k,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        Self::from_file(serde_json::from_str(text)?)
    }

    /// Indented JSON with one tetrahedron, edge or length per line and a
    /// trailing newline. Floats use the shortest representation that reads
    /// back to the same `f64`.
    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, RowFormatter::default());
        self.to_file().serialize(&mut ser).expect("mesh serializes");
        buf.push(b'\n');
        String::from_utf8(buf).expect("serde_json writes UTF-8")
    }

    pub fn load(path: &Path) -> Result<Self, MeshError> {
        let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), MeshError> {
        fs::write(path, self.to_json()).map_err(|source| MeshError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Pretty-printer that writes arrays nested deeper than one level on a single line.
#[derive(Default)]
struct RowFormatter {
    depth: usize,
    has_value: bool,
}

impl RowFormatter {
    fn inline(&self) -> bool {
        self.depth > 2
    }

    fn newline_indent<W: ?Sized + Write>(&self, w: &mut W, depth: usize) -> io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..depth {
            w.write_all(b"  ")?;
        }
        Ok(())
    }

    fn open<W: ?Sized + Write>(&mut self, w: &mut W, bracket: &[u8]) -> io::Result<()> {
        self.depth += 1;
        self.has_value = false;
        w.write_all(bracket)
    }

    fn close<W: ?Sized + Write>(&mut self, w: &mut W, bracket: &[u8]) -> io::Result<()> {
        let inline = self.inline();
        self.depth -= 1;
        if self.has_value && !inline {
            self.newline_indent(w, self.depth)?;
        }
        self.has_value = true;
        w.write_all(bracket)
    }

    fn item<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(if self.inline() { b", " } else { b"," })?;
        }
        if !self.inline() {
            self.newline_indent(w, self.depth)?;
        }
        Ok(())
    }
}

impl Formatter for RowFormatter {
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.open(w, b"[")
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.close(w, b"]")
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.item(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.open(w, b"{")
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.close(w, b"}")
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.item(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::Builtin;

    fn mesh(b: Builtin, len: f64) -> Mesh {
        let tri = Triangulation::builtin(b);
        let l = PLMetric::uniform(tri.num_edges(), len).unwrap();
        Mesh::new(Some(b.name().into()), tri, l, 0.0).unwrap()
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        for b in Builtin::ALL {
            let m = mesh(b, 0.1 + 0.2);
            let a = m.to_json();
            let back = Mesh::from_json(&a).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_json(), a);
        }
    }

    #[test]
    fn layout() {
        let m = mesh(Builtin::SingleTet, 1.5);
        let want = "{\n  \"name\": \"single_tet\",\n  \"num_vertices\": 4,\n  \"tetrahedra\": [\n    [0, 1, 2, 3]\n  ],\n  \"edges\": [\n    [0, 1],\n    [0, 2],\n    [0, 3],\n    [1, 2],\n    [1, 3],\n    [2, 3]\n  ],\n  \"lengths\": [\n    1.5,\n    1.5,\n    1.5,\n    1.5,\n    1.5,\n    1.5\n  ],\n  \"K\": 0.0\n}\n";
        assert_eq!(m.to_json(), want);
    }

    #[test]
    fn defaults_and_validation() {
        let ok = r#"{"num_vertices":4,"tetrahedra":[[0,1,2,3]],
            "edges":[[0,1],[0,2],[0,3],[1,2],[1,3],[2,3]],"lengths":[1,1,1,1,1,1]}"#;
        let m = Mesh::from_json(ok).unwrap();
        assert_eq!(m.k, 0.0);
        assert_eq!(m.name, None);

        let swapped = ok.replace("[0,2],[0,3]", "[0,3],[0,2]");
        assert!(matches!(Mesh::from_json(&swapped), Err(MeshError::EdgeMismatch { index: 1, .. })));
        let short = ok.replace("[0,1],[0,2],", "[0,2],");
        assert!(matches!(Mesh::from_json(&short), Err(MeshError::EdgeCount { expected: 6, got: 5 })));
        let neg = ok.replace("[1,1,1,1,1,1]", "[1,1,-1,1,1,1]");
        assert!(matches!(Mesh::from_json(&neg), Err(MeshError::Lengths(_))));
        let few = ok.replace("[1,1,1,1,1,1]", "[1,1,1]");
        assert!(matches!(Mesh::from_json(&few), Err(MeshError::Lengths(_))));
        let extra = ok.replace("\"num_vertices\"", "\"colour\":1,\"num_vertices\"");
        assert!(matches!(Mesh::from_json(&extra), Err(MeshError::Json(_))));
        assert!(matches!(Mesh::from_json("{"), Err(MeshError::Json(_))));
        let bad_vertex = ok.replace("[[0,1,2,3]]", "[[0,1,2,9]]");
        assert!(matches!(Mesh::from_json(&bad_vertex), Err(MeshError::Complex(_))));
    }
}
