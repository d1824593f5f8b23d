use serde::{Deserialize, Serialize};

use super::Point;

const PHI: f64 = 1.618_033_988_749_895;

/// The five regular 3D polytopes, in class-label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum PolytopeKind {
    Simplex,
    Cube,
    Octahedron,
    Dodecahedron,
    Icosahedron,
}

impl PolytopeKind {
    pub const ALL: [PolytopeKind; 5] = [
        PolytopeKind::Simplex,
        PolytopeKind::Cube,
        PolytopeKind::Octahedron,
        PolytopeKind::Dodecahedron,
        PolytopeKind::Icosahedron,
    ];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Option<Self> {
        Self::ALL.get(label).copied()
    }

    /// `(vertices, edges)`.
    pub fn counts(self) -> (usize, usize) {
        match self {
            PolytopeKind::Simplex => (4, 6),
            PolytopeKind::Cube => (8, 12),
            PolytopeKind::Octahedron => (6, 12),
            PolytopeKind::Dodecahedron => (20, 30),
            PolytopeKind::Icosahedron => (12, 30),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub kind: PolytopeKind,
    pub vertices: Vec<Point>,
    /// Undirected, each pair stored once with the smaller index first.
    pub edges: Vec<(usize, usize)>,
}

impl Polytope {
    pub fn edge_lengths(&self) -> Vec<f64> {
        self.edges
            .iter()
            .map(|&(a, b)| super::distance(&self.vertices[a], &self.vertices[b]))
            .collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }
}

/// Canonical, origin-centred coordinates for `kind`.
pub fn make_polytope(kind: PolytopeKind) -> Polytope {
    let vertices = match kind {
        PolytopeKind::Simplex => vec![
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ],
        PolytopeKind::Cube => sign_combinations([1.0, 1.0, 1.0]),
        PolytopeKind::Octahedron => {
            let mut v = Vec::new();
            for axis in 0..3 {
                for s in [1.0, -1.0] {
                    let mut p = [0.0; 3];
                    p[axis] = s;
                    v.push(p);
                }
            }
            v
        }
        PolytopeKind::Dodecahedron => {
            let mut v = sign_combinations([1.0, 1.0, 1.0]);
            v.extend(cyclic_sign_combinations([0.0, 1.0 / PHI, PHI]));
            v
        }
        PolytopeKind::Icosahedron => cyclic_sign_combinations([0.0, 1.0, PHI]),
    };
    let edges = shortest_pairs(&vertices);
    Polytope {
        kind,
        vertices,
        edges,
    }
}

fn sign_combinations(p: Point) -> Vec<Point> {
    let mut out = Vec::new();
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                let q = [p[0] * sx, p[1] * sy, p[2] * sz];
                if !out.contains(&q) {
                    out.push(q);
                }
            }
        }
    }
    out
}

/// All sign flips of the three cyclic rotations of `p`.
fn cyclic_sign_combinations(p: Point) -> Vec<Point> {
    let mut out = Vec::new();
    for shift in 0..3 {
        let q = [p[shift % 3], p[(shift + 1) % 3], p[(shift + 2) % 3]];
        for s in sign_combinations(q) {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}

/// For a regular polytope the edges are exactly the vertex pairs at minimum distance.
fn shortest_pairs(vertices: &[Point]) -> Vec<(usize, usize)> {
    let mut min = f64::INFINITY;
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            min = min.min(super::distance(&vertices[i], &vertices[j]));
        }
    }
    let mut edges = Vec::new();
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            if super::distance(&vertices[i], &vertices[j]) <= min * (1.0 + 1e-9) {
                edges.push((i, j));
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_regularity() {
        for kind in PolytopeKind::ALL {
            let p = make_polytope(kind);
            assert_eq!((p.vertices.len(), p.edges.len()), kind.counts(), "{kind:?}");
            let lengths = p.edge_lengths();
            let first = lengths[0];
            for l in &lengths {
                assert!((l - first).abs() <= 1e-12 * first, "{kind:?}: {l} vs {first}");
            }
            let centroid: Vec<f64> = (0..3)
                .map(|k| p.vertices.iter().map(|v| v[k]).sum::<f64>())
                .collect();
            assert!(centroid.iter().all(|c| c.abs() < 1e-12), "{kind:?} not centred");
        }
    }

    #[test]
    fn vertex_degrees() {
        let expected = [3, 3, 4, 3, 5];
        for (kind, deg) in PolytopeKind::ALL.into_iter().zip(expected) {
            let p = make_polytope(kind);
            for v in 0..p.vertices.len() {
                assert_eq!(p.degree(v), deg, "{kind:?} vertex {v}");
            }
        }
    }

    #[test]
    fn simplex_is_complete_graph() {
        let p = make_polytope(PolytopeKind::Simplex);
        assert_eq!(p.edges, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn labels_round_trip() {
        for (i, k) in PolytopeKind::ALL.into_iter().enumerate() {
            assert_eq!(k.label(), i);
            assert_eq!(PolytopeKind::from_label(i), Some(k));
        }
        assert_eq!(PolytopeKind::from_label(5), None);
    }
}
