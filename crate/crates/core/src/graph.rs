//! Attributed graphs with coordinate embeddings, and disjoint-union batching.

use std::sync::Arc;

use crate::autodiff::Tensor;
use crate::error::{DgnError, Result};
use crate::geometry::{make_polytope, GraphRecord, Point, Polytope, PolytopeKind};

pub const NUM_CLASSES: usize = 5;

/// A graph with node features `v_i`, coordinates `x_i`, directed edge
/// features `e_ji` and one global vector `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEmbedding {
    num_nodes: usize,
    /// Directed `(source j, target i)` pairs.
    edges: Vec<(usize, usize)>,
    node_features: Tensor,
    edge_features: Tensor,
    coords: Tensor,
    global: Vec<f64>,
}

impl GraphEmbedding {
    pub fn new(
        edges: Vec<(usize, usize)>,
        node_features: Tensor,
        edge_features: Tensor,
        coords: Tensor,
        global: Vec<f64>,
    ) -> Result<Self> {
        let n = coords.rows();
        if coords.rank() != 2 || node_features.rank() != 2 || node_features.rows() != n {
            return Err(DgnError::shape(
                "graph nodes",
                node_features.shape(),
                coords.shape(),
            ));
        }
        if edge_features.rank() != 2 || edge_features.rows() != edges.len() {
            return Err(DgnError::shape(
                "graph edges",
                edge_features.shape(),
                &[edges.len()],
            ));
        }
        for &(j, i) in &edges {
            for v in [j, i] {
                if v >= n {
                    return Err(DgnError::Index {
                        what: "edge endpoint",
                        index: v,
                        len: n,
                    });
                }
            }
        }
        Ok(GraphEmbedding {
            num_nodes: n,
            edges,
            node_features,
            edge_features,
            coords,
            global,
        })
    }

    /// Materialises both directions of every undirected edge, with no edge
    /// features, no global and the given node features.
    pub fn from_undirected(coords: &[Point], undirected: &[(usize, usize)], node_features: Tensor) -> Result<Self> {
        let mut edges = Vec::with_capacity(2 * undirected.len());
        for &(a, b) in undirected {
            edges.push((a, b));
            edges.push((b, a));
        }
        let m = edges.len();
        let coords = Tensor::from_rows(coords, 3)?;
        Self::new(edges, node_features, Tensor::zeros(&[m, 0]), coords, Vec::new())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn edge_features(&self) -> &Tensor {
        &self.edge_features
    }

    pub fn coords(&self) -> &Tensor {
        &self.coords
    }

    pub fn global(&self) -> &[f64] {
        &self.global
    }

    pub fn coord_points(&self) -> Vec<Point> {
        (0..self.num_nodes)
            .map(|r| {
                let row = self.coords.row(r);
                [row[0], row[1], row[2]]
            })
            .collect()
    }

    /// Copy with coordinates replaced (same topology and features).
    pub fn with_coords(&self, coords: Tensor) -> Result<Self> {
        if coords.shape() != self.coords.shape() {
            return Err(DgnError::shape("with_coords", coords.shape(), self.coords.shape()));
        }
        let mut g = self.clone();
        g.coords = coords;
        Ok(g)
    }

    /// Copy with node features replaced.
    pub fn with_node_features(&self, v: Tensor) -> Result<Self> {
        if v.rank() != 2 || v.rows() != self.num_nodes {
            return Err(DgnError::shape("with_node_features", v.shape(), &[self.num_nodes]));
        }
        let mut g = self.clone();
        g.node_features = v;
        Ok(g)
    }

    /// Sources of the directed edges that target `i`.
    pub fn neighbors(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.num_nodes {
            return Err(DgnError::Index {
                what: "node",
                index: i,
                len: self.num_nodes,
            });
        }
        Ok(self
            .edges
            .iter()
            .filter(|&&(_, t)| t == i)
            .map(|&(s, _)| s)
            .collect())
    }

    /// Relabels node `k` as `perm[k]`, carrying coordinates, features and edges along.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(DgnError::Invalid("not a permutation of the node set".into()));
        }
        let permute_rows = |t: &Tensor| {
            let c = t.cols();
            let mut data = vec![0.0; t.len()];
            for (old, &new) in perm.iter().enumerate() {
                data[new * c..(new + 1) * c].copy_from_slice(t.row(old));
            }
            Tensor::new(t.shape().to_vec(), data).expect("same shape")
        };
        let edges = self.edges.iter().map(|&(j, i)| (perm[j], perm[i])).collect();
        Self::new(
            edges,
            permute_rows(&self.node_features),
            self.edge_features.clone(),
            permute_rows(&self.coords),
            self.global.clone(),
        )
    }
}

/// Which initial node features a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeFeaturisation {
    /// `v_i = [1]`: no coordinate or orientation information.
    Constant,
    /// `v_i = x_i`.
    Coordinates,
}

impl NodeFeaturisation {
    pub fn dim(self) -> usize {
        match self {
            NodeFeaturisation::Constant => 1,
            NodeFeaturisation::Coordinates => 3,
        }
    }

    pub fn features(self, coords: &[Point]) -> Tensor {
        match self {
            NodeFeaturisation::Constant => Tensor::ones(&[coords.len(), 1]),
            NodeFeaturisation::Coordinates => {
                Tensor::from_rows(coords, 3).expect("3D coordinates")
            }
        }
    }
}

/// A polytope graph with its class label. Coordinates live in the graph; node
/// features are attached per model via [`LabeledGraph::featurise`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    pub graph: GraphEmbedding,
    pub kind: PolytopeKind,
    pub label: usize,
}

impl LabeledGraph {
    pub fn from_polytope(p: &Polytope) -> Self {
        Self::from_parts(p.kind, &p.vertices, &p.edges).expect("canonical polytope is valid")
    }

    pub fn canonical(kind: PolytopeKind) -> Self {
        Self::from_polytope(&make_polytope(kind))
    }

    pub fn from_parts(kind: PolytopeKind, coords: &[Point], edges: &[(usize, usize)]) -> Result<Self> {
        let graph = GraphEmbedding::from_undirected(
            coords,
            edges,
            NodeFeaturisation::Constant.features(coords),
        )?;
        Ok(LabeledGraph {
            graph,
            kind,
            label: kind.label(),
        })
    }

    pub fn from_record(rec: &GraphRecord) -> Result<Self> {
        let edges: Vec<(usize, usize)> = rec.edges.iter().map(|e| (e[0], e[1])).collect();
        let g = Self::from_parts(rec.kind, &rec.coords, &edges)?;
        if rec.label != g.label || rec.label >= NUM_CLASSES {
            return Err(DgnError::Invalid(format!("bad label {}", rec.label)));
        }
        Ok(g)
    }

    pub fn to_record(&self) -> GraphRecord {
        let edges = self
            .graph
            .edges()
            .iter()
            .filter(|&&(j, i)| j < i)
            .map(|&(j, i)| [j, i])
            .collect();
        GraphRecord {
            kind: self.kind,
            label: self.label,
            coords: self.graph.coord_points(),
            edges,
        }
    }

    pub fn featurise(&self, f: NodeFeaturisation) -> GraphEmbedding {
        self.graph
            .with_node_features(f.features(&self.graph.coord_points()))
            .expect("node count preserved")
    }
}

/// Disjoint union of graphs with index-shifted edges.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub num_graphs: usize,
    pub node_features: Tensor,
    pub edge_features: Tensor,
    pub coords: Tensor,
    /// `num_graphs × n_u`.
    pub globals: Tensor,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub node_graph: Arc<[usize]>,
    pub edge_graph: Arc<[usize]>,
    /// `num_graphs + 1` prefix offsets.
    pub node_offsets: Vec<usize>,
    pub edge_offsets: Vec<usize>,
    /// Number of in-neighbours of each node.
    pub in_degree: Vec<usize>,
}

impl GraphBatch {
    pub fn num_nodes(&self) -> usize {
        self.coords.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn with_coords(&self, coords: Tensor) -> Result<Self> {
        if coords.shape() != self.coords.shape() {
            return Err(DgnError::shape("with_coords", coords.shape(), self.coords.shape()));
        }
        let mut b = self.clone();
        b.coords = coords;
        Ok(b)
    }

    /// Splits the batch back into its member graphs.
    pub fn unbatch(&self) -> Vec<GraphEmbedding> {
        (0..self.num_graphs)
            .map(|g| {
                let (n0, n1) = (self.node_offsets[g], self.node_offsets[g + 1]);
                let (e0, e1) = (self.edge_offsets[g], self.edge_offsets[g + 1]);
                let edges = (e0..e1).map(|e| (self.src[e] - n0, self.dst[e] - n0)).collect();
                GraphEmbedding::new(
                    edges,
                    slice_rows(&self.node_features, n0, n1),
                    slice_rows(&self.edge_features, e0, e1),
                    slice_rows(&self.coords, n0, n1),
                    self.globals.row(g).to_vec(),
                )
                .expect("batch members are valid graphs")
            })
            .collect()
    }
}

fn slice_rows(t: &Tensor, r0: usize, r1: usize) -> Tensor {
    let c = t.cols();
    Tensor::new(vec![r1 - r0, c], t.data()[r0 * c..r1 * c].to_vec()).expect("row slice")
}

pub fn batch(graphs: &[GraphEmbedding]) -> Result<GraphBatch> {
    let first = graphs
        .first()
        .ok_or_else(|| DgnError::Invalid("cannot batch zero graphs".into()))?;
    let (nv, ne, nx, nu) = (
        first.node_features.cols(),
        first.edge_features.cols(),
        first.coords.cols(),
        first.global.len(),
    );
    let total_nodes: usize = graphs.iter().map(|g| g.num_nodes).sum();
    let total_edges: usize = graphs.iter().map(|g| g.edges.len()).sum();

    let mut v = Vec::with_capacity(total_nodes * nv);
    let mut e = Vec::with_capacity(total_edges * ne);
    let mut x = Vec::with_capacity(total_nodes * nx);
    let mut u = Vec::with_capacity(graphs.len() * nu);
    let mut src = Vec::with_capacity(total_edges);
    let mut dst = Vec::with_capacity(total_edges);
    let mut node_graph = Vec::with_capacity(total_nodes);
    let mut edge_graph = Vec::with_capacity(total_edges);
    let mut node_offsets = vec![0];
    let mut edge_offsets = vec![0];
    let mut in_degree = vec![0; total_nodes];

    for (gi, g) in graphs.iter().enumerate() {
        let dims = (
            g.node_features.cols(),
            g.edge_features.cols(),
            g.coords.cols(),
            g.global.len(),
        );
        if dims != (nv, ne, nx, nu) {
            return Err(DgnError::Invalid(format!(
                "graph {gi} has feature dims {dims:?}, expected {:?}",
                (nv, ne, nx, nu)
            )));
        }
        let off = *node_offsets.last().unwrap();
        v.extend_from_slice(g.node_features.data());
        e.extend_from_slice(g.edge_features.data());
        x.extend_from_slice(g.coords.data());
        u.extend_from_slice(&g.global);
        for &(j, i) in &g.edges {
            src.push(j + off);
            dst.push(i + off);
            edge_graph.push(gi);
            in_degree[i + off] += 1;
        }
        node_graph.extend(std::iter::repeat_n(gi, g.num_nodes));
        node_offsets.push(off + g.num_nodes);
        edge_offsets.push(edge_offsets.last().unwrap() + g.edges.len());
    }

    Ok(GraphBatch {
        num_graphs: graphs.len(),
        node_features: Tensor::new(vec![total_nodes, nv], v)?,
        edge_features: Tensor::new(vec![total_edges, ne], e)?,
        coords: Tensor::new(vec![total_nodes, nx], x)?,
        globals: Tensor::new(vec![graphs.len(), nu], u)?,
        src: src.into(),
        dst: dst.into(),
        node_graph: node_graph.into(),
        edge_graph: edge_graph.into(),
        node_offsets,
        edge_offsets,
        in_degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical(kind: PolytopeKind) -> GraphEmbedding {
        LabeledGraph::canonical(kind).graph
    }

    #[test]
    fn neighbourhoods() {
        let cube = canonical(PolytopeKind::Cube);
        for i in 0..8 {
            assert_eq!(cube.neighbors(i).unwrap().len(), 3);
        }
        let ico = canonical(PolytopeKind::Icosahedron);
        for i in 0..12 {
            assert_eq!(ico.neighbors(i).unwrap().len(), 5);
        }
        let simplex = canonical(PolytopeKind::Simplex);
        for i in 0..4 {
            let mut n = simplex.neighbors(i).unwrap();
            n.sort();
            let expected: Vec<usize> = (0..4).filter(|&k| k != i).collect();
            assert_eq!(n, expected);
        }
        assert!(simplex.neighbors(4).is_err());
    }

    #[test]
    fn edges_are_symmetric() {
        for kind in PolytopeKind::ALL {
            let g = canonical(kind);
            assert_eq!(g.num_edges(), 2 * kind.counts().1);
            for &(j, i) in g.edges() {
                assert!(g.edges().contains(&(i, j)));
            }
        }
    }

    #[test]
    fn batch_offsets_and_unbatch() {
        let single = canonical(PolytopeKind::Octahedron);
        let b = batch(std::slice::from_ref(&single)).unwrap();
        assert_eq!(b.node_offsets, vec![0, 6]);
        assert_eq!(b.unbatch(), vec![single]);

        let all: Vec<GraphEmbedding> = PolytopeKind::ALL.iter().map(|&k| canonical(k)).collect();
        let b = batch(&all).unwrap();
        assert_eq!(b.num_nodes(), 50);
        assert_eq!(b.num_edges(), 180);
        assert_eq!(b.unbatch(), all);
        for e in 0..b.num_edges() {
            assert_eq!(b.node_graph[b.src[e]], b.edge_graph[e]);
            assert_eq!(b.node_graph[b.dst[e]], b.edge_graph[e]);
        }
    }

    #[test]
    fn batch_rejects_mismatched_dims() {
        let a = canonical(PolytopeKind::Cube);
        let pts = LabeledGraph::canonical(PolytopeKind::Simplex).graph.coord_points();
        let b = LabeledGraph::canonical(PolytopeKind::Simplex)
            .graph
            .with_node_features(NodeFeaturisation::Coordinates.features(&pts))
            .unwrap();
        assert!(batch(&[a, b]).is_err());
        assert!(batch(&[]).is_err());
    }

    #[test]
    fn record_round_trip() {
        for kind in PolytopeKind::ALL {
            let g = LabeledGraph::canonical(kind);
            let back = LabeledGraph::from_record(&g.to_record()).unwrap();
            assert_eq!(back, g);
        }
    }

    #[test]
    fn permutation_rejects_non_permutations() {
        let g = canonical(PolytopeKind::Simplex);
        assert!(g.permute_nodes(&[0, 0, 1, 2]).is_err());
        assert!(g.permute_nodes(&[0, 1, 2]).is_err());
        let p = g.permute_nodes(&[3, 2, 1, 0]).unwrap();
        assert_eq!(p.coords().row(3), g.coords().row(0));
    }
}
