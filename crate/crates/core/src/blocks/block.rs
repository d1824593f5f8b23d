use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Linear, Mlp, ParamVars};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{DgnError, Result};
use crate::graph::GraphBatch;

pub const MLP_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Standard graph network block; coordinates are neither read nor updated.
    Gn,
    /// Distance-preserving block; coordinates enter only through squared edge lengths.
    Dgn,
}

/// Coordinate update of a DGN block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateMap {
    /// `x_i⁺ = x_i`.
    Identity,
    /// `x_i⁺ = x_i + Σ_{j∈N(i)} a_ji (x_j − x_i)` with `a_ji = linear(e⁺_ji) / |N(i)|`.
    WeightedDisplacement,
}

impl CoordinateMap {
    pub fn as_str(self) -> &'static str {
        match self {
            CoordinateMap::Identity => "identity",
            CoordinateMap::WeightedDisplacement => "weighted_displacement",
        }
    }
}

impl fmt::Display for CoordinateMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoordinateMap {
    type Err = DgnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(CoordinateMap::Identity),
            "weighted_displacement" => Ok(CoordinateMap::WeightedDisplacement),
            other => Err(DgnError::Invalid(format!("unknown coordinate map '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub kind: BlockKind,
    /// Ignored for [`BlockKind::Gn`].
    pub coordinate_map: CoordinateMap,
    pub node_in: usize,
    pub edge_in: usize,
    pub global_in: usize,
    pub node_out: usize,
    pub edge_out: usize,
    pub global_out: usize,
}

impl BlockConfig {
    fn edge_input_dim(&self) -> usize {
        let coord_slot = usize::from(self.kind == BlockKind::Dgn);
        self.edge_in + 2 * self.node_in + self.global_in + coord_slot
    }

    fn node_input_dim(&self) -> usize {
        self.edge_out + self.node_in + self.global_in
    }

    fn global_input_dim(&self) -> usize {
        let coord_slot = usize::from(self.kind == BlockKind::Dgn);
        self.edge_out + self.node_out + self.global_in + coord_slot
    }
}

/// Values flowing between blocks. Zero-width edge/global slots are `None`.
#[derive(Debug, Clone, Copy)]
pub struct BlockState {
    pub v: Var,
    pub e: Option<Var>,
    pub x: Var,
    pub u: Option<Var>,
}

/// Auxiliary outputs kept for inspection and auditing.
#[derive(Debug, Clone, Copy)]
pub struct BlockTrace {
    /// `‖x_i − x_j‖²` per directed edge, before the update (DGN only).
    pub edge_sq_in: Option<Var>,
    /// `‖x_i⁺ − x_j⁺‖²` per directed edge, after the coordinate update (DGN only).
    pub edge_sq_out: Option<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub config: BlockConfig,
    pub phi_e: Mlp,
    pub phi_v: Mlp,
    pub phi_u: Mlp,
    /// Edge-embedding → displacement weight, for [`CoordinateMap::WeightedDisplacement`].
    pub displacement: Option<Linear>,
}

/// Static per-batch index data shared by every block of one forward pass.
pub struct BatchIndex {
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub node_graph: Arc<[usize]>,
    pub edge_graph: Arc<[usize]>,
    pub num_nodes: usize,
    pub num_graphs: usize,
    /// `1 / |N(i)|` for each edge's target (0 for isolated targets, which own no edges).
    pub inv_target_degree: Tensor,
}

impl BatchIndex {
    pub fn new(batch: &GraphBatch) -> Self {
        let inv: Vec<f64> = batch
            .dst
            .iter()
            .map(|&i| 1.0 / batch.in_degree[i] as f64)
            .collect();
        BatchIndex {
            src: batch.src.clone(),
            dst: batch.dst.clone(),
            node_graph: batch.node_graph.clone(),
            edge_graph: batch.edge_graph.clone(),
            num_nodes: batch.num_nodes(),
            num_graphs: batch.num_graphs,
            inv_target_degree: Tensor::new(vec![batch.num_edges(), 1], inv).expect("edge column"),
        }
    }
}

impl Block {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, config: BlockConfig, rng: &mut R) -> Self {
        let phi_e = Mlp::new(
            store,
            &format!("{name}.phi_e"),
            config.edge_input_dim(),
            MLP_HIDDEN,
            config.edge_out,
            rng,
        );
        let phi_v = Mlp::new(
            store,
            &format!("{name}.phi_v"),
            config.node_input_dim(),
            MLP_HIDDEN,
            config.node_out,
            rng,
        );
        let phi_u = Mlp::new(
            store,
            &format!("{name}.phi_u"),
            config.global_input_dim(),
            MLP_HIDDEN,
            config.global_out,
            rng,
        );
        let displacement = (config.kind == BlockKind::Dgn
            && config.coordinate_map == CoordinateMap::WeightedDisplacement)
            .then(|| Linear::new(store, &format!("{name}.displacement"), config.edge_out, 1, rng));
        Block {
            config,
            phi_e,
            phi_v,
            phi_u,
            displacement,
        }
    }

    fn check_dims(&self, tape: &Tape, s: &BlockState) -> Result<()> {
        let c = &self.config;
        let width = |v: Option<Var>| v.map_or(0, |v| tape.value(v).cols());
        let got = (tape.value(s.v).cols(), width(s.e), width(s.u));
        let want = (c.node_in, c.edge_in, c.global_in);
        if got != want {
            return Err(DgnError::Invalid(format!(
                "block expects (n_v, n_e, n_u) = {want:?}, got {got:?}"
            )));
        }
        Ok(())
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        idx: &BatchIndex,
        s: &BlockState,
    ) -> Result<(BlockState, BlockTrace)> {
        self.check_dims(tape, s)?;
        match self.config.kind {
            BlockKind::Gn => self.gn_forward(tape, pv, idx, s),
            BlockKind::Dgn => self.dgn_forward(tape, pv, idx, s),
        }
    }

    /// `e⁺ = φ^e(v_j, v_i, e_ji, u)`, `v⁺ = φ^v(v_i, Σ e⁺, u)`, `u⁺ = φ^u(Σ v⁺, Σ e⁺, u)`.
    fn gn_forward(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        idx: &BatchIndex,
        s: &BlockState,
    ) -> Result<(BlockState, BlockTrace)> {
        let v_src = tape.gather(s.v, idx.src.clone())?;
        let v_dst = tape.gather(s.v, idx.dst.clone())?;
        let u_edge = s.u.map(|u| tape.gather(u, idx.edge_graph.clone())).transpose()?;
        let mut parts = vec![v_src, v_dst];
        parts.extend(s.e);
        parts.extend(u_edge);
        let edge_in = tape.concat(&parts)?;
        let e_new = self.phi_e.forward(tape, pv, edge_in)?;

        let agg = tape.segment_sum(e_new, idx.dst.clone(), idx.num_nodes)?;
        let u_node = s.u.map(|u| tape.gather(u, idx.node_graph.clone())).transpose()?;
        let mut parts = vec![s.v, agg];
        parts.extend(u_node);
        let node_in = tape.concat(&parts)?;
        let v_new = self.phi_v.forward(tape, pv, node_in)?;

        let v_sum = tape.segment_sum(v_new, idx.node_graph.clone(), idx.num_graphs)?;
        let e_sum = tape.segment_sum(e_new, idx.edge_graph.clone(), idx.num_graphs)?;
        let mut parts = vec![v_sum, e_sum];
        parts.extend(s.u);
        let global_in = tape.concat(&parts)?;
        let u_new = self.phi_u.forward(tape, pv, global_in)?;

        Ok((
            BlockState {
                v: v_new,
                e: Some(e_new),
                x: s.x,
                u: Some(u_new),
            },
            BlockTrace {
                edge_sq_in: None,
                edge_sq_out: None,
            },
        ))
    }

    /// Distance-preserving update: the only coordinate-derived inputs are
    /// squared edge lengths before (edge update) and after (global update)
    /// the coordinate map.
    fn dgn_forward(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        idx: &BatchIndex,
        s: &BlockState,
    ) -> Result<(BlockState, BlockTrace)> {
        let d_in = edge_sq_lengths(tape, s.x, idx)?;
        let v_dst = tape.gather(s.v, idx.dst.clone())?;
        let v_src = tape.gather(s.v, idx.src.clone())?;
        let u_edge = s.u.map(|u| tape.gather(u, idx.edge_graph.clone())).transpose()?;
        let mut parts: Vec<Var> = s.e.into_iter().collect();
        parts.extend([v_dst, v_src, d_in]);
        parts.extend(u_edge);
        let edge_in = tape.concat(&parts)?;
        let e_new = self.phi_e.forward(tape, pv, edge_in)?;

        let agg = tape.segment_sum(e_new, idx.dst.clone(), idx.num_nodes)?;
        let u_node = s.u.map(|u| tape.gather(u, idx.node_graph.clone())).transpose()?;
        let mut parts = vec![agg, s.v];
        parts.extend(u_node);
        let node_in = tape.concat(&parts)?;
        let v_new = self.phi_v.forward(tape, pv, node_in)?;

        let x_new = match &self.displacement {
            None => rdp_identity(s.x),
            Some(lin) => rdp_weighted_displacement(tape, pv, idx, s.x, e_new, lin)?,
        };

        let d_out = edge_sq_lengths(tape, x_new, idx)?;
        let e_sum = tape.segment_sum(e_new, idx.edge_graph.clone(), idx.num_graphs)?;
        let v_sum = tape.segment_sum(v_new, idx.node_graph.clone(), idx.num_graphs)?;
        let d_sum = tape.segment_sum(d_out, idx.edge_graph.clone(), idx.num_graphs)?;
        let mut parts = vec![e_sum, v_sum, d_sum];
        parts.extend(s.u);
        let global_in = tape.concat(&parts)?;
        let u_new = self.phi_u.forward(tape, pv, global_in)?;

        Ok((
            BlockState {
                v: v_new,
                e: Some(e_new),
                x: x_new,
                u: Some(u_new),
            },
            BlockTrace {
                edge_sq_in: Some(d_in),
                edge_sq_out: Some(d_out),
            },
        ))
    }
}

/// `‖x_i − x_j‖²` for every directed edge `(j, i)`, as an `[M×1]` column.
pub fn edge_sq_lengths(tape: &mut Tape, x: Var, idx: &BatchIndex) -> Result<Var> {
    let xi = tape.gather(x, idx.dst.clone())?;
    let xj = tape.gather(x, idx.src.clone())?;
    let diff = tape.sub(xi, xj)?;
    tape.row_sq_norm(diff)
}

/// `x_i⁺ = x_i`.
pub fn rdp_identity(x: Var) -> Var {
    x
}

/// `x_i⁺ = x_i + Σ_{j∈N(i)} a_ji (x_j − x_i)` with `a_ji = linear(e⁺_ji) / |N(i)|`.
pub fn rdp_weighted_displacement(
    tape: &mut Tape,
    pv: &ParamVars,
    idx: &BatchIndex,
    x: Var,
    edge_embedding: Var,
    lin: &Linear,
) -> Result<Var> {
    let raw = lin.forward(tape, pv, edge_embedding)?;
    let inv_deg = tape.leaf(idx.inv_target_degree.clone());
    let a = tape.mul(raw, inv_deg)?;
    let xj = tape.gather(x, idx.src.clone())?;
    let xi = tape.gather(x, idx.dst.clone())?;
    let disp = tape.sub(xj, xi)?;
    let weighted = tape.mul_col(disp, a)?;
    let step = tape.segment_sum(weighted, idx.dst.clone(), idx.num_nodes)?;
    tape.add(x, step)
}

/// Squared distance between two points of equal dimension.
pub fn squared_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DgnError::shape("squared_distance", &[a.len()], &[b.len()]));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}
