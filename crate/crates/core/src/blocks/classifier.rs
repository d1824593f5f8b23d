use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::block::{BatchIndex, Block, BlockConfig, BlockKind, BlockState, BlockTrace, CoordinateMap, MLP_HIDDEN};
use super::mlp::{Mlp, ParamVars};
use super::scaling::scaling_layer;
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{DgnError, Result};
use crate::graph::{batch, GraphBatch, LabeledGraph, NodeFeaturisation, NUM_CLASSES};
use crate::rng::{substream, Stream};

pub const NUM_LAYERS: usize = 3;
pub const GRAPH_DIM: usize = 32;
/// Graphs per forward pass when scoring large datasets.
pub const EVAL_CHUNK: usize = 100;

/// Architecture family of a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Scaling layer followed by DGN blocks.
    Sdgn,
    Dgn,
    Gn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Sdgn => "sdgn",
            ModelKind::Dgn => "dgn",
            ModelKind::Gn => "gn",
        }
    }

    pub fn block_kind(self) -> BlockKind {
        match self {
            ModelKind::Gn => BlockKind::Gn,
            _ => BlockKind::Dgn,
        }
    }

    pub fn featurisation(self) -> NodeFeaturisation {
        match self {
            ModelKind::Gn => NodeFeaturisation::Coordinates,
            _ => NodeFeaturisation::Constant,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = DgnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdgn" => Ok(ModelKind::Sdgn),
            "dgn" => Ok(ModelKind::Dgn),
            "gn" => Ok(ModelKind::Gn),
            other => Err(DgnError::Invalid(format!("unknown block '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// `None` exactly when `kind` is [`ModelKind::Gn`].
    pub coordinate_map: Option<CoordinateMap>,
    /// Target maximum edge length of the scaling layer (SDGN only).
    pub alpha: f64,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, coordinate_map: Option<CoordinateMap>) -> Result<Self> {
        let c = ModelConfig {
            kind,
            coordinate_map,
            alpha: 1.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn gn() -> Self {
        ModelConfig {
            kind: ModelKind::Gn,
            coordinate_map: None,
            alpha: 1.0,
        }
    }

    pub fn dgn(map: CoordinateMap) -> Self {
        ModelConfig {
            kind: ModelKind::Dgn,
            coordinate_map: Some(map),
            alpha: 1.0,
        }
    }

    pub fn sdgn(map: CoordinateMap) -> Self {
        ModelConfig {
            kind: ModelKind::Sdgn,
            coordinate_map: Some(map),
            alpha: 1.0,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if (self.kind == ModelKind::Gn) != self.coordinate_map.is_none() {
            return Err(DgnError::Invalid(format!(
                "block {} cannot take coordinate map {:?}",
                self.kind, self.coordinate_map
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(DgnError::Invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn block_configs(&self) -> Vec<BlockConfig> {
        let map = self.coordinate_map.unwrap_or(CoordinateMap::Identity);
        (0..NUM_LAYERS)
            .map(|layer| {
                let first = layer == 0;
                BlockConfig {
                    kind: self.kind.block_kind(),
                    coordinate_map: map,
                    node_in: if first { self.kind.featurisation().dim() } else { GRAPH_DIM },
                    edge_in: if first { 0 } else { GRAPH_DIM },
                    global_in: if first { 0 } else { GRAPH_DIM },
                    node_out: GRAPH_DIM,
                    edge_out: GRAPH_DIM,
                    global_out: GRAPH_DIM,
                }
            })
            .collect()
    }
}

/// A batch ready for [`Classifier::forward`]: featurised, scaled when the
/// model has a scaling layer, with labels.
pub struct PreparedBatch {
    pub batch: GraphBatch,
    pub index: BatchIndex,
    pub labels: Arc<[usize]>,
}

/// Everything a forward pass produced, for loss computation and audits.
pub struct ForwardTrace {
    pub logits: Var,
    pub input: BlockState,
    pub states: Vec<BlockState>,
    pub traces: Vec<BlockTrace>,
}

/// Graph blocks → node MLP → per-graph sum pooling → head MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub blocks: Vec<Block>,
    pub node_mlp: Mlp,
    pub head: Mlp,
}

impl Classifier {
    /// Fresh model with Glorot-uniform weights drawn from the `init` stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(seed, Stream::Init, 0);
        let mut params = ParamStore::new();
        let blocks = config
            .block_configs()
            .into_iter()
            .enumerate()
            .map(|(l, cfg)| Block::new(&mut params, &format!("block{l}"), cfg, &mut rng))
            .collect();
        let node_mlp = Mlp::new(&mut params, "node_mlp", GRAPH_DIM, MLP_HIDDEN, GRAPH_DIM, &mut rng);
        let head = Mlp::new(&mut params, "head", GRAPH_DIM, MLP_HIDDEN, NUM_CLASSES, &mut rng);
        Ok(Classifier {
            config,
            params,
            blocks,
            node_mlp,
            head,
        })
    }

    pub fn prepare(&self, graphs: &[LabeledGraph]) -> Result<PreparedBatch> {
        let f = self.config.kind.featurisation();
        let embeddings: Vec<_> = graphs.iter().map(|g| g.featurise(f)).collect();
        let mut b = batch(&embeddings)?;
        if self.config.kind == ModelKind::Sdgn {
            b = scaling_layer(&b, self.config.alpha)?;
        }
        Ok(PreparedBatch {
            index: BatchIndex::new(&b),
            labels: graphs.iter().map(|g| g.label).collect(),
            batch: b,
        })
    }

    pub fn forward(&self, tape: &mut Tape, pv: &ParamVars, prepared: &PreparedBatch) -> Result<ForwardTrace> {
        let b = &prepared.batch;
        let idx = &prepared.index;
        let input = BlockState {
            v: tape.leaf(b.node_features.clone()),
            e: (b.edge_features.cols() > 0).then(|| tape.leaf(b.edge_features.clone())),
            x: tape.leaf(b.coords.clone()),
            u: (b.globals.cols() > 0).then(|| tape.leaf(b.globals.clone())),
        };
        let mut state = input;
        let mut states = Vec::with_capacity(self.blocks.len());
        let mut traces = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, trace) = block.forward(tape, pv, idx, &state)?;
            states.push(next);
            traces.push(trace);
            state = next;
        }
        let h = self.node_mlp.forward(tape, pv, state.v)?;
        let pooled = tape.segment_sum(h, idx.node_graph.clone(), idx.num_graphs)?;
        let logits = self.head.forward(tape, pv, pooled)?;
        Ok(ForwardTrace {
            logits,
            input,
            states,
            traces,
        })
    }

    /// Logits for `graphs`, `[G × 5]`, computed in chunks of [`EVAL_CHUNK`].
    pub fn logits(&self, graphs: &[LabeledGraph]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(graphs.len() * NUM_CLASSES);
        for chunk in graphs.chunks(EVAL_CHUNK) {
            let prepared = self.prepare(chunk)?;
            let mut tape = Tape::new();
            let pv = ParamVars::new(&mut tape, &self.params);
            let out = self.forward(&mut tape, &pv, &prepared)?;
            data.extend_from_slice(tape.value(out.logits).data());
        }
        Tensor::new(vec![graphs.len(), NUM_CLASSES], data)
    }
}
