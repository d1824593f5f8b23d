//! Graph network layers and the polytope classifier.
//!
//! [`Block`] implements both the standard graph network update and the
//! distance-preserving (DGN) update, whose only coordinate-derived inputs are
//! squared edge lengths. That restriction is what makes DGN outputs invariant
//! to any coordinate change that preserves those lengths, in particular every
//! rotation, reflection and translation. [`scaling_layer`] normalises each
//! graph to a fixed maximum edge length, extending the invariance to
//! dilations. [`Classifier`] stacks three blocks with an MLP readout.

mod block;
mod checkpoint;
mod classifier;
mod mlp;
mod scaling;

pub use block::{
    edge_sq_lengths, rdp_identity, rdp_weighted_displacement, squared_distance, BatchIndex, Block,
    BlockConfig, BlockKind, BlockState, BlockTrace, CoordinateMap, MLP_HIDDEN,
};
pub use checkpoint::{Checkpoint, ParamRecord, CHECKPOINT_SCHEMA};
pub use classifier::{
    Classifier, ForwardTrace, ModelConfig, ModelKind, PreparedBatch, EVAL_CHUNK, GRAPH_DIM, NUM_LAYERS,
};
pub use mlp::{Linear, Mlp, ParamVars};
pub use scaling::{scale_factors, scaling_layer};
