use crate::autodiff::Tensor;
use crate::error::{DgnError, Result};
use crate::graph::GraphBatch;

/// Per-graph factor `γ = α / max_{(i,j)∈E} ‖x_i − x_j‖`.
pub fn scale_factors(batch: &GraphBatch, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(DgnError::Invalid(format!("alpha must be positive, got {alpha}")));
    }
    let x = &batch.coords;
    (0..batch.num_graphs)
        .map(|g| {
            let (e0, e1) = (batch.edge_offsets[g], batch.edge_offsets[g + 1]);
            if e0 == e1 {
                return Err(DgnError::Degenerate {
                    graph: g,
                    reason: "no edges to measure".into(),
                });
            }
            let max_len = (e0..e1)
                .map(|e| {
                    let (a, b) = (x.row(batch.src[e]), x.row(batch.dst[e]));
                    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
                })
                .fold(0.0, f64::max)
                .sqrt();
            if !(max_len > 0.0 && max_len.is_finite()) {
                return Err(DgnError::Degenerate {
                    graph: g,
                    reason: format!("maximum edge length is {max_len}"),
                });
            }
            Ok(alpha / max_len)
        })
        .collect()
}

/// Multiplies every coordinate of each graph by that graph's [`scale_factors`] entry.
pub fn scaling_layer(batch: &GraphBatch, alpha: f64) -> Result<GraphBatch> {
    let gammas = scale_factors(batch, alpha)?;
    let cols = batch.coords.cols();
    let mut data = batch.coords.data().to_vec();
    for (n, row) in data.chunks_mut(cols.max(1)).enumerate().take(batch.num_nodes()) {
        let gamma = gammas[batch.node_graph[n]];
        for v in row {
            *v *= gamma;
        }
    }
    batch.with_coords(Tensor::new(batch.coords.shape().to_vec(), data)?)
}
