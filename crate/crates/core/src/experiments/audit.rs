use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::data::{build_train_set, class_stream_index};
use crate::autodiff::{Tape, Tensor};
use crate::blocks::{scale_factors, Classifier, ModelKind, ParamVars, PreparedBatch};
use crate::error::Result;
use crate::geometry::{apply_transform, sample_transform, TransformClass};
use crate::graph::{batch, LabeledGraph};
use crate::rng::{substream, Stream};

pub const AUDIT_SCHEMA: &str = "dgn.audit/v1";
pub const DEFAULT_AUDIT_TRANSFORMS: usize = 100;
pub const DEFAULT_AUDIT_TOL: f64 = 1e-8;

/// Worst-case deviations of a model's outputs under sampled transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub model: String,
    pub class: TransformClass,
    pub transforms: usize,
    pub tol: f64,
    /// Max |logit(T·x) − logit(x)|.
    pub logit_defect: f64,
    /// Max |x⁺(T·x) − T'(x⁺(x))| / max(1, |T'(x⁺(x))|) per component over
    /// every block, where `T'` is `T` as seen after the scaling layer
    /// (DGN-type models only).
    pub coord_defect: Option<f64>,
    /// Max |d⁺²(T·x) − c²·d⁺²(x)| / max(1, c²·d⁺²(x)) over every block's
    /// updated edge lengths, `c` being the similarity ratio of `T'`
    /// (DGN-type models only).
    pub distance_defect: Option<f64>,
    /// Max |d²(scaled T·x) − d²(scaled x)| at the scaling layer (SDGN only).
    pub scaling_defect: Option<f64>,
    pub pass: bool,
}

impl AuditReport {
    pub fn worst(&self) -> f64 {
        [Some(self.logit_defect), self.coord_defect, self.distance_defect, self.scaling_defect]
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }
}

struct Trace {
    logits: Tensor,
    coords: Vec<Tensor>,
    edge_sq_out: Vec<Tensor>,
    edge_sq_in: Tensor,
}

fn trace(model: &Classifier, prepared: &PreparedBatch) -> Result<Trace> {
    let mut tape = Tape::new();
    let pv = ParamVars::new(&mut tape, &model.params);
    let out = model.forward(&mut tape, &pv, prepared)?;
    let first_sq = out.traces.first().and_then(|t| t.edge_sq_in);
    Ok(Trace {
        logits: tape.value(out.logits).clone(),
        coords: out.states.iter().map(|s| tape.value(s.x).clone()).collect(),
        edge_sq_out: out
            .traces
            .iter()
            .filter_map(|t| t.edge_sq_out.map(|v| tape.value(v).clone()))
            .collect(),
        edge_sq_in: first_sq.map(|v| tape.value(v).clone()).unwrap_or_else(|| Tensor::zeros(&[0, 1])),
    })
}

/// Audits `model` on the five canonical polytopes under `n_transforms`
/// transforms drawn from `class` (transforms substream of `seed`).
pub fn audit_equivariance(
    model: &Classifier,
    class: &TransformClass,
    n_transforms: usize,
    tol: f64,
    seed: u64,
) -> Result<AuditReport> {
    let canon = build_train_set();
    let base = model.prepare(&canon)?;
    let reference = trace(model, &base)?;
    let kind = model.config.kind;
    let dgn_like = kind != ModelKind::Gn;
    let base_scale = match kind {
        ModelKind::Sdgn => scale_factors(&raw_batch(&canon)?, model.config.alpha)?,
        _ => vec![1.0; canon.len()],
    };

    let mut rng = substream(seed, Stream::Transforms, class_stream_index(class) ^ 0xa0d1_7000);
    let (mut logit, mut coord, mut dist, mut scaling) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..n_transforms {
        let t = sample_transform(class, &mut rng)?;
        let moved = canon
            .iter()
            .map(|g| LabeledGraph::from_parts(g.kind, &apply_transform(&t, &g.graph.coord_points()), &edges(g)))
            .collect::<Result<Vec<_>>>()?;
        let prepared = model.prepare(&moved)?;
        let got = trace(model, &prepared)?;
        logit = logit.max(got.logits.max_abs_diff(&reference.logits));
        if !dgn_like {
            continue;
        }
        let moved_scale = match kind {
            ModelKind::Sdgn => scale_factors(&raw_batch(&moved)?, model.config.alpha)?,
            _ => vec![1.0; moved.len()],
        };
        // After scaling, y ↦ c·A·y + s'·q with c = s'γ/s.
        let ratio: Vec<f64> = (0..canon.len())
            .map(|g| moved_scale[g] * t.gamma / base_scale[g])
            .collect();
        let node_graph = &base.batch.node_graph;
        for (want, have) in reference.coords.iter().zip(&got.coords) {
            for n in 0..want.rows() {
                let g = node_graph[n];
                let y = Vector3::new(want.get(n, 0), want.get(n, 1), want.get(n, 2));
                let expect = ratio[g] * (t.a * y) + moved_scale[g] * t.q;
                for k in 0..3 {
                    coord = coord.max(rel_defect(have.get(n, k), expect[k]));
                }
            }
        }
        let edge_graph = &base.batch.edge_graph;
        for (want, have) in reference.edge_sq_out.iter().zip(&got.edge_sq_out) {
            for e in 0..want.rows() {
                let c2 = ratio[edge_graph[e]].powi(2);
                dist = dist.max(rel_defect(have.get(e, 0), c2 * want.get(e, 0)));
            }
        }
        if kind == ModelKind::Sdgn {
            scaling = scaling.max(got.edge_sq_in.max_abs_diff(&reference.edge_sq_in));
        }
    }
    let coord_defect = dgn_like.then_some(coord);
    let distance_defect = dgn_like.then_some(dist);
    let scaling_defect = (kind == ModelKind::Sdgn).then_some(scaling);
    let mut report = AuditReport {
        model: super::spec::row_label(&model.config),
        class: *class,
        transforms: n_transforms,
        tol,
        logit_defect: logit,
        coord_defect,
        distance_defect,
        scaling_defect,
        pass: false,
    };
    report.pass = report.worst() <= tol;
    Ok(report)
}

/// Deviation relative to the expected value, absolute below magnitude 1.
/// Unscaled coordinate updates can grow coordinates by many orders of
/// magnitude, where only relative agreement is meaningful in floating point.
fn rel_defect(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

fn edges(g: &LabeledGraph) -> Vec<(usize, usize)> {
    g.graph.edges().iter().copied().filter(|&(j, i)| j < i).collect()
}

fn raw_batch(graphs: &[LabeledGraph]) -> Result<crate::graph::GraphBatch> {
    batch(&graphs.iter().map(|g| g.graph.clone()).collect::<Vec<_>>())
}
