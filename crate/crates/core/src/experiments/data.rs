use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::geometry::{
    apply_transform, make_polytope, sample_transform, DatasetFile, DatasetMeta, PolytopeKind, TransformClass,
};
use crate::graph::{LabeledGraph, NUM_CLASSES};
use crate::rng::{substream, Rng, Stream};

pub const TEST_PER_CLASS: usize = 100;

/// One canonical graph per polytope, labels 0–4 in order.
pub fn build_train_set() -> Vec<LabeledGraph> {
    PolytopeKind::ALL.iter().map(|&k| LabeledGraph::canonical(k)).collect()
}

/// Substream index for a transform class, so every class draws from its own
/// stream. Derived from the class tag, hence stable across releases.
pub fn class_stream_index(class: &TransformClass) -> u32 {
    let digest = Sha256::digest(class.tag().as_bytes());
    u32::from_le_bytes([digest[0], digest[1], digest[2], digest[3]])
}

/// `count` independently transformed canonical polytopes; graph `k` is of
/// class `k mod 5`, so multiples of five are exactly balanced.
pub fn transformed_set(class: &TransformClass, count: usize, rng: &mut Rng) -> Result<Vec<LabeledGraph>> {
    let polytopes: Vec<_> = PolytopeKind::ALL.iter().map(|&k| make_polytope(k)).collect();
    (0..count)
        .map(|k| {
            let p = &polytopes[k % NUM_CLASSES];
            let t = sample_transform(class, rng)?;
            LabeledGraph::from_parts(p.kind, &apply_transform(&t, &p.vertices), &p.edges)
        })
        .collect()
}

/// The shared 500-graph test set of a class: 100 transforms per polytope
/// drawn from the class's `transforms` substream of `seed`.
pub fn build_test_set(class: &TransformClass, seed: u64) -> Result<Vec<LabeledGraph>> {
    build_test_set_sized(class, seed, TEST_PER_CLASS * NUM_CLASSES)
}

pub fn build_test_set_sized(class: &TransformClass, seed: u64, count: usize) -> Result<Vec<LabeledGraph>> {
    let mut rng = substream(seed, Stream::Transforms, class_stream_index(class));
    transformed_set(class, count, &mut rng)
}

/// Canonical graphs followed by `copies` transformed versions of each
/// polytope, drawn from the `augmentation` substream of the run seed.
pub fn build_augmented_train_set(class: &TransformClass, copies: usize, seed: u64) -> Result<Vec<LabeledGraph>> {
    let mut set = build_train_set();
    if copies > 0 {
        let mut rng = substream(seed, Stream::Augmentation, class_stream_index(class));
        set.extend(transformed_set(class, copies * NUM_CLASSES, &mut rng)?);
    }
    Ok(set)
}

pub fn to_dataset_file(graphs: &[LabeledGraph], class: Option<&TransformClass>, seed: u64) -> DatasetFile {
    DatasetFile::new(
        DatasetMeta {
            family: class.map(|c| c.family),
            mu: class.map_or(0.0, |c| c.mu),
            seed,
            count: graphs.len(),
        },
        graphs.iter().map(LabeledGraph::to_record).collect(),
    )
}

pub fn from_dataset_file(file: &DatasetFile) -> Result<Vec<LabeledGraph>> {
    file.validate()?;
    file.graphs.iter().map(LabeledGraph::from_record).collect()
}
