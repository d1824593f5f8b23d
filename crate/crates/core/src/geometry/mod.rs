//! Regular polytopes as graphs and the coordinate transforms used to build
//! test and augmentation sets.

mod dataset;
mod polytope;
mod transform;

pub use dataset::{DatasetFile, DatasetMeta, GraphRecord, DATASET_SCHEMA};
pub use polytope::{make_polytope, Polytope, PolytopeKind};
pub use transform::{
    apply_transform, calibrate_epsilon, calibrated_epsilon, random_orthogonal, rotation_from_angles,
    sample_transform, AffineTransform, TransformClass, TransformFamily, CALIBRATION_DRAWS,
    MIN_ABS_GAMMA,
};

pub type Point = [f64; 3];

pub fn squared_distance(a: &Point, b: &Point) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    squared_distance(a, b).sqrt()
}
