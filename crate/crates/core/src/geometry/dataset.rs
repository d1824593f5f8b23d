use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Point, PolytopeKind, TransformFamily};
use crate::error::{DgnError, Result};

pub const DATASET_SCHEMA: &str = "dgn.dataset/v1";

/// On-disk dataset: one JSON document holding every graph.
///
/// Floats are written in shortest round-trip decimal form, so a read of a
/// written file reproduces every coordinate bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub schema: String,
    pub meta: DatasetMeta,
    pub graphs: Vec<GraphRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// `None` for the untransformed canonical set.
    pub family: Option<TransformFamily>,
    pub mu: f64,
    pub seed: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub kind: PolytopeKind,
    pub label: usize,
    pub coords: Vec<Point>,
    pub edges: Vec<[usize; 2]>,
}

impl DatasetFile {
    pub fn new(meta: DatasetMeta, graphs: Vec<GraphRecord>) -> Self {
        DatasetFile {
            schema: DATASET_SCHEMA.to_string(),
            meta,
            graphs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != DATASET_SCHEMA {
            return Err(DgnError::Invalid(format!(
                "unsupported dataset schema '{}'",
                self.schema
            )));
        }
        if self.meta.count != self.graphs.len() {
            return Err(DgnError::Invalid(format!(
                "meta.count = {} but {} graphs present",
                self.meta.count,
                self.graphs.len()
            )));
        }
        for (g, rec) in self.graphs.iter().enumerate() {
            if rec.label != rec.kind.label() {
                return Err(DgnError::Invalid(format!(
                    "graph {g}: label {} does not match kind {:?}",
                    rec.label, rec.kind
                )));
            }
            for e in &rec.edges {
                for &v in e {
                    if v >= rec.coords.len() {
                        return Err(DgnError::Index {
                            what: "edge endpoint",
                            index: v,
                            len: rec.coords.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: DatasetFile = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn file_with(coords: Vec<Point>) -> DatasetFile {
        DatasetFile::new(
            DatasetMeta {
                family: Some(TransformFamily::Orthogonal),
                mu: 0.0,
                seed: 1,
                count: 1,
            },
            vec![GraphRecord {
                kind: PolytopeKind::Simplex,
                label: 0,
                edges: vec![[0, 1]],
                coords,
            }],
        )
    }

    #[test]
    fn rejects_mismatched_count_and_bad_edges() {
        let mut f = file_with(vec![[0.0; 3], [1.0; 3]]);
        f.meta.count = 2;
        assert!(f.validate().is_err());
        let mut f = file_with(vec![[0.0; 3]]);
        f.graphs[0].edges = vec![[0, 3]];
        assert!(f.validate().is_err());
    }

    #[test]
    fn field_names_match_format() {
        let json = file_with(vec![[0.5, 1.0, 2.0], [1.0; 3]]).to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["schema"], DATASET_SCHEMA);
        assert_eq!(v["meta"]["family"], "orthogonal");
        assert_eq!(v["graphs"][0]["kind"], "simplex");
        assert_eq!(v["graphs"][0]["coords"][0][2], 2.0);
    }

    proptest! {
        #[test]
        fn coordinates_round_trip_bit_exact(
            raw in proptest::collection::vec(proptest::array::uniform3(any::<f64>().prop_filter("finite", |x| x.is_finite())), 2..8)
        ) {
            let f = file_with(raw.clone());
            let back = DatasetFile::from_json(&f.to_json().unwrap()).unwrap();
            for (a, b) in raw.iter().zip(&back.graphs[0].coords) {
                for k in 0..3 {
                    prop_assert_eq!(a[k].to_bits(), b[k].to_bits());
                }
            }
        }
    }
}
