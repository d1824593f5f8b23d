use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Metrics after one optimiser step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// One entry per test set; `None` on epochs without evaluation.
    pub test_acc: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub seed: u64,
    pub config_id: String,
    pub epochs: Vec<EpochRecord>,
}

pub const RECORD_CSV_HEADER: &str = "epoch,train_loss,train_acc,test_acc";

impl TrainRecord {
    pub fn final_train_acc(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_acc)
    }

    pub fn final_test_acc(&self, test_set: usize) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_acc.get(test_set).copied().flatten())
    }

    /// `epoch,train_loss,train_acc,test_acc` rows for one test set. Floats use
    /// shortest round-trip formatting; unevaluated test accuracies are empty.
    pub fn to_csv(&self, test_set: usize) -> String {
        let mut out = String::from(RECORD_CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let test = e
                .test_acc
                .get(test_set)
                .copied()
                .flatten()
                .map(|a| a.to_string())
                .unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, e.train_acc, test);
        }
        out
    }

    /// Inverse of [`TrainRecord::to_csv`] for a single test set.
    pub fn parse_csv(s: &str) -> Option<Vec<EpochRecord>> {
        let mut lines = s.lines();
        if lines.next()? != RECORD_CSV_HEADER {
            return None;
        }
        lines
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 4 {
                    return None;
                }
                Some(EpochRecord {
                    epoch: f[0].parse().ok()?,
                    train_loss: f[1].parse().ok()?,
                    train_acc: f[2].parse().ok()?,
                    test_acc: vec![if f[3].is_empty() { None } else { Some(f[3].parse().ok()?) }],
                })
            })
            .collect()
    }
}
