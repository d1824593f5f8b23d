use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::training::EpochRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(xs: &[f64]) -> Option<Spread> {
        if xs.is_empty() {
            return None;
        }
        Some(Spread {
            mean: mean(xs),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Per-epoch mean and min–max band over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: Spread,
    pub train_acc: Spread,
    pub test_acc: Option<Spread>,
}

/// Statistics of one cell, computed only from its per-run records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub runs: usize,
    pub final_test_acc: Vec<f64>,
    pub test_mean: f64,
    pub test_std: f64,
    pub train_mean: f64,
    pub train_std: f64,
    pub curves: Vec<CurvePoint>,
}

/// Summarises single-test-set records (`test_acc[0]` is the scored set).
/// Runs are assumed to share an epoch count; curves stop at the shortest.
pub fn summarize(records: &[Vec<EpochRecord>]) -> ResultSummary {
    let final_of = |r: &Vec<EpochRecord>, f: fn(&EpochRecord) -> Option<f64>| r.last().and_then(f);
    let final_test: Vec<f64> = records
        .iter()
        .filter_map(|r| final_of(r, |e| e.test_acc.first().copied().flatten()))
        .collect();
    let final_train: Vec<f64> = records.iter().filter_map(|r| final_of(r, |e| Some(e.train_acc))).collect();
    let epochs = records.iter().map(Vec::len).min().unwrap_or(0);
    let curves = (0..epochs)
        .map(|k| {
            let col = |f: fn(&EpochRecord) -> Option<f64>| -> Vec<f64> {
                records.iter().filter_map(|r| f(&r[k])).collect()
            };
            let test = col(|e| e.test_acc.first().copied().flatten());
            CurvePoint {
                epoch: records[0][k].epoch,
                train_loss: Spread::of(&col(|e| Some(e.train_loss))).expect("non-empty"),
                train_acc: Spread::of(&col(|e| Some(e.train_acc))).expect("non-empty"),
                test_acc: (test.len() == records.len()).then(|| Spread::of(&test)).flatten(),
            }
        })
        .collect();
    ResultSummary {
        runs: records.len(),
        test_mean: mean(&final_test),
        test_std: std_dev(&final_test),
        train_mean: mean(&final_train),
        train_std: std_dev(&final_train),
        final_test_acc: final_test,
        curves,
    }
}

pub const CURVES_CSV_HEADER: &str = "epoch,train_loss_mean,train_loss_min,train_loss_max,\
train_acc_mean,train_acc_min,train_acc_max,test_acc_mean,test_acc_min,test_acc_max";

pub fn curves_csv(curves: &[CurvePoint]) -> String {
    let mut out = format!("{CURVES_CSV_HEADER}\n");
    for c in curves {
        let s = |s: &Spread| format!("{},{},{}", s.mean, s.min, s.max);
        let test = c.test_acc.as_ref().map(s).unwrap_or_else(|| ",,".into());
        let _ = writeln!(out, "{},{},{},{}", c.epoch, s(&c.train_loss), s(&c.train_acc), test);
    }
    out
}

/// Least-squares slope of `y` against `x`; zero when `x` has no spread.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx
}
