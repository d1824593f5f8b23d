//! Full-batch Adam training with softmax cross-entropy.

mod adam;
mod record;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use record::{EpochRecord, TrainRecord, RECORD_CSV_HEADER};

use crate::autodiff::{Tape, Tensor, Var};
use crate::blocks::{Classifier, ParamVars};
use crate::error::{DgnError, Result};
use crate::graph::LabeledGraph;

pub const DEFAULT_EPOCHS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Test sets are scored every `eval_every` epochs and always after the last one.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            adam: AdamConfig::default(),
            eval_every: 1,
        }
    }
}

/// Mean softmax cross-entropy of `[G × C]` logits.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    tape.cross_entropy(logits, Arc::from(labels))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = k;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &label)| argmax(logits.row(r)) == label)
        .count();
    hits as f64 / labels.len() as f64
}

pub fn evaluate(model: &Classifier, dataset: &[LabeledGraph]) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let logits = model.logits(dataset)?;
    let labels: Vec<usize> = dataset.iter().map(|g| g.label).collect();
    Ok(accuracy(&logits, &labels))
}

pub struct TrainOutcome {
    pub model: Classifier,
    pub record: TrainRecord,
}

/// One full-batch Adam step per epoch on `train_set`.
///
/// Row `k` of the record holds the loss and accuracies of the parameters
/// after `k` steps. Those parameters are exactly the ones the next step
/// differentiates, so each forward pass serves both purposes.
pub fn train(
    mut model: Classifier,
    train_set: &[LabeledGraph],
    test_sets: &[&[LabeledGraph]],
    config: &TrainConfig,
    seed: u64,
    config_id: &str,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(DgnError::Invalid("training set is empty".into()));
    }
    if config.eval_every == 0 {
        return Err(DgnError::Invalid("eval_every must be at least 1".into()));
    }
    let prepared = model.prepare(train_set)?;
    let mut adam = AdamState::new(config.adam, &model.params);
    let mut epochs = Vec::with_capacity(config.epochs);

    let forward = |model: &Classifier| -> Result<(Tape, Var, Tensor)> {
        let mut tape = Tape::new();
        let pv = ParamVars::new(&mut tape, &model.params);
        let out = model.forward(&mut tape, &pv, &prepared)?;
        let logits = tape.value(out.logits).clone();
        let loss = tape.cross_entropy(out.logits, prepared.labels.clone())?;
        Ok((tape, loss, logits))
    };

    let (mut tape, mut loss, _) = forward(&model)?;
    if !tape.value(loss).item().is_finite() {
        return Err(DgnError::NonFinite { epoch: 0 });
    }
    for epoch in 1..=config.epochs {
        let grads = tape.backward(loss)?;
        let param_grads = tape.param_grads(&grads, &model.params);
        adam.step(&mut model.params, &param_grads)?;

        let (next_tape, next_loss, logits) = forward(&model)?;
        let train_loss = next_tape.value(next_loss).item();
        if !train_loss.is_finite() {
            return Err(DgnError::NonFinite { epoch });
        }
        let train_acc = accuracy(&logits, &prepared.labels);
        let scored = epoch % config.eval_every == 0 || epoch == config.epochs;
        let test_acc = test_sets
            .iter()
            .map(|set| scored.then(|| evaluate(&model, set)).transpose())
            .collect::<Result<Vec<_>>>()?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            test_acc,
        });
        tape = next_tape;
        loss = next_loss;
    }
    Ok(TrainOutcome {
        model,
        record: TrainRecord {
            seed,
            config_id: config_id.to_string(),
            epochs,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{CoordinateMap, ModelConfig};
    use crate::geometry::PolytopeKind;

    fn train_set() -> Vec<LabeledGraph> {
        PolytopeKind::ALL.iter().map(|&k| LabeledGraph::canonical(k)).collect()
    }

    #[test]
    fn cross_entropy_examples() {
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor::zeros(&[1, 5]));
        let loss = cross_entropy(&mut tape, l, &[2]).unwrap();
        assert!((tape.value(loss).item() - 1.609_437_912_434_100_3).abs() < 1e-15);

        let mut hot = Tensor::zeros(&[1, 5]);
        hot.data_mut()[3] = 1e6;
        let l = tape.leaf(hot);
        let loss = cross_entropy(&mut tape, l, &[3]).unwrap();
        assert!(tape.value(loss).item() <= 1e-6);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..15).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let labels = [4, 0, 2];
        let logits = Tensor::new(vec![3, 5], data).unwrap();
        let value = |t: &Tensor| {
            let mut tape = Tape::new();
            let l = tape.leaf(t.clone());
            let loss = cross_entropy(&mut tape, l, &labels).unwrap();
            tape.value(loss).item()
        };
        let mut tape = Tape::new();
        let l = tape.leaf(logits.clone());
        let loss = cross_entropy(&mut tape, l, &labels).unwrap();
        let g = tape.backward(loss).unwrap();
        let g = g.get(l).unwrap();
        let h = 1e-5;
        for k in 0..15 {
            let (mut p, mut m) = (logits.clone(), logits.clone());
            p.data_mut()[k] += h;
            m.data_mut()[k] -= h;
            let numeric = (value(&p) - value(&m)) / (2.0 * h);
            let a = g.data()[k];
            assert!((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4) <= 1e-6);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
        assert_eq!(argmax(&[0.0; 5]), 0);
    }

    #[test]
    fn accuracy_of_oracle_and_constant_models() {
        let labels: Vec<usize> = (0..500).map(|k| k / 100).collect();
        let mut oracle = Tensor::zeros(&[500, 5]);
        for (r, &l) in labels.iter().enumerate() {
            oracle.data_mut()[r * 5 + l] = 1.0;
        }
        assert_eq!(accuracy(&oracle, &labels), 1.0);
        assert_eq!(accuracy(&Tensor::full(&[500, 5], 0.3), &labels), 0.2);
    }

    #[test]
    fn evaluate_is_pure() {
        let model = Classifier::new(ModelConfig::gn(), 1).unwrap();
        let data = train_set();
        let before = model.clone();
        assert_eq!(evaluate(&model, &data).unwrap(), evaluate(&model, &data).unwrap());
        assert_eq!(model, before);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let model = Classifier::new(ModelConfig::dgn(CoordinateMap::Identity), 2).unwrap();
        let data = train_set();
        let baseline = evaluate(&model, &data).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            adam: AdamConfig {
                lr: 0.0,
                ..AdamConfig::default()
            },
            eval_every: 1,
        };
        let out = train(model.clone(), &data, &[&data], &cfg, 2, "frozen").unwrap();
        assert_eq!(out.model.params, model.params);
        assert!(out.record.epochs.iter().all(|e| e.train_acc == baseline));
        assert!(out.record.epochs.iter().all(|e| e.test_acc == vec![Some(baseline)]));
    }

    #[test]
    fn zero_epochs_gives_header_only() {
        let model = Classifier::new(ModelConfig::gn(), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(model.clone(), &train_set(), &[], &cfg, 3, "none").unwrap();
        assert_eq!(out.model, model);
        assert_eq!(out.record.to_csv(0), format!("{RECORD_CSV_HEADER}\n"));
    }

    #[test]
    fn empty_train_set_rejected() {
        let model = Classifier::new(ModelConfig::gn(), 3).unwrap();
        assert!(train(model, &[], &[], &TrainConfig::default(), 0, "x").is_err());
    }

    #[test]
    fn eval_cadence_and_csv_round_trip() {
        let model = Classifier::new(ModelConfig::gn(), 4).unwrap();
        let data = train_set();
        let cfg = TrainConfig {
            epochs: 7,
            eval_every: 3,
            ..TrainConfig::default()
        };
        let out = train(model, &data, &[&data], &cfg, 4, "cadence").unwrap();
        let scored: Vec<usize> = out
            .record
            .epochs
            .iter()
            .filter(|e| e.test_acc[0].is_some())
            .map(|e| e.epoch)
            .collect();
        assert_eq!(scored, vec![3, 6, 7]);
        let csv = out.record.to_csv(0);
        assert_eq!(TrainRecord::parse_csv(&csv).unwrap(), out.record.epochs);
    }

    #[test]
    fn loss_trend_is_non_increasing_and_training_is_deterministic() {
        let data = train_set();
        let run = || {
            let model = Classifier::new(ModelConfig::sdgn(CoordinateMap::Identity), 11).unwrap();
            train(model, &data, &[], &TrainConfig::default(), 11, "trend").unwrap()
        };
        let a = run();
        let losses: Vec<f64> = a.record.epochs.iter().map(|e| e.train_loss).collect();
        assert_eq!(losses.len(), DEFAULT_EPOCHS);
        assert!(losses.iter().all(|l| l.is_finite()));
        for k in 0..losses.len() - 50 {
            assert!(losses[k + 50] <= losses[k], "epoch {}: {} > {}", k + 51, losses[k + 50], losses[k]);
        }
        assert_eq!(a.record.final_train_acc(), Some(1.0));
        let b = run();
        assert_eq!(a.record, b.record);
        assert_eq!(a.model.params, b.model.params);
    }
}
