//! SGD training loop with momentum, weight decay, step decay, and optional
//! linear warm-up. Single-threaded over steps; everything downstream of the
//! `(seed, configs)` triple is deterministic, so a rerun reproduces the
//! history bit for bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{Split, SyntheticDataset};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::Tape;
use crate::tensor::Tensor4;
use crate::toynet::{argmax_classes, ToyNet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs of linear warm-up from `lr / warmup_epochs` to `lr`; 0 disables.
    pub warmup_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 10,
            batch_size: 16,
            seed: 1,
            warmup_epochs: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::InvalidConfig {
                field: "lr",
                message: alloc::string::String::from("must be finite and non-negative"),
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig {
                field: "momentum",
                message: alloc::string::String::from("must lie in [0, 1)"),
            });
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig {
                field: "weight_decay",
                message: alloc::string::String::from("must be finite and non-negative"),
            });
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig {
                field: "epochs",
                message: alloc::string::String::from("epochs and batch_size must be positive"),
            });
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::InvalidConfig {
                field: "warmup_epochs",
                message: alloc::string::String::from("cannot exceed epochs"),
            });
        }
        Ok(())
    }

    /// Learning rate for a zero-based epoch index: linear warm-up first, then
    /// a factor-10 decay at one third and at two thirds of the horizon.
    pub fn lr_at(&self, epoch: usize) -> f32 {
        let mut lr = self.lr;
        if self.warmup_epochs > 0 && epoch < self.warmup_epochs {
            lr *= (epoch + 1) as f32 / self.warmup_epochs as f32;
        }
        if epoch >= self.epochs / 3 {
            lr *= 0.1;
        }
        if epoch >= 2 * self.epochs / 3 {
            lr *= 0.1;
        }
        lr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f32,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// Per-epoch record of one training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn final_val_acc(&self) -> f64 {
        self.epochs.last().map(|e| e.val_acc).unwrap_or(0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.epochs.iter().all(|e| e.loss.is_finite())
    }
}

/// Runs cross-entropy training and returns the full history. Aborts with a
/// diagnostic naming the epoch and batch if the loss leaves the finite range.
pub fn train(net: &mut ToyNet, data: &SyntheticDataset, tc: &TrainConfig) -> Result<History> {
    tc.validate()?;
    if data.is_empty(Split::Train) {
        return Err(Error::EmptyInput("training split"));
    }
    if data.classes() != net.cfg.classes {
        return Err(Error::InvalidConfig {
            field: "classes",
            message: alloc::format!(
                "dataset has {} classes, model {}",
                data.classes(),
                net.cfg.classes
            ),
        });
    }

    let mut velocity: Vec<Vec<f32>> = net.params().iter().map(|p| vec![0.0; p.numel()]).collect();
    let mut order: Vec<usize> = (0..data.len(Split::Train)).collect();
    let mut shuffle_rng = Rng::derive(tc.seed, 1);
    let seed_one = Tensor4::from_dims(1, 1, 1, 1, vec![1.0])?;
    let mut history = History::default();

    for epoch in 0..tc.epochs {
        shuffle_rng.shuffle(&mut order);
        let lr = tc.lr_at(epoch);
        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        let mut correct = 0usize;

        for (batch_idx, chunk) in order.chunks(tc.batch_size).enumerate() {
            let (bx, by) = data.batch(Split::Train, chunk)?;
            let mut tape = Tape::new();
            let xid = tape.leaf(bx);
            let (pids, logits) = net.trace(&mut tape, xid)?;
            let loss_id = tape.softmax_cross_entropy(logits, &by)?;
            let loss = tape.value(loss_id).data()[0];
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            loss_sum += loss as f64 * chunk.len() as f64;
            seen += chunk.len();
            for (pred, truth) in argmax_classes(tape.value(logits)).iter().zip(&by) {
                if pred == truth {
                    correct += 1;
                }
            }

            let mut grads = tape.backward(loss_id, &seed_one)?;
            for (i, pid) in pids.iter().enumerate() {
                let grad = grads.take(*pid);
                let grad_data = grad.as_ref().map(Tensor4::data);
                let p = net.params_mut()[i].data_mut();
                let v = &mut velocity[i];
                for j in 0..p.len() {
                    let g = grad_data.map(|d| d[j]).unwrap_or(0.0) + tc.weight_decay * p[j];
                    v[j] = tc.momentum * v[j] + g;
                    p[j] -= lr * v[j];
                }
            }
        }

        let val_acc = evaluate(net, data, Split::Val)?;
        history.epochs.push(EpochStats {
            epoch,
            loss: (loss_sum / seen as f64) as f32,
            train_acc: correct as f64 / seen as f64,
            val_acc,
        });
    }
    Ok(history)
}

/// Top-1 accuracy over a split. Per-sample normalization keeps predictions
/// independent of batch composition, so the result does not depend on sample
/// order.
pub fn evaluate(net: &ToyNet, data: &SyntheticDataset, split: Split) -> Result<f64> {
    let n = data.len(split);
    if n == 0 {
        return Err(Error::EmptyInput("evaluation split"));
    }
    if data.classes() != net.cfg.classes {
        return Err(Error::InvalidConfig {
            field: "classes",
            message: alloc::format!(
                "dataset has {} classes, model {}",
                data.classes(),
                net.cfg.classes
            ),
        });
    }
    let indices: Vec<usize> = (0..n).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(32) {
        let (bx, by) = data.batch(split, chunk)?;
        let logits = net.forward_logits(&bx)?;
        for (pred, truth) in argmax_classes(&logits).iter().zip(&by) {
            if pred == truth {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetConfig;
    use crate::toynet::{ToyAttention, ToyNetConfig};

    fn tiny_net(attention: ToyAttention) -> ToyNetConfig {
        ToyNetConfig {
            stage_channels: vec![8, 16],
            blocks_per_stage: 1,
            classes: 4,
            input_channels: 1,
            input_size: 16,
            attention,
        }
    }

    fn tiny_data() -> SyntheticDataset {
        SyntheticDataset::generate(DatasetConfig {
            train_size: 16,
            val_size: 8,
            image_size: 16,
            ..DatasetConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut net = ToyNet::build(tiny_net(ToyAttention::None), &mut Rng::new(1)).unwrap();
        let before = net.params().to_vec();
        let data = tiny_data();
        let tc = TrainConfig {
            lr: 0.0,
            epochs: 2,
            batch_size: 8,
            ..TrainConfig::default()
        };
        train(&mut net, &data, &tc).unwrap();
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn seed_fixed_rerun_is_bit_identical() {
        let data = tiny_data();
        let tc = TrainConfig {
            epochs: 3,
            batch_size: 8,
            lr: 0.05,
            ..TrainConfig::default()
        };
        let run = || {
            let attn = ToyAttention::Sa(crate::attention::SaConfig::with_groups(2));
            let mut net = ToyNet::build(tiny_net(attn), &mut Rng::new(9)).unwrap();
            train(&mut net, &data, &tc).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_sample_memorization() {
        let data = SyntheticDataset::generate(DatasetConfig {
            train_size: 1,
            val_size: 1,
            image_size: 16,
            ..DatasetConfig::default()
        })
        .unwrap();
        let mut net = ToyNet::build(tiny_net(ToyAttention::None), &mut Rng::new(4)).unwrap();
        let tc = TrainConfig {
            epochs: 200,
            batch_size: 1,
            lr: 0.05,
            ..TrainConfig::default()
        };
        let history = train(&mut net, &data, &tc).unwrap();
        let final_loss = history.epochs.last().unwrap().loss;
        assert!(final_loss < 0.01, "final loss {final_loss}");
        assert_eq!(evaluate(&net, &data, Split::Train).unwrap(), 1.0);
    }

    #[test]
    fn sa_gate_parameters_move_after_one_step() {
        let data = tiny_data();
        let mut net = ToyNet::build(
            tiny_net(ToyAttention::Sa(crate::attention::SaConfig::with_groups(2))),
            &mut Rng::new(6),
        )
        .unwrap();
        let before = net.params().to_vec();
        let tc = TrainConfig {
            epochs: 1,
            batch_size: 16,
            lr: 0.1,
            ..TrainConfig::default()
        };
        train(&mut net, &data, &tc).unwrap();
        for gate in ["sa.w1", "sa.b1", "sa.w2", "sa.b2"] {
            let moved = net
                .param_names()
                .iter()
                .enumerate()
                .filter(|(_, n)| n.contains(gate))
                .any(|(i, _)| net.params()[i] != before[i]);
            assert!(moved, "no {gate} parameter changed");
        }
    }

    #[test]
    fn evaluate_is_order_invariant() {
        let data = tiny_data();
        let net = ToyNet::build(tiny_net(ToyAttention::None), &mut Rng::new(2)).unwrap();
        // Two different chunkings must agree because predictions are
        // per-sample; compare full-split evaluate against manual singles.
        let full = evaluate(&net, &data, Split::Val).unwrap();
        let mut correct = 0;
        for i in 0..data.len(Split::Val) {
            let (x, y) = data.batch(Split::Val, &[i]).unwrap();
            let logits = net.forward_logits(&x).unwrap();
            if argmax_classes(&logits)[0] == y[0] {
                correct += 1;
            }
        }
        assert_eq!(full, correct as f64 / data.len(Split::Val) as f64);
    }

    #[test]
    fn untrained_accuracy_sits_near_chance() {
        // Band pinned from measurement over these exact seeds: accuracies
        // cluster at 0.25 with occasional biased-constant collapses down to
        // ~0.09, so the per-seed band is [0.05, 0.55] with the mean required
        // near chance.
        let data = SyntheticDataset::generate(DatasetConfig::default()).unwrap();
        let mut sum = 0.0;
        for seed in 0..10 {
            let net = ToyNet::build(ToyNetConfig::default(), &mut Rng::new(seed)).unwrap();
            let acc = evaluate(&net, &data, Split::Val).unwrap();
            assert!((0.05..=0.55).contains(&acc), "seed {seed}: acc {acc}");
            sum += acc;
        }
        let mean = sum / 10.0;
        assert!((0.1..=0.45).contains(&mean), "mean {mean}");
    }

    #[test]
    fn perfect_memorizer_scores_one_on_train() {
        let data = SyntheticDataset::generate(DatasetConfig {
            train_size: 4,
            val_size: 4,
            image_size: 16,
            ..DatasetConfig::default()
        })
        .unwrap();
        let mut net = ToyNet::build(tiny_net(ToyAttention::None), &mut Rng::new(8)).unwrap();
        let tc = TrainConfig {
            epochs: 60,
            batch_size: 4,
            lr: 0.05,
            ..TrainConfig::default()
        };
        train(&mut net, &data, &tc).unwrap();
        assert_eq!(evaluate(&net, &data, Split::Train).unwrap(), 1.0);
    }

    #[test]
    fn rejects_class_mismatch() {
        let data = tiny_data();
        let mut cfg = tiny_net(ToyAttention::None);
        cfg.classes = 3;
        let net = ToyNet::build(cfg, &mut Rng::new(2)).unwrap();
        assert!(matches!(
            evaluate(&net, &data, Split::Val),
            Err(Error::InvalidConfig { field: "classes", .. })
        ));
    }
}
