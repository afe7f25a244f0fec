use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::ModelCheckpoint;
use super::model::{argmax_label, init_params, to_f32_grid, Architecture, Model, ModelConfig};
use super::NnError;
use crate::dataset::{augment, ChannelStack, QualityLabel, ROTATION_RANGE_DEG};

/// One five-channel (`rgb_ls_ts`) sample with its grade.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub stack: ChannelStack,
    pub label: QualityLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decayed: f64,
    /// First epoch (1-based) trained at `lr_decayed`.
    pub decay_epoch: usize,
    pub seed: u64,
    pub augment: bool,
    pub rotation_range: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            epochs: 20,
            batch_size: 8,
            lr: 0.01,
            lr_decayed: 0.001,
            decay_epoch: 11,
            seed: 0,
            augment: true,
            rotation_range: ROTATION_RANGE_DEG,
        }
    }
}

impl TrainConfig {
    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.lr_decayed
        } else {
            self.lr
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean cross-entropy over the epoch's training steps.
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the best validation accuracy
    /// (earliest on ties).
    pub best: ModelCheckpoint,
    pub curve: Vec<EpochRecord>,
}

pub fn accuracy(model: &Model, samples: &[TrainSample]) -> Result<f64, NnError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for chunk in samples.chunks(16) {
        let refs: Vec<&ChannelStack> = chunk.iter().map(|s| &s.stack).collect();
        let probs = model.forward(&model.batch_inputs(&refs)?)?.probs;
        hits += probs
            .iter()
            .zip(chunk)
            .filter(|(p, s)| argmax_label(p) == s.label)
            .count();
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// One SGD step: `θ ← θ − lr · mean gradient`, kept on the `f32` grid.
fn sgd_step(model: &mut Model, grads: &[Vec<f64>], lr: f64, batch: usize) {
    let scale = lr / batch as f64;
    for (p, g) in model.params_mut().into_iter().zip(grads) {
        p.iter_mut().zip(g).for_each(|(w, d)| *w -= scale * d);
        to_f32_grid(p);
    }
}

/// Minibatch SGD without momentum. When `val` is empty the unaugmented
/// training set is scored instead.
pub fn train(
    arch: Architecture,
    train_set: &[TrainSample],
    val: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NnError> {
    if train_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(NnError::ShapeMismatch("epochs and batch size must be positive".into()));
    }
    let mut model = init_params(arch, &cfg.model, cfg.seed);
    let seed_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5a1a_0000_0001);
    let rng_state = seed_rng.get_seed();
    let mut rng = seed_rng;
    let score_set = if val.is_empty() { train_set } else { val };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ModelCheckpoint)> = None;
    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_for_epoch(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let stacks: Vec<ChannelStack> = batch
                .iter()
                .map(|&i| {
                    let aug_seed = rng.next_u64();
                    if cfg.augment {
                        augment(&train_set[i].stack, aug_seed, cfg.rotation_range)
                    } else {
                        train_set[i].stack.clone()
                    }
                })
                .collect();
            let refs: Vec<&ChannelStack> = stacks.iter().collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set[i].label.index()).collect();
            let inputs = model.batch_inputs(&refs)?;
            let (loss, grads, _) = model.loss_and_gradients(&inputs, &labels)?;
            if !loss.is_finite() || grads.0.iter().flatten().any(|g| !g.is_finite()) {
                return Err(NnError::DivergedLoss { epoch });
            }
            loss_sum += loss;
            sgd_step(&mut model, &grads.0, lr, batch.len());
        }
        let val_accuracy = accuracy(&model, score_set)?;
        curve.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(a, _)| val_accuracy > *a) {
            best = Some((
                val_accuracy,
                ModelCheckpoint {
                    model: model.clone(),
                    epoch: epoch as u16,
                    rng_state,
                },
            ));
        }
    }
    Ok(TrainOutcome {
        best: best.expect("at least one epoch").1,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::StackOrder;

    const CLASS_RGB: [[f32; 3]; 3] = [[0.9, 0.1, 0.1], [0.1, 0.9, 0.1], [0.1, 0.1, 0.9]];

    /// Constant images coloured by class, with a little per-sample jitter.
    fn separable_fixture(n_per_class: usize, side: usize) -> Vec<TrainSample> {
        let plane = side * side;
        let mut out = Vec::new();
        for i in 0..n_per_class {
            for label in QualityLabel::ALL {
                let j = (i as f32 * 0.37).sin() * 0.05;
                let rgb = CLASS_RGB[label.index()];
                let mut data = Vec::with_capacity(5 * plane);
                for c in rgb {
                    data.extend(std::iter::repeat_n((c + j).clamp(0.0, 1.0), plane));
                }
                data.extend(std::iter::repeat_n(0.0, 2 * plane));
                out.push(TrainSample {
                    stack: ChannelStack::new(side, side, StackOrder::RgbLsTs, data).unwrap(),
                    label,
                });
            }
        }
        out
    }

    /// Per-sample steps: with the 0.001-std head init, 8-sample batches need
    /// more than five epochs on sixty images.
    fn toy_config() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 1,
            seed: 3,
            augment: false,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_fixture_is_learned() {
        let data = separable_fixture(20, 8);
        assert_eq!(data.len(), 60);
        for arch in [Architecture::Single, Architecture::Dual] {
            let out = train(arch, &data, &[], &toy_config()).unwrap();
            assert_eq!(out.curve.len(), 5);
            let l: Vec<f64> = out.curve.iter().map(|r| r.train_loss).collect();
            assert!(l[0] > l[1] && l[1] > l[2], "{arch:?} {l:?}");
            assert_eq!(accuracy(&out.best.model, &data).unwrap(), 1.0, "{arch:?} {:?}", out.curve);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let data = separable_fixture(4, 8);
        let cfg = TrainConfig {
            epochs: 2,
            augment: true,
            ..toy_config()
        };
        let a = train(Architecture::Dual, &data, &data[..3], &cfg).unwrap();
        let b = train(Architecture::Dual, &data, &data[..3], &cfg).unwrap();
        assert_eq!(a, b);
        let c = train(Architecture::Dual, &data, &data[..3], &TrainConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.best.model, c.best.model);
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_for_epoch(1), 0.01);
        assert_eq!(cfg.lr_for_epoch(10), 0.01);
        assert_eq!(cfg.lr_for_epoch(11), 0.001);
        assert_eq!(cfg.lr_for_epoch(20), 0.001);
        let data = separable_fixture(1, 8);
        let out = train(
            Architecture::Single,
            &data,
            &[],
            &TrainConfig {
                epochs: 11,
                ..toy_config()
            },
        )
        .unwrap();
        assert_eq!(out.curve[9].lr, 0.01);
        assert_eq!(out.curve[10].lr, 0.001);
    }

    #[test]
    fn epoch_eleven_step_uses_decayed_rate() {
        let data = separable_fixture(1, 8);
        let mut m = init_params(Architecture::Single, &ModelConfig { widths: vec![2] }, 1);
        let refs: Vec<&ChannelStack> = data.iter().map(|s| &s.stack).collect();
        let labels: Vec<usize> = data.iter().map(|s| s.label.index()).collect();
        let (_, g, _) = m.loss_and_gradients(&m.batch_inputs(&refs).unwrap(), &labels).unwrap();
        let before = m.head.b.clone();
        let lr = TrainConfig::default().lr_for_epoch(11);
        sgd_step(&mut m, &g.0, lr, 3);
        let last = g.0.last().unwrap();
        for k in 0..3 {
            let expect = ((before[k] - 0.001 * last[k] / 3.0) as f32) as f64;
            assert_eq!(m.head.b[k], expect);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            train(Architecture::Single, &[], &[], &TrainConfig::default()),
            Err(NnError::EmptyDataset)
        ));
        let data = separable_fixture(1, 8);
        let cfg = TrainConfig {
            lr: 1e308,
            epochs: 1,
            ..toy_config()
        };
        assert!(matches!(
            train(Architecture::Single, &data, &[], &cfg),
            Err(NnError::DivergedLoss { epoch: 1 }) | Err(NnError::NonFinite)
        ));
    }
}
