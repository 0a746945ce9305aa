use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::conv::{backward, forward};
use super::params::{init_params, ArchSpec, NetworkParams, ParamGrads};
use crate::error::{Error, Result};
use crate::losses::{CompositeLoss, LossWeights};
use crate::speckle_sim::{PatchDataset, PatchPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds both the weight initialization and the per-epoch shuffles.
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Mean of each cost term over a set of patches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermLosses {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
    pub edge: f64,
}

impl TermLosses {
    fn accumulate(&mut self, total: f64, mse: f64, kl: f64, edge: f64) {
        self.total += total;
        self.mse += mse;
        self.kl += kl;
        self.edge += edge;
    }

    fn scaled(self, factor: f64) -> Self {
        Self {
            total: self.total * factor,
            mse: self.mse * factor,
            kl: self.kl * factor,
            edge: self.edge * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train: TermLosses,
    pub val: Option<TermLosses>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Validation losses of the freshly initialized network.
    pub initial_val: Option<TermLosses>,
    pub epochs: Vec<EpochRecord>,
}

/// Mean cost terms of the network over `pairs` (forward passes only).
pub fn evaluate_pairs(params: &NetworkParams, pairs: &[PatchPair], loss: &CompositeLoss) -> Result<TermLosses> {
    let mut acc = TermLosses::default();
    for pair in pairs {
        let (xhat, _) = forward(params, &pair.noisy)?;
        let v = loss.evaluate(&xhat, &pair.clean, &pair.noisy)?;
        acc.accumulate(v.total, v.mse_term, v.kl_term, v.edge_term);
    }
    Ok(acc.scaled(1.0 / pairs.len().max(1) as f64))
}

pub fn train(
    dataset: &PatchDataset,
    arch: &ArchSpec,
    weights: &LossWeights,
    schedule: &Schedule,
) -> Result<(NetworkParams, TrainLog)> {
    train_with(dataset, arch, weights, schedule, |_| {})
}

/// Minibatch Adam on the composite cost; `on_epoch` sees each log record
/// as soon as the epoch finishes.
pub fn train_with(
    dataset: &PatchDataset,
    arch: &ArchSpec,
    weights: &LossWeights,
    schedule: &Schedule,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(NetworkParams, TrainLog)> {
    if dataset.train.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    schedule.validate()?;
    let loss = CompositeLoss::new(dataset.looks, *weights)?;
    let mut params = init_params(arch, schedule.seed)?;
    let mut adam = AdamState::new(&params, schedule.adam());

    let mut log = TrainLog {
        initial_val: if dataset.val.is_empty() {
            None
        } else {
            Some(evaluate_pairs(&params, &dataset.val, &loss)?)
        },
        epochs: Vec::with_capacity(schedule.epochs),
    };

    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut global_step = 0usize;
    for epoch in 1..=schedule.epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut running = TermLosses::default();
        let mut steps = 0;
        for batch in order.chunks(schedule.batch_size) {
            let mut grads = ParamGrads::zeros_like(&params);
            for &i in batch {
                let pair = &dataset.train[i];
                let (xhat, cache) = forward(&params, &pair.noisy)?;
                let v = loss.evaluate(&xhat, &pair.clean, &pair.noisy)?;
                if !v.total.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        step: global_step,
                        detail: format!("loss is {} on training patch {i}", v.total),
                    });
                }
                running.accumulate(v.total, v.mse_term, v.kl_term, v.edge_term);
                grads.add_assign(&backward(&params, &cache, &v.grad)?);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &grads, &mut adam).map_err(|e| Error::Diverged {
                epoch,
                step: global_step,
                detail: e.to_string(),
            })?;
            global_step += 1;
            steps += 1;
        }

        let val = if dataset.val.is_empty() {
            None
        } else {
            Some(evaluate_pairs(&params, &dataset.val, &loss)?)
        };
        if let Some(v) = val.filter(|v| !v.total.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                step: global_step,
                detail: format!("validation loss is {}", v.total),
            });
        }
        let record = EpochRecord {
            epoch,
            steps,
            train: running.scaled(1.0 / dataset.train.len() as f64),
            val,
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.epochs.push(record);
    }
    params.round_to_f32();
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageGray;
    use crate::speckle_sim::{build_dataset, NamedImage, SpeckleConfig};

    fn toy_dataset(train: usize, val: usize) -> PatchDataset {
        let sources: Vec<_> = (0..4)
            .map(|i| {
                NamedImage::new(
                    format!("s{i}"),
                    ImageGray::from_fn(24, 24, |r, c| if (r / 6 + c / 6 + i) % 2 == 0 { 0.8 } else { 0.2 }),
                )
            })
            .collect();
        build_dataset(&sources, 8, train, val, &SpeckleConfig::single_look(9)).unwrap()
    }

    fn tiny_arch() -> ArchSpec {
        ArchSpec {
            depth: 2,
            hidden_channels: 3,
            kernel: 3,
            io_channels: 1,
        }
    }

    #[test]
    fn one_pair_one_epoch_one_step() {
        let ds = toy_dataset(1, 0);
        let schedule = Schedule {
            epochs: 1,
            batch_size: 4,
            ..Schedule::default()
        };
        let (_, log) = train(&ds, &tiny_arch(), &LossWeights::default(), &schedule).unwrap();
        assert_eq!(log.epochs.len(), 1);
        assert_eq!(log.epochs[0].steps, 1);
        assert!(log.initial_val.is_none());
    }

    #[test]
    fn step_count_is_ceiling_of_batches() {
        let ds = toy_dataset(10, 2);
        let schedule = Schedule {
            epochs: 2,
            batch_size: 4,
            ..Schedule::default()
        };
        let (_, log) = train(&ds, &tiny_arch(), &LossWeights::default(), &schedule).unwrap();
        assert!(log.epochs.iter().all(|e| e.steps == 3));
        assert!(log.epochs.iter().all(|e| e.val.is_some()));
    }

    #[test]
    fn training_is_deterministic_and_edge_term_matters() {
        let ds = toy_dataset(12, 4);
        let schedule = Schedule {
            epochs: 2,
            batch_size: 3,
            seed: 5,
            ..Schedule::default()
        };
        let w = LossWeights::default();
        let (a, log_a) = train(&ds, &tiny_arch(), &w, &schedule).unwrap();
        let (b, log_b) = train(&ds, &tiny_arch(), &w, &schedule).unwrap();
        assert!(a.values().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(log_a.epochs[1].train, log_b.epochs[1].train);

        let (c, _) = train(&ds, &tiny_arch(), &w.without_edge(), &schedule).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let ds = toy_dataset(0, 3);
        assert!(train(&ds, &tiny_arch(), &LossWeights::default(), &Schedule::default()).is_err());
    }
}
