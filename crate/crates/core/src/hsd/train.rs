//! Training loop: shuffled minibatches, per-batch random decoder blend,
//! seeded pixel noise, Adam updates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::PlayDataset;

use super::backward::backward;
use super::forward::{forward_noisy, Losses};
use super::model::HsdModel;
use super::optim::Adam;
use super::HsdError;

/// Loss record of one optimization step.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub losses: Losses,
}

/// Per-step training history.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
}

impl TrainLog {
    /// Mean total loss over the first `k` and last `k` steps — a coarse
    /// did-it-learn signal.
    pub fn head_tail_mean(&self, k: usize) -> Option<(f64, f64)> {
        if self.steps.is_empty() {
            return None;
        }
        let k = k.clamp(1, self.steps.len());
        let head: f64 = self.steps[..k].iter().map(|s| s.losses.total()).sum::<f64>() / k as f64;
        let tail: f64 = self.steps[self.steps.len() - k..]
            .iter()
            .map(|s| s.losses.total())
            .sum::<f64>()
            / k as f64;
        Some((head, tail))
    }
}

/// Trains the model on the dataset for `config().epochs` passes and
/// returns the updated model plus the per-step loss log.  Fully
/// deterministic for a given config seed.  A non-finite loss aborts with
/// [`HsdError::Diverged`].
pub fn train(model: HsdModel, ds: &PlayDataset) -> Result<(HsdModel, TrainLog), HsdError> {
    let mut model = model;
    let cfg = model.config().clone();
    if ds.is_empty() {
        return Err(HsdError::EmptyDataset);
    }
    if *ds.obs_shape() != cfg.obs_shape {
        return Err(HsdError::Shape(format!(
            "dataset observations are {}, the model expects {}",
            ds.obs_shape(),
            cfg.obs_shape
        )));
    }
    if ds.action_space() != cfg.action_space {
        return Err(HsdError::Shape("dataset action space does not match the model".into()));
    }

    // A separate stream from the init seed, so that re-initializing and
    // training never replay the same draws.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e_5f68_7364);
    let mut opt = Adam::new(&cfg);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let samples = ds.samples();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<crate::dataset::PlaySample> =
                chunk.iter().map(|&i| samples[i].clone()).collect();
            let alpha: f64 = rng.random();
            let trace = forward_noisy(&model, &batch, alpha, &mut rng, cfg.pixel_noise_std)?;
            if !trace.losses.is_finite() {
                return Err(HsdError::Diverged { step });
            }
            let grads = backward(&model, &trace, &batch)?;
            opt.step(&mut model.params, &grads);
            log.steps.push(StepRecord { step, epoch, losses: trace.losses });
            step += 1;
        }
    }
    Ok((model, log))
}
