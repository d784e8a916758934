//! Mini-batch training and evaluation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample};
use super::features::{build_input_tensor, build_pilot_feature, FeatureTensor, PilotMode, Standardization};
use super::loss::{evaluate_batch, LossContext};
use super::network::{HeadOutput, HeadScales, NetworkConfig, NetworkParameters, DEFAULT_HIDDEN};
use super::optim::{clip_global_norm, AdamW};
use crate::rng::stream;
use crate::signal::{ArrayGeometry, ObservationBatch, PilotSchedule};
use crate::{Error, Result};

/// Forward passes during inference are chunked to bound tape memory.
const INFERENCE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: PilotMode,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm cap; `0` disables clipping.
    pub grad_clip_norm: f64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: PilotMode::Dml,
            learning_rate: 3e-4,
            weight_decay: 1e-4,
            batch_size: 256,
            epochs: 100,
            seed: 0,
            grad_clip_norm: 10.0,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    /// Mini-batches of 2048.
    pub fn full_scale() -> Self {
        Self { batch_size: 2048, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Domain("batch size and hidden width must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) || !(self.grad_clip_norm >= 0.0) {
            return Err(Error::Domain(format!("learning rate, decay and clip must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Sample-weighted mean of the unscaled loss over the epoch's batches.
    pub mean_loss: f64,
    /// Mean global gradient norm before clipping.
    pub mean_grad_norm: f64,
}

/// A network together with everything needed to feed it and read it out.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub geometry: ArrayGeometry,
    pub params: NetworkParameters,
    pub standardization: Standardization,
    pub scales: HeadScales,
    pub train_config: TrainConfig,
}

impl TrainedModel {
    /// Freshly initialised weights for the schedule shape of `train_set`.
    pub fn initialise(geometry: &ArrayGeometry, train_set: &[Sample], config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let first = train_set.first().ok_or_else(|| Error::Domain("training set is empty".into()))?;
        let (l, q) = (first.schedule.num_slots(), first.schedule.num_blocks());
        if train_set.iter().any(|s| s.schedule.num_slots() != l || s.schedule.num_blocks() != q) {
            return Err(Error::Dimension("training samples have mixed schedule shapes".into()));
        }
        let net = NetworkConfig { hidden: config.hidden, ..NetworkConfig::new(geometry.num_antennas(), l, q) };
        let params = NetworkParameters::init(net, &mut stream(config.seed, &[10]))?;
        let standardization = Standardization::fit(train_set.iter().map(|s| (&s.schedule, &s.batch)))?;
        Ok(Self {
            geometry: *geometry,
            params,
            standardization,
            scales: HeadScales::physical(geometry.carrier_freq())?,
            train_config: *config,
        })
    }

    pub fn mode(&self) -> PilotMode {
        self.train_config.mode
    }

    pub fn loss_context(&self) -> LossContext<'_> {
        let objective_scale = match self.mode() {
            PilotMode::Dml => self.standardization.y_scale.powi(2),
            PilotMode::Sml => 1.0,
        };
        LossContext { geometry: &self.geometry, mode: self.mode(), scales: self.scales, objective_scale }
    }

    /// Standardised network input for one observation.
    pub fn input_tensor(&self, schedule: &PilotSchedule, batch: &ObservationBatch) -> Result<FeatureTensor> {
        let raw = build_input_tensor(&build_pilot_feature(schedule, self.mode()), batch)?;
        Ok(self.standardization.apply(&raw))
    }

    pub fn predict(&self, schedule: &PilotSchedule, batch: &ObservationBatch) -> Result<HeadOutput> {
        self.params.forward(&self.input_tensor(schedule, batch)?, &self.scales)
    }

    pub fn predict_many(&self, samples: &[Sample]) -> Result<Vec<HeadOutput>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(INFERENCE_CHUNK) {
            let inputs =
                chunk.iter().map(|s| self.input_tensor(&s.schedule, &s.batch)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&FeatureTensor> = inputs.iter().collect();
            let refs_s: Vec<&Sample> = chunk.iter().collect();
            out.extend(evaluate_batch(&self.params, &self.loss_context(), &refs_s, &refs, false)?.outputs);
        }
        Ok(out)
    }

    /// Per-sample unscaled training loss of the current weights.
    pub fn sample_losses(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(INFERENCE_CHUNK) {
            let inputs =
                chunk.iter().map(|s| self.input_tensor(&s.schedule, &s.batch)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&FeatureTensor> = inputs.iter().collect();
            let refs_s: Vec<&Sample> = chunk.iter().collect();
            out.extend(evaluate_batch(&self.params, &self.loss_context(), &refs_s, &refs, false)?.per_sample);
        }
        Ok(out)
    }
}

/// Runs `config.epochs` epochs of shuffled mini-batch AdamW on `model`.
/// Aborts on the first non-finite loss or weight.
pub fn fit(model: &mut TrainedModel, train_set: &[Sample], config: &TrainConfig) -> Result<Vec<EpochStats>> {
    fit_with(model, train_set, config, |_, _| Ok(()))
}

/// [`fit`] with a hook called after every epoch.
pub fn fit_with<F>(model: &mut TrainedModel, train_set: &[Sample], config: &TrainConfig, mut on_epoch: F) -> Result<Vec<EpochStats>>
where
    F: FnMut(&TrainedModel, &EpochStats) -> Result<()>,
{
    config.validate()?;
    if config.mode != model.mode() {
        return Err(Error::Domain(format!("model is {} mode, config asks for {}", model.mode(), config.mode)));
    }
    let inputs = train_set
        .iter()
        .map(|s| model.input_tensor(&s.schedule, &s.batch))
        .collect::<Result<Vec<_>>>()?;
    let opt = AdamW::new(config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut stream(config.seed, &[11, epoch as u64]));
        let (mut loss_sum, mut norm_sum, mut steps) = (0.0, 0.0, 0usize);
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<&Sample> = batch.iter().map(|&i| &train_set[i]).collect();
            let x: Vec<&FeatureTensor> = batch.iter().map(|&i| &inputs[i]).collect();
            let eval = evaluate_batch(&model.params, &model.loss_context(), &samples, &x, true)?;
            let mut grads = eval.grads.expect("gradients requested");
            let norm = if config.grad_clip_norm > 0.0 {
                clip_global_norm(&mut grads, config.grad_clip_norm)
            } else {
                super::optim::global_norm(&grads)
            };
            if !eval.loss.is_finite() || !norm.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let params = &mut model.params;
            let mut state = std::mem::take(&mut params.optimizer);
            opt.step(params.tensors_mut(), &grads, &mut state);
            params.optimizer = state;
            if !params.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            loss_sum += eval.loss * batch.len() as f64;
            norm_sum += norm;
            steps += 1;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / train_set.len().max(1) as f64,
            mean_grad_norm: norm_sum / steps.max(1) as f64,
        };
        on_epoch(model, &stats)?;
        history.push(stats);
    }
    Ok(history)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: TrainedModel,
    pub history: Vec<EpochStats>,
}

pub fn train(geometry: &ArrayGeometry, train_set: &[Sample], config: &TrainConfig) -> Result<TrainReport> {
    let mut model = TrainedModel::initialise(geometry, train_set, config)?;
    let history = fit(&mut model, train_set, config)?;
    Ok(TrainReport { model, history })
}

/// Mean of `|θ̂ − θ|` in degrees.
pub fn mae_degrees(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if estimates.len() != truth.len() {
        return Err(Error::Dimension(format!("{} estimates for {} labels", estimates.len(), truth.len())));
    }
    let sum: f64 = estimates.iter().zip(truth).map(|(e, t)| (e - t).abs()).sum();
    Ok((sum / estimates.len() as f64).to_degrees())
}

pub fn evaluate_mae(model: &TrainedModel, test_set: &Dataset) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let est: Vec<f64> = model.predict_many(test_set.samples())?.iter().map(|o| o.theta).collect();
    let truth: Vec<f64> = test_set.truth().iter().map(|t| t.theta).collect();
    mae_degrees(&est, &truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn mae_arithmetic() {
        assert_eq!(mae_degrees(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        let m = mae_degrees(&[PI / 4.0, PI / 4.0], &[PI / 8.0, 3.0 * PI / 8.0]).unwrap();
        assert!((m - 22.5).abs() < 1e-12);
        assert!(matches!(mae_degrees(&[], &[]), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: f64::NAN, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
