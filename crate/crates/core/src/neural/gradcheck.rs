//! Backward pass against central finite differences.

use super::dataset::Sample;
use super::features::{FeatureTensor, PilotMode};
use super::loss::evaluate_batch;
use super::train::{TrainConfig, TrainedModel};
use crate::rng::stream;
use crate::signal::{simulate_observations, ArrayGeometry, LinkBudget, PilotSchedule, Scenario};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Worst `|analytic − fd| / max(|analytic|, |fd|, 1e-6 · max |analytic|)`.
    pub worst_relative_error: f64,
    pub num_weights: usize,
}

fn objective(model: &TrainedModel, samples: &[&Sample], inputs: &[&FeatureTensor]) -> Result<f64> {
    let ctx = model.loss_context();
    Ok(evaluate_batch(&model.params, &ctx, samples, inputs, false)?.loss * ctx.objective_scale)
}

/// Perturbs every weight of `model` by `±step` in turn. The weights are
/// restored before returning.
pub fn gradient_check(model: &mut TrainedModel, samples: &[Sample], step: f64) -> Result<GradCheck> {
    let inputs = samples.iter().map(|s| model.input_tensor(&s.schedule, &s.batch)).collect::<Result<Vec<_>>>()?;
    let s: Vec<&Sample> = samples.iter().collect();
    let x: Vec<&FeatureTensor> = inputs.iter().collect();
    let analytic = evaluate_batch(&model.params, &model.loss_context(), &s, &x, true)?.grads.expect("gradients requested");
    let gmax = analytic.iter().flat_map(|t| &t.data).fold(0.0f64, |m, v| m.max(v.abs()));
    if !(gmax > 0.0) {
        return Err(Error::Domain("gradient is identically zero".into()));
    }
    let (mut worst, mut count) = (0.0f64, 0);
    for p in 0..analytic.len() {
        for k in 0..analytic[p].len() {
            let orig = model.params.tensors()[p].data[k];
            model.params.tensors_mut()[p].data[k] = orig + step;
            let up = objective(model, &s, &x);
            model.params.tensors_mut()[p].data[k] = orig - step;
            let down = objective(model, &s, &x);
            model.params.tensors_mut()[p].data[k] = orig;
            let fd = (up? - down?) / (2.0 * step);
            let a = analytic[p].data[k];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6 * gmax));
            count += 1;
        }
    }
    Ok(GradCheck { worst_relative_error: worst, num_weights: count })
}

/// The fixed small setting: two antennas, two slots, two blocks, hidden
/// width 4, three samples, step `1e-4`.
pub fn tiny_gradient_check(mode: PilotMode) -> Result<GradCheck> {
    let geometry = ArrayGeometry::new(2, 0.5, 28e9)?;
    let samples = (0..3u64)
        .map(|i| {
            let mut rng = stream(40, &[i]);
            let schedule = PilotSchedule::random(0.03, 2, 2, 2, &mut rng)?;
            let theta = 0.3 + 0.35 * i as f64;
            let sc = Scenario::from_budget(&geometry, &LinkBudget::default(), theta, 25.0 + 5.0 * i as f64, 0.03)?;
            let batch = simulate_observations(&geometry, &sc, &schedule, &mut rng)?;
            Ok(Sample { schedule, batch })
        })
        .collect::<Result<Vec<_>>>()?;
    let config = TrainConfig { mode, hidden: 4, seed: 3, ..TrainConfig::default() };
    let mut model = TrainedModel::initialise(&geometry, &samples, &config)?;
    gradient_check(&mut model, &samples, 1e-4)
}
