//! Unsupervised training losses and their gradients.
//!
//! The loss-to-head derivatives are analytic; the head-to-weight part runs
//! on the tape.

use super::dataset::Sample;
use super::features::{FeatureTensor, PilotMode};
use super::network::{squash, HeadOutput, HeadScales, NetworkParameters};
use super::tape::Tensor;
use crate::linalg::Cholesky;
use crate::ml::beam_response;
use crate::signal::{sample_covariance, ArrayGeometry, SampleCovariance};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Loss charged when the model covariance cannot be factored.
pub const SML_PENALTY: f64 = 1e6;

/// `Σ_q ‖y^(q) − ξ̂ X^(q) a(θ̂)‖²` and its derivatives with respect to
/// `(θ̂, σ̂², ξ̂)`. The noise output does not enter.
pub fn dml_sample_loss(geometry: &ArrayGeometry, sample: &Sample, out: &HeadOutput) -> (f64, [f64; 3]) {
    let s = &sample.schedule;
    let u = s.beam_responses(&geometry.steering_vector(out.theta));
    let du = s.beam_responses(&geometry.steering_derivative(out.theta));
    let y = sample.batch.matrix();
    let (mut loss, mut d_xi, mut d_theta) = (0.0, 0.0, 0.0);
    for (q, &c) in s.symbols().iter().enumerate() {
        for l in 0..u.len() {
            let b = c * u[l];
            let r = y[(l, q)] - b * out.xi;
            loss += r.norm_sqr();
            d_xi -= 2.0 * (b.conj() * r).re;
            d_theta -= 2.0 * out.xi * ((c * du[l]).conj() * r).re;
        }
    }
    (loss, [d_theta, 0.0, d_xi])
}

/// `ln det C + tr(C⁻¹ Ĉ)` with `C = ξ̂² v vᴴ + σ̂² I`, and derivatives
/// `tr(G ∂C/∂p)` with `G = C⁻¹ − C⁻¹ Ĉ C⁻¹`.
pub fn sml_sample_loss(
    geometry: &ArrayGeometry,
    beamformers: &[CVector],
    chat: &SampleCovariance,
    out: &HeadOutput,
) -> (f64, [f64; 3]) {
    let v = beam_response(geometry, beamformers, out.theta);
    let dv = beam_response_derivative(geometry, beamformers, out.theta);
    let n = v.len();
    let xi2 = out.xi * out.xi;
    let c = &v * v.adjoint() * C64::new(xi2, 0.0) + CMatrix::identity(n, n) * C64::new(out.sigma2, 0.0);
    let Ok(ch) = Cholesky::factor(&c) else {
        return (SML_PENALTY, [0.0; 3]);
    };
    let c_inv = ch.solve_matrix(&CMatrix::identity(n, n));
    let loss = ch.log_det() + ch.trace_inv_times(chat.matrix());
    if !loss.is_finite() || loss > SML_PENALTY {
        return (SML_PENALTY, [0.0; 3]);
    }
    let g = &c_inv - &c_inv * chat.matrix() * &c_inv;
    let gv = &g * &v;
    let d_theta = xi2 * 2.0 * dv.dotc(&gv).re;
    let d_xi2 = v.dotc(&gv).re;
    let d_sigma2 = g.trace().re;
    (loss, [d_theta, d_sigma2, 2.0 * out.xi * d_xi2])
}

fn beam_response_derivative(geometry: &ArrayGeometry, beamformers: &[CVector], theta: f64) -> CVector {
    let da = geometry.steering_derivative(theta);
    CVector::from_iterator(beamformers.len(), beamformers.iter().map(|b| b.dot(&da)))
}

/// Everything a loss evaluation needs besides weights and data.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub geometry: &'a ArrayGeometry,
    pub mode: PilotMode,
    pub scales: HeadScales,
    /// Multiplies the mean loss before differentiation. The DML residual is
    /// in watts and would otherwise vanish against the optimiser's epsilon.
    pub objective_scale: f64,
}

pub fn sample_loss(ctx: &LossContext<'_>, sample: &Sample, out: &HeadOutput) -> (f64, [f64; 3]) {
    match ctx.mode {
        PilotMode::Dml => dml_sample_loss(ctx.geometry, sample, out),
        PilotMode::Sml => {
            sml_sample_loss(ctx.geometry, sample.schedule.beamformers(), &sample_covariance(&sample.batch), out)
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchEval {
    /// Mean unscaled loss.
    pub loss: f64,
    pub per_sample: Vec<f64>,
    pub outputs: Vec<HeadOutput>,
    /// Gradient of `objective_scale · loss` by parameter tensor.
    pub grads: Option<Vec<Tensor>>,
}

/// Forward pass, losses and (optionally) the weight gradient of the scaled
/// mean loss over a batch. `inputs[i]` is the standardised tensor of
/// `samples[i]`.
pub fn evaluate_batch(
    params: &NetworkParameters,
    ctx: &LossContext<'_>,
    samples: &[&Sample],
    inputs: &[&FeatureTensor],
    with_grad: bool,
) -> Result<BatchEval> {
    if samples.len() != inputs.len() || samples.is_empty() {
        return Err(Error::Dimension(format!("{} samples with {} input tensors", samples.len(), inputs.len())));
    }
    let pass = params.forward_tape(inputs)?;
    let z = &pass.tape.value(pass.logits).data;
    let b = samples.len();
    let mut per_sample = Vec::with_capacity(b);
    let mut outputs = Vec::with_capacity(b);
    let mut seed = Tensor::zeros(vec![b, 3]);
    let w = ctx.objective_scale / b as f64;
    for (i, sample) in samples.iter().enumerate() {
        let (out, dz) = squash([z[3 * i], z[3 * i + 1], z[3 * i + 2]], &ctx.scales);
        let (loss, d_out) = sample_loss(ctx, sample, &out);
        for k in 0..3 {
            seed.data[3 * i + k] = w * d_out[k] * dz[k];
        }
        per_sample.push(loss);
        outputs.push(out);
    }
    let loss = per_sample.iter().sum::<f64>() / b as f64;
    let grads = if with_grad {
        let mut g = pass.tape.backward(pass.logits, seed);
        Some(
            pass.params
                .iter()
                .zip(params.tensors())
                .map(|(&v, t)| g.take(v).unwrap_or_else(|| Tensor::zeros(t.shape.clone())))
                .collect(),
        )
    } else {
        None
    };
    Ok(BatchEval { loss, per_sample, outputs, grads })
}
