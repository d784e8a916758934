//! The estimator network: two convolution stages, two dense stages and a
//! three-wide head squashed into `(θ̂, σ̂², ξ̂)`.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureTensor;
use super::optim::AdamState;
use super::tape::{Tape, Tensor, Var};
use crate::signal::{channel_gain, noise_variance};
use crate::{Error, Result};

/// Output channels of the two convolution stages.
pub const CONV_CHANNELS: [usize; 2] = [8, 16];
pub const DEFAULT_HIDDEN: usize = 128;

/// Keeps `θ̂` strictly inside `(0, π/2)` when the logistic saturates.
const LOGISTIC_EPS: f64 = 1e-12;
/// Keeps `σ̂²` and `ξ̂` strictly positive when softplus underflows.
const SOFTPLUS_FLOOR: f64 = 1e-250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub num_antennas: usize,
    pub num_slots: usize,
    pub num_blocks: usize,
    pub hidden: usize,
}

impl NetworkConfig {
    pub fn new(num_antennas: usize, num_slots: usize, num_blocks: usize) -> Self {
        Self { num_antennas, num_slots, num_blocks, hidden: DEFAULT_HIDDEN }
    }

    /// `[2, M+1, QL]`.
    pub fn input_shape(&self) -> [usize; 3] {
        [2, self.num_antennas + 1, self.num_slots * self.num_blocks]
    }

    pub fn flat_dim(&self) -> usize {
        let [_, h, w] = self.input_shape();
        CONV_CHANNELS[1] * h.div_ceil(2).div_ceil(2) * w.div_ceil(2).div_ceil(2)
    }

    /// Parameter tensors in storage order: conv1 weight, conv1 bias, conv2
    /// weight, conv2 bias, fc1 weight, fc1 bias, fc2 weight, fc2 bias, head
    /// weight, head bias. Dense weights are `[out, in]`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let [c0, c1] = CONV_CHANNELS;
        let h = self.hidden;
        vec![
            vec![c0, 2, 3, 3],
            vec![c0],
            vec![c1, c0, 3, 3],
            vec![c1],
            vec![h, self.flat_dim()],
            vec![h],
            vec![h, h],
            vec![h],
            vec![3, h],
            vec![3],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 || self.num_slots == 0 || self.num_blocks == 0 || self.hidden == 0 {
            return Err(Error::Domain(format!("network dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Output magnitudes: `σ̂² = softplus(z₂)·sigma2`, `ξ̂ = softplus(z₃)·xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadScales {
    pub sigma2: f64,
    pub xi: f64,
}

impl HeadScales {
    /// Thermal noise over 120 kHz and the gain at 35 m, mid-range of the
    /// simulated geometry.
    pub fn physical(carrier_freq: f64) -> Result<Self> {
        Ok(Self { sigma2: noise_variance(-165.0, 1.2e5), xi: channel_gain(35.0, 1.0, 3.0, carrier_freq)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadOutput {
    pub theta: f64,
    pub sigma2: f64,
    pub xi: f64,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Maps head logits to outputs; also returns `d output / d logit`.
pub fn squash(z: [f64; 3], scales: &HeadScales) -> (HeadOutput, [f64; 3]) {
    let s = logistic(z[0]);
    let (p, dp) = if s < LOGISTIC_EPS {
        (LOGISTIC_EPS, 0.0)
    } else if s > 1.0 - LOGISTIC_EPS {
        (1.0 - LOGISTIC_EPS, 0.0)
    } else {
        (s, s * (1.0 - s))
    };
    let positive = |x: f64, scale: f64| {
        let sp = softplus(x);
        if sp < SOFTPLUS_FLOOR {
            (SOFTPLUS_FLOOR * scale, 0.0)
        } else {
            (sp * scale, logistic(x) * scale)
        }
    };
    let (sigma2, ds) = positive(z[1], scales.sigma2);
    let (xi, dx) = positive(z[2], scales.xi);
    (HeadOutput { theta: FRAC_PI_2 * p, sigma2, xi }, [FRAC_PI_2 * dp, ds, dx])
}

/// All trainable weights plus the optimiser state that travels with them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    config: NetworkConfig,
    tensors: Vec<Tensor>,
    pub optimizer: AdamState,
}

/// Tape handles of one forward pass.
#[derive(Debug)]
pub struct ForwardPass {
    pub tape: Tape,
    pub params: Vec<Var>,
    /// Head logits, `[B, 3]`.
    pub logits: Var,
}

impl NetworkParameters {
    /// Uniform `±1/√fan_in` for every weight and bias.
    pub fn init<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        let mut tensors = Vec::with_capacity(shapes.len());
        for pair in shapes.chunks(2) {
            let fan_in: usize = pair[0][1..].iter().product();
            let bound = 1.0 / (fan_in as f64).sqrt();
            for shape in pair {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                tensors.push(Tensor::new(shape.clone(), data));
            }
        }
        let optimizer = AdamState::for_params(&tensors);
        Ok(Self { config, tensors, optimizer })
    }

    pub fn from_tensors(config: NetworkConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        if tensors.len() != shapes.len() || tensors.iter().zip(&shapes).any(|(t, s)| &t.shape != s) {
            return Err(Error::ModelFormat("parameter shapes do not match the network configuration".into()));
        }
        let optimizer = AdamState::for_params(&tensors);
        Ok(Self { config, tensors, optimizer })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Sets the head weight and bias to zero, so every input maps to
    /// `θ̂ = π/4`.
    pub fn zero_head(&mut self) {
        let n = self.tensors.len();
        for t in &mut self.tensors[n - 2..] {
            t.data.fill(0.0);
        }
    }

    fn stack(&self, inputs: &[&FeatureTensor]) -> Result<Tensor> {
        let shape = self.config.input_shape();
        let mut data = Vec::with_capacity(inputs.len() * shape.iter().product::<usize>());
        for t in inputs {
            if t.shape() != shape {
                return Err(Error::Dimension(format!("input tensor {:?}, network expects {shape:?}", t.shape())));
            }
            data.extend_from_slice(t.data());
        }
        Ok(Tensor::new(vec![inputs.len(), shape[0], shape[1], shape[2]], data))
    }

    /// Records a forward pass of the batch on a fresh tape.
    pub fn forward_tape(&self, inputs: &[&FeatureTensor]) -> Result<ForwardPass> {
        let x = self.stack(inputs)?;
        let mut tape = Tape::new();
        let params: Vec<Var> = self.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let x = tape.leaf(x);
        let mut h = tape.conv3x3(x, params[0], params[1]);
        h = tape.silu(h);
        h = tape.avg_pool2(h);
        h = tape.conv3x3(h, params[2], params[3]);
        h = tape.silu(h);
        h = tape.avg_pool2(h);
        h = tape.flatten(h);
        h = tape.linear(h, params[4], params[5]);
        h = tape.silu(h);
        h = tape.linear(h, params[6], params[7]);
        h = tape.silu(h);
        let logits = tape.linear(h, params[8], params[9]);
        Ok(ForwardPass { tape, params, logits })
    }

    pub fn logits(&self, inputs: &[&FeatureTensor]) -> Result<Vec<[f64; 3]>> {
        let pass = self.forward_tape(inputs)?;
        Ok(pass.tape.value(pass.logits).data.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn forward(&self, input: &FeatureTensor, scales: &HeadScales) -> Result<HeadOutput> {
        Ok(squash(self.logits(&[input])?[0], scales).0)
    }
}
