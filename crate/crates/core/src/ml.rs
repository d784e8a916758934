//! Model-based maximum-likelihood estimators.
//!
//! Deterministic ML knows every pilot symbol and reduces to least squares in
//! `(θ, ξ)`; the gain has a closed form for fixed `θ`, leaving a 1-D search.
//! Stochastic ML knows only the beamformers and fits the covariance
//! `C_y = |ξ|² v vᴴ + σ² I`, `v_l = a(θ)ᵀ x̃_l`, to the sample covariance by
//! minimising `ln det C_y + tr(C_y⁻¹ Ĉ_y)`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::linalg::Cholesky;
use crate::search::{golden_section, grid_then_golden, LineMin};
use crate::signal::{sample_covariance, ArrayGeometry, ObservationBatch, PilotSchedule, SampleCovariance};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Below this `‖b(θ)‖²` the gain cannot be eliminated.
pub const DEGENERATE_NORM_SQR: f64 = 1e-30;

/// Coarse search grid plus refinement tolerance for the angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub num_points: usize,
    pub refine_tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { theta_lo: 0.0, theta_hi: FRAC_PI_2, num_points: 512, refine_tol: 1e-5 }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_lo < self.theta_hi) || self.num_points < 2 || !(self.refine_tol > 0.0) {
            return Err(Error::Domain(format!("invalid grid {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmlFit {
    pub theta_hat: f64,
    pub xi_hat: C64,
    /// Least-squares objective at `(theta_hat, xi_hat)`.
    pub residual: f64,
    /// Grid winner before refinement.
    pub coarse_theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmlFit {
    pub theta_hat: f64,
    /// `|ξ|²`; the phase of ξ does not enter second-order statistics.
    pub xi2_hat: f64,
    pub sigma2_hat: f64,
    /// Negative log-likelihood (up to constants) at the fitted parameters.
    pub nll: f64,
    pub coarse_theta: f64,
}

/// `Σ_q ‖y^(q) − ξ X^(q) a(θ)‖²`.
pub fn dml_residual(
    geometry: &ArrayGeometry,
    schedule: &PilotSchedule,
    batch: &ObservationBatch,
    theta: f64,
    xi: C64,
) -> Result<f64> {
    schedule.check_antennas(geometry)?;
    batch.check_schedule(schedule)?;
    let u = schedule.beam_responses(&geometry.steering_vector(theta));
    Ok(residual_with(&u, schedule.symbols(), batch.matrix(), xi))
}

fn residual_with(u: &[C64], symbols: &[C64], y: &CMatrix, xi: C64) -> f64 {
    let mut acc = 0.0;
    for (q, &c) in symbols.iter().enumerate() {
        for (l, &ul) in u.iter().enumerate() {
            acc += (y[(l, q)] - xi * (c * ul)).norm_sqr();
        }
    }
    acc
}

fn xi_with(u: &[C64], symbols: &[C64], y: &CMatrix, theta: f64) -> Result<C64> {
    let mut num = C64::new(0.0, 0.0);
    let mut sym_energy = 0.0;
    for (q, &c) in symbols.iter().enumerate() {
        let mut inner = C64::new(0.0, 0.0);
        for (l, &ul) in u.iter().enumerate() {
            inner += ul.conj() * y[(l, q)];
        }
        num += c.conj() * inner;
        sym_energy += c.norm_sqr();
    }
    let den = sym_energy * u.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if !(den >= DEGENERATE_NORM_SQR) {
        return Err(Error::DegenerateDirection { theta });
    }
    Ok(num / den)
}

/// Least-squares gain for a fixed angle: `bᴴ vec(Y) / ‖b‖²` with
/// `b = stack_q X^(q) a(θ)`.
pub fn dml_xi_closed_form(
    geometry: &ArrayGeometry,
    schedule: &PilotSchedule,
    batch: &ObservationBatch,
    theta: f64,
) -> Result<C64> {
    schedule.check_antennas(geometry)?;
    batch.check_schedule(schedule)?;
    let u = schedule.beam_responses(&geometry.steering_vector(theta));
    xi_with(&u, schedule.symbols(), batch.matrix(), theta)
}

/// Residual with the gain eliminated, `None` where the direction is degenerate.
fn dml_profile(geometry: &ArrayGeometry, schedule: &PilotSchedule, y: &CMatrix, theta: f64) -> Option<(C64, f64)> {
    let u = schedule.beam_responses(&geometry.steering_vector(theta));
    let xi = xi_with(&u, schedule.symbols(), y, theta).ok()?;
    Some((xi, residual_with(&u, schedule.symbols(), y, xi)))
}

/// Coarse grid over `θ` with `ξ` eliminated, then golden-section refinement
/// around the grid winner.
pub fn dml_estimate(
    geometry: &ArrayGeometry,
    schedule: &PilotSchedule,
    batch: &ObservationBatch,
    grid: &GridConfig,
) -> Result<DmlFit> {
    grid.validate()?;
    schedule.check_antennas(geometry)?;
    batch.check_schedule(schedule)?;
    let y = batch.matrix();
    let objective = |theta: f64| dml_profile(geometry, schedule, y, theta).map_or(f64::NAN, |(_, r)| r);
    let (best, idx) = grid_then_golden(objective, grid.theta_lo, grid.theta_hi, grid.num_points, grid.refine_tol)
        .ok_or(Error::AllDegenerate)?;
    let coarse_theta = crate::search::cell_centred_grid(grid.theta_lo, grid.theta_hi, grid.num_points)[idx];
    let (xi_hat, residual) = dml_profile(geometry, schedule, y, best.x).ok_or(Error::AllDegenerate)?;
    Ok(DmlFit { theta_hat: best.x, xi_hat, residual, coarse_theta })
}

/// `C_y = R_X(θ) + σ² I` with `R_X = |ξ|² v vᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCovariance {
    /// `v_l = a(θ)ᵀ x̃_l`.
    pub response: CVector,
    pub xi2: f64,
    pub sigma2: f64,
}

impl ModelCovariance {
    pub fn signal_part(&self) -> CMatrix {
        &self.response * self.response.adjoint() * C64::new(self.xi2, 0.0)
    }

    pub fn matrix(&self) -> CMatrix {
        let n = self.response.len();
        self.signal_part() + CMatrix::identity(n, n) * C64::new(self.sigma2, 0.0)
    }
}

/// Beam response vector `v(θ)`, `v_l = x̃_lᵀ a(θ)`.
pub fn beam_response(geometry: &ArrayGeometry, beamformers: &[CVector], theta: f64) -> CVector {
    let a = geometry.steering_vector(theta);
    CVector::from_iterator(beamformers.len(), beamformers.iter().map(|b| b.dot(&a)))
}

pub fn model_covariance(
    geometry: &ArrayGeometry,
    theta: f64,
    xi2: f64,
    sigma2: f64,
    beamformers: &[CVector],
) -> ModelCovariance {
    ModelCovariance { response: beam_response(geometry, beamformers, theta), xi2, sigma2 }
}

/// `ln det C_y + tr(C_y⁻¹ Ĉ)`, through a Cholesky factor of `C_y`.
pub fn sml_nll(
    geometry: &ArrayGeometry,
    theta: f64,
    xi2: f64,
    sigma2: f64,
    beamformers: &[CVector],
    chat: &SampleCovariance,
) -> Result<f64> {
    if chat.dim() != beamformers.len() {
        return Err(Error::Dimension(format!(
            "sample covariance is {0}x{0}, schedule has {1} slots",
            chat.dim(),
            beamformers.len()
        )));
    }
    let c = model_covariance(geometry, theta, xi2, sigma2, beamformers).matrix();
    let ch = Cholesky::factor(&c)?;
    Ok(ch.log_det() + ch.trace_inv_times(chat.matrix()))
}

/// The likelihood restricted to one angle. Because `C_y` is a rank-one
/// update of `σ² I`, it only needs `‖v‖²`, `vᴴĈv / ‖v‖²` and `tr Ĉ`:
///
/// `(L−1) ln σ² + ln(σ² + |ξ|²‖v‖²) + (tr Ĉ − p)/σ² + p/(σ² + |ξ|²‖v‖²)`.
#[derive(Debug, Clone, Copy)]
pub struct SmlAngleProfile {
    dim: usize,
    response_norm_sqr: f64,
    projected_power: f64,
    trace: f64,
}

impl SmlAngleProfile {
    pub fn new(geometry: &ArrayGeometry, beamformers: &[CVector], chat: &SampleCovariance, theta: f64) -> Result<Self> {
        let v = beam_response(geometry, beamformers, theta);
        let n = v.norm_squared();
        if !(n >= DEGENERATE_NORM_SQR) {
            return Err(Error::DegenerateDirection { theta });
        }
        let cv = chat.matrix() * &v;
        let p = v.dotc(&cv).re / n;
        Ok(Self { dim: beamformers.len(), response_norm_sqr: n, projected_power: p, trace: chat.trace() })
    }

    pub fn nll(&self, xi2: f64, sigma2: f64) -> f64 {
        let s = sigma2 + xi2 * self.response_norm_sqr;
        (self.dim as f64 - 1.0) * sigma2.ln()
            + s.ln()
            + (self.trace - self.projected_power) / sigma2
            + self.projected_power / s
    }

    /// Log-domain search boxes for `|ξ|²` and `σ²`: `[1e-20, 1e2]` times the
    /// per-slot data energy, divided by `‖v‖²` for the gain.
    pub fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let per_slot = self.trace / self.dim as f64;
        let xi = (1e-20 * self.trace / self.response_norm_sqr, 1e2 * self.trace / self.response_norm_sqr);
        let s = (1e-20 * per_slot, 1e2 * per_slot);
        (xi, s)
    }

    /// Coordinate descent over `(|ξ|², σ²)` in the log domain: per round, a
    /// log-spaced bracketing scan then golden-section for each coordinate.
    pub fn fit(&self, inner_iters: usize) -> InnerFit {
        let ((xlo, xhi), (slo, shi)) = self.bounds();
        let mut xi2 = self.trace / (self.dim as f64 * self.response_norm_sqr);
        let mut sigma2 = self.trace / self.dim as f64;
        let mut nll = self.nll(xi2, sigma2);
        let mut history = vec![nll];
        for _ in 0..inner_iters {
            let r = log_line_min(|lx| self.nll(lx.exp(), sigma2), xlo.ln(), xhi.ln());
            if r.value < nll {
                xi2 = r.x.exp();
                nll = r.value;
            }
            let r = log_line_min(|ls| self.nll(xi2, ls.exp()), slo.ln(), shi.ln());
            if r.value < nll {
                sigma2 = r.x.exp();
                nll = r.value;
            }
            history.push(nll);
        }
        InnerFit { xi2, sigma2, nll, history }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerFit {
    pub xi2: f64,
    pub sigma2: f64,
    pub nll: f64,
    /// Objective before the first round and after each round.
    pub history: Vec<f64>,
}

/// Scan at two points per decade, then golden-section between the best
/// point's neighbours.
fn log_line_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> LineMin {
    let step = 0.5 * std::f64::consts::LN_10;
    let n = ((hi - lo) / step).ceil() as usize + 1;
    let xs: Vec<f64> = (0..n).map(|k| (lo + k as f64 * step).min(hi)).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let Some(i) = crate::search::argmin(&vals) else {
        return LineMin { x: lo, value: f64::INFINITY };
    };
    let left = xs[i.saturating_sub(1)];
    let right = xs[(i + 1).min(n - 1)];
    golden_section(f, left, right, 1e-7, Some(LineMin { x: xs[i], value: vals[i] }))
}

fn sml_profile_value(
    geometry: &ArrayGeometry,
    beamformers: &[CVector],
    chat: &SampleCovariance,
    theta: f64,
    inner_iters: usize,
) -> f64 {
    SmlAngleProfile::new(geometry, beamformers, chat, theta).map_or(f64::NAN, |p| p.fit(inner_iters).nll)
}

/// Stochastic ML from raw observations: forms `Ĉ` once and defers to
/// [`sml_estimate_from_covariance`].
pub fn sml_estimate(
    geometry: &ArrayGeometry,
    beamformers: &[CVector],
    batch: &ObservationBatch,
    grid: &GridConfig,
    inner_iters: usize,
) -> Result<SmlFit> {
    if batch.num_slots() != beamformers.len() {
        return Err(Error::Dimension(format!(
            "observations have {} slots, {} beamformers given",
            batch.num_slots(),
            beamformers.len()
        )));
    }
    sml_estimate_from_covariance(geometry, beamformers, &sample_covariance(batch), grid, inner_iters)
}

/// Grid over `θ` with the inner `(|ξ|², σ²)` fit at each point, then
/// golden-section on the winner's bracket.
pub fn sml_estimate_from_covariance(
    geometry: &ArrayGeometry,
    beamformers: &[CVector],
    chat: &SampleCovariance,
    grid: &GridConfig,
    inner_iters: usize,
) -> Result<SmlFit> {
    grid.validate()?;
    if beamformers.iter().any(|b| b.len() != geometry.num_antennas()) {
        return Err(Error::Dimension("beamformer length differs from antenna count".into()));
    }
    if chat.dim() != beamformers.len() {
        return Err(Error::Dimension("sample covariance does not match slot count".into()));
    }
    if !(chat.trace() > 0.0) {
        return Err(Error::Domain("sample covariance has no energy".into()));
    }
    let objective = |theta: f64| sml_profile_value(geometry, beamformers, chat, theta, inner_iters);
    let (best, idx) = grid_then_golden(objective, grid.theta_lo, grid.theta_hi, grid.num_points, grid.refine_tol)
        .ok_or(Error::AllDegenerate)?;
    let coarse_theta = crate::search::cell_centred_grid(grid.theta_lo, grid.theta_hi, grid.num_points)[idx];
    let inner = SmlAngleProfile::new(geometry, beamformers, chat, best.x)?.fit(inner_iters);
    let nll = sml_nll(geometry, best.x, inner.xi2, inner.sigma2, beamformers, chat)?;
    Ok(SmlFit { theta_hat: best.x, xi2_hat: inner.xi2, sigma2_hat: inner.sigma2, nll, coarse_theta })
}
