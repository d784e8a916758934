//! Physical-layer model: uniform linear array steering, free-space channel
//! gain, pilot schedules and noisy block observations.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::complex_gaussian;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform linear array at the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    num_antennas: usize,
    spacing_over_wavelength: f64,
    carrier_freq: f64,
}

impl ArrayGeometry {
    pub fn new(num_antennas: usize, spacing_over_wavelength: f64, carrier_freq: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::Domain("array needs at least one antenna".into()));
        }
        if !(spacing_over_wavelength > 0.0) || !(carrier_freq > 0.0) {
            return Err(Error::Domain(format!(
                "spacing {spacing_over_wavelength} and carrier {carrier_freq} must be positive"
            )));
        }
        Ok(Self { num_antennas, spacing_over_wavelength, carrier_freq })
    }

    /// Eight half-wavelength spaced antennas at 28 GHz.
    pub fn reference() -> Self {
        Self { num_antennas: 8, spacing_over_wavelength: 0.5, carrier_freq: 28e9 }
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn spacing_over_wavelength(&self) -> f64 {
        self.spacing_over_wavelength
    }

    pub fn carrier_freq(&self) -> f64 {
        self.carrier_freq
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Same spacing and carrier, different element count.
    pub fn with_antennas(&self, num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, self.spacing_over_wavelength, self.carrier_freq)
    }

    /// `a(θ)_m = exp(-j 2π m (d/λ) cos θ)`, `m = 0..M`.
    pub fn steering_vector(&self, theta: f64) -> CVector {
        let step = -2.0 * PI * self.spacing_over_wavelength * theta.cos();
        CVector::from_iterator(
            self.num_antennas,
            (0..self.num_antennas).map(|m| C64::from_polar(1.0, step * m as f64)),
        )
    }

    /// Elementwise `d a(θ) / dθ`.
    pub fn steering_derivative(&self, theta: f64) -> CVector {
        let k = 2.0 * PI * self.spacing_over_wavelength;
        let step = -k * theta.cos();
        let sin = theta.sin();
        CVector::from_iterator(
            self.num_antennas,
            (0..self.num_antennas).map(|m| {
                let m = m as f64;
                C64::new(0.0, k * m * sin) * C64::from_polar(1.0, step * m)
            }),
        )
    }
}

/// Propagation constants used to turn a range into a channel gain and a
/// noise density into a variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub ref_range: f64,
    pub pathloss_exp: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self { ref_range: 1.0, pathloss_exp: 3.0, noise_psd_dbm_per_hz: -165.0, bandwidth_hz: 120e3 }
    }
}

impl LinkBudget {
    pub fn noise_variance(&self) -> f64 {
        noise_variance(self.noise_psd_dbm_per_hz, self.bandwidth_hz)
    }
}

/// One user position and link condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub theta: f64,
    pub range: f64,
    pub ref_range: f64,
    pub pathloss_exp: f64,
    pub channel_gain: C64,
    pub noise_var: f64,
    pub tx_power: f64,
}

impl Scenario {
    /// Real-positive gain from the log-distance path-loss model, noise from
    /// the link budget's thermal density.
    pub fn from_budget(
        geometry: &ArrayGeometry,
        budget: &LinkBudget,
        theta: f64,
        range: f64,
        tx_power: f64,
    ) -> Result<Self> {
        if !(tx_power > 0.0) {
            return Err(Error::Domain(format!("tx power {tx_power} must be positive")));
        }
        if range < budget.ref_range {
            return Err(Error::Domain(format!("range {range} below reference {}", budget.ref_range)));
        }
        let xi = channel_gain(range, budget.ref_range, budget.pathloss_exp, geometry.carrier_freq())?;
        Ok(Self {
            theta,
            range,
            ref_range: budget.ref_range,
            pathloss_exp: budget.pathloss_exp,
            channel_gain: C64::new(xi, 0.0),
            noise_var: budget.noise_variance(),
            tx_power,
        })
    }
}

/// `sqrt((c0 / (4π f_c r0))² (r0/r)^γ)`.
pub fn channel_gain(range: f64, ref_range: f64, pathloss_exp: f64, carrier_freq: f64) -> Result<f64> {
    if !(ref_range > 0.0) {
        return Err(Error::Domain(format!("reference range {ref_range} must be positive")));
    }
    if !(carrier_freq > 0.0) || !(range > 0.0) {
        return Err(Error::Domain(format!("range {range} and carrier {carrier_freq} must be positive")));
    }
    let free_space = SPEED_OF_LIGHT / (4.0 * PI * carrier_freq * ref_range);
    Ok((free_space * free_space * (ref_range / range).powf(pathloss_exp)).sqrt())
}

/// Noise power in watts for a flat density over a bandwidth,
/// `10^((psd + 10 log10 B − 30) / 10)`, evaluated as density times bandwidth.
pub fn noise_variance(psd_dbm_per_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(psd_dbm_per_hz) * bandwidth_hz
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Constant-modulus beamformers `x̃_l,m = sqrt(P/M) exp(jπ ϱ_l,m)`, one per
/// row of `phases` (an `L × M` matrix).
pub fn make_beamformers(tx_power: f64, num_antennas: usize, phases: &DMatrix<f64>) -> Result<Vec<CVector>> {
    if phases.ncols() != num_antennas {
        return Err(Error::Dimension(format!(
            "phase matrix has {} columns, array has {num_antennas} antennas",
            phases.ncols()
        )));
    }
    let amp = (tx_power / num_antennas as f64).sqrt();
    Ok(phases
        .row_iter()
        .map(|row| CVector::from_iterator(num_antennas, row.iter().map(|&p| C64::from_polar(amp, PI * p))))
        .collect())
}

/// `L × M` phase matrix with entries uniform on `[0, 2)`, so `exp(jπϱ)` is
/// uniform on the circle.
pub fn random_phases<R: Rng + ?Sized>(num_slots: usize, num_antennas: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(num_slots, num_antennas, |_, _| 2.0 * rng.random::<f64>())
}

/// `Q` pilot symbols drawn `CN(0, 1)`.
pub fn random_symbols<R: Rng + ?Sized>(num_blocks: usize, rng: &mut R) -> Vec<C64> {
    (0..num_blocks).map(|_| complex_gaussian(rng, 1.0)).collect()
}

/// Per-slot beamformers reused in every block, scaled per block by a symbol.
/// Block `q`'s pilot matrix has row `l` equal to `c_q x̃_lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSchedule {
    beamformers: Vec<CVector>,
    symbols: Vec<C64>,
}

impl PilotSchedule {
    pub fn new(beamformers: Vec<CVector>, symbols: Vec<C64>) -> Result<Self> {
        let Some(first) = beamformers.first() else {
            return Err(Error::Domain("schedule needs at least one slot".into()));
        };
        if symbols.is_empty() {
            return Err(Error::Domain("schedule needs at least one block".into()));
        }
        let m = first.len();
        if beamformers.iter().any(|b| b.len() != m) {
            return Err(Error::Dimension("beamformers have unequal lengths".into()));
        }
        Ok(Self { beamformers, symbols })
    }

    /// Random phases and symbols at transmit power `tx_power`.
    pub fn random<R: Rng + ?Sized>(
        tx_power: f64,
        num_antennas: usize,
        num_slots: usize,
        num_blocks: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let phases = random_phases(num_slots, num_antennas, rng);
        let symbols = random_symbols(num_blocks, rng);
        Self::new(make_beamformers(tx_power, num_antennas, &phases)?, symbols)
    }

    pub fn beamformers(&self) -> &[CVector] {
        &self.beamformers
    }

    pub fn symbols(&self) -> &[C64] {
        &self.symbols
    }

    pub fn num_slots(&self) -> usize {
        self.beamformers.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.symbols.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.beamformers[0].len()
    }

    pub fn total_observations(&self) -> usize {
        self.num_slots() * self.num_blocks()
    }

    /// Same beamformers, different symbols.
    pub fn with_symbols(&self, symbols: Vec<C64>) -> Result<Self> {
        Self::new(self.beamformers.clone(), symbols)
    }

    /// `X^(q)`, `L × M`.
    pub fn pilot_matrix(&self, q: usize) -> CMatrix {
        let c = self.symbols[q];
        CMatrix::from_fn(self.num_slots(), self.num_antennas(), |l, m| c * self.beamformers[l][m])
    }

    /// `u_l = x̃_lᵀ v` for every slot.
    pub fn beam_responses(&self, v: &CVector) -> Vec<C64> {
        self.beamformers.iter().map(|b| b.dot(v)).collect()
    }

    pub(crate) fn check_antennas(&self, geometry: &ArrayGeometry) -> Result<()> {
        if self.num_antennas() != geometry.num_antennas() {
            return Err(Error::Dimension(format!(
                "beamformers have length {}, array has {} antennas",
                self.num_antennas(),
                geometry.num_antennas()
            )));
        }
        Ok(())
    }
}

/// Received blocks, `L × Q`; column `q` is `y^(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    y: CMatrix,
}

impl ObservationBatch {
    pub fn new(y: CMatrix) -> Self {
        Self { y }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.y
    }

    pub fn num_slots(&self) -> usize {
        self.y.nrows()
    }

    pub fn num_blocks(&self) -> usize {
        self.y.ncols()
    }

    /// Column-stacked `vec(Y)`: entry `q·L + l` is `Y[l, q]`.
    pub fn vectorized(&self) -> CVector {
        CVector::from_column_slice(self.y.as_slice())
    }

    pub fn energy(&self) -> f64 {
        self.y.iter().map(|z| z.norm_sqr()).sum()
    }

    pub(crate) fn check_schedule(&self, schedule: &PilotSchedule) -> Result<()> {
        if self.num_slots() != schedule.num_slots() || self.num_blocks() != schedule.num_blocks() {
            return Err(Error::Dimension(format!(
                "observations are {}x{}, schedule is {}x{}",
                self.num_slots(),
                self.num_blocks(),
                schedule.num_slots(),
                schedule.num_blocks()
            )));
        }
        Ok(())
    }
}

/// Noiseless block response `X^(q) a` for every block, as an `L × Q` matrix.
pub fn noiseless_response(schedule: &PilotSchedule, a: &CVector) -> CMatrix {
    let u = schedule.beam_responses(a);
    CMatrix::from_fn(schedule.num_slots(), schedule.num_blocks(), |l, q| schedule.symbols[q] * u[l])
}

/// `y^(q) = ξ X^(q) a(θ) + w^(q)` with `w ~ CN(0, σ² I)`.
pub fn simulate_observations<R: Rng + ?Sized>(
    geometry: &ArrayGeometry,
    scenario: &Scenario,
    schedule: &PilotSchedule,
    rng: &mut R,
) -> Result<ObservationBatch> {
    schedule.check_antennas(geometry)?;
    let a = geometry.steering_vector(scenario.theta);
    let mean = noiseless_response(schedule, &a);
    let xi = scenario.channel_gain;
    let mut y = mean.map(|z| xi * z);
    // Column-major fill: block by block, slot fastest.
    for z in y.iter_mut() {
        *z += complex_gaussian(rng, scenario.noise_var);
    }
    Ok(ObservationBatch { y })
}

/// Hermitian `L × L` estimate `(1/Q) Σ_q y^(q) y^(q)ᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    c: CMatrix,
}

impl SampleCovariance {
    /// Wraps an arbitrary Hermitian matrix, e.g. an exact model covariance.
    pub fn from_matrix(c: CMatrix) -> Self {
        Self { c }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.c
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.c[(i, i)].re).sum()
    }
}

pub fn sample_covariance(batch: &ObservationBatch) -> SampleCovariance {
    let y = batch.matrix();
    let q = y.ncols().max(1) as f64;
    let mut c = y * y.adjoint();
    c.unscale_mut(q);
    SampleCovariance { c }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn geometry(m: usize) -> ArrayGeometry {
        ArrayGeometry::new(m, 0.5, 28e9).unwrap()
    }

    #[test]
    fn steering_single_antenna_is_one() {
        let a = geometry(1).steering_vector(0.3);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0], C64::new(1.0, 0.0));
    }

    #[test]
    fn steering_broadside_is_all_ones() {
        let a = geometry(4).steering_vector(PI / 2.0);
        for z in a.iter() {
            assert_relative_eq!(z.re, 1.0, epsilon = 1e-15);
            assert!(z.im.abs() < 1e-15);
        }
    }

    #[test]
    fn steering_endfire_alternates() {
        let a = geometry(2).steering_vector(0.0);
        assert_eq!(a[0], C64::new(1.0, 0.0));
        assert_relative_eq!(a[1].re, -1.0, epsilon = 1e-15);
        assert!(a[1].im.abs() < 1e-15);
    }

    #[test]
    fn derivative_trivial_cases() {
        assert_eq!(geometry(1).steering_derivative(0.4)[0], C64::new(0.0, 0.0));
        let d = geometry(6).steering_derivative(0.0);
        assert!(d.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn derivative_matches_central_difference() {
        let g = geometry(8);
        let theta = 0.7;
        let h = 1e-6;
        let fd = (g.steering_vector(theta + h) - g.steering_vector(theta - h)) / C64::new(2.0 * h, 0.0);
        let an = g.steering_derivative(theta);
        let err = (fd - an).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-6, "max abs error {err}");
    }

    #[test]
    fn channel_gain_reference_distance() {
        let xi = channel_gain(1.0, 1.0, 3.0, 28e9).unwrap();
        let expected = SPEED_OF_LIGHT / (4.0 * PI * 28e9);
        assert_relative_eq!(xi, expected, max_relative = 1e-15);
        assert_relative_eq!(xi, 8.524e-4, max_relative = 1e-3);
    }

    #[test]
    fn channel_gain_laws() {
        let a = channel_gain(20.0, 1.0, 0.0, 28e9).unwrap();
        let b = channel_gain(45.0, 1.0, 0.0, 28e9).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-15);
        let ratio = channel_gain(40.0, 1.0, 3.0, 28e9).unwrap() / channel_gain(20.0, 1.0, 3.0, 28e9).unwrap();
        assert_relative_eq!(ratio, 0.5f64.powf(1.5), max_relative = 1e-12);
        assert_relative_eq!(ratio, 0.35355, max_relative = 1e-4);
        assert!(channel_gain(20.0, 0.0, 3.0, 28e9).is_err());
        assert!(channel_gain(20.0, -1.0, 3.0, 28e9).is_err());
    }

    #[test]
    fn noise_variance_examples() {
        assert_relative_eq!(noise_variance(0.0, 1.0), 1e-3, max_relative = 1e-12);
        let s = noise_variance(-165.0, 1.2e5);
        assert_relative_eq!(s, 3.795e-15, max_relative = 1e-3);
        assert_eq!(noise_variance(-165.0, 2.4e5) / s, 2.0);
    }

    #[test]
    fn beamformers_zero_phase_and_power() {
        let p = 0.03;
        let zero = DMatrix::zeros(3, 4);
        let bf = make_beamformers(p, 4, &zero).unwrap();
        for b in &bf {
            for z in b.iter() {
                assert_relative_eq!(z.re, (p / 4.0).sqrt(), max_relative = 1e-15);
                assert_eq!(z.im, 0.0);
            }
        }
        let mut rng = stream(1, &[]);
        let phases = random_phases(6, 8, &mut rng);
        for b in make_beamformers(p, 8, &phases).unwrap() {
            assert_relative_eq!(b.norm_squared(), p, max_relative = 1e-12);
        }
        assert!(make_beamformers(p, 5, &phases).is_err());
    }

    #[test]
    fn pilot_matrices_share_beamformers() {
        let mut rng = stream(2, &[]);
        let s = PilotSchedule::random(0.1, 4, 3, 5, &mut rng).unwrap();
        let base = s.pilot_matrix(0) / s.symbols()[0];
        for q in 1..5 {
            let xq = s.pilot_matrix(q) / s.symbols()[q];
            assert!((xq - &base).norm() < 1e-12 * base.norm());
        }
        assert_eq!(s.total_observations(), 15);
    }

    fn test_scenario(noise_var: f64, xi: f64) -> Scenario {
        Scenario {
            theta: 0.5,
            range: 30.0,
            ref_range: 1.0,
            pathloss_exp: 3.0,
            channel_gain: C64::new(xi, 0.0),
            noise_var,
            tx_power: 1.0,
        }
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let g = geometry(8);
        let mut rng = stream(4, &[]);
        let s = PilotSchedule::random(1.0, 8, 6, 4, &mut rng).unwrap();
        let sc = test_scenario(0.0, 0.7);
        let y = simulate_observations(&g, &sc, &s, &mut rng).unwrap();
        let a = g.steering_vector(sc.theta);
        for q in 0..4 {
            let expected = s.pilot_matrix(q) * &a * sc.channel_gain;
            assert!((y.matrix().column(q) - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn observations_reject_wrong_antenna_count() {
        let mut rng = stream(4, &[]);
        let s = PilotSchedule::random(1.0, 6, 2, 2, &mut rng).unwrap();
        assert!(simulate_observations(&geometry(8), &test_scenario(1.0, 1.0), &s, &mut rng).is_err());
    }

    #[test]
    fn observations_reproduce_bitwise() {
        let g = geometry(8);
        let s = PilotSchedule::random(1.0, 8, 6, 4, &mut stream(9, &[0])).unwrap();
        let sc = test_scenario(0.3, 1.0);
        let a = simulate_observations(&g, &sc, &s, &mut stream(9, &[1])).unwrap();
        let b = simulate_observations(&g, &sc, &s, &mut stream(9, &[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_only_variance_and_mean() {
        let g = geometry(4);
        let s = PilotSchedule::random(1.0, 4, 2, 1, &mut stream(5, &[])).unwrap();
        let var = 0.8;
        let n = 100_000;
        let mut rng = stream(5, &[1]);

        // Pure noise: elementwise variance.
        let sc = test_scenario(var, 0.0);
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let y = simulate_observations(&g, &sc, &s, &mut rng).unwrap();
            for (k, z) in y.matrix().iter().enumerate() {
                acc[k] += z.norm_sqr();
            }
        }
        for a in acc {
            assert!((a / n as f64 - var).abs() < 0.02 * var);
        }

        // Signal plus noise: sample mean within 3 standard errors of ξ X a.
        let sc = test_scenario(var, 0.9);
        let mean = noiseless_response(&s, &g.steering_vector(sc.theta)).map(|z| z * sc.channel_gain);
        let mut sum = CMatrix::zeros(2, 1);
        for _ in 0..n {
            sum += simulate_observations(&g, &sc, &s, &mut rng).unwrap().matrix();
        }
        let se = (var / 2.0 / n as f64).sqrt();
        for (est, truth) in (sum / C64::new(n as f64, 0.0)).iter().zip(mean.iter()) {
            assert!((est.re - truth.re).abs() < 3.0 * se);
            assert!((est.im - truth.im).abs() < 3.0 * se);
        }
    }

    #[test]
    fn noise_covariance_is_scaled_identity() {
        let g = geometry(4);
        let s = PilotSchedule::random(1.0, 4, 3, 1, &mut stream(6, &[])).unwrap();
        let var = 2.0;
        let sc = test_scenario(var, 0.0);
        let mut rng = stream(6, &[1]);
        let n = 100_000;
        let mut acc = CMatrix::zeros(3, 3);
        for _ in 0..n {
            let y = simulate_observations(&g, &sc, &s, &mut rng).unwrap();
            acc += y.matrix() * y.matrix().adjoint();
        }
        let emp = acc / C64::new(n as f64, 0.0);
        let target = CMatrix::identity(3, 3) * C64::new(var, 0.0);
        assert!((emp - &target).norm() < 0.02 * target.norm());
    }

    #[test]
    fn sample_covariance_basics() {
        let y = CMatrix::from_column_slice(3, 1, &[C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, 1.0)]);
        let c = sample_covariance(&ObservationBatch::new(y.clone()));
        assert!((c.matrix() - &y * y.adjoint()).norm() < 1e-15);
        let eig = c.matrix().clone().symmetric_eigenvalues();
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[1].abs() < 1e-12 && ev[0].abs() < 1e-12);

        let zero = sample_covariance(&ObservationBatch::new(CMatrix::zeros(4, 3)));
        assert_eq!(zero.matrix().norm(), 0.0);

        let dup = CMatrix::from_columns(&[y.column(0), y.column(0)]);
        let c2 = sample_covariance(&ObservationBatch::new(dup));
        assert!((c2.matrix() - c.matrix()).norm() < 1e-15);
    }
}
