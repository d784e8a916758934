//! Deterministic Cramér-Rao bound for the angle.
//!
//! Unknowns are `(θ, Re ξ, Im ξ)` with the noise variance known. The mean of
//! the stacked observations is `μ = stack_q ξ X^(q) a(θ)`, and for circular
//! Gaussian noise the Fisher information is `F = (2/σ²) Re(Jᴴ J)`.

use nalgebra::Matrix3;

use crate::signal::{noiseless_response, ArrayGeometry, PilotSchedule, Scenario};
use crate::{CVector, Error, Result, C64};

/// Parameter order: `θ`, `Re ξ`, `Im ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherInfo {
    pub matrix: Matrix3<f64>,
}

/// Below this eigenvalue ratio the information matrix is treated as singular.
const SINGULAR_RATIO: f64 = 1e-12;

/// Stacked mean `μ` (block-major, slot fastest).
pub fn mean_vector(geometry: &ArrayGeometry, scenario: &Scenario, schedule: &PilotSchedule) -> CVector {
    let r = noiseless_response(schedule, &geometry.steering_vector(scenario.theta));
    CVector::from_iterator(r.len(), r.iter().map(|z| scenario.channel_gain * z))
}

/// Analytic Jacobian columns `∂μ/∂θ`, `∂μ/∂Re ξ`, `∂μ/∂Im ξ`.
pub fn mean_jacobian(geometry: &ArrayGeometry, scenario: &Scenario, schedule: &PilotSchedule) -> [CVector; 3] {
    let b = noiseless_response(schedule, &geometry.steering_vector(scenario.theta));
    let db = noiseless_response(schedule, &geometry.steering_derivative(scenario.theta));
    let xi = scenario.channel_gain;
    let j = C64::new(0.0, 1.0);
    [
        CVector::from_iterator(db.len(), db.iter().map(|z| xi * z)),
        CVector::from_column_slice(b.as_slice()),
        CVector::from_iterator(b.len(), b.iter().map(|z| j * z)),
    ]
}

pub fn fisher_information(geometry: &ArrayGeometry, scenario: &Scenario, schedule: &PilotSchedule) -> Result<FisherInfo> {
    schedule.check_antennas(geometry)?;
    if !(scenario.noise_var > 0.0) {
        return Err(Error::Domain(format!("noise variance {} must be positive", scenario.noise_var)));
    }
    let cols = mean_jacobian(geometry, scenario, schedule);
    let scale = 2.0 / scenario.noise_var;
    let matrix = Matrix3::from_fn(|r, c| scale * cols[r].dotc(&cols[c]).re);
    Ok(FisherInfo { matrix })
}

impl FisherInfo {
    /// `[F⁻¹]_θθ` in rad².
    pub fn theta_bound(&self) -> Result<f64> {
        // Parameters have wildly different units; judge conditioning on the
        // diagonally normalised matrix.
        let d = self.matrix.diagonal();
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::SingularFisher);
        }
        let normalised = Matrix3::from_fn(|r, c| self.matrix[(r, c)] / (d[r] * d[c]).sqrt());
        if normalised.symmetric_eigenvalues().min() <= SINGULAR_RATIO {
            return Err(Error::SingularFisher);
        }
        let chol = self.matrix.cholesky().ok_or(Error::SingularFisher)?;
        let e0 = nalgebra::Vector3::new(1.0, 0.0, 0.0);
        Ok(chol.solve(&e0)[0])
    }
}

/// `sqrt([F⁻¹]_00)` in degrees.
pub fn scrlb_theta_degrees(geometry: &ArrayGeometry, scenario: &Scenario, schedule: &PilotSchedule) -> Result<f64> {
    Ok(fisher_information(geometry, scenario, schedule)?.theta_bound()?.sqrt().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::signal::{make_beamformers, random_phases, LinkBudget};
    use approx::assert_relative_eq;

    fn scenario(theta_deg: f64, p: f64) -> (ArrayGeometry, Scenario) {
        let g = ArrayGeometry::reference();
        let s = Scenario::from_budget(&g, &LinkBudget::default(), theta_deg.to_radians(), 32.1, p).unwrap();
        (g, s)
    }

    #[test]
    fn endfire_is_singular() {
        let (g, mut sc) = scenario(10.0, 0.03);
        sc.theta = 0.0;
        let s = PilotSchedule::random(0.03, 8, 6, 4, &mut stream(1, &[])).unwrap();
        let f = fisher_information(&g, &sc, &s).unwrap();
        for c in 0..3 {
            assert_eq!(f.matrix[(0, c)], 0.0);
        }
        assert!(matches!(scrlb_theta_degrees(&g, &sc, &s), Err(Error::SingularFisher)));
    }

    #[test]
    fn information_adds_over_duplicated_blocks() {
        let (g, sc) = scenario(23.4, 0.03);
        let s = PilotSchedule::random(0.03, 8, 6, 2, &mut stream(2, &[])).unwrap();
        let mut syms = s.symbols().to_vec();
        syms.extend_from_slice(s.symbols());
        let s2 = s.with_symbols(syms).unwrap();
        let f1 = fisher_information(&g, &sc, &s).unwrap().matrix;
        let f2 = fisher_information(&g, &sc, &s2).unwrap().matrix;
        assert!((f2 - f1 * 2.0).norm() < 1e-12 * f2.norm());
        let b1 = scrlb_theta_degrees(&g, &sc, &s).unwrap();
        let b2 = scrlb_theta_degrees(&g, &sc, &s2).unwrap();
        assert_relative_eq!(b1 / b2, 2f64.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (g, sc) = scenario(23.4, 0.03);
        let s = PilotSchedule::random(0.03, 8, 6, 4, &mut stream(3, &[])).unwrap();
        let jac = mean_jacobian(&g, &sc, &s);
        let h = 1e-6;
        let perturb = |k: usize, d: f64| {
            let mut p = sc;
            match k {
                0 => p.theta += d,
                1 => p.channel_gain.re += d * sc.channel_gain.norm(),
                _ => p.channel_gain.im += d * sc.channel_gain.norm(),
            }
            mean_vector(&g, &p, &s)
        };
        for (k, col) in jac.iter().enumerate() {
            let unit = if k == 0 { 1.0 } else { sc.channel_gain.norm() };
            let fd = (perturb(k, h) - perturb(k, -h)) / C64::new(2.0 * h * unit, 0.0);
            assert!((&fd - col).norm() < 1e-6 * col.norm(), "column {k}");
        }
    }

    #[test]
    fn bound_scales_with_power() {
        let (g, sc) = scenario(23.4, 0.03);
        let phases = random_phases(6, 8, &mut stream(4, &[]));
        let syms = crate::signal::random_symbols(4, &mut stream(4, &[1]));
        let s1 = PilotSchedule::new(make_beamformers(0.03, 8, &phases).unwrap(), syms.clone()).unwrap();
        let s4 = PilotSchedule::new(make_beamformers(0.12, 8, &phases).unwrap(), syms).unwrap();
        let b1 = scrlb_theta_degrees(&g, &sc, &s1).unwrap();
        let b4 = scrlb_theta_degrees(&g, &sc, &s4).unwrap();
        assert_relative_eq!(b1 / b4, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn information_is_symmetric_positive_definite() {
        let (g, sc) = scenario(40.0, 0.1);
        let s = PilotSchedule::random(0.1, 8, 6, 4, &mut stream(5, &[])).unwrap();
        let f = fisher_information(&g, &sc, &s).unwrap().matrix;
        assert!((f - f.transpose()).norm() < 1e-12 * f.norm());
        assert!(f.symmetric_eigenvalues().min() > 0.0);
    }
}
