//! Reference estimators: the DFT-lattice search for the known-pilot case, and
//! MUSIC / ESPRIT on the equivalent uplink, where an `L`-element array
//! receives `Q` snapshots from the user.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

use crate::linalg::hermitian_eigen;
use crate::rng::complex_gaussian;
use crate::search::{cell_centred_grid, grid_then_golden};
use crate::signal::{ArrayGeometry, ObservationBatch, PilotSchedule};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Refinement tolerance for the MUSIC peak, radians.
pub const MUSIC_REFINE_TOL: f64 = 1e-8;

/// `L × Q` uplink snapshots at an `L`-element ULA.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkSnapshots {
    z: CMatrix,
    spacing_over_wavelength: f64,
}

impl UplinkSnapshots {
    pub fn new(z: CMatrix, spacing_over_wavelength: f64) -> Result<Self> {
        if z.nrows() < 2 || z.ncols() == 0 {
            return Err(Error::Dimension(format!("need at least 2 antennas and 1 snapshot, got {}x{}", z.nrows(), z.ncols())));
        }
        Ok(Self { z, spacing_over_wavelength })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.z
    }

    pub fn num_antennas(&self) -> usize {
        self.z.nrows()
    }

    pub fn covariance(&self) -> CMatrix {
        let mut c = &self.z * self.z.adjoint();
        c.unscale_mut(self.z.ncols() as f64);
        c
    }

    fn steering(&self, theta: f64) -> CVector {
        let step = -2.0 * PI * self.spacing_over_wavelength * theta.cos();
        CVector::from_iterator(self.num_antennas(), (0..self.num_antennas()).map(|m| C64::from_polar(1.0, step * m as f64)))
    }
}

/// Candidate angles on the DFT spatial-frequency lattice that fall inside
/// `(0, π/2)`, ascending in `k`.
pub fn dft_lattice(geometry: &ArrayGeometry, n_fft: usize) -> Vec<f64> {
    let dl = geometry.spacing_over_wavelength();
    (0..n_fft)
        .filter_map(|k| {
            // Frequencies wrapped into (-π, π].
            let kk = if 2 * k <= n_fft { k as f64 } else { k as f64 - n_fft as f64 };
            let omega = 2.0 * PI * kk / n_fft as f64;
            let cos = omega / (2.0 * PI * dl);
            if cos.abs() > 1.0 {
                return None;
            }
            let theta = cos.acos();
            (theta > 0.0 && theta < FRAC_PI_2).then_some(theta)
        })
        .collect()
}

/// Least-squares residual evaluated only on the DFT lattice; no refinement.
pub fn dft_estimate(
    geometry: &ArrayGeometry,
    schedule: &PilotSchedule,
    batch: &ObservationBatch,
    n_fft: usize,
) -> Result<f64> {
    if n_fft < geometry.num_antennas() {
        return Err(Error::Domain(format!("n_fft {n_fft} below antenna count {}", geometry.num_antennas())));
    }
    let mut best: Option<(f64, f64)> = None;
    for theta in dft_lattice(geometry, n_fft) {
        let Ok(xi) = crate::ml::dml_xi_closed_form(geometry, schedule, batch, theta) else {
            continue;
        };
        let r = crate::ml::dml_residual(geometry, schedule, batch, theta, xi)?;
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((theta, r));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::AllDegenerate)
}

/// `z^(q) = ξ s^(q) a_L(θ) + n^(q)`, `s ~ CN(0, P)`, `n ~ CN(0, σ² I)`.
#[allow(clippy::too_many_arguments)]
pub fn uplink_dual_simulate<R: Rng + ?Sized>(
    geometry: &ArrayGeometry,
    theta: f64,
    num_rx: usize,
    num_snapshots: usize,
    tx_power: f64,
    noise_var: f64,
    gain: C64,
    rng: &mut R,
) -> Result<UplinkSnapshots> {
    if num_rx < 2 {
        return Err(Error::Domain(format!("uplink array needs at least 2 antennas, got {num_rx}")));
    }
    let a = geometry.with_antennas(num_rx)?.steering_vector(theta);
    let mut z = CMatrix::zeros(num_rx, num_snapshots);
    for q in 0..num_snapshots {
        let s = gain * complex_gaussian(rng, tx_power);
        for l in 0..num_rx {
            z[(l, q)] = s * a[l] + complex_gaussian(rng, noise_var);
        }
    }
    UplinkSnapshots::new(z, geometry.spacing_over_wavelength())
}

/// Noise-subspace projector energy `‖E_nᴴ a(θ)‖²`.
fn noise_projection(noise: &CMatrix, a: &CVector) -> f64 {
    noise.column_iter().map(|e| e.dotc(a).norm_sqr()).sum()
}

pub fn music_noise_subspace(z: &UplinkSnapshots) -> CMatrix {
    let eig = hermitian_eigen(&z.covariance());
    let l = z.num_antennas();
    eig.vectors.columns(0, l - 1).into_owned()
}

/// `‖E_nᴴ a_L(θ)‖² / L`, the orthogonality residual of a candidate angle.
pub fn music_orthogonality(z: &UplinkSnapshots, theta: f64) -> f64 {
    noise_projection(&music_noise_subspace(z), &z.steering(theta)) / z.num_antennas() as f64
}

/// Single-source MUSIC: peak of `1 / ‖E_nᴴ a(θ)‖²` on an `n_grid` grid in
/// `(0, π/2)`, refined by golden-section on the denominator.
pub fn music_estimate(z: &UplinkSnapshots, n_grid: usize) -> Result<f64> {
    if n_grid < 2 {
        return Err(Error::Domain("MUSIC grid needs at least 2 points".into()));
    }
    let en = music_noise_subspace(z);
    let f = |theta: f64| noise_projection(&en, &z.steering(theta));
    let (best, _) = grid_then_golden(f, 0.0, FRAC_PI_2, n_grid, MUSIC_REFINE_TOL).ok_or(Error::AllDegenerate)?;
    Ok(best.x)
}

/// Least-squares ESPRIT on the principal eigenvector.
pub fn esprit_estimate(z: &UplinkSnapshots) -> Result<f64> {
    let l = z.num_antennas();
    let eig = hermitian_eigen(&z.covariance());
    let u = eig.vectors.column(l - 1);
    let u1 = u.rows(0, l - 1);
    let u2 = u.rows(1, l - 1);
    let den = u1.dotc(&u1);
    assert!(den.re > 0.0, "principal eigenvector has an empty leading subarray");
    let phi = u1.dotc(&u2) / den;
    let cos = (-phi.arg() / (2.0 * PI * z.spacing_over_wavelength)).clamp(0.0, 1.0);
    Ok(cos.acos())
}

/// MUSIC pseudospectrum `1 / ‖E_nᴴ a(θ)‖²` at the given angles.
pub fn music_pseudospectrum(z: &UplinkSnapshots, thetas: &[f64]) -> Vec<f64> {
    let en = music_noise_subspace(z);
    thetas.iter().map(|&t| 1.0 / noise_projection(&en, &z.steering(t))).collect()
}

/// Convenience for callers that want the MUSIC grid itself.
pub fn music_grid(n_grid: usize) -> Vec<f64> {
    cell_centred_grid(0.0, FRAC_PI_2, n_grid)
}
