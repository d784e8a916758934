#![allow(dead_code)]

use aodlab_core::rng::stream;
use aodlab_core::signal::{dbm_to_watts, simulate_observations, ArrayGeometry, LinkBudget, ObservationBatch, PilotSchedule, Scenario};

pub const THETA_REF_DEG: f64 = 23.4;
pub const RANGE_REF: f64 = 32.1;

pub fn scenario(geometry: &ArrayGeometry, theta: f64, range: f64, p_dbm: f64) -> Scenario {
    Scenario::from_budget(geometry, &LinkBudget::default(), theta, range, dbm_to_watts(p_dbm)).unwrap()
}

/// One Monte Carlo trial: fresh beamformers, symbols and noise.
pub fn trial(
    geometry: &ArrayGeometry,
    sc: &Scenario,
    l: usize,
    q: usize,
    seed: u64,
    index: u64,
) -> (PilotSchedule, ObservationBatch) {
    let schedule = PilotSchedule::random(sc.tx_power, geometry.num_antennas(), l, q, &mut stream(seed, &[index, 0])).unwrap();
    let batch = simulate_observations(geometry, sc, &schedule, &mut stream(seed, &[index, 1])).unwrap();
    (schedule, batch)
}
