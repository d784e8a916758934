//! Training and test data by enumeration of angles, ranges, beamformer sets,
//! symbol sets and noise draws.
//!
//! Ground truth is kept in a separate vector. Losses take `&[Sample]`, which
//! carries only what a receiver observes.

use std::f64::consts::FRAC_PI_2;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::signal::{
    dbm_to_watts, make_beamformers, random_phases, random_symbols, simulate_observations, ArrayGeometry, LinkBudget,
    ObservationBatch, PilotSchedule, Scenario,
};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_thetas: usize,
    pub num_ranges: usize,
    pub num_beamformer_sets: usize,
    pub num_symbol_sets: usize,
    pub noise_draws: usize,
    /// Held out from the enumeration for testing.
    pub num_test: usize,
    pub num_slots: usize,
    pub num_blocks: usize,
    pub tx_power_dbm: f64,
    pub range_lo: f64,
    pub range_hi: f64,
}

impl DatasetSpec {
    /// 20 angles × 22 ranges × 2 × 2 × 3 draws = 5280 samples, 480 held out.
    pub fn desk() -> Self {
        Self {
            num_thetas: 20,
            num_ranges: 22,
            num_beamformer_sets: 2,
            num_symbol_sets: 2,
            noise_draws: 3,
            num_test: 480,
            num_slots: 6,
            num_blocks: 4,
            tx_power_dbm: 15.0,
            range_lo: 20.0,
            range_hi: 50.0,
        }
    }

    /// 200 × 220 × 5 × 5 = 1.1 million samples, 10⁵ held out.
    pub fn full_scale() -> Self {
        Self { num_thetas: 200, num_ranges: 220, num_beamformer_sets: 5, num_symbol_sets: 5, noise_draws: 1, num_test: 100_000, ..Self::desk() }
    }

    pub fn size(&self) -> usize {
        self.num_thetas * self.num_ranges * self.num_beamformer_sets * self.num_symbol_sets * self.noise_draws
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.num_thetas,
            self.num_ranges,
            self.num_beamformer_sets,
            self.num_symbol_sets,
            self.noise_draws,
            self.num_slots,
            self.num_blocks,
        ];
        if counts.contains(&0) {
            return Err(Error::Domain(format!("dataset counts must be at least 1: {self:?}")));
        }
        if self.num_test >= self.size() {
            return Err(Error::Domain(format!("{} test samples leave nothing of {} to train on", self.num_test, self.size())));
        }
        if !(self.range_lo > 0.0 && self.range_hi >= self.range_lo) {
            return Err(Error::Domain(format!("bad range interval [{}, {}]", self.range_lo, self.range_hi)));
        }
        Ok(())
    }
}

/// What the receiver sees: the pilot schedule and the received blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub schedule: PilotSchedule,
    pub batch: ObservationBatch,
}

/// Evaluation-only labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub theta: f64,
    pub range: f64,
    pub channel_gain: C64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    truth: Vec<Truth>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, truth: Vec<Truth>) -> Result<Self> {
        if samples.len() != truth.len() {
            return Err(Error::Dimension(format!("{} samples but {} labels", samples.len(), truth.len())));
        }
        Ok(Self { samples, truth })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn truth(&self) -> &[Truth] {
        &self.truth
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            truth: indices.iter().map(|&i| self.truth[i]).collect(),
        }
    }

    /// Random split into `(train, test)` with `num_test` test samples.
    pub fn split(&self, num_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if num_test > self.len() {
            return Err(Error::Domain(format!("cannot hold out {num_test} of {} samples", self.len())));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut stream(seed, &[5]));
        let (test, train) = idx.split_at(num_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

fn open_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

/// Enumerates every combination in the order angle, range, beamformer set,
/// symbol set, noise draw (last fastest). Each sample's noise has its own
/// stream, so the result does not depend on thread count.
pub fn generate_dataset(spec: &DatasetSpec, geometry: &ArrayGeometry, budget: &LinkBudget, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let m = geometry.num_antennas();
    let power = dbm_to_watts(spec.tx_power_dbm);
    let mut rng = stream(seed, &[0]);
    let thetas: Vec<f64> = (0..spec.num_thetas).map(|_| open_uniform(&mut rng, 0.0, FRAC_PI_2)).collect();
    let mut rng = stream(seed, &[1]);
    let ranges: Vec<f64> = (0..spec.num_ranges).map(|_| rng.random_range(spec.range_lo..=spec.range_hi)).collect();
    let beam_sets = (0..spec.num_beamformer_sets)
        .map(|k| make_beamformers(power, m, &random_phases(spec.num_slots, m, &mut stream(seed, &[2, k as u64]))))
        .collect::<Result<Vec<_>>>()?;
    let symbol_sets: Vec<Vec<C64>> =
        (0..spec.num_symbol_sets).map(|k| random_symbols(spec.num_blocks, &mut stream(seed, &[3, k as u64]))).collect();

    let dims = [spec.num_ranges, spec.num_beamformer_sets, spec.num_symbol_sets, spec.noise_draws];
    let records: Vec<(Sample, Truth)> = (0..spec.size())
        .into_par_iter()
        .map(|index| {
            let mut rest = index;
            let mut coord = [0usize; 5];
            for (slot, &d) in coord[1..].iter_mut().zip(&dims).rev() {
                *slot = rest % d;
                rest /= d;
            }
            coord[0] = rest;
            let [ti, ri, bi, si, _] = coord;
            let schedule = PilotSchedule::new(beam_sets[bi].clone(), symbol_sets[si].clone())?;
            let scenario = Scenario::from_budget(geometry, budget, thetas[ti], ranges[ri], power)?;
            let batch = simulate_observations(geometry, &scenario, &schedule, &mut stream(seed, &[4, index as u64]))?;
            let truth = Truth {
                theta: scenario.theta,
                range: scenario.range,
                channel_gain: scenario.channel_gain,
                noise_var: scenario.noise_var,
            };
            Ok((Sample { schedule, batch }, truth))
        })
        .collect::<Result<_>>()?;
    let (samples, truth) = records.into_iter().unzip();
    Ok(Dataset { samples, truth })
}
