//! Network input: the pilot feature matrix and the real-valued tensor built
//! from it and the observations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::signal::{ObservationBatch, PilotSchedule};
use crate::{CMatrix, Error, Result, C64};

/// How much of the pilot sequence the receiver knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotMode {
    /// Beamformers and every block symbol.
    Dml,
    /// Beamformers only.
    Sml,
}

impl fmt::Display for PilotMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PilotMode::Dml => "dml",
            PilotMode::Sml => "sml",
        })
    }
}

impl FromStr for PilotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dml" => Ok(PilotMode::Dml),
            "sml" => Ok(PilotMode::Sml),
            other => Err(Error::Domain(format!("unknown pilot mode '{other}'"))),
        }
    }
}

/// `M × QL` pilot matrix as seen by the receiver. Column `q·L + l` is
/// `c^(q) x̃_l` in DML mode and `x̃_l` in SML mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotFeature {
    x: CMatrix,
    mode: PilotMode,
    num_slots: usize,
}

impl PilotFeature {
    pub fn matrix(&self) -> &CMatrix {
        &self.x
    }

    pub fn mode(&self) -> PilotMode {
        self.mode
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }
}

pub fn build_pilot_feature(schedule: &PilotSchedule, mode: PilotMode) -> PilotFeature {
    let l_count = schedule.num_slots();
    let cols = schedule.total_observations();
    let x = CMatrix::from_fn(schedule.num_antennas(), cols, |m, col| {
        let (q, l) = (col / l_count, col % l_count);
        let x = schedule.beamformers()[l][m];
        match mode {
            PilotMode::Dml => schedule.symbols()[q] * x,
            PilotMode::Sml => x,
        }
    });
    PilotFeature { x, mode, num_slots: l_count }
}

/// Real tensor of shape `2 × (M+1) × QL`, row-major. Channel 0 holds real
/// parts, channel 1 imaginary parts. Row 0 is `vec(Y)` (slot index fastest),
/// rows `1..=M` are the rows of the pilot feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    /// Shape `[channels, rows, cols]`.
    pub fn shape(&self) -> [usize; 3] {
        [2, self.rows, self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.rows + row) * self.cols + col]
    }

    fn entry(&self, row: usize, col: usize) -> C64 {
        C64::new(self.get(0, row, col), self.get(1, row, col))
    }

    /// Recovers `(X, Y)` given the slot count `L`.
    pub fn split(&self, num_slots: usize) -> Result<(CMatrix, ObservationBatch)> {
        if num_slots == 0 || !self.cols.is_multiple_of(num_slots) {
            return Err(Error::Dimension(format!("{} columns do not split into slots of {num_slots}", self.cols)));
        }
        let x = CMatrix::from_fn(self.rows - 1, self.cols, |m, c| self.entry(m + 1, c));
        let y = CMatrix::from_fn(num_slots, self.cols / num_slots, |l, q| self.entry(0, q * num_slots + l));
        Ok((x, ObservationBatch::new(y)))
    }

    /// Multiplies the observation row by `y_scale` and the pilot rows by
    /// `x_scale`.
    pub fn scaled(&self, x_scale: f64, y_scale: f64) -> FeatureTensor {
        let mut out = self.clone();
        for ch in 0..2 {
            for r in 0..self.rows {
                let s = if r == 0 { y_scale } else { x_scale };
                let start = (ch * self.rows + r) * self.cols;
                out.data[start..start + self.cols].iter_mut().for_each(|v| *v *= s);
            }
        }
        out
    }
}

pub fn build_input_tensor(x: &PilotFeature, y: &ObservationBatch) -> Result<FeatureTensor> {
    let cols = x.x.ncols();
    if y.num_slots() * y.num_blocks() != cols || y.num_slots() != x.num_slots {
        return Err(Error::Dimension(format!(
            "observations are {}x{}, pilot feature has {} columns of {} slots",
            y.num_slots(),
            y.num_blocks(),
            cols,
            x.num_slots
        )));
    }
    let rows = x.x.nrows() + 1;
    let mut data = vec![0.0; 2 * rows * cols];
    // vec(Y) in nalgebra's column-major storage is already slot-fastest.
    for (k, z) in y.matrix().iter().enumerate() {
        data[k] = z.re;
        data[rows * cols + k] = z.im;
    }
    for m in 0..x.x.nrows() {
        for c in 0..cols {
            let z = x.x[(m, c)];
            data[(m + 1) * cols + c] = z.re;
            data[(rows + m + 1) * cols + c] = z.im;
        }
    }
    Ok(FeatureTensor { rows, cols, data })
}

/// Input standardisation: one scalar for the observation row, one for the
/// pilot rows, each the inverse RMS magnitude over a training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_scale: f64,
    pub y_scale: f64,
}

impl Standardization {
    pub const IDENTITY: Standardization = Standardization { x_scale: 1.0, y_scale: 1.0 };

    pub fn fit<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a PilotSchedule, &'a ObservationBatch)>,
    {
        let (mut x_pow, mut x_n, mut y_pow, mut y_n) = (0.0, 0usize, 0.0, 0usize);
        for (s, y) in pairs {
            y_pow += y.energy();
            y_n += y.matrix().len();
            x_pow += s.beamformers().iter().map(|b| b.norm_squared()).sum::<f64>();
            x_n += s.num_slots() * s.num_antennas();
        }
        if x_n == 0 || !(y_pow > 0.0) || !(x_pow > 0.0) {
            return Err(Error::Domain("cannot standardise an empty or all-zero training set".into()));
        }
        Ok(Self { x_scale: (x_n as f64 / x_pow).sqrt(), y_scale: (y_n as f64 / y_pow).sqrt() })
    }

    pub fn apply(&self, t: &FeatureTensor) -> FeatureTensor {
        t.scaled(self.x_scale, self.y_scale)
    }
}
