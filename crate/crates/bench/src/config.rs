//! Plain-text experiment configuration.
//!
//! ```text
//! # comment
//! [experiment]
//! methods = dml, sml, scrlb
//! sweep = 0, 5, 15, 25
//! theta_deg = 23.4
//! range_m = random
//! ```
//!
//! Every key is optional; missing keys take the defaults for the experiment
//! kind, which `--print-defaults` lists. Powers are given in dBm here and
//! converted to watts when a scenario is built.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use aodlab_core::neural::{DatasetSpec, PilotMode, TrainConfig};
use aodlab_core::signal::ArrayGeometry;

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MaeVsPower,
    MaeVsSlots,
    Runtime,
    ScrlbCurve,
    Train,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] =
        [Self::MaeVsPower, Self::MaeVsSlots, Self::Runtime, Self::ScrlbCurve, Self::Train];

    pub fn name(self) -> &'static str {
        match self {
            Self::MaeVsPower => "mae_vs_power",
            Self::MaeVsSlots => "mae_vs_slots",
            Self::Runtime => "runtime",
            Self::ScrlbCurve => "scrlb_curve",
            Self::Train => "train",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dml,
    Sml,
    Dft,
    Music,
    Esprit,
    NnDml,
    NnSml,
    Scrlb,
}

impl Method {
    pub const ALL: [Method; 8] =
        [Self::Dml, Self::Sml, Self::Dft, Self::Music, Self::Esprit, Self::NnDml, Self::NnSml, Self::Scrlb];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dml => "dml",
            Self::Sml => "sml",
            Self::Dft => "dft",
            Self::Music => "music",
            Self::Esprit => "esprit",
            Self::NnDml => "nn_dml",
            Self::NnSml => "nn_sml",
            Self::Scrlb => "scrlb",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown method '{s}'")))
    }
}

/// A fixed value or a fresh uniform draw per trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Draw {
    Fixed(f64),
    Random,
}

impl fmt::Display for Draw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Draw::Fixed(v) => write!(f, "{v}"),
            Draw::Random => f.write_str("random"),
        }
    }
}

/// What the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    TxPowerDbm,
    NumSlots,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::TxPowerDbm => "tx_power_dbm",
            Self::NumSlots => "num_slots",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetPreset {
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub methods: Vec<Method>,
    pub sweep_param: SweepParam,
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,

    pub theta_deg: Draw,
    pub range_m: Draw,
    pub tx_power_dbm: f64,
    pub num_slots: usize,
    pub num_blocks: usize,
    pub num_antennas: usize,
    pub spacing_wavelengths: f64,
    pub carrier_freq_hz: f64,

    pub n_fft: usize,
    pub n_music: usize,
    pub grid_points: usize,
    pub sml_inner_iters: usize,
    /// Per-estimate timings are the median of this many repeats in the
    /// runtime experiment.
    pub repeats: usize,
    pub model_dml: Option<PathBuf>,
    pub model_sml: Option<PathBuf>,

    pub mode: PilotMode,
    pub dataset: DatasetPreset,
    pub num_thetas: usize,
    pub num_ranges: usize,
    pub num_beamformer_sets: usize,
    pub num_symbol_sets: usize,
    pub noise_draws: usize,
    pub num_test: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub hidden: usize,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let desk = DatasetSpec::desk();
        let train = TrainConfig::default();
        let g = ArrayGeometry::reference();
        let base = Self {
            kind,
            methods: vec![Method::Dml, Method::Sml, Method::Dft, Method::Music, Method::Esprit, Method::Scrlb],
            sweep_param: SweepParam::TxPowerDbm,
            sweep: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            trials: 500,
            seed: 0,
            out_dir: PathBuf::from("results"),
            theta_deg: Draw::Fixed(23.4),
            range_m: Draw::Fixed(32.1),
            tx_power_dbm: 15.0,
            num_slots: 6,
            num_blocks: 4,
            num_antennas: g.num_antennas(),
            spacing_wavelengths: g.spacing_over_wavelength(),
            carrier_freq_hz: g.carrier_freq(),
            n_fft: 256,
            n_music: 256,
            grid_points: 512,
            sml_inner_iters: 6,
            repeats: 21,
            model_dml: None,
            model_sml: None,
            mode: PilotMode::Dml,
            dataset: DatasetPreset::Desk,
            num_thetas: desk.num_thetas,
            num_ranges: desk.num_ranges,
            num_beamformer_sets: desk.num_beamformer_sets,
            num_symbol_sets: desk.num_symbol_sets,
            noise_draws: desk.noise_draws,
            num_test: desk.num_test,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            weight_decay: train.weight_decay,
            grad_clip_norm: train.grad_clip_norm,
            hidden: train.hidden,
        };
        match kind {
            ExperimentKind::MaeVsPower => base,
            ExperimentKind::MaeVsSlots => Self {
                sweep_param: SweepParam::NumSlots,
                sweep: vec![2.0, 3.0, 4.0, 6.0, 8.0, 12.0],
                ..base
            },
            ExperimentKind::Runtime => Self {
                methods: vec![Method::Esprit, Method::Dft, Method::Dml, Method::Sml, Method::Music],
                sweep: vec![15.0],
                trials: 1,
                ..base
            },
            ExperimentKind::ScrlbCurve => Self { methods: vec![Method::Scrlb], trials: 100, ..base },
            ExperimentKind::Train => Self { methods: vec![], sweep: vec![], trials: 1, ..base },
        }
    }

    /// Parses `text` over the defaults for `kind`.
    pub fn parse(kind: ExperimentKind, text: &str) -> Result<Self, BenchError> {
        let mut cfg = Self::defaults(kind);
        let mut seen_header = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| BenchError::Config(format!("line {}: {msg}", n + 1));
            if line.starts_with('[') {
                if line != "[experiment]" {
                    return Err(err(format!("unknown section {line}")));
                }
                seen_header = true;
                continue;
            }
            if !seen_header {
                return Err(err("expected [experiment] before the first key".into()));
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| err(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), BenchError> {
        match key {
            "kind" => {
                let k: ExperimentKind = value.parse()?;
                if k != self.kind {
                    return Err(BenchError::Config(format!("file is for '{k}', running '{}'", self.kind)));
                }
            }
            "methods" => self.methods = list(value)?,
            "sweep_param" => {
                self.sweep_param = match value {
                    "tx_power_dbm" => SweepParam::TxPowerDbm,
                    "num_slots" => SweepParam::NumSlots,
                    _ => return Err(BenchError::Config(format!("unknown sweep_param '{value}'"))),
                }
            }
            "sweep" => self.sweep = list(value)?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "theta_deg" => self.theta_deg = draw(key, value)?,
            "range_m" => self.range_m = draw(key, value)?,
            "tx_power_dbm" => self.tx_power_dbm = num(key, value)?,
            "num_slots" => self.num_slots = num(key, value)?,
            "num_blocks" => self.num_blocks = num(key, value)?,
            "num_antennas" => self.num_antennas = num(key, value)?,
            "spacing_wavelengths" => self.spacing_wavelengths = num(key, value)?,
            "carrier_freq_hz" => self.carrier_freq_hz = num(key, value)?,
            "n_fft" => self.n_fft = num(key, value)?,
            "n_music" => self.n_music = num(key, value)?,
            "grid_points" => self.grid_points = num(key, value)?,
            "sml_inner_iters" => self.sml_inner_iters = num(key, value)?,
            "repeats" => self.repeats = num(key, value)?,
            "model_dml" => self.model_dml = Some(PathBuf::from(value)),
            "model_sml" => self.model_sml = Some(PathBuf::from(value)),
            "mode" => self.mode = value.parse().map_err(|_| BenchError::Config(format!("unknown mode '{value}'")))?,
            "dataset" => {
                let preset = match value {
                    "desk" => DatasetPreset::Desk,
                    "full" => DatasetPreset::Full,
                    _ => return Err(BenchError::Config(format!("unknown dataset preset '{value}'"))),
                };
                self.apply_preset(preset);
            }
            "num_thetas" => self.num_thetas = num(key, value)?,
            "num_ranges" => self.num_ranges = num(key, value)?,
            "num_beamformer_sets" => self.num_beamformer_sets = num(key, value)?,
            "num_symbol_sets" => self.num_symbol_sets = num(key, value)?,
            "noise_draws" => self.noise_draws = num(key, value)?,
            "num_test" => self.num_test = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "grad_clip_norm" => self.grad_clip_norm = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            _ => return Err(BenchError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Resets the dataset counts and batch size to a preset. Keys after the
    /// `dataset` line still override individual values.
    fn apply_preset(&mut self, preset: DatasetPreset) {
        let (spec, train) = match preset {
            DatasetPreset::Desk => (DatasetSpec::desk(), TrainConfig::default()),
            DatasetPreset::Full => (DatasetSpec::full_scale(), TrainConfig::full_scale()),
        };
        self.dataset = preset;
        self.num_thetas = spec.num_thetas;
        self.num_ranges = spec.num_ranges;
        self.num_beamformer_sets = spec.num_beamformer_sets;
        self.num_symbol_sets = spec.num_symbol_sets;
        self.noise_draws = spec.noise_draws;
        self.num_test = spec.num_test;
        self.batch_size = train.batch_size;
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        if self.kind != ExperimentKind::Train {
            if self.sweep.is_empty() {
                return bad("sweep must not be empty".into());
            }
            if self.methods.is_empty() {
                return bad("methods must not be empty".into());
            }
        }
        if self.trials == 0 || self.repeats == 0 {
            return bad("trials and repeats must be at least 1".into());
        }
        if self.sweep_param == SweepParam::NumSlots && self.sweep.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
            return bad(format!("slot counts must be positive integers: {:?}", self.sweep));
        }
        if let Draw::Fixed(t) = self.theta_deg {
            if !(t > 0.0 && t < 90.0) {
                return bad(format!("theta_deg {t} outside (0, 90)"));
            }
        }
        if let Draw::Fixed(r) = self.range_m {
            if !(r >= 1.0) {
                return bad(format!("range_m {r} below the 1 m reference distance"));
            }
        }
        if self.num_slots == 0 || self.num_blocks == 0 || self.num_antennas < 2 {
            return bad("need num_slots ≥ 1, num_blocks ≥ 1 and num_antennas ≥ 2".into());
        }
        if self.n_music < 2 || self.grid_points < 2 || self.n_fft < self.num_antennas {
            return bad("n_music and grid_points must be at least 2, n_fft at least num_antennas".into());
        }
        self.geometry()?;
        if self.kind == ExperimentKind::Train {
            self.dataset_spec().validate().map_err(|e| BenchError::Config(e.to_string()))?;
            self.train_config().validate().map_err(|e| BenchError::Config(e.to_string()))?;
            if !(self.learning_rate > 0.0) {
                return bad(format!("learning_rate {} must be positive", self.learning_rate));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry, BenchError> {
        ArrayGeometry::new(self.num_antennas, self.spacing_wavelengths, self.carrier_freq_hz)
            .map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            num_thetas: self.num_thetas,
            num_ranges: self.num_ranges,
            num_beamformer_sets: self.num_beamformer_sets,
            num_symbol_sets: self.num_symbol_sets,
            noise_draws: self.noise_draws,
            num_test: self.num_test,
            num_slots: self.num_slots,
            num_blocks: self.num_blocks,
            tx_power_dbm: self.tx_power_dbm,
            ..DatasetSpec::desk()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            grad_clip_norm: self.grad_clip_norm,
            hidden: self.hidden,
        }
    }

    /// The keys that matter for this kind, as a config file.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# defaults for `aodlab {}`", self.kind);
        let _ = writeln!(s, "[experiment]");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("kind", self.kind.to_string());
        if self.kind != ExperimentKind::Train {
            kv("methods", join(&self.methods));
            kv("sweep_param", self.sweep_param.name().into());
            kv("sweep", join(&self.sweep));
            kv("trials", self.trials.to_string());
            kv("theta_deg", self.theta_deg.to_string());
            kv("range_m", self.range_m.to_string());
        }
        kv("seed", self.seed.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("tx_power_dbm", self.tx_power_dbm.to_string());
        kv("num_slots", self.num_slots.to_string());
        kv("num_blocks", self.num_blocks.to_string());
        kv("num_antennas", self.num_antennas.to_string());
        kv("spacing_wavelengths", self.spacing_wavelengths.to_string());
        kv("carrier_freq_hz", self.carrier_freq_hz.to_string());
        if self.kind == ExperimentKind::Train {
            kv("mode", self.mode.to_string());
            kv("dataset", if self.dataset == DatasetPreset::Desk { "desk" } else { "full" }.into());
            kv("num_thetas", self.num_thetas.to_string());
            kv("num_ranges", self.num_ranges.to_string());
            kv("num_beamformer_sets", self.num_beamformer_sets.to_string());
            kv("num_symbol_sets", self.num_symbol_sets.to_string());
            kv("noise_draws", self.noise_draws.to_string());
            kv("num_test", self.num_test.to_string());
            kv("epochs", self.epochs.to_string());
            kv("batch_size", self.batch_size.to_string());
            kv("learning_rate", self.learning_rate.to_string());
            kv("weight_decay", self.weight_decay.to_string());
            kv("grad_clip_norm", self.grad_clip_norm.to_string());
            kv("hidden", self.hidden.to_string());
        } else {
            kv("n_fft", self.n_fft.to_string());
            kv("n_music", self.n_music.to_string());
            kv("grid_points", self.grid_points.to_string());
            kv("sml_inner_iters", self.sml_inner_iters.to_string());
            if self.kind == ExperimentKind::Runtime {
                kv("repeats", self.repeats.to_string());
            }
            kv("# model_dml", "path/to/model_dml.json".into());
            kv("# model_sml", "path/to/model_sml.json".into());
        }
        s
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, BenchError> {
    value.parse().map_err(|_| BenchError::Config(format!("{key}: cannot parse '{value}'")))
}

fn draw(key: &str, value: &str) -> Result<Draw, BenchError> {
    if value == "random" {
        Ok(Draw::Random)
    } else {
        num(key, value).map(Draw::Fixed)
    }
}

fn list<T>(value: &str) -> Result<Vec<T>, BenchError>
where
    T: FromStr,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| BenchError::Config(format!("cannot parse list item '{v}'"))))
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}
