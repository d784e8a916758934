//! The five experiments.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aodlab_core::baselines::{dft_estimate, esprit_estimate, music_estimate, uplink_dual_simulate, UplinkSnapshots};
use aodlab_core::crlb::fisher_information;
use aodlab_core::ml::{dml_estimate, sml_estimate, GridConfig};
use aodlab_core::neural::{
    evaluate_mae, fit_with, generate_dataset, load_model, mae_degrees, save_model, EpochStats, PilotMode, TrainedModel,
};
use aodlab_core::rng::{derive_seed, stream};
use aodlab_core::signal::{dbm_to_watts, simulate_observations, ArrayGeometry, LinkBudget, ObservationBatch, PilotSchedule, Scenario};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{Draw, ExperimentConfig, ExperimentKind, Method, SweepParam};
use crate::output::write_train_curve;
use crate::BenchError;

/// One CSV row. Empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub trials: usize,
    pub mae_deg: Option<f64>,
    pub rmse_deg: Option<f64>,
    pub mean_runtime_s: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Signed per-trial errors in degrees, parallel to `rows` (empty for the
    /// bound).
    pub errors_deg: Vec<Vec<f64>>,
}

impl SweepResult {
    pub fn row(&self, method: Method, sweep_value: f64) -> Option<(&SweepRow, &[f64])> {
        self.rows
            .iter()
            .zip(&self.errors_deg)
            .find(|(r, _)| r.method == method && r.sweep_value == sweep_value)
            .map(|(r, e)| (r, e.as_slice()))
    }
}

/// Everything drawn for one trial at one sweep point.
struct Trial {
    theta: f64,
    scenario: Scenario,
    schedule: PilotSchedule,
    batch: ObservationBatch,
    uplink: UplinkSnapshots,
}

/// Trial `t` uses streams below `derive_seed(seed, [t])` whatever the sweep
/// point, so every point sees the same angles, ranges, phases and noise
/// shapes.
fn draw_trial(cfg: &ExperimentConfig, g: &ArrayGeometry, p_dbm: f64, l: usize, t: usize) -> Result<Trial, BenchError> {
    let seed = derive_seed(cfg.seed, &[t as u64]);
    let theta = match cfg.theta_deg {
        Draw::Fixed(d) => d.to_radians(),
        Draw::Random => {
            let mut rng = stream(seed, &[0]);
            loop {
                let v = rng.random_range(0.0..FRAC_PI_2);
                if v > 0.0 {
                    break v;
                }
            }
        }
    };
    let range = match cfg.range_m {
        Draw::Fixed(r) => r,
        Draw::Random => stream(seed, &[1]).random_range(20.0..=50.0),
    };
    let power = dbm_to_watts(p_dbm);
    let scenario = Scenario::from_budget(g, &LinkBudget::default(), theta, range, power)?;
    let schedule = PilotSchedule::random(power, g.num_antennas(), l, cfg.num_blocks, &mut stream(seed, &[2]))?;
    let batch = simulate_observations(g, &scenario, &schedule, &mut stream(seed, &[3]))?;
    // The uplink array has one antenna per downlink slot; subspace methods
    // need at least two.
    let uplink = uplink_dual_simulate(
        g,
        theta,
        l.max(2),
        cfg.num_blocks,
        power,
        scenario.noise_var,
        scenario.channel_gain,
        &mut stream(seed, &[4]),
    )?;
    Ok(Trial { theta, scenario, schedule, batch, uplink })
}

struct Estimators {
    geometry: ArrayGeometry,
    grid: GridConfig,
    n_fft: usize,
    n_music: usize,
    inner_iters: usize,
    nn_dml: Option<TrainedModel>,
    nn_sml: Option<TrainedModel>,
}

impl Estimators {
    fn new(cfg: &ExperimentConfig) -> Result<Self, BenchError> {
        let geometry = cfg.geometry()?;
        let load = |method: Method, path: &Option<PathBuf>, mode: PilotMode| -> Result<Option<TrainedModel>, BenchError> {
            if !cfg.methods.contains(&method) {
                return Ok(None);
            }
            let path = path.as_ref().ok_or_else(|| BenchError::Runtime(format!("{method} needs model_{mode} in the config")))?;
            let model =
                load_model(path).map_err(|e| BenchError::Runtime(format!("cannot load {}: {e}", path.display())))?;
            if model.mode() != mode {
                return Err(BenchError::Runtime(format!("{} holds a {} model, {method} needs {mode}", path.display(), model.mode())));
            }
            if model.geometry != geometry {
                return Err(BenchError::Runtime(format!("{} was trained for a different array", path.display())));
            }
            Ok(Some(model))
        };
        Ok(Self {
            geometry,
            grid: GridConfig { num_points: cfg.grid_points, ..GridConfig::default() },
            n_fft: cfg.n_fft,
            n_music: cfg.n_music,
            inner_iters: cfg.sml_inner_iters,
            nn_dml: load(Method::NnDml, &cfg.model_dml, PilotMode::Dml)?,
            nn_sml: load(Method::NnSml, &cfg.model_sml, PilotMode::Sml)?,
        })
    }

    fn estimate(&self, method: Method, t: &Trial) -> Result<f64, BenchError> {
        let g = &self.geometry;
        let nn = |m: &Option<TrainedModel>| -> Result<f64, BenchError> {
            let model = m.as_ref().expect("model loaded for every requested nn method");
            let cfg = model.params.config();
            if (cfg.num_slots, cfg.num_blocks) != (t.schedule.num_slots(), t.schedule.num_blocks()) {
                return Err(BenchError::Runtime(format!(
                    "{method} model expects L={}, Q={}, trial has L={}, Q={}",
                    cfg.num_slots,
                    cfg.num_blocks,
                    t.schedule.num_slots(),
                    t.schedule.num_blocks()
                )));
            }
            Ok(model.predict(&t.schedule, &t.batch)?.theta)
        };
        Ok(match method {
            Method::Dml => dml_estimate(g, &t.schedule, &t.batch, &self.grid)?.theta_hat,
            Method::Sml => sml_estimate(g, t.schedule.beamformers(), &t.batch, &self.grid, self.inner_iters)?.theta_hat,
            Method::Dft => dft_estimate(g, &t.schedule, &t.batch, self.n_fft)?,
            Method::Music => music_estimate(&t.uplink, self.n_music)?,
            Method::Esprit => esprit_estimate(&t.uplink)?,
            Method::NnDml => nn(&self.nn_dml)?,
            Method::NnSml => nn(&self.nn_sml)?,
            Method::Scrlb => unreachable!("the bound is not an estimator"),
        })
    }

    /// `[F⁻¹]_θθ` in rad², `None` where the information is singular.
    fn bound(&self, t: &Trial) -> Option<f64> {
        fisher_information(&self.geometry, &t.scenario, &t.schedule).ok()?.theta_bound().ok()
    }
}

/// `(signed error in degrees, seconds)` per estimator, and the bound.
type TrialOutput = (Vec<(f64, f64)>, Option<f64>);

fn point_setup(cfg: &ExperimentConfig, value: f64) -> (f64, usize) {
    match cfg.sweep_param {
        SweepParam::TxPowerDbm => (value, cfg.num_slots),
        SweepParam::NumSlots => (cfg.tx_power_dbm, value as usize),
    }
}

fn mae_rmse(errors_deg: &[f64]) -> (f64, f64) {
    let n = errors_deg.len() as f64;
    let mae = errors_deg.iter().map(|e| e.abs()).sum::<f64>() / n;
    let rmse = (errors_deg.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    (mae, rmse)
}

/// MAE / RMSE sweep over power or slot count. Trials run in parallel and
/// are reduced in trial order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, BenchError> {
    cfg.validate()?;
    let est = Estimators::new(cfg)?;
    let estimators: Vec<Method> = cfg.methods.iter().copied().filter(|&m| m != Method::Scrlb).collect();
    let mut result = SweepResult::default();
    for &value in &cfg.sweep {
        let (p_dbm, l) = point_setup(cfg, value);
        let per_trial: Vec<TrialOutput> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let trial = draw_trial(cfg, &est.geometry, p_dbm, l, t)?;
                let mut out = Vec::with_capacity(estimators.len());
                for &m in &estimators {
                    let start = Instant::now();
                    let theta_hat = est.estimate(m, &trial)?;
                    out.push(((theta_hat - trial.theta).to_degrees(), start.elapsed().as_secs_f64()));
                }
                let bound = cfg.methods.contains(&Method::Scrlb).then(|| est.bound(&trial)).flatten();
                Ok((out, bound))
            })
            .collect::<Result<_, BenchError>>()?;
        for m in cfg.methods.iter().copied() {
            let row = |mae, rmse, runtime| SweepRow {
                method: m,
                sweep_param: cfg.sweep_param,
                sweep_value: value,
                trials: cfg.trials,
                mae_deg: mae,
                rmse_deg: rmse,
                mean_runtime_s: runtime,
                seed: cfg.seed,
            };
            if m == Method::Scrlb {
                let bounds: Option<Vec<f64>> = per_trial.iter().map(|(_, b)| *b).collect();
                let scrlb = bounds.map(|b| (b.iter().sum::<f64>() / b.len() as f64).sqrt().to_degrees());
                result.rows.push(row(scrlb, scrlb, None));
                result.errors_deg.push(Vec::new());
                continue;
            }
            let k = estimators.iter().position(|&e| e == m).expect("estimator listed");
            let errors: Vec<f64> = per_trial.iter().map(|(o, _)| o[k].0).collect();
            let runtime = per_trial.iter().map(|(o, _)| o[k].1).sum::<f64>() / cfg.trials as f64;
            let (mae, rmse) = mae_rmse(&errors);
            result.rows.push(row(Some(mae), Some(rmse), Some(runtime)));
            result.errors_deg.push(errors);
        }
    }
    Ok(result)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-estimate wall clock, sequential. Each trial's time is the median of
/// `repeats` identical calls; the row reports the mean of those medians.
pub fn run_runtime(cfg: &ExperimentConfig) -> Result<SweepResult, BenchError> {
    cfg.validate()?;
    let est = Estimators::new(cfg)?;
    let mut result = SweepResult::default();
    for &value in &cfg.sweep {
        let (p_dbm, l) = point_setup(cfg, value);
        let trials = (0..cfg.trials).map(|t| draw_trial(cfg, &est.geometry, p_dbm, l, t)).collect::<Result<Vec<_>, _>>()?;
        for m in cfg.methods.iter().copied() {
            let mut errors = Vec::with_capacity(trials.len());
            let mut time_sum = 0.0;
            let mut bounds = Some(Vec::new());
            for trial in &trials {
                let mut times = Vec::with_capacity(cfg.repeats);
                if m == Method::Scrlb {
                    match (bounds.as_mut(), est.bound(trial)) {
                        (Some(v), Some(b)) => v.push(b),
                        _ => bounds = None,
                    }
                    for _ in 0..cfg.repeats {
                        let start = Instant::now();
                        std::hint::black_box(est.bound(trial));
                        times.push(start.elapsed().as_secs_f64());
                    }
                } else {
                    let mut theta_hat = 0.0;
                    for _ in 0..cfg.repeats {
                        let start = Instant::now();
                        theta_hat = std::hint::black_box(est.estimate(m, trial)?);
                        times.push(start.elapsed().as_secs_f64());
                    }
                    errors.push((theta_hat - trial.theta).to_degrees());
                }
                time_sum += median(&mut times);
            }
            let (mae, rmse) = if m == Method::Scrlb {
                let s = bounds.map(|b| (b.iter().sum::<f64>() / b.len() as f64).sqrt().to_degrees());
                (s, s)
            } else {
                let (a, r) = mae_rmse(&errors);
                (Some(a), Some(r))
            };
            result.rows.push(SweepRow {
                method: m,
                sweep_param: cfg.sweep_param,
                sweep_value: value,
                trials: cfg.trials,
                mae_deg: mae,
                rmse_deg: rmse,
                mean_runtime_s: Some(time_sum / cfg.trials as f64),
                seed: cfg.seed,
            });
            result.errors_deg.push(errors);
        }
    }
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub curve_path: PathBuf,
    pub model: TrainedModel,
    pub history: Vec<EpochStats>,
    /// Test MAE after each epoch.
    pub test_mae: Vec<f64>,
    pub untrained_mae: f64,
    /// MAE of always answering π/4 on the same test set.
    pub constant_mae: f64,
}

/// Generates the dataset, trains, and writes `model_<mode>.json` and
/// `train_<mode>.csv` into `out_dir`.
pub fn run_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutcome, BenchError> {
    cfg.validate()?;
    let g = cfg.geometry()?;
    let spec = cfg.dataset_spec();
    let config = cfg.train_config();
    let data = generate_dataset(&spec, &g, &LinkBudget::default(), cfg.seed)?;
    let (train_set, test_set) = data.split(spec.num_test, cfg.seed)?;
    let mut model = TrainedModel::initialise(&g, train_set.samples(), &config)?;
    let untrained_mae = evaluate_mae(&model, &test_set)?;
    let truth: Vec<f64> = test_set.truth().iter().map(|t| t.theta).collect();
    let constant_mae = mae_degrees(&vec![FRAC_PI_2 / 2.0; truth.len()], &truth)?;
    let mut test_mae = Vec::with_capacity(config.epochs);
    let history = fit_with(&mut model, train_set.samples(), &config, |m, _| {
        test_mae.push(evaluate_mae(m, &test_set)?);
        Ok(())
    })?;
    fs::create_dir_all(out_dir)?;
    let model_path = out_dir.join(format!("model_{}.json", config.mode));
    let curve_path = out_dir.join(format!("train_{}.csv", config.mode));
    save_model(&model, &model_path)?;
    write_train_curve(&curve_path, &history, &test_mae)?;
    Ok(TrainOutcome { model_path, curve_path, model, history, test_mae, untrained_mae, constant_mae })
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Sweep(SweepResult),
    Train(Box<TrainOutcome>),
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, BenchError> {
    match cfg.kind {
        ExperimentKind::MaeVsPower | ExperimentKind::MaeVsSlots | ExperimentKind::ScrlbCurve => {
            run_sweep(cfg).map(Outcome::Sweep)
        }
        ExperimentKind::Runtime => run_runtime(cfg).map(Outcome::Sweep),
        ExperimentKind::Train => run_train(cfg, &cfg.out_dir).map(|t| Outcome::Train(Box::new(t))),
    }
}
