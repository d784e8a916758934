use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use aodlab_bench::config::{ExperimentConfig, ExperimentKind};
use aodlab_bench::experiments::{run, Outcome};
use aodlab_bench::output::{read_series, sweep_csv};
use aodlab_bench::plot::line_chart_svg;
use aodlab_bench::BenchError;
use clap::Parser;

/// Angle-of-departure estimation experiments.
#[derive(Debug, Parser)]
#[command(name = "aodlab", version)]
struct Cli {
    /// mae_vs_power | mae_vs_slots | runtime | scrlb_curve | train
    experiment: String,
    /// Config file; defaults apply to every key it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG chart next to the CSV.
    #[arg(long)]
    plot: bool,
    /// Leave the runtime column empty so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Print the default config for the experiment and exit.
    #[arg(long)]
    print_defaults: bool,
}

fn load(cli: &Cli, kind: ExperimentKind) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(kind, &text)?
        }
        None => ExperimentConfig::defaults(kind),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), BenchError> {
    let kind: ExperimentKind = cli.experiment.parse()?;
    if cli.print_defaults {
        print!("{}", ExperimentConfig::defaults(kind).to_text());
        return Ok(());
    }
    let cfg = load(cli, kind)?;
    match run(&cfg)? {
        Outcome::Sweep(result) => {
            fs::create_dir_all(&cfg.out_dir)?;
            let csv_path = cfg.out_dir.join(format!("{kind}.csv"));
            let text = sweep_csv(&result.rows, !cli.no_timing)?;
            fs::write(&csv_path, &text)?;
            print!("{text}");
            eprintln!("wrote {}", csv_path.display());
            if cli.plot {
                let (column, label) = if kind == ExperimentKind::Runtime && !cli.no_timing {
                    ("mean_runtime_s", "time per estimate (s)")
                } else {
                    ("mae_deg", "MAE (deg)")
                };
                let svg = line_chart_svg(&read_series(&text, column)?, cfg.sweep_param.name(), label);
                let svg_path = cfg.out_dir.join(format!("{kind}.svg"));
                fs::write(&svg_path, svg)?;
                eprintln!("wrote {}", svg_path.display());
            }
        }
        Outcome::Train(t) => {
            let last = t.history.last().map_or(f64::NAN, |e| e.mean_loss);
            println!("final mean loss      {last:e}");
            println!("test MAE untrained   {:.4} deg", t.untrained_mae);
            println!("test MAE trained     {:.4} deg", t.test_mae.last().copied().unwrap_or(f64::NAN));
            println!("test MAE constant    {:.4} deg", t.constant_mae);
            eprintln!("wrote {}", t.model_path.display());
            eprintln!("wrote {}", t.curve_path.display());
            if cli.plot {
                let pts: Vec<(String, f64, f64)> =
                    t.test_mae.iter().enumerate().map(|(e, &m)| ("test_mae".to_string(), e as f64, m)).collect();
                let svg_path = cfg.out_dir.join(format!("train_{}.svg", cfg.mode));
                fs::write(&svg_path, line_chart_svg(&pts, "epoch", "MAE (deg)"))?;
                eprintln!("wrote {}", svg_path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aodlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
