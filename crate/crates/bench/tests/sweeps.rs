//! Monte Carlo behaviour of the sweeps on the reference scenario.

use aodlab_bench::{run_runtime, run_sweep, ExperimentConfig, ExperimentKind, Method, SweepResult};

fn abs_errors(r: &SweepResult, m: Method, v: f64) -> Vec<f64> {
    r.row(m, v).unwrap().1.iter().map(|e| e.abs()).collect()
}

/// Standard error of the mean of `a − b` over paired trials.
fn paired_se(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn dml_improves_with_power_and_beats_sml_at_low_power() {
    let cfg = ExperimentConfig {
        methods: vec![Method::Dml, Method::Sml],
        sweep: vec![5.0, 30.0],
        trials: 500,
        ..ExperimentConfig::defaults(ExperimentKind::MaeVsPower)
    };
    let r = run_sweep(&cfg).unwrap();
    let mae = |m, v| r.row(m, v).unwrap().0.mae_deg.unwrap();
    assert!(mae(Method::Dml, 30.0) < mae(Method::Dml, 5.0));
    assert!(mae(Method::Dml, 5.0) <= mae(Method::Sml, 5.0), "dml {} sml {}", mae(Method::Dml, 5.0), mae(Method::Sml, 5.0));
}

#[test]
fn sixteen_observations_suffice_and_more_slots_do_not_hurt() {
    let cfg = ExperimentConfig {
        methods: vec![Method::Dml],
        trials: 500,
        ..ExperimentConfig::defaults(ExperimentKind::MaeVsSlots)
    };
    let r = run_sweep(&cfg).unwrap();
    assert!(r.row(Method::Dml, 4.0).unwrap().0.mae_deg.unwrap() < 1.0);
    for w in cfg.sweep.windows(2) {
        let (a, b) = (abs_errors(&r, Method::Dml, w[0]), abs_errors(&r, Method::Dml, w[1]));
        assert!(mean(&b) <= mean(&a) + 2.0 * paired_se(&b, &a), "L {} -> {}: {} -> {}", w[0], w[1], mean(&a), mean(&b));
    }
}

#[test]
fn esprit_is_faster_than_music() {
    let cfg = ExperimentConfig {
        methods: vec![Method::Esprit, Method::Music],
        trials: 5,
        ..ExperimentConfig::defaults(ExperimentKind::Runtime)
    };
    let r = run_runtime(&cfg).unwrap();
    let t = |m| r.row(m, 15.0).unwrap().0.mean_runtime_s.unwrap();
    assert!(t(Method::Esprit) > 0.0 && t(Method::Esprit) < t(Method::Music));
}

#[test]
fn bound_is_finite_at_the_reference_angle() {
    let cfg = ExperimentConfig { sweep: vec![15.0], trials: 10, ..ExperimentConfig::defaults(ExperimentKind::ScrlbCurve) };
    let r = run_sweep(&cfg).unwrap();
    let b = r.rows[0].mae_deg.unwrap();
    assert!(b.is_finite() && b > 0.0);
}
