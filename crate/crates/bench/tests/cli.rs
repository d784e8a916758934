use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aodlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aodlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, format!("[experiment]\n{body}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_ok(args: &[&str]) -> Output {
    let out = aodlab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn print_defaults_round_trips() {
    for kind in ["mae_vs_power", "mae_vs_slots", "runtime", "scrlb_curve", "train"] {
        let out = run_ok(&[kind, "--print-defaults"]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("[experiment]") && text.contains(&format!("kind = {kind}")));
        let parsed = aodlab_bench::ExperimentConfig::parse(kind.parse().unwrap(), &text).unwrap();
        assert_eq!(parsed, aodlab_bench::ExperimentConfig::defaults(kind.parse().unwrap()));
    }
}

#[test]
fn single_point_single_method_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "a.conf", "methods = dml\nsweep = 15\ntrials = 1\n");
    run_ok(&["mae_vs_power", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("mae_vs_power.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,sweep_param,sweep_value,trials,mae_deg,rmse_deg,mean_runtime_s,seed");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("dml,tx_power_dbm,15,1,"));

    let cfg = write_config(dir.path(), "b.conf", "methods = dml\nsweep = 4\ntrials = 2\n");
    run_ok(&["mae_vs_slots", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("mae_vs_slots.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("dml,num_slots,4,2,"));
}

#[test]
fn reruns_are_byte_identical_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.conf",
        "methods = dml, sml, dft, music, esprit, scrlb\nsweep = 0, 20\ntrials = 6\ntheta_deg = random\nrange_m = random\ngrid_points = 128\n",
    );
    let read = |sub: &str, seed: &str| {
        let out = dir.path().join(sub);
        run_ok(&["mae_vs_power", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timing", "--seed", seed]);
        fs::read(out.join("mae_vs_power.csv")).unwrap()
    };
    let (a, b, c) = (read("a", "3"), read("b", "3"), read("c", "4"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",,3")), "{text}");
}

#[test]
fn scrlb_curve_falls_with_power() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.conf", "sweep = 0, 10, 20, 30\ntrials = 20\n");
    let out = dir.path().join("o");
    run_ok(&["scrlb_curve", "--config", &cfg, "--out", out.to_str().unwrap(), "--plot"]);
    let csv = fs::read_to_string(out.join("scrlb_curve.csv")).unwrap();
    let values: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 4);
    assert!(values.iter().all(|v| v.is_finite() && *v > 0.0));
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    let svg = fs::read_to_string(out.join("scrlb_curve.svg")).unwrap();
    assert!(svg.contains("<polyline"));
}

#[test]
fn runtime_table_with_one_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.conf", "repeats = 1\n");
    let out = dir.path().join("o");
    run_ok(&["runtime", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("runtime.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    for line in csv.lines().skip(1) {
        let t: f64 = line.split(',').nth(6).unwrap().parse().unwrap();
        assert!(t > 0.0, "{line}");
    }
}

#[test]
fn training_is_reproducible_and_logs_every_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "train.conf",
        "num_thetas = 3\nnum_ranges = 2\nnum_beamformer_sets = 1\nnum_symbol_sets = 2\nnoise_draws = 2\nnum_test = 4\nepochs = 3\nbatch_size = 8\nhidden = 8\n",
    );
    let train = |sub: &str| {
        let out = dir.path().join(sub);
        run_ok(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
        (fs::read(out.join("model_dml.json")).unwrap(), fs::read_to_string(out.join("train_dml.csv")).unwrap())
    };
    let (m1, c1) = train("a");
    let (m2, c2) = train("b");
    assert_eq!(m1, m2);
    assert_eq!(c1, c2);
    assert_eq!(c1.lines().next().unwrap(), "epoch,mean_loss,mean_grad_norm,test_mae_deg");
    assert_eq!(c1.lines().count(), 1 + 3);

    // The trained file drives the nn_dml method.
    let model = dir.path().join("a/model_dml.json");
    let sweep = write_config(
        dir.path(),
        "nn.conf",
        &format!("methods = nn_dml\nsweep = 15\ntrials = 3\nmodel_dml = {}\n", model.display()),
    );
    run_ok(&["mae_vs_power", "--config", &sweep, "--out", dir.path().join("c").to_str().unwrap()]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(aodlab(&["bogus_experiment"]).status.code(), Some(2));
    assert_eq!(aodlab(&["mae_vs_power", "--config", "/nonexistent/file.conf"]).status.code(), Some(2));
    let bad = write_config(dir.path(), "bad.conf", "colour = blue\n");
    assert_eq!(aodlab(&["mae_vs_power", "--config", &bad, "--out", out]).status.code(), Some(2));
    let zero = write_config(dir.path(), "zero.conf", "trials = 0\n");
    assert_eq!(aodlab(&["mae_vs_power", "--config", &zero, "--out", out]).status.code(), Some(2));
    let nn = write_config(dir.path(), "nn.conf", "methods = nn_sml\ntrials = 1\n");
    assert_eq!(aodlab(&["mae_vs_power", "--config", &nn, "--out", out]).status.code(), Some(3));
    let missing = write_config(dir.path(), "m.conf", "methods = nn_dml\ntrials = 1\nmodel_dml = /nonexistent.json\n");
    assert_eq!(aodlab(&["mae_vs_power", "--config", &missing, "--out", out]).status.code(), Some(3));
}
