use std::path::Path;
use std::process::{Command, Output};

use allee_core::io::{read_ensemble, read_measure, read_trajectory};

fn allee(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_allee"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn classify_prints_text_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = allee(
        &["classify", "--model", "mate-limitation", "--param", "lambda=lognormal:0.1,0.5", "--param", "h=const:10"],
        dir.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("regime: conditional_persistence"));
    assert!(text.lines().any(|l| l.starts_with("regime=conditional_persistence ")));
    assert!(dir.path().join("classify.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_literal = allee(&["classify", "--model", "ricker", "--param", "r=wat:1", "--param", "a=const:1"], dir.path());
    assert_eq!(bad_literal.status.code(), Some(2));
    let unknown = allee(&["classify", "--model", "logistic"], dir.path());
    assert_eq!(unknown.status.code(), Some(2));
    let missing = allee(&["classify", "--model", "ricker", "--param", "r=const:1"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    let unsorted = allee(
        &["sweep", "--model", "ricker", "--param", "r=normal:0,1", "--param", "a=const:1", "--sweep-param", "r", "--grid", "0.2,0.1"],
        dir.path(),
    );
    assert_eq!(unsorted.status.code(), Some(2));
    let no_interior = allee(&["skeleton", "--model", "ricker", "--param", "r=const:1", "--param", "a=const:1"], dir.path());
    assert_eq!(no_interior.status.code(), Some(0));
}

#[test]
fn simulate_and_ensemble_outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--model", "ricker", "--param", "r=normal:0.5,1", "--param", "a=const:1", "--x0", "0.5,2", "--t-max", "200"];
    let mut args = vec!["simulate"];
    args.extend(common);
    assert!(allee(&args, dir.path()).status.success());
    let rows = read_trajectory(std::fs::File::open(dir.path().join("trajectory_1.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 201);
    assert_eq!(rows[0], (0, 2.0));

    let mut args = vec!["ensemble", "--replicates", "50"];
    args.extend(common);
    let o = allee(&args, dir.path());
    assert!(o.status.success());
    let recs = read_ensemble(std::fs::File::open(dir.path().join("ensemble_0.csv")).unwrap()).unwrap();
    assert_eq!(recs.len(), 50);
    let m = read_measure(std::fs::File::open(dir.path().join("measure_0.csv")).unwrap()).unwrap();
    let total: f64 = m.bins.iter().map(|b| b.2).sum::<f64>() + m.below_mass + m.above_mass;
    assert!((total - 1.0).abs() < 1e-9);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ensemble.json")).unwrap()).unwrap();
    assert_eq!(meta["plan"]["master_seed"], 0);
}

#[test]
fn skeleton_and_chain() {
    let dir = tempfile::tempdir().unwrap();
    let model = ["--model", "predator-saturation-ndd", "--param", "r=const:4", "--param", "a=const:4", "--param", "h=const:0.08333333333333333", "--param", "P=const:0.8"];
    let mut args = vec!["skeleton"];
    args.extend(model);
    let o = allee(&args, dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("label: positive_attractor"));
    let csv = std::fs::read_to_string(dir.path().join("skeleton.csv")).unwrap();
    assert!(csv.starts_with("quantity,value\nlabel,positive_attractor\n"));

    let mut args = vec!["chain", "--eps", "0.001", "--x0", "0.05,0.6"];
    args.extend(model);
    let o = allee(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("chain.csv")).unwrap();
    let verdicts: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(verdicts, ["true", "false"]);
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = allee(
        &[
            "sweep", "--model", "ricker", "--param", "r=normal:0,1", "--param", "a=const:1", "--sweep-param", "r",
            "--grid", "-0.2,0.2", "--replicates", "20",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["sweep_value", "regime", "criteria", "extinct", "escaped", "interior", "p_persist", "se"]
    );
    let regimes: Vec<String> = rdr.records().map(|r| r.unwrap()[1].to_string()).collect();
    assert_eq!(regimes, ["unconditional_extinction", "stochastic_persistence"]);
}

#[test]
fn figure_ids() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(allee(&["figure", "--id", "4"], dir.path()).status.code(), Some(2));
    let o = allee(&["figure", "--id", "2", "--t-max", "1500", "--x0", "0.5,3"], dir.path());
    assert!(o.status.success());
    for f in ["fig2_tails.csv", "fig2_summary.csv", "fig2.svg", "fig2.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let meta = std::fs::read_to_string(dir.path().join("fig2.json")).unwrap();
    assert!(meta.contains("\"h\": 10.0"));
}
