use std::process::Command;

use allee_core::engine::{run_ensemble, with_threads, SimConfig, SuccessRule};
use allee_core::experiments::{run_fig3, write_tails, Fig3Plan};
use allee_core::{ModelSpec, SeedSpec};

fn figure_bytes(id: &str, extra: &[&str]) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_allee"))
        .args(["figure", "--id", id, "--seed", "9"])
        .args(extra)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let mut files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn figure_csvs_are_byte_identical() {
    for (id, extra) in [
        ("1", &["--replicates", "100", "--x0", "20,95,150"][..]),
        ("2", &["--t-max", "1500"][..]),
        ("3", &["--t-max", "1500"][..]),
    ] {
        let a = figure_bytes(id, extra);
        let b = figure_bytes(id, extra);
        assert!(!a.is_empty());
        assert_eq!(a, b, "figure {id}");
    }
}

#[test]
fn ensemble_independent_of_thread_count() {
    let model = ModelSpec::parse("mate-limitation", &[("lambda", "lognormal:0.1,0.5"), ("h", "const:10")]).unwrap();
    let cfg = SimConfig::default();
    let run = || run_ensemble(&model, &cfg, 95.0, 500, SeedSpec::new(4), SuccessRule::FinalAbove { level: 100.0 }).unwrap();
    let one = with_threads(1, run).unwrap();
    let eight = with_threads(8, run).unwrap();
    assert_eq!(one, eight);
}

#[test]
fn tail_files_independent_of_thread_count() {
    let plan = Fig3Plan {
        t_max: 1200,
        tail: 100,
        ..Default::default()
    };
    let write = |threads| {
        let dir = tempfile::tempdir().unwrap();
        let table = with_threads(threads, || run_fig3(&plan)).unwrap().unwrap();
        write_tails(dir.path(), &plan, &table, vec![]).unwrap();
        (
            std::fs::read(dir.path().join("fig3_tails.csv")).unwrap(),
            std::fs::read(dir.path().join("fig3_summary.csv")).unwrap(),
        )
    };
    assert_eq!(write(1), write(8));
}
