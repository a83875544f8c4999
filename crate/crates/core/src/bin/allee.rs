use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use allee_core::criteria::{classify, EstimateOptions, GeneralOptions};
use allee_core::engine::{run_ensemble, run_trajectory, with_threads, RecordMode, SimConfig, SuccessRule};
use allee_core::experiments::{
    self, linspace, run_custom_sweep, run_fig1, run_fig2, run_fig3, write_fig1, write_metadata, write_sweep,
    write_tails, Fig1Plan, Fig2Axis, Fig2Plan, Fig3Plan, SweepPlan,
};
use allee_core::io;
use allee_core::skeleton::{classify_skeleton, ChainGraph, SkeletonMap};
use allee_core::{Error, ModelSpec, Result, SeedSpec};

/// Stochastic single-species population models with Allee effects.
#[derive(Parser, Debug)]
#[command(name = "allee", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "allee-out")]
    out: PathBuf,
    /// Fitness family, e.g. `ricker` or `mate-limitation`.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Parameter binding `name=literal`, e.g. `lambda=lognormal:0.1,0.5`. Repeatable.
    #[arg(long = "param", global = true)]
    params: Vec<String>,
    #[arg(long, global = true)]
    t_max: Option<u64>,
    #[arg(long, global = true)]
    replicates: Option<u64>,
    /// Comma-separated initial densities.
    #[arg(long, global = true, value_delimiter = ',')]
    x0: Vec<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory per initial density.
    Simulate {
        /// `full`, `measure` or `tail:N`.
        #[arg(long, default_value = "full")]
        record: String,
        #[arg(long, default_value_t = 0)]
        burn_in: u64,
    },
    /// Run an ensemble per initial density.
    Ensemble {
        /// `not-extinct`, `interior` or `above:LEVEL`.
        #[arg(long, default_value = "not-extinct")]
        rule: String,
        #[arg(long, default_value_t = 0)]
        burn_in: u64,
    },
    /// Evaluate the persistence criteria and print the regime.
    Classify {
        /// Tail cut-off used by the mixed case.
        #[arg(long)]
        x_c: Option<f64>,
        #[arg(long, default_value_t = allee_core::criteria::DEFAULT_DRAWS)]
        draws: u64,
        #[arg(long)]
        force_monte_carlo: bool,
    },
    /// Fixed points, critical point and label of the deterministic skeleton.
    Skeleton {
        #[arg(long)]
        x_max: Option<f64>,
    },
    /// Epsilon-chain reachability of a neighbourhood of 0.
    Chain {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        x_max: Option<f64>,
    },
    /// Move one parameter along a grid; regime and ensemble per point.
    Sweep {
        #[arg(long)]
        sweep_param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Vec<f64>,
        #[arg(long, default_value = "not-extinct")]
        rule: String,
    },
    /// Reproduce one of the three figure experiments.
    Figure {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        id: u8,
        /// Full-scale replicate and initial-condition counts.
        #[arg(long)]
        full: bool,
        /// Sweep axis for figure 2: `eps` or `h`.
        #[arg(long, default_value = "eps")]
        axis: String,
    },
}

fn model_from(g: &Global) -> Result<ModelSpec> {
    let family = g
        .model
        .as_deref()
        .ok_or_else(|| Error::Validation("--model is required for this command".into()))?;
    let pairs = g
        .params
        .iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Validation(format!("--param expects name=literal, got {p:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    ModelSpec::parse(family, &pairs)
}

fn x0_from(g: &Global) -> Result<Vec<f64>> {
    if g.x0.is_empty() {
        return Err(Error::Validation("--x0 is required for this command".into()));
    }
    Ok(g.x0.clone())
}

fn parse_record(s: &str) -> Result<RecordMode> {
    match s {
        "full" => Ok(RecordMode::Full),
        "measure" => Ok(RecordMode::MeasureOnly),
        _ => s
            .strip_prefix("tail:")
            .and_then(|n| n.parse().ok())
            .map(RecordMode::Tail)
            .ok_or_else(|| Error::Validation(format!("unknown record mode {s:?}"))),
    }
}

fn parse_rule(s: &str) -> Result<SuccessRule> {
    match s {
        "not-extinct" => Ok(SuccessRule::NotExtinct),
        "interior" => Ok(SuccessRule::InteriorOnly),
        _ => s
            .strip_prefix("above:")
            .and_then(|n| n.parse().ok())
            .map(|level| SuccessRule::FinalAbove { level })
            .ok_or_else(|| Error::Validation(format!("unknown success rule {s:?}"))),
    }
}

fn sim_config(g: &Global, burn_in: u64, record: RecordMode) -> Result<SimConfig> {
    let cfg = SimConfig {
        t_max: g.t_max.unwrap_or(SimConfig::default().t_max),
        burn_in,
        record,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    model: Option<&'a ModelSpec>,
    master_seed: u64,
    x0: &'a [f64],
    settings: T,
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let out = g.out.as_path();
    let seed = g.seed.unwrap_or(0);
    match &cli.command {
        Command::Simulate { record, burn_in } => {
            let model = model_from(g)?;
            let x0 = x0_from(g)?;
            let cfg = sim_config(g, *burn_in, parse_record(record)?)?;
            fs::create_dir_all(out)?;
            let mut files = Vec::new();
            for (i, &x) in x0.iter().enumerate() {
                let mut stream = SeedSpec::new(seed).stream(i as u64);
                let tr = run_trajectory(&model, &cfg, x, &mut stream)?;
                println!("x0={x} fate={} t_hit={:?} final_x={}", tr.fate.label(), tr.fate.t_hit(), tr.final_x);
                let path = out.join(format!("trajectory_{i}.csv"));
                match cfg.record {
                    RecordMode::MeasureOnly => io::write_measure(create(&path)?, tr.measure.as_ref().expect("measure"))?,
                    _ => io::write_trajectory(create(&path)?, &tr)?,
                }
                files.push(path);
            }
            let meta = Resolved { model: Some(&model), master_seed: seed, x0: &x0, settings: cfg };
            write_metadata(out, "simulate", &meta, vec![], &files)?;
        }
        Command::Ensemble { rule, burn_in } => {
            let model = model_from(g)?;
            let x0 = x0_from(g)?;
            let cfg = sim_config(g, *burn_in, RecordMode::MeasureOnly)?;
            let rule = parse_rule(rule)?;
            let n = g.replicates.unwrap_or(1000);
            fs::create_dir_all(out)?;
            let mut files = Vec::new();
            for (i, &x) in x0.iter().enumerate() {
                let r = run_ensemble(&model, &cfg, x, n, SeedSpec::new(seed), rule)?;
                println!(
                    "x0={x} n={} extinct={} escaped={} interior={} p_persist={} se={}",
                    r.n_replicates, r.extinct, r.escaped, r.interior, r.persistence_fraction, r.standard_error
                );
                let path = out.join(format!("ensemble_{i}.csv"));
                io::write_ensemble(create(&path)?, &r.replicates)?;
                files.push(path);
                let path = out.join(format!("measure_{i}.csv"));
                io::write_measure(create(&path)?, &r.measure)?;
                files.push(path);
            }
            let meta = Resolved { model: Some(&model), master_seed: seed, x0: &x0, settings: (cfg, rule, n) };
            write_metadata(out, "ensemble", &meta, vec!["measure_*.csv pools interior replicates".into()], &files)?;
        }
        Command::Classify { x_c, draws, force_monte_carlo } => {
            let model = model_from(g)?;
            let opts = GeneralOptions {
                estimate: EstimateOptions { n: *draws, seed: SeedSpec::new(seed), force_monte_carlo: *force_monte_carlo },
                x_c: *x_c,
                ..Default::default()
            };
            let report = classify(&model, &opts)?;
            print!("{report}");
            println!("{}", report.record_line());
            fs::create_dir_all(out)?;
            let path = out.join("classify.json");
            fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
            let meta = Resolved { model: Some(&model), master_seed: seed, x0: &[], settings: opts };
            write_metadata(out, "classify_config", &meta, vec![], &[path])?;
        }
        Command::Skeleton { x_max } => {
            let model = model_from(g)?;
            let map = match x_max {
                Some(x) => SkeletonMap::with_domain(&model, *x)?,
                None => SkeletonMap::new(&model),
            };
            let sk = classify_skeleton(&map)?;
            println!("label: {}", sk.label);
            println!("fixed points: {:?}", sk.fixed_points);
            println!("M: {:?}  C: {:?}  F(F(C)): {:?}  borderline: {}", sk.m, sk.c, sk.ffc, sk.borderline);
            for w in &sk.warnings {
                println!("warning: {w}");
            }
            fs::create_dir_all(out)?;
            let path = out.join("skeleton.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["quantity", "value"])?;
            w.write_record(["label", sk.label.as_str()])?;
            for p in &sk.fixed_points {
                w.write_record(["fixed_point", &p.to_string()])?;
            }
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record(["m", &opt(sk.m)])?;
            w.write_record(["c", &opt(sk.c)])?;
            w.write_record(["ffc", &opt(sk.ffc)])?;
            w.write_record(["borderline", &sk.borderline.to_string()])?;
            w.write_record(["x_max", &sk.x_max.to_string()])?;
            w.flush()?;
            let meta = Resolved { model: Some(&model), master_seed: seed, x0: &[], settings: map.x_max() };
            write_metadata(out, "skeleton", &meta, sk.warnings.clone(), &[path])?;
        }
        Command::Chain { eps, target, delta, x_max } => {
            let model = model_from(g)?;
            let x0 = x0_from(g)?;
            let map = match x_max {
                Some(x) => SkeletonMap::with_domain(&model, *x)?,
                None => SkeletonMap::new(&model),
            };
            let target = target.unwrap_or(*eps);
            let graph = ChainGraph::build(&map, *eps, *delta)?;
            fs::create_dir_all(out)?;
            let path = out.join("chain.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["x0", "eps", "delta", "target", "reachable"])?;
            for &x in &x0 {
                let hit = graph.reachable_to_zero(x, target);
                println!("x0={x} eps={eps} reachable={hit}");
                w.write_record([x.to_string(), eps.to_string(), graph.delta().to_string(), target.to_string(), hit.to_string()])?;
            }
            w.flush()?;
            let meta = Resolved { model: Some(&model), master_seed: seed, x0: &x0, settings: (eps, graph.delta(), target, map.x_max()) };
            write_metadata(out, "chain", &meta, vec![], &[path])?;
        }
        Command::Sweep { sweep_param, grid, rule } => {
            let model = model_from(g)?;
            let mut plan = SweepPlan::new(model, sweep_param, grid.clone());
            plan.master_seed = seed;
            plan.rule = parse_rule(rule)?;
            if let Some(n) = g.replicates {
                plan.replicates = n;
            }
            if let Some(t) = g.t_max {
                plan.config.t_max = t;
            }
            if let Some(&x) = g.x0.first() {
                plan.x0 = x;
            }
            let rows = run_custom_sweep(&plan)?;
            for r in &rows {
                println!("{}={} regime={} p_persist={}", plan.param, r.sweep_value, r.report.regime, r.p_persist);
            }
            write_sweep(out, &plan, &rows)?;
        }
        Command::Figure { id, full, axis } => match id {
            1 => {
                let mut plan = Fig1Plan::default();
                if *full {
                    plan.replicates = 10_000;
                }
                if let Some(s) = g.seed {
                    plan.master_seed = s;
                }
                if let Some(n) = g.replicates {
                    plan.replicates = n;
                }
                if let Some(t) = g.t_max {
                    plan.t_max = t;
                }
                if !g.x0.is_empty() {
                    plan.x0 = g.x0.clone();
                }
                let rows = run_fig1(&plan)?;
                let files = write_fig1(out, &plan, &rows)?;
                println!("fig1: {} rows -> {}", rows.len(), files[0].display());
            }
            2 => {
                let mut plan = Fig2Plan::default();
                plan.axis = match axis.as_str() {
                    "eps" => Fig2Axis::Eps,
                    "h" => {
                        plan.values = linspace(1.0, 20.0, 16);
                        Fig2Axis::H
                    }
                    _ => return Err(Error::Validation(format!("unknown axis {axis:?}"))),
                };
                if *full {
                    plan.x0 = experiments::logspace(1e-2, 5.0, 100);
                }
                if let Some(s) = g.seed {
                    plan.master_seed = s;
                }
                if let Some(t) = g.t_max {
                    plan.t_max = t;
                }
                if !g.x0.is_empty() {
                    plan.x0 = g.x0.clone();
                }
                let table = run_fig2(&plan)?;
                let notes = vec![
                    format!("h = {} (default, same as fig1)", plan.h),
                    format!("{} log-spaced initial conditions", plan.x0.len()),
                ];
                let files = write_tails(out, &plan, &table, notes)?;
                println!("fig2: {} sweep points -> {}", table.points.len(), files[1].display());
            }
            _ => {
                let mut plan = Fig3Plan::default();
                if *full {
                    plan.x0 = experiments::logspace(1e-3, 2.0, 100);
                }
                if let Some(s) = g.seed {
                    plan.master_seed = s;
                }
                if let Some(t) = g.t_max {
                    plan.t_max = t;
                }
                if !g.x0.is_empty() {
                    plan.x0 = g.x0.clone();
                }
                let table = run_fig3(&plan)?;
                for s in table.summaries() {
                    println!(
                        "p_bar={} skeleton={} persisting={}/{} consistent={}",
                        s.sweep_value,
                        s.skeleton_label.map(|l| l.as_str()).unwrap_or(""),
                        s.persisting,
                        s.n,
                        s.consistent.unwrap_or(false)
                    );
                }
                let notes = vec![format!("{} log-spaced initial conditions", plan.x0.len())];
                let files = write_tails(out, &plan, &table, notes)?;
                println!("fig3: {} sweep points -> {}", table.points.len(), files[1].display());
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.global.threads;
    let result = match threads {
        Some(t) => with_threads(t, || run(cli)).and_then(|r| r),
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
