use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svg::{Mark, Plot, Series};
use super::{check_grid, ensure_dir, linspace, write_metadata};
use crate::engine::{run_ensemble, SimConfig, SuccessRule};
use crate::env::{EnvDistribution, SeedSpec};
use crate::error::Result;
use crate::fitness::{FamilyKind, ModelSpec};

/// Persistence probability against initial density for mate limitation
/// with log-normal `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Plan {
    pub sigmas: Vec<f64>,
    pub log_mean: f64,
    pub h: f64,
    pub x0: Vec<f64>,
    pub t_max: u64,
    pub replicates: u64,
    /// A run counts as persisting when its final density exceeds this.
    pub success_level: f64,
    pub master_seed: u64,
}

impl Default for Fig1Plan {
    fn default() -> Self {
        Self {
            sigmas: vec![0.05, 0.5, 1.0],
            log_mean: 0.1,
            h: 10.0,
            x0: linspace(1.0, 300.0, 25),
            t_max: 1000,
            replicates: 2000,
            success_level: 100.0,
            master_seed: 1,
        }
    }
}

impl Fig1Plan {
    pub fn model(&self, sigma: f64) -> Result<ModelSpec> {
        ModelSpec::new(
            FamilyKind::MateLimitation,
            &[
                ("lambda", EnvDistribution::lognormal(self.log_mean, sigma)?),
                ("h", EnvDistribution::constant(self.h)?),
            ],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig1Row {
    pub sigma: f64,
    pub x0: f64,
    pub p_persist: f64,
    pub se: f64,
}

/// Every initial density reuses the same replicate streams, so each curve is
/// computed under common random numbers.
pub fn run_fig1(plan: &Fig1Plan) -> Result<Vec<Fig1Row>> {
    check_grid("x0", &plan.x0)?;
    check_grid("sigma", &plan.sigmas)?;
    let config = SimConfig {
        t_max: plan.t_max,
        ..Default::default()
    };
    config.validate()?;
    let rule = SuccessRule::FinalAbove {
        level: plan.success_level,
    };
    let mut rows = Vec::new();
    for (k, &sigma) in plan.sigmas.iter().enumerate() {
        let model = plan.model(sigma)?;
        let seed = SeedSpec::new(plan.master_seed).derive(k as u64);
        let curve: Vec<Fig1Row> = plan
            .x0
            .par_iter()
            .map(|&x0| {
                let r = run_ensemble(&model, &config, x0, plan.replicates, seed, rule)?;
                Ok(Fig1Row {
                    sigma,
                    x0,
                    p_persist: r.persistence_fraction,
                    se: r.standard_error,
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(curve);
    }
    Ok(rows)
}

/// Writes `fig1.csv`, `fig1.svg` and `fig1.json` into `dir`.
pub fn write_fig1(dir: &Path, plan: &Fig1Plan, rows: &[Fig1Row]) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let csv_path = dir.join("fig1.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&csv_path)?));
    w.write_record(["sigma", "x0", "p_persist", "se"])?;
    for r in rows {
        w.write_record([r.sigma.to_string(), r.x0.to_string(), r.p_persist.to_string(), r.se.to_string()])?;
    }
    w.flush()?;

    let series = plan
        .sigmas
        .iter()
        .map(|&s| Series {
            label: format!("sigma = {s}"),
            points: rows.iter().filter(|r| r.sigma == s).map(|r| (r.x0, r.p_persist)).collect(),
            mark: Mark::Line,
        })
        .collect();
    let plot = Plot {
        title: format!("P[final density > {}]", plan.success_level),
        x_label: "initial density".into(),
        y_label: "fraction persisting".into(),
        log_y: false,
        series,
    };
    let svg_path = dir.join("fig1.svg");
    std::fs::write(&svg_path, plot.render())?;
    let mut files = vec![csv_path, svg_path];
    let notes = vec![format!(
        "success: final density > {} at t = {}; common random numbers across x0",
        plan.success_level, plan.t_max
    )];
    files.push(write_metadata(dir, "fig1", plan, notes, &files)?);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(sigmas: Vec<f64>, x0: Vec<f64>) -> Fig1Plan {
        Fig1Plan {
            sigmas,
            x0,
            replicates: 200,
            ..Default::default()
        }
    }

    #[test]
    fn near_deterministic_step() {
        // threshold of x -> lambda x^2 / (h + x) is h / (lambda - 1)
        let x_star = 10.0 / (0.1f64.exp() - 1.0);
        let rows = run_fig1(&plan(vec![1e-6], vec![0.0, 90.0, x_star - 0.5, x_star + 0.5, 100.0])).unwrap();
        let p: Vec<f64> = rows.iter().map(|r| r.p_persist).collect();
        assert_eq!(p, vec![0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn noise_helps_small_populations() {
        let mut pl = plan(vec![0.05, 0.5], vec![20.0]);
        pl.replicates = 2000;
        let rows = run_fig1(&pl).unwrap();
        let (lo, hi) = (rows[0], rows[1]);
        assert!(hi.p_persist - lo.p_persist > 4.0 * (hi.se.powi(2) + lo.se.powi(2)).sqrt());
    }

    #[test]
    fn writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let pl = plan(vec![0.5], vec![50.0, 150.0]);
        let rows = run_fig1(&pl).unwrap();
        let files = write_fig1(dir.path(), &pl, &rows).unwrap();
        assert_eq!(files.len(), 3);
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("sigma,x0,p_persist,se\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
