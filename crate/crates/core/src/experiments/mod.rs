//! Experiment runners behind the `allee` command line: persistence curves,
//! bifurcation tails and parameter sweeps, with CSV, SVG and metadata output.

mod fig1;
pub mod svg;
mod sweep;
mod tails;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub use fig1::{run_fig1, write_fig1, Fig1Plan, Fig1Row};
pub use sweep::{run_custom_sweep, write_sweep, SweepPlan, SweepRow};
pub use tails::{
    run_fig2, run_fig3, write_tails, Fig2Axis, Fig2Plan, Fig3Plan, TailPoint, TailSummary, TailTable,
};

/// `n` evenly spaced values from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| (lo * (n - 1 - i) as f64 + hi * i as f64) / (n - 1) as f64)
            .collect(),
    }
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

pub(crate) fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Validation(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Validation(format!("{name} grid must be finite and sorted")));
    }
    Ok(())
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Sidecar describing a run: experiment id, the resolved plan and notes.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a, P: Serialize> {
    pub experiment: &'a str,
    pub version: &'a str,
    pub plan: &'a P,
    pub notes: Vec<String>,
    pub files: Vec<String>,
}

pub fn write_metadata<P: Serialize>(
    dir: &Path,
    experiment: &str,
    plan: &P,
    notes: Vec<String>,
    files: &[PathBuf],
) -> Result<PathBuf> {
    let meta = Metadata {
        experiment,
        version: env!("CARGO_PKG_VERSION"),
        plan,
        notes,
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let path = dir.join(format!("{experiment}.json"));
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        let g = logspace(1e-2, 1e2, 5);
        assert!((g[2] - 1.0).abs() < 1e-12 && (g[4] - 100.0).abs() < 1e-9);
        assert!(check_grid("x", &[]).is_err());
        assert!(check_grid("x", &[2.0, 1.0]).is_err());
        assert!(check_grid("x", &[1.0, 1.0, 2.0]).is_ok());
    }
}
