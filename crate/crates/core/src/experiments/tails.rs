use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svg::{Mark, Plot, Series};
use super::{check_grid, ensure_dir, linspace, logspace, write_metadata};
use crate::engine::{run_trajectory, Fate, RecordMode, SimConfig};
use crate::env::{EnvDistribution, SeedSpec};
use crate::error::{Error, Result};
use crate::fitness::{FamilyKind, ModelSpec};
use crate::skeleton::{classify_skeleton, SkeletonLabel, SkeletonMap};

/// Sweep axis for the mate-limitation tail experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fig2Axis {
    /// Half-width of the uniform law of `r`.
    Eps,
    /// Mate-finding constant `h` at fixed half-width.
    H,
}

/// Long-run tails of mate limitation with negative density dependence and
/// `r ~ Uniform(r_mid - eps, r_mid + eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Plan {
    pub axis: Fig2Axis,
    pub values: Vec<f64>,
    pub r_mid: f64,
    pub a: f64,
    /// Used when sweeping `eps`; 10 by default.
    pub h: f64,
    /// Used when sweeping `h`.
    pub eps: f64,
    pub x0: Vec<f64>,
    pub t_max: u64,
    pub tail: usize,
    pub master_seed: u64,
}

impl Default for Fig2Plan {
    fn default() -> Self {
        Self {
            axis: Fig2Axis::Eps,
            values: linspace(0.0, 4.4, 16),
            r_mid: 4.5,
            a: 1.0,
            h: 10.0,
            eps: 0.05,
            x0: logspace(1e-2, 5.0, 20),
            t_max: 10_000,
            tail: 1000,
            master_seed: 2,
        }
    }
}

impl Fig2Plan {
    pub fn model(&self, value: f64) -> Result<ModelSpec> {
        let (eps, h) = match self.axis {
            Fig2Axis::Eps => (value, self.h),
            Fig2Axis::H => (self.eps, value),
        };
        if eps < 0.0 {
            return Err(Error::Validation(format!("noise half-width must be >= 0, got {eps}")));
        }
        ModelSpec::new(
            FamilyKind::MateLimitationNdd,
            &[
                ("r", EnvDistribution::uniform(self.r_mid - eps, self.r_mid + eps)?),
                ("a", EnvDistribution::constant(self.a)?),
                ("h", EnvDistribution::constant(h)?),
            ],
        )
    }
}

/// Long-run tails of predator saturation with negative density dependence and
/// `P ~ Uniform(p_bar (1 - eps), p_bar (1 + eps))`, swept over `p_bar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Plan {
    pub p_bar: Vec<f64>,
    pub eps: f64,
    pub r: f64,
    pub a: f64,
    pub h: f64,
    pub x0: Vec<f64>,
    pub t_max: u64,
    pub tail: usize,
    pub master_seed: u64,
}

impl Default for Fig3Plan {
    fn default() -> Self {
        Self {
            p_bar: linspace(0.1, 1.6, 16),
            eps: 0.02,
            r: 4.0,
            a: 4.0,
            h: 1.0 / 12.0,
            x0: logspace(1e-3, 2.0, 20),
            t_max: 10_000,
            tail: 1000,
            master_seed: 3,
        }
    }
}

impl Fig3Plan {
    pub fn model(&self, p_bar: f64) -> Result<ModelSpec> {
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(Error::Validation(format!("eps must lie in [0, 1], got {}", self.eps)));
        }
        ModelSpec::new(
            FamilyKind::PredatorSaturationNdd,
            &[
                ("r", EnvDistribution::constant(self.r)?),
                ("a", EnvDistribution::constant(self.a)?),
                ("h", EnvDistribution::constant(self.h)?),
                ("P", EnvDistribution::uniform(p_bar * (1.0 - self.eps), p_bar * (1.0 + self.eps))?),
            ],
        )
    }
}

/// Fate counts and tail statistics at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub sweep_value: f64,
    pub n: usize,
    pub extinct: usize,
    pub escaped: usize,
    pub interior: usize,
    /// Share of recorded tail values below the extinction threshold.
    pub tail_zero_fraction: f64,
    /// Range of tail values at or above the threshold; `None` if there are none.
    pub tail_min: Option<f64>,
    pub tail_max: Option<f64>,
    /// Initial conditions whose whole tail stays at or above the threshold.
    pub persisting: usize,
    pub skeleton_label: Option<SkeletonLabel>,
    pub borderline: Option<bool>,
    /// Whether the skeleton label agrees with the simulated fates.
    pub consistent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPath {
    pub replicate: u64,
    pub t_start: u64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub summary: TailSummary,
    pub paths: Vec<TailPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailTable {
    pub experiment: String,
    pub sweep_name: String,
    pub points: Vec<TailPoint>,
}

impl TailTable {
    pub fn summaries(&self) -> impl Iterator<Item = &TailSummary> {
        self.points.iter().map(|p| &p.summary)
    }
}

fn tail_config(t_max: u64, tail: usize) -> Result<SimConfig> {
    let cfg = SimConfig {
        t_max,
        record: RecordMode::Tail(tail),
        continue_after_crossing: true,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run_point(
    model: &ModelSpec,
    cfg: &SimConfig,
    x0: &[f64],
    seed: SeedSpec,
    sweep_value: f64,
) -> Result<TailPoint> {
    let mut paths = Vec::with_capacity(x0.len());
    let (mut extinct, mut escaped, mut interior, mut persisting) = (0, 0, 0, 0);
    let (mut zeros, mut total) = (0usize, 0usize);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &x) in x0.iter().enumerate() {
        let mut stream = seed.stream(i as u64);
        let tr = run_trajectory(model, cfg, x, &mut stream)?;
        match tr.fate {
            Fate::Extinct { .. } => extinct += 1,
            Fate::EscapedHigh { .. } => escaped += 1,
            Fate::Interior => interior += 1,
        }
        let mut all_up = true;
        for &v in &tr.densities {
            total += 1;
            if v < cfg.ext_threshold {
                zeros += 1;
                all_up = false;
            } else {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if all_up {
            persisting += 1;
        }
        paths.push(TailPath {
            replicate: i as u64,
            t_start: tr.t_start,
            x: tr.densities,
        });
    }
    let summary = TailSummary {
        sweep_value,
        n: x0.len(),
        extinct,
        escaped,
        interior,
        tail_zero_fraction: zeros as f64 / total.max(1) as f64,
        tail_min: lo.is_finite().then_some(lo),
        tail_max: hi.is_finite().then_some(hi),
        persisting,
        skeleton_label: None,
        borderline: None,
        consistent: None,
    };
    Ok(TailPoint { summary, paths })
}

fn sweep<F>(values: &[f64], x0: &[f64], cfg: &SimConfig, master_seed: u64, model: F) -> Result<Vec<TailPoint>>
where
    F: Fn(f64) -> Result<ModelSpec> + Sync,
{
    check_grid("x0", x0)?;
    let root = SeedSpec::new(master_seed);
    values
        .par_iter()
        .enumerate()
        .map(|(k, &v)| run_point(&model(v)?, cfg, x0, root.derive(k as u64), v))
        .collect()
}

pub fn run_fig2(plan: &Fig2Plan) -> Result<TailTable> {
    check_grid("sweep", &plan.values)?;
    let cfg = tail_config(plan.t_max, plan.tail)?;
    let points = sweep(&plan.values, &plan.x0, &cfg, plan.master_seed, |v| plan.model(v))?;
    Ok(TailTable {
        experiment: "fig2".into(),
        sweep_name: match plan.axis {
            Fig2Axis::Eps => "eps".into(),
            Fig2Axis::H => "h".into(),
        },
        points,
    })
}

/// Persistence labels expect some initial condition to keep a positive tail;
/// extinction labels expect none to.
fn label_consistent(label: SkeletonLabel, s: &TailSummary) -> bool {
    match label {
        SkeletonLabel::GlobalPersistence | SkeletonLabel::PositiveAttractor => s.persisting > 0,
        SkeletonLabel::ExtinctionOnly | SkeletonLabel::EssentialExtinction => s.persisting == 0,
    }
}

pub fn run_fig3(plan: &Fig3Plan) -> Result<TailTable> {
    check_grid("p_bar", &plan.p_bar)?;
    let cfg = tail_config(plan.t_max, plan.tail)?;
    let mut points = sweep(&plan.p_bar, &plan.x0, &cfg, plan.master_seed, |v| plan.model(v))?;
    for p in &mut points {
        let model = plan.model(p.summary.sweep_value)?;
        let sk = classify_skeleton(&SkeletonMap::new(&model))?;
        p.summary.skeleton_label = Some(sk.label);
        p.summary.borderline = Some(sk.borderline);
        p.summary.consistent = Some(label_consistent(sk.label, &p.summary));
    }
    Ok(TailTable {
        experiment: "fig3".into(),
        sweep_name: "p_bar".into(),
        points,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `<id>_tails.csv`, `<id>_summary.csv`, `<id>.svg` and `<id>.json`.
pub fn write_tails<P: Serialize>(dir: &Path, plan: &P, table: &TailTable, notes: Vec<String>) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let id = table.experiment.as_str();
    let tails_path = dir.join(format!("{id}_tails.csv"));
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&tails_path)?));
    w.write_record(["sweep_value", "replicate", "t", "x"])?;
    for p in &table.points {
        let v = p.summary.sweep_value.to_string();
        for path in &p.paths {
            let rep = path.replicate.to_string();
            for (j, x) in path.x.iter().enumerate() {
                w.write_record([v.as_str(), rep.as_str(), &(path.t_start + j as u64).to_string(), &x.to_string()])?;
            }
        }
    }
    w.flush()?;

    let with_skeleton = table.summaries().any(|s| s.skeleton_label.is_some());
    let summary_path = dir.join(format!("{id}_summary.csv"));
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&summary_path)?));
    let mut header = vec![
        "sweep_value",
        "n",
        "extinct",
        "escaped",
        "interior",
        "persisting",
        "tail_zero_fraction",
        "tail_min",
        "tail_max",
    ];
    if with_skeleton {
        header.extend(["skeleton_label", "borderline", "consistent"]);
    }
    w.write_record(&header)?;
    for s in table.summaries() {
        let mut row = vec![
            s.sweep_value.to_string(),
            s.n.to_string(),
            s.extinct.to_string(),
            s.escaped.to_string(),
            s.interior.to_string(),
            s.persisting.to_string(),
            s.tail_zero_fraction.to_string(),
            opt(s.tail_min),
            opt(s.tail_max),
        ];
        if with_skeleton {
            row.push(s.skeleton_label.map(|l| l.as_str().to_string()).unwrap_or_default());
            row.push(s.borderline.map(|b| b.to_string()).unwrap_or_default());
            row.push(s.consistent.map(|b| b.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    // every tenth tail value keeps the scatter readable
    let dots = table
        .points
        .iter()
        .flat_map(|p| {
            p.paths
                .iter()
                .flat_map(move |path| path.x.iter().step_by(10).map(move |&x| (p.summary.sweep_value, x)))
        })
        .collect();
    let plot = Plot {
        title: format!("{id}: long-run densities"),
        x_label: table.sweep_name.clone(),
        y_label: "density".into(),
        log_y: false,
        series: vec![Series {
            label: "tail".into(),
            points: dots,
            mark: Mark::Dots,
        }],
    };
    let svg_path = dir.join(format!("{id}.svg"));
    std::fs::write(&svg_path, plot.render())?;

    let mut files = vec![tails_path, summary_path, svg_path];
    files.push(write_metadata(dir, id, plan, notes, &files)?);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_fig2(values: Vec<f64>) -> Fig2Plan {
        Fig2Plan {
            values,
            x0: logspace(1e-2, 5.0, 6),
            t_max: 2000,
            tail: 200,
            ..Default::default()
        }
    }

    #[test]
    fn large_noise_tails_vanish() {
        let t = run_fig2(&small_fig2(vec![4.45])).unwrap();
        let s = &t.points[0].summary;
        assert_eq!(s.tail_zero_fraction, 1.0);
        assert_eq!(s.persisting, 0);
    }

    #[test]
    fn deterministic_tails_above_threshold() {
        let plan = small_fig2(vec![0.0]);
        let model = plan.model(0.0).unwrap();
        let sk = classify_skeleton(&SkeletonMap::new(&model)).unwrap();
        assert_eq!(sk.label, SkeletonLabel::PositiveAttractor);
        let m = sk.m.unwrap();
        let t = run_fig2(&plan).unwrap();
        for (x0, path) in plan.x0.iter().zip(&t.points[0].paths) {
            if *x0 > 2.0 * m {
                assert!(path.x.iter().all(|&x| x > m), "x0={x0}");
            }
            if *x0 < 0.5 * m {
                assert!(path.x.iter().all(|&x| x < 1e-9), "x0={x0}");
            }
        }
    }

    #[test]
    fn tail_layout() {
        let t = run_fig2(&small_fig2(vec![0.05, 0.1])).unwrap();
        assert_eq!(t.points.len(), 2);
        for p in &t.points {
            assert_eq!(p.paths.len(), 6);
            for path in &p.paths {
                assert_eq!(path.x.len(), 200);
                assert_eq!(path.t_start, 2000 - 199);
            }
        }
    }

    #[test]
    fn fig3_low_predation_persists() {
        let plan = Fig3Plan {
            p_bar: vec![0.2],
            x0: logspace(1e-3, 2.0, 5),
            t_max: 2000,
            tail: 200,
            ..Default::default()
        };
        let t = run_fig3(&plan).unwrap();
        let s = &t.points[0].summary;
        assert_eq!(s.skeleton_label, Some(SkeletonLabel::GlobalPersistence));
        assert_eq!(s.persisting, 5);
        assert_eq!(s.consistent, Some(true));
    }

    #[test]
    fn fig3_large_noise_extinct() {
        let plan = Fig3Plan {
            p_bar: vec![4.5],
            eps: 0.99,
            x0: linspace(0.01, 2.0, 5),
            t_max: 2000,
            tail: 200,
            ..Default::default()
        };
        let t = run_fig3(&plan).unwrap();
        assert_eq!(t.points[0].summary.tail_zero_fraction, 1.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(run_fig2(&small_fig2(vec![])).unwrap_err().is_validation());
        assert!(run_fig2(&small_fig2(vec![0.2, 0.1])).unwrap_err().is_validation());
        assert!(run_fig2(&small_fig2(vec![-0.1])).unwrap_err().is_validation());
    }
}
