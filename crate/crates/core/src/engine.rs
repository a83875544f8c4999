//! Iteration of `X[t+1] = f(X[t], xi[t+1]) X[t]`, fate classification,
//! occupation measures and seeded Monte Carlo ensembles.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{SampleStream, SeedSpec};
use crate::error::{Error, Result};
use crate::fitness::{EnvDraw, ModelSpec};

/// Densities above this are clamped and the path is marked escaped.
pub const OVERFLOW_SENTINEL: f64 = 1e300;

const BINS_PER_DECADE: f64 = 100.0;
const MAX_BINS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    Full,
    MeasureOnly,
    Tail(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_max: u64,
    /// Quasi-extinction cutoff.
    pub ext_threshold: f64,
    /// Unbounded-growth cutoff.
    pub high_threshold: f64,
    pub burn_in: u64,
    pub record: RecordMode,
    /// Keep iterating after the first threshold crossing. The fate is still
    /// the first crossing; this only matters for recording and measures.
    pub continue_after_crossing: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_max: 1000,
            ext_threshold: 1e-9,
            high_threshold: 1e9,
            burn_in: 0,
            record: RecordMode::Full,
            continue_after_crossing: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ext_threshold > 0.0 && self.ext_threshold < self.high_threshold) {
            return Err(Error::Validation(format!(
                "need 0 < ext_threshold < high_threshold, got {} and {}",
                self.ext_threshold, self.high_threshold
            )));
        }
        if self.t_max == 0 || self.burn_in >= self.t_max {
            return Err(Error::Validation(format!(
                "need burn_in < t_max, got {} and {}",
                self.burn_in, self.t_max
            )));
        }
        if let RecordMode::Tail(0) = self.record {
            return Err(Error::Validation("tail length must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fate", rename_all = "snake_case")]
pub enum Fate {
    Extinct { t_hit: u64 },
    EscapedHigh { t_hit: u64 },
    Interior,
}

impl Fate {
    pub fn label(&self) -> &'static str {
        match self {
            Fate::Extinct { .. } => "extinct",
            Fate::EscapedHigh { .. } => "escaped",
            Fate::Interior => "interior",
        }
    }

    pub fn t_hit(&self) -> Option<u64> {
        match *self {
            Fate::Extinct { t_hit } | Fate::EscapedHigh { t_hit } => Some(t_hit),
            Fate::Interior => None,
        }
    }

    pub fn from_parts(label: &str, t_hit: Option<u64>) -> Result<Self> {
        match (label, t_hit) {
            ("extinct", Some(t_hit)) => Ok(Fate::Extinct { t_hit }),
            ("escaped", Some(t_hit)) => Ok(Fate::EscapedHigh { t_hit }),
            ("interior", None) => Ok(Fate::Interior),
            _ => Err(Error::Validation(format!("bad fate record `{label}` / {t_hit:?}"))),
        }
    }
}

/// Occupation histogram on log-spaced bins over `[lo, hi]` plus the mass below
/// and above. Counts are integers so pooling is exact in any order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    edges: Vec<f64>,
    counts: Vec<u64>,
    below: u64,
    above: u64,
}

impl EmpiricalMeasure {
    pub fn new(lo: f64, hi: f64) -> Self {
        let decades = (hi / lo).log10();
        let n = ((BINS_PER_DECADE * decades).ceil() as usize).clamp(1, MAX_BINS);
        let (llo, lhi) = (lo.log10(), hi.log10());
        let mut edges: Vec<f64> = (0..=n).map(|i| 10f64.powf(llo + (lhi - llo) * i as f64 / n as f64)).collect();
        edges[0] = lo;
        edges[n] = hi;
        Self {
            edges,
            counts: vec![0; n],
            below: 0,
            above: 0,
        }
    }

    pub fn for_config(config: &SimConfig) -> Self {
        Self::new(config.ext_threshold, config.high_threshold)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Bin index of `x`, or `None` if `x` is outside `[lo, hi)`.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let n = self.counts.len();
        let (lo, hi) = (self.edges[0], self.edges[n]);
        if !(x >= lo && x < hi) {
            return None;
        }
        let pos = (x / lo).log10() / (hi / lo).log10() * n as f64;
        let mut i = (pos as usize).min(n - 1);
        // correct for rounding at bin edges
        while i > 0 && x < self.edges[i] {
            i -= 1;
        }
        while i + 1 < n && x >= self.edges[i + 1] {
            i += 1;
        }
        Some(i)
    }

    pub fn add(&mut self, x: f64) {
        self.add_n(x, 1);
    }

    pub fn add_n(&mut self, x: f64, k: u64) {
        if k == 0 {
            return;
        }
        match self.bin_of(x) {
            Some(i) => self.counts[i] += k,
            None if x < self.edges[0] => self.below += k,
            None => self.above += k,
        }
    }

    pub fn add_below(&mut self, k: u64) {
        self.below += k;
    }

    pub fn add_above(&mut self, k: u64) {
        self.above += k;
    }

    pub fn merge(&mut self, other: &EmpiricalMeasure) {
        assert_eq!(self.edges, other.edges, "cannot pool measures on different bins");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.below += other.below;
        self.above += other.above;
    }

    pub fn t_counted(&self) -> u64 {
        self.below + self.above + self.counts.iter().sum::<u64>()
    }

    fn frac(&self, k: u64) -> f64 {
        let t = self.t_counted();
        if t == 0 {
            0.0
        } else {
            k as f64 / t as f64
        }
    }

    pub fn masses(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| self.frac(c)).collect()
    }

    pub fn below_mass(&self) -> f64 {
        self.frac(self.below)
    }

    pub fn above_mass(&self) -> f64 {
        self.frac(self.above)
    }

    /// Mass outside `[lo, hi]`: `below_mass + above_mass`.
    pub fn outside_mass(&self) -> f64 {
        self.frac(self.below + self.above)
    }

    /// Fraction of time in `[a, b]`, counting bins whose range lies inside it.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let k: u64 = self
            .counts
            .iter()
            .enumerate()
            .filter(|(i, _)| self.edges[*i] >= a && self.edges[*i + 1] <= b)
            .map(|(_, &c)| c)
            .sum();
        self.frac(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub x0: f64,
    /// Time index of `densities[0]`.
    pub t_start: u64,
    pub densities: Vec<f64>,
    pub fate: Fate,
    pub final_x: f64,
    /// Last time index reached.
    pub t_end: u64,
    pub record: RecordMode,
    /// Present when the path was recorded as `MeasureOnly`.
    pub measure: Option<EmpiricalMeasure>,
}

/// One step of the dynamics. Zero is absorbing; overflow returns the sentinel.
#[inline]
pub fn step(model: &ModelSpec, x: f64, e: &EnvDraw) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let y = model.growth_map(x, e);
    if y.is_nan() || y > OVERFLOW_SENTINEL {
        OVERFLOW_SENTINEL
    } else {
        y.max(0.0)
    }
}

fn crossing(config: &SimConfig, x: f64, t: u64) -> Option<Fate> {
    if x < config.ext_threshold {
        Some(Fate::Extinct { t_hit: t })
    } else if x >= config.high_threshold || x >= OVERFLOW_SENTINEL {
        Some(Fate::EscapedHigh { t_hit: t })
    } else {
        None
    }
}

struct Recorder {
    mode: RecordMode,
    path: Vec<f64>,
    tail: VecDeque<f64>,
    measure: Option<EmpiricalMeasure>,
    burn_in: u64,
    t_max: u64,
}

impl Recorder {
    fn new(config: &SimConfig) -> Self {
        Self {
            mode: config.record,
            path: Vec::new(),
            tail: VecDeque::new(),
            measure: matches!(config.record, RecordMode::MeasureOnly).then(|| EmpiricalMeasure::for_config(config)),
            burn_in: config.burn_in,
            t_max: config.t_max,
        }
    }

    fn push(&mut self, t: u64, x: f64) {
        match self.mode {
            RecordMode::Full => self.path.push(x),
            RecordMode::Tail(len) => {
                if self.tail.len() == len {
                    self.tail.pop_front();
                }
                self.tail.push_back(x);
            }
            RecordMode::MeasureOnly => {
                if t >= self.burn_in && t < self.t_max {
                    self.measure.as_mut().expect("measure mode").add(x);
                }
            }
        }
    }

    /// Steps `t_end+1 .. t_max` that were not simulated, credited to the fate side.
    fn pad(&mut self, t_end: u64, fate: Fate) {
        if let Some(m) = self.measure.as_mut() {
            let first = (t_end + 1).max(self.burn_in);
            let k = self.t_max.saturating_sub(first);
            match fate {
                Fate::Extinct { .. } => m.add_below(k),
                Fate::EscapedHigh { .. } => m.add_above(k),
                Fate::Interior => {}
            }
        }
    }
}

/// Simulates one path from `x0`.
pub fn run_trajectory(model: &ModelSpec, config: &SimConfig, x0: f64, stream: &mut SampleStream) -> Result<Trajectory> {
    config.validate()?;
    if !(x0 >= 0.0) || !x0.is_finite() {
        return Err(Error::Validation(format!("initial density must be finite and >= 0, got {x0}")));
    }
    let mut rec = Recorder::new(config);
    let mut x = x0;
    let mut t = 0u64;
    rec.push(0, x);
    let mut fate = crossing(config, x, 0);
    while t < config.t_max {
        if fate.is_some() && (!config.continue_after_crossing || x >= OVERFLOW_SENTINEL) {
            break;
        }
        if x == 0.0 && fate.is_some() {
            // absorbed: the rest of the path is identically zero
            while t < config.t_max {
                t += 1;
                rec.push(t, 0.0);
            }
            break;
        }
        let e = model.draw(stream);
        x = step(model, x, &e);
        t += 1;
        rec.push(t, x);
        if fate.is_none() {
            fate = crossing(config, x, t);
        }
    }
    let fate = fate.unwrap_or(Fate::Interior);
    rec.pad(t, fate);
    let (t_start, densities) = match config.record {
        RecordMode::Full => (0, std::mem::take(&mut rec.path)),
        RecordMode::Tail(_) => {
            let d: Vec<f64> = rec.tail.drain(..).collect();
            (t + 1 - d.len() as u64, d)
        }
        RecordMode::MeasureOnly => (t, vec![x]),
    };
    Ok(Trajectory {
        x0,
        t_start,
        densities,
        fate,
        final_x: x,
        t_end: t,
        record: config.record,
        measure: rec.measure.take(),
    })
}

/// Normalized occupation histogram of a trajectory over `[burn_in, t_max)`.
///
/// Steps not simulated because the path stopped at a threshold are credited
/// to the side it left through.
pub fn empirical_measure(trajectory: &Trajectory, config: &SimConfig) -> Result<EmpiricalMeasure> {
    match trajectory.record {
        RecordMode::MeasureOnly => trajectory
            .measure
            .clone()
            .ok_or_else(|| Error::InsufficientRecord("measure-only without a measure".into())),
        RecordMode::Tail(len) => Err(Error::InsufficientRecord(format!("tail({len})"))),
        RecordMode::Full => {
            let mut m = EmpiricalMeasure::for_config(config);
            for (t, &x) in trajectory.densities.iter().enumerate() {
                let t = t as u64;
                if t >= config.burn_in && t < config.t_max {
                    m.add(x);
                }
            }
            let first = (trajectory.t_end + 1).max(config.burn_in);
            let k = config.t_max.saturating_sub(first);
            match trajectory.fate {
                Fate::Extinct { .. } => m.add_below(k),
                Fate::EscapedHigh { .. } => m.add_above(k),
                Fate::Interior => {}
            }
            Ok(m)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SuccessRule {
    /// Escaped or interior at the horizon (positive-density-dependence studies).
    NotExtinct,
    /// Interior only (bounded studies).
    InteriorOnly,
    /// Final density strictly above a level, e.g. 100.
    FinalAbove { level: f64 },
}

impl SuccessRule {
    pub fn is_success(&self, fate: &Fate, final_x: f64) -> bool {
        match *self {
            SuccessRule::NotExtinct => !matches!(fate, Fate::Extinct { .. }),
            SuccessRule::InteriorOnly => matches!(fate, Fate::Interior),
            SuccessRule::FinalAbove { level } => final_x > level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub fate: Fate,
    pub final_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub n_replicates: u64,
    pub extinct: u64,
    pub escaped: u64,
    pub interior: u64,
    pub successes: u64,
    pub rule: SuccessRule,
    pub persistence_fraction: f64,
    pub standard_error: f64,
    /// Pooled over interior replicates.
    pub measure: EmpiricalMeasure,
    /// Pooled over all replicates.
    pub measure_all: EmpiricalMeasure,
    pub master_seed: u64,
    /// Replicate `i` used stream `i` of `master_seed`.
    pub replicates: Vec<ReplicateRecord>,
}

/// Runs `n` independent replicates from `x0`. Replicate `i` uses stream `i`
/// of `seed`; results do not depend on the number of worker threads.
pub fn run_ensemble(
    model: &ModelSpec,
    config: &SimConfig,
    x0: f64,
    n: u64,
    seed: SeedSpec,
    rule: SuccessRule,
) -> Result<EnsembleResult> {
    config.validate()?;
    if n == 0 {
        return Err(Error::Validation("an ensemble needs at least one replicate".into()));
    }
    let cfg = SimConfig {
        record: RecordMode::MeasureOnly,
        ..*config
    };
    let runs: Vec<(ReplicateRecord, EmpiricalMeasure)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = seed.stream(i);
            let tr = run_trajectory(model, &cfg, x0, &mut stream)?;
            let record = ReplicateRecord {
                replicate: i,
                fate: tr.fate,
                final_x: tr.final_x,
            };
            Ok((record, tr.measure.expect("measure-only record")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut measure = EmpiricalMeasure::for_config(config);
    let mut measure_all = EmpiricalMeasure::for_config(config);
    let (mut extinct, mut escaped, mut interior, mut successes) = (0, 0, 0, 0);
    let mut replicates = Vec::with_capacity(runs.len());
    for (rec, m) in runs {
        match rec.fate {
            Fate::Extinct { .. } => extinct += 1,
            Fate::EscapedHigh { .. } => escaped += 1,
            Fate::Interior => {
                interior += 1;
                measure.merge(&m);
            }
        }
        measure_all.merge(&m);
        if rule.is_success(&rec.fate, rec.final_x) {
            successes += 1;
        }
        replicates.push(rec);
    }
    let p = successes as f64 / n as f64;
    Ok(EnsembleResult {
        n_replicates: n,
        extinct,
        escaped,
        interior,
        successes,
        rule,
        persistence_fraction: p,
        standard_error: (p * (1.0 - p) / n as f64).sqrt(),
        measure,
        measure_all,
        master_seed: seed.master_seed,
        replicates,
    })
}

/// Runs `f` on a dedicated pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub p: f64,
    pub standard_error: f64,
    pub n: u64,
}

impl ProbabilityEstimate {
    pub fn from_counts(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            p,
            standard_error: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }
}

/// Monte Carlo estimate of `P[exists t <= horizon : X_t < target | X_0 = x0]`.
///
/// Paths above `config.high_threshold` are treated as escaped and stop.
pub fn accessibility_probe(
    model: &ModelSpec,
    config: &SimConfig,
    x0: f64,
    target: f64,
    horizon: u64,
    n: u64,
    seed: SeedSpec,
) -> Result<ProbabilityEstimate> {
    if !(target > 0.0) {
        return Err(Error::Validation(format!("target density must be positive, got {target}")));
    }
    if n == 0 {
        return Err(Error::Validation("probe needs at least one replicate".into()));
    }
    if x0 < target {
        return Ok(ProbabilityEstimate::from_counts(n, n));
    }
    let hits: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = seed.stream(i);
            let mut x = x0;
            for _ in 0..horizon {
                let e = model.draw(&mut stream);
                x = step(model, x, &e);
                if x < target {
                    return 1;
                }
                if x >= config.high_threshold {
                    return 0;
                }
            }
            0
        })
        .sum();
    Ok(ProbabilityEstimate::from_counts(hits, n))
}
