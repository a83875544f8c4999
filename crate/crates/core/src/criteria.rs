//! Sign criteria for the extinction, persistence and growth regimes, with
//! confidence intervals and accessibility certificates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::{EnvDistribution, SeedSpec};
use crate::error::{Error, Result};
use crate::fitness::{EnvDraw, FamilyKind, ModelSpec, MonotonicityClass};
use crate::numerics::mean_and_se;
use rayon::prelude::*;

use crate::skeleton::{classify_skeleton, invariant_interval, small_noise_bound, NoiseImage, SkeletonLabel, SkeletonMap};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_901;
pub const DEFAULT_DRAWS: u64 = 100_000;
const EXACT_ZERO: f64 = 1e-12;
const QUADRATURE_TOL: f64 = 1e-10;
const REACH_STEPS: usize = 10_000;
pub const DEFAULT_ACCESS_STARTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "at", content = "x", rename_all = "snake_case")]
pub enum EvalPoint {
    Zero,
    Infinity,
    At(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed_form",
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "monte_carlo",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Negative,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionEstimate {
    pub name: String,
    pub value: f64,
    pub standard_error: f64,
    pub exact: bool,
    pub method: Method,
    /// Draws used by a Monte Carlo estimate.
    pub n: Option<u64>,
}

impl CriterionEstimate {
    fn exact(name: &str, value: f64, method: Method) -> Self {
        Self {
            name: name.to_string(),
            value,
            standard_error: 0.0,
            exact: true,
            method,
            n: None,
        }
    }

    /// Sign decided at 99% confidence, or `None` when the interval covers 0.
    pub fn sign(&self) -> Option<Sign> {
        let half = if self.value.is_infinite() {
            0.0
        } else if self.exact {
            match self.method {
                Method::Quadrature => QUADRATURE_TOL.max(EXACT_ZERO),
                _ => EXACT_ZERO,
            }
        } else {
            Z_99 * self.standard_error
        };
        if self.value.is_nan() {
            None
        } else if self.value > half {
            Some(Sign::Positive)
        } else if self.value < -half {
            Some(Sign::Negative)
        } else {
            None
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        let half = if self.exact { 0.0 } else { Z_99 * self.standard_error };
        (self.value - half, self.value + half)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub n: u64,
    pub seed: SeedSpec,
    /// Skip the closed-form and quadrature stages.
    pub force_monte_carlo: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            n: DEFAULT_DRAWS,
            seed: SeedSpec::new(0),
            force_monte_carlo: false,
        }
    }
}

fn point_name(at: EvalPoint) -> String {
    match at {
        EvalPoint::Zero => "log_f_at_zero".into(),
        EvalPoint::Infinity => "log_f_at_infinity".into(),
        EvalPoint::At(x) => format!("log_f_at({x})"),
    }
}

fn log_f_at(model: &ModelSpec, at: EvalPoint, e: &EnvDraw) -> f64 {
    match at {
        EvalPoint::Zero => model.log_fitness_at_zero(e),
        EvalPoint::Infinity => model.log_fitness_at_infinity(e),
        EvalPoint::At(x) => model.log_fitness(x, e),
    }
}

fn mean(d: &EnvDistribution) -> f64 {
    d.expected_value()
}

/// Constant zero, as opposed to a law that is almost surely positive.
fn is_zero(d: &EnvDistribution) -> bool {
    matches!(d, EnvDistribution::Constant { value } if *value == 0.0)
}

fn analytic_infinite(model: &ModelSpec, at: EvalPoint) -> Option<f64> {
    use FamilyKind::*;
    let p = model.params();
    match (model.family(), at) {
        (MateLimitation | MateLimitationNdd, EvalPoint::Zero) => Some(f64::NEG_INFINITY),
        (MateLimitation | MateLimitationNdd, EvalPoint::At(x)) if x == 0.0 => Some(f64::NEG_INFINITY),
        (Ricker | BevertonHolt | MateLimitationNdd | PredatorSaturationNdd, EvalPoint::Infinity) if !is_zero(&p[1]) => {
            Some(f64::NEG_INFINITY)
        }
        (LiebholdBascompte, EvalPoint::Infinity) if !is_zero(&p[0]) => Some(f64::INFINITY),
        _ => None,
    }
}

fn closed_form(model: &ModelSpec, at: EvalPoint) -> Option<f64> {
    use FamilyKind::*;
    let p = model.params();
    let reciprocal_h = |i: usize| p[i].mean_reciprocal();
    match (model.family(), at) {
        (Ricker, EvalPoint::Zero) => Some(mean(&p[0])),
        (Ricker, EvalPoint::At(x)) => Some(mean(&p[0]) - mean(&p[1]) * x),
        (Ricker, EvalPoint::Infinity) => Some(mean(&p[0])),
        (BevertonHolt, EvalPoint::Zero) => p[0].mean_log(),
        (BevertonHolt, EvalPoint::Infinity) => p[0].mean_log(),
        (MateLimitation, EvalPoint::Infinity) => p[0].mean_log(),
        (PredatorSaturation, EvalPoint::Infinity) => Some(mean(&p[0])),
        (PredatorSaturation, EvalPoint::Zero) => Some(mean(&p[0]) - mean(&p[1]) * reciprocal_h(2)?),
        (PredatorSaturationNdd, EvalPoint::Zero) => Some(mean(&p[0]) - mean(&p[3]) * reciprocal_h(2)?),
        (MateLimitationNdd | PredatorSaturationNdd, EvalPoint::Infinity) => Some(mean(&p[0])),
        (LiebholdBascompte, EvalPoint::Zero) => Some(-mean(&p[0]) * mean(&p[1]) + mean(&p[2])),
        (LiebholdBascompte, EvalPoint::At(x)) => Some(mean(&p[0]) * (x - mean(&p[1])) + mean(&p[2])),
        (LiebholdBascompte, EvalPoint::Infinity) => Some(-mean(&p[0]) * mean(&p[1]) + mean(&p[2])),
        _ => None,
    }
}

/// Expectation of `g(draw)` over the one random component, by quadrature.
fn single_component_quadrature(model: &ModelSpec, g: impl Fn(&EnvDraw) -> f64) -> Option<f64> {
    let random = model.random_components();
    if random.len() != 1 {
        return None;
    }
    let i = random[0];
    let base = model.mean_draw().as_slice().to_vec();
    model.params()[i].expect_quadrature(|v| {
        let mut d = base.clone();
        d[i] = v;
        g(&EnvDraw::from_slice(&d))
    })
}

fn monte_carlo(name: String, model: &ModelSpec, opts: &EstimateOptions, g: impl Fn(&EnvDraw) -> f64) -> CriterionEstimate {
    let mut stream = opts.seed.stream(0);
    let values: Vec<f64> = (0..opts.n).map(|_| g(&model.draw(&mut stream))).collect();
    if let Some(&inf) = values.iter().find(|v| v.is_infinite()) {
        // an infinite draw with positive probability makes the mean infinite
        return CriterionEstimate {
            name,
            value: inf,
            standard_error: 0.0,
            exact: false,
            method: Method::MonteCarlo,
            n: Some(opts.n),
        };
    }
    let (value, se) = mean_and_se(&values);
    CriterionEstimate {
        name,
        value,
        standard_error: se,
        exact: false,
        method: Method::MonteCarlo,
        n: Some(opts.n),
    }
}

/// `E[log f(x, xi)]` at a density, at 0 (the limit `f(0, xi)`) or at infinity.
///
/// Tries an analytic infinity, then closed forms, then quadrature when a single
/// component is random, and falls back to Monte Carlo.
pub fn estimate_log_mean(model: &ModelSpec, at: EvalPoint, opts: &EstimateOptions) -> Result<CriterionEstimate> {
    if opts.n == 0 {
        return Err(Error::Validation("estimate needs at least one draw".into()));
    }
    let name = point_name(at);
    if let Some(v) = analytic_infinite(model, at) {
        return Ok(CriterionEstimate::exact(&name, v, Method::ClosedForm));
    }
    if model.is_deterministic() {
        return Ok(CriterionEstimate::exact(&name, log_f_at(model, at, &model.mean_draw()), Method::ClosedForm));
    }
    if !opts.force_monte_carlo {
        if let Some(v) = closed_form(model, at) {
            return Ok(CriterionEstimate::exact(&name, v, Method::ClosedForm));
        }
        if let Some(v) = single_component_quadrature(model, |e| log_f_at(model, at, e)) {
            return Ok(CriterionEstimate::exact(&name, v, Method::Quadrature));
        }
    }
    Ok(monte_carlo(name, model, opts, |e| log_f_at(model, at, e)))
}

/// `E[sup_{x > x_c} log f(x, xi)]`.
pub fn estimate_tail_sup(model: &ModelSpec, x_c: f64, opts: &EstimateOptions) -> Result<CriterionEstimate> {
    if !(x_c > 0.0) {
        return Err(Error::Validation(format!("x_c must be positive, got {x_c}")));
    }
    if opts.n == 0 {
        return Err(Error::Validation("estimate needs at least one draw".into()));
    }
    // unbounded sup is detected on the mean draw; it does not depend on the draw
    model.tail_sup_log_fitness(x_c, &model.mean_draw())?;
    let name = format!("tail_sup_log_f({x_c})");
    let g = |e: &EnvDraw| model.tail_sup_log_fitness(x_c, e).unwrap_or(f64::INFINITY);
    if model.is_deterministic() {
        return Ok(CriterionEstimate::exact(&name, g(&model.mean_draw()), Method::ClosedForm));
    }
    if !opts.force_monte_carlo {
        if let Some(v) = single_component_quadrature(model, g) {
            return Ok(CriterionEstimate::exact(&name, v, Method::Quadrature));
        }
    }
    Ok(monte_carlo(name, model, opts, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StochasticPersistence,
    UnconditionalExtinction,
    UnboundedGrowth,
    ConditionalPersistence,
    LocalExtinctionOnly,
    Indeterminate,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::StochasticPersistence => "stochastic_persistence",
            Regime::UnconditionalExtinction => "unconditional_extinction",
            Regime::UnboundedGrowth => "unbounded_growth",
            Regime::ConditionalPersistence => "conditional_persistence",
            Regime::LocalExtinctionOnly => "local_extinction_only",
            Regime::Indeterminate => "indeterminate",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "snake_case")]
pub enum AccessibilityRoute {
    /// A log-additive or multiplicative component with full support, and `x f(x, xi)` bounded in `x`.
    LargeNoise { component: String },
    /// The interval reachable under bounded noise falls below `floor / 2` from every probed start.
    SupportImage { x_max: f64, floor: f64, starts: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessibilityEvidence {
    pub certified: bool,
    pub route: Option<AccessibilityRoute>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub model: String,
    pub regime: Regime,
    /// Which criterion set applies: negative, positive or mixed density dependence.
    pub applicable_theorem: String,
    pub estimates: Vec<CriterionEstimate>,
    pub x_c: Option<f64>,
    pub skeleton: Option<SkeletonLabel>,
    pub accessibility: Option<AccessibilityEvidence>,
    pub notes: Vec<String>,
}

impl RegimeReport {
    fn new(model: &ModelSpec, tag: &str, estimates: Vec<CriterionEstimate>) -> Self {
        Self {
            model: model.to_string(),
            regime: Regime::Indeterminate,
            applicable_theorem: tag.to_string(),
            estimates,
            x_c: None,
            skeleton: None,
            accessibility: None,
            notes: Vec::new(),
        }
    }

    /// One machine-readable line: regime followed by each criterion.
    pub fn record_line(&self) -> String {
        let mut parts = vec![format!("regime={}", self.regime)];
        for e in &self.estimates {
            parts.push(format!("{}={}", e.name, e.value));
            parts.push(format!("{}_se={}", e.name, e.standard_error));
            parts.push(format!("{}_method={}", e.name, e.method));
        }
        parts.join(" ")
    }

    fn indeterminate(&mut self, why: impl Into<String>) {
        self.regime = Regime::Indeterminate;
        self.notes.push(why.into());
    }
}

impl fmt::Display for RegimeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model:  {}", self.model)?;
        writeln!(f, "regime: {} ({})", self.regime, self.applicable_theorem)?;
        for e in &self.estimates {
            let (lo, hi) = e.interval();
            if e.exact {
                writeln!(f, "  {:<28} {:>14.6}   exact ({})", e.name, e.value, e.method)?;
            } else {
                writeln!(
                    f,
                    "  {:<28} {:>14.6}   se {:.3e}, 99% CI [{:.6}, {:.6}] ({}, n={})",
                    e.name,
                    e.value,
                    e.standard_error,
                    lo,
                    hi,
                    e.method,
                    e.n.unwrap_or(0)
                )?;
            }
        }
        if let Some(s) = self.skeleton {
            writeln!(f, "  skeleton: {s}")?;
        }
        if let Some(a) = &self.accessibility {
            writeln!(f, "  accessibility of 0: {} ({})", a.certified, a.detail)?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

fn require(model: &ModelSpec, ok: bool, required: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::WrongMonotonicity {
            family: model.family().to_string(),
            actual: model.monotonicity().to_string(),
            required: required.to_string(),
        })
    }
}

/// Regime for `f` decreasing in `x`.
pub fn classify_ndd(model: &ModelSpec, opts: &EstimateOptions) -> Result<RegimeReport> {
    require(model, model.monotonicity() == MonotonicityClass::DecreasingInX, "decreasing in x")?;
    let zero = estimate_log_mean(model, EvalPoint::Zero, opts)?;
    let inf = estimate_log_mean(model, EvalPoint::Infinity, opts)?;
    let (s0, s_inf) = (zero.sign(), inf.sign());
    let mut r = RegimeReport::new(model, "negative density dependence", vec![zero, inf]);
    match (s0, s_inf) {
        (Some(Sign::Negative), _) => r.regime = Regime::UnconditionalExtinction,
        (_, Some(Sign::Positive)) => r.regime = Regime::UnboundedGrowth,
        (Some(Sign::Positive), Some(Sign::Negative)) => r.regime = Regime::StochasticPersistence,
        _ => r.indeterminate("a deciding criterion is not separated from 0 at 99%"),
    }
    Ok(r)
}

/// Regime for `f` increasing in `x`.
pub fn classify_pdd(model: &ModelSpec, opts: &EstimateOptions) -> Result<RegimeReport> {
    require(model, model.monotonicity() == MonotonicityClass::IncreasingInX, "increasing in x")?;
    let zero = estimate_log_mean(model, EvalPoint::Zero, opts)?;
    let inf = estimate_log_mean(model, EvalPoint::Infinity, opts)?;
    let (s0, s_inf) = (zero.sign(), inf.sign());
    let mut r = RegimeReport::new(model, "positive density dependence", vec![zero, inf]);
    match (s0, s_inf) {
        (_, Some(Sign::Negative)) => r.regime = Regime::UnconditionalExtinction,
        (Some(Sign::Positive), _) => r.regime = Regime::UnboundedGrowth,
        (Some(Sign::Negative), Some(Sign::Positive)) => r.regime = Regime::ConditionalPersistence,
        _ => r.indeterminate("a deciding criterion is not separated from 0 at 99%"),
    }
    Ok(r)
}

fn log_additive_index(family: FamilyKind) -> Option<usize> {
    use FamilyKind::*;
    match family {
        Ricker | PredatorSaturation | MateLimitationNdd | PredatorSaturationNdd => Some(0),
        LiebholdBascompte => Some(2),
        BevertonHolt | MateLimitation => None,
    }
}

fn multiplicative_index(family: FamilyKind) -> Option<usize> {
    match family {
        FamilyKind::BevertonHolt | FamilyKind::MateLimitation => Some(0),
        _ => None,
    }
}

/// Whether `x f(x, xi)` is bounded in `x` for every `xi` in the support.
fn growth_bounded(model: &ModelSpec) -> bool {
    use FamilyKind::*;
    let lo = |i: usize| model.params()[i].support_bounds().0;
    match model.family() {
        Ricker | MateLimitationNdd | PredatorSaturationNdd => lo(1) > 0.0,
        BevertonHolt => lo(1) > 0.0,
        MateLimitation | PredatorSaturation | LiebholdBascompte => false,
    }
}

fn large_noise_route(model: &ModelSpec) -> Option<String> {
    if !growth_bounded(model) {
        return None;
    }
    let names = model.param_names();
    if let Some(i) = log_additive_index(model.family()) {
        let (lo, hi) = model.params()[i].support_bounds();
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            return Some(names[i].to_string());
        }
    }
    if let Some(i) = multiplicative_index(model.family()) {
        let (lo, hi) = model.params()[i].support_bounds();
        if lo == 0.0 && hi == f64::INFINITY {
            return Some(names[i].to_string());
        }
    }
    None
}

/// Checks whether `{0}` is accessible from every positive density.
///
/// `prefix` is the length of the interval near 0 on which `f` is increasing;
/// the target level is kept inside it. `starts` initial densities are probed.
pub fn certify_accessibility(model: &ModelSpec, prefix: f64, starts: usize) -> AccessibilityEvidence {
    if let Some(component) = large_noise_route(model) {
        return AccessibilityEvidence {
            certified: true,
            detail: format!("component `{component}` has full support and growth is bounded"),
            route: Some(AccessibilityRoute::LargeNoise { component }),
        };
    }
    if model.is_deterministic() {
        return AccessibilityEvidence {
            certified: false,
            route: None,
            detail: "deterministic model".into(),
        };
    }
    if !growth_bounded(model) {
        return AccessibilityEvidence {
            certified: false,
            route: None,
            detail: "growth map is unbounded in x".into(),
        };
    }
    let map = SkeletonMap::new(model);
    let Some(probe) = NoiseImage::new(model, map.x_max()) else {
        return AccessibilityEvidence {
            certified: false,
            route: None,
            detail: "unbounded noise without a full-support factor".into(),
        };
    };
    // every path enters [0, x_top] after one step
    let x_top = map
        .scan_grid()
        .iter()
        .map(|&x| probe.band(x).1)
        .fold(map.x_max(), f64::max);
    let floor = probe.descent_floor(x_top).min(prefix);
    if !(floor > 0.0) {
        return AccessibilityEvidence {
            certified: false,
            route: None,
            detail: "no density range where every draw can shrink the population".into(),
        };
    }
    let target = 0.5 * floor;
    let starts: Vec<f64> = (1..=starts)
        .map(|i| target + (x_top - target) * i as f64 / starts as f64)
        .collect();
    let certified = starts.par_iter().all(|&x| probe.reaches_below(x, target, REACH_STEPS));
    AccessibilityEvidence {
        certified,
        detail: format!(
            "reachable intervals from {} starts in [{target:.3e}, {x_top:.4}] fall below {target:.3e}: {certified}",
            starts.len()
        ),
        route: Some(AccessibilityRoute::SupportImage {
            x_max: x_top,
            floor,
            starts: starts.len(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralOptions {
    pub estimate: EstimateOptions,
    /// Defaults to twice the largest fixed point of the skeleton.
    pub x_c: Option<f64>,
    /// Initial densities probed for accessibility of 0.
    pub access_starts: usize,
}

impl Default for GeneralOptions {
    fn default() -> Self {
        Self {
            estimate: EstimateOptions::default(),
            x_c: None,
            access_starts: DEFAULT_ACCESS_STARTS,
        }
    }
}

/// Regime for mixed density dependence: `f` increasing near 0 and decreasing later.
pub fn classify_general(model: &ModelSpec, opts: &GeneralOptions) -> Result<RegimeReport> {
    let MonotonicityClass::Mixed { increasing_prefix } = model.monotonicity() else {
        return Err(Error::WrongMonotonicity {
            family: model.family().to_string(),
            actual: model.monotonicity().to_string(),
            required: "mixed".into(),
        });
    };
    let map = SkeletonMap::new(model);
    let skeleton = classify_skeleton(&map).ok();
    let x_c = opts.x_c.or_else(|| {
        skeleton
            .as_ref()
            .and_then(|s| s.fixed_points.last().copied())
            .map(|p| 2.0 * p)
    });
    let zero = estimate_log_mean(model, EvalPoint::Zero, &opts.estimate)?;
    let s0 = zero.sign();
    let tail = match x_c {
        Some(x) => Some(estimate_tail_sup(model, x, &opts.estimate)?),
        None if s0 == Some(Sign::Positive) => {
            return Err(Error::Validation("no positive fixed point; supply x_c".into()));
        }
        None => None,
    };
    let s_tail = tail.as_ref().and_then(|t| t.sign());
    let mut estimates = vec![zero];
    estimates.extend(tail);
    let mut r = RegimeReport::new(model, "mixed density dependence", estimates);
    r.x_c = x_c;
    r.skeleton = skeleton.as_ref().map(|s| s.label);
    match s0 {
        Some(Sign::Positive) => match s_tail {
            Some(Sign::Negative) => r.regime = Regime::StochasticPersistence,
            Some(Sign::Positive) => r.indeterminate("log f at 0 is positive but the tail supremum is not negative"),
            None => r.indeterminate("tail supremum is not separated from 0 at 99%"),
        },
        Some(Sign::Negative) => {
            // the local extinction branch needs f increasing on some [0, gamma)
            let prefix = increasing_prefix.ok_or_else(|| Error::MissingGamma(model.to_string()))?;
            r.regime = Regime::LocalExtinctionOnly;
            let acc = certify_accessibility(model, prefix, opts.access_starts);
            if acc.certified {
                r.regime = Regime::UnconditionalExtinction;
            } else if let Some(s) = skeleton.as_ref().filter(|s| s.label == SkeletonLabel::PositiveAttractor) {
                let eps = small_noise_bound(model);
                let seed = s.ffc.zip(s.c.map(|c| map.eval(c)));
                if let Some(j) = seed.filter(|_| eps.is_finite()).and_then(|(lo, hi)| invariant_interval(&map, eps, (lo, hi))) {
                    r.regime = Regime::ConditionalPersistence;
                    r.notes.push(format!(
                        "[{:.6}, {:.6}] is invariant under the noise band +-{eps:.3e}",
                        j.lo, j.hi
                    ));
                }
            }
            r.accessibility = Some(acc);
        }
        None => r.indeterminate("log f at 0 is not separated from 0 at 99%"),
    }
    Ok(r)
}

/// Dispatches on the monotonicity class.
pub fn classify(model: &ModelSpec, opts: &GeneralOptions) -> Result<RegimeReport> {
    match model.monotonicity() {
        MonotonicityClass::DecreasingInX => classify_ndd(model, &opts.estimate),
        MonotonicityClass::IncreasingInX => classify_pdd(model, &opts.estimate),
        MonotonicityClass::Mixed { .. } => classify_general(model, opts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JensenGap {
    /// Monte Carlo `E[P / h]`.
    pub mean_ratio: f64,
    pub standard_error: f64,
    /// `P / E[h]`.
    pub ratio_of_mean: f64,
    pub gap: f64,
}

/// Compares `E[P / h]` with `P / E[h]` for a fluctuating half-saturation constant.
pub fn jensen_gap(p: f64, h: &EnvDistribution, n: u64, seed: SeedSpec) -> Result<JensenGap> {
    let (lo, _) = h.support_bounds();
    if lo < 0.0 || !(h.expected_value() > 0.0) || (h.is_degenerate() && lo == 0.0) {
        return Err(Error::InvalidDistribution(format!("h must be strictly positive, got {h}")));
    }
    if n == 0 {
        return Err(Error::Validation("jensen gap needs at least one draw".into()));
    }
    let mut stream = seed.stream(0);
    let values: Vec<f64> = (0..n).map(|_| p / stream.draw(h)).collect();
    let (mean_ratio, se) = if h.is_degenerate() {
        (p / h.expected_value(), 0.0)
    } else {
        mean_and_se(&values)
    };
    let ratio_of_mean = p / h.expected_value();
    Ok(JensenGap {
        mean_ratio,
        standard_error: se,
        ratio_of_mean,
        gap: mean_ratio - ratio_of_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{accessibility_probe, run_ensemble, SimConfig, SuccessRule};

    fn parse(family: &str, params: &[(&str, &str)]) -> ModelSpec {
        ModelSpec::parse(family, params).unwrap()
    }

    fn opts() -> EstimateOptions {
        EstimateOptions::default()
    }

    #[test]
    fn log_mean_examples() {
        let r = parse("ricker", &[("r", "normal:0.5,1"), ("a", "1")]);
        let e = estimate_log_mean(&r, EvalPoint::Zero, &opts()).unwrap();
        assert_eq!((e.value, e.exact, e.method), (0.5, true, Method::ClosedForm));

        let ml = parse("mate-limitation", &[("lambda", "lognormal:0.1,0.5"), ("h", "10")]);
        let e = estimate_log_mean(&ml, EvalPoint::Zero, &opts()).unwrap();
        assert_eq!((e.value, e.exact), (f64::NEG_INFINITY, true));
        let e = estimate_log_mean(&ml, EvalPoint::Infinity, &opts()).unwrap();
        assert!(e.exact && (e.value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn closed_form_agrees_with_monte_carlo() {
        let mc = EstimateOptions {
            force_monte_carlo: true,
            seed: SeedSpec::new(5),
            ..opts()
        };
        let cases = [
            (parse("ricker", &[("r", "normal:0.5,1"), ("a", "uniform:0.5,1.5")]), EvalPoint::At(0.7)),
            (parse("beverton-holt", &[("a", "lognormal:0.3,0.2"), ("b", "1")]), EvalPoint::Zero),
            (parse("predator-saturation", &[("r", "1"), ("P", "uniform:0.5,1.5"), ("h", "uniform:1,3")]), EvalPoint::Zero),
            (parse("predator-saturation-ndd", &[("r", "4"), ("a", "4"), ("h", "gamma:4,0.05"), ("P", "2")]), EvalPoint::Zero),
            (parse("mate-limitation-ndd", &[("r", "uniform:4,5"), ("a", "1"), ("h", "10")]), EvalPoint::At(2.0)),
            (parse("liebhold", &[("gamma", "uniform:0,1"), ("C", "normal:2,0.3"), ("xi", "normal:0,1")]), EvalPoint::At(1.0)),
        ];
        for (m, at) in cases {
            let exact = estimate_log_mean(&m, at, &opts()).unwrap();
            assert!(exact.exact, "{m} {at:?}");
            let est = estimate_log_mean(&m, at, &mc).unwrap();
            assert_eq!(est.method, Method::MonteCarlo);
            assert!(
                (est.value - exact.value).abs() < 4.0 * est.standard_error,
                "{m} {at:?}: {} vs {} (se {})",
                est.value,
                exact.value,
                est.standard_error
            );
        }
        // tail sup, quadrature against Monte Carlo
        let m = parse("mate-limitation-ndd", &[("r", "uniform:4,5"), ("a", "1"), ("h", "10")]);
        let q = estimate_tail_sup(&m, 8.0, &opts()).unwrap();
        assert_eq!(q.method, Method::Quadrature);
        let est = estimate_tail_sup(&m, 8.0, &mc).unwrap();
        assert!((est.value - q.value).abs() < 4.0 * est.standard_error);
    }

    #[test]
    fn ndd_examples() {
        let o = opts();
        let r = classify_ndd(&parse("ricker", &[("r", "normal:0.5,1"), ("a", "1")]), &o).unwrap();
        assert_eq!(r.regime, Regime::StochasticPersistence);
        let r = classify_ndd(&parse("ricker", &[("r", "normal:-0.2,1"), ("a", "1")]), &o).unwrap();
        assert_eq!(r.regime, Regime::UnconditionalExtinction);
        let r = classify_ndd(&parse("beverton-holt", &[("a", "lognormal:0.3,0.2"), ("b", "1")]), &o).unwrap();
        assert_eq!(r.regime, Regime::StochasticPersistence);
        let r = classify_ndd(&parse("ricker", &[("r", "normal:0.5,1"), ("a", "0")]), &o).unwrap();
        assert_eq!(r.regime, Regime::UnboundedGrowth);
        assert!(matches!(
            classify_ndd(&parse("mate-limitation", &[("lambda", "2"), ("h", "1")]), &o),
            Err(Error::WrongMonotonicity { .. })
        ));
    }

    #[test]
    fn exact_zero_is_indeterminate() {
        let r = classify_ndd(&parse("ricker", &[("r", "normal:0,1"), ("a", "1")]), &opts()).unwrap();
        assert_eq!(r.regime, Regime::Indeterminate);
        let r = classify_ndd(&parse("beverton-holt", &[("a", "lognormal:0,0.3"), ("b", "1")]), &opts()).unwrap();
        assert_eq!(r.regime, Regime::Indeterminate);
    }

    #[test]
    fn pdd_examples() {
        let o = opts();
        let r = classify_pdd(&parse("mate-limitation", &[("lambda", "lognormal:0.1,0.5"), ("h", "10")]), &o).unwrap();
        assert_eq!(r.regime, Regime::ConditionalPersistence);
        let r = classify_pdd(&parse("mate-limitation", &[("lambda", "lognormal:-0.1,0.5"), ("h", "10")]), &o).unwrap();
        assert_eq!(r.regime, Regime::UnconditionalExtinction);
        let r = classify_pdd(
            &parse("predator-saturation", &[("r", "normal:1,0.5"), ("P", "uniform:0.2,1"), ("h", "1")]),
            &o,
        )
        .unwrap();
        assert_eq!(r.regime, Regime::UnboundedGrowth);
    }

    #[test]
    fn doubling_h_keeps_label() {
        for sd in [0.1, 0.5, 1.0] {
            for mu in [-0.1, 0.1] {
                let a = parse("mate-limitation", &[("lambda", &format!("lognormal:{mu},{sd}")), ("h", "10")]);
                let b = a.with_param("h", EnvDistribution::constant(20.0).unwrap()).unwrap();
                assert_eq!(classify(&a, &Default::default()).unwrap().regime, classify(&b, &Default::default()).unwrap().regime);
            }
        }
    }

    fn fig3(p_bar: f64, eps: f64) -> ModelSpec {
        ModelSpec::parse(
            "predator-saturation-ndd",
            &[
                ("r", "4"),
                ("a", "4"),
                ("h", &(1.0f64 / 12.0).to_string()),
                ("P", &format!("uniform:{},{}", p_bar * (1.0 - eps), p_bar * (1.0 + eps))),
            ],
        )
        .unwrap()
    }

    #[test]
    fn general_examples() {
        let g = GeneralOptions::default();
        let ps = parse("predator-saturation-ndd", &[("r", "4"), ("a", "1"), ("h", "1"), ("P", "uniform:1,3")]);
        let r = classify_general(&ps, &g).unwrap();
        assert_eq!(r.regime, Regime::StochasticPersistence, "{r}");

        for (r_, h) in [("uniform:4,5", "10"), ("4.5", "2"), ("uniform:0.1,8.9", "10")] {
            let m = parse("mate-limitation-ndd", &[("r", r_), ("a", "1"), ("h", h)]);
            let rep = classify_general(&m, &g).unwrap();
            assert_eq!(rep.estimates[0].value, f64::NEG_INFINITY);
            assert_ne!(rep.regime, Regime::StochasticPersistence);
            assert_ne!(rep.regime, Regime::Indeterminate);
        }

        for p_bar in [4.5, 6.0] {
            let r = classify_general(&fig3(p_bar, 0.98), &g).unwrap();
            assert_eq!(r.regime, Regime::UnconditionalExtinction, "{r}");
        }

        let bad = parse("predator-saturation-ndd", &[("r", "4"), ("a", "lognormal:0,0.1"), ("h", "1"), ("P", "10")]);
        assert!(matches!(classify_general(&bad, &g), Err(Error::MissingGamma(_))));
    }

    #[test]
    fn mixed_regimes_follow_the_noise_level() {
        let g = GeneralOptions::default();
        let fig2 = |eps_r: f64| {
            parse(
                "mate-limitation-ndd",
                &[("r", &format!("uniform:{},{}", 4.5 - eps_r, 4.5 + eps_r)), ("a", "1"), ("h", "10")],
            )
        };
        assert_eq!(classify_general(&fig2(0.05), &g).unwrap().regime, Regime::ConditionalPersistence);
        assert_eq!(classify_general(&fig2(4.4), &g).unwrap().regime, Regime::UnconditionalExtinction);
        // essential extinction in the skeleton with small noise
        let ee = parse("mate-limitation-ndd", &[("r", "uniform:4.49,4.51"), ("a", "1"), ("h", "2")]);
        assert_eq!(classify_general(&ee, &g).unwrap().regime, Regime::UnconditionalExtinction);
        // normal r has full support; growth stays bounded since a > 0
        let big = parse("mate-limitation-ndd", &[("r", "normal:4.5,1"), ("a", "1"), ("h", "10")]);
        let rep = classify_general(&big, &g).unwrap();
        assert_eq!(rep.regime, Regime::UnconditionalExtinction);
        assert!(matches!(
            rep.accessibility.unwrap().route,
            Some(AccessibilityRoute::LargeNoise { .. })
        ));
    }

    #[test]
    fn regimes_agree_with_simulation() {
        let cfg = SimConfig {
            t_max: 1000,
            continue_after_crossing: true,
            ..Default::default()
        };
        // unconditional extinction: Fig.3-type with large noise
        let m = fig3(4.5, 0.98);
        assert_eq!(classify(&m, &Default::default()).unwrap().regime, Regime::UnconditionalExtinction);
        for x0 in [0.01, 0.5, 2.0] {
            let e = run_ensemble(&m, &cfg, x0, 500, SeedSpec::new(1), SuccessRule::NotExtinct).unwrap();
            assert!(e.extinct as f64 >= 0.99 * 500.0);
        }
        // stochastic persistence
        let m = parse("ricker", &[("r", "uniform:0.5,1.5"), ("a", "1")]);
        assert_eq!(classify(&m, &Default::default()).unwrap().regime, Regime::StochasticPersistence);
        let e = run_ensemble(
            &m,
            &SimConfig {
                ext_threshold: 1e-4,
                high_threshold: 1e3,
                ..cfg
            },
            1.0,
            500,
            SeedSpec::new(2),
            SuccessRule::InteriorOnly,
        )
        .unwrap();
        assert!(e.measure_all.outside_mass() <= 0.02);
        // conditional persistence: both fates at some x0
        let m = parse("mate-limitation", &[("lambda", "lognormal:0.1,0.5"), ("h", "10")]);
        assert_eq!(classify(&m, &Default::default()).unwrap().regime, Regime::ConditionalPersistence);
        let e = run_ensemble(&m, &SimConfig::default(), 200.0, 500, SeedSpec::new(3), SuccessRule::NotExtinct).unwrap();
        assert!(e.extinct >= 25 && e.escaped >= 25);
    }

    #[test]
    fn certified_accessibility_matches_probe() {
        let m = parse("mate-limitation-ndd", &[("r", "uniform:0.1,8.9"), ("a", "1"), ("h", "10")]);
        let prefix = match m.monotonicity() {
            MonotonicityClass::Mixed { increasing_prefix } => increasing_prefix.unwrap(),
            _ => unreachable!(),
        };
        assert!(certify_accessibility(&m, prefix, DEFAULT_ACCESS_STARTS).certified);
        for x0 in [0.5, 2.0, 6.0] {
            let p = accessibility_probe(&m, &SimConfig::default(), x0, 1e-3, 2000, 400, SeedSpec::new(8)).unwrap();
            assert!(p.p > 0.0);
        }
    }

    #[test]
    fn jensen_examples() {
        let j = jensen_gap(1.0, &EnvDistribution::constant(2.0).unwrap(), 1000, SeedSpec::new(0)).unwrap();
        assert_eq!((j.mean_ratio, j.ratio_of_mean, j.gap), (0.5, 0.5, 0.0));

        let j = jensen_gap(1.0, &EnvDistribution::uniform(1.0, 3.0).unwrap(), 100_000, SeedSpec::new(1)).unwrap();
        let oracle = 3f64.ln() / 2.0;
        assert!((j.mean_ratio - oracle).abs() < 4.0 * j.standard_error);
        assert!((oracle - 0.5 - 0.0493).abs() < 1e-4);
        assert_eq!(j.ratio_of_mean, 0.5);

        let j = jensen_gap(1.0, &EnvDistribution::lognormal(0.0, 0.5).unwrap(), 100_000, SeedSpec::new(2)).unwrap();
        assert!(j.gap > 4.0 * j.standard_error);
        assert!(jensen_gap(1.0, &EnvDistribution::normal(1.0, 1.0).unwrap(), 10, SeedSpec::new(0)).is_err());
    }

    #[test]
    fn report_line_lists_criteria() {
        let r = classify(&parse("ricker", &[("r", "normal:0.5,1"), ("a", "1")]), &Default::default()).unwrap();
        let line = r.record_line();
        assert!(line.starts_with("regime=stochastic_persistence"));
        assert!(line.contains("log_f_at_zero=0.5") && line.contains("log_f_at_zero_method=closed_form"));
        assert!(!line.contains('\n'));
    }
}
