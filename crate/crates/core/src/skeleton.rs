//! The unperturbed map `F0(x) = x f(x, E[xi])`: fixed points, the critical
//! point, the `F0(F0(C))` vs `M` test, chain reachability and invariant intervals.

use std::collections::VecDeque;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::env::EnvDistribution;
use crate::fitness::{EnvDraw, ModelSpec};
use crate::numerics::{bisect, golden_section_max};

const SCAN_POINTS: usize = 10_000;
const SCAN_FLOOR: f64 = 1e-12;
const ROOT_TOL: f64 = 1e-10;
const BORDERLINE_REL: f64 = 1e-6;
pub const DEFAULT_NODE_LIMIT: usize = 20_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonMap {
    model: ModelSpec,
    draw: EnvDraw,
    x_max: f64,
}

impl SkeletonMap {
    /// Skeleton of `model` with the default domain `[0, 5 max(largest fixed point, F0(C))]`.
    pub fn new(model: &ModelSpec) -> Self {
        let provisional = Self {
            model: model.skeleton_model(),
            draw: model.mean_draw(),
            x_max: 1.0,
        };
        let x_max = provisional.default_domain();
        Self { x_max, ..provisional }
    }

    pub fn with_domain(model: &ModelSpec, x_max: f64) -> Result<Self> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::Validation(format!("domain end must be positive and finite, got {x_max}")));
        }
        Ok(Self {
            model: model.skeleton_model(),
            draw: model.mean_draw(),
            x_max,
        })
    }

    fn default_domain(&self) -> f64 {
        // coarse doubling probe for the region holding the fixed points and the hump
        let probes: Vec<f64> = (-40..=40).map(|k| 2f64.powi(k)).collect();
        let lf: Vec<f64> = probes.iter().map(|&x| self.log_fitness(x)).collect();
        let fx: Vec<f64> = probes.iter().map(|&x| self.eval(x)).collect();
        let mut reach: f64 = 1.0;
        for k in 1..probes.len() {
            if (lf[k - 1] >= 0.0) != (lf[k] >= 0.0) {
                reach = reach.max(probes[k]);
            }
            if k + 1 < probes.len() && fx[k] > fx[k - 1] && fx[k] >= fx[k + 1] {
                reach = reach.max(probes[k + 1]);
            }
        }
        let coarse = Self {
            x_max: 4.0 * reach,
            ..self.clone()
        };
        let top_fixed = find_fixed_points(&coarse).points.last().copied();
        let peak_image = find_critical_point(&coarse).ok().map(|c| coarse.eval(c));
        match (top_fixed, peak_image) {
            (None, None) => coarse.x_max,
            (a, b) => 5.0 * a.unwrap_or(0.0).max(b.unwrap_or(0.0)),
        }
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn draw(&self) -> &EnvDraw {
        &self.draw
    }

    /// `F0(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.model.growth_map(x, &self.draw)
    }

    pub fn fitness(&self, x: f64) -> f64 {
        self.model.fitness(x, &self.draw)
    }

    pub fn log_fitness(&self, x: f64) -> f64 {
        self.model.log_fitness(x, &self.draw)
    }

    /// Scan grid on `(0, x_max]`: log-spaced below 1, linear above.
    pub(crate) fn scan_grid(&self) -> Vec<f64> {
        let hi = self.x_max;
        if hi <= 1.0 {
            return log_space(SCAN_FLOOR.min(hi * 1e-3), hi, SCAN_POINTS);
        }
        let half = SCAN_POINTS / 2;
        let mut g = log_space(SCAN_FLOOR, 1.0, half);
        g.pop();
        g.extend((0..=half).map(|i| 1.0 + (hi - 1.0) * i as f64 / half as f64));
        g
    }

    /// Image of `[lo, hi]`, from the endpoints and the critical point when inside.
    pub fn interval_image(&self, lo: f64, hi: f64, critical: Option<f64>) -> (f64, f64) {
        let mut vals = vec![self.eval(lo), self.eval(hi)];
        if let Some(c) = critical {
            if c > lo && c < hi {
                vals.push(self.eval(c));
            }
        }
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    v[n - 1] = hi;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoints {
    /// Positive fixed points in increasing order; 0 is always a fixed point and is not listed.
    pub points: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Roots of `f(x, E[xi]) = 1` on `(0, x_max]`, bracketed on the scan grid and refined by bisection.
pub fn find_fixed_points(map: &SkeletonMap) -> FixedPoints {
    let grid = map.scan_grid();
    let g: Vec<f64> = grid.iter().map(|&x| map.log_fitness(x)).collect();
    let root = |lo: f64, hi: f64| bisect(|x| map.log_fitness(x), lo, hi, ROOT_TOL);
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for i in 0..grid.len() - 1 {
        let (a, b) = (g[i], g[i + 1]);
        if a == 0.0 {
            points.push(grid[i]);
        } else if (a < 0.0) != (b < 0.0) && b != 0.0 {
            points.push(root(grid[i], grid[i + 1]));
        } else if a.is_finite() && b.is_finite() {
            // a pair of roots inside one scan cell shows up as a sign flip at the midpoint
            let mid = 0.5 * (grid[i] + grid[i + 1]);
            let gm = map.log_fitness(mid);
            if gm != 0.0 && (gm < 0.0) != (a < 0.0) {
                points.push(root(grid[i], mid));
                points.push(root(mid, grid[i + 1]));
                warnings.push(format!(
                    "two fixed points within one scan cell [{}, {}]",
                    grid[i],
                    grid[i + 1]
                ));
            }
        }
    }
    if g[grid.len() - 1] == 0.0 {
        points.push(grid[grid.len() - 1]);
    }
    FixedPoints { points, warnings }
}

/// Interior maximizer of `F0` on `(0, x_max]`.
pub fn find_critical_point(map: &SkeletonMap) -> Result<f64> {
    let grid = map.scan_grid();
    let vals: Vec<f64> = grid.iter().map(|&x| map.eval(x)).collect();
    let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    let n = grid.len();
    if best == 0 || best == n - 1 {
        return Err(Error::NoInteriorMaximum { x_max: map.x_max });
    }
    let (c, fc) = golden_section_max(|x| map.eval(x), grid[best - 1], grid[best + 1], ROOT_TOL);
    if !(vals[best - 1] < fc && vals[best + 1] < fc) {
        return Err(Error::NoInteriorMaximum { x_max: map.x_max });
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkeletonLabel {
    ExtinctionOnly,
    GlobalPersistence,
    PositiveAttractor,
    EssentialExtinction,
}

impl SkeletonLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkeletonLabel::ExtinctionOnly => "extinction_only",
            SkeletonLabel::GlobalPersistence => "global_persistence",
            SkeletonLabel::PositiveAttractor => "positive_attractor",
            SkeletonLabel::EssentialExtinction => "essential_extinction",
        }
    }
}

impl fmt::Display for SkeletonLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonClassification {
    pub label: SkeletonLabel,
    /// Smallest positive fixed point.
    pub m: Option<f64>,
    /// Critical point of `F0`.
    pub c: Option<f64>,
    /// `F0(F0(C))`.
    pub ffc: Option<f64>,
    pub fixed_points: Vec<f64>,
    /// Set when the decision sits within a relative `1e-6` of its boundary.
    pub borderline: bool,
    pub x_max: f64,
    pub warnings: Vec<String>,
}

pub fn classify_skeleton(map: &SkeletonMap) -> Result<SkeletonClassification> {
    let fps = find_fixed_points(map);
    let e = map.draw();
    let model = map.model();
    let grid_sup = map
        .scan_grid()
        .iter()
        .map(|&x| map.log_fitness(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let sup_log = model.sup_log_fitness(e).max(grid_sup);
    let log_f0 = model.log_fitness_at_zero(e);
    let near = |v: f64, scale: f64| v.abs() <= BORDERLINE_REL * scale.abs().max(1.0);
    let critical = find_critical_point(map).ok();
    let mut out = SkeletonClassification {
        label: SkeletonLabel::ExtinctionOnly,
        m: fps.points.first().copied(),
        c: critical,
        ffc: critical.map(|c| map.eval(map.eval(c))),
        fixed_points: fps.points.clone(),
        borderline: false,
        x_max: map.x_max(),
        warnings: fps.warnings,
    };
    if sup_log < 0.0 {
        out.borderline = near(sup_log, 1.0);
        return Ok(out);
    }
    if log_f0 > 0.0 {
        out.label = SkeletonLabel::GlobalPersistence;
        out.borderline = near(log_f0, 1.0);
        return Ok(out);
    }
    let c = find_critical_point(map)?;
    let ffc = map.eval(map.eval(c));
    let Some(m) = out.m else {
        // sup f touches 1 without crossing
        out.borderline = true;
        return Ok(out);
    };
    out.label = if ffc > m {
        SkeletonLabel::PositiveAttractor
    } else {
        SkeletonLabel::EssentialExtinction
    };
    out.borderline = near(ffc - m, m) || near(log_f0, 1.0);
    Ok(out)
}

/// Grid over `[0, x_max]` with edges `x -> y` whenever `|y - F0(x)| < eps`.
///
/// Successors of each node form a contiguous index range. Images above the
/// domain are clamped to the top node.
#[derive(Debug, Clone)]
pub struct ChainGraph {
    delta: f64,
    eps: f64,
    n: usize,
    ranges: Vec<(u32, u32)>,
}

impl ChainGraph {
    pub fn build(map: &SkeletonMap, eps: f64, delta: Option<f64>) -> Result<Self> {
        Self::build_with_limit(map, eps, delta, DEFAULT_NODE_LIMIT)
    }

    pub fn build_with_limit(map: &SkeletonMap, eps: f64, delta: Option<f64>, limit: usize) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Validation(format!("chain tolerance must be positive and finite, got {eps}")));
        }
        let delta = delta.unwrap_or(eps / 4.0);
        if !(delta > 0.0 && delta <= eps / 4.0) {
            return Err(Error::Validation(format!("grid spacing {delta} must be in (0, eps/4]")));
        }
        Self::from_bands(map.x_max(), delta, eps, limit, |x| {
            let y = map.eval(x);
            (y - eps, y + eps)
        })
    }

    fn from_bands(
        x_max: f64,
        delta: f64,
        eps: f64,
        limit: usize,
        band: impl Fn(f64) -> (f64, f64) + Sync,
    ) -> Result<Self> {
        let cells = (x_max / delta).ceil();
        if cells + 1.0 > limit as f64 {
            return Err(Error::GraphTooLarge {
                nodes: (cells + 1.0).min(usize::MAX as f64) as usize,
                limit,
            });
        }
        let n = cells as usize + 1;
        let top = n - 1;
        let ranges = (0..n)
            .into_par_iter()
            .map(|i| {
                let (lo, hi) = band(i as f64 * delta);
                if lo >= top as f64 * delta {
                    return (top as u32, top as u32);
                }
                // strict inequalities: nodes j with lo < j delta < hi
                let inside_lo = |j: usize| j as f64 * delta > lo;
                let inside_hi = |j: usize| (j as f64 * delta) < hi;
                let mut j_lo = ((lo / delta).floor().max(0.0) as usize).min(top);
                while j_lo > 0 && inside_lo(j_lo - 1) {
                    j_lo -= 1;
                }
                while j_lo < top && !inside_lo(j_lo) {
                    j_lo += 1;
                }
                let mut j_hi = ((hi / delta).ceil().max(0.0) as usize).min(top);
                while j_hi < top && inside_hi(j_hi + 1) {
                    j_hi += 1;
                }
                while j_hi > j_lo && !inside_hi(j_hi) {
                    j_hi -= 1;
                }
                (j_lo as u32, j_hi as u32)
            })
            .collect();
        Ok(Self { delta, eps, n, ranges })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.delta
    }

    pub fn nearest(&self, x: f64) -> usize {
        ((x / self.delta).round().max(0.0) as usize).min(self.n - 1)
    }

    pub fn successors(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        let (a, b) = self.ranges[i];
        a as usize..=b as usize
    }

    fn is_target(&self, i: usize, target: f64) -> bool {
        self.node(i) < target
    }

    /// Breadth-first search from the node nearest `from` to any node below `target`.
    pub fn reachable_to_zero(&self, from: f64, target: f64) -> bool {
        let start = self.nearest(from);
        if self.is_target(start, target) {
            return true;
        }
        let mut seen = vec![false; self.n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in self.successors(i) {
                if self.is_target(j, target) {
                    return true;
                }
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        false
    }

    /// For every node, whether some chain from it reaches below `target`.
    pub fn reaches_target(&self, target: f64) -> Vec<bool> {
        // reverse adjacency in compressed form
        let mut count = vec![0u32; self.n + 1];
        for i in 0..self.n {
            for j in self.successors(i) {
                count[j + 1] += 1;
            }
        }
        for j in 0..self.n {
            count[j + 1] += count[j];
        }
        let mut fill = count.clone();
        let mut preds = vec![0u32; count[self.n] as usize];
        for i in 0..self.n {
            for j in self.successors(i) {
                preds[fill[j] as usize] = i as u32;
                fill[j] += 1;
            }
        }
        let mut good = vec![false; self.n];
        let mut queue = VecDeque::new();
        for (i, g) in good.iter_mut().enumerate() {
            if self.node(i) < target {
                *g = true;
                queue.push_back(i);
            }
        }
        while let Some(j) = queue.pop_front() {
            for &i in &preds[count[j] as usize..count[j + 1] as usize] {
                if !good[i as usize] {
                    good[i as usize] = true;
                    queue.push_back(i as usize);
                }
            }
        }
        good
    }

    /// Whether every node in `[lo, hi]` chain-reaches below `target`.
    pub fn all_reach(&self, target: f64, lo: f64, hi: f64) -> bool {
        self.reaches_target(target)
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let x = self.node(*i);
                x >= lo && x <= hi
            })
            .all(|(_, &g)| g)
    }
}

/// Convenience wrapper: builds the graph and runs one search.
pub fn chain_reachable_to_zero(map: &SkeletonMap, eps: f64, from: f64, target: f64) -> Result<bool> {
    Ok(ChainGraph::build(map, eps, None)?.reachable_to_zero(from, target))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantInterval {
    pub lo: f64,
    pub hi: f64,
    pub eps: f64,
    pub iterations: usize,
}

impl InvariantInterval {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Grows `J -> hull(J, F0(J) +- eps)` from `seed` until the image lies inside `J`.
pub fn invariant_interval(map: &SkeletonMap, eps: f64, seed: (f64, f64)) -> Option<InvariantInterval> {
    let (mut lo, mut hi) = seed;
    if !(eps >= 0.0) || !(lo > 0.0) || hi < lo || !hi.is_finite() {
        return None;
    }
    let critical = find_critical_point(map).ok();
    for it in 0..1000 {
        let (a, b) = map.interval_image(lo, hi, critical);
        let (klo, khi) = (a - eps, b + eps);
        let slack = 1e-12 * hi.max(1.0);
        if klo >= lo - slack && khi <= hi + slack {
            return Some(InvariantInterval {
                lo,
                hi,
                eps,
                iterations: it,
            });
        }
        if !(klo > 0.0) || !khi.is_finite() {
            return None;
        }
        lo = lo.min(klo);
        hi = hi.max(khi);
    }
    None
}

/// Every corner of the support box of the random components; `None` if some
/// component is unbounded.
pub fn support_corners(model: &ModelSpec) -> Option<Vec<EnvDraw>> {
    let random = model.random_components();
    if random.iter().any(|&i| !model.params()[i].is_bounded()) {
        return None;
    }
    let bounds: Vec<(f64, f64)> = model.params().iter().map(|d| d.support_bounds()).collect();
    let base = model.mean_draw().as_slice().to_vec();
    Some(
        (0..1usize << random.len())
            .map(|mask| {
                let mut v = base.clone();
                for (bit, &i) in random.iter().enumerate() {
                    v[i] = if mask >> bit & 1 == 1 { bounds[i].1 } else { bounds[i].0 };
                }
                EnvDraw::from_slice(&v)
            })
            .collect(),
    )
}

/// Set-valued dynamics `x -> {x f(x, xi) : xi in support}` for bounded noise.
///
/// The support box is connected and the map is continuous, so the set reached
/// from a point after `t` steps is an interval; its ends follow from the corner
/// maps, which are unimodal for every family here.
#[derive(Debug, Clone)]
pub struct NoiseImage {
    model: ModelSpec,
    corners: Vec<EnvDraw>,
    critical: Vec<Option<f64>>,
}

impl NoiseImage {
    pub fn new(model: &ModelSpec, x_max: f64) -> Option<Self> {
        let corners = support_corners(model)?;
        let critical = corners
            .iter()
            .map(|c| {
                let fixed: Vec<EnvDistribution> = c
                    .as_slice()
                    .iter()
                    .map(|&v| EnvDistribution::Constant { value: v })
                    .collect();
                let names = model.param_names();
                let bindings: Vec<(&str, EnvDistribution)> = names.iter().copied().zip(fixed).collect();
                let corner_model = ModelSpec::new(model.family(), &bindings).ok()?;
                let map = SkeletonMap::with_domain(&corner_model, x_max).ok()?;
                find_critical_point(&map).ok()
            })
            .collect();
        Some(Self {
            model: model.clone(),
            corners,
            critical,
        })
    }

    /// `[min, max]` of `x f(x, xi)` over the support.
    pub fn band(&self, x: f64) -> (f64, f64) {
        self.corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            let y = self.model.growth_map(x, c);
            (lo.min(y), hi.max(y))
        })
    }

    /// Image of `[lo, hi]` under the set-valued map.
    pub fn interval_image(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
        for (c, crit) in self.corners.iter().zip(&self.critical) {
            let (ya, yb) = (self.model.growth_map(lo, c), self.model.growth_map(hi, c));
            // minimum of a hump sits at an end, the maximum at an end or at the peak
            a = a.min(ya.min(yb));
            b = b.max(ya.max(yb));
            if let Some(k) = *crit {
                if k > lo && k < hi {
                    b = b.max(self.model.growth_map(k, c));
                }
            }
        }
        (a, b)
    }

    /// Largest `tau` with `min_xi f(x, xi) < 1` on `(0, tau]`: below it the
    /// lowest branch drives the density to 0. Zero if no such region exists.
    pub fn descent_floor(&self, x_max: f64) -> f64 {
        let grid = log_space(SCAN_FLOOR, x_max, SCAN_POINTS);
        let shrinks = |x: f64| self.band(x).0 < x;
        let mut tau = 0.0;
        for &x in &grid {
            if shrinks(x) {
                tau = x;
            } else {
                break;
            }
        }
        tau
    }

    /// Whether the reachable interval from `x0` dips below `target` within `max_steps`.
    pub fn reaches_below(&self, x0: f64, target: f64, max_steps: usize) -> bool {
        if x0 < target {
            return true;
        }
        let (mut lo, mut hi) = self.band(x0);
        for _ in 0..max_steps {
            if lo < target {
                return true;
            }
            let (a, b) = self.interval_image(lo, hi);
            if a == lo && b == hi {
                return false;
            }
            lo = a;
            hi = b;
        }
        lo < target
    }
}

/// Largest deviation of `x f(x, xi)` from `F0(x)` over a domain grid and all
/// corners of the support box; infinite when some component is unbounded.
pub fn small_noise_bound(model: &ModelSpec) -> f64 {
    let random = model.random_components();
    if random.is_empty() {
        return 0.0;
    }
    if random.iter().any(|&i| !model.params()[i].is_bounded()) {
        return f64::INFINITY;
    }
    let map = SkeletonMap::new(model);
    let corners = support_corners(model).expect("bounded support");
    let dev = |x: f64| {
        let f0 = map.eval(x);
        corners
            .iter()
            .map(|c| (model.growth_map(x, c) - f0).abs())
            .fold(0.0, f64::max)
    };
    let grid = map.scan_grid();
    let (mut best, mut best_v) = (0, 0.0);
    for (i, &x) in grid.iter().enumerate() {
        let v = dev(x);
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    if best > 0 && best + 1 < grid.len() {
        let (_, v) = golden_section_max(dev, grid[best - 1], grid[best + 1], 1e-12);
        best_v = best_v.max(v);
    }
    best_v
}
