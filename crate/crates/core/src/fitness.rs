//! Fitness families `f(x, xi)` and their analytic limits.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::{EnvDistribution, SampleStream};
use crate::error::{Error, Result};

/// Most components any family has.
pub const MAX_PARAMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `exp(r - a x)`
    Ricker,
    /// `a / (1 + b x)`
    BevertonHolt,
    /// `lambda x / (h + x)`
    MateLimitation,
    /// `exp(r - P / (h + x))`
    PredatorSaturation,
    /// `exp(r - a x) x / (h + x)`
    MateLimitationNdd,
    /// `exp(r - a x - P / (h + x))`
    PredatorSaturationNdd,
    /// `exp(gamma (x - C) + xi)`
    #[serde(rename = "liebhold")]
    LiebholdBascompte,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 7] = [
        FamilyKind::Ricker,
        FamilyKind::BevertonHolt,
        FamilyKind::MateLimitation,
        FamilyKind::PredatorSaturation,
        FamilyKind::MateLimitationNdd,
        FamilyKind::PredatorSaturationNdd,
        FamilyKind::LiebholdBascompte,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            FamilyKind::Ricker => "ricker",
            FamilyKind::BevertonHolt => "beverton-holt",
            FamilyKind::MateLimitation => "mate-limitation",
            FamilyKind::PredatorSaturation => "predator-saturation",
            FamilyKind::MateLimitationNdd => "mate-limitation-ndd",
            FamilyKind::PredatorSaturationNdd => "predator-saturation-ndd",
            FamilyKind::LiebholdBascompte => "liebhold",
        }
    }

    pub fn from_cli_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.cli_name() == name)
            .ok_or_else(|| Error::UnknownFamily(name.to_string()))
    }

    /// Component names, in the order used by [`EnvDraw`].
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FamilyKind::Ricker => &["r", "a"],
            FamilyKind::BevertonHolt => &["a", "b"],
            FamilyKind::MateLimitation => &["lambda", "h"],
            FamilyKind::PredatorSaturation => &["r", "P", "h"],
            FamilyKind::MateLimitationNdd => &["r", "a", "h"],
            FamilyKind::PredatorSaturationNdd => &["r", "a", "h", "P"],
            FamilyKind::LiebholdBascompte => &["gamma", "C", "xi"],
        }
    }

    fn param_index(self, name: &str) -> Option<usize> {
        self.param_names().iter().position(|&n| n == name)
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

/// One realization of the environment vector, in family parameter order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvDraw {
    values: [f64; MAX_PARAMS],
    len: usize,
}

impl EnvDraw {
    pub fn from_slice(values: &[f64]) -> Self {
        assert!(values.len() <= MAX_PARAMS);
        let mut v = [0.0; MAX_PARAMS];
        v[..values.len()].copy_from_slice(values);
        Self { values: v, len: values.len() }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len]
    }
}

/// Shape of `x -> f(x, xi)`, as used by the regime classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MonotonicityClass {
    DecreasingInX,
    IncreasingInX,
    /// Increasing on `[0, gamma)` for every environment in the support; `None` if no
    /// positive `gamma` can be certified.
    Mixed { increasing_prefix: Option<f64> },
}

impl fmt::Display for MonotonicityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DecreasingInX => f.write_str("decreasing in x"),
            Self::IncreasingInX => f.write_str("increasing in x"),
            Self::Mixed { increasing_prefix: Some(g) } => write!(f, "mixed (increasing on [0, {g}))"),
            Self::Mixed { increasing_prefix: None } => f.write_str("mixed (increasing prefix unknown)"),
        }
    }
}

/// A fitness family with every parameter bound to an environmental law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    family: FamilyKind,
    params: Vec<EnvDistribution>,
}

impl ModelSpec {
    /// Binds named parameters; the names must match the family's exactly.
    pub fn new(family: FamilyKind, bindings: &[(&str, EnvDistribution)]) -> Result<Self> {
        let map: BTreeMap<String, EnvDistribution> =
            bindings.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        if map.len() != bindings.len() {
            return Err(mismatch(family, "duplicate parameter name"));
        }
        Self::from_named(family, &map)
    }

    pub fn from_named(family: FamilyKind, bindings: &BTreeMap<String, EnvDistribution>) -> Result<Self> {
        let names = family.param_names();
        for key in bindings.keys() {
            if family.param_index(key).is_none() {
                return Err(mismatch(
                    family,
                    &format!("unknown parameter `{key}` (expected {})", names.join(", ")),
                ));
            }
        }
        let params = names
            .iter()
            .map(|n| {
                bindings
                    .get(*n)
                    .copied()
                    .ok_or_else(|| mismatch(family, &format!("missing parameter `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = Self { family, params };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a model from `name=literal` pairs, e.g. `("lambda", "lognormal:0.1,0.5")`.
    pub fn parse(family: &str, bindings: &[(&str, &str)]) -> Result<Self> {
        let family = FamilyKind::from_cli_name(family)?;
        let parsed = bindings
            .iter()
            .map(|(k, v)| Ok((*k, v.parse::<EnvDistribution>()?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(family, &parsed)
    }

    fn validate(&self) -> Result<()> {
        for d in &self.params {
            d.validate()?;
        }
        let nonneg: &[&str] = match self.family {
            FamilyKind::Ricker => &["a"],
            FamilyKind::BevertonHolt => &["a", "b"],
            FamilyKind::MateLimitation => &["lambda", "h"],
            FamilyKind::PredatorSaturation => &["P", "h"],
            FamilyKind::MateLimitationNdd => &["a", "h"],
            FamilyKind::PredatorSaturationNdd => &["a", "h", "P"],
            FamilyKind::LiebholdBascompte => &["gamma"],
        };
        for name in nonneg {
            let d = self.param(name).expect("name from family table");
            if d.support_bounds().0 < 0.0 {
                return Err(mismatch(
                    self.family,
                    &format!("parameter `{name}` must be non-negative, but {d} has negative support"),
                ));
            }
        }
        if let Some(h) = self.param("h") {
            if h.expected_value() <= 0.0 {
                return Err(mismatch(self.family, "half-saturation `h` must be positive"));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> FamilyKind {
        self.family
    }

    pub fn params(&self) -> &[EnvDistribution] {
        &self.params
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        self.family.param_names()
    }

    pub fn param(&self, name: &str) -> Option<&EnvDistribution> {
        self.family.param_index(name).map(|i| &self.params[i])
    }

    /// Copy with one parameter rebound.
    pub fn with_param(&self, name: &str, dist: EnvDistribution) -> Result<Self> {
        let i = self
            .family
            .param_index(name)
            .ok_or_else(|| mismatch(self.family, &format!("unknown parameter `{name}`")))?;
        let mut out = self.clone();
        out.params[i] = dist;
        out.validate()?;
        Ok(out)
    }

    /// Indices of the components that are not point masses.
    pub fn random_components(&self) -> Vec<usize> {
        (0..self.params.len()).filter(|&i| !self.params[i].is_degenerate()).collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.random_components().is_empty()
    }

    /// One environment draw. Every component consumes the stream on every call,
    /// so paths driven by the same stream see the same environment sequence.
    pub fn draw(&self, stream: &mut SampleStream) -> EnvDraw {
        let mut v = [0.0; MAX_PARAMS];
        for (slot, d) in v.iter_mut().zip(&self.params) {
            *slot = stream.draw(d);
        }
        EnvDraw { values: v, len: self.params.len() }
    }

    /// Environment assembled from named component values.
    pub fn draw_from_named(&self, values: &BTreeMap<String, f64>) -> Result<EnvDraw> {
        let names = self.param_names();
        if let Some(extra) = values.keys().find(|k| self.family.param_index(k).is_none()) {
            return Err(mismatch(self.family, &format!("unknown component `{extra}`")));
        }
        let v = names
            .iter()
            .map(|n| {
                values
                    .get(*n)
                    .copied()
                    .ok_or_else(|| mismatch(self.family, &format!("missing component `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnvDraw::from_slice(&v))
    }

    /// Environment frozen at its mean, `E[xi]`.
    pub fn mean_draw(&self) -> EnvDraw {
        let v: Vec<f64> = self.params.iter().map(|d| d.expected_value()).collect();
        EnvDraw::from_slice(&v)
    }

    /// The same family with every component replaced by its expected value.
    pub fn skeleton_model(&self) -> ModelSpec {
        ModelSpec {
            family: self.family,
            params: self
                .params
                .iter()
                .map(|d| EnvDistribution::Constant { value: d.expected_value() })
                .collect(),
        }
    }

    /// `log f(x, xi)`, evaluated in log space for the exponential families.
    pub fn log_fitness(&self, x: f64, e: &EnvDraw) -> f64 {
        let p = |i| e.get(i);
        match self.family {
            FamilyKind::Ricker => p(0) - p(1) * x,
            FamilyKind::BevertonHolt => p(0).ln() - (p(1) * x).ln_1p(),
            FamilyKind::MateLimitation => p(0).ln() + saturation_log(x, p(1)),
            FamilyKind::PredatorSaturation => p(0) - p(1) / (p(2) + x),
            FamilyKind::MateLimitationNdd => p(0) - p(1) * x + saturation_log(x, p(2)),
            FamilyKind::PredatorSaturationNdd => p(0) - p(1) * x - p(3) / (p(2) + x),
            FamilyKind::LiebholdBascompte => p(0) * (x - p(1)) + p(2),
        }
    }

    /// `f(x, xi)`.
    pub fn fitness(&self, x: f64, e: &EnvDraw) -> f64 {
        let p = |i| e.get(i);
        match self.family {
            FamilyKind::BevertonHolt => p(0) / (1.0 + p(1) * x),
            FamilyKind::MateLimitation => {
                if x == 0.0 {
                    0.0
                } else {
                    p(0) * x / (p(1) + x)
                }
            }
            _ => self.log_fitness(x, e).exp(),
        }
    }

    /// `x f(x, xi)`, the one-step map.
    pub fn growth_map(&self, x: f64, e: &EnvDraw) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            x * self.fitness(x, e)
        }
    }

    /// Analytic `f(0, xi)`; exactly 0 for the mate-limitation families.
    pub fn fitness_at_zero(&self, e: &EnvDraw) -> f64 {
        self.log_fitness_at_zero(e).exp()
    }

    pub fn log_fitness_at_zero(&self, e: &EnvDraw) -> f64 {
        let p = |i| e.get(i);
        match self.family {
            FamilyKind::Ricker => p(0),
            FamilyKind::BevertonHolt => p(0).ln(),
            FamilyKind::MateLimitation | FamilyKind::MateLimitationNdd => f64::NEG_INFINITY,
            FamilyKind::PredatorSaturation => p(0) - p(1) / p(2),
            FamilyKind::PredatorSaturationNdd => p(0) - p(3) / p(2),
            FamilyKind::LiebholdBascompte => -p(0) * p(1) + p(2),
        }
    }

    /// Analytic `f_inf(xi) = lim_{x -> inf} f(x, xi)`.
    pub fn fitness_at_infinity(&self, e: &EnvDraw) -> f64 {
        self.log_fitness_at_infinity(e).exp()
    }

    pub fn log_fitness_at_infinity(&self, e: &EnvDraw) -> f64 {
        let p = |i| e.get(i);
        let neg_if_positive = |rate: f64, otherwise: f64| if rate > 0.0 { f64::NEG_INFINITY } else { otherwise };
        match self.family {
            FamilyKind::Ricker => neg_if_positive(p(1), p(0)),
            FamilyKind::BevertonHolt => neg_if_positive(p(1), p(0).ln()),
            FamilyKind::MateLimitation => p(0).ln(),
            FamilyKind::PredatorSaturation => p(0),
            FamilyKind::MateLimitationNdd | FamilyKind::PredatorSaturationNdd => neg_if_positive(p(1), p(0)),
            FamilyKind::LiebholdBascompte => {
                if p(0) > 0.0 {
                    f64::INFINITY
                } else {
                    -p(0) * p(1) + p(2)
                }
            }
        }
    }

    /// Maximizer of `x -> f(x, xi)` on `[0, inf)`; `None` when the supremum is only
    /// approached as `x -> inf`.
    pub fn fitness_peak(&self, e: &EnvDraw) -> Option<f64> {
        let p = |i| e.get(i);
        match self.family {
            FamilyKind::Ricker | FamilyKind::BevertonHolt => Some(0.0),
            FamilyKind::MateLimitation | FamilyKind::PredatorSaturation | FamilyKind::LiebholdBascompte => None,
            FamilyKind::MateLimitationNdd => {
                let (a, h) = (p(1), p(2));
                // d/dx log f = -a + h / (x (h + x))
                (a > 0.0).then(|| 0.5 * (-h + (h * h + 4.0 * h / a).sqrt()))
            }
            FamilyKind::PredatorSaturationNdd => {
                let (a, h, big_p) = (p(1), p(2), p(3));
                // d/dx log f = -a + P / (h + x)^2
                (a > 0.0).then(|| ((big_p / a).sqrt() - h).max(0.0))
            }
        }
    }

    /// `sup_{x > x_c} log f(x, xi)`.
    pub fn tail_sup_log_fitness(&self, x_c: f64, e: &EnvDraw) -> Result<f64> {
        if self.family == FamilyKind::LiebholdBascompte && e.get(0) > 0.0 {
            return Err(Error::UnboundedSup(self.family.to_string()));
        }
        Ok(match self.fitness_peak(e) {
            Some(peak) => self.log_fitness(peak.max(x_c), e),
            None => self.log_fitness_at_infinity(e),
        })
    }

    /// `sup_{x >= 0} log f(x, xi)`.
    pub fn sup_log_fitness(&self, e: &EnvDraw) -> f64 {
        match self.fitness_peak(e) {
            Some(peak) => self.log_fitness(peak, e),
            None => self.log_fitness_at_infinity(e),
        }
    }

    pub fn monotonicity(&self) -> MonotonicityClass {
        match self.family {
            FamilyKind::Ricker | FamilyKind::BevertonHolt => MonotonicityClass::DecreasingInX,
            FamilyKind::MateLimitation | FamilyKind::PredatorSaturation | FamilyKind::LiebholdBascompte => {
                MonotonicityClass::IncreasingInX
            }
            FamilyKind::MateLimitationNdd => {
                let (_, a_hi) = self.params[1].support_bounds();
                let (h_lo, _) = self.params[2].support_bounds();
                let prefix = if a_hi == 0.0 {
                    Some(f64::INFINITY)
                } else if a_hi.is_finite() && h_lo > 0.0 {
                    Some(0.5 * (-h_lo + (h_lo * h_lo + 4.0 * h_lo / a_hi).sqrt()))
                } else {
                    None
                };
                MonotonicityClass::Mixed { increasing_prefix: prefix }
            }
            FamilyKind::PredatorSaturationNdd => {
                let (_, a_hi) = self.params[1].support_bounds();
                let (_, h_hi) = self.params[2].support_bounds();
                let (p_lo, _) = self.params[3].support_bounds();
                let prefix = if a_hi == 0.0 {
                    Some(f64::INFINITY)
                } else if a_hi.is_finite() && h_hi.is_finite() {
                    let g = (p_lo / a_hi).sqrt() - h_hi;
                    (g > 0.0).then_some(g)
                } else {
                    None
                };
                MonotonicityClass::Mixed { increasing_prefix: prefix }
            }
        }
    }

    /// `name=literal` pairs in parameter order.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .param_names()
            .iter()
            .zip(&self.params)
            .map(|(n, d)| format!("{n}={d}"))
            .collect();
        format!("{} {}", self.family, parts.join(" "))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

// log(x / (h + x)) without cancellation for small or large x
fn saturation_log(x: f64, h: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        -(h / x).ln_1p()
    }
}

fn mismatch(family: FamilyKind, reason: &str) -> Error {
    Error::ParameterMismatch {
        family: family.to_string(),
        reason: reason.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SeedSpec;
    use crate::numerics::golden_section_max;

    fn constant_model(family: &str, params: &[(&str, f64)]) -> ModelSpec {
        let lits: Vec<(&str, String)> = params.iter().map(|(k, v)| (*k, format!("const:{v}"))).collect();
        let refs: Vec<(&str, &str)> = lits.iter().map(|(k, v)| (*k, v.as_str())).collect();
        ModelSpec::parse(family, &refs).unwrap()
    }

    fn at_mean(m: &ModelSpec) -> EnvDraw {
        m.mean_draw()
    }

    #[test]
    fn fitness_examples() {
        let ml = constant_model("mate-limitation", &[("lambda", 2.0), ("h", 10.0)]);
        assert!((ml.fitness(10.0, &at_mean(&ml)) - 1.0).abs() < 1e-15);

        let ricker = constant_model("ricker", &[("r", 2.0), ("a", 1.0)]);
        assert_eq!(ricker.fitness(2.0, &at_mean(&ricker)), 1.0);

        let psndd = constant_model("predator-saturation-ndd", &[("r", 4.0), ("a", 4.0), ("h", 1.0 / 12.0), ("P", 1.0)]);
        let v = psndd.fitness(0.0, &at_mean(&psndd));
        assert!((v / (-8f64).exp() - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn limits_at_zero() {
        let ml = ModelSpec::parse("mate-limitation", &[("lambda", "lognormal:0.1,0.5"), ("h", "10")]).unwrap();
        let mut s = SeedSpec::new(1).stream(0);
        for _ in 0..10 {
            let e = ml.draw(&mut s);
            assert_eq!(ml.fitness_at_zero(&e), 0.0);
            assert_eq!(ml.log_fitness_at_zero(&e), f64::NEG_INFINITY);
        }
        let ps = constant_model("predator-saturation", &[("r", 1.5), ("P", 2.0), ("h", 4.0)]);
        assert!((ps.fitness_at_zero(&at_mean(&ps)) - (1.5f64 - 0.5).exp()).abs() < 1e-14);
        let ricker = constant_model("ricker", &[("r", 0.7), ("a", 3.0)]);
        assert_eq!(ricker.fitness_at_zero(&at_mean(&ricker)), 0.7f64.exp());
    }

    #[test]
    fn limits_at_infinity() {
        let ml = constant_model("mate-limitation", &[("lambda", 1.2), ("h", 10.0)]);
        assert!((ml.fitness_at_infinity(&at_mean(&ml)) - 1.2).abs() < 1e-15);
        let ricker = constant_model("ricker", &[("r", 0.7), ("a", 3.0)]);
        assert_eq!(ricker.fitness_at_infinity(&at_mean(&ricker)), 0.0);
        let lb = constant_model("liebhold", &[("gamma", 0.5), ("C", 2.0), ("xi", 0.0)]);
        assert_eq!(lb.fitness_at_infinity(&at_mean(&lb)), f64::INFINITY);
    }

    #[test]
    fn tail_sup_examples() {
        let ricker = constant_model("ricker", &[("r", 2.0), ("a", 1.0)]);
        assert_eq!(ricker.tail_sup_log_fitness(3.0, &at_mean(&ricker)).unwrap(), -1.0);

        let bh = constant_model("beverton-holt", &[("a", 2.0), ("b", 1.0)]);
        assert!(bh.tail_sup_log_fitness(1.0, &at_mean(&bh)).unwrap().abs() < 1e-15);

        let mlndd = constant_model("mate-limitation-ndd", &[("r", 4.5), ("a", 1.0), ("h", 10.0)]);
        let e = at_mean(&mlndd);
        // oracle: grid argmax of log f on [0, 100]
        let (grid_peak, _) = (1..=1_000_000)
            .map(|i| i as f64 * 1e-4)
            .map(|x| (x, mlndd.log_fitness(x, &e)))
            .fold((0.0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        assert!(grid_peak < 20.0);
        let want = 4.5 - 20.0 + (20.0f64 / 30.0).ln();
        let got = mlndd.tail_sup_log_fitness(20.0, &e).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");

        let lb = constant_model("liebhold", &[("gamma", 0.5), ("C", 2.0), ("xi", 0.0)]);
        assert!(matches!(lb.tail_sup_log_fitness(1.0, &at_mean(&lb)), Err(Error::UnboundedSup(_))));
    }

    #[test]
    fn closed_form_peaks_match_golden_section() {
        let cases = [
            constant_model("mate-limitation-ndd", &[("r", 4.5), ("a", 1.0), ("h", 10.0)]),
            constant_model("mate-limitation-ndd", &[("r", 1.0), ("a", 0.3), ("h", 2.0)]),
            constant_model("predator-saturation-ndd", &[("r", 4.0), ("a", 4.0), ("h", 1.0 / 12.0), ("P", 1.0)]),
            constant_model("predator-saturation-ndd", &[("r", 4.0), ("a", 1.0), ("h", 0.5), ("P", 3.0)]),
        ];
        for m in &cases {
            let e = at_mean(m);
            let peak = m.fitness_peak(&e).unwrap();
            let r = e.get(0);
            let a = e.get(1);
            let h = e.get(2);
            let x_hi = 10.0 * (h + r / a);
            let (gx, _) = golden_section_max(|x| m.log_fitness(x, &e), 0.0, x_hi, 1e-10);
            assert!((gx - peak).abs() < 1e-6, "{m}: {gx} vs {peak}");
        }
    }

    #[test]
    fn parameter_mismatch() {
        assert!(matches!(
            ModelSpec::parse("ricker", &[("r", "1")]),
            Err(Error::ParameterMismatch { .. })
        ));
        assert!(matches!(
            ModelSpec::parse("ricker", &[("r", "1"), ("a", "1"), ("b", "1")]),
            Err(Error::ParameterMismatch { .. })
        ));
        assert!(matches!(ModelSpec::parse("logistic", &[]), Err(Error::UnknownFamily(_))));
        assert!(ModelSpec::parse("beverton-holt", &[("a", "normal:1,1"), ("b", "1")]).is_err());
        let m = constant_model("ricker", &[("r", 1.0), ("a", 1.0)]);
        let mut named = BTreeMap::new();
        named.insert("r".to_string(), 1.0);
        assert!(m.draw_from_named(&named).is_err());
        named.insert("a".to_string(), 2.0);
        assert_eq!(m.draw_from_named(&named).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn monotonicity_classes() {
        let psndd = ModelSpec::parse(
            "predator-saturation-ndd",
            &[("r", "4"), ("a", "4"), ("h", "0.0833333333333333"), ("P", "uniform:0.9,1.1")],
        )
        .unwrap();
        match psndd.monotonicity() {
            MonotonicityClass::Mixed { increasing_prefix: Some(g) } => {
                assert!((g - ((0.9f64 / 4.0).sqrt() - 1.0 / 12.0)).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
        let mlndd = constant_model("mate-limitation-ndd", &[("r", 4.5), ("a", 1.0), ("h", 10.0)]);
        let MonotonicityClass::Mixed { increasing_prefix: Some(g) } = mlndd.monotonicity() else {
            panic!()
        };
        assert!((g - mlndd.fitness_peak(&at_mean(&mlndd)).unwrap()).abs() < 1e-12);
        assert_eq!(
            constant_model("ricker", &[("r", 1.0), ("a", 1.0)]).monotonicity(),
            MonotonicityClass::DecreasingInX
        );
    }

    fn property_models() -> Vec<ModelSpec> {
        let specs: &[(&str, &[(&str, &str)])] = &[
            ("ricker", &[("r", "normal:0.5,1"), ("a", "lognormal:0,0.3")]),
            ("beverton-holt", &[("a", "lognormal:0.3,0.2"), ("b", "uniform:0.5,1.5")]),
            ("mate-limitation", &[("lambda", "lognormal:0.1,0.5"), ("h", "lognormal:2.3,0.2")]),
            ("predator-saturation", &[("r", "normal:1,0.5"), ("P", "gamma:2,1"), ("h", "uniform:0.5,2")]),
            ("mate-limitation-ndd", &[("r", "uniform:4,5"), ("a", "1"), ("h", "uniform:5,15")]),
            (
                "predator-saturation-ndd",
                &[("r", "4"), ("a", "uniform:3,5"), ("h", "0.0833333333333333"), ("P", "uniform:0.5,1.5")],
            ),
            ("liebhold", &[("gamma", "0.5"), ("C", "2"), ("xi", "normal:0,1")]),
        ];
        specs.iter().map(|(f, p)| ModelSpec::parse(f, p).unwrap()).collect()
    }

    #[test]
    fn monotonicity_conformance() {
        let mut s = SeedSpec::new(77).stream(0);
        for m in property_models() {
            let class = m.monotonicity();
            for _ in 0..1000 {
                let e = m.draw(&mut s);
                let x1 = 20.0 * s.unit();
                let x2 = x1 + 20.0 * s.unit();
                let (f1, f2) = (m.fitness(x1, &e), m.fitness(x2, &e));
                match class {
                    MonotonicityClass::DecreasingInX => assert!(f1 >= f2, "{m} at {x1},{x2}"),
                    MonotonicityClass::IncreasingInX => assert!(f1 <= f2, "{m} at {x1},{x2}"),
                    MonotonicityClass::Mixed { increasing_prefix: Some(g) } => {
                        let (y1, y2) = (x1 * g / 40.0, x2 * g / 40.0);
                        assert!(m.fitness(y1, &e) <= m.fitness(y2, &e), "{m} at {y1},{y2}");
                    }
                    MonotonicityClass::Mixed { increasing_prefix: None } => panic!("{m}: unknown prefix"),
                }
            }
        }
    }

    #[test]
    fn limit_consistency() {
        let mut s = SeedSpec::new(5).stream(0);
        for m in property_models() {
            for _ in 0..20 {
                let e = m.draw(&mut s);
                let f_inf = m.fitness_at_infinity(&e);
                if f_inf.is_finite() {
                    let gaps: Vec<f64> = [1e2, 1e4, 1e6].iter().map(|&x| (m.fitness(x, &e) - f_inf).abs()).collect();
                    assert!(gaps[0] >= gaps[1] && gaps[1] >= gaps[2], "{m}: {gaps:?}");
                    assert!(gaps[2] < 1e-3 * f_inf.max(1.0), "{m}: {gaps:?}");
                }
                let f0 = m.fitness_at_zero(&e);
                let gaps: Vec<f64> = [1e-2, 1e-4, 1e-6].iter().map(|&x| (m.fitness(x, &e) - f0).abs()).collect();
                assert!(gaps[0] >= gaps[1] && gaps[1] >= gaps[2], "{m}: {gaps:?}");
            }
        }
    }

    #[test]
    fn tail_sup_dominates_probes() {
        let mut s = SeedSpec::new(6).stream(0);
        for m in property_models() {
            if m.family() == FamilyKind::LiebholdBascompte {
                continue;
            }
            for _ in 0..1000 {
                let e = m.draw(&mut s);
                let x_c = 0.05 + 5.0 * s.unit();
                let sup = m.tail_sup_log_fitness(x_c, &e).unwrap();
                let x = x_c + 50.0 * s.unit() * s.unit();
                assert!(sup >= m.log_fitness(x, &e) - 1e-12, "{m} x_c={x_c} x={x}");
            }
        }
    }

    #[test]
    fn finite_and_continuous() {
        let mut s = SeedSpec::new(8).stream(0);
        for m in property_models() {
            let e = m.draw(&mut s);
            assert!(m.fitness(0.0, &e).is_finite());
            let mut x: f64 = 1e-9;
            while x <= 1e6 {
                let lf = m.log_fitness(x, &e);
                assert!(!lf.is_nan(), "{m} at {x}");
                // the only family whose fitness exceeds the f64 range on this domain
                if lf < 700.0 {
                    let f = m.fitness(x, &e);
                    let next = m.fitness(x * (1.0 + 1e-6), &e);
                    assert!(f.is_finite() && f >= 0.0, "{m} at {x}: {f}");
                    assert!((next - f).abs() <= 1e-2 * f.max(next) + 1e-12, "{m} jump at {x}");
                } else {
                    assert_eq!(m.family(), FamilyKind::LiebholdBascompte);
                }
                x *= 1.01;
            }
        }
    }
}
