//! Environmental laws, parsing of distribution literals, and seeded sample streams.
//!
//! Every replicate draws from its own [`SampleStream`], a ChaCha8 keystream
//! keyed by the master seed and addressed by the replicate index. Output for
//! a given replicate therefore never depends on how replicates are scheduled.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// An i.i.d. law for one environmental component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvDistribution {
    Constant { value: f64 },
    Normal { mean: f64, sd: f64 },
    /// Parameterized by the mean and standard deviation of `log X`.
    LogNormal { log_mean: f64, log_sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Gamma { shape: f64, scale: f64 },
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!("{name} must be finite, got {v}")))
    }
}

impl EnvDistribution {
    pub fn constant(value: f64) -> Result<Self> {
        check_finite("value", value)?;
        Ok(Self::Constant { value })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        check_finite("mean", mean)?;
        check_finite("sd", sd)?;
        if sd < 0.0 {
            return Err(Error::InvalidDistribution(format!("normal sd must be >= 0, got {sd}")));
        }
        Ok(Self::Normal { mean, sd })
    }

    pub fn lognormal(log_mean: f64, log_sd: f64) -> Result<Self> {
        check_finite("log_mean", log_mean)?;
        check_finite("log_sd", log_sd)?;
        if log_sd < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "lognormal log_sd must be >= 0, got {log_sd}"
            )));
        }
        Ok(Self::LogNormal { log_mean, log_sd })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check_finite("lo", lo)?;
        check_finite("hi", hi)?;
        if lo > hi {
            return Err(Error::InvalidDistribution(format!("uniform needs lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        check_finite("shape", shape)?;
        check_finite("scale", scale)?;
        if shape <= 0.0 || scale <= 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "gamma needs shape > 0 and scale > 0, got ({shape}, {scale})"
            )));
        }
        Ok(Self::Gamma { shape, scale })
    }

    /// Re-checks the parameter invariants (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { value } => Self::constant(value).map(|_| ()),
            Self::Normal { mean, sd } => Self::normal(mean, sd).map(|_| ()),
            Self::LogNormal { log_mean, log_sd } => Self::lognormal(log_mean, log_sd).map(|_| ()),
            Self::Uniform { lo, hi } => Self::uniform(lo, hi).map(|_| ()),
            Self::Gamma { shape, scale } => Self::gamma(shape, scale).map(|_| ()),
        }
    }

    /// True when the law puts all its mass on a single point.
    pub fn is_degenerate(&self) -> bool {
        match *self {
            Self::Constant { .. } => true,
            Self::Normal { sd, .. } => sd == 0.0,
            Self::LogNormal { log_sd, .. } => log_sd == 0.0,
            Self::Uniform { lo, hi } => lo == hi,
            Self::Gamma { .. } => false,
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Self::LogNormal { log_mean, log_sd } => {
                let z: f64 = StandardNormal.sample(rng);
                (log_mean + log_sd * z).exp()
            }
            Self::Uniform { lo, hi } => {
                let u = unit_f64(rng.next_u64());
                lo + (hi - lo) * u
            }
            Self::Gamma { shape, scale } => Gamma::new(shape, scale)
                .expect("gamma parameters validated at construction")
                .sample(rng),
        }
    }

    /// Essential support `(lo, hi)`; infinite ends for unbounded laws.
    pub fn support_bounds(&self) -> (f64, f64) {
        match *self {
            Self::Constant { value } => (value, value),
            Self::Normal { mean, sd } if sd == 0.0 => (mean, mean),
            Self::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::LogNormal { log_mean, log_sd } if log_sd == 0.0 => (log_mean.exp(), log_mean.exp()),
            Self::LogNormal { .. } | Self::Gamma { .. } => (0.0, f64::INFINITY),
            Self::Uniform { lo, hi } => (lo, hi),
        }
    }

    pub fn is_bounded(&self) -> bool {
        let (lo, hi) = self.support_bounds();
        lo.is_finite() && hi.is_finite()
    }

    pub fn expected_value(&self) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Normal { mean, .. } => mean,
            Self::LogNormal { log_mean, log_sd } => (log_mean + 0.5 * log_sd * log_sd).exp(),
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Gamma { shape, scale } => shape * scale,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Constant { .. } => 0.0,
            Self::Normal { sd, .. } => sd * sd,
            Self::LogNormal { log_mean, log_sd } => {
                let s2 = log_sd * log_sd;
                (s2.exp() - 1.0) * (2.0 * log_mean + s2).exp()
            }
            Self::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Self::Gamma { shape, scale } => shape * scale * scale,
        }
    }

    /// Closed-form `E[log X]`, when one is available.
    pub fn mean_log(&self) -> Option<f64> {
        match *self {
            Self::Constant { value } => Some(value.ln()),
            Self::LogNormal { log_mean, .. } => Some(log_mean),
            Self::Uniform { lo, hi } if lo > 0.0 && hi > lo => {
                Some((hi * hi.ln() - lo * lo.ln()) / (hi - lo) - 1.0)
            }
            Self::Uniform { lo, .. } if lo > 0.0 => Some(lo.ln()),
            _ => None,
        }
    }

    /// Closed-form `E[1/X]`, when one is available and finite.
    pub fn mean_reciprocal(&self) -> Option<f64> {
        match *self {
            Self::Constant { value } if value != 0.0 => Some(1.0 / value),
            Self::LogNormal { log_mean, log_sd } => Some((-log_mean + 0.5 * log_sd * log_sd).exp()),
            Self::Uniform { lo, hi } if lo > 0.0 && hi > lo => Some((hi / lo).ln() / (hi - lo)),
            Self::Uniform { lo, .. } if lo > 0.0 => Some(1.0 / lo),
            Self::Gamma { shape, scale } if shape > 1.0 => Some(1.0 / ((shape - 1.0) * scale)),
            _ => None,
        }
    }

    /// `E[g(X)]` by adaptive quadrature against the density.
    ///
    /// Returns `None` for laws without a quadrature route (gamma).
    pub fn expect_quadrature<G: Fn(f64) -> f64>(&self, g: G) -> Option<f64> {
        const TOL: f64 = 1e-11;
        const Z_MAX: f64 = 12.0;
        match *self {
            Self::Constant { value } => Some(g(value)),
            Self::Normal { mean, sd } if sd == 0.0 => Some(g(mean)),
            Self::Normal { mean, sd } => Some(numerics::integrate(
                |z| weighted(numerics::normal_pdf(z), g(mean + sd * z)),
                -Z_MAX,
                Z_MAX,
                TOL,
            )),
            Self::LogNormal { log_mean, log_sd } if log_sd == 0.0 => Some(g(log_mean.exp())),
            Self::LogNormal { log_mean, log_sd } => Some(numerics::integrate(
                |z| weighted(numerics::normal_pdf(z), g((log_mean + log_sd * z).exp())),
                -Z_MAX,
                Z_MAX,
                TOL,
            )),
            Self::Uniform { lo, hi } if lo == hi => Some(g(lo)),
            Self::Uniform { lo, hi } => {
                Some(numerics::integrate(g, lo, hi, TOL * (hi - lo)) / (hi - lo))
            }
            Self::Gamma { .. } => None,
        }
    }

    /// Copy of this law moved so that its location parameter equals `v`.
    ///
    /// Location means: the constant, the normal mean, the lognormal log-mean,
    /// the uniform midpoint (width kept), or the gamma mean (shape kept).
    pub fn with_location(&self, v: f64) -> Result<Self> {
        match *self {
            Self::Constant { .. } => Self::constant(v),
            Self::Normal { sd, .. } => Self::normal(v, sd),
            Self::LogNormal { log_sd, .. } => Self::lognormal(v, log_sd),
            Self::Uniform { lo, hi } => {
                let half = 0.5 * (hi - lo);
                Self::uniform(v - half, v + half)
            }
            Self::Gamma { shape, .. } => Self::gamma(shape, v / shape),
        }
    }
}

// 0 * inf inside a quadrature weight is a density that has already vanished
fn weighted(w: f64, v: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * v
    }
}

/// 53 random mantissa bits mapped to `[0, 1)`.
fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl fmt::Display for EnvDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Constant { value } => write!(f, "const:{value}"),
            Self::Normal { mean, sd } => write!(f, "normal:{mean},{sd}"),
            Self::LogNormal { log_mean, log_sd } => write!(f, "lognormal:{log_mean},{log_sd}"),
            Self::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Self::Gamma { shape, scale } => write!(f, "gamma:{shape},{scale}"),
        }
    }
}

impl FromStr for EnvDistribution {
    type Err = Error;

    /// Parses `kind:p1,p2` literals such as `lognormal:0.1,0.5` or `const:10`.
    /// A bare number is read as a constant.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::ParseLiteral {
            literal: s.to_string(),
            reason: reason.to_string(),
        };
        let s_trim = s.trim();
        if let Ok(v) = s_trim.parse::<f64>() {
            return Self::constant(v);
        }
        let (kind, rest) = s_trim.split_once(':').ok_or_else(|| bad("expected `kind:params`"))?;
        let params = rest
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad("parameters must be numbers")))
            .collect::<Result<Vec<_>>>()?;
        let want = |n: usize| {
            if params.len() == n {
                Ok(())
            } else {
                Err(bad(&format!("`{kind}` takes {n} parameter(s), got {}", params.len())))
            }
        };
        match kind.trim().to_ascii_lowercase().as_str() {
            "const" | "constant" => {
                want(1)?;
                Self::constant(params[0])
            }
            "normal" => {
                want(2)?;
                Self::normal(params[0], params[1])
            }
            "lognormal" => {
                want(2)?;
                Self::lognormal(params[0], params[1])
            }
            "uniform" => {
                want(2)?;
                Self::uniform(params[0], params[1])
            }
            "gamma" => {
                want(2)?;
                Self::gamma(params[0], params[1])
            }
            other => Err(bad(&format!("unknown kind `{other}`"))),
        }
    }
}

/// Master seed from which all per-replicate streams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Stream for one replicate: the ChaCha8 key comes from the master seed
    /// and the replicate index selects the 64-bit stream id.
    pub fn stream(&self, replicate: u64) -> SampleStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(replicate);
        SampleStream { rng, replicate }
    }

    /// Independent seed family for a different purpose (e.g. one per sweep point).
    pub fn derive(&self, tag: u64) -> SeedSpec {
        SeedSpec::new(splitmix64(self.master_seed ^ splitmix64(tag.wrapping_add(0x5151))))
    }
}

/// A reproducible, independent source of draws owned by one replicate.
#[derive(Debug, Clone)]
pub struct SampleStream {
    rng: ChaCha8Rng,
    replicate: u64,
}

impl SampleStream {
    pub fn replicate(&self) -> u64 {
        self.replicate
    }

    pub fn draw(&mut self, dist: &EnvDistribution) -> f64 {
        dist.sample(&mut self.rng)
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        unit_f64(self.rng.next_u64())
    }
}

impl RngCore for SampleStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Draw one sample from `dist` using `stream`.
pub fn sample(dist: &EnvDistribution, stream: &mut SampleStream) -> f64 {
    stream.draw(dist)
}
