//! Drawing the number of instructions per mosaic sample.

use std::collections::BTreeMap;

use rand::distr::{Distribution, Open01};
use rand::Rng;
use rand_distr::{Exp, LogNormal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{MosaicError, Result};

/// Upper bound on resampling attempts for continuous families. Valid
/// parameters put far more than 1e-6 mass below `k_max`; past this the draw
/// clamps to k = 1.
const MAX_RESAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KFamily {
    Fix,
    Uniform,
    Exponential { lambda: f64 },
    #[serde(rename = "lognormal")]
    LogNormal { mu: f64, sigma: f64 },
    Logistic { mu: f64, s: f64 },
    Pareto { m: f64, alpha: f64 },
}

impl KFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KFamily::Fix => "fix",
            KFamily::Uniform => "uniform",
            KFamily::Exponential { .. } => "exponential",
            KFamily::LogNormal { .. } => "lognormal",
            KFamily::Logistic { .. } => "logistic",
            KFamily::Pareto { .. } => "pareto",
        }
    }

    /// The family with its default parameters.
    pub fn from_name(name: &str) -> Result<KFamily> {
        KFamily::with_params(name, &KParams::default())
    }

    pub fn with_params(name: &str, p: &KParams) -> Result<KFamily> {
        let family = match name {
            "fix" => KFamily::Fix,
            "uniform" => KFamily::Uniform,
            "exponential" => KFamily::Exponential {
                lambda: p.lambda.unwrap_or(1.0),
            },
            "lognormal" | "log-normal" => KFamily::LogNormal {
                mu: p.mu.unwrap_or(0.0),
                sigma: p.sigma.unwrap_or(1.0),
            },
            "logistic" => KFamily::Logistic {
                mu: p.mu.unwrap_or(0.0),
                s: p.s.unwrap_or(2.0),
            },
            "pareto" => KFamily::Pareto {
                m: p.m.unwrap_or(1.0),
                alpha: p.alpha.unwrap_or(1.0),
            },
            other => {
                return Err(MosaicError::Config(format!(
                    "k_distribution.family {other:?} is not one of fix, uniform, exponential, lognormal, logistic, pareto"
                )))
            }
        };
        Ok(family)
    }
}

/// Raw parameter bag as it appears under `k_distribution.params`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KDistribution {
    #[serde(flatten)]
    pub family: KFamily,
    pub k_max: usize,
}

impl Default for KDistribution {
    fn default() -> Self {
        KDistribution {
            family: KFamily::Uniform,
            k_max: 10,
        }
    }
}

impl KDistribution {
    pub fn new(family: KFamily, k_max: usize) -> Result<KDistribution> {
        let d = KDistribution { family, k_max };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max < 1 {
            return Err(MosaicError::Config("k_distribution.k_max must be at least 1".into()));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(MosaicError::Config(format!("k_distribution.params.{name} must be > 0, got {v}")))
            }
        };
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(MosaicError::Config(format!("k_distribution.params.{name} must be finite")))
            }
        };
        match self.family {
            KFamily::Fix | KFamily::Uniform => Ok(()),
            KFamily::Exponential { lambda } => positive("lambda", lambda),
            KFamily::LogNormal { mu, sigma } => finite("mu", mu).and(positive("sigma", sigma)),
            KFamily::Logistic { mu, s } => finite("mu", mu).and(positive("s", s)),
            KFamily::Pareto { m, alpha } => positive("m", m).and(positive("alpha", alpha)),
        }
    }

    /// Distance below `k_max` for continuous families; `None` otherwise.
    fn draw_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        let x = match self.family {
            KFamily::Fix | KFamily::Uniform => return None,
            KFamily::Exponential { lambda } => Exp::new(lambda).expect("validated").sample(rng),
            KFamily::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).expect("validated").sample(rng),
            KFamily::Logistic { mu, s } => {
                let u: f64 = Open01.sample(rng);
                mu + s * (u / (1.0 - u)).ln()
            }
            KFamily::Pareto { m, alpha } => Pareto::new(m, alpha).expect("validated").sample(rng) - m,
        };
        Some(x)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let k_max = self.k_max;
        match self.family {
            KFamily::Fix => k_max,
            KFamily::Uniform => rng.random_range(1..=k_max),
            _ => {
                let limit = k_max as f64;
                for _ in 0..MAX_RESAMPLES {
                    let offset = self.draw_offset(rng).expect("continuous family");
                    if offset > limit {
                        continue;
                    }
                    let steps = offset.max(0.0).floor() as usize;
                    return k_max.saturating_sub(steps).clamp(1, k_max);
                }
                1
            }
        }
    }
}

pub fn draw_k<R: Rng + ?Sized>(dist: &KDistribution, rng: &mut R) -> usize {
    dist.draw(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub total: usize,
    pub histogram: BTreeMap<usize, usize>,
    /// Fraction of samples with k <= 5.
    pub mix_le_5: f64,
    pub mean_k: f64,
}

pub fn summarize_ks(ks: impl IntoIterator<Item = usize>) -> KSummary {
    let mut histogram = BTreeMap::new();
    let mut total = 0usize;
    let mut sum = 0usize;
    for k in ks {
        *histogram.entry(k).or_insert(0) += 1;
        total += 1;
        sum += k;
    }
    let le5: usize = histogram.range(..=5).map(|(_, c)| c).sum();
    let frac = |n: usize| if total == 0 { 0.0 } else { n as f64 / total as f64 };
    KSummary {
        total,
        histogram,
        mix_le_5: frac(le5),
        mean_k: frac(sum),
    }
}

pub fn summarize_k(samples: &[crate::engine::MosaicSample]) -> KSummary {
    summarize_ks(samples.iter().map(|s| s.k))
}
