//! Engine configuration: built-in defaults, the JSON config file, and
//! layering of overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MosaicError, Result};
use crate::ksampler::{KDistribution, KFamily, KParams};
use crate::rng::RNG_ALGORITHM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LengthCounterKind {
    #[default]
    WhitespaceWords,
    UnicodeChars,
    /// Supplied by the caller through [`crate::engine::LengthCounter`].
    CustomPlugin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    Random,
    ByCluster,
}

impl std::str::FromStr for Grouping {
    type Err = MosaicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Grouping::Random),
            "by_cluster" | "by-cluster" => Ok(Grouping::ByCluster),
            other => Err(MosaicError::Config(format!(
                "grouping {other:?} is not one of random, by_cluster"
            ))),
        }
    }
}

/// Mix over the three meta-instruction strategies used when
/// `primary_mode` is off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyWeights {
    pub format: f64,
    pub format_permute: f64,
    pub format_maskout: f64,
}

impl Default for StrategyWeights {
    fn default() -> Self {
        StrategyWeights {
            format: 1.0 / 3.0,
            format_permute: 1.0 / 3.0,
            format_maskout: 1.0 / 3.0,
        }
    }
}

impl StrategyWeights {
    pub fn as_array(&self) -> [f64; 3] {
        [self.format, self.format_permute, self.format_maskout]
    }

    /// Parses `"a,b,c"` in the order format, format_permute, format_maskout.
    pub fn parse_list(s: &str) -> Result<StrategyWeights> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| MosaicError::Config(format!("strategy_weights {s:?}: {e}")))?;
        let [format, format_permute, format_maskout] = parts[..] else {
            return Err(MosaicError::Config(format!(
                "strategy_weights {s:?} must list exactly three numbers"
            )));
        };
        Ok(StrategyWeights {
            format,
            format_permute,
            format_maskout,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(MosaicError::Config(format!(
                "strategy_weights must be non-negative, got {w:?}"
            )));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(MosaicError::Config(format!(
                "strategy_weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub seed: u64,
    pub epochs: usize,
    pub budget: usize,
    pub length_counter: LengthCounterKind,
    pub strategy_weights: StrategyWeights,
    pub primary_mode: bool,
    pub wrap_probability: f64,
    pub grouping: Grouping,
    pub k_distribution: KDistribution,
    pub rng: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            seed: 0,
            epochs: 1,
            budget: 1400,
            length_counter: LengthCounterKind::WhitespaceWords,
            strategy_weights: StrategyWeights::default(),
            primary_mode: false,
            wrap_probability: 1.0,
            grouping: Grouping::Random,
            k_distribution: KDistribution::default(),
            rng: RNG_ALGORITHM.to_string(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(MosaicError::Config("epochs must be at least 1".into()));
        }
        if self.budget == 0 {
            return Err(MosaicError::Config("budget must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.wrap_probability) {
            return Err(MosaicError::Config(format!(
                "wrap_probability must lie in [0, 1], got {}",
                self.wrap_probability
            )));
        }
        if self.rng != RNG_ALGORITHM {
            return Err(MosaicError::Config(format!(
                "rng {:?} is not supported (only {RNG_ALGORITHM:?})",
                self.rng
            )));
        }
        self.strategy_weights.validate()?;
        self.k_distribution.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KDistributionLayer {
    pub family: Option<String>,
    pub k_max: Option<usize>,
    pub params: Option<KParams>,
}

/// One layer of configuration: the JSON config file, CLI flags, or a
/// binding's key-value mapping. Every field is optional; later layers win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub budget: Option<usize>,
    pub length_counter: Option<LengthCounterKind>,
    pub strategy_weights: Option<StrategyWeights>,
    pub primary_mode: Option<bool>,
    pub wrap_probability: Option<f64>,
    pub grouping: Option<Grouping>,
    pub k_distribution: Option<KDistributionLayer>,
    /// Registry override file, resolved relative to the config file.
    pub registry: Option<PathBuf>,
    pub rng: Option<String>,
}

fn pick<T>(over: Option<T>, base: Option<T>) -> Option<T> {
    over.or(base)
}

impl ConfigLayer {
    pub fn from_json(text: &str) -> Result<ConfigLayer> {
        serde_json::from_str(text).map_err(|e| MosaicError::Config(e.to_string()))
    }

    pub fn from_value(value: serde_json::Value) -> Result<ConfigLayer> {
        serde_json::from_value(value).map_err(|e| MosaicError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ConfigLayer> {
        let text = fs::read_to_string(path)
            .map_err(|e| MosaicError::Config(format!("{}: {e}", path.display())))?;
        let mut layer = ConfigLayer::from_json(&text)
            .map_err(|e| MosaicError::Config(format!("{}: {e}", path.display())))?;
        if let Some(reg) = &layer.registry {
            if reg.is_relative() {
                let dir = path.parent().unwrap_or_else(|| Path::new("."));
                layer.registry = Some(dir.join(reg));
            }
        }
        Ok(layer)
    }

    /// `over` takes precedence field by field; distribution params merge
    /// key by key.
    pub fn merge(self, over: ConfigLayer) -> ConfigLayer {
        let k_distribution = match (self.k_distribution, over.k_distribution) {
            (Some(base), Some(o)) => Some(KDistributionLayer {
                family: pick(o.family, base.family),
                k_max: pick(o.k_max, base.k_max),
                params: match (base.params, o.params) {
                    (Some(b), Some(p)) => Some(KParams {
                        lambda: pick(p.lambda, b.lambda),
                        mu: pick(p.mu, b.mu),
                        sigma: pick(p.sigma, b.sigma),
                        s: pick(p.s, b.s),
                        m: pick(p.m, b.m),
                        alpha: pick(p.alpha, b.alpha),
                    }),
                    (b, p) => p.or(b),
                },
            }),
            (b, o) => o.or(b),
        };
        ConfigLayer {
            seed: pick(over.seed, self.seed),
            epochs: pick(over.epochs, self.epochs),
            budget: pick(over.budget, self.budget),
            length_counter: pick(over.length_counter, self.length_counter),
            strategy_weights: pick(over.strategy_weights, self.strategy_weights),
            primary_mode: pick(over.primary_mode, self.primary_mode),
            wrap_probability: pick(over.wrap_probability, self.wrap_probability),
            grouping: pick(over.grouping, self.grouping),
            k_distribution,
            registry: pick(over.registry, self.registry),
            rng: pick(over.rng, self.rng),
        }
    }

    /// Applies the layer over built-in defaults and validates the result.
    pub fn resolve(&self) -> Result<EngineConfig> {
        let d = EngineConfig::default();
        let k_distribution = match &self.k_distribution {
            None => d.k_distribution,
            Some(layer) => {
                let name = layer.family.as_deref().unwrap_or(d.k_distribution.family.name());
                let family = KFamily::with_params(name, &layer.params.clone().unwrap_or_default())?;
                KDistribution {
                    family,
                    k_max: layer.k_max.unwrap_or(d.k_distribution.k_max),
                }
            }
        };
        let config = EngineConfig {
            seed: self.seed.unwrap_or(d.seed),
            epochs: self.epochs.unwrap_or(d.epochs),
            budget: self.budget.unwrap_or(d.budget),
            length_counter: self.length_counter.unwrap_or(d.length_counter),
            strategy_weights: self.strategy_weights.unwrap_or(d.strategy_weights),
            primary_mode: self.primary_mode.unwrap_or(d.primary_mode),
            wrap_probability: self.wrap_probability.unwrap_or(d.wrap_probability),
            grouping: self.grouping.unwrap_or(d.grouping),
            k_distribution,
            rng: self.rng.clone().unwrap_or(d.rng),
        };
        config.validate()?;
        Ok(config)
    }
}
