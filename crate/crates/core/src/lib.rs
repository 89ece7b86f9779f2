//! Compositional instruction-tuning sample synthesis.
//!
//! Several instruction/response pairs from an existing corpus are stitched
//! into one training sample. Meta-instructions ask for a response format
//! (serial labels, parsing markers), a response order, or omission of some
//! instructions. The same machinery builds evaluation prompts and scores
//! model responses for compliance.
//!
//! ```
//! use mosaic_core::{corpus::{Dataset, FormatTag}, config::EngineConfig, engine, ruleset::RuleRegistry};
//!
//! let records = (0..20).map(|i| serde_json::json!({"instruction": format!("Task {i}"), "response": format!("Answer {i}")}));
//! let dataset = Dataset::from_values(records, FormatTag::Pair, "inline").unwrap();
//! let out = engine::run(&dataset, &EngineConfig::default(), &RuleRegistry::default()).unwrap();
//! assert_eq!(out.samples.iter().map(|s| s.k).sum::<usize>(), 20);
//! ```

pub mod config;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod ksampler;
pub mod rng;
pub mod ruleset;
pub mod validator;

pub use config::{ConfigLayer, EngineConfig, Grouping, LengthCounterKind, StrategyWeights};
pub use corpus::{load_dataset, write_mosaics, Dataset, FormatTag, InstructionRecord};
pub use engine::{run, run_with, LengthCounter, MosaicSample, RunOutput, RunReport, Strategy};
pub use error::{MosaicError, Result};
pub use ksampler::{draw_k, summarize_k, KDistribution, KFamily};
pub use ruleset::{apply_meta_rule, sample_format, sample_meta_rule, FormatSpec, MetaRule, RuleRegistry};
pub use validator::{build_eval_set, score_file, score_response, AnswerKey, ValidationReport, Verdict};
