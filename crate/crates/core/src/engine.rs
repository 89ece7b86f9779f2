//! Mosaic passes: grouping records, choosing a strategy, and rendering the
//! overall instruction/response pair under the length budget.

use std::collections::{BTreeMap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EngineConfig, Grouping, LengthCounterKind};
use crate::corpus::{Dataset, InstructionRecord};
use crate::error::{MosaicError, Result};
use crate::ksampler::{summarize_ks, KDistribution, KSummary};
use crate::rng::{derived_rng, RNG_ALGORITHM, STREAM_GROUP, STREAM_PLAN};
use crate::ruleset::{sample_format, sample_meta_rule, FormatSpec, MetaRule, RuleKind, RuleRegistry};

const ITEM_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Primary,
    Format,
    FormatPermute,
    FormatMaskout,
}

impl Strategy {
    /// The strategies that carry meta-instructions.
    pub const ADVANCED: [Strategy; 3] = [Strategy::Format, Strategy::FormatPermute, Strategy::FormatMaskout];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Primary => "primary",
            Strategy::Format => "format",
            Strategy::FormatPermute => "format_permute",
            Strategy::FormatMaskout => "format_maskout",
        }
    }

    pub fn rule_kind(self) -> Option<RuleKind> {
        match self {
            Strategy::FormatPermute => Some(RuleKind::Permute),
            Strategy::FormatMaskout => Some(RuleKind::Maskout),
            _ => None,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosaicSample {
    pub member_ids: Vec<usize>,
    pub k: usize,
    pub strategy: Strategy,
    pub format: Option<FormatSpec>,
    pub rule: Option<MetaRule>,
    /// Realized permutation (permute), survivors (maskout), or `1..=k`.
    pub response_order: Vec<usize>,
    pub overall_instruction: String,
    pub overall_response: String,
    pub epoch: usize,
    pub length_units: usize,
    /// A single member that alone exceeds the budget.
    pub oversize: bool,
    pub seed: u64,
}

impl MosaicSample {
    /// The format used for labels, including the implicit plain one of the
    /// primary strategy.
    pub fn layout(&self) -> FormatSpec {
        self.format.clone().unwrap_or_else(FormatSpec::plain)
    }
}

pub trait LengthCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

impl<F> LengthCounter for F
where
    F: Fn(&str) -> usize + Send + Sync,
{
    fn count(&self, text: &str) -> usize {
        self(text)
    }
}

pub struct WhitespaceWords;

impl LengthCounter for WhitespaceWords {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

pub struct UnicodeChars;

impl LengthCounter for UnicodeChars {
    fn count(&self, text: &str) -> usize {
        text.chars().count()
    }
}

pub fn builtin_counter(kind: LengthCounterKind) -> Result<Box<dyn LengthCounter>> {
    match kind {
        LengthCounterKind::WhitespaceWords => Ok(Box::new(WhitespaceWords)),
        LengthCounterKind::UnicodeChars => Ok(Box::new(UnicodeChars)),
        LengthCounterKind::CustomPlugin => Err(MosaicError::Config(
            "length_counter custom_plugin needs a counter supplied through the library API".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedGroup {
    pub drawn_k: usize,
    pub member_ids: Vec<usize>,
}

/// Shuffled record queues for one pass, one queue per cluster (or a single
/// queue for random grouping).
struct PassPlanner {
    buckets: Vec<VecDeque<usize>>,
    current: usize,
}

impl PassPlanner {
    fn new<R: Rng + ?Sized>(dataset: &Dataset, grouping: Grouping, rng: &mut R) -> PassPlanner {
        let mut buckets: Vec<Vec<usize>> = match grouping {
            Grouping::Random => vec![dataset.records.iter().map(|r| r.id).collect()],
            Grouping::ByCluster => {
                // unlabeled records share one bucket
                let mut by: BTreeMap<Option<u64>, Vec<usize>> = BTreeMap::new();
                for r in &dataset.records {
                    by.entry(r.cluster).or_default().push(r.id);
                }
                by.into_values().collect()
            }
        };
        for b in &mut buckets {
            b.shuffle(rng);
        }
        PassPlanner {
            buckets: buckets.into_iter().map(VecDeque::from).collect(),
            current: 0,
        }
    }

    fn next_group<R: Rng + ?Sized>(&mut self, dist: &KDistribution, rng: &mut R) -> Option<PlannedGroup> {
        while self.buckets.get(self.current)?.is_empty() {
            self.current += 1;
        }
        let bucket = &mut self.buckets[self.current];
        let drawn_k = dist.draw(rng);
        let take = drawn_k.min(bucket.len());
        Some(PlannedGroup {
            drawn_k,
            member_ids: bucket.drain(..take).collect(),
        })
    }

    /// Returns unused members to the front of the current queue, keeping
    /// their order.
    fn give_back(&mut self, ids: &[usize]) {
        let bucket = &mut self.buckets[self.current];
        for &id in ids.iter().rev() {
            bucket.push_front(id);
        }
    }
}

/// Partitions one pass into groups without applying the length budget.
pub fn plan_pass<R: Rng + ?Sized>(dataset: &Dataset, config: &EngineConfig, rng: &mut R) -> Vec<PlannedGroup> {
    let mut planner = PassPlanner::new(dataset, config.grouping, rng);
    let mut groups = Vec::new();
    while let Some(g) = planner.next_group(&config.k_distribution, rng) {
        groups.push(g);
    }
    groups
}

pub fn pick_strategy<R: Rng + ?Sized>(config: &EngineConfig, k: usize, rng: &mut R) -> Strategy {
    if config.primary_mode {
        return Strategy::Primary;
    }
    if k < 2 {
        return Strategy::Format;
    }
    let weights = WeightedIndex::new(config.strategy_weights.as_array()).expect("validated strategy weights");
    Strategy::ADVANCED[weights.sample(rng)]
}

/// Renders a group under a fixed strategy. No budget is applied.
#[allow(clippy::too_many_arguments)]
pub fn render_group<R: Rng + ?Sized>(
    members: &[&InstructionRecord],
    strategy: Strategy,
    config: &EngineConfig,
    registry: &RuleRegistry,
    counter: &dyn LengthCounter,
    rng: &mut R,
    epoch: usize,
) -> Result<MosaicSample> {
    let k = members.len();
    if k == 0 {
        return Err(MosaicError::Data("cannot render an empty group".into()));
    }
    let items: Vec<&str> = members.iter().map(|r| r.instruction.as_str()).collect();

    let format = (strategy != Strategy::Primary).then(|| sample_format(registry, rng, config.wrap_probability));
    let rule = match strategy.rule_kind() {
        Some(kind) => Some(sample_meta_rule(registry, rng, kind, k, &items)?),
        None => None,
    };
    let layout = format.clone().unwrap_or_else(FormatSpec::plain);
    let response_order = match &rule {
        Some(rule) => rule.apply(&items)?,
        None => (1..=k).collect(),
    };

    let meta: Vec<&str> = format
        .iter()
        .map(|f| f.meta_text.as_str())
        .chain(rule.iter().map(|r| r.meta_text.as_str()))
        .filter(|t| !t.is_empty())
        .collect();
    let listed: Vec<String> = items
        .iter()
        .enumerate()
        .map(|(i, x)| format!("{} {x}", layout.label(i + 1)))
        .collect();
    let mut overall_instruction = String::new();
    if !meta.is_empty() {
        overall_instruction.push_str(&meta.join("\n"));
        overall_instruction.push_str(ITEM_SEPARATOR);
    }
    overall_instruction.push_str(&listed.join(ITEM_SEPARATOR));

    let overall_response = response_order
        .iter()
        .map(|&i| layout.wrap(i, &members[i - 1].response))
        .collect::<Vec<_>>()
        .join(ITEM_SEPARATOR);

    let length_units = counter.count(&overall_instruction) + counter.count(&overall_response);
    Ok(MosaicSample {
        member_ids: members.iter().map(|r| r.id).collect(),
        k,
        strategy,
        format,
        rule,
        response_order,
        overall_instruction,
        overall_response,
        epoch,
        length_units,
        oversize: false,
        seed: config.seed,
    })
}

/// Picks a strategy and renders `group`, dropping trailing members until
/// the sample fits the budget. The returned sample covers a prefix of
/// `group`; the caller owns the rest.
pub fn render_sample<R: Rng + ?Sized>(
    group: &[&InstructionRecord],
    config: &EngineConfig,
    registry: &RuleRegistry,
    counter: &dyn LengthCounter,
    rng: &mut R,
    epoch: usize,
) -> Result<MosaicSample> {
    let picked = pick_strategy(config, group.len(), rng);
    let mut n = group.len();
    loop {
        let strategy = if n < 2 && picked.rule_kind().is_some() {
            Strategy::Format
        } else {
            picked
        };
        let mut sample = render_group(&group[..n], strategy, config, registry, counter, rng, epoch)?;
        if sample.length_units <= config.budget {
            return Ok(sample);
        }
        if n == 1 {
            sample.oversize = true;
            return Ok(sample);
        }
        n -= 1;
    }
}

pub fn run_pass(
    dataset: &Dataset,
    config: &EngineConfig,
    registry: &RuleRegistry,
    counter: &dyn LengthCounter,
    epoch: usize,
) -> Result<Vec<MosaicSample>> {
    let mut plan_rng = derived_rng(config.seed, &[STREAM_PLAN, epoch as u64]);
    let mut planner = PassPlanner::new(dataset, config.grouping, &mut plan_rng);
    let mut samples = Vec::new();
    while let Some(group) = planner.next_group(&config.k_distribution, &mut plan_rng) {
        let mut rng = derived_rng(config.seed, &[STREAM_GROUP, epoch as u64, samples.len() as u64]);
        let members: Vec<&InstructionRecord> = group.member_ids.iter().map(|&id| &dataset.records[id]).collect();
        let sample = render_sample(&members, config, registry, counter, &mut rng, epoch)?;
        planner.give_back(&group.member_ids[sample.k..]);
        samples.push(sample);
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub rng: String,
    pub epochs: usize,
    pub input_records: usize,
    pub dropped_records: usize,
    pub output_samples: usize,
    pub member_slots: usize,
    /// Output samples per input record per epoch.
    pub output_input_ratio: f64,
    pub k: KSummary,
    pub strategy_counts: BTreeMap<Strategy, usize>,
    pub oversize: usize,
    pub budget: usize,
    pub length_counter: LengthCounterKind,
}

impl RunReport {
    pub fn new(dataset: &Dataset, config: &EngineConfig, samples: &[MosaicSample]) -> RunReport {
        let mut strategy_counts = BTreeMap::new();
        for s in samples {
            *strategy_counts.entry(s.strategy).or_insert(0) += 1;
        }
        let input = dataset.len();
        RunReport {
            seed: config.seed,
            rng: RNG_ALGORITHM.to_string(),
            epochs: config.epochs,
            input_records: input,
            dropped_records: dataset.dropped,
            output_samples: samples.len(),
            member_slots: samples.iter().map(|s| s.k).sum(),
            output_input_ratio: samples.len() as f64 / (input * config.epochs) as f64,
            k: summarize_ks(samples.iter().map(|s| s.k)),
            strategy_counts,
            oversize: samples.iter().filter(|s| s.oversize).count(),
            budget: config.budget,
            length_counter: config.length_counter,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub samples: Vec<MosaicSample>,
    pub report: RunReport,
}

/// Runs `config.epochs` independent passes with a built-in length counter.
pub fn run(dataset: &Dataset, config: &EngineConfig, registry: &RuleRegistry) -> Result<RunOutput> {
    let counter = builtin_counter(config.length_counter)?;
    run_with(dataset, config, registry, counter.as_ref(), 1)
}

/// Like [`run`], with a caller-supplied counter and `jobs` worker threads.
/// Output does not depend on `jobs`.
pub fn run_with(
    dataset: &Dataset,
    config: &EngineConfig,
    registry: &RuleRegistry,
    counter: &dyn LengthCounter,
    jobs: usize,
) -> Result<RunOutput> {
    config.validate()?;
    registry.validate()?;
    if dataset.is_empty() {
        return Err(MosaicError::Data("dataset is empty".into()));
    }
    let pass = |epoch: usize| run_pass(dataset, config, registry, counter, epoch);
    let passes: Vec<Vec<MosaicSample>> = if jobs > 1 && config.epochs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| MosaicError::Config(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| (0..config.epochs).into_par_iter().map(pass).collect::<Result<_>>())?
    } else {
        (0..config.epochs).map(pass).collect::<Result<_>>()?
    };
    let samples: Vec<MosaicSample> = passes.into_iter().flatten().collect();
    let report = RunReport::new(dataset, config, &samples);
    Ok(RunOutput { samples, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::StrategyWeights;
    use crate::ksampler::KFamily;
    use crate::rng::rng_from_seed;
    use crate::ruleset::{MaskoutRule, PermuteRule, RuleName, RuleParams};

    fn dataset(n: usize) -> Dataset {
        let values = (0..n).map(|i| {
            serde_json::json!({
                "instruction": format!("Instruction number {i} asks about topic {}", i % 7),
                "response": format!("Answer {i}"),
                "cluster": i % 2,
            })
        });
        Dataset::from_values(values, crate::corpus::FormatTag::Pair, "mem").unwrap()
    }

    fn config_with(family: KFamily, k_max: usize) -> EngineConfig {
        EngineConfig {
            k_distribution: KDistribution::new(family, k_max).unwrap(),
            budget: 1_000_000,
            ..EngineConfig::default()
        }
    }

    /// Distribution that replays a fixed k sequence, for planner tests.
    fn plan_with_ks(n: usize, ks: &[usize]) -> Vec<usize> {
        let ds = dataset(n);
        let mut rng = rng_from_seed(0);
        let mut planner = PassPlanner::new(&ds, Grouping::Random, &mut rng);
        let mut sizes = Vec::new();
        for &k in ks {
            let dist = KDistribution::new(KFamily::Fix, k).unwrap();
            match planner.next_group(&dist, &mut rng) {
                Some(g) => sizes.push(g.member_ids.len()),
                None => break,
            }
        }
        sizes
    }

    #[test]
    fn remainder_group_takes_what_is_left() {
        assert_eq!(plan_with_ks(7, &[3, 10, 5]), vec![3, 4]);
    }

    #[test]
    fn fixed_k_partitions_evenly() {
        let ds = dataset(12);
        let cfg = config_with(KFamily::Fix, 4);
        let groups = plan_pass(&ds, &cfg, &mut rng_from_seed(1));
        assert_eq!(groups.len(), 3);
        assert!(groups.iter().all(|g| g.member_ids.len() == 4));
    }

    #[test]
    fn cluster_grouping_never_mixes() {
        let values = (0..8).map(|i| {
            serde_json::json!({"instruction": format!("q{i}"), "response": "a", "cluster": if i < 5 { 0 } else { 1 }})
        });
        let ds = Dataset::from_values(values, crate::corpus::FormatTag::Pair, "mem").unwrap();
        let cfg = EngineConfig {
            grouping: Grouping::ByCluster,
            ..config_with(KFamily::Uniform, 4)
        };
        for seed in 0..50 {
            let groups = plan_pass(&ds, &cfg, &mut rng_from_seed(seed));
            for g in &groups {
                let clusters: std::collections::BTreeSet<_> =
                    g.member_ids.iter().map(|&id| ds.records[id].cluster).collect();
                assert_eq!(clusters.len(), 1, "{g:?}");
            }
            let mut all: Vec<usize> = groups.iter().flat_map(|g| g.member_ids.clone()).collect();
            all.sort_unstable();
            assert_eq!(all, (0..8).collect::<Vec<_>>());
        }
    }

    fn records(texts: &[(&str, &str)]) -> Vec<InstructionRecord> {
        texts
            .iter()
            .enumerate()
            .map(|(id, (x, y))| InstructionRecord {
                id,
                instruction: x.to_string(),
                input: None,
                response: y.to_string(),
                cluster: None,
            })
            .collect()
    }

    #[test]
    fn reverse_permute_lists_responses_backwards() {
        let recs = records(&[("first task", "one"), ("second task", "two"), ("third task", "three")]);
        let members: Vec<&InstructionRecord> = recs.iter().collect();
        let cfg = EngineConfig::default();
        let reg = RuleRegistry::default();
        // search seeds until the sampled permute rule is REVERSE
        let sample = (0..500)
            .find_map(|seed| {
                let s = render_group(&members, Strategy::FormatPermute, &cfg, &reg, &WhitespaceWords, &mut rng_from_seed(seed), 0)
                    .unwrap();
                (s.rule.as_ref().unwrap().name == RuleName::Permute(PermuteRule::Reverse)).then_some(s)
            })
            .expect("REVERSE drawn");
        assert_eq!(sample.response_order, vec![3, 2, 1]);
        let f = sample.format.as_ref().unwrap();
        let expected = [f.wrap(3, "three"), f.wrap(2, "two"), f.wrap(1, "one")].join("\n\n");
        assert_eq!(sample.overall_response, expected);
        assert!(sample.overall_instruction.contains("in reverse of the original order"));
        let meta_end = sample.overall_instruction.find("\n\n").unwrap();
        assert!(sample.overall_instruction[meta_end..].contains(&format!("{} first task", f.label(1))));
    }

    #[test]
    fn single_member_uses_format() {
        let recs = records(&[("only task", "only answer")]);
        let cfg = EngineConfig::default();
        let s = render_sample(&[&recs[0]], &cfg, &RuleRegistry::default(), &WhitespaceWords, &mut rng_from_seed(2), 0)
            .unwrap();
        assert_eq!(s.strategy, Strategy::Format);
        assert_eq!(s.response_order, vec![1]);
        assert!(s.rule.is_none());
    }

    #[test]
    fn even_maskout_keeps_odd_items() {
        let recs = records(&[("a1", "r1"), ("a2", "r2"), ("a3", "r3"), ("a4", "r4")]);
        let members: Vec<&InstructionRecord> = recs.iter().collect();
        let reg = RuleRegistry::default();
        let rule = MetaRule::new(&reg, RuleName::Maskout(MaskoutRule::Even), 4, RuleParams::None).unwrap();
        assert_eq!(rule.apply(&["a1", "a2", "a3", "a4"]).unwrap(), vec![1, 3]);
        let sample = (0..500)
            .find_map(|seed| {
                let s = render_group(&members, Strategy::FormatMaskout, &EngineConfig::default(), &reg, &WhitespaceWords, &mut rng_from_seed(seed), 0)
                    .unwrap();
                (s.rule.as_ref().unwrap().name == rule.name).then_some(s)
            })
            .unwrap();
        assert_eq!(sample.response_order, vec![1, 3]);
        assert!(sample.overall_response.contains("r1") && sample.overall_response.contains("r3"));
        assert!(!sample.overall_response.contains("r2") && !sample.overall_response.contains("r4"));
    }

    #[test]
    fn primary_uses_plain_digits() {
        let recs = records(&[("a", "x"), ("b", "y")]);
        let members: Vec<&InstructionRecord> = recs.iter().collect();
        let cfg = EngineConfig {
            primary_mode: true,
            ..EngineConfig::default()
        };
        let s = render_sample(&members, &cfg, &RuleRegistry::default(), &WhitespaceWords, &mut rng_from_seed(0), 0).unwrap();
        assert_eq!(s.strategy, Strategy::Primary);
        assert!(s.format.is_none() && s.rule.is_none());
        assert_eq!(s.overall_instruction, "1. a\n\n2. b");
        assert_eq!(s.overall_response, "1. x\n\n2. y");
    }

    #[test]
    fn budget_drops_trailing_members() {
        let long = "word ".repeat(40);
        let recs = records(&[("short one", "ok"), ("short two", "ok"), (long.as_str(), long.as_str())]);
        let members: Vec<&InstructionRecord> = recs.iter().collect();
        let cfg = EngineConfig {
            budget: 60,
            ..EngineConfig::default()
        };
        let s = render_sample(&members, &cfg, &RuleRegistry::default(), &WhitespaceWords, &mut rng_from_seed(4), 0).unwrap();
        assert!(s.k < 3);
        assert!(s.length_units <= 60);
        assert!(!s.oversize);
        assert_eq!(s.member_ids, (0..s.k).collect::<Vec<_>>());
    }

    #[test]
    fn oversize_singleton_is_flagged() {
        let long = "word ".repeat(100);
        let recs = records(&[(long.as_str(), "fine")]);
        let cfg = EngineConfig {
            budget: 10,
            ..EngineConfig::default()
        };
        let s = render_sample(&[&recs[0]], &cfg, &RuleRegistry::default(), &WhitespaceWords, &mut rng_from_seed(4), 0).unwrap();
        assert!(s.oversize);
        assert_eq!(s.k, 1);
    }

    #[test]
    fn budgeted_pass_still_partitions() {
        let values = (0..300).map(|i| {
            let words = 5 + (i * 37) % 90;
            serde_json::json!({"instruction": format!("task {i} {}", "w ".repeat(words)), "response": "r ".repeat(words)})
        });
        let ds = Dataset::from_values(values, crate::corpus::FormatTag::Pair, "mem").unwrap();
        let cfg = EngineConfig {
            budget: 400,
            ..EngineConfig::default()
        };
        let out = run(&ds, &cfg, &RuleRegistry::default()).unwrap();
        let mut ids: Vec<usize> = out.samples.iter().flat_map(|s| s.member_ids.clone()).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..300).collect::<Vec<_>>());
        assert!(out.samples.iter().all(|s| s.oversize || s.length_units <= 400));
    }

    #[test]
    fn jobs_do_not_change_output() {
        let ds = dataset(200);
        let cfg = EngineConfig {
            epochs: 4,
            seed: 17,
            ..EngineConfig::default()
        };
        let reg = RuleRegistry::default();
        let a = run_with(&ds, &cfg, &reg, &WhitespaceWords, 1).unwrap();
        let b = run_with(&ds, &cfg, &reg, &WhitespaceWords, 4).unwrap();
        assert_eq!(a.samples, b.samples);
        assert!(a.samples.iter().any(|s| s.epoch == 3));
    }

    #[test]
    fn strategy_mix_follows_weights() {
        let cfg = EngineConfig {
            strategy_weights: StrategyWeights {
                format: 0.5,
                format_permute: 0.5,
                format_maskout: 0.0,
            },
            ..EngineConfig::default()
        };
        let mut rng = rng_from_seed(8);
        let picks: Vec<Strategy> = (0..4000).map(|_| pick_strategy(&cfg, 3, &mut rng)).collect();
        assert!(!picks.contains(&Strategy::FormatMaskout));
        let permute = picks.iter().filter(|&&s| s == Strategy::FormatPermute).count() as f64 / 4000.0;
        assert!((permute - 0.5).abs() < 0.03);
    }

    #[test]
    fn custom_counter_plugs_in() {
        let ds = dataset(50);
        let cfg = EngineConfig {
            length_counter: LengthCounterKind::CustomPlugin,
            budget: 40,
            ..EngineConfig::default()
        };
        let reg = RuleRegistry::default();
        assert!(run(&ds, &cfg, &reg).unwrap_err().is_config());
        let bytes = |t: &str| t.len() / 4;
        let out = run_with(&ds, &cfg, &reg, &bytes, 1).unwrap();
        assert!(out.samples.iter().all(|s| s.oversize || s.length_units <= 40));
    }
}
