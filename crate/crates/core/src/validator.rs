//! Evaluation prompts and compliance scoring of free-form responses.
//!
//! A response succeeds when it uses the required labels (and markers), keeps
//! the required order, omits every masked instruction, and leaves nothing
//! out.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::corpus::{Dataset, InstructionRecord};
use crate::engine::{builtin_counter, render_group, LengthCounter, MosaicSample, Strategy};
use crate::error::{MosaicError, Result};
use crate::rng::{derived_rng, STREAM_EVAL_GROUP, STREAM_EVAL_PLAN};
use crate::ruleset::{FormatSpec, LabelTemplate, RuleRegistry};

/// What a correct response to one prompt looks like.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub sample_id: String,
    pub strategy: Strategy,
    pub rule: Option<String>,
    pub labels_expected: Vec<usize>,
    pub labels_masked: Vec<usize>,
    pub digit_template: String,
    pub open_marker: Option<String>,
    pub close_marker: Option<String>,
}

impl AnswerKey {
    pub fn from_sample(sample_id: impl Into<String>, sample: &MosaicSample) -> AnswerKey {
        let layout = sample.layout();
        let labels_masked = (1..=sample.k).filter(|i| !sample.response_order.contains(i)).collect();
        AnswerKey {
            sample_id: sample_id.into(),
            strategy: sample.strategy,
            rule: sample.rule.as_ref().map(|r| r.name.as_str().to_string()),
            labels_expected: sample.response_order.clone(),
            labels_masked,
            digit_template: layout.digit_template,
            open_marker: layout.open_marker,
            close_marker: layout.close_marker,
        }
    }

    pub fn k(&self) -> usize {
        self.labels_expected.len() + self.labels_masked.len()
    }

    fn format(&self) -> Result<(LabelTemplate, Option<(&str, &str)>)> {
        let spec = FormatSpec {
            digit_template: self.digit_template.clone(),
            open_marker: self.open_marker.clone(),
            close_marker: self.close_marker.clone(),
            meta_text: String::new(),
        };
        let template = spec
            .validate()
            .map_err(|e| MosaicError::Data(format!("answer key {}: {e}", self.sample_id)))?;
        let markers = match (&self.open_marker, &self.close_marker) {
            (Some(o), Some(c)) => Some((o.as_str(), c.as_str())),
            _ => None,
        };
        Ok((template, markers))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub sample_id: String,
    pub strategy: Strategy,
    pub k: usize,
    pub parsed_count: usize,
    pub format_ok: bool,
    pub order_ok: bool,
    pub maskout_ok: bool,
    pub missing_labels: Vec<usize>,
    /// Labels outside `1..=k`, and repeats of labels already matched.
    pub extra_labels: Vec<usize>,
    pub success: bool,
}

struct Candidate {
    label: usize,
    line_start: usize,
    body_start: usize,
    /// Known up front for wrapped formats; computed from neighbours otherwise.
    body_ok: Option<bool>,
}

fn next_line_start(text: &str, from: usize) -> usize {
    text[from..].find('\n').map_or(text.len(), |i| from + i + 1)
}

/// Finds line-anchored labels. With markers, the text between an open and a
/// close marker is body and is never scanned for labels.
fn scan(text: &str, template: &LabelTemplate, markers: Option<(&str, &str)>) -> Vec<Candidate> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let mut next = next_line_start(text, pos);
        let line = &text[pos..];
        let here = pos + (line.len() - line.trim_start_matches([' ', '\t']).len());
        if let Some((label, len)) = template.match_start(&text[here..], markers.map(|m| m.0)) {
            let after = here + len;
            match markers {
                None => out.push(Candidate {
                    label,
                    line_start: pos,
                    body_start: after,
                    body_ok: None,
                }),
                Some((open, close)) => {
                    let rest = &text[after..];
                    let open_at = after + (rest.len() - rest.trim_start().len());
                    let mut body_ok = false;
                    if text[open_at..].starts_with(open) {
                        let body_start = open_at + open.len();
                        if let Some(rel) = text[body_start..].find(close) {
                            body_ok = !text[body_start..body_start + rel].trim().is_empty();
                            next = next_line_start(text, body_start + rel + close.len());
                        }
                    }
                    out.push(Candidate {
                        label,
                        line_start: pos,
                        body_start: after,
                        body_ok: Some(body_ok),
                    });
                }
            }
        }
        pos = next;
    }
    out
}

pub fn score_response(key: &AnswerKey, response_text: &str) -> Result<Verdict> {
    let (template, markers) = key.format()?;
    let k = key.k();

    let mut seen = HashSet::new();
    let mut accepted = Vec::new();
    let mut extra_labels = Vec::new();
    for c in scan(response_text, &template, markers) {
        if c.label == 0 || c.label > k || !seen.insert(c.label) {
            extra_labels.push(c.label);
        } else {
            accepted.push(c);
        }
    }

    let body_ok: Vec<bool> = accepted
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.body_ok.unwrap_or_else(|| {
                let end = accepted.get(i + 1).map_or(response_text.len(), |n| n.line_start);
                !response_text[c.body_start..end].trim().is_empty()
            })
        })
        .collect();

    let detected: Vec<usize> = accepted.iter().map(|c| c.label).collect();
    let expected_set: HashSet<usize> = key.labels_expected.iter().copied().collect();
    let detected_set: HashSet<usize> = detected.iter().copied().collect();

    let format_ok = !detected.is_empty() && body_ok.iter().all(|&ok| ok);
    // relative order of the expected labels that are present
    let present_in_order: Vec<usize> = detected.iter().copied().filter(|l| expected_set.contains(l)).collect();
    let expected_present: Vec<usize> = key
        .labels_expected
        .iter()
        .copied()
        .filter(|l| detected_set.contains(l))
        .collect();
    let order_ok = present_in_order == expected_present;
    let maskout_ok = !key.labels_masked.iter().any(|l| detected_set.contains(l));
    let missing_labels: Vec<usize> = key
        .labels_expected
        .iter()
        .copied()
        .filter(|l| !detected_set.contains(l))
        .collect();

    Ok(Verdict {
        sample_id: key.sample_id.clone(),
        strategy: key.strategy,
        k,
        parsed_count: detected.len(),
        format_ok,
        order_ok,
        maskout_ok,
        success: format_ok && order_ok && maskout_ok && missing_labels.is_empty(),
        missing_labels,
        extra_labels,
    })
}

/// Scores a response against the sample that produced the prompt.
pub fn score_sample(sample: &MosaicSample, response_text: &str) -> Result<Verdict> {
    score_response(&AnswerKey::from_sample("", sample), response_text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub n: usize,
    pub successes: usize,
    pub success_rate: f64,
}

impl Rate {
    fn from_counts(n: usize, successes: usize) -> Rate {
        Rate {
            n,
            successes,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub strategy: Strategy,
    pub k: usize,
    #[serde(flatten)]
    pub rate: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub per_sample: Vec<Verdict>,
    /// Strategy x k table.
    pub cells: Vec<Cell>,
    pub by_strategy: BTreeMap<Strategy, Rate>,
    pub by_k: BTreeMap<usize, Rate>,
    pub overall: Rate,
}

impl ValidationReport {
    pub fn from_verdicts(per_sample: Vec<Verdict>) -> ValidationReport {
        let mut cells: BTreeMap<(Strategy, usize), (usize, usize)> = BTreeMap::new();
        let mut by_strategy: BTreeMap<Strategy, (usize, usize)> = BTreeMap::new();
        let mut by_k: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for v in &per_sample {
            for slot in [
                cells.entry((v.strategy, v.k)).or_default(),
                by_strategy.entry(v.strategy).or_default(),
                by_k.entry(v.k).or_default(),
            ] {
                slot.0 += 1;
                slot.1 += usize::from(v.success);
            }
        }
        let successes = per_sample.iter().filter(|v| v.success).count();
        ValidationReport {
            overall: Rate::from_counts(per_sample.len(), successes),
            cells: cells
                .into_iter()
                .map(|((strategy, k), (n, s))| Cell {
                    strategy,
                    k,
                    rate: Rate::from_counts(n, s),
                })
                .collect(),
            by_strategy: by_strategy.into_iter().map(|(k, (n, s))| (k, Rate::from_counts(n, s))).collect(),
            by_k: by_k.into_iter().map(|(k, (n, s))| (k, Rate::from_counts(n, s))).collect(),
            per_sample,
        }
    }

    pub fn rate(&self, strategy: Strategy, k: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.k == k)
            .map(|c| c.rate.success_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseLine {
    pub sample_id: String,
    pub response: String,
}

/// Scores keyed responses. Unknown ids are an error; for duplicated ids the
/// last response wins. Keys without a response score as empty.
pub fn score_responses(keys: &[AnswerKey], responses: Vec<ResponseLine>) -> Result<ValidationReport> {
    let known: HashSet<&str> = keys.iter().map(|k| k.sample_id.as_str()).collect();
    let mut by_id: HashMap<String, String> = HashMap::new();
    for line in responses {
        if !known.contains(line.sample_id.as_str()) {
            return Err(MosaicError::UnknownSample(line.sample_id));
        }
        if by_id.contains_key(&line.sample_id) {
            log::warn!("duplicate response for {}; keeping the last one", line.sample_id);
        }
        by_id.insert(line.sample_id, line.response);
    }
    let verdicts = keys
        .iter()
        .map(|key| score_response(key, by_id.get(&key.sample_id).map_or("", String::as_str)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport::from_verdicts(verdicts))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| MosaicError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| MosaicError::Malformed {
                path: path.to_path_buf(),
                location: format!("line {}", i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_answer_keys(path: &Path) -> Result<Vec<AnswerKey>> {
    read_jsonl(path)
}

pub fn read_responses(path: &Path) -> Result<Vec<ResponseLine>> {
    read_jsonl(path)
}

pub fn score_file(keys: &[AnswerKey], responses_path: &Path) -> Result<ValidationReport> {
    score_responses(keys, read_responses(responses_path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub sample_id: String,
    pub sample: MosaicSample,
}

impl EvalSample {
    pub fn answer_key(&self) -> AnswerKey {
        AnswerKey::from_sample(self.sample_id.clone(), &self.sample)
    }
}

pub fn build_eval_set(
    test_dataset: &Dataset,
    config: &EngineConfig,
    registry: &RuleRegistry,
    ks: &[usize],
) -> Result<Vec<EvalSample>> {
    let counter = builtin_counter(config.length_counter)?;
    build_eval_set_with(test_dataset, config, registry, counter.as_ref(), ks)
}

/// For every k, shuffles the test set once and cuts it into `len / k` groups
/// of exactly k; each group is rendered once per meta-instruction strategy.
/// No length budget is applied.
pub fn build_eval_set_with(
    test_dataset: &Dataset,
    config: &EngineConfig,
    registry: &RuleRegistry,
    counter: &dyn LengthCounter,
    ks: &[usize],
) -> Result<Vec<EvalSample>> {
    let mut out = Vec::new();
    for &k in ks {
        if k == 0 || test_dataset.len() < k {
            return Err(MosaicError::DatasetTooSmall {
                len: test_dataset.len(),
                k,
            });
        }
        let mut ids: Vec<usize> = test_dataset.records.iter().map(|r| r.id).collect();
        ids.shuffle(&mut derived_rng(config.seed, &[STREAM_EVAL_PLAN, k as u64]));
        for (si, strategy) in Strategy::ADVANCED.iter().enumerate() {
            for (gi, chunk) in ids.chunks_exact(k).enumerate() {
                let members: Vec<&InstructionRecord> = chunk.iter().map(|&id| &test_dataset.records[id]).collect();
                let mut rng = derived_rng(config.seed, &[STREAM_EVAL_GROUP, k as u64, si as u64, gi as u64]);
                let sample = render_group(&members, *strategy, config, registry, counter, &mut rng, 0)?;
                out.push(EvalSample {
                    sample_id: format!("k{k}-{strategy}-{gi:04}"),
                    sample,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FormatTag;
    use crate::engine::{WhitespaceWords};
    use crate::rng::rng_from_seed;
    use crate::ruleset::{MetaRule, PermuteRule, RuleName, RuleParams};

    fn key(strategy: Strategy, expected: &[usize], masked: &[usize], markers: Option<(&str, &str)>) -> AnswerKey {
        AnswerKey {
            sample_id: "s".into(),
            strategy,
            rule: None,
            labels_expected: expected.to_vec(),
            labels_masked: masked.to_vec(),
            digit_template: "###{i}.".into(),
            open_marker: markers.map(|m| m.0.to_string()),
            close_marker: markers.map(|m| m.1.to_string()),
        }
    }

    const M: Option<(&str, &str)> = Some(("[START]", "[END]"));

    #[test]
    fn gold_wrapped_response_succeeds() {
        let k = key(Strategy::FormatPermute, &[3, 1, 2], &[], M);
        let text = "###3. [START]c[END]\n\n###1. [START]a[END]\n\n###2. [START]b[END]";
        let v = score_response(&k, text).unwrap();
        assert!(v.success, "{v:?}");
        assert_eq!(v.parsed_count, 3);
    }

    #[test]
    fn missing_middle_item() {
        let k = key(Strategy::Format, &[1, 2, 3], &[], M);
        let v = score_response(&k, "###1. [START]a[END]\n\n###3. [START]c[END]").unwrap();
        assert!(!v.success);
        assert!(v.order_ok && v.format_ok);
        assert_eq!(v.missing_labels, vec![2]);
    }

    #[test]
    fn wrong_order_is_flagged() {
        let k = key(Strategy::FormatPermute, &[3, 2, 1], &[], M);
        let v = score_response(&k, "###1. [START]a[END]\n###2. [START]b[END]\n###3. [START]c[END]").unwrap();
        assert!(v.format_ok && !v.order_ok && !v.success);
        assert!(v.missing_labels.is_empty());
    }

    #[test]
    fn masked_label_present_fails() {
        let k = key(Strategy::FormatMaskout, &[1, 3], &[2], M);
        let v = score_response(&k, "###1. [START]a[END]\n###2. [START]b[END]\n###3. [START]c[END]").unwrap();
        assert!(!v.maskout_ok && !v.success);
        let v = score_response(&k, "###1. [START]a[END]\n###3. [START]c[END]").unwrap();
        assert!(v.success);
    }

    #[test]
    fn missing_markers_or_empty_body_break_format() {
        let k = key(Strategy::Format, &[1, 2], &[], M);
        let v = score_response(&k, "###1. a\n###2. [START]b[END]").unwrap();
        assert!(!v.format_ok);
        let v = score_response(&k, "###1. [START]  [END]\n###2. [START]b[END]").unwrap();
        assert!(!v.format_ok);
        let v = score_response(&k, "###1. [START]a\n###2. [START]b[END]").unwrap();
        assert!(!v.success);
    }

    #[test]
    fn labels_inside_bodies_are_ignored() {
        let k = key(Strategy::FormatPermute, &[2, 1], &[], M);
        let text = "###2. [START]Steps:\n###1. not a label\n1. list\n[END]\n\n###1. [START]x[END]";
        let v = score_response(&k, text).unwrap();
        assert!(v.success, "{v:?}");
        assert!(v.extra_labels.is_empty());
    }

    #[test]
    fn labels_must_start_lines() {
        let k = key(Strategy::Format, &[1, 2], &[], None);
        let v = score_response(&k, "###1. see ###2. inline\n").unwrap();
        assert_eq!(v.missing_labels, vec![2]);
        let v = score_response(&k, "  ###1. a\n\t###2. b").unwrap();
        assert!(v.success);
    }

    #[test]
    fn unwrapped_repeats_count_once() {
        let mut k = key(Strategy::Format, &[1, 2], &[], None);
        k.digit_template = "{i}.".into();
        let v = score_response(&k, "1. intro\n1. again\n2. second\n7. out of range").unwrap();
        assert!(v.success);
        assert_eq!(v.extra_labels, vec![1, 7]);
        let v = score_response(&k, "1.\n2. second").unwrap();
        assert!(!v.format_ok);
    }

    #[test]
    fn empty_and_garbage_responses_fail() {
        let k = key(Strategy::Format, &[1, 2, 3], &[], M);
        for text in ["", "I cannot help with that.", "\n\n\n"] {
            let v = score_response(&k, text).unwrap();
            assert!(!v.success);
            assert_eq!(v.parsed_count, 0);
        }
    }

    fn test_set(n: usize) -> Dataset {
        let values = (0..n).map(|i| {
            serde_json::json!({"instruction": format!("{} question {i}", ["alpha", "beta", "gamma"][i % 3]), "response": format!("reply {i}")})
        });
        Dataset::from_values(values, FormatTag::Pair, "test").unwrap()
    }

    #[test]
    fn eval_set_counts_follow_partition() {
        let ds = test_set(218);
        let set = build_eval_set(&ds, &EngineConfig::default(), &RuleRegistry::default(), &[3, 5, 7]).unwrap();
        for (k, expected) in [(3, 72), (5, 43), (7, 31)] {
            for s in Strategy::ADVANCED {
                let n = set.iter().filter(|e| e.sample.k == k && e.sample.strategy == s).count();
                assert_eq!(n, expected, "k={k} {s}");
            }
        }
        let format3 = set.iter().find(|e| e.sample.k == 3 && e.sample.strategy == Strategy::Format).unwrap();
        assert_eq!(format3.answer_key().labels_expected, vec![1, 2, 3]);
    }

    #[test]
    fn eval_set_rejects_small_datasets() {
        let ds = test_set(4);
        assert!(matches!(
            build_eval_set(&ds, &EngineConfig::default(), &RuleRegistry::default(), &[5]),
            Err(MosaicError::DatasetTooSmall { len: 4, k: 5 })
        ));
    }

    #[test]
    fn reverse_answered_in_original_order() {
        let ds = test_set(3);
        let members: Vec<&InstructionRecord> = ds.records.iter().collect();
        let reg = RuleRegistry::default();
        let cfg = EngineConfig::default();
        let mut sample =
            render_group(&members, Strategy::Format, &cfg, &reg, &WhitespaceWords, &mut rng_from_seed(1), 0).unwrap();
        let original_order = sample.overall_response.clone();
        sample.strategy = Strategy::FormatPermute;
        sample.rule = Some(MetaRule::new(&reg, RuleName::Permute(PermuteRule::Reverse), 3, RuleParams::None).unwrap());
        sample.response_order = vec![3, 2, 1];
        let v = score_sample(&sample, &original_order).unwrap();
        assert!(v.format_ok && !v.order_ok && !v.success);
    }

    #[test]
    fn file_scoring_aggregates() {
        let ds = test_set(30);
        let set = build_eval_set(&ds, &EngineConfig::default(), &RuleRegistry::default(), &[3]).unwrap();
        let keys: Vec<AnswerKey> = set.iter().map(EvalSample::answer_key).collect();
        let gold: Vec<ResponseLine> = set
            .iter()
            .map(|e| ResponseLine {
                sample_id: e.sample_id.clone(),
                response: e.sample.overall_response.clone(),
            })
            .collect();
        let report = score_responses(&keys, gold.clone()).unwrap();
        assert_eq!(report.overall.success_rate, 1.0);
        assert!(report.cells.iter().all(|c| c.rate.success_rate == 1.0));

        let empty = score_responses(&keys, Vec::new()).unwrap();
        assert_eq!(empty.overall.success_rate, 0.0);

        let mut bad = gold.clone();
        bad.push(ResponseLine {
            sample_id: "nope".into(),
            response: String::new(),
        });
        assert!(matches!(score_responses(&keys, bad), Err(MosaicError::UnknownSample(_))));

        let mut dup = gold;
        dup.push(ResponseLine {
            sample_id: keys[0].sample_id.clone(),
            response: String::new(),
        });
        let r = score_responses(&keys, dup).unwrap();
        assert!(!r.per_sample[0].success);
    }
}
