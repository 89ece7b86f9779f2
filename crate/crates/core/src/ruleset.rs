//! Serial-digit formats, response-parsing markers, and the permute/maskout
//! rule tables.
//!
//! All indices handled here are 1-based serial numbers, matching the labels
//! rendered into samples.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MosaicError, Result};

const INDEX_SLOT: &str = "{i}";
const TEXT_SLOT: &str = "{t}";

/// A serial-digit label pattern such as `###{i}.`, split around its slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTemplate {
    prefix: String,
    suffix: String,
}

impl LabelTemplate {
    pub fn parse(template: &str) -> Result<LabelTemplate> {
        if template.matches(INDEX_SLOT).count() != 1 {
            return Err(MosaicError::Registry(format!(
                "digit template {template:?} must contain {INDEX_SLOT} exactly once"
            )));
        }
        let (prefix, suffix) = template.split_once(INDEX_SLOT).unwrap();
        if prefix.chars().last().is_some_and(|c| c.is_ascii_digit())
            || suffix.chars().next().is_some_and(|c| c.is_ascii_digit())
            || template.chars().any(char::is_whitespace)
        {
            return Err(MosaicError::Registry(format!(
                "digit template {template:?} must not put digits next to the slot or contain whitespace"
            )));
        }
        Ok(LabelTemplate {
            prefix: prefix.to_string(),
            suffix: suffix.to_string(),
        })
    }

    pub fn render(&self, index: usize) -> String {
        format!("{}{index}{}", self.prefix, self.suffix)
    }

    /// Matches a label at the very start of `s`, returning the serial number
    /// and the byte length of the label. The label must be followed by
    /// whitespace, the end of `s`, or `follow` (when given).
    pub fn match_start(&self, s: &str, follow: Option<&str>) -> Option<(usize, usize)> {
        let rest = s.strip_prefix(self.prefix.as_str())?;
        let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return None;
        }
        let number: usize = rest[..digits].parse().ok()?;
        let tail = rest[digits..].strip_prefix(self.suffix.as_str())?;
        let boundary = match tail.chars().next() {
            None => true,
            Some(c) if c.is_whitespace() => true,
            Some(_) => follow.is_some_and(|f| tail.starts_with(f)),
        };
        boundary.then(|| (number, s.len() - tail.len()))
    }
}

/// The sampled response format: serial label plus optional parsing markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatSpec {
    pub digit_template: String,
    pub open_marker: Option<String>,
    pub close_marker: Option<String>,
    pub meta_text: String,
}

impl FormatSpec {
    /// Plain `1.`, `2.` labels with no markers and no meta-instruction.
    pub fn plain() -> FormatSpec {
        FormatSpec {
            digit_template: "{i}.".to_string(),
            open_marker: None,
            close_marker: None,
            meta_text: String::new(),
        }
    }

    pub fn validate(&self) -> Result<LabelTemplate> {
        let template = LabelTemplate::parse(&self.digit_template)?;
        match (&self.open_marker, &self.close_marker) {
            (None, None) => {}
            (Some(open), Some(close)) if !open.is_empty() && !close.is_empty() && open != close => {}
            _ => {
                return Err(MosaicError::Registry(
                    "open and close markers must both be present, non-empty and distinct, or both absent"
                        .into(),
                ))
            }
        }
        Ok(template)
    }

    pub fn label_template(&self) -> LabelTemplate {
        // constructed formats are validated when built
        LabelTemplate::parse(&self.digit_template).expect("validated digit template")
    }

    pub fn label(&self, index: usize) -> String {
        self.digit_template.replacen(INDEX_SLOT, &index.to_string(), 1)
    }

    pub fn markers(&self) -> Option<(&str, &str)> {
        match (&self.open_marker, &self.close_marker) {
            (Some(o), Some(c)) => Some((o, c)),
            _ => None,
        }
    }

    /// Renders one response item: label, then the response inside the
    /// markers when the format has them.
    pub fn wrap(&self, index: usize, response: &str) -> String {
        match self.markers() {
            Some((open, close)) => format!("{} {open}{response}{close}", self.label(index)),
            None => format!("{} {response}", self.label(index)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Permute,
    Maskout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PermuteRule {
    #[serde(rename = "FIX")]
    Fix,
    #[serde(rename = "REVERSE")]
    Reverse,
    #[serde(rename = "ALPHA")]
    Alpha,
    #[serde(rename = "REVERSE_ALPHA")]
    ReverseAlpha,
    #[serde(rename = "LENGTH_WORD")]
    LengthWord,
    #[serde(rename = "REVERSE_LENGTH_WORD")]
    ReverseLengthWord,
    #[serde(rename = "LENGTH_CHAR")]
    LengthChar,
    /// Longest-first by characters. Canonical name `REVERSE_CHAR_WORD`;
    /// `REVERSE_LENGTH_CHAR` is accepted as an alias.
    #[serde(rename = "REVERSE_CHAR_WORD", alias = "REVERSE_LENGTH_CHAR")]
    ReverseLengthChar,
    #[serde(rename = "ODD_EVEN")]
    OddEven,
    #[serde(rename = "EVEN_ODD")]
    EvenOdd,
}

impl PermuteRule {
    pub const ALL: [PermuteRule; 10] = [
        PermuteRule::Fix,
        PermuteRule::Reverse,
        PermuteRule::Alpha,
        PermuteRule::ReverseAlpha,
        PermuteRule::LengthWord,
        PermuteRule::ReverseLengthWord,
        PermuteRule::LengthChar,
        PermuteRule::ReverseLengthChar,
        PermuteRule::OddEven,
        PermuteRule::EvenOdd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PermuteRule::Fix => "FIX",
            PermuteRule::Reverse => "REVERSE",
            PermuteRule::Alpha => "ALPHA",
            PermuteRule::ReverseAlpha => "REVERSE_ALPHA",
            PermuteRule::LengthWord => "LENGTH_WORD",
            PermuteRule::ReverseLengthWord => "REVERSE_LENGTH_WORD",
            PermuteRule::LengthChar => "LENGTH_CHAR",
            PermuteRule::ReverseLengthChar => "REVERSE_CHAR_WORD",
            PermuteRule::OddEven => "ODD_EVEN",
            PermuteRule::EvenOdd => "EVEN_ODD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MaskoutRule {
    #[serde(rename = "FIX")]
    Fix,
    #[serde(rename = "WORD_LONG")]
    WordLong,
    #[serde(rename = "WORD_SHORT")]
    WordShort,
    #[serde(rename = "ODD")]
    Odd,
    #[serde(rename = "EVEN")]
    Even,
}

impl MaskoutRule {
    pub const ALL: [MaskoutRule; 5] = [
        MaskoutRule::Fix,
        MaskoutRule::WordLong,
        MaskoutRule::WordShort,
        MaskoutRule::Odd,
        MaskoutRule::Even,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskoutRule::Fix => "FIX",
            MaskoutRule::WordLong => "WORD_LONG",
            MaskoutRule::WordShort => "WORD_SHORT",
            MaskoutRule::Odd => "ODD",
            MaskoutRule::Even => "EVEN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "lowercase")]
pub enum RuleName {
    Permute(PermuteRule),
    Maskout(MaskoutRule),
}

impl RuleName {
    pub fn kind(self) -> RuleKind {
        match self {
            RuleName::Permute(_) => RuleKind::Permute,
            RuleName::Maskout(_) => RuleKind::Maskout,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RuleName::Permute(r) => r.as_str(),
            RuleName::Maskout(r) => r.as_str(),
        }
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind() {
            RuleKind::Permute => "permute",
            RuleKind::Maskout => "maskout",
        };
        write!(f, "{kind}/{}", self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleParams {
    None,
    /// Explicit response order for permute/FIX.
    Order(Vec<usize>),
    /// Explicit indices to ignore for maskout/FIX, ascending.
    Indices(Vec<usize>),
    /// How many of the longest/shortest instructions to ignore.
    Count(usize),
}

/// A sampled permute or maskout rule bound to a member count `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaRule {
    pub name: RuleName,
    pub k: usize,
    pub params: RuleParams,
    pub meta_text: String,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn char_count(text: &str) -> usize {
    text.chars().count()
}

/// Sort key for the alphabetical rules: first non-blank character,
/// case-folded; anything that is not a letter sorts before `a`.
fn alpha_key(text: &str) -> (u8, u32) {
    match text.trim_start().chars().next() {
        Some(c) if c.is_alphabetic() => (1, c.to_lowercase().next().unwrap_or(c) as u32),
        Some(c) => (0, c as u32),
        None => (0, 0),
    }
}

fn sorted_by_key<K: Ord>(keys: &[K], descending: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    // stable sort keeps ties in ascending original index
    if descending {
        order.sort_by(|&a, &b| keys[b].cmp(&keys[a]));
    } else {
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    }
    order.into_iter().map(|i| i + 1).collect()
}

fn join_indices(indices: &[usize]) -> String {
    indices.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
}

impl MetaRule {
    /// Builds a rule with explicit parameters, checking them against `k`
    /// and rendering its sentence from `registry`.
    pub fn new(registry: &RuleRegistry, name: RuleName, k: usize, params: RuleParams) -> Result<MetaRule> {
        if k < 2 {
            return Err(MosaicError::KTooSmall {
                rule: name.as_str(),
                min: 2,
                k,
            });
        }
        let bad = |msg: String| Err(MosaicError::Data(format!("{name}: {msg}")));
        match (name, &params) {
            (RuleName::Permute(PermuteRule::Fix), RuleParams::Order(order)) => {
                let mut seen = vec![false; k + 1];
                if order.len() != k || order.iter().any(|&i| i == 0 || i > k || std::mem::replace(&mut seen[i], true)) {
                    return bad(format!("order {order:?} is not a permutation of 1..={k}"));
                }
            }
            (RuleName::Maskout(MaskoutRule::Fix), RuleParams::Indices(idx)) => {
                let ascending = idx.windows(2).all(|w| w[0] < w[1]);
                if idx.is_empty() || idx.len() >= k || !ascending || idx.iter().any(|&i| i == 0 || i > k) {
                    return bad(format!("indices {idx:?} are not a strict ascending subset of 1..={k}"));
                }
            }
            (RuleName::Maskout(MaskoutRule::WordLong | MaskoutRule::WordShort), RuleParams::Count(n)) => {
                if *n == 0 || *n >= k {
                    return bad(format!("removal count {n} leaves no survivors for k = {k}"));
                }
            }
            (RuleName::Permute(PermuteRule::Fix), _)
            | (RuleName::Maskout(MaskoutRule::Fix | MaskoutRule::WordLong | MaskoutRule::WordShort), _) => {
                return bad(format!("unexpected params {params:?}"));
            }
            (_, RuleParams::None) => {}
            (_, _) => return bad(format!("rule takes no params, got {params:?}")),
        }

        let template = registry.rule_template(name);
        let meta_text = match &params {
            RuleParams::Order(order) => template.replace("{order}", &join_indices(order)),
            RuleParams::Indices(idx) => template.replace("{list}", &join_indices(idx)),
            RuleParams::Count(n) => template.replace("{n}", &n.to_string()),
            RuleParams::None => template.to_string(),
        };
        Ok(MetaRule {
            name,
            k,
            params,
            meta_text,
        })
    }

    pub fn kind(&self) -> RuleKind {
        self.name.kind()
    }

    /// Target response order (permute) or surviving indices in original
    /// order (maskout), as 1-based serials.
    pub fn apply(&self, items: &[&str]) -> Result<Vec<usize>> {
        let k = self.k;
        if items.len() != k {
            return Err(MosaicError::LengthMismatch {
                expected: k,
                got: items.len(),
            });
        }
        let words = || items.iter().map(|t| word_count(t)).collect::<Vec<_>>();
        let order = match (self.name, &self.params) {
            (RuleName::Permute(rule), params) => match rule {
                PermuteRule::Fix => match params {
                    RuleParams::Order(order) => order.clone(),
                    _ => unreachable!("validated in MetaRule::new"),
                },
                PermuteRule::Reverse => (1..=k).rev().collect(),
                PermuteRule::Alpha | PermuteRule::ReverseAlpha => {
                    let keys: Vec<_> = items.iter().map(|t| alpha_key(t)).collect();
                    sorted_by_key(&keys, rule == PermuteRule::ReverseAlpha)
                }
                PermuteRule::LengthWord | PermuteRule::ReverseLengthWord => {
                    sorted_by_key(&words(), rule == PermuteRule::ReverseLengthWord)
                }
                PermuteRule::LengthChar | PermuteRule::ReverseLengthChar => {
                    let chars: Vec<_> = items.iter().map(|t| char_count(t)).collect();
                    sorted_by_key(&chars, rule == PermuteRule::ReverseLengthChar)
                }
                PermuteRule::OddEven => (1..=k).step_by(2).chain((2..=k).step_by(2)).collect(),
                PermuteRule::EvenOdd => (2..=k).step_by(2).chain((1..=k).step_by(2)).collect(),
            },
            (RuleName::Maskout(_), _) => {
                let removed = self.removed(items)?;
                (1..=k).filter(|i| !removed.contains(i)).collect()
            }
        };
        Ok(order)
    }

    /// Indices a maskout rule removes, ascending. Empty for permute rules.
    pub fn removed(&self, items: &[&str]) -> Result<Vec<usize>> {
        let k = self.k;
        if items.len() != k {
            return Err(MosaicError::LengthMismatch {
                expected: k,
                got: items.len(),
            });
        }
        let mut removed = match (self.name, &self.params) {
            (RuleName::Permute(_), _) => Vec::new(),
            (RuleName::Maskout(MaskoutRule::Fix), RuleParams::Indices(idx)) => idx.clone(),
            (RuleName::Maskout(rule @ (MaskoutRule::WordLong | MaskoutRule::WordShort)), RuleParams::Count(n)) => {
                let words: Vec<_> = items.iter().map(|t| word_count(t)).collect();
                let mut ranked = sorted_by_key(&words, rule == MaskoutRule::WordLong);
                ranked.truncate(*n);
                ranked
            }
            (RuleName::Maskout(MaskoutRule::Odd), _) => (1..=k).step_by(2).collect(),
            (RuleName::Maskout(MaskoutRule::Even), _) => (2..=k).step_by(2).collect(),
            _ => unreachable!("validated in MetaRule::new"),
        };
        removed.sort_unstable();
        Ok(removed)
    }
}

pub fn apply_meta_rule(rule: &MetaRule, items: &[&str]) -> Result<Vec<usize>> {
    rule.apply(items)
}

/// Format and rule tables. Immutable once built; share freely.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleRegistry {
    pub digit_templates: Vec<String>,
    /// Parsing brackets with a `{t}` slot for the parsing text.
    pub bracket_pairs: Vec<String>,
    pub text_pairs: Vec<(String, String)>,
    pub permute_templates: BTreeMap<PermuteRule, String>,
    pub maskout_templates: BTreeMap<MaskoutRule, String>,
    /// Sentence naming the label format; `{label}` is the digit template
    /// with `i` in the slot.
    pub format_template: String,
    /// Sentence naming the markers; `{open}` and `{close}`.
    pub wrap_template: String,
}

impl Default for RuleRegistry {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        RuleRegistry {
            digit_templates: s(&[
                "{i}.", "({i}).", "[{i}].", "⟨{i}⟩.", "≪{i}≫.", "###{i}.", "##{i}.", "##{i}##.", "|{i}|.",
                "||{i}||.",
            ]),
            bracket_pairs: s(&[
                "({t})", "[{t}]", "⟨{t}⟩", "≪{t}≫", "|{t}|", "[|{t}|]", "⟨|{t}|⟩", "#{t}#", "*{t}*", "@{t}@",
            ]),
            text_pairs: [
                ("BEGIN", "END"),
                ("START", "END"),
                ("RESPONSE", "END"),
                ("RESPONSE", "END OF RESPONSE"),
                ("OPEN", "CLOSE"),
                ("OPEN RESPONSE", "CLOSE"),
                ("INITIATE", "TERMINATE"),
                ("START POINT", "END POINT"),
                ("RES_START", "RES_END"),
                ("RES", "/RES"),
            ]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
            permute_templates: default_permute_templates(),
            maskout_templates: default_maskout_templates(),
            format_template: "Label each response with the serial number of its instruction in the format \"{label}\"."
                .to_string(),
            wrap_template: "Wrap each response between \"{open}\" and \"{close}\".".to_string(),
        }
    }
}

fn default_permute_templates() -> BTreeMap<PermuteRule, String> {
    use PermuteRule::*;
    [
        (Fix, "Respond to each of the following instructions in the order of this list: {order}."),
        (Reverse, "Respond to each of the following instructions in reverse of the original order."),
        (Alpha, "Respond to each of the following instructions in the alphabetical order of their first letters."),
        (
            ReverseAlpha,
            "Respond to each of the following instructions in the reverse alphabetical order of their first letters.",
        ),
        (
            LengthWord,
            "Respond to each of the following instructions according to their length in words, shortest first.",
        ),
        (
            ReverseLengthWord,
            "Respond to each of the following instructions according to their length in words, longest first.",
        ),
        (
            LengthChar,
            "Respond to each of the following instructions according to their length in characters, shortest first.",
        ),
        (
            ReverseLengthChar,
            "Respond to each of the following instructions according to their length in characters, longest first.",
        ),
        (OddEven, "First respond to the odd-numbered instructions, then to the even-numbered ones."),
        (EvenOdd, "First respond to the even-numbered instructions, then to the odd-numbered ones."),
    ]
    .into_iter()
    .map(|(r, t)| (r, t.to_string()))
    .collect()
}

fn default_maskout_templates() -> BTreeMap<MaskoutRule, String> {
    use MaskoutRule::*;
    [
        (Fix, "Ignore the instructions numbered {list} and respond to the others."),
        (WordLong, "Ignore the {n} longest instruction(s) by word count and respond to the others."),
        (WordShort, "Ignore the {n} shortest instruction(s) by word count and respond to the others."),
        (Odd, "Ignore the odd-numbered instructions and respond to the even-numbered ones."),
        (Even, "Ignore the even-numbered instructions and respond to the odd-numbered ones."),
    ]
    .into_iter()
    .map(|(r, t)| (r, t.to_string()))
    .collect()
}

/// On-disk registry override. Lists replace the defaults; template maps are
/// merged over them.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryOverride {
    pub digit_templates: Option<Vec<String>>,
    pub bracket_pairs: Option<Vec<String>>,
    pub text_pairs: Option<Vec<(String, String)>>,
    pub permute_templates: Option<BTreeMap<PermuteRule, String>>,
    pub maskout_templates: Option<BTreeMap<MaskoutRule, String>>,
    pub format_template: Option<String>,
    pub wrap_template: Option<String>,
}

impl RuleRegistry {
    pub fn from_override(over: RegistryOverride) -> Result<RuleRegistry> {
        let mut reg = RuleRegistry::default();
        if let Some(v) = over.digit_templates {
            reg.digit_templates = v;
        }
        if let Some(v) = over.bracket_pairs {
            reg.bracket_pairs = v;
        }
        if let Some(v) = over.text_pairs {
            reg.text_pairs = v;
        }
        if let Some(m) = over.permute_templates {
            reg.permute_templates.extend(m);
        }
        if let Some(m) = over.maskout_templates {
            reg.maskout_templates.extend(m);
        }
        if let Some(t) = over.format_template {
            reg.format_template = t;
        }
        if let Some(t) = over.wrap_template {
            reg.wrap_template = t;
        }
        reg.validate()?;
        Ok(reg)
    }

    pub fn from_json(text: &str) -> Result<RuleRegistry> {
        let over: RegistryOverride =
            serde_json::from_str(text).map_err(|e| MosaicError::Registry(e.to_string()))?;
        RuleRegistry::from_override(over)
    }

    pub fn load(path: &Path) -> Result<RuleRegistry> {
        let text = fs::read_to_string(path).map_err(|e| MosaicError::Registry(format!("{}: {e}", path.display())))?;
        RuleRegistry::from_json(&text).map_err(|e| match e {
            MosaicError::Registry(m) => MosaicError::Registry(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(MosaicError::Registry(m));
        if self.digit_templates.is_empty() || self.bracket_pairs.is_empty() || self.text_pairs.is_empty() {
            return err("digit_templates, bracket_pairs and text_pairs must be non-empty".into());
        }
        for t in &self.digit_templates {
            LabelTemplate::parse(t)?;
        }
        for b in &self.bracket_pairs {
            if b.matches(TEXT_SLOT).count() != 1 {
                return err(format!("bracket {b:?} must contain {TEXT_SLOT} exactly once"));
            }
        }
        for (open, close) in &self.text_pairs {
            if open.trim().is_empty() || close.trim().is_empty() || open == close {
                return err(format!("text pair ({open:?}, {close:?}) must be non-empty and distinct"));
            }
        }
        for rule in PermuteRule::ALL {
            let Some(t) = self.permute_templates.get(&rule) else {
                return err(format!("missing template for permute/{}", rule.as_str()));
            };
            if rule == PermuteRule::Fix && !t.contains("{order}") {
                return err("permute/FIX template must contain {order}".into());
            }
        }
        for rule in MaskoutRule::ALL {
            let Some(t) = self.maskout_templates.get(&rule) else {
                return err(format!("missing template for maskout/{}", rule.as_str()));
            };
            let slot = match rule {
                MaskoutRule::Fix => Some("{list}"),
                MaskoutRule::WordLong | MaskoutRule::WordShort => Some("{n}"),
                _ => None,
            };
            if let Some(slot) = slot {
                if !t.contains(slot) {
                    return err(format!("maskout/{} template must contain {slot}", rule.as_str()));
                }
            }
        }
        if !self.format_template.contains("{label}") {
            return err("format_template must contain {label}".into());
        }
        if !self.wrap_template.contains("{open}") || !self.wrap_template.contains("{close}") {
            return err("wrap_template must contain {open} and {close}".into());
        }
        Ok(())
    }

    pub fn rule_template(&self, name: RuleName) -> &str {
        match name {
            RuleName::Permute(r) => &self.permute_templates[&r],
            RuleName::Maskout(r) => &self.maskout_templates[&r],
        }
    }

    pub fn rule_names(kind: RuleKind) -> Vec<RuleName> {
        match kind {
            RuleKind::Permute => PermuteRule::ALL.iter().map(|&r| RuleName::Permute(r)).collect(),
            RuleKind::Maskout => MaskoutRule::ALL.iter().map(|&r| RuleName::Maskout(r)).collect(),
        }
    }

    /// Assembles a format from explicit table entries.
    pub fn assemble_format(&self, digit_template: &str, wrap: Option<(&str, &str, &str)>) -> Result<FormatSpec> {
        let label = digit_template.replacen(INDEX_SLOT, "i", 1);
        let mut meta_text = self.format_template.replace("{label}", &label);
        let (open_marker, close_marker) = match wrap {
            Some((bracket, open_text, close_text)) => {
                let open = bracket.replacen(TEXT_SLOT, open_text, 1);
                let close = bracket.replacen(TEXT_SLOT, close_text, 1);
                meta_text.push(' ');
                meta_text.push_str(&self.wrap_template.replace("{open}", &open).replace("{close}", &close));
                (Some(open), Some(close))
            }
            None => (None, None),
        };
        let spec = FormatSpec {
            digit_template: digit_template.to_string(),
            open_marker,
            close_marker,
            meta_text,
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn sample_format<R: Rng + ?Sized>(registry: &RuleRegistry, rng: &mut R, wrap_probability: f64) -> FormatSpec {
    let digit = registry.digit_templates.choose(rng).expect("non-empty digit templates");
    let wrap = if rng.random_bool(wrap_probability.clamp(0.0, 1.0)) {
        let bracket = registry.bracket_pairs.choose(rng).expect("non-empty brackets");
        let (open, close) = registry.text_pairs.choose(rng).expect("non-empty text pairs");
        Some((bracket.as_str(), open.as_str(), close.as_str()))
    } else {
        None
    };
    registry
        .assemble_format(digit, wrap)
        .expect("validated registry assembles valid formats")
}

pub fn sample_meta_rule<R: Rng + ?Sized>(
    registry: &RuleRegistry,
    rng: &mut R,
    kind: RuleKind,
    k: usize,
    items: &[&str],
) -> Result<MetaRule> {
    let names = RuleRegistry::rule_names(kind);
    if k < 2 {
        return Err(MosaicError::KTooSmall {
            rule: match kind {
                RuleKind::Permute => "permute",
                RuleKind::Maskout => "maskout",
            },
            min: 2,
            k,
        });
    }
    if items.len() != k {
        return Err(MosaicError::LengthMismatch {
            expected: k,
            got: items.len(),
        });
    }
    let name = *names.choose(rng).expect("rule tables are non-empty");
    let params = match name {
        RuleName::Permute(PermuteRule::Fix) => {
            let mut order: Vec<usize> = (1..=k).collect();
            order.shuffle(rng);
            RuleParams::Order(order)
        }
        RuleName::Maskout(MaskoutRule::Fix) => {
            let size = rng.random_range(1..k);
            let mut idx: Vec<usize> = index::sample(rng, k, size).into_iter().map(|i| i + 1).collect();
            idx.sort_unstable();
            RuleParams::Indices(idx)
        }
        RuleName::Maskout(MaskoutRule::WordLong | MaskoutRule::WordShort) => {
            RuleParams::Count(rng.random_range(1..=(k / 2).max(1)))
        }
        _ => RuleParams::None,
    };
    MetaRule::new(registry, name, k, params)
}
