//! Test-only helpers: an enumeration oracle for the permute/maskout rules and
//! a seeded synthetic corpus.
#![allow(dead_code)]

use mosaic_core::corpus::{Dataset, FormatTag};
use mosaic_core::ruleset::{MaskoutRule, MetaRule, PermuteRule, RuleName, RuleParams};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k);
            out.push(q);
        }
    }
    out
}

fn words(s: &str) -> usize {
    s.split(|c: char| c.is_whitespace()).filter(|w| !w.is_empty()).count()
}

fn chars(s: &str) -> usize {
    s.chars().count()
}

fn letter_key(s: &str) -> (u8, u32) {
    let c = s.chars().find(|c| !c.is_whitespace());
    match c {
        None => (0, 0),
        Some(c) if c.is_alphabetic() => (1, c.to_lowercase().next().unwrap() as u32),
        Some(c) => (0, c as u32),
    }
}

/// `a` must precede `b`: strictly smaller key, or equal key and smaller index.
fn precedes<K: Ord>(ka: K, kb: K, a: usize, b: usize) -> bool {
    ka < kb || (ka == kb && a < b)
}

fn permute_holds(rule: &MetaRule, items: &[&str], p: &[usize]) -> bool {
    let k = items.len();
    let it = |i: usize| items[i - 1];
    let pairs_ok = |f: &dyn Fn(usize, usize) -> bool| p.windows(2).all(|w| f(w[0], w[1]));
    match rule.name {
        RuleName::Permute(PermuteRule::Fix) => match &rule.params {
            RuleParams::Order(o) => o == p,
            _ => false,
        },
        RuleName::Permute(PermuteRule::Reverse) => p.iter().enumerate().all(|(j, &x)| x == k - j),
        RuleName::Permute(PermuteRule::Alpha) => pairs_ok(&|a, b| precedes(letter_key(it(a)), letter_key(it(b)), a, b)),
        RuleName::Permute(PermuteRule::ReverseAlpha) => {
            pairs_ok(&|a, b| precedes(std::cmp::Reverse(letter_key(it(a))), std::cmp::Reverse(letter_key(it(b))), a, b))
        }
        RuleName::Permute(PermuteRule::LengthWord) => pairs_ok(&|a, b| precedes(words(it(a)), words(it(b)), a, b)),
        RuleName::Permute(PermuteRule::ReverseLengthWord) => {
            pairs_ok(&|a, b| precedes(std::cmp::Reverse(words(it(a))), std::cmp::Reverse(words(it(b))), a, b))
        }
        RuleName::Permute(PermuteRule::LengthChar) => pairs_ok(&|a, b| precedes(chars(it(a)), chars(it(b)), a, b)),
        RuleName::Permute(PermuteRule::ReverseLengthChar) => {
            pairs_ok(&|a, b| precedes(std::cmp::Reverse(chars(it(a))), std::cmp::Reverse(chars(it(b))), a, b))
        }
        RuleName::Permute(PermuteRule::OddEven) => pairs_ok(&|a, b| precedes(a % 2 == 0, b % 2 == 0, a, b)),
        RuleName::Permute(PermuteRule::EvenOdd) => pairs_ok(&|a, b| precedes(a % 2 == 1, b % 2 == 1, a, b)),
        RuleName::Maskout(_) => false,
    }
}

fn maskout_holds(rule: &MetaRule, items: &[&str], removed: &[usize], kept: &[usize]) -> bool {
    let wc = |i: usize| words(items[i - 1]);
    match (rule.name, &rule.params) {
        (RuleName::Maskout(MaskoutRule::Fix), RuleParams::Indices(idx)) => idx == removed,
        (RuleName::Maskout(MaskoutRule::Odd), _) => removed.iter().all(|r| r % 2 == 1) && kept.iter().all(|s| s % 2 == 0),
        (RuleName::Maskout(MaskoutRule::Even), _) => removed.iter().all(|r| r % 2 == 0) && kept.iter().all(|s| s % 2 == 1),
        (RuleName::Maskout(MaskoutRule::WordLong), RuleParams::Count(n)) => {
            removed.len() == *n
                && removed.iter().all(|&r| kept.iter().all(|&s| precedes(std::cmp::Reverse(wc(r)), std::cmp::Reverse(wc(s)), r, s)))
        }
        (RuleName::Maskout(MaskoutRule::WordShort), RuleParams::Count(n)) => {
            removed.len() == *n && removed.iter().all(|&r| kept.iter().all(|&s| precedes(wc(r), wc(s), r, s)))
        }
        _ => false,
    }
}

/// Every ordering (permute) or survivor list (maskout) consistent with the
/// rule's definition, found by enumeration. A well-defined rule yields
/// exactly one.
pub fn brute_force(rule: &MetaRule, items: &[&str]) -> Vec<Vec<usize>> {
    let k = items.len();
    match rule.name {
        RuleName::Permute(_) => permutations(k).into_iter().filter(|p| permute_holds(rule, items, p)).collect(),
        RuleName::Maskout(_) => (1u32..(1 << k) - 1)
            .filter_map(|mask| {
                let kept: Vec<usize> = (1..=k).filter(|i| mask & (1 << (i - 1)) != 0).collect();
                let removed: Vec<usize> = (1..=k).filter(|i| mask & (1 << (i - 1)) == 0).collect();
                maskout_holds(rule, items, &removed, &kept).then_some(kept)
            })
            .collect(),
    }
}

const WORDS: &[&str] = &[
    "apple", "Banana", "cherry", "delta", "echo", "Foxtrot", "golf", "hotel", "india", "juliet", "kilo", "lima", "mike",
    "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey", "xray", "yankee",
    "zulu", "écarté", "Ørsted", "3rd", "#tag", "(paren)", "x", "state-of-the-art",
];

/// Random instruction texts with repeated leading letters and word counts so
/// that ties occur.
pub fn random_items<R: Rng>(rng: &mut R, k: usize) -> Vec<String> {
    (0..k)
        .map(|_| {
            let n = rng.random_range(1..=6);
            let mut v: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
            if rng.random_bool(0.2) {
                v.insert(0, " ");
            }
            v.join(if rng.random_bool(0.8) { " " } else { "  " })
        })
        .collect()
}

fn sentence<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Synthetic alpaca-style corpus. Responses span several lines and mention
/// numbers inline, but never start a line with a serial label.
pub fn corpus(n: usize, seed: u64, clusters: Option<u64>) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<serde_json::Value> = (0..n)
        .map(|i| {
            let instruction = format!("{} {i}", sentence(&mut rng, 2, 14));
            let input = if rng.random_bool(0.3) { sentence(&mut rng, 1, 8) } else { String::new() };
            let lines = rng.random_range(1..=3);
            let output = (0..lines)
                .map(|j| match j % 3 {
                    0 => sentence(&mut rng, 1, 25),
                    1 => format!("- {} has {} parts", sentence(&mut rng, 1, 4), rng.random_range(1..20)),
                    _ => format!("{} cups of {}", rng.random_range(1..9), sentence(&mut rng, 1, 3)),
                })
                .collect::<Vec<_>>()
                .join("\n");
            let mut v = serde_json::json!({"instruction": instruction, "input": input, "output": output});
            if let Some(c) = clusters {
                v["cluster"] = serde_json::json!(rng.random_range(0..c));
            }
            v
        })
        .collect();
    Dataset::from_values(values, FormatTag::AlpacaTriplet, "synthetic").unwrap()
}

/// JSONL text of the synthetic corpus, for CLI tests.
pub fn corpus_jsonl(n: usize, seed: u64) -> String {
    let ds = corpus(n, seed, None);
    ds.records
        .iter()
        .map(|r| serde_json::json!({"instruction": r.instruction, "input": "", "output": r.response}).to_string() + "\n")
        .collect()
}
