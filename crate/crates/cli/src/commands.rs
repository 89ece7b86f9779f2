use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mosaic_core::config::KDistributionLayer;
use mosaic_core::corpus::{load_dataset_with, read_mosaics, Container};
use mosaic_core::ksampler::{summarize_ks, KSummary};
use mosaic_core::ruleset::{MaskoutRule, PermuteRule, RuleKind, RuleName};
use mosaic_core::validator::{read_answer_keys, read_responses, score_responses, ResponseLine};
use mosaic_core::{
    build_eval_set, run_with, write_mosaics, ConfigLayer, Dataset, EngineConfig, FormatTag, Grouping,
    RuleRegistry, Strategy, StrategyWeights, ValidationReport,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, FileDigest, Manifest};
use crate::{BuildArgs, EngineArgs, EvalMakeArgs, EvalScoreArgs, Family, GroupingArg, InputFormat, RulesArgs, Schema, StatsArgs};

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var("MOSAIC_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("MOSAIC_SEED={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Fix => "fix",
        Family::Uniform => "uniform",
        Family::Exponential => "exponential",
        Family::Lognormal => "lognormal",
        Family::Logistic => "logistic",
        Family::Pareto => "pareto",
    }
}

/// Layers MOSAIC_SEED, then the config file, then flags.
fn resolve_engine(args: &EngineArgs, epochs: Option<usize>) -> CliResult<(EngineConfig, RuleRegistry, Option<PathBuf>)> {
    let env = ConfigLayer {
        seed: env_seed()?,
        ..ConfigLayer::default()
    };
    let file = match &args.config {
        Some(p) => ConfigLayer::load(p)?,
        None => ConfigLayer::default(),
    };
    let k_distribution = (args.k_max.is_some() || args.distribution.is_some()).then(|| KDistributionLayer {
        family: args.distribution.map(|f| family_name(f).to_string()),
        k_max: args.k_max,
        params: None,
    });
    let flags = ConfigLayer {
        seed: args.seed,
        epochs,
        budget: args.budget,
        strategy_weights: args.strategy_weights.as_deref().map(StrategyWeights::parse_list).transpose()?,
        primary_mode: args.primary.then_some(true),
        wrap_probability: args.wrap_prob,
        grouping: args.grouping.map(|g| match g {
            GroupingArg::Random => Grouping::Random,
            GroupingArg::ByCluster => Grouping::ByCluster,
        }),
        k_distribution,
        registry: args.registry.clone(),
        ..ConfigLayer::default()
    };
    let layer = env.merge(file).merge(flags);
    let registry = match &layer.registry {
        Some(p) => RuleRegistry::load(p)?,
        None => RuleRegistry::default(),
    };
    Ok((layer.resolve()?, registry, layer.registry))
}

fn load_input(path: &Path, args: &EngineArgs) -> CliResult<Dataset> {
    let tag = match args.schema {
        Schema::AlpacaTriplet => FormatTag::AlpacaTriplet,
        Schema::Pair => FormatTag::Pair,
    };
    let container = match args.format {
        None => Container::Auto,
        Some(InputFormat::Jsonl) => Container::Jsonl,
        Some(InputFormat::Json) => Container::Json,
    };
    let ds = load_dataset_with(path, tag, container)?;
    if ds.dropped > 0 {
        log::warn!("{}: dropped {} invalid records", path.display(), ds.dropped);
    }
    Ok(ds)
}

/// `out.jsonl` -> `out.<suffix>`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

pub fn build(args: BuildArgs) -> CliResult<()> {
    let started = Instant::now();
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let (config, registry, registry_path) = resolve_engine(&args.engine, args.epochs)?;
    let ds = load_input(&args.input, &args.engine)?;
    let counter = mosaic_core::engine::builtin_counter(config.length_counter)?;
    let out = run_with(&ds, &config, &registry, counter.as_ref(), args.jobs)?;
    write_mosaics(&out.samples, &args.out, !args.no_metadata)?;
    let report_path = sibling(&args.out, "report.json");
    write_json(&report_path, &out.report)?;
    let manifest = Manifest::new(
        &config,
        registry_path.as_deref(),
        FileDigest::of(&args.input)?,
        FileDigest::of(&args.out)?,
        &out.report,
        started.elapsed().as_millis(),
    );
    write_json(&sibling(&args.out, "manifest.json"), &manifest)?;
    eprintln!(
        "{} records x {} epochs -> {} samples (ratio {:.4}, Mix<=5 {:.4}, oversize {}) -> {}",
        out.report.input_records,
        out.report.epochs,
        out.report.output_samples,
        out.report.output_input_ratio,
        out.report.k.mix_le_5,
        out.report.oversize,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct Stats {
    samples: usize,
    epochs: usize,
    member_slots: usize,
    /// Output samples per input record per pass.
    ratio: f64,
    k: KSummary,
    strategy_mix: BTreeMap<Strategy, f64>,
    strategy_counts: BTreeMap<Strategy, usize>,
}

pub fn stats(args: StatsArgs) -> CliResult<()> {
    let lines = read_mosaics(&args.input)?;
    if lines.is_empty() {
        return Err(CliError::Data(format!("{}: no samples", args.input.display())));
    }
    let mut metas = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match &line.meta {
            Some(m) => metas.push(m),
            None => {
                return Err(CliError::Data(format!(
                    "{}: line {} has no metadata; rebuild without --no-metadata",
                    args.input.display(),
                    i + 1
                )))
            }
        }
    }
    let epochs = metas.iter().map(|m| m.epoch).collect::<std::collections::BTreeSet<_>>().len();
    let member_slots: usize = metas.iter().map(|m| m.member_ids.len()).sum();
    let mut strategy_counts = BTreeMap::new();
    for m in &metas {
        *strategy_counts.entry(m.strategy).or_insert(0usize) += 1;
    }
    let n = metas.len();
    let stats = Stats {
        samples: n,
        epochs,
        member_slots,
        ratio: n as f64 / member_slots as f64,
        k: summarize_ks(metas.iter().map(|m| m.k)),
        strategy_mix: strategy_counts.iter().map(|(s, c)| (*s, *c as f64 / n as f64)).collect(),
        strategy_counts,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&stats).map_err(|e| CliError::Data(e.to_string()))?);
        return Ok(());
    }
    println!("samples       {}", stats.samples);
    println!("epochs        {}", stats.epochs);
    println!("member slots  {}", stats.member_slots);
    println!("ratio         {:.4}", stats.ratio);
    println!("mean k        {:.3}", stats.k.mean_k);
    println!("Mix<=5        {:.4}", stats.k.mix_le_5);
    println!("k histogram");
    for (k, c) in &stats.k.histogram {
        println!("  {k:>3}  {c:>8}  {:.4}", *c as f64 / n as f64);
    }
    println!("strategy mix");
    for (s, c) in &stats.strategy_counts {
        println!("  {:<15} {c:>8}  {:.4}", s.as_str(), stats.strategy_mix[s]);
    }
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(&row).map_err(|e| CliError::Data(e.to_string()))?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct Prompt<'a> {
    sample_id: &'a str,
    instruction: &'a str,
}

pub fn eval_make(args: EvalMakeArgs) -> CliResult<()> {
    let (config, registry, _) = resolve_engine(&args.engine, None)?;
    let ds = load_input(&args.input, &args.engine)?;
    let set = build_eval_set(&ds, &config, &registry, &args.k)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    for &k in &args.k {
        let rows: Vec<_> = set.iter().filter(|e| e.sample.k == k).collect();
        let dir = &args.out_dir;
        write_jsonl(
            &dir.join(format!("prompts.k{k}.jsonl")),
            rows.iter().map(|e| Prompt {
                sample_id: &e.sample_id,
                instruction: &e.sample.overall_instruction,
            }),
        )?;
        write_jsonl(&dir.join(format!("keys.k{k}.jsonl")), rows.iter().map(|e| e.answer_key()))?;
        write_jsonl(
            &dir.join(format!("gold.k{k}.jsonl")),
            rows.iter().map(|e| ResponseLine {
                sample_id: e.sample_id.clone(),
                response: e.sample.overall_response.clone(),
            }),
        )?;
        let per: Vec<String> = Strategy::ADVANCED
            .iter()
            .map(|s| format!("{s}={}", rows.iter().filter(|e| e.sample.strategy == *s).count()))
            .collect();
        println!("k={k}: {}", per.join(" "));
    }
    Ok(())
}

fn print_table(report: &ValidationReport) {
    let ks: Vec<usize> = report.by_k.keys().copied().collect();
    let mut header = format!("{:<15}", "strategy");
    for k in &ks {
        header.push_str(&format!(" {:>8}", format!("k={k}")));
    }
    header.push_str(&format!(" {:>8}", "all"));
    println!("{header}");
    for (strategy, rate) in &report.by_strategy {
        let mut row = format!("{:<15}", strategy.as_str());
        for &k in &ks {
            match report.rate(*strategy, k) {
                Some(r) => row.push_str(&format!(" {:>7.1}%", 100.0 * r)),
                None => row.push_str(&format!(" {:>8}", "-")),
            }
        }
        row.push_str(&format!(" {:>7.1}%", 100.0 * rate.success_rate));
        println!("{row}");
    }
    println!(
        "overall: {}/{} ({:.1}%)",
        report.overall.successes,
        report.overall.n,
        100.0 * report.overall.success_rate
    );
}

pub fn eval_score(args: EvalScoreArgs) -> CliResult<()> {
    let mut keys = Vec::new();
    for path in &args.keys {
        keys.extend(read_answer_keys(path)?);
    }
    let responses = read_responses(&args.responses)?;
    let report = score_responses(&keys, responses)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?);
    } else {
        print_table(&report);
    }
    Ok(())
}

#[derive(Serialize)]
struct RuleCounts {
    digit_templates: usize,
    bracket_pairs: usize,
    text_pairs: usize,
    permute_rules: usize,
    maskout_rules: usize,
}

pub fn rules(args: RulesArgs) -> CliResult<()> {
    let reg = match &args.registry {
        Some(p) => RuleRegistry::load(p)?,
        None => RuleRegistry::default(),
    };
    let counts = RuleCounts {
        digit_templates: reg.digit_templates.len(),
        bracket_pairs: reg.bracket_pairs.len(),
        text_pairs: reg.text_pairs.len(),
        permute_rules: RuleRegistry::rule_names(RuleKind::Permute).len(),
        maskout_rules: RuleRegistry::rule_names(RuleKind::Maskout).len(),
    };
    if args.json {
        let v = serde_json::json!({"counts": counts, "registry": reg});
        println!("{}", serde_json::to_string_pretty(&v).map_err(|e| CliError::Data(e.to_string()))?);
        return Ok(());
    }
    let mut out = std::io::stdout().lock();
    let mut section = |title: &str, items: Vec<String>| -> std::io::Result<()> {
        writeln!(out, "{title} ({})", items.len())?;
        for item in items {
            writeln!(out, "  {item}")?;
        }
        Ok(())
    };
    let written = section("digit templates", reg.digit_templates.clone())
        .and_then(|_| section("bracket pairs", reg.bracket_pairs.clone()))
        .and_then(|_| section("text pairs", reg.text_pairs.iter().map(|(a, b)| format!("{a} / {b}")).collect()))
        .and_then(|_| {
            section(
                "permute rules",
                PermuteRule::ALL.iter().map(|r| format!("{:<20} {}", r.as_str(), reg.rule_template(RuleName::Permute(*r)))).collect(),
            )
        })
        .and_then(|_| {
            section(
                "maskout rules",
                MaskoutRule::ALL.iter().map(|r| format!("{:<20} {}", r.as_str(), reg.rule_template(RuleName::Maskout(*r)))).collect(),
            )
        });
    match written {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Data(e.to_string())),
        _ => Ok(()),
    }
}
