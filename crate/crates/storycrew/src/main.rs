//! Command-line entry point: generate stories, build synthetic training
//! data, compute metrics, run the pairwise judge, rank systems, and report
//! dataset statistics.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use storycrew::dataset::{corpus_stats, load_dataset, FieldMap, Split, ALL_SPLITS};
use storycrew::judge::{
    accumulate_wins, build_judge_prompt, parse_verdict, schedule_pairs, Dimension, PairTask,
    PairwiseVerdict, TiePolicy,
};
use storycrew::metrics::{corpus_report, CorpusReport, ScoredStory};
use storycrew::orchestrator::{run, write_run_dir, OrchestratorConfig, Variant};
use storycrew::ranking::fit_bradley_terry;
use storycrew::synthdata::{synthesize_example, write_rejects, write_training_files, RejectRecord};
use storycrew::{BackendRegistry, GenerationRequest, TemplateSet};

#[derive(Parser)]
#[command(name = "storycrew", version, about = "Multi-agent story generation and evaluation")]
struct Cli {
    /// Backend profiles file (TOML). Defaults to $STORYCREW_PROFILES.
    #[arg(long, global = true)]
    profiles: Option<PathBuf>,
    /// Directory of prompt template overrides. Defaults to $STORYCREW_TEMPLATE_DIR.
    #[arg(long, global = true)]
    template_dir: Option<PathBuf>,
    /// Log level (error|warn|info|debug). Defaults to $STORYCREW_LOG, then warn.
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate stories for a file of writing prompts.
    Generate(GenerateArgs),
    /// Derive per-agent training files from gold prompt/story pairs.
    Synth(SynthArgs),
    /// Compute surface metrics over generated or human stories.
    Metrics(MetricsArgs),
    /// Judge system outputs pairwise with an LLM evaluator.
    Judge(JudgeArgs),
    /// Fit Bradley-Terry strengths from judged verdicts.
    Rank(RankArgs),
    /// Summarize dataset statistics.
    Stats(StatsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Agent lineup: e2e, plan, write, or plan-write.
    #[arg(long)]
    variant: Variant,
    /// JSONL file of {"id", "prompt"} records.
    #[arg(long)]
    prompts: PathBuf,
    /// Backend profile name.
    #[arg(long)]
    backend: Option<String>,
    /// Output root; one <id>/<variant>/ directory per prompt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    max_steps: usize,
    #[arg(long, default_value_t = 4096)]
    max_output_tokens: usize,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Route one agent to a different profile, e.g. --route CONFLICT=ft-conflict.
    #[arg(long = "route", value_parser = parse_key_value)]
    routes: Vec<(String, String)>,
    /// Concurrent tasks.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// JSONL dataset of {"id", "prompt", "story", "split"} records.
    #[arg(long)]
    dataset: PathBuf,
    /// Teacher backend profile name.
    #[arg(long)]
    teacher: String,
    /// Output directory for <agent>.jsonl training files.
    #[arg(long)]
    out: PathBuf,
    /// Which split to back-translate.
    #[arg(long, default_value = "train")]
    split: String,
    /// Field renames, e.g. --field-map story=text --field-map dev=valid.
    #[arg(long = "field-map", value_parser = parse_key_value)]
    field_map: Vec<(String, String)>,
    #[arg(long, default_value_t = 4096)]
    max_output_tokens: usize,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory of generated runs (<id>/<variant>/story.txt) or of <id>.txt files.
    #[arg(long, conflicts_with = "human")]
    stories: Option<PathBuf>,
    /// Score the dataset's own human stories from this split instead.
    #[arg(long)]
    human: Option<String>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long = "field-map", value_parser = parse_key_value)]
    field_map: Vec<(String, String)>,
    /// Report label; defaults to the stories directory name or "human".
    #[arg(long)]
    system: Option<String>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct JudgeArgs {
    /// Comma-separated run directories, one system each.
    #[arg(long, value_delimiter = ',', required = true)]
    runs: Vec<PathBuf>,
    /// Judge backend profile name.
    #[arg(long)]
    judge: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "verdicts.jsonl")]
    out: PathBuf,
    #[arg(long, default_value_t = 4096)]
    max_output_tokens: usize,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct RankArgs {
    /// verdicts.jsonl written by the judge subcommand.
    #[arg(long)]
    verdicts: PathBuf,
    #[arg(long)]
    dimension: Dimension,
    #[arg(long, default_value = "half")]
    tie_policy: TiePolicy,
    /// Pseudo-count added to every ordered pair.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, default_value = "strengths.json")]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long = "field-map", value_parser = parse_key_value)]
    field_map: Vec<(String, String)>,
    #[arg(long, default_value = "stats.json")]
    out: PathBuf,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got {s}"))
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let registry = match cli
        .profiles
        .clone()
        .or_else(|| std::env::var_os("STORYCREW_PROFILES").map(PathBuf::from))
    {
        Some(path) => BackendRegistry::from_toml(&path)?,
        None => BackendRegistry::builtin(),
    };
    init_logging(cli.log_level.as_deref(), &registry);
    let templates = match cli
        .template_dir
        .clone()
        .or_else(|| std::env::var_os("STORYCREW_TEMPLATE_DIR").map(PathBuf::from))
        .or_else(|| registry.defaults.template_dir.clone().map(PathBuf::from))
    {
        Some(dir) => TemplateSet::from_dir(&dir)?,
        None => TemplateSet::default(),
    };

    match cli.command {
        Command::Generate(args) => cmd_generate(args, &registry, &templates),
        Command::Synth(args) => cmd_synth(args, &registry, &templates),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Judge(args) => cmd_judge(args, &registry, &templates),
        Command::Rank(args) => cmd_rank(args),
        Command::Stats(args) => cmd_stats(args),
    }
}

fn init_logging(flag: Option<&str>, registry: &BackendRegistry) {
    let level = flag
        .map(|s| s.to_string())
        .or_else(|| std::env::var("STORYCREW_LOG").ok())
        .or_else(|| registry.defaults.log_level.clone())
        .unwrap_or_else(|| "warn".to_string());
    let _ = env_logger::Builder::new().parse_filters(&level).try_init();
}

fn field_map(pairs: &[(String, String)]) -> Option<FieldMap> {
    if pairs.is_empty() {
        return None;
    }
    Some(pairs.iter().cloned().collect())
}

#[derive(serde::Deserialize)]
struct PromptRecord {
    id: String,
    prompt: String,
}

fn load_prompts(path: &Path) -> Result<Vec<PromptRecord>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading prompts file {}", path.display()))?;
    let mut prompts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PromptRecord = serde_json::from_str(line)
            .with_context(|| format!("line {}: malformed prompt record", idx + 1))?;
        prompts.push(record);
    }
    if prompts.is_empty() {
        bail!("prompts file {} has no records", path.display());
    }
    Ok(prompts)
}

/// Run `work` over `items` with up to `workers` threads, preserving the
/// items' order in the returned results.
fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, work: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let workers = workers.max(1);
    if workers == 1 || items.len() <= 1 {
        return items.into_iter().map(work).collect();
    }
    let queue: Mutex<Vec<(usize, T)>> = Mutex::new(items.into_iter().enumerate().rev().collect());
    let results: Mutex<Vec<(usize, R)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let Some((idx, item)) = queue.lock().unwrap().pop() else {
                    break;
                };
                let result = work(item);
                results.lock().unwrap().push((idx, result));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(idx, _)| *idx);
    results.into_iter().map(|(_, r)| r).collect()
}

fn cmd_generate(args: GenerateArgs, registry: &BackendRegistry, templates: &TemplateSet) -> Result<()> {
    let backend = args
        .backend
        .or_else(|| registry.defaults.backend.clone())
        .unwrap_or_else(|| "mock-echo".to_string());
    registry.get(&backend)?; // fail fast on unknown profiles
    let mut config = OrchestratorConfig::new(args.variant);
    config.max_steps = args.max_steps;
    config.default_route = backend;
    config.max_output_tokens = args.max_output_tokens;
    config.temperature = args.temperature;
    config.seed = Some(args.seed);
    for (label, profile) in &args.routes {
        let label = label.parse().map_err(|e: String| anyhow!(e))?;
        registry.get(profile)?;
        config.routing.insert(label, profile.clone());
    }

    let prompts = load_prompts(&args.prompts)?;
    let out = args.out.clone();
    let results = parallel_map(prompts, args.parallel, |record| {
        let outcome = run(&record.prompt, &config, registry, templates);
        match outcome {
            Ok(trace) => {
                let dir = write_run_dir(&out, &record.id, &trace)?;
                log::info!("{}: {} steps -> {}", record.id, trace.steps.len(), dir.display());
                Ok::<_, anyhow::Error>(())
            }
            Err(failure) => {
                // Persist what the completed steps already produced.
                let dir = write_run_dir(&out, &record.id, &failure.partial)?;
                std::fs::write(dir.join("error.txt"), format!("{failure}\n"))?;
                Err(anyhow!("{}: {failure}", record.id))
            }
        }
    });
    let failures: Vec<String> = results
        .into_iter()
        .filter_map(|r| r.err().map(|e| format!("{e:#}")))
        .collect();
    if !failures.is_empty() {
        bail!("{} run(s) failed:\n{}", failures.len(), failures.join("\n"));
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs, registry: &BackendRegistry, templates: &TemplateSet) -> Result<()> {
    let teacher = registry.get(&args.teacher)?;
    let map = field_map(&args.field_map);
    let records = load_dataset(&args.dataset, map.as_ref())?;
    let selected: Vec<_> = match args.split.as_str() {
        "all" => records,
        split => {
            let split: Split = split.parse().map_err(|e: String| anyhow!(e))?;
            records.into_iter().filter(|r| r.split == split).collect()
        }
    };
    if selected.is_empty() {
        bail!("no records in split {}", args.split);
    }

    let results = parallel_map(selected, args.parallel, |gold| {
        let id = gold.id.clone();
        (id, synthesize_example(&gold, teacher, templates, args.max_output_tokens))
    });
    let mut examples = Vec::new();
    let mut rejects = Vec::new();
    for (id, result) in results {
        match result {
            Ok(mut batch) => examples.append(&mut batch),
            Err(err) => rejects.push(RejectRecord {
                id,
                reason: err.to_string(),
            }),
        }
    }
    write_training_files(&args.out, &examples)?;
    if !rejects.is_empty() {
        write_rejects(&args.out, &rejects)?;
    }
    println!(
        "wrote {} training records ({} gold examples rejected) to {}",
        examples.len(),
        rejects.len(),
        args.out.display()
    );
    Ok(())
}

/// Stories from a metrics input directory: either flat `<id>.txt` files or
/// generate output (`<id>/<variant>/story.txt`).
fn collect_story_files(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut stories = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let entry = entry?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().to_string();
        if path.is_file() && name.ends_with(".txt") {
            let id = name.trim_end_matches(".txt").to_string();
            stories.insert(id, std::fs::read_to_string(&path)?);
        } else if path.is_dir() {
            for variant_entry in std::fs::read_dir(&path)? {
                let story_path = variant_entry?.path().join("story.txt");
                if story_path.is_file() {
                    stories.insert(name.clone(), std::fs::read_to_string(&story_path)?);
                    break;
                }
            }
        }
    }
    if stories.is_empty() {
        bail!("no stories found under {}", dir.display());
    }
    Ok(stories)
}

fn print_metrics_table(report: &CorpusReport) {
    let m = &report.means;
    println!(
        "{:<20} {:>8} {:>7} {:>8} {:>7} {:>7} {:>7} {:>7} {:>8} {:>8}",
        "System", "#words", "#para", "Article", "Pro", "Unique", "Intra", "Inter", "Overlap", "Rouge-L"
    );
    println!(
        "{:<20} {:>8.1} {:>7.2} {:>8.2} {:>7.2} {:>7.2} {:>7.2} {:>7} {:>8.4} {:>8}",
        report.system,
        m.words,
        m.paragraphs,
        m.article_start,
        m.pronoun_start,
        m.unique_words,
        m.intra_rep,
        report
            .inter_rep
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "---".into()),
        m.prompt_overlap,
        m.rouge_l_f
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "---".into()),
    );
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let map = field_map(&args.field_map);
    let records = load_dataset(&args.dataset, map.as_ref())?;
    let by_id: HashMap<&str, &storycrew::dataset::DatasetRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();

    let (system, scored) = match (&args.stories, &args.human) {
        (Some(dir), None) => {
            let stories = collect_story_files(dir)?;
            let mut scored = Vec::new();
            for (id, story) in stories {
                let Some(record) = by_id.get(id.as_str()) else {
                    log::warn!("story {id} has no dataset record; skipped");
                    continue;
                };
                scored.push(ScoredStory {
                    id,
                    story,
                    prompt: record.prompt.clone(),
                    reference: Some(record.story.clone()),
                });
            }
            let name = args.system.clone().unwrap_or_else(|| {
                dir.file_name()
                    .map(|n| n.to_string_lossy().to_string())
                    .unwrap_or_else(|| "system".into())
            });
            (name, scored)
        }
        (None, Some(split)) => {
            let split: Split = split.parse().map_err(|e: String| anyhow!(e))?;
            let scored = records
                .iter()
                .filter(|r| r.split == split)
                .map(|r| ScoredStory {
                    id: r.id.clone(),
                    story: r.story.clone(),
                    prompt: r.prompt.clone(),
                    reference: None,
                })
                .collect();
            (args.system.clone().unwrap_or_else(|| "human".into()), scored)
        }
        _ => bail!("exactly one of --stories or --human is required"),
    };
    if scored.is_empty() {
        bail!("no stories matched the dataset");
    }

    let report = corpus_report(&system, &scored)?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    print_metrics_table(&report);
    println!("report written to {}", args.out.display());
    Ok(())
}

/// One judged pair as persisted to verdicts.jsonl.
#[derive(serde::Serialize, serde::Deserialize)]
struct VerdictRecord {
    task: PairTask,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<PairwiseVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Discover systems in a run directory: prompt-id subdirectories each
/// holding <variant>/story.txt. A directory with several variants yields
/// one system per variant.
fn discover_systems(dirs: &[PathBuf]) -> Result<Vec<(String, BTreeMap<String, String>)>> {
    let mut systems: Vec<(String, BTreeMap<String, String>)> = Vec::new();
    for dir in dirs {
        let base = dir
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| dir.display().to_string());
        let mut per_variant: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
            let task_dir = entry?.path();
            if !task_dir.is_dir() {
                continue;
            }
            let prompt_id = task_dir.file_name().unwrap().to_string_lossy().to_string();
            for variant_entry in std::fs::read_dir(&task_dir)? {
                let variant_dir = variant_entry?.path();
                let story_path = variant_dir.join("story.txt");
                if story_path.is_file() {
                    let variant = variant_dir.file_name().unwrap().to_string_lossy().to_string();
                    per_variant
                        .entry(variant)
                        .or_default()
                        .insert(prompt_id.clone(), std::fs::read_to_string(&story_path)?);
                }
            }
        }
        if per_variant.is_empty() {
            bail!("no <prompt>/<variant>/story.txt found under {}", dir.display());
        }
        let multi = per_variant.len() > 1;
        for (variant, stories) in per_variant {
            let name = if multi { format!("{base}/{variant}") } else { base.clone() };
            systems.push((name, stories));
        }
    }
    Ok(systems)
}

fn cmd_judge(args: JudgeArgs, registry: &BackendRegistry, templates: &TemplateSet) -> Result<()> {
    let judge = registry.get(&args.judge)?;
    let systems = discover_systems(&args.runs)?;
    if systems.len() < 2 {
        bail!("need at least two systems to judge; found {}", systems.len());
    }
    let names: Vec<String> = systems.iter().map(|(n, _)| n.clone()).collect();

    // Judge only prompts every system answered.
    let mut shared: BTreeSet<String> = systems[0].1.keys().cloned().collect();
    for (name, stories) in &systems[1..] {
        let ids: BTreeSet<String> = stories.keys().cloned().collect();
        for missing in shared.difference(&ids) {
            log::warn!("{name} is missing prompt {missing}; excluded from judging");
        }
        shared = shared.intersection(&ids).cloned().collect();
    }
    if shared.is_empty() {
        bail!("the systems share no prompt ids");
    }
    let prompt_ids: Vec<String> = shared.into_iter().collect();
    let stories: HashMap<&str, &BTreeMap<String, String>> =
        systems.iter().map(|(n, s)| (n.as_str(), s)).collect();

    let tasks = schedule_pairs(&names, &prompt_ids, args.seed)?;
    let total = tasks.len();
    let records = parallel_map(tasks, args.parallel, |task| {
        let story_a = &stories[task.story_a_system()][&task.prompt_id];
        let story_b = &stories[task.story_b_system()][&task.prompt_id];
        let judged = build_judge_prompt(story_a, story_b, templates)
            .map_err(|e| e.to_string())
            .and_then(|prompt| {
                GenerationRequest::new(&prompt)
                    .map(|r| r.with_max_output_tokens(args.max_output_tokens))
                    .and_then(|req| judge.generate(&req))
                    .map_err(|e| e.to_string())
            })
            .and_then(|resp| {
                parse_verdict(&resp.text)
                    .map(|v| (resp.text, v))
                    .map_err(|e| e.to_string())
            });
        match judged {
            Ok((raw, mut verdict)) => {
                verdict.raw = String::new(); // the record keeps the raw text once
                VerdictRecord {
                    task,
                    raw: Some(raw),
                    verdict: Some(verdict),
                    error: None,
                }
            }
            Err(error) => VerdictRecord {
                task,
                raw: None,
                verdict: None,
                error: Some(error),
            },
        }
    });

    let mut out = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut failures = 0usize;
    for record in &records {
        if record.error.is_some() {
            failures += 1;
        }
        writeln!(out, "{}", serde_json::to_string(record)?)?;
    }
    println!(
        "judged {} pairs ({failures} failed) -> {}",
        total,
        args.out.display()
    );
    Ok(())
}

fn cmd_rank(args: RankArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.verdicts)
        .with_context(|| format!("reading {}", args.verdicts.display()))?;
    let mut judged: Vec<(PairTask, PairwiseVerdict)> = Vec::new();
    let mut systems: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: VerdictRecord = serde_json::from_str(line)
            .with_context(|| format!("line {}: malformed verdict record", idx + 1))?;
        systems.insert(record.task.system_i.clone());
        systems.insert(record.task.system_j.clone());
        match record.verdict {
            Some(verdict) => judged.push((record.task, verdict)),
            None => log::warn!(
                "line {}: skipping unjudged pair ({})",
                idx + 1,
                record.error.unwrap_or_default()
            ),
        }
    }
    if judged.is_empty() {
        bail!("no parsed verdicts in {}", args.verdicts.display());
    }
    let systems: Vec<String> = systems.into_iter().collect();
    let wins = accumulate_wins(&judged, args.dimension, args.tie_policy, &systems)?;
    let fit = fit_bradley_terry(&wins, args.epsilon, args.tol, args.max_iter)?;

    println!("{:<4} {:<24} {:>10}", "Rank", "System", "Strength");
    for (rank, (name, strength)) in fit.ranking().into_iter().enumerate() {
        println!("{:<4} {:<24} {:>10.4}", rank + 1, name, strength);
    }
    let payload = serde_json::json!({
        "dimension": args.dimension,
        "tie_policy": args.tie_policy,
        "epsilon": args.epsilon,
        "wins": wins,
        "strengths": fit,
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&payload)?)?;
    println!("strengths written to {}", args.out.display());
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let map = field_map(&args.field_map);
    let records = load_dataset(&args.dataset, map.as_ref())?;
    let stats = corpus_stats(&records)?;
    println!(
        "{:<12} {:>9} {:>12} {:>12}",
        "Split", "Examples", "Input toks", "Target toks"
    );
    for split in ALL_SPLITS {
        if let Some(s) = stats.per_split.get(&split) {
            println!(
                "{:<12} {:>9} {:>12.1} {:>12.1}",
                split.to_string(),
                s.count,
                s.mean_input_tokens,
                s.mean_target_tokens
            );
        }
    }
    println!(
        "{:<12} {:>9} {:>12.1} {:>12.1}",
        "overall",
        stats.overall.count,
        stats.overall.mean_input_tokens,
        stats.overall.mean_target_tokens
    );
    std::fs::write(&args.out, serde_json::to_string_pretty(&stats)?)?;
    println!("stats written to {}", args.out.display());
    Ok(())
}
