//! `pgen`: command-line front end for the corpus toolkit.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data or validation
//! errors, 3 when a generation or translation backend fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use pgen_core::analysis::{classify_corpus, distribution_report, train_domain_classifier};
use pgen_core::corpus::{load_mono_report, write_mono, write_parallel};
use pgen_core::metrics::{evaluate, BucketSpec};
use pgen_core::pgen::{build_generation_prompt, build_tuning_samples, generate_corpus, ExternalBackend, NGramBackend};
use pgen_core::pipeline::{run_pipeline, sweep, translator_backend, BackendSpec, PipelineConfig, SweepAxis};
use pgen_core::selection::select_top;
use pgen_core::translator::{back_translate, synthesize, train_ibm1_traced, SynthesisPlan, DEFAULT_DROP_THRESHOLD};
use pgen_core::{
    load_mono, load_parallel, vocab_stats, Domain, Error, GenerationBackend, LmConfig, MonoCorpus, NGramModel, PromptConfig,
    VocabStats,
};

#[derive(Parser)]
#[command(name = "pgen", version, about = "In-domain text generation and back-translation for gloss-to-text translation")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sentence, token and vocabulary counts of a corpus.
    Stats(StatsArgs),
    /// Train the n-gram generator on tuning samples.
    TrainLm(TrainLmArgs),
    /// Write generation prompts, one per line.
    BuildPrompts(BuildPromptsArgs),
    /// Generate an in-domain text corpus.
    Generate(GenerateArgs),
    /// Moore-Lewis selection from a general-domain pool.
    Select(SelectArgs),
    /// Word-frequency curves, JS divergences and domain classification.
    Analyze(AnalyzeArgs),
    /// Train the text-to-gloss lexical translation table.
    TrainBt(TrainBtArgs),
    /// Translate text into pseudo glosses.
    BackTranslate(BackTranslateArgs),
    /// Mix synthetic and authentic pairs into training and fine-tuning sets.
    Synthesize(SynthesizeArgs),
    /// BLEU, ROUGE-L, METEOR and bucketed analyses.
    Evaluate(EvaluateArgs),
    /// Run the whole chain from a configuration file.
    Pipeline(PipelineArgs),
    /// Run the pipeline once per value of k or ratio.
    Sweep(SweepArgs),
}

/// A `.tsv` input is read as `gloss<TAB>text` pairs and contributes its text side.
#[derive(Args)]
struct TextInput {
    /// Text corpus, or a `.tsv` parallel corpus.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    lowercase: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    text: TextInput,
    /// Write word counts as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainLmArgs {
    #[command(flatten)]
    text: TextInput,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Number of tuning samples (default: corpus size).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildPromptsArgs {
    #[command(flatten)]
    text: TextInput,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    text: TextInput,
    /// Model written by `train-lm`; required by the builtin backend.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "builtin")]
    backend: BackendSpec,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Target size as a multiple of the input corpus size.
    #[arg(long, default_value_t = 5, conflicts_with = "target_size")]
    ratio: usize,
    #[arg(long)]
    target_size: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 128)]
    max_new_tokens: usize,
    #[arg(long)]
    attempt_budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// General-domain pool to select from.
    #[arg(long)]
    pool: PathBuf,
    /// In-domain text (or `.tsv`) for the in-domain model.
    #[arg(long)]
    in_domain: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    lowercase: bool,
    /// Also write `score<TAB>sentence` for the whole pool.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Reference corpus, usually the authentic text.
    #[arg(long)]
    reference: PathBuf,
    /// Corpora to compare (repeatable).
    #[arg(long = "corpus", required = true)]
    corpora: Vec<PathBuf>,
    /// General-domain corpus; enables the domain classifier.
    #[arg(long)]
    general: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    top_n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lowercase: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainBtArgs {
    /// Authentic `gloss<TAB>text` pairs.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BackTranslateArgs {
    #[command(flatten)]
    text: TextInput,
    /// Table written by `train-bt`; required by the builtin backend.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value = "builtin")]
    backend: BackendSpec,
    #[arg(long, default_value_t = DEFAULT_DROP_THRESHOLD)]
    drop_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    authentic: PathBuf,
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long, default_value_t = 5)]
    ratio: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving `train.tsv` and `finetune.tsv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Training text (or `.tsv`) for frequency buckets.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineOverrides {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    ratio: Option<usize>,
    #[arg(long)]
    target_size: Option<usize>,
    #[arg(long)]
    backend: Option<BackendSpec>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

impl PipelineOverrides {
    fn config(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(k) = self.k {
            cfg.prompt.k = k;
        }
        if let Some(ratio) = self.ratio {
            cfg.ratio = ratio;
        }
        if self.target_size.is_some() {
            cfg.target_size = self.target_size;
        }
        if let Some(b) = &self.backend {
            cfg.backend = b.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: PipelineOverrides,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: PipelineOverrides,
    #[arg(long)]
    axis: SweepAxis,
    /// Comma-separated values, e.g. `0,5,10,20`.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    /// Run the values concurrently.
    #[arg(long)]
    parallel: bool,
}

fn read_text(input: &Path, lowercase: bool) -> anyhow::Result<MonoCorpus> {
    if input.extension().is_some_and(|e| e == "tsv") {
        let pairs = load_parallel(input)?;
        let texts = pairs.text_side(Domain::Authentic);
        if !lowercase {
            return Ok(texts);
        }
        let lowered = texts
            .iter()
            .map(|s| s.tokens().iter().map(|t| t.to_lowercase()).collect::<Vec<_>>().join(" "))
            .filter_map(|l| pgen_core::Sentence::parse(&l))
            .collect();
        return Ok(MonoCorpus::new(texts.name.clone(), Domain::Authentic, lowered)?);
    }
    let loaded = load_mono_report(input, lowercase)?;
    if loaded.skipped > 0 {
        log::warn!("{}: skipped {} blank lines", input.display(), loaded.skipped);
    }
    Ok(loaded.corpus)
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn lines_of(path: &Path) -> anyhow::Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(|l| l.split_whitespace().map(str::to_owned).collect()).collect())
}

fn stats(a: StatsArgs) -> anyhow::Result<()> {
    let corpus = read_text(&a.text.input, a.text.lowercase)?;
    let vocab = vocab_stats(&corpus);
    println!(
        "sentences\t{}\ntokens\t{}\ntypes\t{}",
        corpus.len(),
        vocab.total_tokens,
        vocab.counts.len()
    );
    if let Some(out) = a.out {
        write_json(Some(&out), &vocab.to_json())?;
    }
    Ok(())
}

fn train_lm(a: TrainLmArgs) -> anyhow::Result<()> {
    let corpus = read_text(&a.text.input, a.text.lowercase)?;
    let samples = build_tuning_samples(&corpus, a.k.max(1), a.samples.unwrap_or(corpus.len()), a.seed)?;
    let model = NGramModel::train(&samples, &LmConfig::with_order(a.order))?;
    write_json(Some(&a.out), &model.to_json())?;
    log::info!("trained order-{} model on {} tuning samples", a.order, samples.len());
    Ok(())
}

fn build_prompts(a: BuildPromptsArgs) -> anyhow::Result<()> {
    let corpus = read_text(&a.text.input, a.text.lowercase)?;
    let prompts = (0..a.count)
        .map(|i| build_generation_prompt(&corpus, a.k.max(1), a.seed, i).map(|p| p.join(" ")))
        .collect::<Result<Vec<_>, _>>()?;
    fs::write(&a.out, prompts.join("\n") + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<NGramModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(NGramModel::from_json(&serde_json::from_str(&text)?)?)
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let corpus = read_text(&a.text.input, a.text.lowercase)?;
    let cfg = PromptConfig {
        k: a.k.max(1),
        target_size: a.target_size.unwrap_or(a.ratio * corpus.len()),
        max_new_tokens: a.max_new_tokens,
        temperature: a.temperature,
        seed: a.seed,
        attempt_budget: a.attempt_budget,
        ..PromptConfig::default()
    };
    let backend: Box<dyn GenerationBackend> = match &a.backend {
        BackendSpec::Builtin => {
            let path = a.model.as_deref().ok_or_else(|| anyhow!("the builtin backend needs --model"))?;
            Box::new(NGramBackend::new(load_model(path)?, &cfg))
        }
        BackendSpec::External(cmd) => Box::new(ExternalBackend::spawn(cmd)?),
    };
    match generate_corpus(backend.as_ref(), &corpus, &corpus, &cfg, a.workers) {
        Ok(out) => {
            write_mono(&a.out, &out.corpus)?;
            write_json(None, &out.stats)
        }
        Err(Error::BudgetExhausted { target, partial, stats }) => {
            if !partial.is_empty() {
                write_mono(&a.out, &MonoCorpus::new("partial", Domain::Pgen, partial.clone())?)?;
            }
            write_json(None, &stats)?;
            Err(Error::BudgetExhausted { target, partial, stats }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn select(a: SelectArgs) -> anyhow::Result<()> {
    let pool = load_mono(&a.pool, a.lowercase)?;
    let in_domain = read_text(&a.in_domain, a.lowercase)?;
    let cfg = LmConfig::default();
    let lm_in = NGramModel::train(in_domain.sentences(), &cfg)?;
    let lm_gen = NGramModel::train(pool.sentences(), &cfg)?;
    let result = select_top(&pool, &lm_in, &lm_gen, a.n)?;
    write_mono(&a.out, &result.selected)?;
    if let Some(path) = a.scores {
        result.write_scores(path)?;
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> anyhow::Result<()> {
    let reference = read_text(&a.reference, a.lowercase)?;
    let corpora = a
        .corpora
        .iter()
        .map(|p| read_text(p, a.lowercase))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = distribution_report(&corpora, &reference, a.top_n, a.seed)?;
    let mut value = serde_json::to_value(&report)?;
    if let Some(general) = &a.general {
        let clf = train_domain_classifier(&reference, &read_text(general, a.lowercase)?, 1.0)?;
        let in_domain: serde_json::Map<_, _> = corpora
            .iter()
            .map(|c| (c.name.clone(), classify_corpus(&clf, c).in_domain.into()))
            .collect();
        value["in_domain"] = in_domain.into();
    }
    write_json(a.out.as_deref(), &value)
}

fn train_bt(a: TrainBtArgs) -> anyhow::Result<()> {
    let trained = train_ibm1_traced(&load_parallel(&a.input)?, a.iterations)?;
    trained.table.save(&a.out)?;
    for (i, ll) in trained.log_likelihoods.iter().enumerate() {
        log::info!("iteration {i}: log-likelihood {ll:.4}");
    }
    Ok(())
}

fn back_translate_cmd(a: BackTranslateArgs) -> anyhow::Result<()> {
    let corpus = read_text(&a.text.input, a.text.lowercase)?;
    let backend = translator_backend(&a.backend, a.table.as_deref(), a.drop_threshold)?;
    write_parallel(&a.out, &back_translate(backend.as_ref(), &corpus)?)?;
    Ok(())
}

fn synthesize_cmd(a: SynthesizeArgs) -> anyhow::Result<()> {
    let plan = SynthesisPlan {
        ratio: a.ratio,
        shuffle_seed: a.seed,
    };
    let out = synthesize(&load_parallel(&a.authentic)?, &load_parallel(&a.synthetic)?, &plan)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_parallel(a.out.join("train.tsv"), &out.train)?;
    write_parallel(a.out.join("finetune.tsv"), &out.finetune)?;
    println!("train\t{}\nfinetune\t{}", out.train.len(), out.finetune.len());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> anyhow::Result<()> {
    let hyps = lines_of(&a.hyp)?;
    let refs = lines_of(&a.reference)?;
    let train: Option<VocabStats> = match &a.train {
        Some(p) => Some(vocab_stats(&read_text(p, false)?)),
        None => None,
    };
    let report = evaluate(&hyps, &refs, train.as_ref(), &BucketSpec::default())?;
    write_json(a.out.as_deref(), &report)
}

fn pipeline(a: PipelineArgs) -> anyhow::Result<()> {
    let cfg = a.common.config()?;
    let manifest = run_pipeline(&cfg, &a.common.out, a.common.workers)?;
    println!(
        "train\t{}\nfinetune\t{}\njs_to_authentic\t{:.6}\nself_bleu\t{:.4}",
        manifest.sizes.train, manifest.sizes.finetune, manifest.analysis.js_to_authentic, manifest.analysis.self_bleu
    );
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> anyhow::Result<()> {
    let cfg = a.common.config()?;
    let rows = sweep(&cfg, a.axis, &a.values, &a.common.out, a.common.workers, a.parallel)?;
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    print!("{}", fs::read_to_string(a.common.out.join("summary.tsv"))?);
    if failed > 0 {
        return Err(Error::Invalid(format!("{failed} of {} sweep runs failed", rows.len())).into());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Stats(a) => stats(a),
        Command::TrainLm(a) => train_lm(a),
        Command::BuildPrompts(a) => build_prompts(a),
        Command::Generate(a) => generate(a),
        Command::Select(a) => select(a),
        Command::Analyze(a) => analyze(a),
        Command::TrainBt(a) => train_bt(a),
        Command::BackTranslate(a) => back_translate_cmd(a),
        Command::Synthesize(a) => synthesize_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Sweep(a) => sweep_cmd(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_backend() => 3,
        _ => 2,
    }
}

/// The error chain, skipping causes whose text the outer message already includes.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
