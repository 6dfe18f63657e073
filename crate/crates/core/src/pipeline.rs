//! End-to-end orchestration: tuning-sample LM training, generation,
//! back-translation and data synthesis, with a manifest describing every
//! input, seed and output.
//!
//! Every artifact a run writes is a pure function of the configuration, so
//! two runs of the same configuration produce byte-identical directories
//! regardless of the worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{classify_corpus, corpus_js, train_domain_classifier};
use crate::corpus::{self, load_mono, load_parallel, write_lines, write_mono, write_parallel, Domain, MonoCorpus};
use crate::error::{Error, Result};
use crate::metrics::self_bleu;
use crate::ngram::{LmConfig, NGramModel};
use crate::selection::select_top;
use crate::pgen::{build_tuning_samples, generate_corpus, ExternalBackend, GenerationBackend, GenerationStats, NGramBackend, PromptConfig};
use crate::translator::{back_translate, synthesize, train_ibm1, ExternalTranslator, SynthesisPlan, TableTranslator, TranslatorBackend, DEFAULT_DROP_THRESHOLD};

/// Which implementation backs a generation or translation step.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum BackendSpec {
    #[default]
    Builtin,
    External(String),
}

impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "builtin" => Ok(BackendSpec::Builtin),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(BackendSpec::External(cmd.to_owned())),
                _ => Err(Error::invalid(format!(
                    "backend must be `builtin` or `external:COMMAND`, got {s:?}"
                ))),
            },
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Builtin => f.write_str("builtin"),
            BackendSpec::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub self_bleu_cap: usize,
    pub top_n: usize,
    pub classifier_alpha: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            self_bleu_cap: 500,
            top_n: 10_000,
            classifier_alpha: 1.0,
        }
    }
}

/// Everything a pipeline run needs. Relative paths are resolved against the
/// directory of the configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Authentic `gloss<TAB>text` training pairs.
    pub authentic: PathBuf,
    /// Optional general-domain pool, used by analyses only.
    #[serde(default)]
    pub general: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lowercase: bool,
    #[serde(default)]
    pub prompt: PromptConfig,
    /// Generation target as a multiple of the authentic size; also the
    /// synthetic-to-authentic mixing ratio.
    #[serde(default = "default_ratio")]
    pub ratio: usize,
    /// Explicit generation target; defaults to `ratio * |authentic|`.
    #[serde(default)]
    pub target_size: Option<usize>,
    #[serde(default)]
    pub lm: LmConfig,
    /// Number of tuning samples; defaults to `|authentic|`.
    #[serde(default)]
    pub tuning_samples: Option<usize>,
    /// Size of the Moore-Lewis selection from the general pool; defaults to
    /// `|authentic|`.
    #[serde(default)]
    pub selection_n: Option<usize>,
    #[serde(default = "default_bt_iterations")]
    pub bt_iterations: usize,
    #[serde(default = "default_drop_threshold")]
    pub drop_threshold: f64,
    #[serde(default)]
    pub backend: BackendSpec,
    #[serde(default)]
    pub translator: BackendSpec,
    #[serde(default)]
    pub eval: EvalOptions,
}

fn default_ratio() -> usize {
    5
}

fn default_bt_iterations() -> usize {
    10
}

fn default_drop_threshold() -> f64 {
    DEFAULT_DROP_THRESHOLD
}

impl PipelineConfig {
    pub fn new(authentic: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            authentic: authentic.into(),
            general: None,
            seed: 0,
            lowercase: false,
            prompt: PromptConfig::default(),
            ratio: default_ratio(),
            target_size: None,
            lm: LmConfig::default(),
            tuning_samples: None,
            selection_n: None,
            bt_iterations: default_bt_iterations(),
            drop_threshold: default_drop_threshold(),
            backend: BackendSpec::Builtin,
            translator: BackendSpec::Builtin,
            eval: EvalOptions::default(),
        }
    }

    /// Reads a configuration file, or the `config` section of a manifest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        if let Some(inner) = value.get_mut("config").map(serde_json::Value::take) {
            value = inner;
        }
        let mut cfg: PipelineConfig = serde_json::from_value(value)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        cfg.authentic = base.join(&cfg.authentic);
        cfg.general = cfg.general.map(|g| base.join(g));
        Ok(cfg)
    }

    /// `k = 0` means unconditional generation, the same as `k = 1`.
    pub fn effective_k(&self) -> usize {
        self.prompt.k.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratio == 0 {
            return Err(Error::invalid("ratio must be at least 1"));
        }
        if self.bt_iterations == 0 {
            return Err(Error::invalid("bt_iterations must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.drop_threshold) {
            return Err(Error::invalid("drop_threshold must lie in [0, 1]"));
        }
        self.lm.validate()?;
        for p in std::iter::once(&self.authentic).chain(self.general.as_ref()) {
            if !p.is_file() {
                return Err(Error::invalid(format!("input {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub lines: usize,
}

fn file_record(path: &Path, shown: String) -> Result<FileRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let lines = bytes.iter().filter(|b| **b == b'\n').count();
    Ok(FileRecord {
        path: shown,
        sha256: hex::encode(Sha256::digest(&bytes)),
        lines,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub js_to_authentic: f64,
    pub self_bleu: f64,
    /// Present when a general pool is configured.
    pub domain: Option<DomainAnalysis>,
}

/// Generated text compared with a Moore-Lewis selection and the raw pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainAnalysis {
    pub selected: usize,
    pub js_selected: f64,
    pub js_general: f64,
    pub in_domain_pgen: f64,
    pub in_domain_selected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sizes {
    pub authentic: usize,
    pub tuning_samples: usize,
    pub generated: usize,
    pub synthetic: usize,
    pub train: usize,
    pub finetune: usize,
}

/// Record of one pipeline run, written as `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: PipelineConfig,
    pub seed: u64,
    pub inputs: BTreeMap<String, FileRecord>,
    pub outputs: BTreeMap<String, FileRecord>,
    pub sizes: Sizes,
    pub generation: GenerationStats,
    pub analysis: RunAnalysis,
}

pub const MANIFEST: &str = "manifest.json";

fn generation_backend(cfg: &PipelineConfig, prompt: &PromptConfig, model: NGramModel) -> Result<Box<dyn GenerationBackend>> {
    Ok(match &cfg.backend {
        BackendSpec::Builtin => Box::new(NGramBackend::new(model, prompt)),
        BackendSpec::External(cmd) => Box::new(ExternalBackend::spawn(cmd)?),
    })
}

pub fn translator_backend(spec: &BackendSpec, table_path: Option<&Path>, drop_threshold: f64) -> Result<Box<dyn TranslatorBackend>> {
    Ok(match spec {
        BackendSpec::Builtin => {
            let path = table_path.ok_or_else(|| Error::invalid("builtin translator needs a table"))?;
            Box::new(TableTranslator {
                table: crate::translator::TranslationTable::load(path)?,
                drop_threshold,
            })
        }
        BackendSpec::External(cmd) => Box::new(ExternalTranslator::spawn(cmd)?),
    })
}

/// Runs LM training, generation, BT training, back-translation and synthesis,
/// writing every artifact plus `manifest.json` into `out`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path, workers: usize) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let seed = cfg.seed;

    let authentic = load_parallel(&cfg.authentic)?;
    let authentic = if cfg.lowercase {
        lowercase_parallel(&authentic)?
    } else {
        authentic
    };
    let texts = authentic.text_side(Domain::Authentic);
    let n = authentic.len();
    let k = cfg.effective_k();

    let tuning_count = cfg.tuning_samples.unwrap_or(n);
    let samples = build_tuning_samples(&texts, k, tuning_count, seed)?;
    let model = NGramModel::train(&samples, &cfg.lm)?;
    let model_path = out.join("lm.json");
    fs::write(&model_path, serde_json::to_string(&model.to_json())? + "\n").map_err(|e| Error::io(&model_path, e))?;

    let prompt = PromptConfig {
        k,
        seed,
        target_size: cfg.target_size.unwrap_or(cfg.ratio * n),
        ..cfg.prompt.clone()
    };
    log::info!("generating {} sentences with k = {k}", prompt.target_size);
    let backend = generation_backend(cfg, &prompt, model)?;
    let generated = generate_corpus(backend.as_ref(), &texts, &texts, &prompt, workers)?;
    drop(backend);
    let gen_path = out.join("generated.txt");
    write_mono(&gen_path, &generated.corpus)?;

    let table_path = out.join("bt_table.tsv");
    if cfg.translator == BackendSpec::Builtin {
        train_ibm1(&authentic, cfg.bt_iterations)?.save(&table_path)?;
    }
    let translator = translator_backend(&cfg.translator, Some(&table_path), cfg.drop_threshold)?;
    let synthetic = back_translate(translator.as_ref(), &generated.corpus)?;
    drop(translator);
    let synthetic_path = out.join("synthetic.tsv");
    write_parallel(&synthetic_path, &synthetic)?;

    let plan = SynthesisPlan {
        ratio: cfg.ratio,
        shuffle_seed: seed,
    };
    let mixed = synthesize(&authentic, &synthetic, &plan)?;
    let train_path = out.join("train.tsv");
    let finetune_path = out.join("finetune.tsv");
    write_parallel(&train_path, &mixed.train)?;
    write_parallel(&finetune_path, &mixed.finetune)?;

    let domain = match &cfg.general {
        Some(path) => Some(domain_analysis(cfg, path, &texts, &generated.corpus, out)?),
        None => None,
    };
    let analysis = RunAnalysis {
        js_to_authentic: corpus_js(&generated.corpus, &texts, seed)?,
        self_bleu: self_bleu(generated.corpus.sentences(), 4, cfg.eval.self_bleu_cap)?,
        domain,
    };

    let mut inputs = BTreeMap::new();
    inputs.insert(
        "authentic".to_owned(),
        file_record(&cfg.authentic, cfg.authentic.display().to_string())?,
    );
    if let Some(g) = &cfg.general {
        inputs.insert("general".to_owned(), file_record(g, g.display().to_string())?);
    }
    let mut outputs = BTreeMap::new();
    for (name, path) in [
        ("lm", &model_path),
        ("generated", &gen_path),
        ("bt_table", &table_path),
        ("synthetic", &synthetic_path),
        ("train", &train_path),
        ("finetune", &finetune_path),
        ("selected", &out.join("selected.txt")),
    ] {
        if path.exists() {
            let shown = path.file_name().unwrap().to_string_lossy().into_owned();
            outputs.insert(name.to_owned(), file_record(path, shown)?);
        }
    }
    let manifest = Manifest {
        config: cfg.clone(),
        seed,
        inputs,
        outputs,
        sizes: Sizes {
            authentic: n,
            tuning_samples: samples.len(),
            generated: generated.corpus.len(),
            synthetic: synthetic.len(),
            train: mixed.train.len(),
            finetune: mixed.finetune.len(),
        },
        generation: generated.stats,
        analysis,
    };
    let manifest_path = out.join(MANIFEST);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

fn domain_analysis(cfg: &PipelineConfig, general: &Path, texts: &MonoCorpus, generated: &MonoCorpus, out: &Path) -> Result<DomainAnalysis> {
    let pool = load_mono(general, cfg.lowercase)?;
    let n = cfg.selection_n.unwrap_or(texts.len()).min(pool.len());
    let lm_in = NGramModel::train(texts.sentences(), &cfg.lm)?;
    let lm_gen = NGramModel::train(pool.sentences(), &cfg.lm)?;
    let selection = select_top(&pool, &lm_in, &lm_gen, n)?;
    write_mono(out.join("selected.txt"), &selection.selected)?;

    let clf = train_domain_classifier(texts, &pool, cfg.eval.classifier_alpha)?;
    Ok(DomainAnalysis {
        selected: selection.selected.len(),
        js_selected: corpus_js(&selection.selected, texts, cfg.seed)?,
        js_general: corpus_js(&pool, texts, cfg.seed)?,
        in_domain_pgen: classify_corpus(&clf, generated).in_domain,
        in_domain_selected: classify_corpus(&clf, &selection.selected).in_domain,
    })
}

fn lowercase_parallel(c: &corpus::ParallelCorpus) -> Result<corpus::ParallelCorpus> {
    let lower = |s: &corpus::Sentence| {
        corpus::Sentence::new(s.tokens().iter().map(|t| t.to_lowercase()).collect())
    };
    let pairs = c
        .pairs()
        .iter()
        .map(|p| {
            Ok(corpus::SentencePair {
                gloss: p.gloss.clone(),
                text: lower(&p.text)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    corpus::ParallelCorpus::new(c.name.clone(), pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    K,
    Ratio,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepAxis::K),
            "ratio" => Ok(SweepAxis::Ratio),
            _ => Err(Error::invalid(format!("unknown sweep axis {s:?}"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::K => "k",
            SweepAxis::Ratio => "ratio",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: usize,
    pub dir: PathBuf,
    pub outcome: std::result::Result<Manifest, String>,
}

/// Runs one pipeline per value in `<out>/<axis>-<value>/` and writes
/// `<out>/summary.tsv`. A failing value is recorded and the sweep goes on.
pub fn sweep(cfg: &PipelineConfig, axis: SweepAxis, values: &[usize], out: &Path, workers: usize, parallel: bool) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    if axis == SweepAxis::Ratio && values.contains(&0) {
        return Err(Error::invalid("ratio values must be at least 1"));
    }
    let mut values = values.to_vec();
    values.sort_unstable();
    values.dedup();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let run_one = |value: usize| {
        let mut c = cfg.clone();
        match axis {
            SweepAxis::K => c.prompt.k = value,
            SweepAxis::Ratio => c.ratio = value,
        }
        let dir = out.join(format!("{axis}-{value}"));
        let outcome = run_pipeline(&c, &dir, workers).map_err(|e| e.to_string());
        if let Err(e) = &outcome {
            log::warn!("{axis} = {value} failed: {e}");
        }
        SweepRow { value, dir, outcome }
    };
    let rows: Vec<SweepRow> = if parallel {
        use rayon::prelude::*;
        values.par_iter().map(|v| run_one(*v)).collect()
    } else {
        values.iter().map(|v| run_one(*v)).collect()
    };

    let header = format!("{axis}\tstatus\tjs_to_authentic\tself_bleu\tgenerated\ttrain\tfinetune");
    let lines = std::iter::once(header).chain(rows.iter().map(|r| match &r.outcome {
        Ok(m) => format!(
            "{}\tok\t{:.6}\t{:.4}\t{}\t{}\t{}",
            r.value, m.analysis.js_to_authentic, m.analysis.self_bleu, m.sizes.generated, m.sizes.train, m.sizes.finetune
        ),
        Err(e) => format!("{}\terror: {}\t\t\t\t\t", r.value, e.replace(['\t', '\n'], " ")),
    }));
    write_lines(&out.join("summary.tsv"), lines)?;
    Ok(rows)
}
