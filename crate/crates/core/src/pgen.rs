//! Prompt-based in-domain text generation.
//!
//! Tuning samples concatenate `k` authentic sentences separated by `[SEP]` and
//! closed by `[EOS]`. A generation prompt concatenates `k - 1` sentences, each
//! followed by `[SEP]`; whatever the backend writes after it is harvested as
//! new in-domain text.

use std::collections::HashSet;

use num_bigint::BigUint;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_reserved, Domain, MonoCorpus, Sentence, EOS, SEP};
use crate::error::{Error, Result};
use crate::ngram::NGramModel;
use crate::process::LineProcess;
use crate::rng::{self, Purpose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    /// Sentences per tuning sample; prompts hold `k - 1` sentences.
    pub k: usize,
    /// Number of sentences to generate.
    pub target_size: usize,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub dedup_within: bool,
    pub dedup_against_authentic: bool,
    pub seed: u64,
    /// Maximum number of prompts to issue. Defaults to 20 x `target_size`.
    pub attempt_budget: Option<usize>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            k: 20,
            target_size: 1000,
            max_new_tokens: 128,
            temperature: 1.0,
            min_len: 3,
            max_len: 60,
            dedup_within: true,
            dedup_against_authentic: true,
            seed: 0,
            attempt_budget: None,
        }
    }
}

impl PromptConfig {
    pub fn budget(&self) -> usize {
        self.attempt_budget
            .unwrap_or_else(|| self.target_size.saturating_mul(20))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.target_size == 0 {
            return Err(Error::invalid("target size must be at least 1"));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::invalid("max_new_tokens must be at least 1"));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.min_len > self.max_len {
            return Err(Error::invalid(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        if self.budget() < self.target_size {
            return Err(Error::invalid(format!(
                "attempt budget {} is below the target size {}",
                self.budget(),
                self.target_size
            )));
        }
        Ok(())
    }
}

/// Concatenates the chosen sentences with `[SEP]` between them, or with
/// `last` after each one when given.
fn concat(corpus: &MonoCorpus, picks: &[usize], last: Option<&str>) -> Vec<String> {
    let mut out = Vec::new();
    for (n, &i) in picks.iter().enumerate() {
        if n > 0 && last.is_none() {
            out.push(SEP.to_owned());
        }
        out.extend(corpus.sentences()[i].tokens().iter().cloned());
        if let Some(t) = last {
            out.push(t.to_owned());
        }
    }
    out
}

/// Builds `count` prompt-tuning samples, `[y1 SEP y2 SEP ... yk EOS]`.
pub fn build_tuning_samples(corpus: &MonoCorpus, k: usize, count: usize, seed: u64) -> Result<Vec<Sentence>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if corpus.len() < k {
        return Err(Error::invalid(format!(
            "corpus of {} sentences is smaller than k = {k}",
            corpus.len()
        )));
    }
    if count == 0 {
        return Err(Error::invalid("tuning sample count must be at least 1"));
    }
    let samples = (0..count)
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::TuningSample, i as u64);
            let picks = index::sample(&mut rng, corpus.len(), k).into_vec();
            let mut tokens = concat(corpus, &picks, None);
            tokens.push(EOS.to_owned());
            Sentence::new(tokens).expect("non-empty concatenation")
        })
        .collect();
    Ok(samples)
}

/// Prompt number `index`: `k - 1` sentences, each followed by `[SEP]`.
/// `k = 1` gives the empty prompt.
pub fn build_generation_prompt(corpus: &MonoCorpus, k: usize, seed: u64, index: u64) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let n = k - 1;
    if corpus.len() < n {
        return Err(Error::invalid(format!(
            "corpus of {} sentences is smaller than k - 1 = {n}",
            corpus.len()
        )));
    }
    let mut rng = rng::stream(seed, Purpose::Prompt, index);
    let picks = index::sample(&mut rng, corpus.len(), n).into_vec();
    Ok(concat(corpus, &picks, Some(SEP)))
}

/// Number of ordered selections of `k - 1` out of `n` sentences,
/// `n * (n - 1) * ... * (n - k + 2)`.
pub fn permutation_count(n: u64, k: u64) -> Result<BigUint> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let picks = k - 1;
    if picks > n {
        return Err(Error::invalid(format!("cannot choose {picks} of {n} sentences")));
    }
    Ok((0..picks).fold(BigUint::from(1u32), |acc, i| acc * (n - i)))
}

/// Produces continuations for prompts.
///
/// Implementations must be deterministic for a given `(prompt, index)` and
/// must never emit `[BOS]`.
pub trait GenerationBackend: Sync {
    fn generate(&self, prompt: &[String], index: u64) -> Result<Vec<String>>;

    /// Whether prompts may be dispatched from several threads at once.
    fn parallel_safe(&self) -> bool {
        true
    }
}

impl<F> GenerationBackend for F
where
    F: Fn(&[String], u64) -> Result<Vec<String>> + Sync,
{
    fn generate(&self, prompt: &[String], index: u64) -> Result<Vec<String>> {
        self(prompt, index)
    }
}

/// The built-in backend: samples from an n-gram model trained on tuning samples.
pub struct NGramBackend {
    pub model: NGramModel,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl NGramBackend {
    pub fn new(model: NGramModel, cfg: &PromptConfig) -> Self {
        NGramBackend {
            model,
            max_new_tokens: cfg.max_new_tokens,
            temperature: cfg.temperature,
            seed: cfg.seed,
        }
    }
}

impl GenerationBackend for NGramBackend {
    fn generate(&self, prompt: &[String], index: u64) -> Result<Vec<String>> {
        let mut rng = rng::stream(self.seed, Purpose::Generation, index);
        self.model
            .sample_with_rng(prompt, self.max_new_tokens, self.temperature, &mut rng)
    }
}

/// A generator running as a child process (one prompt line in, one continuation line out).
pub struct ExternalBackend {
    process: LineProcess,
}

impl ExternalBackend {
    pub fn spawn(command: &str) -> Result<Self> {
        Ok(ExternalBackend {
            process: LineProcess::spawn(command)?,
        })
    }
}

impl GenerationBackend for ExternalBackend {
    fn generate(&self, prompt: &[String], _index: u64) -> Result<Vec<String>> {
        let reply = self.process.request(&prompt.join(" "))?;
        Ok(reply.split_whitespace().map(str::to_owned).collect())
    }

    fn parallel_safe(&self) -> bool {
        false
    }
}

/// Counters describing one generation run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub prompts: usize,
    pub candidates: usize,
    pub accepted: usize,
    pub truncated: usize,
    pub rejected_length: usize,
    pub rejected_reserved: usize,
    pub duplicate_within: usize,
    pub duplicate_authentic: usize,
}

#[derive(Clone, Debug)]
pub struct GenerationOutput {
    pub corpus: MonoCorpus,
    pub stats: GenerationStats,
}

/// Splits a continuation into complete candidate sentences.
///
/// Everything after the first `[EOS]` is ignored. Without an `[EOS]`, the
/// segment after the last `[SEP]` was cut off by the token cap and is
/// returned as the second element instead of as a candidate.
pub fn split_continuation(tokens: &[String]) -> (Vec<&[String]>, Option<&[String]>) {
    let (body, closed) = match tokens.iter().position(|t| t == EOS) {
        Some(end) => (&tokens[..end], true),
        None => (tokens, false),
    };
    let mut segments: Vec<&[String]> = body.split(|t| t == SEP).collect();
    let tail = if closed {
        None
    } else {
        segments.pop().filter(|s| !s.is_empty())
    };
    segments.retain(|s| !s.is_empty());
    (segments, tail)
}

const BATCH: usize = 64;

/// Drives `backend` until `cfg.target_size` sentences pass the length,
/// reserved-token and deduplication filters.
///
/// Prompts are built from `source`; `authentic` is the corpus new sentences
/// must not duplicate. With `workers > 1`, prompts are dispatched in parallel
/// but always merged in prompt order, so the output does not depend on the
/// worker count.
pub fn generate_corpus<B: GenerationBackend + ?Sized>(
    backend: &B,
    source: &MonoCorpus,
    authentic: &MonoCorpus,
    cfg: &PromptConfig,
    workers: usize,
) -> Result<GenerationOutput> {
    cfg.validate()?;
    if source.len() < cfg.k - 1 {
        return Err(Error::invalid(format!(
            "source corpus of {} sentences is smaller than k - 1 = {}",
            source.len(),
            cfg.k - 1
        )));
    }
    let pool = if workers > 1 && backend.parallel_safe() {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let banned: HashSet<&[String]> = if cfg.dedup_against_authentic {
        authentic.iter().map(|s| s.tokens()).collect()
    } else {
        HashSet::new()
    };

    let budget = cfg.budget();
    let mut stats = GenerationStats::default();
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut accepted: Vec<Sentence> = Vec::with_capacity(cfg.target_size);

    let run = |i: u64| -> Result<Vec<String>> {
        let prompt = build_generation_prompt(source, cfg.k, cfg.seed, i)?;
        backend.generate(&prompt, i)
    };

    let mut next = 0usize;
    'outer: while next < budget && accepted.len() < cfg.target_size {
        let end = (next + BATCH).min(budget);
        let batch: Vec<Result<Vec<String>>> = match &pool {
            Some(pool) => pool.install(|| (next..end).into_par_iter().map(|i| run(i as u64)).collect()),
            None => (next..end).map(|i| run(i as u64)).collect(),
        };
        for continuation in batch {
            let continuation = continuation?;
            stats.prompts += 1;
            let (candidates, tail) = split_continuation(&continuation);
            if tail.is_some() {
                stats.truncated += 1;
            }
            for cand in candidates {
                stats.candidates += 1;
                if cand.len() < cfg.min_len || cand.len() > cfg.max_len {
                    stats.rejected_length += 1;
                    continue;
                }
                if cand.iter().any(|t| is_reserved(t)) {
                    stats.rejected_reserved += 1;
                    continue;
                }
                if banned.contains(cand) {
                    stats.duplicate_authentic += 1;
                    continue;
                }
                if cfg.dedup_within && !seen.insert(cand.to_vec()) {
                    stats.duplicate_within += 1;
                    continue;
                }
                accepted.push(Sentence::new(cand.to_vec()).expect("non-empty candidate"));
                stats.accepted += 1;
                if accepted.len() == cfg.target_size {
                    break 'outer;
                }
            }
        }
        next = end;
    }

    if accepted.len() < cfg.target_size {
        return Err(Error::BudgetExhausted {
            target: cfg.target_size,
            partial: accepted,
            stats,
        });
    }
    let corpus = MonoCorpus::new(format!("{}.pgen", authentic.name), Domain::Pgen, accepted)?;
    Ok(GenerationOutput { corpus, stats })
}
