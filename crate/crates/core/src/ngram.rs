//! Count-based n-gram language model with fixed-weight linear interpolation.
//!
//! The conditional probability of a token is
//! `sum_i lambdas[i] * P_i(token | last i context tokens)`, where level 0 is
//! an add-alpha smoothed unigram and higher levels are maximum-likelihood
//! estimates. A level whose context was never observed reuses the estimate of
//! the level below it, so every level is itself a distribution over the
//! vocabulary and the mixture stays normalized.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, BOS, EOS, RESERVED, UNK};
use crate::error::{Error, Result};

const CONTEXT_JOIN: char = '\u{1}';

/// Training hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub order: usize,
    /// Interpolation weights, unigram first.
    pub lambdas: Vec<f64>,
    /// Tokens seen at most this many times are mapped to `[UNK]`.
    pub unk_threshold: u64,
    /// Additive smoothing constant of the unigram level. 1.0 is Laplace.
    pub unigram_alpha: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 3,
            lambdas: vec![0.1, 0.3, 0.6],
            unk_threshold: 1,
            unigram_alpha: 1.0,
        }
    }
}

impl LmConfig {
    /// Default weights for an arbitrary order: 0.1 on the unigram, the rest
    /// split so that each level gets twice the weight of the one below.
    pub fn with_order(order: usize) -> Self {
        let lambdas = match order {
            0 => Vec::new(),
            1 => vec![1.0],
            3 => vec![0.1, 0.3, 0.6],
            n => {
                let raw: Vec<f64> = (0..n).map(|i| 2f64.powi(i as i32)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / total).collect()
            }
        };
        LmConfig {
            order,
            lambdas,
            ..LmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::invalid("n-gram order must be at least 1"));
        }
        if self.lambdas.len() != self.order {
            return Err(Error::invalid(format!(
                "expected {} interpolation weights, got {}",
                self.order,
                self.lambdas.len()
            )));
        }
        if self.lambdas.iter().any(|l| l.is_nan() || *l < 0.0) {
            return Err(Error::invalid("interpolation weights must be non-negative"));
        }
        let sum: f64 = self.lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "interpolation weights sum to {sum}, not 1"
            )));
        }
        if self.unigram_alpha.is_nan() || self.unigram_alpha < 0.0 {
            return Err(Error::invalid("unigram smoothing must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ContextCounts {
    total: u64,
    /// Sorted by token id.
    next: Vec<(u32, u64)>,
}

/// A trained n-gram model. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramModel {
    config: LmConfig,
    /// Sorted lexicographically; token id = position.
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    unigram: Vec<u64>,
    unigram_total: u64,
    /// `contexts[c - 1]` holds contexts of length `c`, for `c` in `1..order`.
    contexts: Vec<HashMap<Vec<u32>, ContextCounts>>,
    unk: u32,
    bos: u32,
}

/// Anything that can assign a natural-log probability to each token of a sentence.
pub trait TokenScorer {
    fn token_log_probs(&self, tokens: &[String]) -> Vec<f64>;
}

impl NGramModel {
    /// Trains a model on the given samples.
    pub fn train<'a, I>(samples: I, config: &LmConfig) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        config.validate()?;
        let samples: Vec<&Sentence> = samples.into_iter().collect();
        if samples.is_empty() {
            return Err(Error::invalid("cannot train a language model on zero samples"));
        }

        let mut raw: HashMap<&str, u64> = HashMap::new();
        for s in &samples {
            for t in s.tokens() {
                *raw.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut vocab: Vec<String> = raw
            .iter()
            .filter(|(t, c)| **c > config.unk_threshold && !RESERVED.contains(*t))
            .map(|(t, _)| (*t).to_owned())
            .chain(RESERVED.iter().map(|t| (*t).to_owned()))
            .collect();
        vocab.sort_unstable();
        let index: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let unk = index[UNK];
        let bos = index[BOS];

        let mut unigram = vec![0u64; vocab.len()];
        let mut raw_contexts: Vec<HashMap<Vec<u32>, BTreeMap<u32, u64>>> =
            vec![HashMap::new(); config.order - 1];
        let pad = config.order - 1;
        for s in &samples {
            let mut ids = vec![bos; pad];
            ids.extend(s.tokens().iter().map(|t| index.get(t).copied().unwrap_or(unk)));
            for j in pad..ids.len() {
                let w = ids[j];
                unigram[w as usize] += 1;
                for c in 1..config.order {
                    let ctx = ids[j - c..j].to_vec();
                    *raw_contexts[c - 1].entry(ctx).or_default().entry(w).or_default() += 1;
                }
            }
        }
        let unigram_total = unigram.iter().sum();
        let contexts = raw_contexts
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|(ctx, next)| {
                        let total = next.values().sum();
                        (
                            ctx,
                            ContextCounts {
                                total,
                                next: next.into_iter().collect(),
                            },
                        )
                    })
                    .collect()
            })
            .collect();

        Ok(NGramModel {
            config: config.clone(),
            vocab,
            index,
            unigram,
            unigram_total,
            contexts,
            unk,
            bos,
        })
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    /// Vocabulary in id order, reserved tokens included.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(self.unk)
    }

    fn unigram_prob(&self, w: u32) -> f64 {
        let alpha = self.config.unigram_alpha;
        let denom = self.unigram_total as f64 + alpha * self.vocab.len() as f64;
        if denom == 0.0 {
            return 1.0 / self.vocab.len() as f64;
        }
        (self.unigram[w as usize] as f64 + alpha) / denom
    }

    /// `history` must already be left-padded with at least `order - 1` tokens.
    fn prob_id(&self, history: &[u32], w: u32) -> f64 {
        let mut level = self.unigram_prob(w);
        let mut p = self.config.lambdas[0] * level;
        for c in 1..self.config.order {
            let ctx = &history[history.len() - c..];
            if let Some(counts) = self.contexts[c - 1].get(ctx) {
                level = match counts.next.binary_search_by_key(&w, |(id, _)| *id) {
                    Ok(i) => counts.next[i].1 as f64 / counts.total as f64,
                    Err(_) => 0.0,
                };
            }
            p += self.config.lambdas[c] * level;
        }
        p
    }

    fn distribution_ids(&self, history: &[u32]) -> Vec<f64> {
        let mut level: Vec<f64> = (0..self.vocab.len() as u32)
            .map(|w| self.unigram_prob(w))
            .collect();
        let mut out: Vec<f64> = level.iter().map(|p| p * self.config.lambdas[0]).collect();
        for c in 1..self.config.order {
            let ctx = &history[history.len() - c..];
            if let Some(counts) = self.contexts[c - 1].get(ctx) {
                level.iter_mut().for_each(|p| *p = 0.0);
                for (w, n) in &counts.next {
                    level[*w as usize] = *n as f64 / counts.total as f64;
                }
            }
            let l = self.config.lambdas[c];
            for (o, p) in out.iter_mut().zip(&level) {
                *o += l * p;
            }
        }
        out
    }

    fn padded_ids(&self, tokens: &[String]) -> Vec<u32> {
        let mut ids = vec![self.bos; self.config.order - 1];
        ids.extend(tokens.iter().map(|t| self.id(t)));
        ids
    }

    /// P(token | context). Tokens outside the vocabulary are scored as `[UNK]`.
    pub fn prob(&self, context: &[String], token: &str) -> f64 {
        let ids = self.padded_ids(context);
        self.prob_id(&ids, self.id(token))
    }

    /// The full conditional distribution over the vocabulary, in vocabulary order.
    pub fn conditional_distribution(&self, context: &[String]) -> Vec<(&str, f64)> {
        let ids = self.padded_ids(context);
        self.vocab
            .iter()
            .map(String::as_str)
            .zip(self.distribution_ids(&ids))
            .collect()
    }

    pub fn cross_entropy(&self, sentence: &Sentence) -> f64 {
        cross_entropy(self, sentence.tokens())
    }

    pub fn perplexity(&self, sentence: &Sentence) -> f64 {
        self.cross_entropy(sentence).exp()
    }

    /// Samples a continuation of `prompt`. Stops after `[EOS]` (which is
    /// included in the output) or after `max_new` tokens. `temperature == 0`
    /// selects the argmax, ties going to the lexicographically smallest token.
    /// `[BOS]` is never produced.
    pub fn sample_continuation(
        &self,
        prompt: &[String],
        max_new: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with_rng(prompt, max_new, temperature, &mut rng)
    }

    pub fn sample_with_rng<R: Rng>(
        &self,
        prompt: &[String],
        max_new: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<Vec<String>> {
        if !temperature.is_finite() || temperature < 0.0 {
            return Err(Error::invalid(format!("invalid temperature {temperature}")));
        }
        if max_new == 0 {
            return Err(Error::invalid("max_new must be at least 1"));
        }
        let eos = self.index[EOS];
        let mut history = self.padded_ids(prompt);
        let mut out = Vec::new();
        for _ in 0..max_new {
            let dist = self.distribution_ids(&history);
            let next = if temperature == 0.0 {
                argmax_excluding(&dist, self.bos)
            } else {
                draw(&dist, temperature, self.bos, rng)
            };
            out.push(self.vocab[next as usize].clone());
            history.push(next);
            if next == eos {
                break;
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let counts: Vec<BTreeMap<String, BTreeMap<&str, u64>>> = std::iter::once({
            let mut m = BTreeMap::new();
            m.insert(
                String::new(),
                self.unigram
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c > 0)
                    .map(|(w, c)| (self.vocab[w].as_str(), *c))
                    .collect(),
            );
            m
        })
        .chain(self.contexts.iter().map(|level| {
            level
                .iter()
                .map(|(ctx, counts)| {
                    let key = ctx
                        .iter()
                        .map(|w| self.vocab[*w as usize].as_str())
                        .collect::<Vec<_>>()
                        .join(&CONTEXT_JOIN.to_string());
                    let next = counts
                        .next
                        .iter()
                        .map(|(w, c)| (self.vocab[*w as usize].as_str(), *c))
                        .collect();
                    (key, next)
                })
                .collect()
        }))
        .collect();
        serde_json::json!({
            "order": self.config.order,
            "lambdas": self.config.lambdas,
            "unk_threshold": self.config.unk_threshold,
            "unigram_alpha": self.config.unigram_alpha,
            "vocab": self.vocab,
            "counts": counts,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Stored {
            order: usize,
            lambdas: Vec<f64>,
            unk_threshold: u64,
            unigram_alpha: f64,
            vocab: Vec<String>,
            counts: Vec<BTreeMap<String, BTreeMap<String, u64>>>,
        }
        let stored: Stored = serde_json::from_value(value.clone())?;
        let config = LmConfig {
            order: stored.order,
            lambdas: stored.lambdas,
            unk_threshold: stored.unk_threshold,
            unigram_alpha: stored.unigram_alpha,
        };
        config.validate()?;
        let mut vocab = stored.vocab;
        vocab.sort_unstable();
        vocab.dedup();
        for r in RESERVED {
            if vocab.binary_search_by(|v| v.as_str().cmp(r)).is_err() {
                return Err(Error::invalid(format!("model vocabulary lacks {r}")));
            }
        }
        if stored.counts.len() != config.order {
            return Err(Error::invalid("count tables do not match model order"));
        }
        let index: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let lookup = |t: &str| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| Error::invalid(format!("token {t:?} missing from vocabulary")))
        };

        let mut unigram = vec![0u64; vocab.len()];
        for (t, c) in stored.counts[0].get("").into_iter().flatten() {
            unigram[lookup(t)? as usize] = *c;
        }
        let mut contexts = Vec::with_capacity(config.order - 1);
        for (c, level) in stored.counts.iter().enumerate().skip(1) {
            let mut map = HashMap::new();
            for (key, next) in level {
                let ctx = key
                    .split(CONTEXT_JOIN)
                    .map(lookup)
                    .collect::<Result<Vec<u32>>>()?;
                if ctx.len() != c {
                    return Err(Error::invalid(format!("context {key:?} has wrong length")));
                }
                let mut next = next
                    .iter()
                    .map(|(t, n)| Ok((lookup(t)?, *n)))
                    .collect::<Result<Vec<_>>>()?;
                next.sort_unstable();
                let total = next.iter().map(|(_, n)| n).sum();
                map.insert(ctx, ContextCounts { total, next });
            }
            contexts.push(map);
        }
        Ok(NGramModel {
            unk: index[UNK],
            bos: index[BOS],
            unigram_total: unigram.iter().sum(),
            config,
            vocab,
            index,
            unigram,
            contexts,
        })
    }
}

impl TokenScorer for NGramModel {
    fn token_log_probs(&self, tokens: &[String]) -> Vec<f64> {
        let ids = self.padded_ids(tokens);
        let pad = self.config.order - 1;
        (pad..ids.len())
            .map(|j| self.prob_id(&ids[..j], ids[j]).ln())
            .collect()
    }
}

/// Per-token cross-entropy in nats: `-(1/L) * sum ln P(token | context)`.
pub fn cross_entropy<M: TokenScorer + ?Sized>(model: &M, tokens: &[String]) -> f64 {
    let logs = model.token_log_probs(tokens);
    -logs.iter().sum::<f64>() / logs.len() as f64
}

fn argmax_excluding(dist: &[f64], skip: u32) -> u32 {
    let mut best = None::<(u32, f64)>;
    for (i, p) in dist.iter().enumerate() {
        if i as u32 == skip {
            continue;
        }
        if best.is_none_or(|(_, bp)| *p > bp) {
            best = Some((i as u32, *p));
        }
    }
    best.expect("vocabulary has tokens besides [BOS]").0
}

fn draw<R: Rng>(dist: &[f64], temperature: f64, skip: u32, rng: &mut R) -> u32 {
    let scaled: Vec<f64> = dist
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i as u32 == skip || *p <= 0.0 {
                f64::NEG_INFINITY
            } else {
                p.ln() / temperature
            }
        })
        .collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        last = i;
        if u < *w {
            return i as u32;
        }
        u -= w;
    }
    last as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn s(text: &str) -> Sentence {
        Sentence::parse(text).unwrap()
    }

    fn toks(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_owned).collect()
    }

    fn exact_unigram(samples: &[Sentence]) -> NGramModel {
        let cfg = LmConfig {
            order: 1,
            lambdas: vec![1.0],
            unk_threshold: 0,
            unigram_alpha: 0.0,
        };
        NGramModel::train(samples, &cfg).unwrap()
    }

    #[test]
    fn laplace_unigram_matches_hand_formula() {
        let cfg = LmConfig {
            order: 1,
            lambdas: vec![1.0],
            unk_threshold: 0,
            unigram_alpha: 1.0,
        };
        let m = NGramModel::train(&[s("a b")], &cfg).unwrap();
        // vocab = {a, b} plus four reserved tokens
        let v = 6.0;
        assert_eq!(m.vocab().len(), 6);
        assert_relative_eq!(m.prob(&[], "a"), 2.0 / (2.0 + v), epsilon = 1e-15);
        assert_relative_eq!(m.prob(&[], "b"), 2.0 / (2.0 + v), epsilon = 1e-15);
        assert_relative_eq!(m.prob(&[], "[SEP]"), 1.0 / (2.0 + v), epsilon = 1e-15);
    }

    #[test]
    fn cross_entropy_exact_unigram() {
        let m = exact_unigram(&[s("a b")]);
        assert_relative_eq!(m.cross_entropy(&s("a b")), 2f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(m.perplexity(&s("a b")), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn unknown_tokens_collapse_to_unk() {
        let cfg = LmConfig {
            unk_threshold: 1,
            ..LmConfig::default()
        };
        let m = NGramModel::train(&[s("a a b c"), s("a d")], &cfg).unwrap();
        assert!(!m.contains("b"));
        assert!(m.contains("a"));
        let uni = LmConfig {
            order: 1,
            lambdas: vec![1.0],
            ..cfg
        };
        let m = NGramModel::train(&[s("a a b c"), s("a d")], &uni).unwrap();
        let unk_ce = -m.prob(&[], UNK).ln();
        assert_relative_eq!(m.cross_entropy(&s("zz b qq")), unk_ce, epsilon = 1e-12);
    }

    #[test]
    fn unigram_cross_entropy_ignores_order() {
        let m = exact_unigram(&[s("a b b c")]);
        assert_relative_eq!(
            m.cross_entropy(&s("a b c b")),
            m.cross_entropy(&s("c b b a")),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cross_entropy_is_finite_with_laplace_floor() {
        let m = NGramModel::train(&[s("a b c")], &LmConfig::default()).unwrap();
        assert!(m.cross_entropy(&s("never seen words")).is_finite());
    }

    #[test]
    fn training_is_deterministic() {
        let data = [s("x y z [SEP] y z [EOS]"), s("z y [EOS]")];
        let a = NGramModel::train(&data, &LmConfig::default()).unwrap();
        let b = NGramModel::train(&data, &LmConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn json_round_trip() {
        let data = [s("x y z [SEP] y z [EOS]"), s("z y x [EOS]"), s("x x")];
        let m = NGramModel::train(&data, &LmConfig { unk_threshold: 0, ..LmConfig::default() }).unwrap();
        let back = NGramModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn bad_config_rejected() {
        let data = [s("a")];
        let wrong_len = LmConfig {
            lambdas: vec![0.5, 0.5],
            ..LmConfig::default()
        };
        assert!(NGramModel::train(&data, &wrong_len).is_err());
        let bad_sum = LmConfig {
            lambdas: vec![0.2, 0.3, 0.6],
            ..LmConfig::default()
        };
        assert!(NGramModel::train(&data, &bad_sum).is_err());
        assert!(NGramModel::train(std::iter::empty::<&Sentence>(), &LmConfig::default()).is_err());
    }

    #[test]
    fn with_order_weights_are_valid() {
        for n in 1..6 {
            LmConfig::with_order(n).validate().unwrap();
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let data = [s("a b c [SEP] b c a [EOS]"), s("c a b [EOS]")];
        let m = NGramModel::train(&data, &LmConfig { unk_threshold: 0, ..LmConfig::default() }).unwrap();
        let p = toks("a b");
        assert_eq!(
            m.sample_continuation(&p, 20, 1.0, 42).unwrap(),
            m.sample_continuation(&p, 20, 1.0, 42).unwrap()
        );
    }

    #[test]
    fn zero_temperature_repeats_dominant_token() {
        let m = exact_unigram(&[s("x x x x y")]);
        let out = m.sample_continuation(&[], 7, 0.0, 1).unwrap();
        assert_eq!(out, vec!["x"; 7]);
    }

    #[test]
    fn argmax_tie_is_lexicographic() {
        let m = exact_unigram(&[s("q p")]);
        assert_eq!(m.sample_continuation(&[], 1, 0.0, 0).unwrap(), ["p"]);
    }

    #[test]
    fn bos_is_never_sampled() {
        // Laplace gives [BOS] unigram mass; it must still be masked.
        let cfg = LmConfig {
            order: 1,
            lambdas: vec![1.0],
            unk_threshold: 0,
            unigram_alpha: 1.0,
        };
        let m = NGramModel::train(&[s("a")], &cfg).unwrap();
        for seed in 0..200 {
            let out = m.sample_continuation(&[], 5, 1.0, seed).unwrap();
            assert!(!out.iter().any(|t| t == BOS));
        }
    }

    /// Greedy walk computed from raw counts, independent of the model's
    /// probability code: with lambdas concentrated on the trigram level and a
    /// deterministic toy corpus, the argmax successor of every seen context is
    /// its most frequent follower.
    #[test]
    fn low_temperature_walk_reaches_eos() {
        let data = [
            s("sonne im norden [SEP] regen im sueden [EOS]"),
            s("regen im sueden [SEP] sonne im norden [EOS]"),
            s("wind im osten [SEP] sonne im norden [EOS]"),
        ];
        let cfg = LmConfig {
            unk_threshold: 0,
            ..LmConfig::default()
        };
        let m = NGramModel::train(&data, &cfg).unwrap();
        let prompt = toks("wind im osten [SEP]");
        let out = m.sample_continuation(&prompt, 30, 0.01, 5).unwrap();
        assert_eq!(out.last().map(String::as_str), Some(EOS));
        // Oracle: from "osten [SEP]" the only observed follower is "sonne",
        // then "im", "norden"; after "im norden" the followers are "[EOS]" (2x)
        // and "[SEP]" (1x).
        assert_eq!(out, toks("sonne im norden [EOS]"));
    }

    #[test]
    fn sampling_frequencies_match_probabilities() {
        let data = [s("a b [SEP] a c [EOS]"), s("a b [EOS]"), s("b c a [EOS]")];
        let m = NGramModel::train(&data, &LmConfig { unk_threshold: 0, ..LmConfig::default() }).unwrap();
        let ctx = toks("a");
        let dist: Vec<(String, f64)> = m
            .conditional_distribution(&ctx)
            .into_iter()
            .map(|(t, p)| (t.to_owned(), p))
            .collect();
        let bos_mass: f64 = dist.iter().filter(|(t, _)| t == BOS).map(|(_, p)| p).sum();
        let draws = 10_000;
        let mut freq: HashMap<String, usize> = HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..draws {
            let t = m.sample_with_rng(&ctx, 1, 1.0, &mut rng).unwrap();
            *freq.entry(t[0].clone()).or_default() += 1;
        }
        for (t, p) in dist.iter().filter(|(t, _)| t != BOS) {
            let p = p / (1.0 - bos_mass);
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let got = *freq.get(t).unwrap_or(&0) as f64 / draws as f64;
            assert!(
                (got - p).abs() <= 3.0 * se + 1e-12,
                "{t}: empirical {got} vs {p} (se {se})"
            );
        }
    }

    fn arb_samples() -> impl Strategy<Value = Vec<Sentence>> {
        prop::collection::vec(
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "[SEP]", "[EOS]"]), 1..8)
                .prop_map(|t| Sentence::new(t.into_iter().map(str::to_owned).collect()).unwrap()),
            1..12,
        )
    }

    proptest! {
        #[test]
        fn conditionals_normalize(samples in arb_samples(), ctx in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "zz", "[SEP]"]), 0..4), order in 1usize..5) {
            let cfg = LmConfig { unk_threshold: 0, ..LmConfig::with_order(order) };
            let m = NGramModel::train(&samples, &cfg).unwrap();
            let ctx: Vec<String> = ctx.into_iter().map(str::to_owned).collect();
            let total: f64 = m.conditional_distribution(&ctx).iter().map(|(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "sum {}", total);
            // scalar and dense paths agree
            for (t, p) in m.conditional_distribution(&ctx) {
                prop_assert!((m.prob(&ctx, t) - p).abs() < 1e-12);
            }
        }

        #[test]
        fn perplexity_is_exp_cross_entropy(samples in arb_samples(), probe in arb_samples()) {
            let m = NGramModel::train(&samples, &LmConfig::default()).unwrap();
            for s in &probe {
                let ce = m.cross_entropy(s);
                prop_assert!(ce.is_finite());
                let ppl = m.perplexity(s);
                prop_assert!((ppl - ce.exp()).abs() <= 1e-9 * ppl);
            }
        }

        #[test]
        fn more_counts_never_lower_unigram_prob(samples in arb_samples(), extra in 1usize..5) {
            let cfg = LmConfig { order: 1, lambdas: vec![1.0], unk_threshold: 0, unigram_alpha: 1.0 };
            let base = NGramModel::train(&samples, &cfg).unwrap();
            let mut more = samples.clone();
            more.push(Sentence::new(vec!["a".to_owned(); extra]).unwrap());
            let bigger = NGramModel::train(&more, &cfg).unwrap();
            prop_assert!(bigger.prob(&[], "a") >= base.prob(&[], "a"));
        }
    }
}
