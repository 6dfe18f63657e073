//! Intrinsic domain analyses: word-frequency distributions, KL and JS
//! divergence (in nats), and a multinomial naive Bayes domain classifier.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{sample_corpus, vocab_stats, MonoCorpus, Sentence, VocabStats};
use crate::error::{Error, Result};

/// A normalized distribution over words. Words not present have probability 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    probs: BTreeMap<String, f64>,
}

impl Distribution {
    /// Normalizes non-negative weights. Zero-weight entries are dropped.
    pub fn from_weights<I, S>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut probs = BTreeMap::new();
        for (w, x) in weights {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::invalid(format!("invalid weight {x}")));
            }
            if x > 0.0 {
                *probs.entry(w.into()).or_insert(0.0) += x;
            }
        }
        let total: f64 = probs.values().sum();
        if total <= 0.0 {
            return Err(Error::invalid("distribution has zero total mass"));
        }
        probs.values_mut().for_each(|p| *p /= total);
        Ok(Distribution { probs })
    }

    pub fn prob(&self, word: &str) -> f64 {
        self.probs.get(word).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.probs.iter().map(|(w, p)| (w.as_str(), *p))
    }

    pub fn support(&self) -> impl Iterator<Item = &str> {
        self.probs.keys().map(String::as_str)
    }
}

/// Relative word frequencies, optionally restricted to `restrict_to` and renormalized.
pub fn to_distribution(stats: &VocabStats, restrict_to: Option<&BTreeSet<String>>) -> Result<Distribution> {
    if stats.total_tokens == 0 {
        return Err(Error::invalid("no tokens to build a distribution from"));
    }
    let weights = stats
        .counts
        .iter()
        .filter(|(w, _)| restrict_to.is_none_or(|r| r.contains(*w)))
        .map(|(w, c)| (w.clone(), *c as f64));
    Distribution::from_weights(weights)
}

/// `KL(P || Q)` in nats; `+inf` when P puts mass where Q has none.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> f64 {
    let mut kl = 0.0;
    for (w, pw) in p.iter() {
        let qw = q.prob(w);
        if qw == 0.0 {
            return f64::INFINITY;
        }
        kl += pw * (pw / qw).ln();
    }
    kl
}

/// Jensen-Shannon divergence in nats, within `[0, ln 2]`.
pub fn js_divergence(p: &Distribution, q: &Distribution) -> f64 {
    let half_kl = |a: &Distribution, b: &Distribution| {
        a.iter()
            .map(|(w, aw)| {
                let m = 0.5 * (aw + b.prob(w));
                aw * (aw / m).ln()
            })
            .sum::<f64>()
    };
    (0.5 * (half_kl(p, q) + half_kl(q, p))).max(0.0)
}

fn corpus_distribution(corpus: &MonoCorpus) -> Result<Distribution> {
    to_distribution(&vocab_stats(corpus), None)
}

/// JS divergence between two corpora after subsampling both to the size of
/// the smaller one.
pub fn corpus_js(a: &MonoCorpus, b: &MonoCorpus, seed: u64) -> Result<f64> {
    let n = a.len().min(b.len());
    let a = sample_corpus(a, n, seed)?;
    let b = sample_corpus(b, n, seed)?;
    Ok(js_divergence(&corpus_distribution(&a)?, &corpus_distribution(&b)?))
}

/// Frequency curves over the reference ranking plus JS to the reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    /// The reference corpus' `top_n` most frequent words, most frequent first.
    pub ranks: Vec<String>,
    /// Per corpus, the relative frequency of each ranked word.
    pub curves: BTreeMap<String, Vec<f64>>,
    /// Per corpus, JS divergence to the reference on equal-size samples.
    pub js: BTreeMap<String, f64>,
}

pub fn distribution_report(corpora: &[MonoCorpus], reference: &MonoCorpus, top_n: usize, seed: u64) -> Result<DistributionReport> {
    let ref_stats = vocab_stats(reference);
    let ranks: Vec<String> = ref_stats.rank_order.iter().take(top_n).cloned().collect();
    let rows: Vec<(String, Vec<f64>, f64)> = std::iter::once(reference)
        .chain(corpora)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|c| {
            let stats = vocab_stats(c);
            let total = stats.total_tokens as f64;
            let curve = ranks.iter().map(|w| stats.count(w) as f64 / total).collect();
            Ok((c.name.clone(), curve, corpus_js(c, reference, seed)?))
        })
        .collect::<Result<_>>()?;
    let mut curves = BTreeMap::new();
    let mut js = BTreeMap::new();
    for (name, curve, d) in rows {
        curves.insert(name.clone(), curve);
        js.insert(name, d);
    }
    Ok(DistributionReport { ranks, curves, js })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainClass {
    InDomain,
    General,
}

/// Multinomial naive Bayes over words with add-alpha smoothing.
#[derive(Clone, Debug)]
pub struct DomainClassifier {
    log_prior: [f64; 2],
    log_likelihood: HashMap<String, [f64; 2]>,
}

impl DomainClassifier {
    fn log_posteriors(&self, sentence: &Sentence) -> [f64; 2] {
        let mut score = self.log_prior;
        for w in sentence.tokens() {
            if let Some(ll) = self.log_likelihood.get(w) {
                score[0] += ll[0];
                score[1] += ll[1];
            }
        }
        score
    }

    /// Posterior probability of the in-domain class.
    pub fn in_domain_probability(&self, sentence: &Sentence) -> f64 {
        let [a, b] = self.log_posteriors(sentence);
        1.0 / (1.0 + (b - a).exp())
    }

    /// Ties go to `General`.
    pub fn classify(&self, sentence: &Sentence) -> DomainClass {
        let [a, b] = self.log_posteriors(sentence);
        if a > b {
            DomainClass::InDomain
        } else {
            DomainClass::General
        }
    }
}

/// Trains on equal numbers of sentences per class: the larger corpus is
/// truncated to the size of the smaller one.
pub fn train_domain_classifier(in_corpus: &MonoCorpus, gen_corpus: &MonoCorpus, alpha: f64) -> Result<DomainClassifier> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::invalid("smoothing alpha must be positive"));
    }
    let n = in_corpus.len().min(gen_corpus.len());
    if n == 0 {
        return Err(Error::invalid("a class has no training sentences"));
    }
    let classes = [&in_corpus.sentences()[..n], &gen_corpus.sentences()[..n]];
    let mut counts: HashMap<&str, [f64; 2]> = HashMap::new();
    let mut totals = [0.0; 2];
    for (c, sentences) in classes.iter().enumerate() {
        for s in sentences.iter() {
            for w in s.tokens() {
                counts.entry(w.as_str()).or_insert([0.0; 2])[c] += 1.0;
                totals[c] += 1.0;
            }
        }
    }
    let v = counts.len() as f64;
    let log_likelihood = counts
        .into_iter()
        .map(|(w, c)| {
            let ll = std::array::from_fn(|k| ((c[k] + alpha) / (totals[k] + alpha * v)).ln());
            (w.to_owned(), ll)
        })
        .collect();
    let prior = (n as f64 / (2 * n) as f64).ln();
    Ok(DomainClassifier {
        log_prior: [prior, prior],
        log_likelihood,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassProportions {
    pub in_domain: f64,
    pub general: f64,
}

pub fn classify_corpus(clf: &DomainClassifier, corpus: &MonoCorpus) -> ClassProportions {
    let hits = corpus
        .sentences()
        .par_iter()
        .filter(|s| clf.classify(s) == DomainClass::InDomain)
        .count();
    let in_domain = hits as f64 / corpus.len() as f64;
    ClassProportions {
        in_domain,
        general: (corpus.len() - hits) as f64 / corpus.len() as f64,
    }
}

/// Fraction of correctly labelled held-out sentences.
pub fn held_out_accuracy(clf: &DomainClassifier, in_domain: &MonoCorpus, general: &MonoCorpus) -> f64 {
    let right = in_domain
        .iter()
        .filter(|s| clf.classify(s) == DomainClass::InDomain)
        .count()
        + general
            .iter()
            .filter(|s| clf.classify(s) == DomainClass::General)
            .count();
    right as f64 / (in_domain.len() + general.len()) as f64
}
