//! Translation quality metrics: corpus BLEU, Self-BLEU, ROUGE-L, an
//! exact-match METEOR variant, and compare-mt style bucketed analyses.
//!
//! All scores are reported on a 0-100 scale. Inputs are token sequences;
//! anything that derefs to `[String]` works, so hypotheses may be empty.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::VocabStats;
use crate::error::{Error, Result};

pub const MAX_N: usize = 4;

fn check_lengths(hyps: usize, refs: usize) -> Result<()> {
    if hyps != refs {
        return Err(Error::invalid(format!(
            "{hyps} hypotheses but {refs} references"
        )));
    }
    Ok(())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// BLEU-1 .. BLEU-4.
    pub bleu: [f64; MAX_N],
    /// Clipped n-gram precisions in [0, 1].
    pub precisions: [f64; MAX_N],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

#[derive(Clone, Copy, Debug, Default)]
struct BleuStats {
    matches: [u64; MAX_N],
    totals: [u64; MAX_N],
    hyp_len: u64,
    ref_len: u64,
}

impl BleuStats {
    fn sentence(hyp: &[String], reference: &[String]) -> Self {
        let mut s = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_N {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            s.totals[n - 1] = h.values().sum::<usize>() as u64;
            s.matches[n - 1] = h
                .iter()
                .map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0)) as u64)
                .sum();
        }
        s
    }

    fn add(mut self, other: BleuStats) -> Self {
        for n in 0..MAX_N {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }

    fn score(&self) -> BleuScore {
        let precisions: [f64; MAX_N] = std::array::from_fn(|n| {
            if self.totals[n] == 0 {
                0.0
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            }
        });
        let bp = brevity_penalty(self.hyp_len as f64, self.ref_len as f64);
        let mut bleu = [0.0; MAX_N];
        let mut log_sum = 0.0;
        for k in 0..MAX_N {
            if precisions[k] == 0.0 {
                break;
            }
            log_sum += precisions[k].ln();
            bleu[k] = 100.0 * bp * (log_sum / (k + 1) as f64).exp();
        }
        BleuScore {
            bleu,
            precisions,
            brevity_penalty: bp,
            hyp_len: self.hyp_len as usize,
            ref_len: self.ref_len as usize,
        }
    }
}

/// `min(1, exp(1 - r/c))`; zero for an empty hypothesis.
fn brevity_penalty(hyp_len: f64, ref_len: f64) -> f64 {
    if hyp_len == 0.0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len / hyp_len).exp()
    }
}

/// Corpus-level BLEU-1..4 with a single reference per hypothesis.
pub fn corpus_bleu<H, R>(hyps: &[H], refs: &[R]) -> Result<BleuScore>
where
    H: AsRef<[String]> + Sync,
    R: AsRef<[String]> + Sync,
{
    check_lengths(hyps.len(), refs.len())?;
    let stats = hyps
        .par_iter()
        .zip(refs)
        .map(|(h, r)| BleuStats::sentence(h.as_ref(), r.as_ref()))
        .reduce(BleuStats::default, BleuStats::add);
    Ok(stats.score())
}

/// Per n-gram, the largest and second-largest count over the corpus along
/// with the index of the sentence holding the largest. Lets the max count
/// "over every sentence but i" be answered in O(1).
struct TopTwo {
    best: usize,
    best_idx: usize,
    second: usize,
}

/// Mean sentence-level BLEU of each of the first `sample_cap` sentences
/// against all the others as references. Precisions for n >= 2 use add-one
/// smoothing. Lower means more diverse.
pub fn self_bleu<S>(corpus: &[S], max_n: usize, sample_cap: usize) -> Result<f64>
where
    S: AsRef<[String]> + Sync,
{
    if corpus.len() < 2 {
        return Err(Error::invalid("Self-BLEU needs at least two sentences"));
    }
    if max_n == 0 {
        return Err(Error::invalid("max_n must be at least 1"));
    }
    let mut tops: Vec<HashMap<&[String], TopTwo>> = (0..max_n).map(|_| HashMap::new()).collect();
    for (i, s) in corpus.iter().enumerate() {
        for n in 1..=max_n {
            for (g, c) in ngram_counts(s.as_ref(), n) {
                let e = tops[n - 1].entry(g).or_insert(TopTwo {
                    best: 0,
                    best_idx: usize::MAX,
                    second: 0,
                });
                if c > e.best {
                    e.second = e.best;
                    e.best = c;
                    e.best_idx = i;
                } else if c > e.second {
                    e.second = c;
                }
            }
        }
    }
    let lengths: Vec<usize> = corpus.iter().map(|s| s.as_ref().len()).collect();
    let hyps = sample_cap.clamp(1, corpus.len());

    let scores: Vec<f64> = (0..hyps)
        .into_par_iter()
        .map(|i| {
            let hyp = corpus[i].as_ref();
            let mut log_sum = 0.0;
            for n in 1..=max_n {
                let counts = ngram_counts(hyp, n);
                let total: usize = counts.values().sum();
                let matched: usize = counts
                    .iter()
                    .map(|(g, c)| {
                        let t = &tops[n - 1][g];
                        let other = if t.best_idx == i { t.second } else { t.best };
                        (*c).min(other)
                    })
                    .sum();
                let p = if n == 1 {
                    if total == 0 {
                        0.0
                    } else {
                        matched as f64 / total as f64
                    }
                } else {
                    (matched as f64 + 1.0) / (total as f64 + 1.0)
                };
                if p == 0.0 {
                    return 0.0;
                }
                log_sum += p.ln();
            }
            // closest reference length, ties to the shorter one
            let c = hyp.len();
            let r = lengths
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, l)| *l)
                .min_by_key(|l| (l.abs_diff(c), *l))
                .expect("at least one other sentence");
            100.0 * brevity_penalty(c as f64, r as f64) * (log_sum / max_n as f64).exp()
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sentence-level ROUGE-L F1 (beta = 1) in [0, 1].
pub fn rouge_l_sentence(hyp: &[String], reference: &[String]) -> f64 {
    let l = lcs_len(hyp, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / hyp.len() as f64;
    let r = l as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

fn corpus_mean<H, R>(hyps: &[H], refs: &[R], f: impl Fn(&[String], &[String]) -> f64 + Sync) -> Result<f64>
where
    H: AsRef<[String]> + Sync,
    R: AsRef<[String]> + Sync,
{
    check_lengths(hyps.len(), refs.len())?;
    if hyps.is_empty() {
        return Err(Error::invalid("no sentences to score"));
    }
    let per: Vec<f64> = hyps
        .par_iter()
        .zip(refs)
        .map(|(h, r)| f(h.as_ref(), r.as_ref()))
        .collect();
    Ok(100.0 * per.iter().sum::<f64>() / per.len() as f64)
}

/// Mean sentence ROUGE-L F1, scaled to 0-100.
pub fn rouge_l<H, R>(hyps: &[H], refs: &[R]) -> Result<f64>
where
    H: AsRef<[String]> + Sync,
    R: AsRef<[String]> + Sync,
{
    corpus_mean(hyps, refs, rouge_l_sentence)
}

/// Result of the exact-match unigram alignment used by METEOR.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

/// One-to-one exact alignment, left to right over the hypothesis. Each token
/// takes the reference position right after its predecessor's match when
/// that continues the chunk, otherwise the leftmost unused equal token.
pub fn align_exact(hyp: &[String], reference: &[String]) -> Alignment {
    let mut used = vec![false; reference.len()];
    let mut mapped: Vec<Option<usize>> = Vec::with_capacity(hyp.len());
    for (i, w) in hyp.iter().enumerate() {
        let follow = i
            .checked_sub(1)
            .and_then(|p| mapped[p])
            .map(|j| j + 1)
            .filter(|&j| j < reference.len() && !used[j] && &reference[j] == w);
        let pick = follow.or_else(|| (0..reference.len()).find(|&j| !used[j] && &reference[j] == w));
        if let Some(j) = pick {
            used[j] = true;
        }
        mapped.push(pick);
    }
    let matches = mapped.iter().flatten().count();
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for m in &mapped {
        match (*m, prev) {
            (Some(j), Some(p)) if j == p + 1 => {}
            (Some(_), _) => chunks += 1,
            (None, _) => {}
        }
        prev = *m;
    }
    Alignment { matches, chunks }
}

/// Sentence METEOR with exact matching only, alpha/beta/gamma = 0.9/3/0.5.
pub fn meteor_sentence(hyp: &[String], reference: &[String]) -> f64 {
    let a = align_exact(hyp, reference);
    if a.matches == 0 {
        return 0.0;
    }
    let p = a.matches as f64 / hyp.len() as f64;
    let r = a.matches as f64 / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / a.matches as f64).powi(3);
    f_mean * (1.0 - penalty)
}

pub fn meteor_lite<H, R>(hyps: &[H], refs: &[R]) -> Result<f64>
where
    H: AsRef<[String]> + Sync,
    R: AsRef<[String]> + Sync,
{
    corpus_mean(hyps, refs, meteor_sentence)
}

/// Cut points for frequency and length buckets.
///
/// A word with training frequency `f` falls in the first bucket whose upper
/// cut exceeds `f` (so a word exactly at a cut opens the next bucket). A
/// sentence of reference length `l` falls in the first bucket whose cut is
/// at least `l` (so a sentence exactly at a cut closes its bucket).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    pub frequency_cuts: Vec<u64>,
    pub length_cuts: Vec<usize>,
}

impl Default for BucketSpec {
    fn default() -> Self {
        BucketSpec {
            frequency_cuts: vec![100, 2000],
            length_cuts: vec![10, 20],
        }
    }
}

fn strictly_increasing<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl BucketSpec {
    pub fn validate(&self) -> Result<()> {
        if !strictly_increasing(&self.frequency_cuts) || !strictly_increasing(&self.length_cuts) {
            return Err(Error::invalid("bucket cut points must be strictly increasing"));
        }
        Ok(())
    }

    pub fn frequency_bucket(&self, freq: u64) -> usize {
        self.frequency_cuts.iter().take_while(|c| **c <= freq).count()
    }

    pub fn length_bucket(&self, len: usize) -> usize {
        self.length_cuts.iter().take_while(|c| **c < len).count()
    }

    pub fn frequency_names(&self) -> Vec<String> {
        names(self.frequency_cuts.len(), ["low", "medium", "high"])
    }

    pub fn length_names(&self) -> Vec<String> {
        names(self.length_cuts.len(), ["short", "medium", "long"])
    }
}

fn names(cuts: usize, standard: [&str; 3]) -> Vec<String> {
    if cuts == 2 {
        standard.iter().map(|s| (*s).to_owned()).collect()
    } else {
        (0..=cuts).map(|i| format!("bucket{i}")).collect()
    }
}

/// Micro F1 (0-100) of target-word prediction per training-frequency bucket.
/// Words missing from `train` count as frequency 0. Buckets with no word in
/// either hypotheses or references are `None`.
pub fn f1_by_frequency<H, R>(hyps: &[H], refs: &[R], train: &VocabStats, spec: &BucketSpec) -> Result<Vec<Option<f64>>>
where
    H: AsRef<[String]>,
    R: AsRef<[String]>,
{
    check_lengths(hyps.len(), refs.len())?;
    spec.validate()?;
    let buckets = spec.frequency_cuts.len() + 1;
    let mut matches = vec![0u64; buckets];
    let mut hyp_total = vec![0u64; buckets];
    let mut ref_total = vec![0u64; buckets];
    for (h, r) in hyps.iter().zip(refs) {
        let hc = ngram_counts(h.as_ref(), 1);
        let rc = ngram_counts(r.as_ref(), 1);
        for (w, c) in &hc {
            let b = spec.frequency_bucket(train.count(&w[0]));
            hyp_total[b] += *c as u64;
            matches[b] += (*c).min(rc.get(w).copied().unwrap_or(0)) as u64;
        }
        for (w, c) in &rc {
            ref_total[spec.frequency_bucket(train.count(&w[0]))] += *c as u64;
        }
    }
    Ok((0..buckets)
        .map(|b| {
            if hyp_total[b] == 0 && ref_total[b] == 0 {
                return None;
            }
            let p = if hyp_total[b] == 0 { 0.0 } else { matches[b] as f64 / hyp_total[b] as f64 };
            let r = if ref_total[b] == 0 { 0.0 } else { matches[b] as f64 / ref_total[b] as f64 };
            Some(if p + r == 0.0 { 0.0 } else { 100.0 * 2.0 * p * r / (p + r) })
        })
        .collect())
}

type HypsRefs<'a> = (Vec<&'a [String]>, Vec<&'a [String]>);

/// Corpus BLEU computed separately within each reference-length bucket.
pub fn bleu_by_length<H, R>(hyps: &[H], refs: &[R], spec: &BucketSpec) -> Result<Vec<Option<BleuScore>>>
where
    H: AsRef<[String]> + Sync,
    R: AsRef<[String]> + Sync,
{
    check_lengths(hyps.len(), refs.len())?;
    spec.validate()?;
    let buckets = spec.length_cuts.len() + 1;
    let mut split: Vec<HypsRefs> = vec![(Vec::new(), Vec::new()); buckets];
    for (h, r) in hyps.iter().zip(refs) {
        let b = spec.length_bucket(r.as_ref().len());
        split[b].0.push(h.as_ref());
        split[b].1.push(r.as_ref());
    }
    split
        .into_iter()
        .map(|(h, r)| {
            if h.is_empty() {
                Ok(None)
            } else {
                corpus_bleu(&h, &r).map(Some)
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub frequency: BTreeMap<String, Option<f64>>,
    pub length: BTreeMap<String, Option<f64>>,
}

/// Everything the `evaluate` step reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: [f64; MAX_N],
    pub rouge_l: f64,
    pub meteor: f64,
    pub bp: f64,
    pub sentence_count: usize,
    pub buckets: BucketReport,
}

/// Runs every metric. Frequency buckets are only filled when training
/// vocabulary statistics are given.
pub fn evaluate<H, R>(hyps: &[H], refs: &[R], train: Option<&VocabStats>, spec: &BucketSpec) -> Result<EvalReport>
where
    H: AsRef<[String]> + Sync,
    R: AsRef<[String]> + Sync,
{
    let bleu = corpus_bleu(hyps, refs)?;
    let frequency = match train {
        Some(stats) => spec
            .frequency_names()
            .into_iter()
            .zip(f1_by_frequency(hyps, refs, stats, spec)?)
            .collect(),
        None => BTreeMap::new(),
    };
    let length = spec
        .length_names()
        .into_iter()
        .zip(bleu_by_length(hyps, refs, spec)?.into_iter().map(|b| b.map(|b| b.bleu[3])))
        .collect();
    Ok(EvalReport {
        bleu: bleu.bleu,
        rouge_l: rouge_l(hyps, refs)?,
        meteor: meteor_lite(hyps, refs)?,
        bp: bleu.brevity_penalty,
        sentence_count: hyps.len(),
        buckets: BucketReport { frequency, length },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::count_tokens;
    use crate::corpus::Sentence;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn t(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_owned).collect()
    }

    fn ts(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| t(l)).collect()
    }

    #[test]
    fn bleu_identity() {
        let refs = ts(&["the cat sat on the mat", "a dog barked loudly today"]);
        let b = corpus_bleu(&refs, &refs).unwrap();
        for x in b.bleu {
            assert_relative_eq!(x, 100.0, epsilon = 1e-9);
        }
        assert_eq!(b.brevity_penalty, 1.0);
    }

    #[test]
    fn bleu_brevity_penalty_hand_value() {
        let b = corpus_bleu(&ts(&["the cat"]), &ts(&["the cat sat"])).unwrap();
        assert_eq!(b.precisions[0], 1.0);
        assert_relative_eq!(b.brevity_penalty, (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(b.bleu[0], 60.6531, epsilon = 1e-4);
    }

    #[test]
    fn bleu_zero_precision_rule() {
        let b = corpus_bleu(&ts(&["a b c x d"]), &ts(&["a b c d e"])).unwrap();
        assert!(b.bleu[2] > 0.0);
        assert_eq!(b.bleu[3], 0.0);
        let b = corpus_bleu(&ts(&["a b"]), &ts(&["a b"])).unwrap();
        assert_eq!(b.bleu[2], 0.0);
    }

    #[test]
    fn bleu_hand_computed_mixture() {
        // hyp "a b c d", ref "a b d c": p1 = 4/4, p2 = 1/3 (a b), p3 = 0
        let b = corpus_bleu(&ts(&["a b c d"]), &ts(&["a b d c"])).unwrap();
        assert_relative_eq!(b.precisions[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(b.bleu[1], 100.0 * (1.0f64 / 3.0).sqrt(), epsilon = 1e-9);
        assert_eq!(b.bleu[2], 0.0);
    }

    #[test]
    fn bleu_length_mismatch_and_empty_hyp() {
        assert!(corpus_bleu(&ts(&["a"]), &ts(&["a", "b"])).is_err());
        let hyps = vec![Vec::<String>::new(), t("x y")];
        let b = corpus_bleu(&hyps, &ts(&["a b", "x y"])).unwrap();
        assert_eq!(b.hyp_len, 2);
        assert_eq!(b.ref_len, 4);
        assert_relative_eq!(b.brevity_penalty, (1.0f64 - 2.0).exp(), epsilon = 1e-15);
    }

    #[test]
    fn self_bleu_identical_is_100() {
        let c = ts(&["a b c d e", "a b c d e", "a b c d e"]);
        assert_relative_eq!(self_bleu(&c, 4, 10).unwrap(), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn self_bleu_disjoint_is_small() {
        // oracle: each sentence has p1 = 0 against the others, so its smoothed
        // sentence BLEU is 0
        let c = ts(&["a b c", "d e f", "g h i"]);
        let v = self_bleu(&c, 4, 3).unwrap();
        assert!(v < 5.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn self_bleu_hand_value_and_cap() {
        // "a b" vs refs {"a c", "d e"}: p1 = 1/2, p2 = (0+1)/(1+1), p3 = p4 = 1
        // (no n-grams, smoothed 1/1); BP = 1. BLEU = (1/2 * 1/2)^(1/4)
        let c = ts(&["a b", "a c", "d e"]);
        let expected_first = 100.0 * (0.25f64).powf(0.25);
        // sentence 2 "a c" vs {"a b","d e"}: same structure
        // sentence 3 "d e" vs {"a b","a c"}: p1 = 0 -> 0
        let full = self_bleu(&c, 4, 3).unwrap();
        assert_relative_eq!(full, 2.0 * expected_first / 3.0, epsilon = 1e-9);
        assert_relative_eq!(self_bleu(&c, 4, 1).unwrap(), expected_first, epsilon = 1e-9);
        assert_eq!(self_bleu(&c, 4, 3).unwrap(), self_bleu(&c, 4, 99).unwrap());
        assert!(self_bleu(&ts(&["a"]), 4, 1).is_err());
    }

    /// Brute force: explicit multi-reference clipping by scanning all others.
    fn self_bleu_brute(c: &[Vec<String>], max_n: usize) -> f64 {
        let mut total = 0.0;
        for (i, h) in c.iter().enumerate() {
            let others: Vec<&Vec<String>> = c.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s).collect();
            let mut logs = 0.0;
            let mut zero = false;
            for n in 1..=max_n {
                let hc = ngram_counts(h, n);
                let tot: usize = hc.values().sum();
                let m: usize = hc
                    .iter()
                    .map(|(g, k)| {
                        let mx = others.iter().map(|o| ngram_counts(o, n).get(g).copied().unwrap_or(0)).max().unwrap();
                        (*k).min(mx)
                    })
                    .sum();
                let p = if n == 1 { m as f64 / tot as f64 } else { (m as f64 + 1.0) / (tot as f64 + 1.0) };
                if p == 0.0 {
                    zero = true;
                    break;
                }
                logs += p.ln();
            }
            if zero {
                continue;
            }
            let mut lens: Vec<usize> = others.iter().map(|o| o.len()).collect();
            lens.sort_by_key(|l| (l.abs_diff(h.len()), *l));
            total += 100.0 * brevity_penalty(h.len() as f64, lens[0] as f64) * (logs / max_n as f64).exp();
        }
        total / c.len() as f64
    }

    #[test]
    fn rouge_hand_values() {
        assert_relative_eq!(rouge_l(&ts(&["a b c"]), &ts(&["a b c"])).unwrap(), 100.0);
        let v = rouge_l(&ts(&["a c d"]), &ts(&["a b c d"])).unwrap();
        assert_relative_eq!(v, 100.0 * 6.0 / 7.0, epsilon = 1e-12);
        assert_relative_eq!(v, 85.71, epsilon = 1e-2);
        assert_eq!(rouge_l(&ts(&["x y"]), &ts(&["a b"])).unwrap(), 0.0);
        assert!(rouge_l(&ts(&["x"]), &ts(&[])).is_err());
    }

    #[test]
    fn meteor_hand_values() {
        assert_relative_eq!(meteor_lite(&ts(&["a b"]), &ts(&["a b"])).unwrap(), 93.75, epsilon = 1e-12);
        assert_relative_eq!(meteor_lite(&ts(&["a"]), &ts(&["a"])).unwrap(), 50.0, epsilon = 1e-12);
        assert_eq!(meteor_lite(&ts(&["x"]), &ts(&["a"])).unwrap(), 0.0);
    }

    #[test]
    fn meteor_alignment_prefers_continuing_chunks() {
        // leftmost-only matching would map the second "a" to position 0
        let a = align_exact(&t("b a"), &t("a b a"));
        assert_eq!(a, Alignment { matches: 2, chunks: 1 });
        let a = align_exact(&t("c b a"), &t("a b c"));
        assert_eq!(a, Alignment { matches: 3, chunks: 3 });
        let a = align_exact(&t("a a"), &t("a"));
        assert_eq!(a, Alignment { matches: 1, chunks: 1 });
    }

    #[test]
    fn bucket_boundaries() {
        let spec = BucketSpec::default();
        assert_eq!(spec.frequency_bucket(0), 0);
        assert_eq!(spec.frequency_bucket(99), 0);
        assert_eq!(spec.frequency_bucket(100), 1);
        assert_eq!(spec.frequency_bucket(1999), 1);
        assert_eq!(spec.frequency_bucket(2000), 2);
        assert_eq!(spec.length_bucket(1), 0);
        assert_eq!(spec.length_bucket(10), 0);
        assert_eq!(spec.length_bucket(11), 1);
        assert_eq!(spec.length_bucket(20), 1);
        assert_eq!(spec.length_bucket(21), 2);
        assert!(BucketSpec { frequency_cuts: vec![5, 5], length_cuts: vec![] }.validate().is_err());
    }

    fn stats(words: &[(&str, u64)]) -> VocabStats {
        VocabStats::from_counts(words.iter().map(|(w, c)| ((*w).to_owned(), *c)).collect())
    }

    #[test]
    fn f1_buckets() {
        let train = stats(&[("w", 5), ("m", 100), ("h", 2000)]);
        let spec = BucketSpec::default();
        let refs = ts(&["w m h", "m h unk"]);
        let f = f1_by_frequency(&refs, &refs, &train, &spec).unwrap();
        assert_eq!(f, vec![Some(100.0), Some(100.0), Some(100.0)]);

        let f = f1_by_frequency(&ts(&["w"]), &ts(&["w w"]), &train, &spec).unwrap();
        assert_relative_eq!(f[0].unwrap(), 200.0 / 3.0, epsilon = 1e-12);
        assert_eq!(f[1], None);
        assert_eq!(f[2], None);
    }

    #[test]
    fn f1_single_bucket_equals_overall_micro_f1() {
        let hyps = ts(&["a b c c", "d a"]);
        let refs = ts(&["a c c e", "a d d"]);
        let train = stats(&[("a", 500), ("c", 3), ("d", 5000)]);
        let one = BucketSpec { frequency_cuts: vec![], length_cuts: vec![] };
        let all = f1_by_frequency(&hyps, &refs, &train, &one).unwrap()[0].unwrap();
        // overall: matches a:1+1, c:2, d:1 = 5; hyp tokens 6; ref tokens 7
        let (p, r) = (5.0 / 6.0, 5.0 / 7.0);
        assert_relative_eq!(all, 100.0 * 2.0 * p * r / (p + r), epsilon = 1e-12);
    }

    #[test]
    fn length_buckets_match_manual_split() {
        let refs = ts(&[
            "a b c",
            "one two three four five six seven eight nine ten eleven twelve",
            "x y z w",
            "p q r s t u v w x y z a b c",
        ]);
        let hyps = ts(&[
            "a b d",
            "one two three four five six seven nine ten eleven",
            "x y z w",
            "p q r s t u v x y z a b",
        ]);
        let per = bleu_by_length(&hyps, &refs, &BucketSpec::default()).unwrap();
        let short = corpus_bleu(&[hyps[0].clone(), hyps[2].clone()], &[refs[0].clone(), refs[2].clone()]).unwrap();
        let medium = corpus_bleu(&[hyps[1].clone(), hyps[3].clone()], &[refs[1].clone(), refs[3].clone()]).unwrap();
        assert_eq!(per[0].as_ref().unwrap(), &short);
        assert_eq!(per[1].as_ref().unwrap(), &medium);
        assert!(per[2].is_none());

        let all_short = ts(&["a b c d e"; 3]);
        let per = bleu_by_length(&all_short, &all_short, &BucketSpec::default()).unwrap();
        assert_relative_eq!(per[0].as_ref().unwrap().bleu[3], 100.0, epsilon = 1e-9);
        assert!(per[1].is_none() && per[2].is_none());
    }

    #[test]
    fn report_json_shape() {
        let refs = ts(&["a b c d", "e f g h i j k l m n o p"]);
        let train = count_tokens(refs.iter().map(|r| Sentence::new(r.clone()).unwrap()).collect::<Vec<_>>().iter());
        let r = evaluate(&refs, &refs, Some(&train), &BucketSpec::default()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["bleu"].as_array().unwrap().len(), 4);
        assert_eq!(v["buckets"]["length"]["long"], serde_json::Value::Null);
        assert_eq!(v["buckets"]["length"]["short"], 100.0);
        assert_eq!(v["buckets"]["frequency"]["low"], 100.0);
        assert!(v["rouge_l"].is_number() && v["meteor"].is_number() && v["bp"].is_number());
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<Vec<String>>)> {
        (1usize..6).prop_flat_map(|n| {
            let sent = || prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 1..9)
                .prop_map(|v| v.into_iter().map(str::to_owned).collect::<Vec<_>>());
            (prop::collection::vec(sent(), n), prop::collection::vec(sent(), n))
        })
    }

    fn rename(c: &[Vec<String>]) -> Vec<Vec<String>> {
        c.iter().map(|s| s.iter().map(|w| format!("{w}{w}_x")).collect()).collect()
    }

    fn reversed(c: &[Vec<String>]) -> Vec<Vec<String>> {
        c.iter().map(|s| s.iter().rev().cloned().collect()).collect()
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_rename_invariant((h, r) in arb_pair()) {
            let b = corpus_bleu(&h, &r).unwrap();
            let rl = rouge_l(&h, &r).unwrap();
            let me = meteor_lite(&h, &r).unwrap();
            for x in b.bleu.iter().chain([rl, me].iter()) {
                prop_assert!((0.0..=100.0 + 1e-9).contains(x));
            }
            prop_assert!(b.brevity_penalty > 0.0 && b.brevity_penalty <= 1.0);
            let (h2, r2) = (rename(&h), rename(&r));
            prop_assert_eq!(corpus_bleu(&h2, &r2).unwrap().bleu, b.bleu);
            prop_assert_eq!(rouge_l(&h2, &r2).unwrap(), rl);
            prop_assert_eq!(meteor_lite(&h2, &r2).unwrap(), me);
            prop_assert_eq!(rouge_l(&reversed(&h), &reversed(&r)).unwrap(), rl);
            let b_self = corpus_bleu(&h, &h).unwrap();
            for x in b_self.bleu.iter().filter(|x| **x > 0.0) {
                prop_assert!((x - 100.0).abs() < 1e-9);
            }
        }

        #[test]
        fn self_bleu_matches_brute_force((c, _) in arb_pair(), extra in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 1..5)) {
            let mut c = c;
            c.push(extra.into_iter().map(str::to_owned).collect());
            let fast = self_bleu(&c, 4, c.len()).unwrap();
            prop_assert!((fast - self_bleu_brute(&c, 4)).abs() < 1e-9);
        }
    }
}
