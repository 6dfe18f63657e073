//! Cross-entropy-difference (Moore-Lewis) data selection.
//!
//! A sentence scores `H_in(s) - H_gen(s)` in nats per token; lower scores are
//! more in-domain. The general-domain model is normally trained on the pool
//! being selected from.

use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{write_lines, Domain, MonoCorpus, Sentence};
use crate::error::{Error, Result};
use crate::ngram::{cross_entropy, TokenScorer};

pub fn moore_lewis_score<I, G>(sentence: &Sentence, lm_in: &I, lm_gen: &G) -> f64
where
    I: TokenScorer + ?Sized,
    G: TokenScorer + ?Sized,
{
    cross_entropy(lm_in, sentence.tokens()) - cross_entropy(lm_gen, sentence.tokens())
}

#[derive(Clone, Debug)]
pub struct ScoredSentence {
    pub sentence: Sentence,
    pub score: f64,
    /// Position in the pool.
    pub position: usize,
}

#[derive(Clone, Debug)]
pub struct SelectionResult {
    /// Ascending by score, ties in pool order.
    pub scored: Vec<ScoredSentence>,
    /// The best `n` sentences, in pool order.
    pub selected: MonoCorpus,
}

impl SelectionResult {
    /// Writes `score<TAB>sentence` lines, best first.
    pub fn write_scores(&self, path: impl AsRef<Path>) -> Result<()> {
        write_lines(
            path.as_ref(),
            self.scored
                .iter()
                .map(|s| format!("{:.6}\t{}", s.score, s.sentence)),
        )
    }
}

/// Scores every pool sentence and keeps the `n` lowest.
pub fn select_top<I, G>(pool: &MonoCorpus, lm_in: &I, lm_gen: &G, n: usize) -> Result<SelectionResult>
where
    I: TokenScorer + Sync + ?Sized,
    G: TokenScorer + Sync + ?Sized,
{
    if n == 0 || n > pool.len() {
        return Err(Error::invalid(format!(
            "selection size {n} out of range 1..={}",
            pool.len()
        )));
    }
    let mut scored: Vec<ScoredSentence> = pool
        .sentences()
        .par_iter()
        .enumerate()
        .map(|(position, s)| ScoredSentence {
            sentence: s.clone(),
            score: moore_lewis_score(s, lm_in, lm_gen),
            position,
        })
        .collect();
    scored.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.position.cmp(&b.position)));

    let mut chosen: Vec<&ScoredSentence> = scored[..n].iter().collect();
    chosen.sort_by_key(|s| s.position);
    let selected = MonoCorpus::new(
        format!("{}.selected", pool.name),
        Domain::Selected,
        chosen.into_iter().map(|s| s.sentence.clone()).collect(),
    )?;
    Ok(SelectionResult { scored, selected })
}
