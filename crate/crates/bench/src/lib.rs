//! Shared inputs for the criterion benchmarks.

use pgen_core::{Domain, MonoCorpus, ParallelCorpus, Sentence, SentencePair};

/// A deterministic corpus of `n` sentences over a `vocab`-word vocabulary.
pub fn synthetic_corpus(n: usize, vocab: usize) -> MonoCorpus {
    let sentences = (0..n)
        .map(|i| {
            let len = 5 + i % 11;
            let tokens = (0..len)
                .map(|j| format!("w{}", (i * 7 + j * 13 + i * j) % vocab))
                .collect();
            Sentence::new(tokens).expect("non-empty")
        })
        .collect();
    MonoCorpus::new("bench", Domain::Other, sentences).expect("non-empty corpus")
}

/// Pairs `synthetic_corpus` text with an uppercased, reversed pseudo gloss.
pub fn synthetic_parallel(n: usize, vocab: usize) -> ParallelCorpus {
    let pairs = synthetic_corpus(n, vocab)
        .iter()
        .map(|text| {
            let gloss = text.tokens().iter().rev().map(|t| t.to_uppercase()).collect();
            SentencePair {
                gloss: Sentence::new(gloss).expect("non-empty"),
                text: text.clone(),
            }
        })
        .collect();
    ParallelCorpus::new("bench", pairs).expect("non-empty corpus")
}
