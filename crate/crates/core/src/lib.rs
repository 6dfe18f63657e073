//! Prompt-based in-domain text generation and back-translation data
//! augmentation for sign language gloss-to-text translation.
//!
//! The crate covers the whole corpus-engineering side of the workflow:
//!
//! * [`corpus`]: loading, vocabulary statistics and sampling;
//! * [`ngram`]: the interpolated n-gram model used as generator and scorer;
//! * [`pgen`]: tuning samples, generation prompts and corpus generation;
//! * [`selection`]: cross-entropy-difference data selection;
//! * [`translator`]: lexical back-translation and synthetic data mixing;
//! * [`metrics`]: BLEU, Self-BLEU, ROUGE-L, METEOR and bucketed analyses;
//! * [`analysis`]: word-frequency distributions, KL/JS divergence and a
//!   naive Bayes domain classifier;
//! * [`pipeline`]: configuration, end-to-end runs and sweeps.

pub mod analysis;
pub mod corpus;
mod error;
pub mod metrics;
pub mod ngram;
pub mod pgen;
pub mod pipeline;
mod process;
mod rng;
pub mod selection;
pub mod translator;

pub use corpus::{
    load_mono, load_parallel, sample_corpus, vocab_stats, Domain, MonoCorpus, ParallelCorpus, Sentence,
    SentencePair, VocabStats,
};
pub use error::{Error, Result};
pub use ngram::{cross_entropy, LmConfig, NGramModel, TokenScorer};
pub use pgen::{GenerationBackend, PromptConfig};
pub use process::LineProcess;
