//! Monolingual and parallel corpora: loading, serialization, vocabulary
//! statistics and seeded subsampling.
//!
//! Tokenization is whitespace splitting only. Corpora are immutable once
//! built; every operation that involves randomness takes an explicit seed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Delimiter between concatenated sentences in prompts and tuning samples.
pub const SEP: &str = "[SEP]";
/// End of a tuning sample / generated continuation.
pub const EOS: &str = "[EOS]";
/// Out-of-vocabulary placeholder.
pub const UNK: &str = "[UNK]";
/// Left padding used by the n-gram model.
pub const BOS: &str = "[BOS]";

pub const RESERVED: [&str; 4] = [SEP, EOS, UNK, BOS];

pub fn is_reserved(token: &str) -> bool {
    RESERVED.contains(&token)
}

/// A non-empty sequence of whitespace-free tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Sentence(Vec<String>);

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::invalid("sentence must contain at least one token"));
        }
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::invalid(format!("malformed token {bad:?}")));
        }
        Ok(Sentence(tokens))
    }

    /// Splits on runs of whitespace. Returns `None` for blank input.
    pub fn parse(line: &str) -> Option<Self> {
        let tokens: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if tokens.is_empty() {
            None
        } else {
            Some(Sentence(tokens))
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    fn lowercased(self) -> Self {
        Sentence(self.0.into_iter().map(|t| t.to_lowercase()).collect())
    }
}

impl TryFrom<Vec<String>> for Sentence {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Sentence::new(tokens)
    }
}

impl From<Sentence> for Vec<String> {
    fn from(s: Sentence) -> Self {
        s.0
    }
}

impl AsRef<[String]> for Sentence {
    fn as_ref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Where a monolingual corpus came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Authentic,
    Pgen,
    Selected,
    General,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonoCorpus {
    pub name: String,
    pub domain: Domain,
    sentences: Vec<Sentence>,
}

impl MonoCorpus {
    pub fn new(name: impl Into<String>, domain: Domain, sentences: Vec<Sentence>) -> Result<Self> {
        let name = name.into();
        if sentences.is_empty() {
            return Err(Error::invalid(format!("corpus {name:?} is empty")));
        }
        Ok(MonoCorpus {
            name,
            domain,
            sentences,
        })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sentence> {
        self.sentences.iter()
    }

    pub fn with_label(mut self, name: impl Into<String>, domain: Domain) -> Self {
        self.name = name.into();
        self.domain = domain;
        self
    }

    pub fn total_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

impl<'a> IntoIterator for &'a MonoCorpus {
    type Item = &'a Sentence;
    type IntoIter = std::slice::Iter<'a, Sentence>;

    fn into_iter(self) -> Self::IntoIter {
        self.sentences.iter()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub gloss: Sentence,
    pub text: Sentence,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub name: String,
    pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    pub fn new(name: impl Into<String>, pairs: Vec<SentencePair>) -> Result<Self> {
        let name = name.into();
        if pairs.is_empty() {
            return Err(Error::invalid(format!("parallel corpus {name:?} is empty")));
        }
        Ok(ParallelCorpus { name, pairs })
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The text side as a monolingual corpus.
    pub fn text_side(&self, domain: Domain) -> MonoCorpus {
        MonoCorpus {
            name: self.name.clone(),
            domain,
            sentences: self.pairs.iter().map(|p| p.text.clone()).collect(),
        }
    }

    pub fn gloss_side(&self, domain: Domain) -> MonoCorpus {
        MonoCorpus {
            name: self.name.clone(),
            domain,
            sentences: self.pairs.iter().map(|p| p.gloss.clone()).collect(),
        }
    }
}

/// A loaded corpus together with the number of blank lines that were skipped.
#[derive(Debug)]
pub struct Loaded<T> {
    pub corpus: T,
    pub skipped: usize,
}

fn corpus_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn check_reserved(path: &Path, line: usize, s: &Sentence) -> Result<()> {
    if let Some(t) = s.tokens().iter().find(|t| *t == SEP || *t == EOS) {
        return Err(Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("reserved token {t} in input"),
        });
    }
    Ok(())
}

/// Reads one sentence per line from any reader. `path` is used for messages.
pub fn read_mono<R: BufRead>(reader: R, path: &Path, lowercase: bool) -> Result<Loaded<MonoCorpus>> {
    let mut sentences = Vec::new();
    let mut skipped = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        match Sentence::parse(&line) {
            Some(s) => {
                let s = if lowercase { s.lowercased() } else { s };
                check_reserved(path, i + 1, &s)?;
                sentences.push(s);
            }
            None => skipped += 1,
        }
    }
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus(path.to_owned()));
    }
    Ok(Loaded {
        corpus: MonoCorpus {
            name: corpus_name(path),
            domain: Domain::Other,
            sentences,
        },
        skipped,
    })
}

pub fn load_mono_report(path: impl AsRef<Path>, lowercase: bool) -> Result<Loaded<MonoCorpus>> {
    let path = path.as_ref();
    let loaded = read_mono(open(path)?, path, lowercase)?;
    if loaded.skipped > 0 {
        log::warn!("{}: skipped {} blank lines", path.display(), loaded.skipped);
    }
    Ok(loaded)
}

/// Loads a monolingual corpus, one whitespace-tokenized sentence per line.
pub fn load_mono(path: impl AsRef<Path>, lowercase: bool) -> Result<MonoCorpus> {
    load_mono_report(path, lowercase).map(|l| l.corpus)
}

pub fn read_parallel<R: BufRead>(reader: R, path: &Path) -> Result<ParallelCorpus> {
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            message,
        };
        let tabs = line.matches('\t').count();
        if tabs != 1 {
            return Err(parse_err(format!("expected exactly one tab, found {tabs}")));
        }
        let (gloss, text) = line.split_once('\t').expect("one tab");
        let gloss = Sentence::parse(gloss).ok_or_else(|| parse_err("empty gloss side".into()))?;
        let text = Sentence::parse(text).ok_or_else(|| parse_err("empty text side".into()))?;
        check_reserved(path, lineno, &gloss)?;
        check_reserved(path, lineno, &text)?;
        pairs.push(SentencePair { gloss, text });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus(path.to_owned()));
    }
    Ok(ParallelCorpus {
        name: corpus_name(path),
        pairs,
    })
}

/// Loads a `gloss<TAB>text` file.
pub fn load_parallel(path: impl AsRef<Path>) -> Result<ParallelCorpus> {
    let path = path.as_ref();
    read_parallel(open(path)?, path)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn write_lines<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: fmt::Display,
{
    let mut w = create(path)?;
    for line in lines {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_mono(path: impl AsRef<Path>, corpus: &MonoCorpus) -> Result<()> {
    write_lines(path.as_ref(), corpus.iter())
}

pub fn write_parallel(path: impl AsRef<Path>, corpus: &ParallelCorpus) -> Result<()> {
    write_lines(
        path.as_ref(),
        corpus.pairs().iter().map(|p| format!("{}\t{}", p.gloss, p.text)),
    )
}

/// Word counts over a corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VocabStats {
    pub counts: BTreeMap<String, u64>,
    pub total_tokens: u64,
    /// Words by descending count, ties broken lexicographically.
    pub rank_order: Vec<String>,
}

impl VocabStats {
    pub fn from_counts(counts: BTreeMap<String, u64>) -> Self {
        let total_tokens = counts.values().sum();
        let mut rank_order: Vec<String> = counts.keys().cloned().collect();
        // BTreeMap keys are already sorted, so a stable sort keeps ties lexicographic.
        rank_order.sort_by(|a, b| counts[b].cmp(&counts[a]));
        VocabStats {
            counts,
            total_tokens,
            rank_order,
        }
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (w, c) in &self.counts {
            map.insert(w.clone(), (*c).into());
        }
        map.insert("_total".into(), self.total_tokens.into());
        serde_json::Value::Object(map)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::invalid("vocabulary stats must be a JSON object"))?;
        let mut counts = BTreeMap::new();
        for (k, v) in obj {
            let c = v
                .as_u64()
                .ok_or_else(|| Error::invalid(format!("count for {k:?} is not an integer")))?;
            if k != "_total" {
                counts.insert(k.clone(), c);
            }
        }
        let stats = VocabStats::from_counts(counts);
        if let Some(total) = obj.get("_total").and_then(|v| v.as_u64()) {
            if total != stats.total_tokens {
                return Err(Error::invalid(format!(
                    "_total {total} does not match summed counts {}",
                    stats.total_tokens
                )));
            }
        }
        Ok(stats)
    }
}

pub fn vocab_stats(corpus: &MonoCorpus) -> VocabStats {
    count_tokens(corpus.iter())
}

pub(crate) fn count_tokens<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> VocabStats {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for s in sentences {
        for t in s.tokens() {
            *counts.entry(t.clone()).or_default() += 1;
        }
    }
    VocabStats::from_counts(counts)
}

/// Uniform sample of `n` sentences without replacement, kept in corpus order.
pub fn sample_corpus(corpus: &MonoCorpus, n: usize, seed: u64) -> Result<MonoCorpus> {
    if n == 0 || n > corpus.len() {
        return Err(Error::invalid(format!(
            "sample size {n} out of range 1..={}",
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, corpus.len(), n).into_vec();
    picked.sort_unstable();
    Ok(MonoCorpus {
        name: corpus.name.clone(),
        domain: corpus.domain,
        sentences: picked.into_iter().map(|i| corpus.sentences[i].clone()).collect(),
    })
}
