//! Lexical back-translation.
//!
//! A text-to-gloss IBM Model 1 table is trained with EM, monolingual text is
//! translated with monotone greedy lexical decoding, and the resulting pseudo
//! pairs are mixed with the authentic data.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_lines, MonoCorpus, ParallelCorpus, Sentence, SentencePair, UNK};
use crate::error::{Error, Result};
use crate::process::LineProcess;
use crate::rng::{self, Purpose};

/// The empty source word every target word may align to.
pub const NULL: &str = "NULL";

/// `t(target | source)`, including the `NULL` source.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TranslationTable {
    t: BTreeMap<String, BTreeMap<String, f64>>,
}

impl TranslationTable {
    pub fn prob(&self, source: &str, target: &str) -> f64 {
        self.t
            .get(source)
            .and_then(|row| row.get(target))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn row(&self, source: &str) -> Option<&BTreeMap<String, f64>> {
        self.t.get(source)
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.t.keys().map(String::as_str)
    }

    /// Most probable target for `source`, ties to the lexicographically smallest.
    pub fn best(&self, source: &str) -> Option<(&str, f64)> {
        let row = self.t.get(source)?;
        let mut best: Option<(&str, f64)> = None;
        for (target, p) in row {
            if best.is_none_or(|(_, bp)| *p > bp) {
                best = Some((target, *p));
            }
        }
        best
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let lines = self
            .t
            .iter()
            .flat_map(|(s, row)| row.iter().map(move |(t, p)| format!("{s}\t{t}\t{p:e}")));
        write_lines(path.as_ref(), lines)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut t: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let p: f64 = fields[2]
                .parse()
                .map_err(|_| bad(format!("bad probability {:?}", fields[2])))?;
            if !(0.0..=1.0 + 1e-9).contains(&p) {
                return Err(bad(format!("probability {p} out of range")));
            }
            t.entry(fields[0].to_owned())
                .or_default()
                .insert(fields[1].to_owned(), p);
        }
        Ok(TranslationTable { t })
    }
}

/// A trained table together with the corpus log-likelihood before the first
/// iteration and after each one.
#[derive(Clone, Debug)]
pub struct Ibm1Training {
    pub table: TranslationTable,
    pub log_likelihoods: Vec<f64>,
}

/// Pairs per parallel work unit; fixed so that floating-point reduction order
/// does not depend on the thread count.
const EM_CHUNK: usize = 256;

struct Vocab {
    ids: HashMap<String, u32>,
    words: Vec<String>,
}

impl Vocab {
    fn new() -> Self {
        Vocab {
            ids: HashMap::new(),
            words: Vec::new(),
        }
    }

    fn id(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.ids.insert(w.to_owned(), id);
        self.words.push(w.to_owned());
        id
    }
}

/// Trains text-to-gloss IBM Model 1: source = text side with `NULL`
/// prepended, target = gloss side.
pub fn train_ibm1(parallel: &ParallelCorpus, iterations: usize) -> Result<TranslationTable> {
    train_ibm1_traced(parallel, iterations).map(|t| t.table)
}

pub fn train_ibm1_traced(parallel: &ParallelCorpus, iterations: usize) -> Result<Ibm1Training> {
    if iterations == 0 {
        return Err(Error::invalid("EM needs at least one iteration"));
    }
    if parallel.is_empty() {
        return Err(Error::invalid("cannot train on an empty corpus"));
    }
    let mut src_vocab = Vocab::new();
    let mut tgt_vocab = Vocab::new();
    let null = src_vocab.id(NULL);
    let pairs: Vec<(Vec<u32>, Vec<u32>)> = parallel
        .pairs()
        .iter()
        .map(|p| {
            let mut src = vec![null];
            src.extend(p.text.tokens().iter().map(|w| src_vocab.id(w)));
            let tgt = p.gloss.tokens().iter().map(|w| tgt_vocab.id(w)).collect();
            (src, tgt)
        })
        .collect();

    // Uniform start over the targets each source word co-occurs with.
    let mut cooc: HashMap<u32, Vec<u32>> = HashMap::new();
    for (src, tgt) in &pairs {
        for &e in src {
            cooc.entry(e).or_default().extend(tgt);
        }
    }
    let mut t: HashMap<(u32, u32), f64> = HashMap::new();
    for (e, mut fs) in cooc {
        fs.sort_unstable();
        fs.dedup();
        let p = 1.0 / fs.len() as f64;
        for f in fs {
            t.insert((e, f), p);
        }
    }

    let mut log_likelihoods = vec![log_likelihood(&pairs, &t)];
    for _ in 0..iterations {
        let partials: Vec<HashMap<(u32, u32), f64>> = pairs
            .par_chunks(EM_CHUNK)
            .map(|chunk| expected_counts(chunk, &t))
            .collect();
        let mut counts: HashMap<(u32, u32), f64> = HashMap::with_capacity(t.len());
        for partial in partials {
            // merge in chunk order; sort keys so the sum order is fixed
            let mut entries: Vec<((u32, u32), f64)> = partial.into_iter().collect();
            entries.sort_unstable_by_key(|(k, _)| *k);
            for (k, c) in entries {
                *counts.entry(k).or_default() += c;
            }
        }
        let mut totals: HashMap<u32, f64> = HashMap::new();
        let mut keys: Vec<(u32, u32)> = counts.keys().copied().collect();
        keys.sort_unstable();
        for k in &keys {
            *totals.entry(k.0).or_default() += counts[k];
        }
        t = keys
            .into_iter()
            .map(|k| (k, counts[&k] / totals[&k.0]))
            .collect();
        log_likelihoods.push(log_likelihood(&pairs, &t));
    }

    let mut table = TranslationTable::default();
    for ((e, f), p) in t {
        table
            .t
            .entry(src_vocab.words[e as usize].clone())
            .or_default()
            .insert(tgt_vocab.words[f as usize].clone(), p);
    }
    Ok(Ibm1Training {
        table,
        log_likelihoods,
    })
}

fn expected_counts(pairs: &[(Vec<u32>, Vec<u32>)], t: &HashMap<(u32, u32), f64>) -> HashMap<(u32, u32), f64> {
    let mut counts = HashMap::new();
    for (src, tgt) in pairs {
        for &f in tgt {
            let z: f64 = src.iter().map(|&e| t[&(e, f)]).sum();
            for &e in src {
                *counts.entry((e, f)).or_insert(0.0) += t[&(e, f)] / z;
            }
        }
    }
    counts
}

/// `sum_pairs sum_j ln( sum_i t(f_j | e_i) / (l + 1) )`, with `l + 1` the
/// source length including `NULL`.
fn log_likelihood(pairs: &[(Vec<u32>, Vec<u32>)], t: &HashMap<(u32, u32), f64>) -> f64 {
    pairs
        .iter()
        .map(|(src, tgt)| {
            let norm = (src.len() as f64).ln();
            tgt.iter()
                .map(|&f| src.iter().map(|&e| t[&(e, f)]).sum::<f64>().ln() - norm)
                .sum::<f64>()
        })
        .sum()
}

pub const DEFAULT_DROP_THRESHOLD: f64 = 0.3;

/// Monotone word-by-word decoding: each source token becomes its best target
/// unless that target's probability is below `drop_threshold` or the token
/// was never seen. An empty result becomes a single `[UNK]`.
pub fn translate_greedy(table: &TranslationTable, sentence: &Sentence, drop_threshold: f64) -> Sentence {
    let out: Vec<String> = sentence
        .tokens()
        .iter()
        .filter_map(|w| table.best(w))
        .filter(|(_, p)| *p >= drop_threshold)
        .map(|(t, _)| t.to_owned())
        .collect();
    if out.is_empty() {
        Sentence::new(vec![UNK.to_owned()]).expect("one token")
    } else {
        Sentence::new(out).expect("non-empty")
    }
}

/// Translates a sentence into the other language.
pub trait TranslatorBackend: Sync {
    fn translate(&self, sentence: &Sentence) -> Result<Sentence>;

    fn parallel_safe(&self) -> bool {
        true
    }
}

impl<F> TranslatorBackend for F
where
    F: Fn(&Sentence) -> Result<Sentence> + Sync,
{
    fn translate(&self, sentence: &Sentence) -> Result<Sentence> {
        self(sentence)
    }
}

/// The built-in back-translator backed by an IBM Model 1 table.
pub struct TableTranslator {
    pub table: TranslationTable,
    pub drop_threshold: f64,
}

impl TranslatorBackend for TableTranslator {
    fn translate(&self, sentence: &Sentence) -> Result<Sentence> {
        Ok(translate_greedy(&self.table, sentence, self.drop_threshold))
    }
}

/// A translator running as a child process, one sentence per line each way.
pub struct ExternalTranslator {
    process: LineProcess,
}

impl ExternalTranslator {
    pub fn spawn(command: &str) -> Result<Self> {
        Ok(ExternalTranslator {
            process: LineProcess::spawn(command)?,
        })
    }
}

impl TranslatorBackend for ExternalTranslator {
    fn translate(&self, sentence: &Sentence) -> Result<Sentence> {
        let reply = self.process.request(&sentence.to_string())?;
        Sentence::parse(&reply).ok_or_else(|| {
            Error::Backend(format!("{}: empty translation", self.process.command()))
        })
    }

    fn parallel_safe(&self) -> bool {
        false
    }
}

/// Pairs each text sentence with its translation into glosses.
pub fn back_translate<B: TranslatorBackend + ?Sized>(backend: &B, mono: &MonoCorpus) -> Result<ParallelCorpus> {
    let run = |(i, text): (usize, &Sentence)| {
        backend
            .translate(text)
            .map(|gloss| SentencePair {
                gloss,
                text: text.clone(),
            })
            .map_err(|e| match e {
                Error::Backend(msg) => Error::Backend(format!("sentence {i}: {msg}")),
                other => other,
            })
    };
    let pairs: Vec<SentencePair> = if backend.parallel_safe() {
        mono.sentences().par_iter().enumerate().map(run).collect::<Result<_>>()?
    } else {
        mono.sentences().iter().enumerate().map(run).collect::<Result<_>>()?
    };
    ParallelCorpus::new(format!("{}.bt", mono.name), pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    /// Synthetic pairs per authentic pair.
    pub ratio: usize,
    pub shuffle_seed: u64,
}

#[derive(Clone, Debug)]
pub struct Synthesized {
    pub train: ParallelCorpus,
    pub finetune: ParallelCorpus,
}

/// Mixes `ratio * |authentic|` synthetic pairs with the authentic ones into a
/// shuffled training set; the fine-tuning set is the authentic data as is.
pub fn synthesize(authentic: &ParallelCorpus, synthetic: &ParallelCorpus, plan: &SynthesisPlan) -> Result<Synthesized> {
    if plan.ratio == 0 {
        return Err(Error::invalid("synthesis ratio must be at least 1"));
    }
    let needed = plan.ratio * authentic.len();
    if synthetic.len() < needed {
        return Err(Error::invalid(format!(
            "ratio {} needs {needed} synthetic pairs, only {} available",
            plan.ratio,
            synthetic.len()
        )));
    }
    let mut train: Vec<SentencePair> = synthetic.pairs()[..needed]
        .iter()
        .chain(authentic.pairs())
        .cloned()
        .collect();
    let mut rng = rng::stream(plan.shuffle_seed, Purpose::Shuffle, 0);
    train.shuffle(&mut rng);
    Ok(Synthesized {
        train: ParallelCorpus::new(format!("{}.train", authentic.name), train)?,
        finetune: authentic.clone(),
    })
}
