//! Acceptance suite: one PASS/FAIL line per criterion, run on the bundled toy
//! fixture and on hand-computed oracles.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use pgen_core::analysis::{classify_corpus, held_out_accuracy, js_divergence, kl_divergence, train_domain_classifier, Distribution};
use pgen_core::metrics::{bleu_by_length, corpus_bleu, meteor_lite, rouge_l, self_bleu, BucketSpec, f1_by_frequency};
use pgen_core::pgen::permutation_count;
use pgen_core::pipeline::{run_pipeline, Manifest, PipelineConfig};
use pgen_core::selection::select_top;
use pgen_core::translator::{synthesize, train_ibm1_traced, SynthesisPlan};
use pgen_core::{load_mono, load_parallel, Domain, LmConfig, MonoCorpus, NGramModel, ParallelCorpus, Sentence, SentencePair, TokenScorer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy").join(name)
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn s(text: &str) -> Sentence {
    Sentence::parse(text).unwrap()
}

fn toks(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

fn dist(pairs: &[(&str, f64)]) -> Distribution {
    Distribution::from_weights(pairs.iter().map(|(w, p)| (*w, *p))).unwrap()
}

fn authentic_texts() -> MonoCorpus {
    load_parallel(fixture("authentic.train.tsv")).unwrap().text_side(Domain::Authentic)
}

struct ToyRun {
    dir: tempfile::TempDir,
    manifest: Manifest,
    elapsed: Duration,
}

fn toy_config() -> PipelineConfig {
    PipelineConfig::load(fixture("pipeline.json")).unwrap()
}

fn toy_run() -> &'static ToyRun {
    static RUN: OnceLock<ToyRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let manifest = run_pipeline(&toy_config(), dir.path(), 1).unwrap();
        ToyRun {
            dir,
            manifest,
            elapsed: start.elapsed(),
        }
    })
}

fn divergence_oracles() -> Check {
    let p = dist(&[("x", 0.5), ("y", 0.5)]);
    let q = dist(&[("x", 0.25), ("y", 0.75)]);
    let kl = kl_divergence(&p, &q);
    let kl_hand = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
    ensure((kl - kl_hand).abs() < 1e-12 && (kl - 0.14384).abs() < 1e-5, format!("KL = {kl}"))?;
    let js = js_divergence(&p, &q);
    let m = [0.375, 0.625];
    let js_hand = 0.5 * (0.5 * (0.5f64 / m[0]).ln() + 0.5 * (0.5f64 / m[1]).ln())
        + 0.5 * (0.25 * (0.25f64 / m[0]).ln() + 0.75 * (0.75f64 / m[1]).ln());
    ensure((js - js_hand).abs() < 1e-12 && (js - 0.03382).abs() < 1e-5, format!("JS = {js}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let words = ["a", "b", "c", "d", "e", "f", "g", "h"];
    let random = |rng: &mut ChaCha8Rng| {
        let w: Vec<(&str, f64)> = words
            .iter()
            .map(|w| (*w, if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() }))
            .collect();
        Distribution::from_weights(w).unwrap_or_else(|_| dist(&[("a", 1.0)]))
    };
    for i in 0..1000 {
        let (a, b) = (random(&mut rng), random(&mut rng));
        let (ab, ba) = (js_divergence(&a, &b), js_divergence(&b, &a));
        ensure(ab == ba, format!("pair {i}: asymmetric {ab} vs {ba}"))?;
        ensure((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&ab), format!("pair {i}: JS {ab} out of range"))?;
    }
    Ok(format!("KL {kl:.5}, JS {js:.5}, 1000 random pairs symmetric and <= ln 2"))
}

fn js_ordering() -> Check {
    let run = toy_run();
    let a = &run.manifest.analysis;
    let d = a.domain.as_ref().ok_or("pipeline reported no domain analysis")?;
    let detail = format!(
        "PGen {:.4} < selected {:.4} < general {:.4} in {:.1?}",
        a.js_to_authentic, d.js_selected, d.js_general, run.elapsed
    );
    ensure(a.js_to_authentic < d.js_selected && d.js_selected < d.js_general, format!("ordering broken: {detail}"))?;
    ensure(a.js_to_authentic < 0.5 * d.js_general, format!("PGen not below half of general: {detail}"))?;
    ensure(run.elapsed < Duration::from_secs(120), format!("too slow: {detail}"))?;
    Ok(detail)
}

fn classifier_separation() -> Check {
    let start = Instant::now();
    let general = load_mono(fixture("general.train.txt"), false).unwrap();
    let clf = train_domain_classifier(&authentic_texts(), &general, 1.0).map_err(|e| e.to_string())?;
    let test_in = load_parallel(fixture("authentic.test.tsv")).unwrap().text_side(Domain::Authentic);
    let test_gen = load_mono(fixture("general.test.txt"), false).unwrap();
    let acc = held_out_accuracy(&clf, &test_in, &test_gen);
    ensure(acc >= 0.95, format!("held-out accuracy {acc:.4}"))?;

    let pgen = load_mono(toy_run().dir.path().join("generated.txt"), false).unwrap();
    let frac = classify_corpus(&clf, &pgen).in_domain;
    ensure(frac >= 0.90, format!("PGen in-domain fraction {frac:.4}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), format!("too slow: {elapsed:?}"))?;
    Ok(format!("held-out accuracy {:.2}%, PGen in-domain {:.2}%", 100.0 * acc, 100.0 * frac))
}

struct Shifted<'a>(&'a NGramModel, f64);

impl TokenScorer for Shifted<'_> {
    fn token_log_probs(&self, tokens: &[String]) -> Vec<f64> {
        self.0.token_log_probs(tokens).into_iter().map(|l| l + self.1).collect()
    }
}

fn moore_lewis() -> Check {
    let test_in = load_parallel(fixture("authentic.test.tsv")).unwrap().text_side(Domain::Authentic);
    let test_gen = load_mono(fixture("general.test.txt"), false).unwrap();
    let in_domain: Vec<Sentence> = test_in.sentences()[..50].to_vec();
    let sentences: Vec<Sentence> = in_domain.iter().chain(&test_gen.sentences()[..50]).cloned().collect();
    let pool = MonoCorpus::new("pool", Domain::Other, sentences).unwrap();

    let cfg = LmConfig::default();
    let lm_in = NGramModel::train(authentic_texts().sentences(), &cfg).unwrap();
    let lm_gen = NGramModel::train(load_mono(fixture("general.train.txt"), false).unwrap().sentences(), &cfg).unwrap();
    let result = select_top(&pool, &lm_in, &lm_gen, 50).map_err(|e| e.to_string())?;
    let hits = result.selected.iter().filter(|x| in_domain.contains(x)).count();
    ensure(hits >= 45, format!("only {hits} of 50 selected are in-domain"))?;

    for c in [-2.5, 0.75, 3.0] {
        let moved = select_top(&pool, &Shifted(&lm_in, c), &lm_gen, 50).map_err(|e| e.to_string())?;
        ensure(moved.selected.sentences() == result.selected.sentences(), format!("shift {c} changed the selection"))?;
        for (a, b) in result.scored.iter().zip(&moved.scored) {
            ensure(a.position == b.position, format!("shift {c} reordered scores"))?;
            ensure((b.score - (a.score - c)).abs() < 1e-9, format!("shift {c}: {} -> {}", a.score, b.score))?;
        }
    }
    Ok(format!("{hits}/50 in-domain; shifts move every score by -c and keep the selection"))
}

fn metric_oracles() -> Check {
    let close = |name: &str, got: f64, want: f64| ensure((got - want).abs() < 1e-4, format!("{name} = {got}, expected {want}"));
    let bleu = corpus_bleu(&[toks("the cat")], &[toks("the cat sat")]).map_err(|e| e.to_string())?;
    close("BLEU-1", bleu.bleu[0], 100.0 * (1.0f64 - 1.5).exp())?;
    close("BLEU-1 rounded", (bleu.bleu[0] * 100.0).round() / 100.0, 60.65)?;
    let rouge = rouge_l(&[toks("a c d")], &[toks("a b c d")]).map_err(|e| e.to_string())?;
    close("ROUGE-L", rouge, 100.0 * 2.0 * 0.75 / 1.75)?;
    close("ROUGE-L rounded", (rouge * 100.0).round() / 100.0, 85.71)?;
    close("METEOR", meteor_lite(&[toks("a b")], &[toks("a b")]).map_err(|e| e.to_string())?, 93.75)?;
    close("METEOR single", meteor_lite(&[toks("a")], &[toks("a")]).map_err(|e| e.to_string())?, 50.0)?;
    let same = vec![toks("the cat sat on the mat"); 5];
    close("Self-BLEU", self_bleu(&same, 4, 5).map_err(|e| e.to_string())?, 100.0)?;
    Ok(format!("BLEU-1 {:.4}, ROUGE-L {rouge:.4}, METEOR 93.75/50.00, Self-BLEU 100", bleu.bleu[0]))
}

fn bucketed_analyses() -> Check {
    let spec = BucketSpec::default();
    let counts: BTreeMap<String, u64> = [("rare", 5u64), ("mid", 100), ("hot", 2000)]
        .into_iter()
        .map(|(w, c)| (w.to_owned(), c))
        .collect();
    let train = pgen_core::VocabStats::from_counts(counts);
    let refs = vec![toks("rare mid hot"), toks("hot hot mid")];
    let f1 = f1_by_frequency(&refs, &refs, &train, &spec).map_err(|e| e.to_string())?;
    ensure(f1.iter().all(|f| *f == Some(100.0)), format!("F1 with hyps = refs: {f1:?}"))?;

    ensure(spec.frequency_bucket(99) == 0 && spec.frequency_bucket(100) == 1, "frequency 100 not medium")?;
    ensure(spec.frequency_bucket(1999) == 1 && spec.frequency_bucket(2000) == 2, "frequency 2000 not high")?;
    ensure(spec.length_bucket(10) == 0 && spec.length_bucket(11) == 1, "length 10 not short")?;
    ensure(spec.length_bucket(20) == 1 && spec.length_bucket(21) == 2, "length 20 not medium")?;

    let short_ref = toks("w1 w2 w3 w4 w5 w6");
    let long_ref: Vec<String> = (0..15).map(|i| format!("w{i}")).collect();
    let refs = vec![short_ref.clone(), long_ref.clone(), short_ref.clone(), long_ref.clone()];
    let hyps = vec![
        toks("w1 w2 w3 w9 w5"),
        long_ref[..12].to_vec(),
        toks("w1 w3 w2 w4 w5 w6"),
        long_ref[2..].to_vec(),
    ];
    let per = bleu_by_length(&hyps, &refs, &spec).map_err(|e| e.to_string())?;
    let short = corpus_bleu(&[hyps[0].clone(), hyps[2].clone()], &[refs[0].clone(), refs[2].clone()]).unwrap();
    let medium = corpus_bleu(&[hyps[1].clone(), hyps[3].clone()], &[refs[1].clone(), refs[3].clone()]).unwrap();
    for (got, want) in [(&per[0], &short), (&per[1], &medium)] {
        let got = got.as_ref().ok_or("empty bucket")?;
        for n in 0..4 {
            ensure((got.bleu[n] - want.bleu[n]).abs() < 1e-9, format!("BLEU-{} {} vs {}", n + 1, got.bleu[n], want.bleu[n]))?;
        }
    }
    ensure(per[2].is_none(), "long bucket should be empty")?;
    Ok("F1 100 in every bucket, cut points exact, per-bucket BLEU equals manual splits".into())
}

fn parallel(pairs: &[(&str, &str)]) -> ParallelCorpus {
    ParallelCorpus::new(
        "toy",
        pairs
            .iter()
            .map(|(g, t)| SentencePair {
                gloss: s(g),
                text: s(t),
            })
            .collect(),
    )
    .unwrap()
}

fn ibm_model1() -> Check {
    let corpus = parallel(&[("X Y", "a b"), ("X", "a")]);
    let trained = train_ibm1_traced(&corpus, 20).map_err(|e| e.to_string())?;
    let t = trained.table.prob("a", "X");
    ensure(t >= 0.9, format!("t(X|a) = {t}"))?;
    let ll = &trained.log_likelihoods;
    ensure(ll.windows(2).all(|w| w[1] >= w[0] - 1e-12), format!("log-likelihood decreased: {ll:?}"))?;

    let fixture_table = train_ibm1_traced(&load_parallel(fixture("authentic.train.tsv")).unwrap(), 10).map_err(|e| e.to_string())?;
    ensure(
        fixture_table.log_likelihoods.windows(2).all(|w| w[1] >= w[0] - 1e-9),
        "fixture log-likelihood decreased",
    )?;
    for table in [&trained.table, &fixture_table.table] {
        for src in table.sources() {
            let total: f64 = table.row(src).unwrap().values().sum();
            ensure((total - 1.0).abs() < 1e-6, format!("row {src} sums to {total}"))?;
        }
    }
    Ok(format!("t(X|a) = {t:.4} after 20 iterations, log-likelihood monotone, rows normalized"))
}

fn combinatorics() -> Check {
    let p = |n, k| permutation_count(n, k).map_err(|e| e.to_string());
    ensure(p(5, 3)? == BigUint::from(20u32), "A(5, 2) != 20")?;
    for n in [1u64, 7, 7086] {
        ensure(p(n, 1)? == BigUint::from(1u32), format!("permutation_count({n}, 1) != 1"))?;
    }
    let big = p(7086, 20)?;
    ensure(big > BigUint::from(7086u32), "permutation_count(7086, 20) not above 7086")?;
    ensure(big > BigUint::from(7067u32).pow(19), "permutation_count(7086, 20) below 7067^19")?;
    Ok(format!("A(7086, 19) has {} decimal digits", big.to_string().len()))
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Check {
    let start = Instant::now();
    let first = toy_run();
    let reference = dir_contents(first.dir.path());
    for workers in [1, 4] {
        let dir = tempfile::tempdir().unwrap();
        run_pipeline(&toy_config(), dir.path(), workers).map_err(|e| e.to_string())?;
        let again = dir_contents(dir.path());
        ensure(
            again.keys().eq(reference.keys()),
            format!("workers = {workers}: file set differs: {:?}", again.keys().collect::<Vec<_>>()),
        )?;
        for (name, bytes) in &again {
            ensure(&reference[name] == bytes, format!("workers = {workers}: {name} differs"))?;
        }
    }
    let elapsed = start.elapsed() + first.elapsed;
    ensure(elapsed < Duration::from_secs(180), format!("too slow: {elapsed:?}"))?;
    Ok(format!("{} files byte-identical over three runs in {elapsed:.1?}", reference.len()))
}

fn scaling_bookkeeping() -> Check {
    let authentic = parallel(&vec![("G", "t"); 100]);
    let pairs: Vec<(String, String)> = (0..4000).map(|i| (format!("G{i}"), format!("t{i}"))).collect();
    let refs: Vec<(&str, &str)> = pairs.iter().map(|(g, t)| (g.as_str(), t.as_str())).collect();
    let synthetic = parallel(&refs);
    let out = synthesize(&authentic, &synthetic, &SynthesisPlan { ratio: 40, shuffle_seed: 3 }).map_err(|e| e.to_string())?;

    let dir = tempfile::tempdir().unwrap();
    pgen_core::corpus::write_parallel(dir.path().join("train.tsv"), &out.train).unwrap();
    pgen_core::corpus::write_parallel(dir.path().join("finetune.tsv"), &out.finetune).unwrap();
    let lines = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap().lines().count();
    let (train, finetune) = (lines("train.tsv"), lines("finetune.tsv"));
    ensure(train == 4100 && finetune == 100, format!("train {train}, finetune {finetune}"))?;

    let sizes = &toy_run().manifest.sizes;
    ensure(
        sizes.train == (toy_config().ratio + 1) * sizes.authentic,
        format!("toy manifest train size {} for N = {}", sizes.train, sizes.authentic),
    )?;
    Ok(format!("R = 40, N = 100: train {train}, finetune {finetune}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("divergence oracles", divergence_oracles),
        ("JS ordering PGen < selected < general", js_ordering),
        ("domain classifier separation", classifier_separation),
        ("Moore-Lewis selection", moore_lewis),
        ("metric unit oracles", metric_oracles),
        ("bucketed analyses", bucketed_analyses),
        ("IBM Model 1", ibm_model1),
        ("PGen combinatorics", combinatorics),
        ("pipeline determinism", determinism),
        ("scaling bookkeeping", scaling_bookkeeping),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                println!("FAIL {:>2} {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
