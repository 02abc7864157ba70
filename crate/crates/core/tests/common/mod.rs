#![allow(dead_code)]

use std::path::Path;

use slorag::corpus::{parse_squad, Corpus, Paragraph, QuestionExample};
use slorag::features::FeatureSpec;
use slorag::generation::SimulatedBackend;
use slorag::logstore::{read_log, run_sweep, LogDataset, SweepOptions};
use slorag::retriever::InvertedIndex;
use slorag::synth::{self, SynthConfig};

pub fn paragraphs(texts: &[&str]) -> Vec<Paragraph> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Paragraph { id: i as u32, text: t.to_string(), title: format!("t{i}") })
        .collect()
}

pub fn question(qid: &str, text: &str, golds: &[&str], source: u32) -> QuestionExample {
    QuestionExample {
        qid: qid.into(),
        question: text.into(),
        answerable: !golds.is_empty(),
        gold_answers: golds.iter().map(|g| g.to_string()).collect(),
        source_paragraph: source,
    }
}

pub fn desk_corpus() -> Corpus {
    parse_squad(&synth::generate_bytes(&SynthConfig::default())).expect("synthetic corpus parses")
}

pub fn small_desk_corpus(articles: usize) -> Corpus {
    parse_squad(&synth::generate_bytes(&SynthConfig { articles, ..SynthConfig::default() })).unwrap()
}

pub fn sweep_options(sample_size: usize, seed: u64) -> SweepOptions {
    SweepOptions {
        sample_size,
        seed,
        features: FeatureSpec::new(32),
        max_fail_fraction: 0.1,
        max_in_flight: 2,
        corpus_hash: "c".into(),
        config_hash: "k".into(),
    }
}

/// Simulated sweep written to `dir/sweep.jsonl` and read back.
pub fn sim_log(corpus: &Corpus, sample_size: usize, seed: u64, dir: &Path) -> LogDataset {
    let index = InvertedIndex::build(&corpus.paragraphs).unwrap();
    let path = dir.join("sweep.jsonl");
    run_sweep(&corpus.questions, corpus, &index, &SimulatedBackend, &sweep_options(sample_size, seed), &path).unwrap();
    read_log(&path).unwrap()
}

/// Naive Okapi scorer over raw token lists (k1 = 1.5, b = 0.75).
pub fn naive_bm25(docs: &[Vec<String>], query: &[String]) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    docs.iter()
        .map(|d| {
            let mut s = 0.0;
            for t in query {
                let tf = d.iter().filter(|w| *w == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|e| e.contains(t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                s += idf * tf * 2.5 / (tf + 1.5 * (0.25 + 0.75 * d.len() as f64 / avgdl));
            }
            s
        })
        .collect()
}

/// Positive scorers, best first, ties by ascending id.
pub fn naive_ranking(scores: &[f64]) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..scores.len() as u32).filter(|&i| scores[i as usize] > 0.0).collect();
    ids.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    ids
}

/// Label 3 when feature 0 exceeds 0.2, else 0; three noise columns.
pub fn separable_set(n: usize, seed: u64) -> slorag::policy::LabeledSet {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut set = slorag::policy::LabeledSet { features: Vec::new(), labels: Vec::new(), margins: Vec::new() };
    for _ in 0..n {
        let x0: f64 = rng.random_range(-1.0..1.0);
        let mut x = vec![x0];
        x.extend((0..3).map(|_| rng.random_range(-1.0..1.0)));
        set.labels.push(if x0 > 0.2 { 3 } else { 0 });
        set.features.push(x);
        set.margins.push(1.0);
    }
    set
}

fn fd_close(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    // Entries near zero are compared absolutely; FD noise there is ~1e-10.
    if scale < 1e-6 {
        (analytic - numeric).abs() < 1e-9
    } else {
        (analytic - numeric).abs() / scale < 1e-4
    }
}

/// Compares analytic gradients with central differences (step 1e-6) on
/// `trials` random models and batches, alternating CE and CE-WT. Returns the
/// worst relative error seen, or a description of the first mismatch.
pub fn gradient_check(trials: usize, seed: u64) -> Result<f64, String> {
    use rand::{Rng, SeedableRng};
    use slorag::policy::{ce_loss_and_grad, example_weights, Example, Objective, PolicyModel};
    use slorag::NUM_ACTIONS;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let dim = rng.random_range(2..8);
        let mut model = PolicyModel::zeros(dim, Objective::ArgmaxCe, "p", 0);
        model.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        model.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let n = rng.random_range(1..12);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..NUM_ACTIONS)).collect();
        let margins: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.5)).collect();
        let objective = if trial % 2 == 0 { Objective::ArgmaxCe } else { Objective::ArgmaxCeWt };
        let weights = example_weights(objective, &margins);
        let batch: Vec<Example<'_>> = xs
            .iter()
            .zip(&labels)
            .zip(&weights)
            .map(|((x, &label), &weight)| Example { features: x, label, weight })
            .collect();
        let l2 = 1e-3;
        let (_, grad) = ce_loss_and_grad(&model, &batch, l2).map_err(|e| e.to_string())?;
        let loss_at = |m: &PolicyModel| ce_loss_and_grad(m, &batch, l2).unwrap().0;

        let mut check = |name: String, analytic: f64, plus: PolicyModel, minus: PolicyModel| {
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let scale = analytic.abs().max(numeric.abs());
            if scale >= 1e-6 {
                worst = worst.max((analytic - numeric).abs() / scale);
            }
            if fd_close(analytic, numeric) {
                Ok(())
            } else {
                Err(format!("trial {trial} {name}: analytic {analytic} vs numeric {numeric}"))
            }
        };
        for i in 0..model.weights.len() {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            plus.weights[i] += h;
            minus.weights[i] -= h;
            check(format!("w{i}"), grad.weights[i], plus, minus)?;
        }
        for a in 0..NUM_ACTIONS {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            plus.bias[a] += h;
            minus.bias[a] -= h;
            check(format!("b{a}"), grad.bias[a], plus, minus)?;
        }
    }
    Ok(worst)
}
