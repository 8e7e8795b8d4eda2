//! Desk-scale end-to-end run on the built-in synthetic corpus.

use std::time::{Duration, Instant};

use cycletrans::corpus::{encode_all, synth_corpus, TemplateSpec, Vocabulary};
use cycletrans::cycle_trainer::{pretrain_all, run_cycles, RewardLogEntry, TrainConfig};
use cycletrans::evalkit::{content_bleu, train_eval_classifier, transfer_accuracy, TextCnnConfig};
use cycletrans::nn::train::{FitOptions, Workers};
use cycletrans::reward::sentence_bleu;

pub const CORPUS_SEED: u64 = 7;

pub fn config() -> TrainConfig {
    TrainConfig {
        iterations: 1000,
        batch_size: 16,
        hidden_size: 32,
        embedding_size: 32,
        classifier_epochs: 5,
        neutralizer_epochs: 1,
        emotionalizer_epochs: 8,
        seed: 1,
        ..TrainConfig::default()
    }
}

pub struct E2eOutcome {
    pub corpus_size: usize,
    pub vocab_size: usize,
    pub transfer_accuracy: f64,
    pub content_bleu: f64,
    pub mean_sentence_bleu: f64,
    pub removal_rate: f64,
    pub rc_first: f64,
    pub rc_last: f64,
    pub eval_test_accuracy: f64,
    pub reward_log: String,
    pub elapsed: Duration,
}

pub fn run_e2e(workers: usize) -> E2eOutcome {
    let start = Instant::now();
    let corpus = synth_corpus(&TemplateSpec::desk_default(), CORPUS_SEED).unwrap();
    let toks: Vec<Vec<String>> = corpus.train.iter().map(|s| s.tokens.clone()).collect();
    let vocab = Vocabulary::build(&toks, 50_000);
    let train = encode_all(&corpus.train, &vocab);
    let test = encode_all(&corpus.test, &vocab);
    let cfg = config();
    let w = Workers::new(workers).unwrap();

    let (mut models, _) = pretrain_all(&train, vocab.len(), &cfg, &w).unwrap();
    let log = run_cycles(&mut models, &train, &cfg, &w, |_, _| Ok(())).unwrap();

    let mut removed = 0;
    let mut generated = Vec::new();
    let mut sources = Vec::new();
    let mut targets = Vec::new();
    for (s, e) in corpus.test.iter().zip(&test) {
        let n = models.neutralizer.greedy(&e.tokens).unwrap();
        let positions = s.emotional_positions.as_ref().unwrap();
        if positions.iter().all(|&p| !n.mask[p]) {
            removed += 1;
        }
        let target = e.sentiment.opposite();
        generated.push(models.emotionalizer.generate(&n.kept_tokens, target).tokens);
        sources.push(e.tokens.clone());
        targets.push(target);
    }

    let cnn = TextCnnConfig::new(vocab.len(), 32, 3);
    let opts = FitOptions { epochs: 3, batch_size: 16, clip_norm: 2.0 };
    let (clf, _) = train_eval_classifier(&train, cnn, 0.6, &opts, &w).unwrap();

    let mean_rc = |entries: &[RewardLogEntry]| entries.iter().map(|e| e.mean_rc).sum::<f64>() / entries.len() as f64;
    let k = log.len().min(100);
    let reward_log = log.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect();
    let n = test.len() as f64;
    E2eOutcome {
        corpus_size: corpus.len(),
        vocab_size: vocab.len(),
        transfer_accuracy: transfer_accuracy(&generated, &targets, &clf).unwrap(),
        content_bleu: content_bleu(&generated, &sources).unwrap(),
        mean_sentence_bleu: generated.iter().zip(&sources).map(|(g, s)| sentence_bleu(g, s)).sum::<f64>() / n,
        removal_rate: removed as f64 / n,
        rc_first: mean_rc(&log[..k]),
        rc_last: mean_rc(&log[log.len() - k..]),
        eval_test_accuracy: clf.accuracy(&test),
        reward_log,
        elapsed: start.elapsed(),
    }
}
