//! Cycled reinforcement training of the neutralizer and emotionalizer.
//!
//! Each step samples a neutral mask per sentence, reconstructs the sentence
//! with its own sentiment and transfers it to the opposite one, scores both
//! outputs with BLEU against the source and the frozen classifier's
//! confidence, then applies a policy-gradient update to the neutralizer and a
//! likelihood update to the emotionalizer.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attn_classifier::{AttnClassifier, ClassifierConfig};
use crate::corpus::{Example, Sentiment};
use crate::emotionalizer::{reconstruction_pairs, Emotionalizer, EmotionalizerConfig, Reconstruction, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::neutralizer::{sample_mask, tag_with_classifier, Neutralizer, NeutralizerConfig};
use crate::nn::train::{FitOptions, TrainReport, Workers};
use crate::nn::{Checkpoint, Gradients};
use crate::reward::{sentence_bleu, RewardRecord, DEFAULT_BETA};

pub const CLASSIFIER_FILE: &str = "classifier.ckpt.json";
pub const NEUTRALIZER_FILE: &str = "neutralizer.ckpt.json";
pub const EMOTIONALIZER_FILE: &str = "emotionalizer.ckpt.json";
pub const CONFIG_FILE: &str = "train_config.json";
pub const REWARD_LOG_FILE: &str = "reward_log.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Number of cycled iterations (minibatches).
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub vocab_cap: usize,
    pub clip_norm: f64,
    pub beta: f64,
    pub classifier_epochs: usize,
    pub neutralizer_epochs: usize,
    pub emotionalizer_epochs: usize,
    pub seed: u64,
    pub baseline_decay: f64,
    /// `false` gives plain REINFORCE without a baseline.
    pub use_baseline: bool,
    pub max_len: usize,
    /// Write the checkpoint triplet every this many iterations; 0 writes only at the end.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10_000,
            batch_size: 64,
            learning_rate: 0.6,
            hidden_size: 256,
            embedding_size: 128,
            vocab_cap: 50_000,
            clip_norm: 2.0,
            beta: DEFAULT_BETA,
            classifier_epochs: 10,
            neutralizer_epochs: 1,
            emotionalizer_epochs: 4,
            seed: 0,
            baseline_decay: 0.95,
            use_baseline: true,
            max_len: DEFAULT_MAX_LEN,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn yelp() -> Self {
        TrainConfig::default()
    }

    pub fn amazon() -> Self {
        TrainConfig { neutralizer_epochs: 3, emotionalizer_epochs: 5, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("hidden_size", self.hidden_size),
            ("embedding_size", self.embedding_size),
            ("vocab_cap", self.vocab_cap),
            ("max_len", self.max_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate must be finite and non-negative"));
        }
        if !(self.clip_norm > 0.0) || !(self.beta > 0.0) {
            return Err(Error::validation("clip_norm and beta must be positive"));
        }
        if !(0.0..=1.0).contains(&self.baseline_decay) {
            return Err(Error::validation("baseline_decay must lie in [0, 1]"));
        }
        Ok(())
    }

    fn fit_options(&self, epochs: usize) -> FitOptions {
        FitOptions { epochs, batch_size: self.batch_size, clip_norm: self.clip_norm }
    }
}

/// Independent random stream for each stage of the pipeline, so that stages
/// run separately reproduce an in-process run.
pub fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stage as u64);
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    ClassifierInit = 1,
    ClassifierFit,
    NeutralizerInit,
    NeutralizerFit,
    EmotionalizerInit,
    EmotionalizerFit,
    Cycle,
}

/// Exponential moving average of the combined reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub value: Option<f64>,
    pub decay: f64,
}

impl BaselineState {
    pub fn new(decay: f64) -> Self {
        BaselineState { value: None, decay }
    }

    pub fn get(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }
}

pub fn update_baseline(state: BaselineState, rc: f64) -> BaselineState {
    let value = match state.value {
        None => rc,
        Some(b) => state.decay * b + (1.0 - state.decay) * rc,
    };
    BaselineState { value: Some(value), ..state }
}

/// `(R_c − b) · ∇ log P(mask)`: an ascent direction on expected reward.
pub fn policy_gradient(log_prob_grad: &Gradients, rc: f64, baseline: f64) -> Gradients {
    let mut g = log_prob_grad.clone();
    g.scale(rc - baseline);
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub classifier: AttnClassifier,
    pub neutralizer: Neutralizer,
    pub emotionalizer: Emotionalizer,
}

impl Models {
    pub fn save(&self, dir: &Path, vocab_hash: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.classifier.to_checkpoint(vocab_hash).save(&dir.join(CLASSIFIER_FILE))?;
        self.neutralizer.to_checkpoint(vocab_hash).save(&dir.join(NEUTRALIZER_FILE))?;
        self.emotionalizer.to_checkpoint(vocab_hash).save(&dir.join(EMOTIONALIZER_FILE))?;
        Ok(())
    }

    pub fn load(dir: &Path, learning_rate: f64) -> Result<Self> {
        let load = |name: &str| {
            let path = dir.join(name);
            Checkpoint::load(&path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
        };
        let c = load(CLASSIFIER_FILE)?;
        let n = load(NEUTRALIZER_FILE)?;
        let e = load(EMOTIONALIZER_FILE)?;
        if c.vocab_hash != n.vocab_hash || c.vocab_hash != e.vocab_hash {
            return Err(Error::Checkpoint("checkpoints were built with different vocabularies".into()));
        }
        Ok(Models {
            classifier: AttnClassifier::from_checkpoint(&c, learning_rate)?,
            neutralizer: Neutralizer::from_checkpoint(&n, learning_rate)?,
            emotionalizer: Emotionalizer::from_checkpoint(&e, learning_rate)?,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReports {
    pub classifier: TrainReport,
    pub neutralizer: TrainReport,
    pub emotionalizer: TrainReport,
}

pub fn pretrain_classifier(train: &[Example], vocab_size: usize, cfg: &TrainConfig, workers: &Workers) -> Result<(AttnClassifier, TrainReport)> {
    let seed = stage_rng(cfg.seed, Stage::ClassifierInit).gen();
    let mut c = AttnClassifier::new(
        ClassifierConfig { vocab_size, embedding_size: cfg.embedding_size, hidden_size: cfg.hidden_size, seed },
        cfg.learning_rate,
    );
    let report = c.train(train, &cfg.fit_options(cfg.classifier_epochs), workers, &mut stage_rng(cfg.seed, Stage::ClassifierFit))?;
    Ok((c, report))
}

pub fn pretrain_neutralizer(
    train: &[Example],
    classifier: &AttnClassifier,
    cfg: &TrainConfig,
    workers: &Workers,
) -> Result<(Neutralizer, TrainReport)> {
    let data = tag_with_classifier(train, classifier)?;
    let seed = stage_rng(cfg.seed, Stage::NeutralizerInit).gen();
    let mut n = Neutralizer::new(
        NeutralizerConfig {
            vocab_size: classifier.config.vocab_size,
            embedding_size: cfg.embedding_size,
            hidden_size: cfg.hidden_size,
            seed,
        },
        cfg.learning_rate,
    );
    let report = n.pretrain(&data, &cfg.fit_options(cfg.neutralizer_epochs), workers, &mut stage_rng(cfg.seed, Stage::NeutralizerFit))?;
    Ok((n, report))
}

pub fn pretrain_emotionalizer(
    train: &[Example],
    classifier: &AttnClassifier,
    cfg: &TrainConfig,
    workers: &Workers,
) -> Result<(Emotionalizer, TrainReport)> {
    let data = reconstruction_pairs(train, classifier)?;
    let seed = stage_rng(cfg.seed, Stage::EmotionalizerInit).gen();
    let mut e = Emotionalizer::new(
        EmotionalizerConfig {
            vocab_size: classifier.config.vocab_size,
            embedding_size: cfg.embedding_size,
            hidden_size: cfg.hidden_size,
            max_len: cfg.max_len,
            seed,
        },
        cfg.learning_rate,
    );
    let report = e.pretrain(&data, &cfg.fit_options(cfg.emotionalizer_epochs), workers, &mut stage_rng(cfg.seed, Stage::EmotionalizerFit))?;
    Ok((e, report))
}

pub fn pretrain_all(train: &[Example], vocab_size: usize, cfg: &TrainConfig, workers: &Workers) -> Result<(Models, PretrainReports)> {
    cfg.validate()?;
    let (classifier, c) = pretrain_classifier(train, vocab_size, cfg, workers)?;
    let (neutralizer, n) = pretrain_neutralizer(train, &classifier, cfg, workers)?;
    let (emotionalizer, e) = pretrain_emotionalizer(train, &classifier, cfg, workers)?;
    Ok((
        Models { classifier, neutralizer, emotionalizer },
        PretrainReports { classifier: c, neutralizer: n, emotionalizer: e },
    ))
}

/// Classifier confidence that `tokens` carry `s`; an empty sentence carries none.
fn confidence(classifier: &AttnClassifier, tokens: &[usize], s: Sentiment) -> Result<f64> {
    if tokens.is_empty() {
        return Ok(0.0);
    }
    classifier.confidence(tokens, s)
}

struct StepAccumulator {
    emotionalizer: Gradients,
    /// `Σ R_c · ∇ log P`
    weighted: Gradients,
    /// `Σ ∇ log P`
    score: Gradients,
}

impl StepAccumulator {
    fn merge(&mut self, other: StepAccumulator) {
        self.emotionalizer.add_assign(&other.emotionalizer);
        self.weighted.add_assign(&other.weighted);
        self.score.add_assign(&other.score);
    }
}

fn sentence_step(models: &Models, x: &Example, seed: u64, beta: f64, acc: &mut StepAccumulator) -> Result<RewardRecord> {
    let (n, e, c) = (&models.neutralizer, &models.emotionalizer, &models.classifier);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = x.sentiment;
    let probs = n.tag_probabilities(&x.tokens)?;
    let masked = sample_mask(&x.tokens, &probs, &mut rng)?;

    let pair = Reconstruction { content: masked.kept_tokens.clone(), target: x.tokens.clone(), sentiment: s };
    let loss = Emotionalizer::reconstruction_grad(&e.params, &e.net, &pair, &mut acc.emotionalizer);

    let x_bar = e.generate(&masked.kept_tokens, s);
    let bleu1 = sentence_bleu(&x_bar.tokens, &x.tokens);
    let confid1 = confidence(c, &x_bar.tokens, s)?;
    let y = e.generate(&masked.kept_tokens, s.opposite());
    let bleu2 = sentence_bleu(&y.tokens, &x.tokens);
    let confid2 = confidence(c, &y.tokens, s.opposite())?;
    let record = RewardRecord::new(bleu1, confid1, bleu2, confid2, beta);

    if !loss.is_finite() || !record.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss {loss} or reward {record:?} on `{}`",
            x.raw_text
        )));
    }
    n.net.mask_log_prob_into(
        &n.params,
        &x.tokens,
        &masked.mask,
        &mut [(&mut acc.weighted, record.rc), (&mut acc.score, 1.0)],
    )?;
    Ok(record)
}

/// One cycled update over a minibatch. The classifier stays frozen.
pub fn cycle_step<R: Rng>(
    models: &mut Models,
    batch: &[Example],
    baseline: &mut BaselineState,
    cfg: &TrainConfig,
    workers: &Workers,
    rng: &mut R,
) -> Result<Vec<RewardRecord>> {
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let items: Vec<(&Example, u64)> = batch.iter().map(|x| (x, rng.gen())).collect();
    let snapshot: &Models = models;
    let (acc, mut records) = workers.map_reduce(
        &items,
        || StepAccumulator {
            emotionalizer: Gradients::zeros_like(&snapshot.emotionalizer.params),
            weighted: Gradients::zeros_like(&snapshot.neutralizer.params),
            score: Gradients::zeros_like(&snapshot.neutralizer.params),
        },
        |(x, seed), acc| sentence_step(snapshot, x, *seed, cfg.beta, acc),
        |a, b| a.merge(b),
    )?;

    let b = if cfg.use_baseline { baseline.value.unwrap_or(records[0].rc) } else { 0.0 };
    let inv = 1.0 / batch.len() as f64;

    // descent direction: −(Σ R_c ∇logP − b Σ ∇logP) / B
    let StepAccumulator { emotionalizer: mut g_e, weighted: mut g_n, mut score } = acc;
    g_n.scale(-inv);
    score.scale(b * inv);
    g_n.add_assign(&score);
    g_e.scale(inv);
    if !g_n.all_finite() || !g_e.all_finite() {
        return Err(Error::Training("non-finite gradient in cycled step".into()));
    }
    g_n.clip_norm(cfg.clip_norm);
    let n = &mut models.neutralizer;
    n.optimizer.step(&mut n.params, &g_n)?;
    models.emotionalizer.apply_gradients(&mut g_e, cfg.clip_norm)?;

    for r in records.iter_mut() {
        r.baseline = b;
        if cfg.use_baseline {
            *baseline = update_baseline(*baseline, r.rc);
        }
    }
    Ok(records)
}

/// One line of the reward log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardLogEntry {
    pub iteration: usize,
    pub mean_r1: f64,
    pub mean_r2: f64,
    pub mean_rc: f64,
    pub baseline: f64,
}

impl RewardLogEntry {
    pub fn summarize(iteration: usize, records: &[RewardRecord], baseline: f64) -> Self {
        let k = records.len().max(1) as f64;
        let mean = |f: fn(&RewardRecord) -> f64| records.iter().map(f).sum::<f64>() / k;
        RewardLogEntry {
            iteration,
            mean_r1: mean(|r| r.r1),
            mean_r2: mean(|r| r.r2),
            mean_rc: mean(|r| r.rc),
            baseline,
        }
    }
}

/// Runs `cfg.iterations` cycled steps over reshuffled minibatches, calling
/// `on_iteration` after each one.
pub fn run_cycles<F>(models: &mut Models, train: &[Example], cfg: &TrainConfig, workers: &Workers, mut on_iteration: F) -> Result<Vec<RewardLogEntry>>
where
    F: FnMut(&RewardLogEntry, &Models) -> Result<()>,
{
    cfg.validate()?;
    if !models.classifier.trained {
        return Err(Error::precondition("cycled training needs a trained classifier"));
    }
    if train.is_empty() {
        return Err(Error::precondition("empty training set"));
    }
    let mut rng = stage_rng(cfg.seed, Stage::Cycle);
    let mut baseline = BaselineState::new(cfg.baseline_decay);
    let batch = cfg.batch_size.min(train.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut log = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let examples: Vec<Example> = order[cursor..cursor + batch].iter().map(|&i| train[i].clone()).collect();
        cursor += batch;
        let records = cycle_step(models, &examples, &mut baseline, cfg, workers, &mut rng)?;
        let entry = RewardLogEntry::summarize(it, &records, records[0].baseline);
        on_iteration(&entry, models)?;
        log.push(entry);
    }
    Ok(log)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutput {
    pub models: Models,
    pub pretrain: PretrainReports,
    pub reward_log: Vec<RewardLogEntry>,
}

/// Pre-trains all three networks, then runs the cycled iterations.
pub fn train(train: &[Example], vocab_size: usize, cfg: &TrainConfig, workers: &Workers) -> Result<TrainOutput> {
    let (mut models, pretrain) = pretrain_all(train, vocab_size, cfg, workers)?;
    let reward_log = run_cycles(&mut models, train, cfg, workers, |_, _| Ok(()))?;
    Ok(TrainOutput { models, pretrain, reward_log })
}

/// As [`run_cycles`], streaming the reward log and checkpoints into `dir`.
pub fn run_cycles_to_dir(
    models: &mut Models,
    train: &[Example],
    cfg: &TrainConfig,
    workers: &Workers,
    vocab_hash: &str,
    dir: &Path,
) -> Result<Vec<RewardLogEntry>> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(cfg)?)?;
    let mut log = BufWriter::new(File::create(dir.join(REWARD_LOG_FILE))?);
    let result = run_cycles(models, train, cfg, workers, |entry, m| {
        serde_json::to_writer(&mut log, entry)?;
        log.write_all(b"\n")?;
        if cfg.checkpoint_every > 0 && (entry.iteration + 1) % cfg.checkpoint_every == 0 {
            log.flush()?;
            m.save(dir, vocab_hash)?;
        }
        Ok(())
    });
    log.flush()?;
    let entries = result?;
    models.save(dir, vocab_hash)?;
    Ok(entries)
}
