//! Automatic evaluation: a convolutional sentiment classifier kept separate
//! from the attention classifier, transfer accuracy, corpus BLEU and G-score.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::vocab::PAD;
use crate::corpus::{Example, Sentiment, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::tape::softmax;
use crate::nn::train::{fit, FitOptions, TrainReport, Workers};
use crate::nn::{Adagrad, Checkpoint, Dense, Embedding, Gradients, NodeId, ParamSet, Tape};
use crate::reward::{corpus_bleu, sentence_bleu};

pub const CHECKPOINT_KIND: &str = "eval_classifier";
pub const DEFAULT_FILTERS: usize = 100;
pub const DEFAULT_WIDTHS: [usize; 3] = [3, 4, 5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextCnnConfig {
    pub vocab_size: usize,
    pub embedding_size: usize,
    pub filters: usize,
    pub widths: Vec<usize>,
    pub seed: u64,
}

impl TextCnnConfig {
    pub fn new(vocab_size: usize, embedding_size: usize, seed: u64) -> Self {
        TextCnnConfig { vocab_size, embedding_size, filters: DEFAULT_FILTERS, widths: DEFAULT_WIDTHS.to_vec(), seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextCnnNet {
    pub embedding: Embedding,
    /// One filter bank per width, applied to concatenated window embeddings.
    pub convs: Vec<(usize, Dense)>,
    pub output: Dense,
}

impl TextCnnNet {
    pub fn build<R: Rng>(cfg: &TextCnnConfig, rng: &mut R) -> (Self, ParamSet) {
        let mut ps = ParamSet::new();
        let embedding = Embedding::new(&mut ps, "embedding", cfg.vocab_size, cfg.embedding_size, rng);
        let convs = cfg
            .widths
            .iter()
            .map(|&w| (w, Dense::new(&mut ps, &format!("conv{w}"), w * cfg.embedding_size, cfg.filters, rng)))
            .collect();
        let output = Dense::new(&mut ps, "output", cfg.filters * cfg.widths.len(), 2, rng);
        (TextCnnNet { embedding, convs, output }, ps)
    }

    /// Label logits; inputs shorter than the widest filter are right-padded.
    pub fn forward(&self, tape: &mut Tape, tokens: &[usize]) -> NodeId {
        let widest = self.convs.iter().map(|(w, _)| *w).max().unwrap_or(1);
        let mut padded = tokens.to_vec();
        padded.resize(tokens.len().max(widest), PAD);
        let xs: Vec<NodeId> = padded.iter().map(|&t| self.embedding.lookup(tape, t)).collect();
        let pooled: Vec<NodeId> = self
            .convs
            .iter()
            .map(|(w, conv)| {
                let maps: Vec<NodeId> = xs
                    .windows(*w)
                    .map(|win| {
                        let x = tape.concat(win);
                        let z = conv.forward(tape, x);
                        tape.relu(z)
                    })
                    .collect();
                tape.max_pool(&maps)
            })
            .collect();
        let features = tape.concat(&pooled);
        self.output.forward(tape, features)
    }

    pub fn loss(&self, params: &ParamSet, ex: &Example, grads: Option<&mut Gradients>) -> f64 {
        let mut tape = Tape::new(params);
        let logits = self.forward(&mut tape, &ex.tokens);
        let lp = tape.log_softmax_at(logits, ex.sentiment.index());
        if let Some(g) = grads {
            tape.backward(lp, -1.0, g);
        }
        -tape.scalar(lp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalClassifier {
    pub config: TextCnnConfig,
    pub net: TextCnnNet,
    pub params: ParamSet,
    pub optimizer: Adagrad,
    pub trained: bool,
}

impl EvalClassifier {
    pub fn new(config: TextCnnConfig, learning_rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (net, params) = TextCnnNet::build(&config, &mut rng);
        let optimizer = Adagrad::new(&params, learning_rate);
        EvalClassifier { config, net, params, optimizer, trained: false }
    }

    pub fn train<R: Rng>(&mut self, data: &[Example], opts: &FitOptions, workers: &Workers, rng: &mut R) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::precondition("empty training set"));
        }
        let net = &self.net;
        let report = fit(&mut self.params, &mut self.optimizer, data, opts, workers, rng, |p, ex, g| {
            Ok(net.loss(p, ex, Some(g)))
        })?;
        if opts.epochs > 0 {
            self.trained = true;
        }
        Ok(report)
    }

    pub fn probabilities(&self, tokens: &[usize]) -> [f64; 2] {
        let mut tape = Tape::new(&self.params);
        let logits = self.net.forward(&mut tape, tokens);
        let p = softmax(tape.value(logits));
        [p[0], p[1]]
    }

    pub fn predict(&self, tokens: &[usize]) -> Sentiment {
        let p = self.probabilities(tokens);
        if p[1] > p[0] {
            Sentiment::Positive
        } else {
            Sentiment::Negative
        }
    }

    /// Fraction in `[0, 1]` of examples whose label is predicted.
    pub fn accuracy(&self, data: &[Example]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        data.iter().filter(|ex| self.predict(&ex.tokens) == ex.sentiment).count() as f64 / data.len() as f64
    }

    pub fn to_checkpoint(&self, vocab_hash: &str) -> Checkpoint {
        Checkpoint::new(
            CHECKPOINT_KIND,
            vocab_hash,
            self.config.seed,
            serde_json::json!({ "model": self.config, "trained": self.trained }),
            self.params.clone(),
            Some(self.optimizer.clone()),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint, learning_rate: f64) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: TextCnnConfig = serde_json::from_value(ck.config["model"].clone())?;
        let mut m = EvalClassifier::new(config, learning_rate);
        m.params.load_from(&ck.params)?;
        if let Some(opt) = &ck.optimizer {
            m.optimizer.accumulators = opt.accumulators.clone();
        }
        m.trained = ck.config["trained"].as_bool().unwrap_or(false);
        Ok(m)
    }
}

pub fn train_eval_classifier(
    data: &[Example],
    config: TextCnnConfig,
    learning_rate: f64,
    opts: &FitOptions,
    workers: &Workers,
) -> Result<(EvalClassifier, TrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut c = EvalClassifier::new(config, learning_rate);
    let report = c.train(data, opts, workers, &mut rng)?;
    Ok((c, report))
}

fn check_parallel(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::validation(format!("{what}: {a} sentences against {b}")));
    }
    Ok(())
}

/// Percentage of generated sentences classified as their target sentiment.
pub fn transfer_accuracy(generated: &[Vec<usize>], targets: &[Sentiment], classifier: &EvalClassifier) -> Result<f64> {
    check_parallel(generated.len(), targets.len(), "transfer accuracy")?;
    if !classifier.trained {
        return Err(Error::precondition("evaluation classifier has not been trained"));
    }
    if generated.is_empty() {
        return Ok(0.0);
    }
    let hits = generated
        .iter()
        .zip(targets)
        .filter(|(g, &t)| classifier.predict(g) == t)
        .count();
    Ok(100.0 * hits as f64 / generated.len() as f64)
}

/// Corpus BLEU-4 of generated sentences against their sources, in percent.
pub fn content_bleu<T: Eq + std::hash::Hash>(generated: &[Vec<T>], sources: &[Vec<T>]) -> Result<f64> {
    check_parallel(generated.len(), sources.len(), "content BLEU")?;
    Ok(100.0 * corpus_bleu(generated, sources))
}

pub fn g_score(acc: f64, bleu: f64) -> f64 {
    (acc * bleu).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub source: String,
    pub generated: String,
    pub target: Sentiment,
    pub predicted: Sentiment,
    /// Smoothed sentence BLEU in percent.
    pub bleu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    /// Corpus BLEU in percent.
    pub bleu: f64,
    pub g: f64,
    /// Mean smoothed sentence BLEU in percent.
    pub mean_sentence_bleu: f64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn table(&self, label: &str) -> String {
        let mut s = String::new();
        let width = label.len().max(6);
        let _ = writeln!(s, "{:<width$}  {:>6}  {:>6}  {:>7}", "", "ACC", "BLEU", "G-score");
        let _ = writeln!(s, "{:<width$}  {:>6.2}  {:>6.2}  {:>7.2}", label, self.acc, self.bleu, self.g);
        s
    }
}

/// Scores surface-token sentences; `generated[i]` was produced from
/// `sources[i]` with target sentiment `targets[i]`.
pub fn evaluate(
    sources: &[Vec<String>],
    generated: &[Vec<String>],
    targets: &[Sentiment],
    classifier: &EvalClassifier,
    vocab: &Vocabulary,
    workers: &Workers,
) -> Result<EvalReport> {
    check_parallel(generated.len(), sources.len(), "evaluation")?;
    check_parallel(generated.len(), targets.len(), "evaluation")?;
    let encoded: Vec<Vec<usize>> = generated.iter().map(|g| vocab.encode(g)).collect();
    let acc = transfer_accuracy(&encoded, targets, classifier)?;
    let bleu = content_bleu(generated, sources)?;
    let idx: Vec<usize> = (0..generated.len()).collect();
    let (_, rows) = workers.map_reduce(
        &idx,
        || (),
        |&i, _| {
            Ok(EvalRow {
                source: sources[i].join(" "),
                generated: generated[i].join(" "),
                target: targets[i],
                predicted: classifier.predict(&encoded[i]),
                bleu: 100.0 * sentence_bleu(&generated[i], &sources[i]),
            })
        },
        |_, _| {},
    )?;
    let mean_sentence_bleu = if rows.is_empty() { 0.0 } else { rows.iter().map(|r| r.bleu).sum::<f64>() / rows.len() as f64 };
    Ok(EvalReport { acc, bleu, g: g_score(acc, bleu), mean_sentence_bleu, rows })
}
