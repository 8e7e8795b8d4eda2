//! Self-attention sentiment classifier.
//!
//! An LSTM reads the sentence; each hidden state `h_i` is scored against the
//! last one with a bilinear alignment `e_i = h_iᵀ A h_T`; the softmax of the
//! scores weights the hidden states into a context vector `c`, and
//! `softmax(W c + b)` gives the label distribution. The attention weights,
//! thresholded at their mean, mark which words carry sentiment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ConfidenceOracle, Example, Sentiment, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::layers::INIT_SCALE;
use crate::nn::tape::softmax;
use crate::nn::train::{fit, FitOptions, TrainReport, Workers};
use crate::nn::{Adagrad, Checkpoint, Dense, Embedding, Gradients, Lstm, NodeId, ParamId, ParamSet, Tape};

pub const CHECKPOINT_KIND: &str = "classifier";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub vocab_size: usize,
    pub embedding_size: usize,
    pub hidden_size: usize,
    pub seed: u64,
}

/// Parameter layout; all forward computation lives here so it can run
/// against any compatible [`ParamSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierNet {
    pub embedding: Embedding,
    pub lstm: Lstm,
    pub align: ParamId,
    pub output: Dense,
}

pub struct ClassifierForward {
    pub hidden: Vec<NodeId>,
    pub weights: NodeId,
    pub logits: NodeId,
}

impl ClassifierNet {
    pub fn build<R: Rng>(cfg: &ClassifierConfig, rng: &mut R) -> (Self, ParamSet) {
        let mut ps = ParamSet::new();
        let embedding = Embedding::new(&mut ps, "embedding", cfg.vocab_size, cfg.embedding_size, rng);
        let lstm = Lstm::new(&mut ps, "lstm", cfg.embedding_size, cfg.hidden_size, rng);
        let h = cfg.hidden_size;
        let align = ps.add_uniform("align", &[h, h], INIT_SCALE, rng);
        let output = Dense::new(&mut ps, "output", h, 2, rng);
        (ClassifierNet { embedding, lstm, align, output }, ps)
    }

    pub fn forward(&self, tape: &mut Tape, tokens: &[usize]) -> Result<ClassifierForward> {
        if tokens.is_empty() {
            return Err(Error::precondition("cannot classify an empty sentence"));
        }
        let xs: Vec<NodeId> = tokens.iter().map(|&t| self.embedding.lookup(tape, t)).collect();
        let init = self.lstm.zero_state(tape);
        let (hidden, last) = self.lstm.run(tape, &xs, init);
        let scores: Vec<NodeId> = hidden
            .iter()
            .map(|&h| tape.bilinear(self.align, h, last.h))
            .collect();
        let stacked = tape.stack(&scores);
        let weights = tape.softmax(stacked);
        let context = tape.weighted_sum(weights, &hidden);
        let logits = self.output.forward(tape, context);
        Ok(ClassifierForward { hidden, weights, logits })
    }

    /// `−log P(label | tokens)`, back-propagated into `grads` when given.
    pub fn loss(&self, params: &ParamSet, ex: &Example, grads: Option<&mut Gradients>) -> Result<f64> {
        let mut tape = Tape::new(params);
        let fwd = self.forward(&mut tape, &ex.tokens)?;
        let lp = tape.log_softmax_at(fwd.logits, ex.sentiment.index());
        if let Some(g) = grads {
            tape.backward(lp, -1.0, g);
        }
        Ok(-tape.scalar(lp))
    }
}

/// Attention weights with their mean and the mean-threshold mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionProfile {
    pub weights: Vec<f64>,
    pub mean: f64,
    /// `true` = neutral (kept), `false` = emotional (removed).
    pub mask: Vec<bool>,
}

impl AttentionProfile {
    pub fn from_weights(weights: Vec<f64>) -> Self {
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        let mask = discretize(&weights);
        AttentionProfile { weights, mean, mask }
    }
}

/// Softmax of alignment scores.
pub fn attention_weights(scores: &[f64]) -> Vec<f64> {
    softmax(scores)
}

/// Mean-threshold discretization: a word is kept iff its weight is at most
/// the sentence's mean weight.
pub fn discretize(weights: &[f64]) -> Vec<bool> {
    if weights.is_empty() {
        return Vec::new();
    }
    let first = weights[0];
    if weights.iter().all(|&w| w == first) {
        return vec![true; weights.len()];
    }
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    let mut mask: Vec<bool> = weights.iter().map(|&w| w <= mean).collect();
    if !mask.iter().any(|&m| m) {
        // rounding put the mean below every weight; the minimum always qualifies
        let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        for (m, &w) in mask.iter_mut().zip(weights) {
            *m = w == min;
        }
    }
    mask
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttnClassifier {
    pub config: ClassifierConfig,
    pub net: ClassifierNet,
    pub params: ParamSet,
    pub optimizer: Adagrad,
    pub trained: bool,
}

impl AttnClassifier {
    pub fn new(config: ClassifierConfig, learning_rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (net, params) = ClassifierNet::build(&config, &mut rng);
        let optimizer = Adagrad::new(&params, learning_rate);
        AttnClassifier { config, net, params, optimizer, trained: false }
    }

    /// Hidden vectors `h_1..h_T`.
    pub fn encode(&self, tokens: &[usize]) -> Result<Vec<Vec<f64>>> {
        if tokens.is_empty() {
            return Err(Error::precondition("cannot encode an empty sentence"));
        }
        let mut tape = Tape::new(&self.params);
        let xs: Vec<NodeId> = tokens.iter().map(|&t| self.net.embedding.lookup(&mut tape, t)).collect();
        let init = self.net.lstm.zero_state(&mut tape);
        let (hidden, _) = self.net.lstm.run(&mut tape, &xs, init);
        Ok(hidden.iter().map(|&h| tape.value(h).to_vec()).collect())
    }

    /// Attention weights over precomputed hidden vectors, using the last as context.
    pub fn attention(&self, hidden: &[Vec<f64>]) -> AttentionProfile {
        let a = self.params.get(self.net.align);
        let n = a.cols();
        let last = hidden.last().expect("non-empty hidden sequence");
        let scores: Vec<f64> = hidden
            .iter()
            .map(|h| {
                (0..n)
                    .map(|i| h[i] * (0..n).map(|j| a.data[i * n + j] * last[j]).sum::<f64>())
                    .sum()
            })
            .collect();
        AttentionProfile::from_weights(attention_weights(&scores))
    }

    /// Label distribution indexed by [`Sentiment::index`], plus attention.
    pub fn classify(&self, tokens: &[usize]) -> Result<([f64; 2], AttentionProfile)> {
        let mut tape = Tape::new(&self.params);
        let fwd = self.net.forward(&mut tape, tokens)?;
        let p = softmax(tape.value(fwd.logits));
        let profile = AttentionProfile::from_weights(tape.value(fwd.weights).to_vec());
        Ok(([p[0], p[1]], profile))
    }

    pub fn confidence(&self, tokens: &[usize], sentiment: Sentiment) -> Result<f64> {
        if !self.trained {
            return Err(Error::precondition("classifier has not been trained"));
        }
        Ok(self.classify(tokens)?.0[sentiment.index()])
    }

    pub fn predict(&self, tokens: &[usize]) -> Result<Sentiment> {
        let (p, _) = self.classify(tokens)?;
        Ok(if p[1] > p[0] { Sentiment::Positive } else { Sentiment::Negative })
    }

    /// Mean-threshold mask for a sentence (true = keep).
    pub fn neutral_mask(&self, tokens: &[usize]) -> Result<Vec<bool>> {
        Ok(self.classify(tokens)?.1.mask)
    }

    pub fn accuracy(&self, data: &[Example]) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0;
        for ex in data {
            if self.predict(&ex.tokens)? == ex.sentiment {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }

    pub fn loss_and_grad(&self, data: &[Example]) -> Result<(f64, Gradients)> {
        let mut g = Gradients::zeros_like(&self.params);
        let mut total = 0.0;
        for ex in data {
            total += self.net.loss(&self.params, ex, Some(&mut g))?;
        }
        Ok((total, g))
    }

    pub fn train<R: Rng>(
        &mut self,
        data: &[Example],
        opts: &FitOptions,
        workers: &Workers,
        rng: &mut R,
    ) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::precondition("empty training set"));
        }
        let net = &self.net;
        let report = fit(&mut self.params, &mut self.optimizer, data, opts, workers, rng, |p, ex, g| {
            net.loss(p, ex, Some(g))
        })?;
        if opts.epochs > 0 {
            self.trained = true;
        }
        Ok(report)
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
        let config: ClassifierConfig = serde_json::from_value(ck.config["model"].clone())?;
        let mut m = AttnClassifier::new(config, learning_rate);
        m.params.load_from(&ck.params)?;
        if let Some(opt) = &ck.optimizer {
            m.optimizer.accumulators = opt.accumulators.clone();
        }
        m.trained = ck.config["trained"].as_bool().unwrap_or(false);
        Ok(m)
    }
}

/// Pairs a classifier with its vocabulary so it can score surface tokens.
pub struct VocabClassifier<'a> {
    pub vocab: &'a Vocabulary,
    pub model: &'a AttnClassifier,
}

impl ConfidenceOracle for VocabClassifier<'_> {
    fn confidence(&self, tokens: &[String], sentiment: Sentiment) -> Result<f64> {
        self.model.confidence(&self.vocab.encode(tokens), sentiment)
    }
}
