//! Emotionalization module: a shared encoder over the neutralized content and
//! one decoder per sentiment. Decoders start from the encoder's final state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attn_classifier::AttnClassifier;
use crate::corpus::vocab::{BOS, EOS, PAD};
use crate::corpus::{Example, Sentiment};
use crate::error::{Error, Result};
use crate::neutralizer::apply_mask;
use crate::nn::tape::log_sum_exp;
use crate::nn::train::{fit, FitOptions, TrainReport, Workers};
use crate::nn::{Adagrad, Checkpoint, Dense, Embedding, Gradients, Lstm, LstmState, NodeId, ParamSet, Tape};

pub const CHECKPOINT_KIND: &str = "emotionalizer";
pub const DEFAULT_MAX_LEN: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionalizerConfig {
    pub vocab_size: usize,
    pub embedding_size: usize,
    pub hidden_size: usize,
    pub max_len: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub embedding: Embedding,
    pub lstm: Lstm,
    pub output: Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionalizerNet {
    pub embedding: Embedding,
    pub encoder: Lstm,
    /// Indexed by [`Sentiment::index`].
    pub decoders: Vec<Decoder>,
}

/// Training pair: neutralized content, the sentence to reproduce and its sentiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub content: Vec<usize>,
    pub target: Vec<usize>,
    pub sentiment: Sentiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub tokens: Vec<usize>,
    /// Sum of per-step log-probabilities of the chosen tokens, EOS included if emitted.
    pub log_prob: f64,
}

impl EmotionalizerNet {
    pub fn build<R: Rng>(cfg: &EmotionalizerConfig, rng: &mut R) -> (Self, ParamSet) {
        let mut ps = ParamSet::new();
        let (v, e, h) = (cfg.vocab_size, cfg.embedding_size, cfg.hidden_size);
        let embedding = Embedding::new(&mut ps, "encoder.embedding", v, e, rng);
        let encoder = Lstm::new(&mut ps, "encoder.lstm", e, h, rng);
        let decoders = Sentiment::ALL
            .iter()
            .map(|s| Decoder {
                embedding: Embedding::new(&mut ps, &format!("decoder.{s}.embedding"), v, e, rng),
                lstm: Lstm::new(&mut ps, &format!("decoder.{s}.lstm"), e, h, rng),
                output: Dense::new(&mut ps, &format!("decoder.{s}.output"), h, v, rng),
            })
            .collect();
        (EmotionalizerNet { embedding, encoder, decoders }, ps)
    }

    pub fn decoder(&self, s: Sentiment) -> &Decoder {
        &self.decoders[s.index()]
    }

    /// Final encoder state over the content; the zero state for empty content.
    pub fn encode(&self, tape: &mut Tape, content: &[usize]) -> LstmState {
        let xs: Vec<NodeId> = content.iter().map(|&t| self.embedding.lookup(tape, t)).collect();
        let init = self.encoder.zero_state(tape);
        self.encoder.run(tape, &xs, init).1
    }

    /// `log P(target, EOS | content, s)` under teacher forcing. With `grads`,
    /// `seed · ∇` is accumulated.
    pub fn log_likelihood(
        &self,
        params: &ParamSet,
        content: &[usize],
        target: &[usize],
        s: Sentiment,
        grads: Option<(&mut Gradients, f64)>,
    ) -> f64 {
        let mut tape = Tape::new(params);
        let dec = self.decoder(s);
        let mut state = self.encode(&mut tape, content);
        let mut terms = Vec::with_capacity(target.len() + 1);
        let mut prev = BOS;
        for &next in target.iter().chain(std::iter::once(&EOS)) {
            let x = dec.embedding.lookup(&mut tape, prev);
            state = dec.lstm.step(&mut tape, x, state);
            let logits = dec.output.forward(&mut tape, state.h);
            terms.push(tape.log_softmax_at(logits, next));
            prev = next;
        }
        let total = tape.sum(&terms);
        if let Some((g, seed)) = grads {
            tape.backward(total, seed, g);
        }
        tape.scalar(total)
    }

    /// Greedy decoding of at most `max_len` tokens; stops early at EOS.
    /// PAD and BOS are never emitted.
    pub fn decode(&self, params: &ParamSet, content: &[usize], s: Sentiment, max_len: usize) -> Generated {
        let mut tape = Tape::new(params);
        let dec = self.decoder(s);
        let mut state = self.encode(&mut tape, content);
        let mut tokens = Vec::new();
        let mut log_prob = 0.0;
        let mut prev = BOS;
        while tokens.len() < max_len {
            let x = dec.embedding.lookup(&mut tape, prev);
            state = dec.lstm.step(&mut tape, x, state);
            let logits = dec.output.forward(&mut tape, state.h);
            let z = tape.value(logits);
            let mut best = EOS;
            for (i, &v) in z.iter().enumerate() {
                if i != PAD && i != BOS && v > z[best] {
                    best = i;
                }
            }
            log_prob += z[best] - log_sum_exp(z);
            if best == EOS {
                break;
            }
            tokens.push(best);
            prev = best;
        }
        Generated { tokens, log_prob }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emotionalizer {
    pub config: EmotionalizerConfig,
    pub net: EmotionalizerNet,
    pub params: ParamSet,
    pub optimizer: Adagrad,
}

impl Emotionalizer {
    pub fn new(config: EmotionalizerConfig, learning_rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (net, params) = EmotionalizerNet::build(&config, &mut rng);
        let optimizer = Adagrad::new(&params, learning_rate);
        Emotionalizer { config, net, params, optimizer }
    }

    pub fn generate(&self, content: &[usize], s: Sentiment) -> Generated {
        self.net.decode(&self.params, content, s, self.config.max_len)
    }

    pub fn reconstruction_logprob(&self, content: &[usize], target: &[usize], s: Sentiment) -> f64 {
        self.net.log_likelihood(&self.params, content, target, s, None)
    }

    /// Adds `∇(−log P(target | content, s))` to `grads`; returns the loss.
    pub fn reconstruction_grad(params: &ParamSet, net: &EmotionalizerNet, ex: &Reconstruction, grads: &mut Gradients) -> f64 {
        -net.log_likelihood(params, &ex.content, &ex.target, ex.sentiment, Some((grads, -1.0)))
    }

    /// Clips `grads` (a descent direction) to `clip_norm` and takes one Adagrad step.
    pub fn apply_gradients(&mut self, grads: &mut Gradients, clip_norm: f64) -> Result<f64> {
        let norm = grads.clip_norm(clip_norm);
        self.optimizer.step(&mut self.params, grads)?;
        Ok(norm)
    }

    /// One ascent step on the mean reconstruction likelihood of `batch`.
    pub fn cycle_update(&mut self, batch: &[Reconstruction], clip_norm: f64) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let mut g = Gradients::zeros_like(&self.params);
        let mut loss = 0.0;
        for ex in batch {
            loss += Emotionalizer::reconstruction_grad(&self.params, &self.net, ex, &mut g);
        }
        g.scale(1.0 / batch.len() as f64);
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite reconstruction loss {loss}")));
        }
        self.apply_gradients(&mut g, clip_norm)?;
        Ok(loss / batch.len() as f64)
    }

    pub fn pretrain<R: Rng>(
        &mut self,
        data: &[Reconstruction],
        opts: &FitOptions,
        workers: &Workers,
        rng: &mut R,
    ) -> Result<TrainReport> {
        let net = &self.net;
        fit(&mut self.params, &mut self.optimizer, data, opts, workers, rng, |p, ex, g| {
            Ok(Emotionalizer::reconstruction_grad(p, net, ex, g))
        })
    }

    pub fn to_checkpoint(&self, vocab_hash: &str) -> Checkpoint {
        Checkpoint::new(
            CHECKPOINT_KIND,
            vocab_hash,
            self.config.seed,
            serde_json::json!({ "model": self.config }),
            self.params.clone(),
            Some(self.optimizer.clone()),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint, learning_rate: f64) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: EmotionalizerConfig = serde_json::from_value(ck.config["model"].clone())?;
        let mut m = Emotionalizer::new(config, learning_rate);
        m.params.load_from(&ck.params)?;
        if let Some(opt) = &ck.optimizer {
            m.optimizer.accumulators = opt.accumulators.clone();
        }
        Ok(m)
    }
}

/// Pre-training pairs built from the classifier's neutral masks.
pub fn reconstruction_pairs(data: &[Example], classifier: &AttnClassifier) -> Result<Vec<Reconstruction>> {
    if !classifier.trained {
        return Err(Error::precondition("emotionalizer pre-training needs a trained classifier"));
    }
    data.iter()
        .map(|ex| {
            let mask = classifier.neutral_mask(&ex.tokens)?;
            Ok(Reconstruction {
                content: apply_mask(&ex.tokens, &mask)?,
                target: ex.tokens.clone(),
                sentiment: ex.sentiment,
            })
        })
        .collect()
}
