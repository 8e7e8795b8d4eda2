//! Neutralization module: an LSTM tagger giving each word a probability of
//! being neutral. Pre-trained against the classifier's discretized
//! attention, sampled as a per-word Bernoulli policy during cycled training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attn_classifier::AttnClassifier;
use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::nn::tape::softmax;
use crate::nn::train::{fit, FitOptions, TrainReport, Workers};
use crate::nn::{Adagrad, Checkpoint, Dense, Embedding, Gradients, Lstm, NodeId, ParamSet, Tape};

pub const CHECKPOINT_KIND: &str = "neutralizer";

/// Extra Bernoulli draws attempted after an all-removed sample.
pub const RESAMPLE_ATTEMPTS: usize = 3;

/// Index of the "neutral" class in the tagger head.
const NEUTRAL: usize = 1;
const POLAR: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeutralizerConfig {
    pub vocab_size: usize,
    pub embedding_size: usize,
    pub hidden_size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeutralizerNet {
    pub embedding: Embedding,
    pub lstm: Lstm,
    pub head: Dense,
}

impl NeutralizerNet {
    pub fn build<R: Rng>(cfg: &NeutralizerConfig, rng: &mut R) -> (Self, ParamSet) {
        let mut ps = ParamSet::new();
        let embedding = Embedding::new(&mut ps, "embedding", cfg.vocab_size, cfg.embedding_size, rng);
        let lstm = Lstm::new(&mut ps, "lstm", cfg.embedding_size, cfg.hidden_size, rng);
        let head = Dense::new(&mut ps, "head", cfg.hidden_size, 2, rng);
        (NeutralizerNet { embedding, lstm, head }, ps)
    }

    /// Two-way logits `[polar, neutral]` per position.
    pub fn forward(&self, tape: &mut Tape, tokens: &[usize]) -> Result<Vec<NodeId>> {
        if tokens.is_empty() {
            return Err(Error::precondition("cannot tag an empty sentence"));
        }
        let xs: Vec<NodeId> = tokens.iter().map(|&t| self.embedding.lookup(tape, t)).collect();
        let init = self.lstm.zero_state(tape);
        let (hidden, _) = self.lstm.run(tape, &xs, init);
        Ok(hidden.iter().map(|&h| self.head.forward(tape, h)).collect())
    }

    /// `log P(mask | tokens) = Σ_i log P(mask_i | x)`. When `grads` is given,
    /// `seed · ∇ log P` is accumulated into it.
    pub fn mask_log_prob(
        &self,
        params: &ParamSet,
        tokens: &[usize],
        mask: &[bool],
        grads: Option<(&mut Gradients, f64)>,
    ) -> Result<f64> {
        match grads {
            Some(sink) => self.mask_log_prob_into(params, tokens, mask, &mut [sink]),
            None => self.mask_log_prob_into(params, tokens, mask, &mut []),
        }
    }

    /// As [`mask_log_prob`](Self::mask_log_prob), accumulating `seed · ∇` into every sink.
    pub fn mask_log_prob_into(
        &self,
        params: &ParamSet,
        tokens: &[usize],
        mask: &[bool],
        sinks: &mut [(&mut Gradients, f64)],
    ) -> Result<f64> {
        if mask.len() != tokens.len() {
            return Err(Error::validation("mask length differs from sentence length"));
        }
        let mut tape = Tape::new(params);
        let logits = self.forward(&mut tape, tokens)?;
        let terms: Vec<NodeId> = logits
            .iter()
            .zip(mask)
            .map(|(&l, &keep)| tape.log_softmax_at(l, if keep { NEUTRAL } else { POLAR }))
            .collect();
        let total = tape.sum(&terms);
        for (g, seed) in sinks.iter_mut() {
            tape.backward(total, *seed, g);
        }
        Ok(tape.scalar(total))
    }
}

/// Surviving tokens of a sentence under a mask, with the mask's log-probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeutralizedSequence {
    /// `true` = neutral (kept).
    pub mask: Vec<bool>,
    pub kept_tokens: Vec<usize>,
    pub log_prob: f64,
}

/// Order-preserving selection of the positions where `mask` is set.
pub fn apply_mask<T: Clone>(tokens: &[T], mask: &[bool]) -> Result<Vec<T>> {
    if tokens.len() != mask.len() {
        return Err(Error::validation(format!(
            "mask length {} differs from sentence length {}",
            mask.len(),
            tokens.len()
        )));
    }
    Ok(tokens
        .iter()
        .zip(mask)
        .filter(|(_, &k)| k)
        .map(|(t, _)| t.clone())
        .collect())
}

/// `Σ_i [m_i log p_i + (1 − m_i) log(1 − p_i)]`.
pub fn bernoulli_log_prob(probs: &[f64], mask: &[bool]) -> f64 {
    probs
        .iter()
        .zip(mask)
        .map(|(&p, &m)| if m { p.ln() } else { (1.0 - p).ln() })
        .sum()
}

/// Independent Bernoulli draw per position, no degeneracy handling.
pub fn sample_bernoulli<R: Rng>(probs: &[f64], rng: &mut R) -> Vec<bool> {
    probs.iter().map(|&p| rng.gen::<f64>() < p).collect()
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn finish(tokens: &[usize], probs: &[f64], mask: Vec<bool>) -> Result<NeutralizedSequence> {
    let kept_tokens = apply_mask(tokens, &mask)?;
    let log_prob = bernoulli_log_prob(probs, &mask);
    Ok(NeutralizedSequence { mask, kept_tokens, log_prob })
}

/// Keeps positions with `p ≥ 0.5`; if none qualify, keeps only the most neutral one.
pub fn greedy_mask(tokens: &[usize], probs: &[f64]) -> Result<NeutralizedSequence> {
    let mut mask: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
    if !mask.iter().any(|&m| m) && !mask.is_empty() {
        mask[argmax(probs)] = true;
    }
    finish(tokens, probs, mask)
}

/// Bernoulli sample; an empty mask is redrawn up to [`RESAMPLE_ATTEMPTS`]
/// times, after which only the most neutral position is kept.
pub fn sample_mask<R: Rng>(tokens: &[usize], probs: &[f64], rng: &mut R) -> Result<NeutralizedSequence> {
    let mut mask = sample_bernoulli(probs, rng);
    let mut attempts = 0;
    while !mask.iter().any(|&m| m) && attempts < RESAMPLE_ATTEMPTS {
        mask = sample_bernoulli(probs, rng);
        attempts += 1;
    }
    if !mask.iter().any(|&m| m) && !mask.is_empty() {
        mask[argmax(probs)] = true;
    }
    finish(tokens, probs, mask)
}

/// Pre-training pair: a sentence and the classifier's neutral mask for it.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedSentence {
    pub tokens: Vec<usize>,
    pub mask: Vec<bool>,
}

pub fn tag_with_classifier(data: &[Example], classifier: &AttnClassifier) -> Result<Vec<TaggedSentence>> {
    if !classifier.trained {
        return Err(Error::precondition("neutralizer pre-training needs a trained classifier"));
    }
    data.iter()
        .map(|ex| {
            Ok(TaggedSentence {
                tokens: ex.tokens.clone(),
                mask: classifier.neutral_mask(&ex.tokens)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neutralizer {
    pub config: NeutralizerConfig,
    pub net: NeutralizerNet,
    pub params: ParamSet,
    pub optimizer: Adagrad,
}

impl Neutralizer {
    pub fn new(config: NeutralizerConfig, learning_rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (net, params) = NeutralizerNet::build(&config, &mut rng);
        let optimizer = Adagrad::new(&params, learning_rate);
        Neutralizer { config, net, params, optimizer }
    }

    /// Per-token probability of being neutral.
    pub fn tag_probabilities(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let logits = self.net.forward(&mut tape, tokens)?;
        Ok(logits.iter().map(|&l| softmax(tape.value(l))[NEUTRAL]).collect())
    }

    pub fn greedy(&self, tokens: &[usize]) -> Result<NeutralizedSequence> {
        greedy_mask(tokens, &self.tag_probabilities(tokens)?)
    }

    pub fn sample<R: Rng>(&self, tokens: &[usize], rng: &mut R) -> Result<NeutralizedSequence> {
        sample_mask(tokens, &self.tag_probabilities(tokens)?, rng)
    }

    /// Cross-entropy of the tagger against a target mask, summed over positions.
    pub fn tagging_loss(params: &ParamSet, net: &NeutralizerNet, ex: &TaggedSentence, grads: Option<&mut Gradients>) -> Result<f64> {
        let lp = net.mask_log_prob(params, &ex.tokens, &ex.mask, grads.map(|g| (g, -1.0)))?;
        Ok(-lp)
    }

    pub fn pretrain<R: Rng>(
        &mut self,
        data: &[TaggedSentence],
        opts: &FitOptions,
        workers: &Workers,
        rng: &mut R,
    ) -> Result<TrainReport> {
        let net = &self.net;
        fit(&mut self.params, &mut self.optimizer, data, opts, workers, rng, |p, ex, g| {
            Neutralizer::tagging_loss(p, net, ex, Some(g))
        })
    }

    /// Fraction of tokens whose greedy tag agrees with the target mask.
    pub fn tagging_accuracy(&self, data: &[TaggedSentence]) -> Result<f64> {
        let (mut agree, mut total) = (0usize, 0usize);
        for ex in data {
            let probs = self.tag_probabilities(&ex.tokens)?;
            for (p, &m) in probs.iter().zip(&ex.mask) {
                total += 1;
                if (*p >= 0.5) == m {
                    agree += 1;
                }
            }
        }
        Ok(if total == 0 { 0.0 } else { agree as f64 / total as f64 })
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
        let config: NeutralizerConfig = serde_json::from_value(ck.config["model"].clone())?;
        let mut m = Neutralizer::new(config, learning_rate);
        m.params.load_from(&ck.params)?;
        if let Some(opt) = &ck.optimizer {
            m.optimizer.accumulators = opt.accumulators.clone();
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Neutralizer {
        Neutralizer::new(NeutralizerConfig { vocab_size: 10, embedding_size: 3, hidden_size: 4, seed: 9 }, 0.6)
    }

    #[test]
    fn probabilities_are_open_unit_interval() {
        let n = tiny();
        let p = n.tag_probabilities(&[4, 5, 6, 7, 8]).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
        assert!(matches!(n.tag_probabilities(&[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn greedy_thresholds_at_half() {
        let s = greedy_mask(&[10, 11, 12], &[0.9, 0.2, 0.8]).unwrap();
        assert_eq!(s.mask, vec![true, false, true]);
        assert_eq!(s.kept_tokens, vec![10, 12]);
        let expect = 0.9f64.ln() + 0.8f64.ln() + 0.8f64.ln();
        assert!((s.log_prob - expect).abs() < 1e-12);

        let all = greedy_mask(&[1, 2, 3], &[0.9, 0.9, 0.9]).unwrap();
        assert_eq!(all.kept_tokens, vec![1, 2, 3]);
    }

    #[test]
    fn greedy_fallback_keeps_argmax() {
        let s = greedy_mask(&[1, 2, 3], &[0.1, 0.1, 0.1]).unwrap();
        assert_eq!(s.mask.iter().filter(|&&m| m).count(), 1);
        assert_eq!(s.mask, vec![true, false, false]);
        let s = greedy_mask(&[1, 2, 3], &[0.1, 0.3, 0.2]).unwrap();
        assert_eq!(s.kept_tokens, vec![2]);
    }

    #[test]
    fn near_deterministic_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eps = 1e-12;
        for _ in 0..100 {
            let s = sample_mask(&[1, 2], &[1.0 - eps, eps], &mut rng).unwrap();
            assert_eq!(s.mask, vec![true, false]);
        }
    }

    #[test]
    fn sampled_log_prob_matches_recomputation() {
        let n = tiny();
        let tokens = [4, 5, 6, 7];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = n.sample(&tokens, &mut rng).unwrap();
            let again = n.net.mask_log_prob(&n.params, &tokens, &s.mask, None).unwrap();
            assert!((s.log_prob - again).abs() < 1e-12);
            assert!(s.log_prob <= 0.0);
            assert_eq!(s.kept_tokens.len(), s.mask.iter().filter(|&&m| m).count());
        }
    }

    #[test]
    fn all_removed_sample_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_mask(&[7, 8, 9], &[1e-15, 2e-15, 1e-15], &mut rng).unwrap();
        assert_eq!(s.kept_tokens, vec![8]);
        assert!(s.log_prob < -30.0);
    }

    #[test]
    fn apply_mask_cases() {
        let x = ["worst", "cleaning", "job", "ever", "!"];
        assert_eq!(
            apply_mask(&x, &[false, true, true, true, true]).unwrap(),
            vec!["cleaning", "job", "ever", "!"]
        );
        assert_eq!(apply_mask(&x, &[true; 5]).unwrap(), x.to_vec());
        assert!(apply_mask(&x, &[false; 5]).unwrap().is_empty());
        assert!(matches!(apply_mask(&x, &[true; 4]), Err(Error::Validation(_))));
    }

    #[test]
    fn untrained_classifier_cannot_supervise() {
        use crate::attn_classifier::ClassifierConfig;
        let c = AttnClassifier::new(ClassifierConfig { vocab_size: 10, embedding_size: 3, hidden_size: 3, seed: 0 }, 0.6);
        let data = vec![Example { tokens: vec![4], sentiment: crate::Sentiment::Positive, raw_text: "a".into() }];
        assert!(matches!(tag_with_classifier(&data, &c), Err(Error::Precondition(_))));
    }

    #[test]
    fn zero_epochs_leave_state_unchanged() {
        let mut n = tiny();
        let before = n.clone();
        let data = vec![TaggedSentence { tokens: vec![4, 5], mask: vec![true, false] }];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        n.pretrain(&data, &FitOptions { epochs: 0, batch_size: 2, clip_norm: 2.0 }, &Workers::serial(), &mut rng)
            .unwrap();
        assert_eq!(n, before);
    }
}
