//! Reference computations the library is checked against.

use cycletrans::attn_classifier::{ClassifierConfig, ClassifierNet};
use cycletrans::cycle_trainer::policy_gradient;
use cycletrans::emotionalizer::{Emotionalizer, EmotionalizerConfig, EmotionalizerNet, Reconstruction};
use cycletrans::evalkit::{TextCnnConfig, TextCnnNet};
use cycletrans::neutralizer::{sample_bernoulli, Neutralizer, NeutralizerConfig, TaggedSentence};
use cycletrans::nn::gradcheck::{check, GradCheckReport};
use cycletrans::nn::{Gradients, ParamSet};
use cycletrans::{Example, Sentiment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPSILON: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// Moves every parameter by up to ±0.5 so gradients are not dominated by
/// the near-zero initialization.
pub fn perturb(params: &mut ParamSet, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in params.ids().collect::<Vec<_>>() {
        for v in params.get_mut(id).data.iter_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
    }
}

fn ex(tokens: &[usize], s: Sentiment) -> Example {
    Example { tokens: tokens.to_vec(), sentiment: s, raw_text: String::new() }
}

fn examples() -> Vec<Example> {
    vec![
        ex(&[4, 5, 6], Sentiment::Positive),
        ex(&[7, 8, 9, 4, 5], Sentiment::Negative),
    ]
}

pub fn classifier_gradcheck() -> GradCheckReport {
    let cfg = ClassifierConfig { vocab_size: 10, embedding_size: 3, hidden_size: 4, seed: 1 };
    let (net, mut params) = ClassifierNet::build(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
    perturb(&mut params, 11);
    let data = examples();
    let loss = |p: &ParamSet| data.iter().map(|e| net.loss(p, e, None).unwrap()).sum::<f64>();
    let mut g = Gradients::zeros_like(&params);
    for e in &data {
        net.loss(&params, e, Some(&mut g)).unwrap();
    }
    check(&params, &g, EPSILON, loss)
}

pub fn neutralizer_gradcheck() -> GradCheckReport {
    let cfg = NeutralizerConfig { vocab_size: 10, embedding_size: 3, hidden_size: 4, seed: 2 };
    let n = Neutralizer::new(cfg, 0.6);
    let mut params = n.params.clone();
    perturb(&mut params, 12);
    let data = vec![
        TaggedSentence { tokens: vec![4, 5, 6], mask: vec![true, false, true] },
        TaggedSentence { tokens: vec![7, 8, 9, 4], mask: vec![false, true, true, true] },
    ];
    let loss = |p: &ParamSet| {
        data.iter().map(|e| Neutralizer::tagging_loss(p, &n.net, e, None).unwrap()).sum::<f64>()
    };
    let mut g = Gradients::zeros_like(&params);
    for e in &data {
        Neutralizer::tagging_loss(&params, &n.net, e, Some(&mut g)).unwrap();
    }
    check(&params, &g, EPSILON, loss)
}

/// Covers both decoders plus the shared encoder.
pub fn emotionalizer_gradcheck() -> GradCheckReport {
    let cfg = EmotionalizerConfig { vocab_size: 10, embedding_size: 3, hidden_size: 4, max_len: 8, seed: 3 };
    let (net, mut params) = EmotionalizerNet::build(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
    perturb(&mut params, 13);
    let data = vec![
        Reconstruction { content: vec![4, 5], target: vec![4, 6, 5], sentiment: Sentiment::Positive },
        Reconstruction { content: vec![7], target: vec![7, 8], sentiment: Sentiment::Negative },
        Reconstruction { content: vec![], target: vec![9], sentiment: Sentiment::Negative },
    ];
    let loss = |p: &ParamSet| {
        data.iter()
            .map(|e| -net.log_likelihood(p, &e.content, &e.target, e.sentiment, None))
            .sum::<f64>()
    };
    let mut g = Gradients::zeros_like(&params);
    for e in &data {
        Emotionalizer::reconstruction_grad(&params, &net, e, &mut g);
    }
    check(&params, &g, EPSILON, loss)
}

pub fn textcnn_gradcheck() -> GradCheckReport {
    let cfg = TextCnnConfig { filters: 3, ..TextCnnConfig::new(10, 3, 4) };
    let (net, mut params) = TextCnnNet::build(&cfg, &mut ChaCha8Rng::seed_from_u64(4));
    perturb(&mut params, 14);
    let data = examples();
    let loss = |p: &ParamSet| data.iter().map(|e| net.loss(p, e, None)).sum::<f64>();
    let mut g = Gradients::zeros_like(&params);
    for e in &data {
        net.loss(&params, e, Some(&mut g));
    }
    check(&params, &g, EPSILON, loss)
}

/// Policy-gradient setting: a perturbed tagger over a four-token sentence
/// and a fixed reward for each of the sixteen masks.
pub struct PgSetup {
    pub neutralizer: Neutralizer,
    pub tokens: Vec<usize>,
    pub probs: Vec<f64>,
    pub masks: Vec<Vec<bool>>,
    pub mask_prob: Vec<f64>,
    pub reward: Vec<f64>,
    /// `∇ log P(mask)` per mask, flattened.
    pub score: Vec<Gradients>,
}

pub fn mask_of(index: usize, len: usize) -> Vec<bool> {
    (0..len).map(|i| index >> i & 1 == 1).collect()
}

pub fn mask_index(mask: &[bool]) -> usize {
    mask.iter().enumerate().map(|(i, &m)| (m as usize) << i).sum()
}

pub fn pg_setup() -> PgSetup {
    let cfg = NeutralizerConfig { vocab_size: 10, embedding_size: 4, hidden_size: 4, seed: 5 };
    let mut neutralizer = Neutralizer::new(cfg, 0.6);
    perturb(&mut neutralizer.params, 15);
    let tokens = vec![4, 5, 6, 7];
    let probs = neutralizer.tag_probabilities(&tokens).unwrap();
    let masks: Vec<Vec<bool>> = (0..16).map(|m| mask_of(m, 4)).collect();
    let reward = (0..16).map(|m| ((5 * m + 3) % 16) as f64 / 8.0).collect();
    let mut mask_prob = Vec::new();
    let mut score = Vec::new();
    for m in &masks {
        let mut g = Gradients::zeros_like(&neutralizer.params);
        let lp = neutralizer
            .net
            .mask_log_prob(&neutralizer.params, &tokens, m, Some((&mut g, 1.0)))
            .unwrap();
        mask_prob.push(lp.exp());
        score.push(g);
    }
    PgSetup { neutralizer, tokens, probs, masks, mask_prob, reward, score }
}

impl PgSetup {
    /// `Σ_m P(m) R(m) ∇ log P(m)`.
    pub fn exact(&self) -> Gradients {
        self.weighted(|m| self.reward[m])
    }

    /// `Σ_m P(m) ∇ log P(m)`, zero in exact arithmetic.
    pub fn score_sum(&self) -> Gradients {
        self.weighted(|_| 1.0)
    }

    fn weighted(&self, w: impl Fn(usize) -> f64) -> Gradients {
        let mut acc = Gradients::zeros_like(&self.neutralizer.params);
        for m in 0..self.masks.len() {
            let mut g = self.score[m].clone();
            g.scale(self.mask_prob[m] * w(m));
            acc.add_assign(&g);
        }
        acc
    }

    /// Finite-difference check of the exact gradient against `J(θ) = Σ P_θ(m) R(m)`.
    pub fn exact_vs_fd(&self) -> GradCheckReport {
        let net = &self.neutralizer.net;
        let j = |p: &ParamSet| {
            self.masks
                .iter()
                .zip(&self.reward)
                .map(|(m, r)| net.mask_log_prob(p, &self.tokens, m, None).unwrap().exp() * r)
                .sum::<f64>()
        };
        check(&self.neutralizer.params, &self.exact(), EPSILON, j)
    }

    /// Flat coordinates belonging to the tagger's output layer.
    pub fn head_coords(&self) -> Vec<usize> {
        let p = &self.neutralizer.params;
        let mut out = Vec::new();
        let mut offset = 0;
        for id in p.ids() {
            let len = p.get(id).len();
            if p.name(id).starts_with("head") {
                out.extend(offset..offset + len);
            }
            offset += len;
        }
        out
    }
}

pub struct MonteCarlo {
    pub mean: Vec<f64>,
    pub standard_error: Vec<f64>,
    /// Projections of the per-sample estimates onto fixed random directions:
    /// (mean, standard error, exact value).
    pub projections: Vec<(f64, f64, f64)>,
}

/// Draws `n` masks with the raw Bernoulli sampler and averages the
/// per-sample estimator `(R − b) ∇ log P(mask)`.
pub fn monte_carlo(setup: &PgSetup, n: usize, baseline: f64, seed: u64) -> MonteCarlo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_mask: Vec<Vec<f64>> = (0..setup.masks.len())
        .map(|m| policy_gradient(&setup.score[m], setup.reward[m], baseline).flatten())
        .collect();
    let dim = per_mask[0].len();
    let exact = setup.exact().flatten();
    let directions: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..dim).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let proj: Vec<Vec<f64>> = per_mask
        .iter()
        .map(|g| directions.iter().map(|d| dot(g, d)).collect())
        .collect();

    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let mut psum = [0.0; 3];
    let mut psq = [0.0; 3];
    for _ in 0..n {
        let m = mask_index(&sample_bernoulli(&setup.probs, &mut rng));
        for (k, v) in per_mask[m].iter().enumerate() {
            sum[k] += v;
            sq[k] += v * v;
        }
        for k in 0..3 {
            psum[k] += proj[m][k];
            psq[k] += proj[m][k] * proj[m][k];
        }
    }
    let nf = n as f64;
    let stats = |s: f64, q: f64| {
        let mean = s / nf;
        let var = (q / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
        (mean, (var / nf).sqrt())
    };
    let (mean, standard_error) = (0..dim).map(|k| stats(sum[k], sq[k])).unzip();
    let projections = (0..3)
        .map(|k| {
            let (m, se) = stats(psum[k], psq[k]);
            (m, se, dot(&exact, &directions[k]))
        })
        .collect();
    MonteCarlo { mean, standard_error, projections }
}

/// Largest |MC mean − exact| / SE over the head coordinates and projections.
pub fn max_z(setup: &PgSetup, mc: &MonteCarlo) -> f64 {
    let exact = setup.exact().flatten();
    let mut worst: f64 = 0.0;
    for k in setup.head_coords() {
        worst = worst.max((mc.mean[k] - exact[k]).abs() / mc.standard_error[k]);
    }
    for &(m, se, e) in &mc.projections {
        worst = worst.max((m - e).abs() / se);
    }
    worst
}
