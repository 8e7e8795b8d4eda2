//! Deterministic template corpus with known emotional positions.
//!
//! A template is a space-separated token string. The token [`EMOTION_SLOT`]
//! is replaced by a word from the positive or negative inventory; any token
//! naming a key of `fillers` is replaced by one of that key's neutral words;
//! everything else is copied verbatim.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplits, Sentence, Sentiment};
use crate::error::{Error, Result};

pub const EMOTION_SLOT: &str = "ADJ";

const MAX_ATTEMPTS: usize = 10_000;

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub templates: Vec<String>,
    pub positive_words: Vec<String>,
    pub negative_words: Vec<String>,
    #[serde(default)]
    pub fillers: BTreeMap<String, Vec<String>>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    #[serde(default)]
    pub seed: u64,
    /// Alternate labels so every prefix of the corpus is balanced.
    #[serde(default = "default_true")]
    pub balanced: bool,
}

impl TemplateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::validation("template spec has no templates"));
        }
        if self.positive_words.is_empty() || self.negative_words.is_empty() {
            return Err(Error::validation("both sentiment inventories must be non-empty"));
        }
        let pos: BTreeSet<&str> = self.positive_words.iter().map(String::as_str).collect();
        let neg: BTreeSet<&str> = self.negative_words.iter().map(String::as_str).collect();
        if let Some(w) = pos.intersection(&neg).next() {
            return Err(Error::validation(format!(
                "`{w}` appears in both positive and negative inventories"
            )));
        }
        for (slot, words) in &self.fillers {
            if words.is_empty() {
                return Err(Error::validation(format!("filler slot `{slot}` is empty")));
            }
            if slot == EMOTION_SLOT {
                return Err(Error::validation("filler slot may not be named ADJ"));
            }
            if let Some(w) = words.iter().find(|w| pos.contains(w.as_str()) || neg.contains(w.as_str())) {
                return Err(Error::validation(format!(
                    "filler word `{w}` is also an emotional word"
                )));
            }
        }
        for t in &self.templates {
            if !t.split_whitespace().any(|w| w == EMOTION_SLOT) {
                return Err(Error::validation(format!("template `{t}` has no ADJ slot")));
            }
        }
        Ok(())
    }

    /// The small built-in corpus used for desk-scale end-to-end runs.
    pub fn desk_default() -> Self {
        let s = |v: &[&str]| v.iter().map(|w| w.to_string()).collect::<Vec<_>>();
        let mut fillers = BTreeMap::new();
        fillers.insert(
            "NOUN".to_string(),
            s(&["food", "service", "staff", "pizza", "coffee", "room", "waiter", "menu", "burger", "soup", "salad", "bread"]),
        );
        fillers.insert(
            "PLACE".to_string(),
            s(&["restaurant", "hotel", "bar", "cafe", "diner", "shop", "bakery", "bistro"]),
        );
        fillers.insert("CITY".to_string(), s(&["vegas", "phoenix", "toronto", "boston", "austin", "denver"]));
        TemplateSpec {
            templates: s(&[
                "the NOUN is ADJ",
                "the NOUN was ADJ",
                "the NOUN at this PLACE is ADJ",
                "the NOUN at this PLACE was ADJ",
                "this PLACE in CITY is ADJ",
                "our NOUN was ADJ",
                "the NOUN in CITY was ADJ",
                "the PLACE has ADJ NOUN",
                "this PLACE serves ADJ NOUN",
                "we found the NOUN ADJ",
            ]),
            positive_words: s(&["delicious", "great", "excellent", "amazing", "friendly", "wonderful", "fantastic", "perfect"]),
            negative_words: s(&["terrible", "awful", "horrible", "rude", "disgusting", "bland", "dirty", "bad"]),
            fillers,
            n_train: 1600,
            n_val: 200,
            n_test: 200,
            seed: 7,
            balanced: true,
        }
    }
}

/// Builds disjoint train/validation/test splits of unique sentences.
pub fn synth_corpus(spec: &TemplateSpec, seed: u64) -> Result<DatasetSplits> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = spec.n_train + spec.n_val + spec.n_test;
    let mut seen = HashSet::with_capacity(total);
    let mut sentences = Vec::with_capacity(total);
    for k in 0..total {
        let sentiment = if spec.balanced {
            if k % 2 == 0 {
                Sentiment::Positive
            } else {
                Sentiment::Negative
            }
        } else if rng.gen_bool(0.5) {
            Sentiment::Positive
        } else {
            Sentiment::Negative
        };
        let mut attempts = 0;
        let sentence = loop {
            let s = generate(spec, sentiment, &mut rng);
            if seen.insert(s.raw_text.clone()) {
                break s;
            }
            attempts += 1;
            if attempts >= MAX_ATTEMPTS {
                return Err(Error::validation(format!(
                    "template space exhausted after {} unique sentences",
                    sentences.len()
                )));
            }
        };
        sentences.push(sentence);
    }
    let test = sentences.split_off(spec.n_train + spec.n_val);
    let validation = sentences.split_off(spec.n_train);
    Ok(DatasetSplits {
        train: sentences,
        validation,
        test,
    })
}

fn generate(spec: &TemplateSpec, sentiment: Sentiment, rng: &mut ChaCha8Rng) -> Sentence {
    let template = spec.templates.choose(rng).expect("validated non-empty");
    let inventory = match sentiment {
        Sentiment::Positive => &spec.positive_words,
        Sentiment::Negative => &spec.negative_words,
    };
    let mut tokens = Vec::new();
    let mut emotional = Vec::new();
    for w in template.split_whitespace() {
        if w == EMOTION_SLOT {
            emotional.push(tokens.len());
            tokens.push(inventory.choose(rng).expect("validated").clone());
        } else if let Some(words) = spec.fillers.get(w) {
            tokens.push(words.choose(rng).expect("validated").clone());
        } else {
            tokens.push(w.to_string());
        }
    }
    Sentence {
        raw_text: tokens.join(" "),
        tokens,
        sentiment,
        emotional_positions: Some(emotional),
    }
}
