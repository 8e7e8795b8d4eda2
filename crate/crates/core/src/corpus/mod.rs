//! Review ingestion, vocabularies and the synthetic template corpus.

pub mod ingest;
pub mod synth;
pub mod tokenize;
pub mod vocab;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{
    confidence_filter, label_from_rating, ConfidenceOracle, IngestOptions, IngestOutput,
    IngestStats, Review, CONFIDENCE_THRESHOLD,
};
pub use synth::{synth_corpus, TemplateSpec};
pub use tokenize::{first_sentence, length_filter, tokenize, MAX_WORDS};
pub use vocab::{FrequencyTable, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Negative,
}

impl Sentiment {
    pub fn opposite(self) -> Self {
        match self {
            Sentiment::Positive => Sentiment::Negative,
            Sentiment::Negative => Sentiment::Positive,
        }
    }

    /// Class index used by every classifier head: negative 0, positive 1.
    pub fn index(self) -> usize {
        match self {
            Sentiment::Negative => 0,
            Sentiment::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            Sentiment::Positive
        } else {
            Sentiment::Negative
        }
    }

    pub const ALL: [Sentiment; 2] = [Sentiment::Negative, Sentiment::Positive];
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sentiment::Positive => "positive",
            Sentiment::Negative => "negative",
        })
    }
}

impl FromStr for Sentiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "1" => Ok(Sentiment::Positive),
            "negative" | "neg" | "0" => Ok(Sentiment::Negative),
            other => Err(Error::validation(format!("unknown sentiment `{other}`"))),
        }
    }
}

/// A processed sentence in surface form: one line of a processed split file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub sentiment: Sentiment,
    pub raw_text: String,
    /// Ground-truth emotional token positions; only synthetic data has them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotional_positions: Option<Vec<usize>>,
}

/// A sentence mapped through a [`Vocabulary`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub sentiment: Sentiment,
    pub raw_text: String,
}

impl Example {
    pub fn encode(sentence: &Sentence, vocab: &Vocabulary) -> Self {
        Example {
            tokens: vocab.encode(&sentence.tokens),
            sentiment: sentence.sentiment,
            raw_text: sentence.raw_text.clone(),
        }
    }
}

pub fn encode_all(sentences: &[Sentence], vocab: &Vocabulary) -> Vec<Example> {
    sentences.iter().map(|s| Example::encode(s, vocab)).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub train: Vec<Sentence>,
    pub validation: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

impl DatasetSplits {
    pub fn all(&self) -> impl Iterator<Item = &Sentence> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `train.jsonl`, `validation.jsonl` and `test.jsonl` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_sentences(&dir.join("train.jsonl"), &self.train)?;
        write_sentences(&dir.join("validation.jsonl"), &self.validation)?;
        write_sentences(&dir.join("test.jsonl"), &self.test)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(DatasetSplits {
            train: read_sentences(&dir.join("train.jsonl"))?,
            validation: read_sentences(&dir.join("validation.jsonl"))?,
            test: read_sentences(&dir.join("test.jsonl"))?,
        })
    }
}

pub fn write_sentences(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in sentences {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
