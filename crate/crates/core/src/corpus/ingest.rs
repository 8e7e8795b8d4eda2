//! Raw review files → sentence-level text/sentiment pairs.
//!
//! Per review: validate the rating and map it to a label (rating 3 is
//! dropped), drop reviews longer than [`MAX_WORDS`] tokens, keep the first
//! sentence, and optionally drop pairs the classifier is not confident
//! about. Survivors are routed to train/validation/test by a hash of their
//! text, so the same text always lands in the same split.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenize::{first_sentence, length_filter, tokenize, MAX_WORDS};
use super::vocab::{FrequencyTable, Vocabulary};
use super::{DatasetSplits, Sentence, Sentiment};
use crate::error::{Error, Result};

/// Pairs whose own-label probability is below this are dropped.
pub const CONFIDENCE_THRESHOLD: f64 = 0.8;

const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub text: String,
    pub rating: i64,
}

impl Review {
    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.rating) {
            return Err(Error::validation(format!("rating {} outside 1..=5", self.rating)));
        }
        if self.text.trim().is_empty() {
            return Err(Error::validation("empty review text"));
        }
        Ok(())
    }

    /// Parses a JSON object line or a `rating<TAB>text` line.
    pub fn parse_line(line: &str) -> Result<Review> {
        let trimmed = line.trim_start();
        let review = if trimmed.starts_with('{') {
            serde_json::from_str::<Review>(trimmed)?
        } else {
            let (rating, text) = line
                .split_once('\t')
                .ok_or_else(|| Error::validation("expected `rating<TAB>text`"))?;
            let rating = rating
                .trim()
                .parse()
                .map_err(|_| Error::validation(format!("bad rating `{rating}`")))?;
            Review { text: text.to_string(), rating }
        };
        review.validate()?;
        Ok(review)
    }
}

/// `Ok(None)` is the drop marker for the neutral rating 3.
pub fn label_from_rating(rating: i64) -> Result<Option<Sentiment>> {
    match rating {
        4 | 5 => Ok(Some(Sentiment::Positive)),
        1 | 2 => Ok(Some(Sentiment::Negative)),
        3 => Ok(None),
        r => Err(Error::validation(format!("rating {r} outside 1..=5"))),
    }
}

/// Anything that can score how strongly a token sequence carries a sentiment.
pub trait ConfidenceOracle: Sync {
    fn confidence(&self, tokens: &[String], sentiment: Sentiment) -> Result<f64>;
}

/// Keep iff the oracle's probability of the sentence's own label is at least 0.8.
pub fn confidence_filter(sentence: &Sentence, oracle: &dyn ConfidenceOracle) -> Result<bool> {
    Ok(oracle.confidence(&sentence.tokens, sentence.sentiment)? >= CONFIDENCE_THRESHOLD)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub vocab_cap: usize,
    pub workers: usize,
    /// Abort when more than this fraction of records fail to parse.
    pub max_malformed_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            train_fraction: 0.9,
            validation_fraction: 0.05,
            vocab_cap: 50_000,
            workers: 1,
            max_malformed_fraction: 0.1,
        }
    }
}

impl IngestOptions {
    /// Deterministic split assignment from the first eight bytes of SHA-256(raw_text).
    pub fn split_of(&self, raw_text: &str) -> Split {
        let digest = Sha256::digest(raw_text.as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        let u = (u64::from_be_bytes(b) >> 11) as f64 / (1u64 << 53) as f64;
        if u < self.train_fraction {
            Split::Train
        } else if u < self.train_fraction + self.validation_fraction {
            Split::Validation
        } else {
            Split::Test
        }
    }
}

/// Drop counts per filter stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub total: usize,
    pub malformed: usize,
    pub rating_three: usize,
    pub empty: usize,
    pub too_long: usize,
    pub low_confidence: usize,
    pub kept: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub unknown_rate: f64,
}

#[derive(Debug)]
enum Outcome {
    Malformed,
    RatingThree,
    Empty,
    TooLong,
    LowConfidence,
    Kept(Sentence),
}

fn process_line(line: &str, oracle: Option<&dyn ConfidenceOracle>) -> Result<Outcome> {
    let review = match Review::parse_line(line) {
        Ok(r) => r,
        Err(_) => return Ok(Outcome::Malformed),
    };
    let sentiment = match label_from_rating(review.rating)? {
        Some(s) => s,
        None => return Ok(Outcome::RatingThree),
    };
    let whole = match tokenize(&review.text) {
        Ok(t) => t,
        Err(_) => return Ok(Outcome::Empty),
    };
    if !length_filter(&whole) {
        return Ok(Outcome::TooLong);
    }
    let first = first_sentence(&review.text);
    let tokens = match tokenize(&first) {
        Ok(t) => t,
        Err(_) => return Ok(Outcome::Empty),
    };
    debug_assert!(tokens.len() <= MAX_WORDS);
    let sentence = Sentence {
        tokens,
        sentiment,
        raw_text: first,
        emotional_positions: None,
    };
    if let Some(o) = oracle {
        if !confidence_filter(&sentence, o)? {
            return Ok(Outcome::LowConfidence);
        }
    }
    Ok(Outcome::Kept(sentence))
}

#[derive(Debug)]
pub struct IngestOutput {
    pub splits: DatasetSplits,
    pub stats: IngestStats,
    pub vocab: Vocabulary,
}

/// Streams `reader`, handing each survivor to `sink` in input order, and
/// returns statistics plus the training-split frequency table.
fn run<R, F>(
    reader: R,
    options: &IngestOptions,
    oracle: Option<&dyn ConfidenceOracle>,
    mut sink: F,
) -> Result<(IngestStats, FrequencyTable)>
where
    R: BufRead,
    F: FnMut(Split, &Sentence) -> Result<()>,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
    let mut stats = IngestStats::default();
    let mut freq = FrequencyTable::new();
    let mut lines = reader.lines();
    loop {
        let mut chunk = Vec::with_capacity(CHUNK);
        for line in lines.by_ref() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            chunk.push(line);
            if chunk.len() == CHUNK {
                break;
            }
        }
        if chunk.is_empty() {
            break;
        }
        let outcomes: Vec<Result<Outcome>> = if options.workers > 1 {
            use rayon::prelude::*;
            pool.install(|| chunk.par_iter().map(|l| process_line(l, oracle)).collect())
        } else {
            chunk.iter().map(|l| process_line(l, oracle)).collect()
        };
        for outcome in outcomes {
            stats.total += 1;
            match outcome? {
                Outcome::Malformed => stats.malformed += 1,
                Outcome::RatingThree => stats.rating_three += 1,
                Outcome::Empty => stats.empty += 1,
                Outcome::TooLong => stats.too_long += 1,
                Outcome::LowConfidence => stats.low_confidence += 1,
                Outcome::Kept(s) => {
                    stats.kept += 1;
                    let split = options.split_of(&s.raw_text);
                    match split {
                        Split::Train => {
                            stats.train += 1;
                            freq.add(&s.tokens);
                        }
                        Split::Validation => stats.validation += 1,
                        Split::Test => stats.test += 1,
                    }
                    sink(split, &s)?;
                }
            }
        }
    }
    if stats.total > 0
        && stats.malformed as f64 > options.max_malformed_fraction * stats.total as f64
    {
        return Err(Error::validation(format!(
            "{} of {} records malformed (limit {:.0}%)",
            stats.malformed,
            stats.total,
            options.max_malformed_fraction * 100.0
        )));
    }
    Ok((stats, freq))
}

fn unknown_rate<'a>(vocab: &Vocabulary, sentences: impl Iterator<Item = &'a Sentence>) -> f64 {
    let (mut unk, mut n) = (0usize, 0usize);
    for s in sentences {
        for t in &s.tokens {
            n += 1;
            if !vocab.contains(t) {
                unk += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        unk as f64 / n as f64
    }
}

/// In-memory ingestion.
pub fn ingest_reader<R: BufRead>(
    reader: R,
    options: &IngestOptions,
    oracle: Option<&dyn ConfidenceOracle>,
) -> Result<IngestOutput> {
    let mut splits = DatasetSplits::default();
    let (mut stats, freq) = run(reader, options, oracle, |split, s| {
        match split {
            Split::Train => splits.train.push(s.clone()),
            Split::Validation => splits.validation.push(s.clone()),
            Split::Test => splits.test.push(s.clone()),
        }
        Ok(())
    })?;
    let vocab = Vocabulary::from_counts(&freq, options.vocab_cap);
    stats.unknown_rate = unknown_rate(&vocab, splits.all());
    Ok(IngestOutput { splits, stats, vocab })
}

/// Streaming ingestion into `out_dir`: split files, `vocab.txt`, `ingest_stats.json`.
pub fn ingest_file(
    raw_path: &Path,
    out_dir: &Path,
    options: &IngestOptions,
    oracle: Option<&dyn ConfidenceOracle>,
) -> Result<(IngestStats, Vocabulary)> {
    std::fs::create_dir_all(out_dir)?;
    let open = |name: &str| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(out_dir.join(name))?))
    };
    let mut writers = [open("train.jsonl")?, open("validation.jsonl")?, open("test.jsonl")?];
    let reader = BufReader::new(File::open(raw_path)?);
    let (mut stats, freq) = run(reader, options, oracle, |split, s| {
        let w = &mut writers[split as usize];
        serde_json::to_writer(&mut *w, s)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    for w in &mut writers {
        w.flush()?;
    }
    drop(writers);
    let vocab = Vocabulary::from_counts(&freq, options.vocab_cap);
    vocab.save(&out_dir.join("vocab.txt"))?;
    // second pass over the written splits for the coverage figure
    let splits = DatasetSplits::load(out_dir)?;
    stats.unknown_rate = unknown_rate(&vocab, splits.all());
    let mut w = open("ingest_stats.json")?;
    serde_json::to_writer_pretty(&mut w, &stats)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok((stats, vocab))
}
