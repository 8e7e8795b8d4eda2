pub mod attn_classifier;
pub mod corpus;
pub mod cycle_trainer;
pub mod emotionalizer;
pub mod error;
pub mod evalkit;
pub mod neutralizer;
pub mod nn;
pub mod reward;

pub use corpus::{DatasetSplits, Example, Sentence, Sentiment, Vocabulary};
pub use error::{Error, Result};
