//! Layered run configuration: defaults, then a JSON file, then environment
//! variables, then command-line flags. Environment and flags are merged by
//! clap before they reach [`resolve`].

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use cycletrans::cycle_trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Yelp,
    Amazon,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalOpts {
    /// JSON file with configuration overrides
    #[arg(long, global = true, env = "CYCLETRANS_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Random seed for every stage [default: 0]
    #[arg(long, global = true, env = "CYCLETRANS_SEED")]
    pub seed: Option<u64>,

    /// Worker threads; results do not depend on this [default: 1]
    #[arg(long, global = true, env = "CYCLETRANS_WORKERS")]
    pub workers: Option<usize>,

    /// Base hyperparameter set; `amazon` pre-trains for 3 and 5 epochs [default: yelp]
    #[arg(long, global = true, env = "CYCLETRANS_PRESET", value_enum)]
    pub preset: Option<Preset>,

    /// Cycled training iterations (minibatches) [default: 10000]
    #[arg(long, global = true, env = "CYCLETRANS_ITERATIONS")]
    pub iterations: Option<usize>,

    /// Minibatch size [default: 64]
    #[arg(long, global = true, env = "CYCLETRANS_BATCH_SIZE")]
    pub batch_size: Option<usize>,

    /// Adagrad learning rate for all models [default: 0.6]
    #[arg(long, global = true, env = "CYCLETRANS_LEARNING_RATE")]
    pub learning_rate: Option<f64>,

    /// LSTM hidden size [default: 256]
    #[arg(long, global = true, env = "CYCLETRANS_HIDDEN_SIZE")]
    pub hidden_size: Option<usize>,

    /// Word embedding size [default: 128]
    #[arg(long, global = true, env = "CYCLETRANS_EMBEDDING_SIZE")]
    pub embedding_size: Option<usize>,

    /// Vocabulary size cap, excluding reserved tokens [default: 50000]
    #[arg(long, global = true, env = "CYCLETRANS_VOCAB_CAP")]
    pub vocab_cap: Option<usize>,

    /// Global gradient-norm clipping threshold [default: 2]
    #[arg(long, global = true, env = "CYCLETRANS_CLIP_NORM")]
    pub clip_norm: Option<f64>,

    /// Weight of BLEU against confidence in the reward [default: 0.5]
    #[arg(long, global = true, env = "CYCLETRANS_BETA")]
    pub beta: Option<f64>,

    /// Classifier training epochs [default: 10]
    #[arg(long, global = true, env = "CYCLETRANS_CLASSIFIER_EPOCHS")]
    pub classifier_epochs: Option<usize>,

    /// Neutralizer pre-training epochs [default: 1, amazon: 3]
    #[arg(long, global = true, env = "CYCLETRANS_NEUTRALIZER_EPOCHS")]
    pub neutralizer_epochs: Option<usize>,

    /// Emotionalizer pre-training epochs [default: 4, amazon: 5]
    #[arg(long, global = true, env = "CYCLETRANS_EMOTIONALIZER_EPOCHS")]
    pub emotionalizer_epochs: Option<usize>,

    /// Decay of the moving-average reward baseline [default: 0.95]
    #[arg(long, global = true, env = "CYCLETRANS_BASELINE_DECAY")]
    pub baseline_decay: Option<f64>,

    /// Use the raw policy gradient without a reward baseline
    #[arg(long, global = true, env = "CYCLETRANS_NO_BASELINE")]
    pub no_baseline: bool,

    /// Maximum generated sentence length [default: 20]
    #[arg(long, global = true, env = "CYCLETRANS_MAX_LEN")]
    pub max_len: Option<usize>,

    /// Write checkpoints every N iterations, 0 for only at the end [default: 0]
    #[arg(long, global = true, env = "CYCLETRANS_CHECKPOINT_EVERY")]
    pub checkpoint_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub preset: Preset,
    pub workers: usize,
    /// Whether a seed was given explicitly rather than defaulted.
    pub seed_given: bool,
    pub train: TrainConfig,
    pub paths: Map<String, Value>,
}

impl RunConfig {
    pub fn with_path(mut self, name: &str, path: &Path) -> Self {
        self.paths.insert(name.into(), Value::String(path.display().to_string()));
        self
    }

    /// Writes the snapshot as `<dir>/<subcommand>.run_config.json`.
    pub fn snapshot(&self, dir: &Path) -> Result<()> {
        let path = dir.join(format!("{}.run_config.json", self.subcommand));
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

fn merge(base: &mut Map<String, Value>, overlay: Map<String, Value>) {
    for (k, v) in overlay {
        base.insert(k, v);
    }
}

pub fn resolve(subcommand: &str, g: &GlobalOpts) -> Result<RunConfig> {
    let mut file = Map::new();
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        match serde_json::from_str::<Value>(&text).with_context(|| format!("parsing config {}", path.display()))? {
            Value::Object(m) => file = m,
            _ => bail!("config {} must be a JSON object", path.display()),
        }
    }
    let file_preset = match file.remove("preset") {
        Some(v) => Some(serde_json::from_value::<Preset>(v).context("config key `preset`")?),
        None => None,
    };
    let file_workers = match file.remove("workers") {
        Some(v) => Some(serde_json::from_value::<usize>(v).context("config key `workers`")?),
        None => None,
    };
    let preset = g.preset.or(file_preset).unwrap_or(Preset::Yelp);
    let defaults = match preset {
        Preset::Yelp => TrainConfig::yelp(),
        Preset::Amazon => TrainConfig::amazon(),
    };
    let Value::Object(mut merged) = serde_json::to_value(&defaults)? else {
        unreachable!("TrainConfig serializes to an object")
    };
    if let Some(k) = file.keys().find(|k| !merged.contains_key(*k)) {
        bail!("unknown config key `{k}`");
    }
    let seed_given = g.seed.is_some() || file.contains_key("seed");
    merge(&mut merged, file);

    let mut flags = Map::new();
    let mut set = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            flags.insert(k.into(), v);
        }
    };
    set("seed", g.seed.map(Value::from));
    set("iterations", g.iterations.map(Value::from));
    set("batch_size", g.batch_size.map(Value::from));
    set("learning_rate", g.learning_rate.map(Value::from));
    set("hidden_size", g.hidden_size.map(Value::from));
    set("embedding_size", g.embedding_size.map(Value::from));
    set("vocab_cap", g.vocab_cap.map(Value::from));
    set("clip_norm", g.clip_norm.map(Value::from));
    set("beta", g.beta.map(Value::from));
    set("classifier_epochs", g.classifier_epochs.map(Value::from));
    set("neutralizer_epochs", g.neutralizer_epochs.map(Value::from));
    set("emotionalizer_epochs", g.emotionalizer_epochs.map(Value::from));
    set("baseline_decay", g.baseline_decay.map(Value::from));
    set("max_len", g.max_len.map(Value::from));
    set("checkpoint_every", g.checkpoint_every.map(Value::from));
    if g.no_baseline {
        set("use_baseline", Some(Value::Bool(false)));
    }
    merge(&mut merged, flags);

    let train: TrainConfig = serde_json::from_value(Value::Object(merged)).context("invalid configuration")?;
    train.validate()?;
    let workers = g.workers.or(file_workers).unwrap_or(1).max(1);
    Ok(RunConfig { subcommand: subcommand.into(), preset, workers, seed_given, train, paths: Map::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_published_values() {
        let rc = resolve("train", &GlobalOpts::default()).unwrap();
        assert_eq!(rc.train, TrainConfig::default());
        assert_eq!(rc.workers, 1);
        assert!(!rc.seed_given);
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"batch_size": 8, "hidden_size": 16, "workers": 2, "preset": "amazon"}"#).unwrap();
        let g = GlobalOpts { config: Some(path.clone()), hidden_size: Some(32), ..Default::default() };
        let rc = resolve("train", &g).unwrap();
        assert_eq!((rc.train.batch_size, rc.train.hidden_size, rc.workers), (8, 32, 2));
        assert_eq!(rc.train.emotionalizer_epochs, 5);

        std::fs::write(&path, r#"{"batch_sise": 8}"#).unwrap();
        assert!(resolve("train", &GlobalOpts { config: Some(path), ..Default::default() }).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let g = GlobalOpts { batch_size: Some(0), ..Default::default() };
        assert!(resolve("train", &g).is_err());
    }
}
