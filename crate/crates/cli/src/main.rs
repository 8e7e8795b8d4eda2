mod config;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use cycletrans::attn_classifier::{AttnClassifier, VocabClassifier};
use cycletrans::corpus::ingest::{ingest_file, IngestOptions};
use cycletrans::corpus::{encode_all, synth_corpus, tokenize, DatasetSplits, Example, Sentiment, TemplateSpec, Vocabulary};
use cycletrans::cycle_trainer::{
    pretrain_all, pretrain_classifier, pretrain_emotionalizer, pretrain_neutralizer, run_cycles_to_dir, Models,
    CLASSIFIER_FILE, EMOTIONALIZER_FILE, NEUTRALIZER_FILE,
};
use cycletrans::emotionalizer::Emotionalizer;
use cycletrans::evalkit::{evaluate, train_eval_classifier, EvalClassifier, TextCnnConfig, DEFAULT_FILTERS};
use cycletrans::neutralizer::Neutralizer;
use cycletrans::nn::train::{FitOptions, Workers};
use cycletrans::nn::Checkpoint;
use cycletrans::Error;

use config::{resolve, GlobalOpts};

const VOCAB_FILE: &str = "vocab.txt";
const EVAL_CLASSIFIER_FILE: &str = "eval_classifier.ckpt.json";

#[derive(Parser, Debug)]
#[command(name = "cycletrans", version, about = "Sentiment transfer by neutralization and cycled reinforcement learning")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter and split raw reviews into a training corpus
    Ingest {
        /// Reviews, one per line: JSON `{"text", "rating"}` or `rating<TAB>text`
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Models directory with a trained classifier, enabling the confidence filter
        #[arg(long)]
        classifier: Option<PathBuf>,
    },
    /// Generate a template corpus with known emotional positions
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Template spec JSON; the built-in restaurant templates when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train the attention classifier
    PretrainClassifier {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models: PathBuf,
    },
    /// Pre-train the neutralizer on the classifier's attention masks
    PretrainNeutralizer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models: PathBuf,
    },
    /// Pre-train the emotionalizer on classifier-neutralized sentences
    PretrainEmotionalizer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models: PathBuf,
    },
    /// Cycled training; pre-trains everything first unless --models is given
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory holding the three pre-trained checkpoints
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Rewrite sentences with the requested sentiment
    Translate {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        to: Sentiment,
        /// One sentence per line
        #[arg(long, conflicts_with = "text")]
        input: Option<PathBuf>,
        #[arg(long)]
        text: Vec<String>,
        /// Write translations here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the convolutional evaluation classifier
    TrainEvalClassifier {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Filters per width [default: 100]
        #[arg(long, default_value_t = DEFAULT_FILTERS)]
        filters: usize,
        /// Training epochs [default: 3]
        #[arg(long, default_value_t = 3)]
        epochs: usize,
    },
    /// Score generated sentences: transfer accuracy, content BLEU, G-score
    Evaluate {
        /// Source sentences, one per line
        #[arg(long)]
        sources: PathBuf,
        /// Generated sentences aligned with the sources
        #[arg(long)]
        generated: PathBuf,
        /// Target sentiment per line (`positive` or `negative`)
        #[arg(long)]
        targets: PathBuf,
        /// Directory written by train-eval-classifier
        #[arg(long)]
        eval_model: PathBuf,
        /// Write the JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show attention weights and the words the models would remove
    InspectAttention {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        json: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Synth { .. } => "synth",
            Command::PretrainClassifier { .. } => "pretrain-classifier",
            Command::PretrainNeutralizer { .. } => "pretrain-neutralizer",
            Command::PretrainEmotionalizer { .. } => "pretrain-emotionalizer",
            Command::Train { .. } => "train",
            Command::Translate { .. } => "translate",
            Command::TrainEvalClassifier { .. } => "train-eval-classifier",
            Command::Evaluate { .. } => "evaluate",
            Command::InspectAttention { .. } => "inspect-attention",
        }
    }
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!(Error::precondition(format!(
            "{} not found; run `cycletrans {producer}` first",
            path.display()
        )));
    }
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<(DatasetSplits, Vocabulary)> {
    require(&dir.join("train.jsonl"), "ingest` or `cycletrans synth")?;
    let vocab_path = dir.join(VOCAB_FILE);
    require(&vocab_path, "ingest` or `cycletrans synth")?;
    let splits = DatasetSplits::load(dir).with_context(|| format!("loading dataset from {}", dir.display()))?;
    let vocab = Vocabulary::load(&vocab_path)?;
    Ok((splits, vocab))
}

fn load_checkpoint(dir: &Path, file: &str, producer: &str, vocab: &Vocabulary) -> Result<Checkpoint> {
    let path = dir.join(file);
    require(&path, producer)?;
    let ck = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    if ck.vocab_hash != vocab.hash() {
        bail!(Error::Checkpoint(format!("{} was trained with a different vocabulary", path.display())));
    }
    Ok(ck)
}

fn models_vocab(dir: &Path) -> Result<Vocabulary> {
    let path = dir.join(VOCAB_FILE);
    require(&path, "pretrain-classifier")?;
    Ok(Vocabulary::load(&path)?)
}

/// Ensures `models` holds the dataset vocabulary, copying it on first use.
fn bind_vocab(models: &Path, vocab: &Vocabulary) -> Result<()> {
    fs::create_dir_all(models)?;
    let path = models.join(VOCAB_FILE);
    if path.exists() {
        if Vocabulary::load(&path)?.hash() != vocab.hash() {
            bail!(Error::validation(format!("{} belongs to a different dataset", models.display())));
        }
    } else {
        vocab.save(&path)?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f).lines().map(|l| Ok(l?)).collect()
}

fn tokens_or_empty(line: &str) -> Vec<String> {
    tokenize(line).unwrap_or_default()
}

fn run(cli: Cli) -> Result<()> {
    let name = cli.command.name();
    let rc = resolve(name, &cli.global)?;
    let workers = Workers::new(rc.workers)?;
    let cfg = &rc.train;
    match cli.command {
        Command::Ingest { input, out, classifier } => {
            let opts = IngestOptions { vocab_cap: cfg.vocab_cap, workers: rc.workers, ..IngestOptions::default() };
            let loaded = match &classifier {
                Some(dir) => {
                    let vocab = models_vocab(dir)?;
                    let ck = load_checkpoint(dir, CLASSIFIER_FILE, "pretrain-classifier", &vocab)?;
                    Some((vocab, AttnClassifier::from_checkpoint(&ck, cfg.learning_rate)?))
                }
                None => None,
            };
            let oracle = loaded.as_ref().map(|(vocab, model)| VocabClassifier { vocab, model });
            let (stats, vocab) = ingest_file(&input, &out, &opts, oracle.as_ref().map(|o| o as _))
                .with_context(|| format!("ingesting {}", input.display()))?;
            rc.with_path("input", &input).with_path("out", &out).snapshot(&out)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
            println!("vocabulary: {} entries", vocab.len());
        }
        Command::Synth { out, spec } => {
            let spec = match &spec {
                Some(p) => serde_json::from_str::<TemplateSpec>(&fs::read_to_string(p)?)
                    .with_context(|| format!("parsing template spec {}", p.display()))?,
                None => TemplateSpec::desk_default(),
            };
            let seed = if rc.seed_given { cfg.seed } else { spec.seed };
            let splits = synth_corpus(&spec, seed)?;
            let toks: Vec<&Vec<String>> = splits.train.iter().map(|s| &s.tokens).collect();
            let vocab = Vocabulary::build(&toks.into_iter().cloned().collect::<Vec<_>>(), cfg.vocab_cap);
            fs::create_dir_all(&out)?;
            splits.save(&out)?;
            vocab.save(&out.join(VOCAB_FILE))?;
            write_json(&out.join("template_spec.json"), &spec)?;
            rc.with_path("out", &out).snapshot(&out)?;
            println!(
                "{} train / {} validation / {} test sentences, vocabulary {}",
                splits.train.len(),
                splits.validation.len(),
                splits.test.len(),
                vocab.len()
            );
        }
        Command::PretrainClassifier { data, models } => {
            let (splits, vocab) = load_dataset(&data)?;
            bind_vocab(&models, &vocab)?;
            let train = encode_all(&splits.train, &vocab);
            let (c, report) = pretrain_classifier(&train, vocab.len(), cfg, &workers)?;
            c.to_checkpoint(&vocab.hash()).save(&models.join(CLASSIFIER_FILE))?;
            write_json(&models.join("classifier.report.json"), &report)?;
            rc.with_path("data", &data).with_path("models", &models).snapshot(&models)?;
            let val = encode_all(&splits.validation, &vocab);
            println!("epoch losses: {:?}", report.epoch_losses);
            println!("validation accuracy: {:.4}", c.accuracy(&val)?);
        }
        Command::PretrainNeutralizer { data, models } => {
            let (splits, vocab) = load_dataset(&data)?;
            bind_vocab(&models, &vocab)?;
            let ck = load_checkpoint(&models, CLASSIFIER_FILE, "pretrain-classifier", &vocab)?;
            let c = AttnClassifier::from_checkpoint(&ck, cfg.learning_rate)?;
            let train = encode_all(&splits.train, &vocab);
            let (n, report) = pretrain_neutralizer(&train, &c, cfg, &workers)?;
            n.to_checkpoint(&vocab.hash()).save(&models.join(NEUTRALIZER_FILE))?;
            write_json(&models.join("neutralizer.report.json"), &report)?;
            rc.with_path("data", &data).with_path("models", &models).snapshot(&models)?;
            println!("epoch losses: {:?}", report.epoch_losses);
        }
        Command::PretrainEmotionalizer { data, models } => {
            let (splits, vocab) = load_dataset(&data)?;
            bind_vocab(&models, &vocab)?;
            let ck = load_checkpoint(&models, CLASSIFIER_FILE, "pretrain-classifier", &vocab)?;
            let c = AttnClassifier::from_checkpoint(&ck, cfg.learning_rate)?;
            let train = encode_all(&splits.train, &vocab);
            let (e, report) = pretrain_emotionalizer(&train, &c, cfg, &workers)?;
            e.to_checkpoint(&vocab.hash()).save(&models.join(EMOTIONALIZER_FILE))?;
            write_json(&models.join("emotionalizer.report.json"), &report)?;
            rc.with_path("data", &data).with_path("models", &models).snapshot(&models)?;
            println!("epoch losses: {:?}", report.epoch_losses);
        }
        Command::Train { data, out, models } => {
            let (splits, vocab) = load_dataset(&data)?;
            let train = encode_all(&splits.train, &vocab);
            let mut triplet = match &models {
                Some(dir) => {
                    let lr = cfg.learning_rate;
                    let c = load_checkpoint(dir, CLASSIFIER_FILE, "pretrain-classifier", &vocab)?;
                    let n = load_checkpoint(dir, NEUTRALIZER_FILE, "pretrain-neutralizer", &vocab)?;
                    let e = load_checkpoint(dir, EMOTIONALIZER_FILE, "pretrain-emotionalizer", &vocab)?;
                    Models {
                        classifier: AttnClassifier::from_checkpoint(&c, lr)?,
                        neutralizer: Neutralizer::from_checkpoint(&n, lr)?,
                        emotionalizer: Emotionalizer::from_checkpoint(&e, lr)?,
                    }
                }
                None => {
                    let (m, reports) = pretrain_all(&train, vocab.len(), cfg, &workers)?;
                    fs::create_dir_all(&out)?;
                    write_json(&out.join("pretrain.report.json"), &reports)?;
                    m
                }
            };
            bind_vocab(&out, &vocab)?;
            let mut snap = rc.clone().with_path("data", &data).with_path("out", &out);
            if let Some(m) = &models {
                snap = snap.with_path("models", m);
            }
            snap.snapshot(&out)?;
            let log = run_cycles_to_dir(&mut triplet, &train, cfg, &workers, &vocab.hash(), &out)?;
            if let (Some(first), Some(last)) = (log.first(), log.last()) {
                println!("iterations: {}", log.len());
                println!("mean R_c: first {:.4}, last {:.4}", first.mean_rc, last.mean_rc);
            }
        }
        Command::Translate { models, to, input, text, output } => {
            let vocab = models_vocab(&models)?;
            let lr = cfg.learning_rate;
            let n = Neutralizer::from_checkpoint(&load_checkpoint(&models, NEUTRALIZER_FILE, "train", &vocab)?, lr)?;
            let e = Emotionalizer::from_checkpoint(&load_checkpoint(&models, EMOTIONALIZER_FILE, "train", &vocab)?, lr)?;
            let lines = match &input {
                Some(p) => read_lines(p)?,
                None if !text.is_empty() => text.clone(),
                None => bail!(Error::validation("give --input or --text")),
            };
            let mut out_lines = Vec::with_capacity(lines.len());
            for line in &lines {
                let ids = vocab.encode(&tokens_or_empty(line));
                if ids.is_empty() {
                    out_lines.push(String::new());
                    continue;
                }
                let masked = n.greedy(&ids)?;
                out_lines.push(vocab.render(&e.generate(&masked.kept_tokens, to).tokens));
            }
            let body = out_lines.iter().map(|l| format!("{l}\n")).collect::<String>();
            match &output {
                Some(p) => {
                    fs::write(p, &body)?;
                    let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
                    rc.with_path("models", &models).with_path("output", p).snapshot(dir)?;
                }
                None => print!("{body}"),
            }
        }
        Command::TrainEvalClassifier { data, out, filters, epochs } => {
            let (splits, vocab) = load_dataset(&data)?;
            let train = encode_all(&splits.train, &vocab);
            let config = TextCnnConfig { filters, ..TextCnnConfig::new(vocab.len(), cfg.embedding_size, cfg.seed) };
            let opts = FitOptions { epochs, batch_size: cfg.batch_size, clip_norm: cfg.clip_norm };
            let (c, report) = train_eval_classifier(&train, config, cfg.learning_rate, &opts, &workers)?;
            fs::create_dir_all(&out)?;
            vocab.save(&out.join(VOCAB_FILE))?;
            c.to_checkpoint(&vocab.hash()).save(&out.join(EVAL_CLASSIFIER_FILE))?;
            write_json(&out.join("eval_classifier.report.json"), &report)?;
            rc.with_path("data", &data).with_path("out", &out).snapshot(&out)?;
            let test: Vec<Example> = encode_all(&splits.test, &vocab);
            println!("test accuracy: {:.4}", c.accuracy(&test));
        }
        Command::Evaluate { sources, generated, targets, eval_model, out } => {
            let vocab = Vocabulary::load(&eval_model.join(VOCAB_FILE))
                .map_err(|_| Error::precondition(format!("no vocabulary in {}; run `cycletrans train-eval-classifier` first", eval_model.display())))?;
            let ck = load_checkpoint(&eval_model, EVAL_CLASSIFIER_FILE, "train-eval-classifier", &vocab)?;
            let clf = EvalClassifier::from_checkpoint(&ck, cfg.learning_rate)?;
            let src: Vec<Vec<String>> = read_lines(&sources)?.iter().map(|l| tokens_or_empty(l)).collect();
            let gen: Vec<Vec<String>> = read_lines(&generated)?.iter().map(|l| tokens_or_empty(l)).collect();
            let tgt: Vec<Sentiment> = read_lines(&targets)?
                .iter()
                .enumerate()
                .map(|(i, l)| l.trim().parse().map_err(|e| anyhow!("{}:{}: {e}", targets.display(), i + 1)))
                .collect::<Result<_>>()?;
            let report = evaluate(&src, &gen, &tgt, &clf, &vocab, &workers)?;
            if let Some(p) = &out {
                write_json(p, &report)?;
                let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
                rc.with_path("sources", &sources)
                    .with_path("generated", &generated)
                    .with_path("targets", &targets)
                    .with_path("out", p)
                    .snapshot(dir)?;
            }
            print!("{}", report.table("model"));
            println!("mean sentence BLEU: {:.2}", report.mean_sentence_bleu);
        }
        Command::InspectAttention { models, text, json } => {
            let vocab = models_vocab(&models)?;
            let ck = load_checkpoint(&models, CLASSIFIER_FILE, "pretrain-classifier", &vocab)?;
            let c = AttnClassifier::from_checkpoint(&ck, cfg.learning_rate)?;
            let tokens = tokenize(&text)?;
            let ids = vocab.encode(&tokens);
            let (probs, profile) = c.classify(&ids)?;
            let neutral = if models.join(NEUTRALIZER_FILE).exists() {
                let n = Neutralizer::from_checkpoint(&load_checkpoint(&models, NEUTRALIZER_FILE, "pretrain-neutralizer", &vocab)?, cfg.learning_rate)?;
                Some(n.greedy(&ids)?.mask)
            } else {
                None
            };
            let bracket = |mask: &[bool]| {
                tokens
                    .iter()
                    .zip(mask)
                    .map(|(t, &keep)| if keep { t.clone() } else { format!("[{t}]") })
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            if json {
                let v = serde_json::json!({
                    "tokens": tokens,
                    "weights": profile.weights,
                    "mean": profile.mean,
                    "classifier_mask": profile.mask,
                    "neutralizer_mask": neutral,
                    "p_negative": probs[0],
                    "p_positive": probs[1],
                });
                println!("{}", serde_json::to_string_pretty(&v)?);
            } else {
                println!("classifier:  {}", bracket(&profile.mask));
                if let Some(m) = &neutral {
                    println!("neutralizer: {}", bracket(m));
                }
                for (t, w) in tokens.iter().zip(&profile.weights) {
                    println!("  {t:<16} {w:.4}");
                }
                println!("mean weight {:.4}; P(positive) {:.4}", profile.mean, probs[1]);
            }
        }
    }
    std::io::stdout().flush()?;
    Ok(())
}

fn category(err: &anyhow::Error) -> (&'static str, u8) {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Validation(_)) | Some(Error::Degenerate(_)) => ("validation", 3),
        Some(Error::Precondition(_)) => ("precondition", 4),
        Some(Error::Training(_)) => ("training", 5),
        Some(Error::Checkpoint(_)) | Some(Error::Json(_)) => ("checkpoint", 6),
        Some(Error::Io(_)) => ("io", 7),
        None if err.chain().any(|e| e.is::<std::io::Error>()) => ("io", 7),
        None => ("usage", 2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (cat, code) = category(&e);
            eprintln!("cycletrans {name}: {cat} error: {e:#}");
            ExitCode::from(code)
        }
    }
}
