use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--hidden-size", "16", "--embedding-size", "16", "--batch-size", "16",
    "--classifier-epochs", "4", "--neutralizer-epochs", "1", "--emotionalizer-epochs", "2",
    "--iterations", "20", "--seed", "5",
];

fn cycletrans(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cycletrans"))
        .args(args)
        .env_remove("CYCLETRANS_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cycletrans(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

fn synth(dir: &Path) -> String {
    let spec = dir.join("spec.json");
    let mut s: serde_json::Value =
        serde_json::to_value(cycletrans::corpus::TemplateSpec::desk_default()).unwrap();
    s["n_train"] = 400.into();
    s["n_val"] = 40.into();
    s["n_test"] = 40.into();
    fs::write(&spec, s.to_string()).unwrap();
    let data = dir.join("data");
    ok(&["synth", "--out", data.to_str().unwrap(), "--spec", spec.to_str().unwrap()]);
    data.to_str().unwrap().to_string()
}

#[test]
fn help_lists_published_defaults() {
    let help = ok(&["train", "--help"]);
    for needle in ["--batch-size", "64", "--learning-rate", "0.6", "--hidden-size", "256", "--embedding-size", "128", "50000", "--clip-norm", "--beta", "0.5", "--no-baseline", "--seed", "--workers"] {
        assert!(help.contains(needle), "help lacks {needle}");
    }
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let models = tmp.path().join("models");
    let m = models.to_str().unwrap();

    // stages out of order name the missing producer
    let out = cycletrans(&with_small(&["pretrain-neutralizer", "--data", &data, "--models", m]));
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pretrain-classifier"), "{err}");

    ok(&with_small(&["pretrain-classifier", "--data", &data, "--models", m]));
    ok(&with_small(&["pretrain-neutralizer", "--data", &data, "--models", m]));
    ok(&with_small(&["pretrain-emotionalizer", "--data", &data, "--models", m]));
    for f in ["classifier.ckpt.json", "neutralizer.ckpt.json", "emotionalizer.ckpt.json", "pretrain-classifier.run_config.json"] {
        assert!(models.join(f).exists(), "{f}");
    }

    let run = tmp.path().join("run");
    let r = run.to_str().unwrap();
    ok(&with_small(&["train", "--data", &data, "--models", m, "--out", r]));
    let log = fs::read_to_string(run.join("reward_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 20);
    assert!(run.join("train.run_config.json").exists());

    // separate stages reproduce the in-process pipeline
    let fresh = tmp.path().join("fresh");
    ok(&with_small(&["train", "--data", &data, "--out", fresh.to_str().unwrap()]));
    assert_eq!(log, fs::read_to_string(fresh.join("reward_log.jsonl")).unwrap());

    let text = ok(&["translate", "--models", r, "--to", "negative", "--text", "the food is delicious", "--text", "our waiter was rude"]);
    assert_eq!(text.lines().count(), 2);

    let attn = ok(&["inspect-attention", "--models", r, "--text", "the food is delicious"]);
    assert!(attn.contains("classifier:") && attn.contains("neutralizer:"));
    let attn_json: serde_json::Value =
        serde_json::from_str(&ok(&["inspect-attention", "--models", r, "--text", "the food is delicious", "--json"])).unwrap();
    assert_eq!(attn_json["tokens"].as_array().unwrap().len(), 4);

    let eval = tmp.path().join("eval");
    let e = eval.to_str().unwrap();
    ok(&["train-eval-classifier", "--data", &data, "--out", e, "--filters", "8", "--epochs", "1", "--embedding-size", "8", "--batch-size", "16"]);
    let src = tmp.path().join("src.txt");
    let tgt = tmp.path().join("tgt.txt");
    fs::write(&src, "the food is delicious\nthe staff was rude\n").unwrap();
    fs::write(&tgt, "positive\nnegative\n").unwrap();
    let report_path = tmp.path().join("report.json");
    let s = src.to_str().unwrap();
    let table = ok(&["evaluate", "--sources", s, "--generated", s, "--targets", tgt.to_str().unwrap(), "--eval-model", e, "--out", report_path.to_str().unwrap()]);
    assert!(table.contains("G-score"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["bleu"].as_f64().unwrap(), 100.0);
    assert!(tmp.path().join("evaluate.run_config.json").exists());
}

#[test]
fn synth_is_reproducible_and_honors_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    ok(&["synth", "--out", a.to_str().unwrap(), "--seed", "3"]);
    ok(&["synth", "--out", b.to_str().unwrap(), "--seed", "3"]);
    ok(&["synth", "--out", c.to_str().unwrap(), "--seed", "4"]);
    let read = |d: &Path| fs::read_to_string(d.join("train.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(fs::read(a.join("vocab.txt")).unwrap(), fs::read(b.join("vocab.txt")).unwrap());
}

#[test]
fn ingest_reports_filter_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw.tsv");
    let mut lines = Vec::new();
    for i in 0..8 {
        lines.push(format!("{}\tthe soup number {i} was fine.", if i % 2 == 0 { 5 } else { 1 }));
    }
    let long = (0..25).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    lines.push(format!("4\t{long}"));
    lines.push(format!("2\t{long} again"));
    lines.push("3\tit was okay.".into());
    fs::write(&raw, lines.join("\n") + "\n").unwrap();
    let out = tmp.path().join("ing");
    let o = out.to_str().unwrap();
    ok(&["ingest", "--input", raw.to_str().unwrap(), "--out", o]);
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ingest_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["too_long"], 2);
    assert_eq!(stats["rating_three"], 1);
    assert_eq!(stats["kept"], 8);
    let all: String = ["train.jsonl", "validation.jsonl", "test.jsonl"]
        .iter()
        .map(|f| fs::read_to_string(out.join(f)).unwrap())
        .collect();
    assert!(!all.contains("okay"));

    let first = fs::read_to_string(out.join("train.jsonl")).unwrap();
    ok(&["ingest", "--input", raw.to_str().unwrap(), "--out", o]);
    assert_eq!(first, fs::read_to_string(out.join("train.jsonl")).unwrap());
}

#[test]
fn layered_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"vocab_cap": 5, "seed": 11}"#).unwrap();
    let out = |name: &str, env: Option<(&str, &str)>, extra: &[&str]| {
        let dir = tmp.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_cycletrans"));
        cmd.args(["synth", "--out", dir.to_str().unwrap(), "--config", cfg.to_str().unwrap()]).args(extra);
        cmd.env_remove("CYCLETRANS_VOCAB_CAP");
        if let Some((k, v)) = env {
            cmd.env(k, v);
        }
        assert!(cmd.output().unwrap().status.success());
        let snap: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("synth.run_config.json")).unwrap()).unwrap();
        snap["train"]["vocab_cap"].as_u64().unwrap()
    };
    assert_eq!(out("file", None, &[]), 5);
    assert_eq!(out("env", Some(("CYCLETRANS_VOCAB_CAP", "7")), &[]), 7);
    assert_eq!(out("flag", Some(("CYCLETRANS_VOCAB_CAP", "7")), &["--vocab-cap", "9"]), 9);
}

#[test]
fn errors_are_categorized() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cycletrans(&["translate", "--models", tmp.path().to_str().unwrap(), "--to", "positive", "--text", "x"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cycletrans translate") && err.contains("pretrain-classifier"), "{err}");

    let out = cycletrans(&["train", "--data", "/nonexistent", "--out", tmp.path().to_str().unwrap(), "--batch-size", "0"]);
    assert!(!out.status.success());
}
