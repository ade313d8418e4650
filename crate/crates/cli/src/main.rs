use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, LevelFilter};

use spanqa_core::checkpoint;
use spanqa_core::config::DATASETS;
use spanqa_core::data::{load_examples, make_synthetic, synthetic_vocab, write_triplets};
use spanqa_core::error::ErrorKind;
use spanqa_core::metrics::evaluate;
use spanqa_core::report::{benchmark, compare, corpus_vocab, DatasetSpec, RunSettings};
use spanqa_core::span::{gradcheck_config, model_grad_check, PredictionRecord};
use spanqa_core::train::{features_for, fit, predict_dataset, write_loss_csv};
use spanqa_core::{Error, QaExample, Result, RunConfig, Vocab};

/// Extractive question answering: synthesize data, train, predict, evaluate.
#[derive(Parser)]
#[command(name = "spanqa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. --set train.lr=5e-5. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    data: Option<PathBuf>,

    #[arg(long, global = true)]
    vocab: Option<PathBuf>,

    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    #[arg(long, global = true)]
    pred: Option<PathBuf>,

    /// Only warnings and errors on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write the synthetic marker dataset (train to --out, dev beside it).
    Synth,
    /// Train on --data and write --checkpoint plus a loss CSV.
    Train,
    /// Predict answers for --data with --checkpoint.
    Predict,
    /// Score --pred against --data.
    Eval,
    /// Train and evaluate every bench.models row on every bench dataset.
    Bench,
    /// Train the baseline and the BiLSTM variant and report the F1 delta.
    Compare,
    /// Finite-difference check of every gradient in a small full model.
    Gradcheck,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| usage(format!("--{flag} is required")))
}

/// `path` with `suffix` appended to its file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    info!("resolved config:\n{}", cfg.render().trim_end());
    Ok(cfg)
}

fn settings(cfg: &RunConfig) -> RunSettings {
    RunSettings {
        train: cfg.train.clone(),
        decode: cfg.decode.clone(),
        vocab_cap: cfg.model.encoder.vocab_size,
    }
}

fn synth(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let out = required(&cli.out, "out")?;
    let (train, dev) = make_synthetic(&cfg.synth)?;
    let dev_path = out.with_extension("dev.jsonl");
    write_triplets(out, &train)?;
    write_triplets(&dev_path, &dev)?;
    if let Some(v) = &cli.vocab {
        synthetic_vocab(&cfg.synth)?.save(v)?;
    }
    info!(
        "wrote {} train examples to {} and {} dev examples to {}",
        train.len(),
        out.display(),
        dev.len(),
        dev_path.display()
    );
    Ok(())
}

/// Loads `--vocab` if it exists, otherwise builds one from `examples` and saves it.
fn vocab_for_training(cli: &Cli, cfg: &RunConfig, ckpt: &Path, examples: &[QaExample]) -> Result<Vocab> {
    let path = cli.vocab.clone().unwrap_or_else(|| sibling(ckpt, ".vocab"));
    if cli.vocab.is_some() && path.exists() {
        return Vocab::load(&path);
    }
    let v = corpus_vocab(examples, cfg.model.encoder.vocab_size);
    v.save(&path)?;
    info!("built vocab of {} tokens at {}", v.len(), path.display());
    Ok(v)
}

fn run_train(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let data = required(&cli.data, "data")?;
    let ckpt = required(&cli.checkpoint, "checkpoint")?;
    let examples = load_examples(data)?;
    let vocab = vocab_for_training(cli, cfg, ckpt, &examples)?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.encoder.vocab_size = vocab.len();
    let feats = features_for(&examples, &vocab, cfg.train.max_len, cfg.train.overlap)?;

    info!("{} features", feats.len());
    let (model, history) = fit(model_cfg, &feats, &cfg.train)?;
    info!("{} parameters", model.param_count());
    checkpoint::save(&model, ckpt)?;
    let csv = cli.out.clone().unwrap_or_else(|| sibling(ckpt, ".loss.csv"));
    write_loss_csv(&csv, &history)?;
    if let Some(last) = history.last() {
        info!("{} steps, final loss {:.6}", history.len(), last.loss);
    }
    if let Some(eval_path) = &cfg.data_eval {
        let eval = load_examples(eval_path)?;
        let preds = predict_dataset(&model, &eval, &vocab, &cfg.decode, cfg.train.max_len, cfg.train.overlap)?;
        let texts = preds.iter().map(|(k, p)| (k.clone(), p.text.clone())).collect();
        let r = evaluate(&texts, &eval)?;
        println!("f1={:.4} em={:.4}", r.f1, r.exact_match);
    }
    Ok(())
}

fn run_predict(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let data = required(&cli.data, "data")?;
    let ckpt = required(&cli.checkpoint, "checkpoint")?;
    let vocab = Vocab::load(cli.vocab.clone().unwrap_or_else(|| sibling(ckpt, ".vocab")))?;
    let model = checkpoint::load(ckpt)?;
    let examples = load_examples(data)?;
    let preds = predict_dataset(&model, &examples, &vocab, &cfg.decode, cfg.train.max_len, cfg.train.overlap)?;
    let records: BTreeMap<&String, PredictionRecord> =
        preds.iter().map(|(k, p)| (k, PredictionRecord::from(p))).collect();
    let mut json = serde_json::to_string_pretty(&records)?;
    json.push('\n');
    match &cli.out {
        Some(out) => write(out, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

/// A predictions file maps ids to records, or to bare answer strings.
#[derive(serde::Deserialize)]
#[serde(untagged)]
enum PredictionEntry {
    Record(PredictionRecord),
    Text(String),
}

fn run_eval(cli: &Cli) -> Result<()> {
    let data = required(&cli.data, "data")?;
    let pred = required(&cli.pred, "pred")?;
    let text = std::fs::read_to_string(pred).map_err(|e| Error::Io {
        path: pred.to_path_buf(),
        source: e,
    })?;
    let records: BTreeMap<String, PredictionEntry> = serde_json::from_str(&text)?;
    let texts = records
        .into_iter()
        .map(|(k, r)| match r {
            PredictionEntry::Record(r) => (k, r.text),
            PredictionEntry::Text(t) => (k, t),
        })
        .collect();
    let r = evaluate(&texts, &load_examples(data)?)?;
    println!("f1={:.4} em={:.4}", r.f1, r.exact_match);
    Ok(())
}

/// Returns false when any cell failed.
fn run_bench(cli: &Cli, cfg: &RunConfig) -> Result<bool> {
    let names = if cfg.bench.models.is_empty() {
        vec!["BERT".to_string()]
    } else {
        cfg.bench.models.clone()
    };
    let models = names
        .iter()
        .map(|n| Ok((n.clone(), cfg.bench_model(n)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<&String> = cfg.bench.eval.keys().collect();
    order.sort_by_key(|d| DATASETS.iter().position(|s| s == d).unwrap_or(DATASETS.len()));
    let datasets: Vec<DatasetSpec> = order
        .into_iter()
        .map(|name| {
            let eval_path = cfg.bench.eval[name].clone();
            DatasetSpec {
                name: name.clone(),
                train_path: cfg.bench.train.get(name).cloned().unwrap_or_else(|| eval_path.clone()),
                eval_path,
            }
        })
        .collect();
    if datasets.is_empty() {
        return Err(usage("no datasets: set bench.eval.<Dataset>=<path>"));
    }
    let report = benchmark(&models, &datasets, &settings(cfg));
    print!("{}", report.render());
    for (m, d, why) in &report.failures {
        log::error!("{m} on {d}: {why}");
    }
    if let Some(out) = &cli.out {
        write(out, &report.render())?;
        let mut json = serde_json::to_string_pretty(&report.to_json())?;
        json.push('\n');
        write(&out.with_extension("json"), &json)?;
    }
    Ok(report.failures.is_empty())
}

fn run_compare(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let data = required(&cli.data, "data")?;
    let train = load_examples(data)?;
    let eval = match &cfg.data_eval {
        Some(p) => load_examples(p)?,
        None => train.clone(),
    };
    let vocab = match &cli.vocab {
        Some(p) => Vocab::load(p)?,
        None => corpus_vocab(&train, cfg.model.encoder.vocab_size),
    };
    let mut base = cfg.model.clone();
    base.use_bilstm = false;
    let mut bilstm = cfg.model.clone();
    bilstm.use_bilstm = true;
    let c = compare(&base, &bilstm, &train, &eval, &vocab, &settings(cfg))?;
    println!("{c}");
    Ok(())
}

fn run_gradcheck(cfg: &RunConfig) -> Result<bool> {
    let check = model_grad_check(gradcheck_config(), cfg.seed)?;
    println!("max_rel_error={:e} checked={}", check.max_rel_error, check.checked);
    Ok(check.passes(1e-4))
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let cfg = resolve(cli)?;
    Ok(match cli.command {
        Command::Synth => synth(cli, &cfg).map(|_| 0)?,
        Command::Train => run_train(cli, &cfg).map(|_| 0)?,
        Command::Predict => run_predict(cli, &cfg).map(|_| 0)?,
        Command::Eval => run_eval(cli).map(|_| 0)?,
        Command::Bench => {
            if run_bench(cli, &cfg)? {
                0
            } else {
                2
            }
        }
        Command::Compare => run_compare(cli, &cfg).map(|_| 0)?,
        Command::Gradcheck => {
            if run_gradcheck(&cfg)? {
                0
            } else {
                3
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet { LevelFilter::Warn } else { LevelFilter::Info })
        .format_timestamp(None)
        .parse_default_env()
        .init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
