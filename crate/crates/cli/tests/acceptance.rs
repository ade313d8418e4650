//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spanqa_core::data::{build_features, load_examples, make_synthetic, synthetic_vocab, SyntheticSpec};
use spanqa_core::encoder::{EncoderConfig, NoRng};
use spanqa_core::metrics::{evaluate, token_f1};
use spanqa_core::report::{corpus_vocab, CellSummary, EvalReport};
use spanqa_core::span::{
    decode_best_span, distributions, gradcheck_config, model_grad_check, DecodeConfig,
};
use spanqa_core::tokenizer::{decode_span, CLS_ID, PAD_ID};
use spanqa_core::train::{features_for, predict_dataset, prediction_texts, train_with};
use spanqa_core::{Encoding, ModelConfig, QaExample, QaModel, Tape, Tensor, TrainConfig, Vocab};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = started.elapsed();
    check(took < limit, || format!("{what} took {took:.1?}, limit {limit:?}"))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_spanqa")
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/squad_50.json")
}

fn spanqa(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin())
        .current_dir(dir)
        .arg("--quiet")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "spanqa {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Random unpadded-suffix encoding: `[CLS] q.. [SEP] c.. [SEP] [PAD]..`.
fn random_encoding(rng: &mut ChaCha8Rng, vocab: u32, max_len: usize) -> Encoding {
    let seq = rng.random_range(5..=max_len);
    let real = rng.random_range(5..=seq);
    let q = rng.random_range(1..=real - 4);
    let ctx = q + 2..real - 1;
    let mut ids: Vec<u32> = (0..seq).map(|_| rng.random_range(5..vocab)).collect();
    ids[0] = CLS_ID;
    ids[q + 1] = 3;
    ids[real - 1] = 3;
    ids[real..].fill(PAD_ID);
    let offsets = (0..seq)
        .map(|p| ctx.contains(&p).then(|| (p, p + 1)))
        .collect();
    Encoding {
        ids,
        segment_ids: (0..seq).map(|p| u8::from(p >= q + 2 && p < real)).collect(),
        pad_mask: (0..seq).map(|p| u8::from(p < real)).collect(),
        offsets,
        window_start: 0,
        context: ctx,
    }
}

fn random_model(rng: &mut ChaCha8Rng, use_bilstm: bool, max_len: usize) -> QaModel {
    let heads = rng.random_range(1..=2);
    let config = ModelConfig {
        encoder: EncoderConfig {
            layers: rng.random_range(0..=2),
            hidden: heads * rng.random_range(2..=6),
            heads,
            ff: rng.random_range(4..=16),
            vocab_size: 24,
            max_positions: max_len,
            share_layers: rng.random_bool(0.3),
            init_std: rng.random_range(0.02..1.0),
            ..EncoderConfig::default()
        },
        use_bilstm,
        ..ModelConfig::default()
    };
    QaModel::new(config, rng).expect("random config is valid")
}

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let g = model_grad_check(gradcheck_config(), 0).map_err(|e| e.to_string())?;
    within(t, Duration::from_secs(60), "grad check")?;
    check(g.passes(1e-4), || format!("max relative error {:e}", g.max_rel_error))?;
    Ok(format!(
        "max_rel_error={:.2e} over {} scalars in {:.1?}",
        g.max_rel_error,
        g.checked,
        t.elapsed()
    ))
}

fn decode_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let enc = random_encoding(&mut rng, 24, 24);
        let n = enc.len();
        // integer logits make ties frequent
        let start: Vec<f64> = (0..n).map(|_| rng.random_range(-3..=3) as f64).collect();
        let end: Vec<f64> = (0..n).map(|_| rng.random_range(-3..=3) as f64).collect();
        let cap = rng.random_range(1..=8);
        let cfg = DecodeConfig {
            max_answer_len: cap,
            null_threshold: f64::NEG_INFINITY,
            ..DecodeConfig::default()
        };
        let context = "x".repeat(n + 1);
        let got = decode_best_span(&start, &end, &enc, &context, &cfg).map_err(|e| e.to_string())?;

        let mut want = (0, 0, f64::NEG_INFINITY);
        for i in 0..n {
            for j in i..n {
                let ok = enc.offsets[i].is_some() && enc.offsets[j].is_some() && j - i < cap;
                if ok && start[i] + end[j] > want.2 {
                    want = (i, j, start[i] + end[j]);
                }
            }
        }
        let text = decode_span(&enc, want.0, want.1, &context).map_err(|e| e.to_string())?;
        check(
            (got.start, got.end, got.score) == want && got.text == text && !got.is_null,
            || format!("case {case}: got ({}, {}, {}), want {want:?}", got.start, got.end, got.score),
        )?;
    }
    within(t, Duration::from_secs(5), "1000 decodes")?;
    Ok(format!("1000/1000 agree in {:.1?}", t.elapsed()))
}

fn metric_oracle() -> Outcome {
    let worked = token_f1("cat sat down", &["the cat sat"]);
    check(worked == 2.0 / 3.0, || format!("worked example gave {worked}"))?;
    let same = token_f1("the cat sat", &["the cat sat"]);
    check((same - 1.0).abs() <= 1e-12, || format!("identity gave {same}"))?;
    let disjoint = token_f1("dog ran", &["the cat sat"]);
    check(disjoint.abs() <= 1e-12, || format!("disjoint gave {disjoint}"))?;
    Ok(format!("F1 {worked} / {same} / {disjoint}"))
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let bilstm = case % 2 == 1;
        let model = random_model(&mut rng, bilstm, 20);
        let enc = random_encoding(&mut rng, 24, 20);
        let (s, e) = model.forward(&enc).map_err(|e| e.to_string())?;
        let (ps, pe) = distributions(&s, &e, &enc.pad_mask).map_err(|e| e.to_string())?;
        for p in [ps, pe] {
            let pad_mass: f64 = p.iter().zip(&enc.pad_mask).filter(|(_, &m)| m == 0).map(|(v, _)| v).sum();
            check(pad_mass == 0.0, || format!("case {case}: padding holds mass {pad_mass}"))?;
            worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
        }
    }
    check(worst <= 1e-9, || format!("largest deviation {worst:e}"))?;
    Ok(format!("100 models, largest |sum - 1| = {worst:.1e}"))
}

fn desk_config(vocab: usize, use_bilstm: bool, share_layers: bool) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            layers: 2,
            hidden: 64,
            heads: 2,
            ff: 128,
            vocab_size: vocab,
            max_positions: 32,
            share_layers,
            ..EncoderConfig::default()
        },
        use_bilstm,
        ..ModelConfig::default()
    }
}

/// Learning-rate 1e-3 rather than the 5e-5 fine-tuning default: the model
/// starts from random weights, not a pre-trained checkpoint.
fn desk_train() -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        epochs: 200,
        batch_size: 8,
        max_len: 32,
        overlap: 8,
        shuffle: true,
        seed: 7,
    }
}

struct Learned {
    epochs: usize,
    em: f64,
    f1: f64,
    first_loss: f64,
    last_loss: f64,
    took: Duration,
}

/// Trains until training-set EM reaches `target` (checked every 5 epochs) or the budget runs out.
fn learn(model_cfg: ModelConfig, train: &[QaExample], vocab: &Vocab, target: f64) -> Result<Learned, String> {
    let t = Instant::now();
    let cfg = desk_train();
    let feats = features_for(train, vocab, cfg.max_len, cfg.overlap).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = QaModel::new(model_cfg, &mut rng).map_err(|e| e.to_string())?;
    let decode = DecodeConfig::default();
    let score = |m: &QaModel| -> (f64, f64) {
        let preds = predict_dataset(m, train, vocab, &decode, cfg.max_len, cfg.overlap).expect("predict");
        let r = evaluate(&prediction_texts(&preds), train).expect("evaluate");
        (r.exact_match, r.f1)
    };
    let mut last = (0.0, 0.0, 0);
    let history = train_with(&mut model, &feats, &cfg, &mut rng, |epoch, m| {
        if epoch % 5 != 0 && epoch != cfg.epochs {
            return true;
        }
        let (em, f1) = score(m);
        last = (em, f1, epoch);
        em < target
    })
    .map_err(|e| e.to_string())?;
    Ok(Learned {
        epochs: last.2,
        em: last.0,
        f1: last.1,
        first_loss: history.first().map_or(f64::NAN, |r| r.loss),
        last_loss: history.last().map_or(f64::NAN, |r| r.loss),
        took: t.elapsed(),
    })
}

fn synthetic() -> Result<(Vec<QaExample>, Vec<QaExample>, Vocab), String> {
    let spec = SyntheticSpec {
        vocab_size: 64,
        context_len: 24,
        examples: 64,
        seed: 7,
        ..SyntheticSpec::default()
    };
    let (train, dev) = make_synthetic(&spec).map_err(|e| e.to_string())?;
    let vocab = synthetic_vocab(&spec).map_err(|e| e.to_string())?;
    Ok((train, dev, vocab))
}

fn end_to_end(dir: &Path) -> Outcome {
    let (train, _, vocab) = synthetic()?;
    let base = learn(desk_config(vocab.len(), false, false), &train, &vocab, 0.95)?;
    check(base.em >= 0.95, || format!("EM {:.3} after {} epochs", base.em, base.epochs))?;
    check(base.took < Duration::from_secs(300), || format!("took {:.1?}", base.took))?;
    check(base.last_loss < base.first_loss, || {
        format!("loss went {} -> {}", base.first_loss, base.last_loss)
    })?;

    let bilstm = learn(desk_config(vocab.len(), true, false), &train, &vocab, 0.95)?;
    check((0.0..=1.0).contains(&bilstm.f1), || format!("BiLSTM F1 {}", bilstm.f1))?;

    spanqa(dir, &["synth", "--seed", "7", "--out", "cmp.jsonl"])?;
    let line = spanqa(
        dir,
        &[
            "compare", "--data", "cmp.jsonl", "--set", "model.vocab_size=64", "--set", "model.max_positions=32",
            "--set", "train.max_len=32", "--set", "train.overlap=8", "--set", "train.lr=1e-3", "--set",
            "train.epochs=3",
        ],
    )?;
    let line = line.trim();
    let delta = line
        .split_whitespace()
        .nth(2)
        .and_then(|d| d.strip_prefix("delta="))
        .filter(|d| d.starts_with('+') || d.starts_with('-'));
    check(
        line.starts_with("baseline=") && line.ends_with(" pp") && delta.is_some(),
        || format!("compare printed {line:?}"),
    )?;
    Ok(format!(
        "EM {:.2} at epoch {} in {:.1?}; BiLSTM EM {:.2} F1 {:.3} at epoch {}; compare: {line}",
        base.em, base.epochs, base.took, bilstm.em, bilstm.f1, bilstm.epochs
    ))
}

fn albert_sharing() -> Outcome {
    let count = |layers| {
        let mut c = desk_config(64, false, true);
        c.encoder.layers = layers;
        QaModel::seeded(c, 0).map(|m| m.param_count()).map_err(|e| e.to_string())
    };
    let (four, one) = (count(4)?, count(1)?);
    check(four == one, || format!("L=4 has {four} parameters, L=1 has {one}"))?;
    let (train, _, vocab) = synthetic()?;
    let shared = learn(desk_config(vocab.len(), false, true), &train, &vocab, 0.80)?;
    check(shared.em >= 0.80, || format!("EM {:.3} after {} epochs", shared.em, shared.epochs))?;
    Ok(format!(
        "{four} parameters at L=1 and L=4; shared EM {:.2} at epoch {}",
        shared.em, shared.epochs
    ))
}

fn row(t: &Tensor, r: usize) -> Vec<f64> {
    t.row(r).to_vec()
}

fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let model = random_model(&mut rng, true, 16);
        let enc = random_encoding(&mut rng, 24, 16);
        let real = enc.real_len();
        let seq = enc.len();

        // encoder: garbage in padded slots
        let mut noisy = enc.clone();
        for p in real..seq {
            noisy.ids[p] = rng.random_range(0..24);
            noisy.segment_ids[p] = rng.random_range(0..2);
        }
        let mut tape = Tape::new();
        let p = model.params.bind(&mut tape);
        let a = model.encoder.encode::<NoRng>(&mut tape, &p, &enc, None).map_err(|e| e.to_string())?;
        let b = model.encoder.encode::<NoRng>(&mut tape, &p, &noisy, None).map_err(|e| e.to_string())?;
        for r in 0..real {
            check(row(tape.value(a), r) == row(tape.value(b), r), || {
                format!("case {case}: encoder row {r} changed with padding")
            })?;
        }

        // BiLSTM on random inputs
        let lstm = model.bilstm.as_ref().expect("bilstm on");
        let h = model.config.encoder.hidden;
        let x: Vec<f64> = (0..seq * h).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Tensor::new(vec![seq, h], x).map_err(|e| e.to_string())?;
        let run = |tape: &mut Tape, x: &Tensor| {
            let v = tape.constant(x.clone());
            let (f, b) = lstm.run(tape, &p, v, &enc.pad_mask).expect("run");
            (tape.value(f).clone(), tape.value(b).clone())
        };
        let (f0, b0) = run(&mut tape, &x);

        let mut padded = x.clone();
        padded.data_mut()[real * h..].iter_mut().for_each(|v| *v = rng.random_range(-50.0..50.0));
        let (f1, b1) = run(&mut tape, &padded);
        for r in 0..real {
            check(row(&f0, r) == row(&f1, r) && row(&b0, r) == row(&b1, r), || {
                format!("case {case}: BiLSTM row {r} changed with padding")
            })?;
        }

        let t = rng.random_range(0..real);
        if t + 1 < real {
            let mut y = x.clone();
            y.data_mut()[(t + 1) * h..(t + 2) * h].iter_mut().for_each(|v| *v += 1.5);
            let (fy, _) = run(&mut tape, &y);
            check(row(&f0, t) == row(&fy, t), || {
                format!("case {case}: forward state {t} saw x[{}]", t + 1)
            })?;
        }
        if t >= 1 {
            let mut y = x.clone();
            y.data_mut()[(t - 1) * h..t * h].iter_mut().for_each(|v| *v += 1.5);
            let (_, by) = run(&mut tape, &y);
            check(row(&b0, t) == row(&by, t), || {
                format!("case {case}: backward state {t} saw x[{}]", t - 1)
            })?;
        }
    }
    Ok("100 cases, encoder and BiLSTM".into())
}

fn data_round_trip() -> Outcome {
    let examples = load_examples(fixture()).map_err(|e| e.to_string())?;
    check(examples.len() == 50, || format!("fixture has {} examples", examples.len()))?;
    let vocab = corpus_vocab(&examples, 30522);
    let (mut real, mut null, mut impossible) = (0, 0, 0);
    for (max_len, overlap) in [(48, 12), (384, 128)] {
        for ex in &examples {
            let feats = build_features(ex, &vocab, max_len, overlap).map_err(|e| e.to_string())?;
            for f in &feats {
                if ex.unanswerable {
                    check(f.start_pos == 0 && f.end_pos == 0, || {
                        format!("{}: impossible record labelled ({}, {})", ex.id, f.start_pos, f.end_pos)
                    })?;
                    check(f.encoding.ids[0] == CLS_ID, || format!("{}: position 0 is not [CLS]", ex.id))?;
                    impossible += 1;
                } else if f.is_null() {
                    null += 1;
                } else {
                    let text = decode_span(&f.encoding, f.start_pos, f.end_pos, &ex.context)
                        .map_err(|e| e.to_string())?;
                    check(
                        ex.gold_texts().iter().any(|g| g.to_lowercase() == text.to_lowercase()),
                        || format!("{}: decoded {text:?}, gold {:?}", ex.id, ex.gold_texts()),
                    )?;
                    real += 1;
                }
            }
        }
    }
    Ok(format!(
        "{real} labelled features decode to gold; {impossible} impossible features at [CLS]; {null} windows without the answer"
    ))
}

fn determinism(dir: &Path) -> Outcome {
    spanqa(dir, &["synth", "--seed", "7", "--out", "det.jsonl"])?;
    let cfg = "model.vocab_size=64\nmodel.max_positions=32\nmodel.use_bilstm=true\nmodel.dropout=0.1\n\
               train.max_len=32\ntrain.overlap=8\ntrain.lr=1e-3\ntrain.epochs=2\nseed=11\n";
    std::fs::write(dir.join("det.cfg"), cfg).map_err(|e| e.to_string())?;
    for run in ["a", "b"] {
        let ckpt = format!("{run}.ckpt");
        spanqa(dir, &["train", "--config", "det.cfg", "--data", "det.jsonl", "--checkpoint", &ckpt])?;
    }
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    for (a, b) in [("a.ckpt", "b.ckpt"), ("a.ckpt.loss.csv", "b.ckpt.loss.csv"), ("a.ckpt.vocab", "b.ckpt.vocab")] {
        check(read(a)? == read(b)?, || format!("{a} and {b} differ"))?;
    }
    Ok(format!("checkpoint ({} bytes) and loss CSV identical", read("a.ckpt")?.len()))
}

const PUBLISHED_GRID: [(&str, [f64; 4]); 7] = [
    ("XLNet", [53.2, 64.9, 30.1, 44.9]),
    ("BERT", [52.1, 64.7, 28.6, 44.8]),
    ("RoBERTa", [57.0, 68.2, 31.3, 44.5]),
    ("ALBERT", [51.8, 64.8, 19.5, 42.4]),
    ("ConvBert", [55.7, 67.4, 31.5, 44.9]),
    ("BART", [56.2, 67.6, 29.1, 45.3]),
    ("BERT-BiLSTM", [52.6, 65.0, 28.9, 45.6]),
];
const COLUMNS: [&str; 4] = ["NewsQA", "SQuAD", "QuAC", "CovidQA"];

fn report_format(dir: &Path) -> Outcome {
    // injected published values
    let mut report = EvalReport::new(PUBLISHED_GRID.iter().map(|r| r.0.to_string()).collect(), &[]);
    for (model, cells) in PUBLISHED_GRID {
        for (d, v) in COLUMNS.iter().zip(cells) {
            report.set(model, d, CellSummary { f1: v / 100.0, em: 0.0, n: 1 });
        }
    }
    let text = report.render();
    let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
    check(lines[0] == ["Model", "NewsQA", "SQuAD", "QuAC", "CovidQA"], || format!("header {:?}", lines[0]))?;
    for (k, (model, cells)) in PUBLISHED_GRID.iter().enumerate() {
        let want: Vec<String> = std::iter::once(model.to_string())
            .chain(cells.iter().map(|v| format!("{v:.1}")))
            .collect();
        check(lines[k + 1] == want, || format!("row {:?}, want {want:?}", lines[k + 1]))?;
    }

    // a real grid through the CLI
    spanqa(dir, &["synth", "--seed", "7", "--out", "grid.jsonl"])?;
    let cfg = format!(
        "bench.models=BERT,BERT-BiLSTM\nbench.eval.SQuAD={}\nbench.eval.NewsQA=grid.dev.jsonl\nbench.train.NewsQA=grid.jsonl\n\
         model.layers=1\nmodel.max_positions=64\ntrain.max_len=64\ntrain.overlap=16\ntrain.lr=1e-3\ntrain.epochs=1\n",
        fixture().display()
    );
    std::fs::write(dir.join("bench.cfg"), cfg).map_err(|e| e.to_string())?;
    let grid = spanqa(dir, &["bench", "--config", "bench.cfg", "--out", "grid.txt"])?;
    let rows: Vec<Vec<&str>> = grid.lines().map(|l| l.split_whitespace().collect()).collect();
    check(rows.len() == 3 && rows[0] == ["Model", "NewsQA", "SQuAD", "QuAC", "CovidQA"], || {
        format!("bench printed {grid:?}")
    })?;
    check(rows[1][0] == "BERT" && rows[2][0] == "BERT-BiLSTM", || format!("rows {rows:?}"))?;
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("grid.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    check(json["BERT"]["SQuAD"]["n"] == 50, || format!("sidecar {json}"))?;
    Ok(format!("{} published cells round-trip; CLI grid {}x4", PUBLISHED_GRID.len() * 4, rows.len() - 1))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let dir = dir.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("gradient suite", Box::new(gradient_suite)),
        ("span-decode oracle", Box::new(decode_oracle)),
        ("metric oracle", Box::new(metric_oracle)),
        ("probability normalization", Box::new(normalization)),
        ("end-to-end learning", Box::new(|| end_to_end(dir))),
        ("ALBERT sharing", Box::new(albert_sharing)),
        ("padding and bidirectionality", Box::new(invariants)),
        ("data round-trip", Box::new(data_round_trip)),
        ("determinism", Box::new(|| determinism(dir))),
        ("report format", Box::new(|| report_format(dir))),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", k + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
