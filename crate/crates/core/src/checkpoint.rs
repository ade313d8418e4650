//! Text checkpoints: a header, the model config as `key=value` lines, then
//! every parameter as `name d0 d1 ...` followed by one line per row.
//!
//! Floats are written in shortest round-trip form, so save/load is exact and
//! equal models produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{model_entries, set_model_key};
use crate::error::{Error, Result};
use crate::span::{ModelConfig, QaModel};
use crate::tensor::Tensor;

const HEADER: &str = "spanqa-checkpoint 1";

pub fn to_text(model: &QaModel) -> String {
    let mut out = format!("{HEADER}\n[config]\n");
    for (k, v) in model_entries(&model.config) {
        let _ = writeln!(out, "{k}={v}");
    }
    out.push_str("[tensors]\n");
    for (name, t) in model.params.iter() {
        let _ = write!(out, "{name}");
        for d in t.shape() {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        let width = t.shape().last().copied().unwrap_or(1).max(1);
        for row in t.data().chunks(width) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn from_text(text: &str) -> Result<QaModel> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(bad(format!("missing header {HEADER:?}")));
    }
    if lines.next() != Some("[config]") {
        return Err(bad("missing [config] section"));
    }
    let mut config = ModelConfig::default();
    loop {
        let line = lines.next().ok_or_else(|| bad("missing [tensors] section"))?;
        if line == "[tensors]" {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("bad config line {line:?}")))?;
        let k = k
            .strip_prefix("model.")
            .ok_or_else(|| bad(format!("unexpected key {k:?}")))?;
        set_model_key(&mut config, k, v)?;
    }

    // the init draw is discarded; only the parameter layout is needed
    let mut model = QaModel::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut seen = vec![false; model.params.len()];
    while let Some(head) = lines.next() {
        let mut parts = head.split(' ');
        let name = parts.next().unwrap_or_default();
        let shape: Vec<usize> = parts
            .map(|d| d.parse().map_err(|_| bad(format!("bad shape in {head:?}"))))
            .collect::<Result<_>>()?;
        let id = model
            .params
            .find(name)
            .ok_or_else(|| bad(format!("unknown tensor {name:?}")))?;
        if model.params.get(id).shape() != shape.as_slice() {
            return Err(bad(format!(
                "{name}: shape {shape:?} does not match the config's {:?}",
                model.params.get(id).shape()
            )));
        }
        let numel: usize = shape.iter().product();
        let width = shape.last().copied().unwrap_or(1).max(1);
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel.div_ceil(width) {
            let row = lines.next().ok_or_else(|| bad(format!("{name}: truncated")))?;
            for v in row.split(' ') {
                data.push(v.parse::<f64>().map_err(|_| bad(format!("{name}: bad value {v:?}")))?);
            }
        }
        *model.params.get_mut(id) = Tensor::new(shape, data).map_err(|_| bad(format!("{name}: wrong value count")))?;
        seen[id.index()] = true;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        let missing = model.params.iter().nth(k).map(|(n, _)| n.to_string()).unwrap_or_default();
        return Err(bad(format!("missing tensor {missing:?}")));
    }
    Ok(model)
}

pub fn save(model: &QaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<QaModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}
