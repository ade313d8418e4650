//! LSTM cell and the bidirectional layer that sits between the encoder and the span head.
//!
//! The layer runs one cell left-to-right and an independent cell right-to-left
//! over the unpadded prefix, then projects each position's concatenated
//! states: `ŷ_t = g(W_y [a→_t, a←_t] + b_y)`.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{truncated_normal, Bound, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputActivation {
    #[default]
    Tanh,
    Identity,
}

impl OutputActivation {
    pub fn name(self) -> &'static str {
        match self {
            OutputActivation::Tanh => "tanh",
            OutputActivation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(OutputActivation::Tanh),
            "identity" => Ok(OutputActivation::Identity),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Parameter handles of one LSTM cell. Gate order: input, forget, output, candidate.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
}

const GATES: [&str; 4] = ["i", "f", "o", "g"];
const FORGET: usize = 1;

impl LstmCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let w = GATES.map(|g| {
            store.add(format!("{name}.w_{g}"), truncated_normal(&[input, hidden], std, rng))
        });
        let u = GATES.map(|g| {
            store.add(format!("{name}.u_{g}"), truncated_normal(&[hidden, hidden], std, rng))
        });
        let mut k = 0;
        let b = GATES.map(|g| {
            let init = if k == FORGET { 1.0 } else { 0.0 };
            k += 1;
            store.add(format!("{name}.b_{g}"), Tensor::full(&[hidden], init))
        });
        LstmCell {
            input,
            hidden,
            w,
            u,
            b,
        }
    }
}

/// Gate update from precomputed input projections `x·W_* + b_*` (each `[1×hidden]`).
fn cell_update(
    tape: &mut Tape,
    p: &Bound,
    cell: &LstmCell,
    x_proj: [Var; 4],
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let mut pre = [x_proj[0]; 4];
    for k in 0..4 {
        let hu = tape.matmul(h_prev, p[cell.u[k]])?;
        pre[k] = tape.add(x_proj[k], hu)?;
    }
    let i = tape.sigmoid(pre[0]);
    let f = tape.sigmoid(pre[1]);
    let o = tape.sigmoid(pre[2]);
    let g = tape.tanh(pre[3]);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// One LSTM step: returns `(h_t, c_t)` for input row `x_t` (`[1×input]`).
pub fn lstm_step(
    tape: &mut Tape,
    p: &Bound,
    cell: &LstmCell,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let mut proj = [x_t; 4];
    for k in 0..4 {
        let xw = tape.matmul(x_t, p[cell.w[k]])?;
        proj[k] = tape.add(xw, p[cell.b[k]])?;
    }
    cell_update(tape, p, cell, proj, h_prev, c_prev)
}

#[derive(Debug, Clone)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
    pub proj_weight: ParamId,
    pub proj_bias: ParamId,
    pub activation: OutputActivation,
    pub output: usize,
}

impl BiLstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        input: usize,
        hidden: usize,
        output: usize,
        activation: OutputActivation,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 || output == 0 {
            return Err(Error::Config("bilstm extents must be at least 1".into()));
        }
        let forward = LstmCell::new(store, "bilstm.fwd", input, hidden, std, rng);
        let backward = LstmCell::new(store, "bilstm.bwd", input, hidden, std, rng);
        let proj_weight = store.add(
            "bilstm.proj.weight",
            truncated_normal(&[2 * hidden, output], std, rng),
        );
        let proj_bias = store.add("bilstm.proj.bias", Tensor::zeros(&[output]));
        Ok(BiLstm {
            forward,
            backward,
            proj_weight,
            proj_bias,
            activation,
            output,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    /// Runs both directions over `x` (`[seq×input]`). Returns `(A_fwd, A_bwd)`,
    /// each `[seq×hidden]`, zero at padded positions.
    pub fn run(&self, tape: &mut Tape, p: &Bound, x: Var, pad_mask: &[u8]) -> Result<(Var, Var)> {
        let seq = tape.value(x).rows();
        if seq == 0 || tape.value(x).shape().len() != 2 {
            return Err(Error::Config("bilstm over an empty sequence".into()));
        }
        if pad_mask.len() != seq {
            return Err(Error::Shape {
                op: "bilstm mask",
                lhs: tape.value(x).shape().to_vec(),
                rhs: vec![pad_mask.len()],
            });
        }
        let real = pad_mask.iter().take_while(|&&m| m == 1).count();
        let fwd = self.direction(tape, p, &self.forward, x, seq, (0..real).collect())?;
        let bwd = self.direction(tape, p, &self.backward, x, seq, (0..real).rev().collect())?;
        Ok((fwd, bwd))
    }

    fn direction(
        &self,
        tape: &mut Tape,
        p: &Bound,
        cell: &LstmCell,
        x: Var,
        seq: usize,
        order: Vec<usize>,
    ) -> Result<Var> {
        let hd = cell.hidden;
        let zero = tape.constant(Tensor::zeros(&[1, hd]));
        let mut rows = vec![zero; seq];
        if !order.is_empty() {
            let mut proj = [x; 4];
            for k in 0..4 {
                let xw = tape.matmul(x, p[cell.w[k]])?;
                proj[k] = tape.add(xw, p[cell.b[k]])?;
            }
            let (mut h, mut c) = (zero, zero);
            for t in order {
                let mut step = [x; 4];
                for k in 0..4 {
                    step[k] = tape.row(proj[k], t)?;
                }
                (h, c) = cell_update(tape, p, cell, step, h, c)?;
                rows[t] = h;
            }
        }
        tape.stack_rows(&rows)
    }

    /// `g(W_y [A_fwd, A_bwd] + b_y)` row by row, `[seq×output]`.
    pub fn project(&self, tape: &mut Tape, p: &Bound, fwd: Var, bwd: Var) -> Result<Var> {
        let cat = tape.concat_cols(&[fwd, bwd])?;
        let y = tape.matmul(cat, p[self.proj_weight])?;
        let y = tape.add(y, p[self.proj_bias])?;
        Ok(match self.activation {
            OutputActivation::Tanh => tape.tanh(y),
            OutputActivation::Identity => y,
        })
    }
}
