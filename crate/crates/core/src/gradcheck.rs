//! Central finite-difference gradient checking.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-4;

/// Numerical gradients below this magnitude are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(param index, element index)` of the worst element.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// `|analytic − numerical| / max(|numerical|, RELATIVE_FLOOR)`, maximized over all elements.
pub fn max_relative_error(analytic: &[Tensor], numerical: &[Tensor]) -> GradCheck {
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (pi, (a, n)) in analytic.iter().zip(numerical).enumerate() {
        for (ei, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let err = (av - nv).abs() / nv.abs().max(RELATIVE_FLOOR);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((pi, ei));
            }
        }
    }
    report
}

/// Central differences of a scalar function of `params`.
pub fn numerical_gradient<F>(f: F, params: &[Tensor], h: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let mut g = Tensor::zeros(params[pi].shape());
        for ei in 0..params[pi].numel() {
            let orig = work[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + h;
            let plus = f(&work)?;
            work[pi].data_mut()[ei] = orig - h;
            let minus = f(&work)?;
            work[pi].data_mut()[ei] = orig;
            g.data_mut()[ei] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Compares tape gradients of `build` against central differences.
///
/// `build` receives a fresh tape with every entry of `params` bound as a
/// trainable leaf, and returns the scalar loss node.
pub fn grad_check<F>(build: F, params: &[Tensor], h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok((tape, vars, loss))
    };

    let (tape, vars, loss) = eval(params)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let numerical = numerical_gradient(
        |ps| {
            let (tape, _, loss) = eval(ps)?;
            Ok(tape.value(loss).item())
        },
        params,
        h,
    )?;
    Ok(max_relative_error(&analytic, &numerical))
}
