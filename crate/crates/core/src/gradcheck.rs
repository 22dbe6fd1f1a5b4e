//! Central finite-difference checks of recorded gradients.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-6;

/// Worst relative error over all inputs, where each input's error is
/// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, floor)`.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub per_input: Vec<f64>,
}

/// Compares the tape gradient of the scalar `f(inputs)` against central
/// differences with step `h`.
pub fn check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&tape, &vars)?;
        let v = tape.value(out).item();
        Ok(v)
    };

    let mut per_input = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(*var) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; inputs[which].len()],
        };
        let mut numeric = vec![0.0; analytic.len()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let orig = inputs[which].data()[k];
            work[which].data_mut()[k] = orig + h;
            let up = eval(&work)?;
            work[which].data_mut()[k] = orig - h;
            let down = eval(&work)?;
            work[which].data_mut()[k] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        per_input.push(relative_error(&analytic, &numeric));
    }
    let max_rel_err = per_input.iter().cloned().fold(0.0, f64::max);
    Ok(GradCheck { max_rel_err, per_input })
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}
