//! Oracles shared by the integration tests.

#![allow(dead_code)]

use ontotkge::autodiff::{Tape, Tensor, Var};
use ontotkge::selfcheck::GradCase;

/// Largest per-input relative error between the tape gradient of `case`
/// and a central difference with step `h`, measured as
/// `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞, 1e-6)`.
pub fn central_difference_error(case: &GradCase, h: f64) -> f64 {
    let value = |inputs: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = (case.f)(&tape, &vars).expect("instance evaluates");
        tape.value(out).item()
    };
    let tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = (case.f)(&tape, &vars).expect("instance evaluates");
    let grads = tape.backward(out).expect("backward succeeds");

    let mut worst = 0.0f64;
    let mut work = case.inputs.clone();
    for (i, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = grads
            .get(*var)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; case.inputs[i].len()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        for k in 0..analytic.len() {
            let x = case.inputs[i].data()[k];
            work[i].data_mut()[k] = x + h;
            let up = value(&work);
            work[i].data_mut()[k] = x - h;
            let down = value(&work);
            work[i].data_mut()[k] = x;
            numeric.push((up - down) / (2.0 * h));
        }
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let err = inf(&diff) / inf(&analytic).max(inf(&numeric)).max(1e-6);
        worst = worst.max(err);
    }
    worst
}
