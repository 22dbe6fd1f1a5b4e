//! Convolutional decoder, candidate scoring and the joint objective.
//!
//! A query `(s, r)` is turned into a vector by convolving the 2×d map
//! `[z_s; r]` with C same-padded kernels, applying the leaky ReLU and
//! projecting the flattened C·d features back to d. Candidates are scored
//! by dot product with the fused entity matrix; reported scores pass the
//! dot products through a sigmoid, while training uses softmax
//! cross-entropy over the raw dot products.

use std::rc::Rc;

use crate::autodiff::{sigmoid, Tape, Tensor, Var, RRELU_SLOPE};
use crate::error::{Error, Result};
use crate::params::{Bindings, ParamStore};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug)]
pub struct ConvDecoder {
    /// C×2×w.
    pub kernels: Var,
    /// (C·d)×d.
    pub proj: Var,
}

impl ConvDecoder {
    pub fn init_params(store: &mut ParamStore, prefix: &str, channels: usize, width: usize, dim: usize, rng: &mut Rng) {
        store.insert(
            format!("{prefix}.kernels"),
            Tensor::xavier(&[channels, 2, width], 2 * width, channels * width, rng),
        );
        store.insert(
            format!("{prefix}.proj"),
            Tensor::xavier(&[channels * dim, dim], channels * dim, dim, rng),
        );
    }

    pub fn bind(vars: &Bindings, prefix: &str) -> Result<Self> {
        Ok(ConvDecoder {
            kernels: vars.var(&format!("{prefix}.kernels"))?,
            proj: vars.var(&format!("{prefix}.proj"))?,
        })
    }

    /// Query vectors for B subject rows `z_s` and relation rows `r`, both B×d.
    pub fn decode(&self, tape: &Tape, z_s: Var, r: Var) -> Result<Var> {
        let feats = tape.conv_same(z_s, r, self.kernels)?;
        let feats = tape.leaky_relu(feats, RRELU_SLOPE)?;
        tape.matmul(feats, self.proj)
    }

    /// Raw dot-product scores `Q Ẑᵀ`, B×|E|.
    pub fn raw_scores(&self, tape: &Tape, z_hat: Var, z_s: Var, r: Var) -> Result<Var> {
        let q = self.decode(tape, z_s, r)?;
        tape.linear(q, z_hat)
    }
}

/// Sigmoid of raw scores, the reported plausibility in (0, 1).
pub fn sigmoid_scores(raw: &Tensor) -> Tensor {
    let data = raw.data().iter().map(|&x| sigmoid(x)).collect();
    Tensor::new(raw.shape().to_vec(), data).expect("same shape")
}

/// Mean softmax cross-entropy of the gold columns of `raw`.
pub fn tkg_loss(tape: &Tape, raw: Var, gold: &[u32]) -> Result<Var> {
    if gold.is_empty() {
        return Err(Error::domain("tkg_loss", "empty batch"));
    }
    let cols: Rc<[usize]> = gold.iter().map(|&g| g as usize).collect();
    let lse = tape.row_logsumexp(raw, false)?;
    let picked = tape.pick(raw, cols)?;
    let per = tape.sub(lse, picked)?;
    tape.mean(per)
}

/// `L_tkg + α1 L_hie + α2 L_cl`; absent terms contribute zero.
pub fn total_loss(tape: &Tape, tkg: Var, hie: Option<Var>, cl: Option<Var>, alpha1: f64, alpha2: f64) -> Result<Var> {
    let mut total = tkg;
    for (term, alpha) in [(hie, alpha1), (cl, alpha2)] {
        if let Some(t) = term {
            if alpha != 0.0 {
                let w = tape.scale(t, alpha)?;
                total = tape.add(total, w)?;
            }
        }
    }
    Ok(total)
}

/// Scalar form of [`total_loss`]; errors on a non-finite component.
pub fn total_loss_value(tkg: f64, hie: f64, cl: f64, alpha1: f64, alpha2: f64) -> Result<f64> {
    if !(tkg.is_finite() && hie.is_finite() && cl.is_finite()) {
        return Err(Error::NonFinite { op: "total_loss" });
    }
    Ok(tkg + alpha1 * hie + alpha2 * cl)
}
