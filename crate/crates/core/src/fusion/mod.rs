//! Gated fusion of the temporal and local views, and the contrastive loss
//! aligning them.
//!
//! ```text
//! Θ = σ(H_l W3ᵀ + Z W4ᵀ + b)
//! Ẑ = Θ ⊙ H_l + (1 − Θ) ⊙ Z
//! L_cl = −(1/|M|) Σ_u log( exp(sim(z_u, h_u)/τ) / Σ_{j≠u} exp(sim(z_u, h_j)/τ) )
//! ```

use std::collections::BTreeSet;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{Bindings, ParamStore};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Learned sigmoid gate.
    Gated,
    /// Plain sum `H_l + Z`.
    Sum,
}

impl std::str::FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gated" | "gate" => Ok(FusionMode::Gated),
            "sum" => Ok(FusionMode::Sum),
            _ => Err(format!("unknown fusion mode `{s}` (gated, sum)")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GatedFusion {
    pub w3: Var,
    pub w4: Var,
    pub b: Var,
}

impl GatedFusion {
    pub fn init_params(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut Rng) {
        store.insert(format!("{prefix}.w3"), Tensor::xavier(&[dim, dim], dim, dim, rng));
        store.insert(format!("{prefix}.w4"), Tensor::xavier(&[dim, dim], dim, dim, rng));
        store.insert(format!("{prefix}.b"), Tensor::zeros(&[dim]));
    }

    pub fn bind(vars: &Bindings, prefix: &str) -> Result<Self> {
        Ok(GatedFusion {
            w3: vars.var(&format!("{prefix}.w3"))?,
            w4: vars.var(&format!("{prefix}.w4"))?,
            b: vars.var(&format!("{prefix}.b"))?,
        })
    }

    /// Gate values `Θ`.
    pub fn gate(&self, tape: &Tape, h_l: Var, z: Var) -> Result<Var> {
        if tape.shape(h_l) != tape.shape(z) {
            return Err(Error::shape(
                "fuse",
                format!("H_l {:?} vs Z {:?}", tape.shape(h_l), tape.shape(z)),
            ));
        }
        let a = tape.linear(h_l, self.w3)?;
        let c = tape.linear(z, self.w4)?;
        let s = tape.add(a, c)?;
        let s = tape.add_row(s, self.b)?;
        tape.sigmoid(s)
    }

    /// `Ẑ = Z + Θ ⊙ (H_l − Z)`.
    pub fn fuse(&self, tape: &Tape, h_l: Var, z: Var) -> Result<Var> {
        let theta = self.gate(tape, h_l, z)?;
        let diff = tape.sub(h_l, z)?;
        let g = tape.mul(theta, diff)?;
        tape.add(z, g)
    }
}

/// Combines the two views according to `mode`; `gate` is required for
/// [`FusionMode::Gated`].
pub fn fuse(tape: &Tape, mode: FusionMode, gate: Option<&GatedFusion>, h_l: Var, z: Var) -> Result<Var> {
    match (mode, gate) {
        (FusionMode::Gated, Some(g)) => g.fuse(tape, h_l, z),
        (FusionMode::Gated, None) => Err(Error::domain("fuse", "gated fusion without gate parameters")),
        (FusionMode::Sum, _) => tape.add(h_l, z),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContrastiveConfig {
    pub tau: f64,
}

impl ContrastiveConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::domain(
                "contrastive_loss",
                format!("temperature {tau} must be positive"),
            ));
        }
        Ok(Self { tau })
    }
}

/// Result of [`contrastive_loss`]: `loss` is `None` when fewer than two
/// usable entities remain, in which case the term contributes zero.
#[derive(Clone, Debug)]
pub struct ContrastiveLoss {
    pub loss: Option<Var>,
    /// Deduplicated entities that entered the batch, ascending.
    pub batch: Vec<u32>,
}

/// Contrastive loss over the entities `m`. Duplicates are merged and
/// entities whose `H_l` row is exactly zero are dropped. The positive pair
/// is excluded from each denominator.
pub fn contrastive_loss(tape: &Tape, cfg: ContrastiveConfig, z: Var, h_l: Var, m: &[u32]) -> Result<ContrastiveLoss> {
    if tape.shape(z) != tape.shape(h_l) {
        return Err(Error::shape(
            "contrastive_loss",
            format!("Z {:?} vs H_l {:?}", tape.shape(z), tape.shape(h_l)),
        ));
    }
    let hv = tape.value(h_l);
    let rows = hv.rows();
    let unique: BTreeSet<u32> = m.iter().copied().collect();
    let mut batch = Vec::with_capacity(unique.len());
    for &e in &unique {
        if e as usize >= rows {
            return Err(Error::IdOutOfRange {
                what: "entity",
                id: e.into(),
                limit: rows as u64,
            });
        }
        if hv.row(e as usize).iter().any(|&v| v != 0.0) {
            batch.push(e);
        }
    }
    if batch.len() < 2 {
        return Ok(ContrastiveLoss { loss: None, batch });
    }
    let idx: Rc<[usize]> = batch.iter().map(|&e| e as usize).collect();
    let zu = tape.gather_rows(z, Rc::clone(&idx))?;
    let hu = tape.gather_rows(h_l, idx)?;
    let zn = tape.normalize_rows(zu)?;
    let hn = tape.normalize_rows(hu)?;
    let ht = tape.transpose(hn)?;
    let sim = tape.matmul(zn, ht)?;
    let logits = tape.scale(sim, 1.0 / cfg.tau)?;
    let denom = tape.row_logsumexp(logits, true)?;
    let diag: Vec<usize> = (0..batch.len()).collect();
    let pos = tape.pick(logits, diag)?;
    let per = tape.sub(denom, pos)?;
    let loss = tape.mean(per)?;
    Ok(ContrastiveLoss {
        loss: Some(loss),
        batch,
    })
}

#[cfg(test)]
mod tests;
