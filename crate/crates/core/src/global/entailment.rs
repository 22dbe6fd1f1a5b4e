//! Entailment-cone regularizer over ontology facts.
//!
//! A parent embedding `h_c` defines a cone with apex `h_c`, axis along the
//! ray from the origin through `h_c`, and half-aperture
//! `Ψ(h_c) = asin(K / ‖h_c‖)`. A child `h_ec` is penalized by how far the
//! angle `Ξ` between `h_c` and `h_ec − h_c` exceeds `Ψ`.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Norms at or below this make the cone angle undefined.
pub const CONE_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntailmentConfig {
    /// Cone constant `K`.
    pub k: f64,
}

impl EntailmentConfig {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("cone constant K must be positive, got {k}")));
        }
        Ok(EntailmentConfig { k })
    }

    /// Parent norms are floored here inside the loss so `K / ‖h_c‖ < 1`.
    pub fn norm_floor(&self) -> f64 {
        self.k + 1e-6
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Angle between `h_c` and `h_ec − h_c`, in `[0, π]`.
pub fn cone_angle(h_c: &[f64], h_ec: &[f64]) -> Result<f64> {
    if h_c.len() != h_ec.len() {
        return Err(Error::shape("cone_angle", format!("{} vs {}", h_c.len(), h_ec.len())));
    }
    let diff: Vec<f64> = h_c.iter().zip(h_ec).map(|(c, e)| c - e).collect();
    let (nc, nd, ne) = (norm(h_c), norm(&diff), norm(h_ec));
    if nc <= CONE_EPS || nd <= CONE_EPS {
        return Err(Error::degenerate(
            "cone_angle",
            "parent or child-minus-parent has zero norm",
        ));
    }
    let arg = (ne * ne - nc * nc - nd * nd) / (2.0 * nc * nd);
    Ok(arg.clamp(-1.0, 1.0).acos())
}

/// `asin(K / ‖h_c‖)`, with the ratio capped at 1 so the result lies in `(0, π/2]`.
pub fn half_aperture(h_c: &[f64], k: f64) -> f64 {
    (k / norm(h_c)).min(1.0).asin()
}

/// Hinge penalty for one pair, with the loss-side parent norm floor applied.
pub fn pair_loss(h_c: &[f64], h_ec: &[f64], cfg: EntailmentConfig) -> Result<f64> {
    let diff_norm = h_c.iter().zip(h_ec).map(|(c, e)| (c - e) * (c - e)).sum::<f64>().sqrt();
    if diff_norm <= CONE_EPS {
        return Ok(0.0);
    }
    let xi = cone_angle(h_c, h_ec)?;
    let psi = (cfg.k / norm(h_c).max(cfg.norm_floor())).asin();
    Ok((xi - psi).max(0.0))
}

/// Result of [`entailment_loss`].
#[derive(Clone, Copy, Debug)]
pub struct EntailmentLoss {
    pub loss: Var,
    /// Set when there were no pairs and the loss is a constant zero.
    pub empty: bool,
}

/// Mean hinge penalty over `(child, parent)` row pairs of `h_nodes`.
///
/// Pairs whose child equals the parent (or whose parent is at the origin)
/// add zero but still count in the mean.
pub fn entailment_loss(
    tape: &Tape,
    pairs: &[(u32, u32)],
    h_nodes: Var,
    cfg: EntailmentConfig,
) -> Result<EntailmentLoss> {
    if pairs.is_empty() {
        log::warn!("entailment loss requested with no ontology pairs");
        return Ok(EntailmentLoss {
            loss: tape.constant(Tensor::scalar(0.0)),
            empty: true,
        });
    }
    let values = tape.value(h_nodes);
    let (mut children, mut parents) = (Vec::new(), Vec::new());
    for &(child, parent) in pairs {
        let (ec, c) = (values.row(child as usize), values.row(parent as usize));
        let nd = c.iter().zip(ec).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if norm(c) > CONE_EPS && nd > CONE_EPS {
            children.push(child as usize);
            parents.push(parent as usize);
        }
    }
    if children.is_empty() {
        return Ok(EntailmentLoss {
            loss: tape.constant(Tensor::scalar(0.0)),
            empty: false,
        });
    }
    let c = tape.gather_rows(h_nodes, parents)?;
    let x = tape.gather_rows(h_nodes, children)?;
    let d = tape.sub(c, x)?;
    let sq = |v: Var| -> Result<Var> {
        let s = tape.square(v)?;
        tape.row_sum(s)
    };
    let (nc2, nx2, nd2) = (sq(c)?, sq(x)?, sq(d)?);
    let nc = tape.sqrt(nc2)?;
    let nd = tape.sqrt(nd2)?;

    let num = tape.sub(nx2, nc2)?;
    let num = tape.sub(num, nd2)?;
    let den = tape.mul(nc, nd)?;
    let den = tape.scale(den, 2.0)?;
    let cos = tape.div(num, den)?;
    let cos = tape.clamp(cos, -1.0, 1.0)?;
    let xi = tape.acos(cos)?;

    let floored = tape.clamp(nc, cfg.norm_floor(), f64::INFINITY)?;
    let ratio = tape.recip(floored)?;
    let ratio = tape.scale(ratio, cfg.k)?;
    let psi = tape.asin(ratio)?;

    let gap = tape.sub(xi, psi)?;
    let hinge = tape.relu(gap)?;
    let total = tape.sum(hinge)?;
    let loss = tape.scale(total, 1.0 / pairs.len() as f64)?;
    Ok(EntailmentLoss { loss, empty: false })
}
