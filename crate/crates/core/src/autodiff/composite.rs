use super::tape::{Tape, Var};
use super::tensor::dot;
use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const NORM_EPS: f64 = 1e-12;

impl Tape {
    /// Euclidean norm of each row, n×1.
    pub fn row_norms(&self, a: Var) -> Result<Var> {
        let sq = self.square(a)?;
        let s = self.row_sum(sq)?;
        self.sqrt(s)
    }

    /// Each row divided by its norm. Fails on a zero row.
    pub fn normalize_rows(&self, a: Var) -> Result<Var> {
        let norms = self.row_norms(a)?;
        if self.value(norms).data().iter().any(|&n| n <= NORM_EPS) {
            return Err(Error::degenerate("normalize_rows", "zero-norm row"));
        }
        let inv = self.recip(norms)?;
        self.mul_col(a, inv)
    }

    /// Cosine similarity of two equal-length vectors, as a scalar.
    pub fn cosine_sim(&self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (va, vb) = (self.value(a), self.value(b));
        if sa != sb || va.rows() != 1 {
            return Err(Error::shape("cosine_sim", format!("{sa:?} vs {sb:?}")));
        }
        if va.norm() <= NORM_EPS || vb.norm() <= NORM_EPS {
            return Err(Error::degenerate("cosine_sim", "zero-norm operand"));
        }
        let na = self.normalize_rows(a)?;
        let nb = self.normalize_rows(b)?;
        let prod = self.mul(na, nb)?;
        self.sum(prod)
    }
}

/// Plain cosine similarity of two slices.
pub fn cosine_sim_values(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine_sim", format!("{} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na <= NORM_EPS || nb <= NORM_EPS {
        return Err(Error::degenerate("cosine_sim", "zero-norm operand"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}
