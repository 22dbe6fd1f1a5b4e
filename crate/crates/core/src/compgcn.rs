//! CompGCN message passing with an independent relation table per layer.
//!
//! For every node `c`:
//!
//! ```text
//! out[c] = σ( (1/v_c) Σ_{(ec, r) → c} W1 · f(h[ec], rel[r])  +  W2 · h[c] )
//! ```
//!
//! where `v_c` is the in-degree of `c`, `f` is the composition operator and
//! `σ` is the fixed-slope leaky ReLU. Nodes with no incoming facts keep only
//! the self-connection term.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var, RRELU_SLOPE};
use crate::data::OntoFact;
use crate::error::{Error, Result};
use crate::params::{Bindings, ParamStore};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Composition {
    /// `h_ec − h_r`
    Sub,
    /// `h_ec ⊙ h_r`
    Mult,
    /// circular correlation `h_ec ⋆ h_r`
    Corr,
}

impl std::str::FromStr for Composition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sub" => Ok(Composition::Sub),
            "mult" => Ok(Composition::Mult),
            "corr" => Ok(Composition::Corr),
            _ => Err(format!("unknown composition `{s}` (sub, mult, corr)")),
        }
    }
}

/// Row-wise composition of entity/concept rows with relation rows.
pub fn compose(tape: &Tape, op: Composition, h_ec: Var, h_r: Var) -> Result<Var> {
    match op {
        Composition::Sub => tape.sub(h_ec, h_r),
        Composition::Mult => tape.mul(h_ec, h_r),
        Composition::Corr => tape.circular_correlation(h_ec, h_r),
    }
}

/// Index arrays driving one round of message passing.
#[derive(Clone, Debug)]
pub struct EdgeIndex {
    pub num_nodes: usize,
    pub src: Rc<[usize]>,
    pub rel: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    /// `1 / v_dst` for each fact.
    pub norm: Rc<[f64]>,
}

impl EdgeIndex {
    pub fn from_facts(num_nodes: usize, facts: &[OntoFact]) -> Self {
        let mut indeg = vec![0u32; num_nodes];
        for f in facts {
            indeg[f.tail as usize] += 1;
        }
        EdgeIndex {
            num_nodes,
            src: facts.iter().map(|f| f.head as usize).collect(),
            rel: facts.iter().map(|f| f.rel as usize).collect(),
            dst: facts.iter().map(|f| f.tail as usize).collect(),
            norm: facts.iter().map(|f| 1.0 / f64::from(indeg[f.tail as usize])).collect(),
        }
    }

    pub fn num_facts(&self) -> usize {
        self.src.len()
    }
}

/// One layer's parameters, bound to a tape.
#[derive(Clone, Copy, Debug)]
pub struct CompGcnLayer {
    /// Aggregation matrix, d×d.
    pub w1: Var,
    /// Self-connection matrix, d×d.
    pub w2: Var,
    /// This layer's relation table, |R_O|×d.
    pub rel_emb: Var,
}

impl CompGcnLayer {
    pub fn forward(&self, tape: &Tape, op: Composition, edges: &EdgeIndex, h: Var) -> Result<Var> {
        let rows = tape.value(h).rows();
        if rows != edges.num_nodes {
            return Err(Error::shape(
                "compgcn",
                format!("{rows} feature rows for {} nodes", edges.num_nodes),
            ));
        }
        let self_term = tape.linear(h, self.w2)?;
        let pre = if edges.num_facts() == 0 {
            self_term
        } else {
            let h_src = tape.gather_rows(h, Rc::clone(&edges.src))?;
            let h_rel = tape.gather_rows(self.rel_emb, Rc::clone(&edges.rel))?;
            let msg = compose(tape, op, h_src, h_rel)?;
            // W1 is linear, so aggregating before projecting is exact.
            let agg = tape.scatter_rows(msg, Rc::clone(&edges.dst), Rc::clone(&edges.norm), edges.num_nodes)?;
            let nbr = tape.linear(agg, self.w1)?;
            tape.add(nbr, self_term)?
        };
        tape.leaky_relu(pre, RRELU_SLOPE)
    }
}

#[derive(Clone, Debug)]
pub struct CompGcnStack {
    pub layers: Vec<CompGcnLayer>,
    pub op: Composition,
}

impl CompGcnStack {
    /// Applies the layers in order; with no layers the input is returned as is.
    pub fn forward(&self, tape: &Tape, edges: &EdgeIndex, h0: Var) -> Result<Var> {
        let mut h = h0;
        for layer in &self.layers {
            h = layer.forward(tape, self.op, edges, h)?;
        }
        Ok(h)
    }

    /// Inserts Xavier-initialized tensors for a `layers`-deep stack under `prefix`.
    pub fn init_params(
        store: &mut ParamStore,
        prefix: &str,
        layers: usize,
        dim: usize,
        relations: usize,
        rng: &mut Rng,
    ) {
        for j in 0..layers {
            store.insert(
                format!("{prefix}.layer{j}.w1"),
                Tensor::xavier(&[dim, dim], dim, dim, rng),
            );
            store.insert(
                format!("{prefix}.layer{j}.w2"),
                Tensor::xavier(&[dim, dim], dim, dim, rng),
            );
            store.insert(
                format!("{prefix}.layer{j}.rel"),
                Tensor::xavier(&[relations, dim], relations, dim, rng),
            );
        }
    }

    pub fn bind(vars: &Bindings, prefix: &str, layers: usize, op: Composition) -> Result<Self> {
        let layers = (0..layers)
            .map(|j| {
                Ok(CompGcnLayer {
                    w1: vars.var(&format!("{prefix}.layer{j}.w1"))?,
                    w2: vars.var(&format!("{prefix}.layer{j}.w2"))?,
                    rel_emb: vars.var(&format!("{prefix}.layer{j}.rel"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CompGcnStack { layers, op })
    }
}

#[cfg(test)]
mod tests;
