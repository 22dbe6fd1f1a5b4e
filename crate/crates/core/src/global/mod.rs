//! Global ontology-aware encoder: ontology CompGCN for initial entity
//! embeddings, a recurrent relational GCN that evolves them over the history
//! window, and the entailment-cone loss on the ontology embeddings.

pub mod entailment;

use std::rc::Rc;

pub use entailment::{cone_angle, entailment_loss, half_aperture, EntailmentConfig, EntailmentLoss};

use crate::autodiff::{Tape, Tensor, Var, RRELU_SLOPE};
use crate::compgcn::{CompGcnStack, EdgeIndex};
use crate::data::Snapshot;
use crate::error::{Error, Result};
use crate::params::{Bindings, ParamStore};
use crate::rng::Rng;

/// Output of the ontology CompGCN.
#[derive(Clone, Copy, Debug)]
pub struct OntologyEmbeddings {
    /// Every ontology node, entities first.
    pub nodes: Var,
    /// First `|E|` rows of `nodes`.
    pub entities: Var,
    /// Remaining `|C|` rows.
    pub concepts: Var,
}

/// Runs the stack over the (inverse-augmented) ontology from `node_emb0`
/// and splits the final layer into entity and concept blocks.
pub fn encode_ontology(
    tape: &Tape,
    stack: &CompGcnStack,
    edges: &EdgeIndex,
    node_emb0: Var,
    num_entities: usize,
) -> Result<OntologyEmbeddings> {
    let nodes = stack.forward(tape, edges, node_emb0)?;
    let total = tape.value(nodes).rows();
    if num_entities > total {
        return Err(Error::shape(
            "encode_ontology",
            format!("{num_entities} entities of {total} nodes"),
        ));
    }
    let entities = tape.gather_rows(nodes, (0..num_entities).collect::<Vec<_>>())?;
    let concepts = tape.gather_rows(nodes, (num_entities..total).collect::<Vec<_>>())?;
    Ok(OntologyEmbeddings {
        nodes,
        entities,
        concepts,
    })
}

/// Standard gated recurrent cell:
///
/// ```text
/// r  = σ(W_ir x + W_hr h + b_r)
/// z  = σ(W_iz x + W_hz h + b_z)
/// n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Copy, Debug)]
pub struct GruCell {
    pub w_ir: Var,
    pub w_iz: Var,
    pub w_in: Var,
    pub w_hr: Var,
    pub w_hz: Var,
    pub w_hn: Var,
    pub b_r: Var,
    pub b_z: Var,
    pub b_in: Var,
    pub b_hn: Var,
}

const GRU_MATS: [&str; 6] = ["w_ir", "w_iz", "w_in", "w_hr", "w_hz", "w_hn"];
const GRU_BIASES: [&str; 4] = ["b_r", "b_z", "b_in", "b_hn"];

impl GruCell {
    pub fn init_params(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut Rng) {
        for m in GRU_MATS {
            store.insert(format!("{prefix}.{m}"), Tensor::xavier(&[dim, dim], dim, dim, rng));
        }
        for b in GRU_BIASES {
            store.insert(format!("{prefix}.{b}"), Tensor::zeros(&[dim]));
        }
    }

    pub fn bind(vars: &Bindings, prefix: &str) -> Result<Self> {
        let v = |n: &str| vars.var(&format!("{prefix}.{n}"));
        Ok(GruCell {
            w_ir: v("w_ir")?,
            w_iz: v("w_iz")?,
            w_in: v("w_in")?,
            w_hr: v("w_hr")?,
            w_hz: v("w_hz")?,
            w_hn: v("w_hn")?,
            b_r: v("b_r")?,
            b_z: v("b_z")?,
            b_in: v("b_in")?,
            b_hn: v("b_hn")?,
        })
    }

    pub fn step(&self, tape: &Tape, x: Var, h: Var) -> Result<Var> {
        let gate = |wi: Var, wh: Var, b: Var| -> Result<Var> {
            let a = tape.linear(x, wi)?;
            let c = tape.linear(h, wh)?;
            let s = tape.add(a, c)?;
            let s = tape.add_row(s, b)?;
            tape.sigmoid(s)
        };
        let r = gate(self.w_ir, self.w_hr, self.b_r)?;
        let z = gate(self.w_iz, self.w_hz, self.b_z)?;
        let xn = tape.linear(x, self.w_in)?;
        let xn = tape.add_row(xn, self.b_in)?;
        let hn = tape.linear(h, self.w_hn)?;
        let hn = tape.add_row(hn, self.b_hn)?;
        let rh = tape.mul(r, hn)?;
        let n = tape.add(xn, rh)?;
        let n = tape.tanh(n)?;
        // h' = n + z ⊙ (h − n)
        let diff = tape.sub(h, n)?;
        let zd = tape.mul(z, diff)?;
        tape.add(n, zd)
    }
}

/// Reference temporal encoder: one mean-aggregating relational GCN layer
/// per snapshot followed by a GRU update, with a static relation table.
#[derive(Clone, Copy, Debug)]
pub struct BaseEvolutionEncoder {
    pub w_self: Var,
    pub w_nbr: Var,
    pub gru: GruCell,
    /// `2|R|`×d, shared by every timestamp.
    pub rel_table: Var,
}

impl BaseEvolutionEncoder {
    pub fn init_params(store: &mut ParamStore, prefix: &str, dim: usize, relations: usize, rng: &mut Rng) {
        store.insert(format!("{prefix}.w_self"), Tensor::xavier(&[dim, dim], dim, dim, rng));
        store.insert(format!("{prefix}.w_nbr"), Tensor::xavier(&[dim, dim], dim, dim, rng));
        GruCell::init_params(store, &format!("{prefix}.gru"), dim, rng);
        store.insert(
            format!("{prefix}.rel"),
            Tensor::xavier(&[relations, dim], relations, dim, rng),
        );
    }

    pub fn bind(vars: &Bindings, prefix: &str) -> Result<Self> {
        Ok(BaseEvolutionEncoder {
            w_self: vars.var(&format!("{prefix}.w_self"))?,
            w_nbr: vars.var(&format!("{prefix}.w_nbr"))?,
            gru: GruCell::bind(vars, &format!("{prefix}.gru"))?,
            rel_table: vars.var(&format!("{prefix}.rel"))?,
        })
    }

    /// Evolves `h_init` (|E|×d) through `history` (ascending time) and
    /// returns `(Z, R)`. Entities with no incoming fact in a snapshot keep
    /// their row unchanged for that step.
    pub fn evolve(&self, tape: &Tape, history: &[&Snapshot], h_init: Var) -> Result<(Var, Var)> {
        let entities = tape.value(h_init).rows();
        let mut h = h_init;
        for snap in history {
            if snap.is_empty() {
                continue;
            }
            let mut indeg = vec![0u32; entities];
            for q in &snap.facts {
                if q.o as usize >= entities || q.s as usize >= entities {
                    return Err(Error::shape("evolve", format!("entity id beyond {entities}")));
                }
                indeg[q.o as usize] += 1;
            }
            let src: Rc<[usize]> = snap.facts.iter().map(|q| q.s as usize).collect();
            let rel: Rc<[usize]> = snap.facts.iter().map(|q| q.r as usize).collect();
            let dst: Rc<[usize]> = snap.facts.iter().map(|q| q.o as usize).collect();
            let norm: Rc<[f64]> = snap
                .facts
                .iter()
                .map(|q| 1.0 / f64::from(indeg[q.o as usize]))
                .collect();

            let hs = tape.gather_rows(h, src)?;
            let rs = tape.gather_rows(self.rel_table, rel)?;
            let msg = tape.add(hs, rs)?;
            let agg = tape.scatter_rows(msg, dst, norm, entities)?;
            let nbr = tape.linear(agg, self.w_nbr)?;
            let own = tape.linear(h, self.w_self)?;
            let m = tape.add(nbr, own)?;
            let m = tape.leaky_relu(m, RRELU_SLOPE)?;
            let updated = self.gru.step(tape, m, h)?;

            let present: Vec<f64> = indeg.iter().map(|&v| if v > 0 { 1.0 } else { 0.0 }).collect();
            let absent: Vec<f64> = present.iter().map(|p| 1.0 - p).collect();
            let present = tape.constant(Tensor::new(vec![entities, 1], present)?);
            let absent = tape.constant(Tensor::new(vec![entities, 1], absent)?);
            let keep_new = tape.mul_col(updated, present)?;
            let keep_old = tape.mul_col(h, absent)?;
            h = tape.add(keep_new, keep_old)?;
        }
        Ok((h, self.rel_table))
    }
}
