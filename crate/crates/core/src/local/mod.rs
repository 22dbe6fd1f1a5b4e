//! Local ontology encoder: an independent CompGCN run over the N-hop
//! ontology neighbourhood of every query subject.
//!
//! The subgraphs of one batch are encoded together as a disjoint union, so
//! each subject's run sees only its own neighbourhood. Entity rows produced
//! by several runs are averaged; rows of entities outside every subgraph
//! stay exactly zero.

use std::cell::Cell;
use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use crate::autodiff::{Tape, Tensor, Var};
use crate::compgcn::{CompGcnStack, EdgeIndex};
use crate::data::{Hops, OntoFact, OntologyGraph, Subgraph};
use crate::error::{Error, Result};

/// Memoised N-hop subgraphs keyed by `(seed, hops)`, tied to one ontology.
#[derive(Debug, Default)]
pub struct SubgraphCache {
    fingerprint: Option<u64>,
    entries: HashMap<(u32, Hops), Rc<Subgraph>>,
    extractions: Cell<u64>,
}

impl SubgraphCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the subgraph of `seed`, extracting it on first use. A change
    /// of ontology drops every entry.
    pub fn get(&mut self, graph: &OntologyGraph, seed: u32, hops: Hops) -> Result<Rc<Subgraph>> {
        let fp = graph.fingerprint();
        if self.fingerprint != Some(fp) {
            self.entries.clear();
            self.fingerprint = Some(fp);
        }
        if let Some(sg) = self.entries.get(&(seed, hops)) {
            return Ok(Rc::clone(sg));
        }
        let sg = Rc::new(graph.nhop_subgraph(seed, hops)?);
        self.extractions.set(self.extractions.get() + 1);
        self.entries.insert((seed, hops), Rc::clone(&sg));
        Ok(sg)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.fingerprint = None;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of BFS extractions performed so far.
    pub fn extractions(&self) -> u64 {
        self.extractions.get()
    }
}

/// Parameters of the local view: its own node table and CompGCN stack.
#[derive(Clone, Debug)]
pub struct LocalEncoder {
    pub stack: CompGcnStack,
    /// `(|E|+|C|)`×d initial node features.
    pub node_emb0: Var,
    pub hops: Hops,
}

/// `H_l` plus the set of entities it covers.
#[derive(Clone, Debug)]
pub struct LocalEmbeddings {
    /// |E|×d.
    pub h_l: Var,
    pub covered: BTreeSet<u32>,
}

impl LocalEncoder {
    /// Encodes the neighbourhoods of `subjects` (duplicates ignored) over
    /// `graph` and merges the entity rows into an |E|×d matrix.
    pub fn encode(
        &self,
        tape: &Tape,
        cache: &mut SubgraphCache,
        graph: &OntologyGraph,
        subjects: &[u32],
    ) -> Result<LocalEmbeddings> {
        if subjects.is_empty() {
            return Err(Error::domain("encode_local", "no subjects"));
        }
        let entities = graph.num_entities();
        let nodes_total = graph.num_nodes();
        let table_shape = tape.shape(self.node_emb0);
        if table_shape.len() != 2 || table_shape[0] != nodes_total {
            return Err(Error::shape(
                "encode_local",
                format!("node table {table_shape:?} for {nodes_total} ontology nodes"),
            ));
        }
        let dim = table_shape[1];

        let unique: BTreeSet<u32> = subjects.iter().copied().collect();
        // Subjects whose neighbourhoods coincide share one run.
        let mut runs: Vec<Rc<Subgraph>> = Vec::new();
        for &s in &unique {
            let sg = cache.get(graph, s, self.hops)?;
            if !runs.iter().any(|r| r.nodes == sg.nodes) {
                runs.push(sg);
            }
        }

        let mut gather = Vec::new();
        let mut facts = Vec::new();
        let mut entity_rows = Vec::new();
        let mut entity_ids = Vec::new();
        let mut local = vec![u32::MAX; nodes_total];
        for sg in &runs {
            let offset = gather.len() as u32;
            for (i, &v) in sg.nodes.iter().enumerate() {
                local[v as usize] = offset + i as u32;
                gather.push(v as usize);
                if (v as usize) < entities {
                    entity_rows.push(offset as usize + i);
                    entity_ids.push(v as usize);
                }
            }
            facts.extend(sg.facts.iter().map(|f| OntoFact {
                head: local[f.head as usize],
                rel: f.rel,
                tail: local[f.tail as usize],
            }));
        }

        let mut cover = vec![0u32; entities];
        for &e in &entity_ids {
            cover[e] += 1;
        }
        let weights: Rc<[f64]> = entity_ids.iter().map(|&e| 1.0 / f64::from(cover[e])).collect();
        let covered: BTreeSet<u32> = entity_ids.iter().map(|&e| e as u32).collect();

        let h0 = tape.gather_rows(self.node_emb0, gather.clone())?;
        let edges = EdgeIndex::from_facts(gather.len(), &facts);
        let out = self.stack.forward(tape, &edges, h0)?;
        let rows = tape.gather_rows(out, entity_rows)?;
        let h_l = tape.scatter_rows(rows, entity_ids, weights, entities)?;
        debug_assert_eq!(tape.shape(h_l), vec![entities, dim]);
        Ok(LocalEmbeddings { h_l, covered })
    }
}

/// Zero matrix standing in for `H_l` when the local view is disabled.
pub fn zero_local(tape: &Tape, entities: usize, dim: usize) -> Var {
    tape.constant(Tensor::zeros(&[entities, dim]))
}

#[cfg(test)]
mod tests;
