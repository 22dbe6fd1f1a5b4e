//! Full model: parameter layout, variant switches and the forward pass for
//! one target timestamp.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::rc::Rc;

use crate::autodiff::{Tape, Tensor, Var};
use crate::compgcn::{CompGcnStack, EdgeIndex};
use crate::config::TrainConfig;
use crate::data::{DatasetBundle, OntologyGraph, Quadruple, Snapshot};
use crate::decoder::{tkg_loss, total_loss, ConvDecoder};
use crate::error::{Error, Result};
use crate::fusion::{contrastive_loss, fuse, ContrastiveConfig, FusionMode, GatedFusion};
use crate::global::{encode_ontology, entailment_loss, BaseEvolutionEncoder, EntailmentConfig};
use crate::local::{LocalEncoder, SubgraphCache};
use crate::params::{Bindings, ParamStore};
use crate::rng::Rng;

/// Sizes the parameter shapes depend on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub entities: usize,
    pub concepts: usize,
    /// Query relations including inverses.
    pub relations: usize,
    /// Ontology relations including inverses.
    pub onto_relations: usize,
}

impl ModelDims {
    pub fn of(bundle: &DatasetBundle) -> Result<Self> {
        if !bundle.is_augmented() {
            return Err(Error::NotAugmented);
        }
        Ok(ModelDims {
            entities: bundle.entity_count,
            concepts: bundle.ontology.num_concepts(),
            relations: bundle.relation_space(),
            onto_relations: bundle.ontology.relation_space(),
        })
    }

    pub fn nodes(&self) -> usize {
        self.entities + self.concepts
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: TrainConfig,
    pub dims: ModelDims,
    pub params: ParamStore,
}

/// Dataset-derived structures shared by every step.
pub struct Context<'a> {
    pub graph: &'a OntologyGraph,
    pub edges: EdgeIndex,
    /// `(child, parent)` node pairs of the original ontology facts.
    pub pairs: Vec<(u32, u32)>,
    pub cache: RefCell<SubgraphCache>,
}

impl<'a> Context<'a> {
    pub fn new(bundle: &'a DatasetBundle) -> Result<Self> {
        if !bundle.is_augmented() {
            return Err(Error::NotAugmented);
        }
        let graph = &bundle.ontology;
        Ok(Context {
            graph,
            edges: EdgeIndex::from_facts(graph.num_nodes(), graph.facts()),
            pairs: graph.original_facts().iter().map(|f| (f.head, f.tail)).collect(),
            cache: RefCell::new(SubgraphCache::new()),
        })
    }
}

/// Everything one forward pass produces.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Temporal embeddings `Z`.
    pub z: Var,
    /// Fused embeddings used for decoding.
    pub z_hat: Var,
    pub h_l: Option<Var>,
    pub covered: BTreeSet<u32>,
    /// B×|E| raw candidate scores, one row per query.
    pub raw: Var,
    pub l_tkg: Var,
    pub l_hie: Option<Var>,
    pub l_cl: Option<Var>,
    pub total: Var,
}

impl Model {
    /// Fresh parameters for `bundle` (which must be inverse-augmented).
    pub fn new(cfg: TrainConfig, bundle: &DatasetBundle) -> Result<Self> {
        Self::with_dims(cfg, ModelDims::of(bundle)?)
    }

    /// Fresh parameters for the given sizes. Every block draws from its own
    /// stream of the configured seed.
    pub fn with_dims(cfg: TrainConfig, dims: ModelDims) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let stream = |k: u64| Rng::derive(cfg.seed, k);
        let mut params = ParamStore::new();
        if cfg.uses_global_encoder() {
            let mut r = stream(1);
            params.insert(
                "global.node_emb0",
                Tensor::xavier(&[dims.nodes(), d], dims.nodes(), d, &mut r),
            );
            CompGcnStack::init_params(&mut params, "global", cfg.layers, d, dims.onto_relations, &mut r);
        }
        if cfg.uses_entity_table() {
            let mut r = stream(2);
            params.insert(
                "entity_table",
                Tensor::xavier(&[dims.entities, d], dims.entities, d, &mut r),
            );
        }
        BaseEvolutionEncoder::init_params(&mut params, "evolve", d, dims.relations, &mut stream(3));
        if !cfg.no_local_encoder {
            let mut r = stream(4);
            params.insert(
                "local.node_emb0",
                Tensor::xavier(&[dims.nodes(), d], dims.nodes(), d, &mut r),
            );
            CompGcnStack::init_params(&mut params, "local", cfg.layers, d, dims.onto_relations, &mut r);
            if cfg.fusion == FusionMode::Gated {
                GatedFusion::init_params(&mut params, "fusion", d, &mut stream(5));
            }
        }
        ConvDecoder::init_params(&mut params, "decoder", cfg.channels, cfg.width, d, &mut stream(6));
        Ok(Model { cfg, dims, params })
    }

    /// Wraps loaded parameters, checking that names and shapes match the
    /// layout implied by `cfg` and `dims`.
    pub fn from_parts(cfg: TrainConfig, dims: ModelDims, params: ParamStore) -> Result<Self> {
        let reference = Self::with_dims(cfg.clone(), dims)?;
        let expected: Vec<(&String, &[usize])> = reference.params.iter().map(|(k, t)| (k, t.shape())).collect();
        let found: Vec<(&String, &[usize])> = params.iter().map(|(k, t)| (k, t.shape())).collect();
        if expected != found {
            return Err(Error::Checkpoint(format!(
                "parameter layout does not match the configuration and dataset ({} tensors expected, {} found)",
                expected.len(),
                found.len()
            )));
        }
        Ok(Model { cfg, dims, params })
    }

    /// Runs the model for the queries of one timestamp given its history
    /// (ascending, at most `history` snapshots). Queries are answered
    /// subject-first: each quadruple `(s, r, o, t)` asks for `o`.
    pub fn forward(
        &self,
        tape: &Tape,
        vars: &Bindings,
        ctx: &Context<'_>,
        history: &[&Snapshot],
        queries: &[Quadruple],
    ) -> Result<Forward> {
        let cfg = &self.cfg;
        if queries.is_empty() {
            return Err(Error::domain("forward", "no queries"));
        }

        let mut l_hie = None;
        let mut h_init = None;
        if cfg.uses_global_encoder() {
            let stack = CompGcnStack::bind(vars, "global", cfg.layers, cfg.op)?;
            let emb0 = vars.var("global.node_emb0")?;
            let onto = encode_ontology(tape, &stack, &ctx.edges, emb0, self.dims.entities)?;
            let cone = entailment_loss(tape, &ctx.pairs, onto.nodes, EntailmentConfig::new(cfg.k)?)?;
            if !cone.empty {
                l_hie = Some(cone.loss);
            }
            h_init = Some(onto.entities);
        }
        if cfg.uses_entity_table() {
            h_init = Some(vars.var("entity_table")?);
        }
        let h_init = h_init.expect("one entity source is always configured");

        let evo = BaseEvolutionEncoder::bind(vars, "evolve")?;
        let (z, rel) = evo.evolve(tape, history, h_init)?;

        let subjects: Vec<u32> = queries.iter().map(|q| q.s).collect();
        let (z_hat, h_l, covered, l_cl) = if cfg.no_local_encoder {
            (z, None, BTreeSet::new(), None)
        } else {
            let enc = LocalEncoder {
                stack: CompGcnStack::bind(vars, "local", cfg.layers, cfg.op)?,
                node_emb0: vars.var("local.node_emb0")?,
                hops: cfg.hops,
            };
            let local = enc.encode(tape, &mut ctx.cache.borrow_mut(), ctx.graph, &subjects)?;
            let gate = match cfg.fusion {
                FusionMode::Gated => Some(GatedFusion::bind(vars, "fusion")?),
                FusionMode::Sum => None,
            };
            let z_hat = fuse(tape, cfg.fusion, gate.as_ref(), local.h_l, z)?;
            let cl = contrastive_loss(tape, ContrastiveConfig::new(cfg.tau)?, z, local.h_l, &subjects)?;
            (z_hat, Some(local.h_l), local.covered, cl.loss)
        };

        let dec = ConvDecoder::bind(vars, "decoder")?;
        let s_idx: Rc<[usize]> = queries.iter().map(|q| q.s as usize).collect();
        let r_idx: Rc<[usize]> = queries.iter().map(|q| q.r as usize).collect();
        let z_s = tape.gather_rows(z_hat, s_idx)?;
        let r_q = tape.gather_rows(rel, r_idx)?;
        let raw = dec.raw_scores(tape, z_hat, z_s, r_q)?;
        let gold: Vec<u32> = queries.iter().map(|q| q.o).collect();
        let l_tkg = tkg_loss(tape, raw, &gold)?;
        let total = total_loss(tape, l_tkg, l_hie, l_cl, cfg.alpha1, cfg.alpha2)?;
        Ok(Forward {
            z,
            z_hat,
            h_l,
            covered,
            raw,
            l_tkg,
            l_hie,
            l_cl,
            total,
        })
    }

    pub fn scalar_count(&self) -> usize {
        self.params.scalar_count()
    }
}

/// The `history` snapshots strictly before `t`, ascending.
pub fn history_window(timeline: &[Snapshot], t: usize, history: usize) -> Vec<&Snapshot> {
    let start = t.saturating_sub(history);
    timeline[start..t.min(timeline.len())].iter().collect()
}

#[cfg(test)]
mod tests;
