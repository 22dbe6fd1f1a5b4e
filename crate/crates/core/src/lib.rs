//! Ontology-enhanced temporal knowledge graph extrapolation.
//!
//! A temporal knowledge graph is a sequence of timestamped fact snapshots.
//! The model predicts the missing entity of a query `(s, r, ?, t+1)` from
//! the preceding snapshots, using an ontology graph (entities linked to
//! concepts, concepts linked into a hierarchy) in two ways:
//!
//! * a global encoder runs a CompGCN over the whole ontology to initialize
//!   entity embeddings, which a recurrent relational GCN then evolves over
//!   the history window; an entailment-cone loss keeps children inside
//!   their parents' cones;
//! * a local encoder runs an independent CompGCN over the N-hop ontology
//!   neighbourhood of each query subject.
//!
//! A sigmoid gate blends the two views, a contrastive loss aligns them, and
//! a ConvTransE-style decoder scores every candidate entity.

pub mod autodiff;
pub mod checkpoint;
pub mod compgcn;
pub mod config;
pub mod data;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod global;
pub mod gradcheck;
pub mod local;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod selfcheck;
pub mod sweep;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
