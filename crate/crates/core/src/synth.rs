//! Deterministic synthetic TKG generator with an ontology and controllable
//! entity sparsity.
//!
//! Entities are grouped into leaf concepts; leaf concepts are grouped into
//! super concepts. A fixed share of each concept's entities is *popular*.
//! Facts instantiate behavioural templates `(concept_a, r, concept_b)`: the
//! subject is an entity of `concept_a` and the object a popular entity of
//! `concept_b`. Training subjects are mostly popular, while held-out
//! timestamps also query sparse subjects, whose answers can only be
//! inferred through their concept.
//!
//! Randomness comes from SplitMix64 streams derived from the seed, so the
//! output is reproducible on any platform.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, OntoFact, OntologyGraph, Quadruple};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Ontology relation linking an entity to its leaf concept.
pub const REL_INSTANCE_OF: u32 = 0;
/// Ontology relation linking a leaf concept to its super concept.
pub const REL_SUBCLASS_OF: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Template {
    pub concept_a: u32,
    pub relation: u32,
    pub concept_b: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Leaf concepts.
    pub concepts: usize,
    pub entities_per_concept: usize,
    /// Share of each concept's entities that are popular, in (0, 1).
    pub popular_fraction: f64,
    /// Leaf concepts per super concept.
    pub concepts_per_super: usize,
    /// Event relations; used when `templates` is empty.
    pub relations: usize,
    /// Explicit templates; when empty, every relation maps each leaf
    /// concept to the image of a seeded permutation.
    pub templates: Vec<Template>,
    pub timestamps: usize,
    pub facts_per_step: usize,
    /// Probability that a training subject is sparse.
    pub sparse_subject_rate: f64,
    /// Probability that a validation or test subject is sparse.
    pub sparse_test_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            concepts: 20,
            entities_per_concept: 10,
            popular_fraction: 0.3,
            concepts_per_super: 4,
            relations: 4,
            templates: Vec::new(),
            timestamps: 50,
            facts_per_step: 120,
            sparse_subject_rate: 0.02,
            sparse_test_fraction: 0.5,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed: 7,
        }
    }
}

/// A generated dataset with the ground truth used to build it.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub bundle: DatasetBundle,
    pub templates: Vec<Template>,
    /// Leaf concept index of every entity.
    pub concept_of: Vec<u32>,
    pub popular: Vec<bool>,
}

impl SynthSpec {
    pub fn entities(&self) -> usize {
        self.concepts * self.entities_per_concept
    }

    pub fn popular_per_concept(&self) -> usize {
        let n = (self.popular_fraction * self.entities_per_concept as f64).ceil() as usize;
        n.clamp(1, self.entities_per_concept)
    }

    pub fn super_concepts(&self) -> usize {
        self.concepts.div_ceil(self.concepts_per_super)
    }

    /// Timestamp counts of the train, validation and test ranges.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let t = self.timestamps;
        let valid = (self.valid_fraction * t as f64).round() as usize;
        let test = (self.test_fraction * t as f64).round() as usize;
        let held = (valid + test).min(t.saturating_sub(1));
        let test = test.min(held);
        (t - held, held - test, test)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synth spec: {m}")));
        if self.concepts == 0 || self.entities_per_concept == 0 || self.concepts_per_super == 0 {
            return bad("concepts, entities_per_concept and concepts_per_super must be positive".into());
        }
        if !(self.popular_fraction > 0.0 && self.popular_fraction < 1.0) {
            return bad(format!("popular_fraction {} must lie in (0, 1)", self.popular_fraction));
        }
        if self.timestamps == 0 || self.facts_per_step == 0 {
            return bad("timestamps and facts_per_step must be positive".into());
        }
        for (name, p) in [
            ("sparse_subject_rate", self.sparse_subject_rate),
            ("sparse_test_fraction", self.sparse_test_fraction),
            ("valid_fraction", self.valid_fraction),
            ("test_fraction", self.test_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} must lie in [0, 1]"));
            }
        }
        if self.templates.is_empty() && self.relations == 0 {
            return bad("either templates or a positive relation count is required".into());
        }
        for t in &self.templates {
            if t.concept_a as usize >= self.concepts || t.concept_b as usize >= self.concepts {
                return bad(format!("template {t:?} names a missing concept"));
            }
        }
        Ok(())
    }

    fn resolve_templates(&self) -> Vec<Template> {
        if !self.templates.is_empty() {
            return self.templates.clone();
        }
        let mut rng = Rng::derive(self.seed, 1);
        let mut out = Vec::with_capacity(self.relations * self.concepts);
        for r in 0..self.relations as u32 {
            let mut image: Vec<u32> = (0..self.concepts as u32).collect();
            rng.shuffle(&mut image);
            for (a, &b) in image.iter().enumerate() {
                out.push(Template {
                    concept_a: a as u32,
                    relation: r,
                    concept_b: b,
                });
            }
        }
        out
    }
}

/// Builds the dataset described by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let templates = spec.resolve_templates();
    let relations = templates
        .iter()
        .map(|t| t.relation as usize + 1)
        .max()
        .unwrap_or(0)
        .max(spec.relations);
    let epc = spec.entities_per_concept;
    let entities = spec.entities();
    let pop = spec.popular_per_concept();
    let concept_of: Vec<u32> = (0..entities).map(|e| (e / epc) as u32).collect();
    let popular: Vec<bool> = (0..entities).map(|e| e % epc < pop).collect();
    let popular_of = |c: u32| {
        (c as usize * epc..c as usize * epc + pop)
            .map(|e| e as u32)
            .collect::<Vec<_>>()
    };
    let sparse_of = |c: u32| {
        (c as usize * epc + pop..(c as usize + 1) * epc)
            .map(|e| e as u32)
            .collect::<Vec<_>>()
    };

    let leaf_node = |c: u32| (entities + c as usize) as u32;
    let super_node = |c: u32| (entities + spec.concepts + c as usize / spec.concepts_per_super) as u32;
    let mut onto = Vec::with_capacity(entities + spec.concepts);
    for e in 0..entities as u32 {
        onto.push(OntoFact {
            head: e,
            rel: REL_INSTANCE_OF,
            tail: leaf_node(concept_of[e as usize]),
        });
    }
    for c in 0..spec.concepts as u32 {
        onto.push(OntoFact {
            head: leaf_node(c),
            rel: REL_SUBCLASS_OF,
            tail: super_node(c),
        });
    }
    let ontology = OntologyGraph::new(entities, spec.concepts + spec.super_concepts(), 2, onto)?;

    let (n_train, n_valid, _) = spec.split_sizes();
    let mut rng = Rng::derive(spec.seed, 2);
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..spec.timestamps {
        let held_out = t >= n_train;
        let sparse_p = if held_out {
            spec.sparse_test_fraction
        } else {
            spec.sparse_subject_rate
        };
        let mut step = BTreeSet::new();
        for _ in 0..spec.facts_per_step {
            let tpl = *rng.choose(&templates);
            let sparse = sparse_of(tpl.concept_a);
            let subject = if !sparse.is_empty() && rng.bernoulli(sparse_p) {
                *rng.choose(&sparse)
            } else {
                *rng.choose(&popular_of(tpl.concept_a))
            };
            let object = *rng.choose(&popular_of(tpl.concept_b));
            step.insert(Quadruple::new(subject, tpl.relation, object, t as u32));
        }
        let dest = if t < n_train {
            &mut train
        } else if t < n_train + n_valid {
            &mut valid
        } else {
            &mut test
        };
        dest.extend(step);
    }
    let raw_timestamps = (0..spec.timestamps as i64).map(|t| t * 24).collect();
    let bundle = DatasetBundle::from_parts(train, valid, test, entities, relations, raw_timestamps, ontology)?;
    Ok(SynthDataset {
        spec: spec.clone(),
        bundle,
        templates,
        concept_of,
        popular,
    })
}

impl SynthDataset {
    /// Writes the dataset files plus `synth_spec.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        self.bundle.write_to(dir)?;
        let json = serde_json::to_string_pretty(&self.spec).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(dir.join("synth_spec.json"), json + "\n")?;
        Ok(())
    }
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_str(text).map_err(|e| Error::Config(format!("synth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}
