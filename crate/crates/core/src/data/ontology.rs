use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One ontological fact `(ec, r_O, c)`: an entity or concept linked to a concept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OntoFact {
    pub head: u32,
    pub rel: u32,
    pub tail: u32,
}

/// Hop budget for neighbourhood extraction; `Max` means the whole ontology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "HopsRepr", into = "HopsRepr")]
pub enum Hops {
    Finite(usize),
    Max,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum HopsRepr {
    Num(usize),
    Word(String),
}

impl TryFrom<HopsRepr> for Hops {
    type Error = String;

    fn try_from(r: HopsRepr) -> std::result::Result<Self, String> {
        match r {
            HopsRepr::Num(n) => Ok(Hops::Finite(n)),
            HopsRepr::Word(w) => w.parse(),
        }
    }
}

impl From<Hops> for HopsRepr {
    fn from(h: Hops) -> Self {
        match h {
            Hops::Finite(n) => HopsRepr::Num(n),
            Hops::Max => HopsRepr::Word("max".into()),
        }
    }
}

impl std::str::FromStr for Hops {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(Hops::Max);
        }
        s.parse::<usize>()
            .map(Hops::Finite)
            .map_err(|_| format!("invalid hop count `{s}` (expected integer or `max`)"))
    }
}

impl fmt::Display for Hops {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hops::Finite(n) => write!(f, "{n}"),
            Hops::Max => f.write_str("max"),
        }
    }
}

/// Static graph over entities (ids `0..E`) and concepts (ids `E..E+C`).
#[derive(Clone, Debug, PartialEq)]
pub struct OntologyGraph {
    num_entities: usize,
    num_concepts: usize,
    num_relations: usize,
    facts: Vec<OntoFact>,
    original_len: usize,
    augmented: bool,
    in_degree: Vec<u32>,
    /// Undirected incidence: fact indices touching each node.
    incident: Vec<Vec<u32>>,
    fingerprint: u64,
}

impl OntologyGraph {
    /// Builds a graph from original (non-inverse) facts. Every tail must be a
    /// concept; heads may be entities or concepts.
    pub fn new(num_entities: usize, num_concepts: usize, num_relations: usize, facts: Vec<OntoFact>) -> Result<Self> {
        let nodes = (num_entities + num_concepts) as u64;
        for f in &facts {
            if u64::from(f.head) >= nodes {
                return Err(Error::IdOutOfRange {
                    what: "ontology node",
                    id: f.head.into(),
                    limit: nodes,
                });
            }
            if (f.tail as usize) < num_entities || u64::from(f.tail) >= nodes {
                return Err(Error::IdOutOfRange {
                    what: "ontology concept",
                    id: f.tail.into(),
                    limit: nodes,
                });
            }
            if f.rel as usize >= num_relations {
                return Err(Error::IdOutOfRange {
                    what: "ontology relation",
                    id: f.rel.into(),
                    limit: num_relations as u64,
                });
            }
        }
        let original_len = facts.len();
        Ok(Self::assemble(
            num_entities,
            num_concepts,
            num_relations,
            facts,
            original_len,
            false,
        ))
    }

    fn assemble(
        num_entities: usize,
        num_concepts: usize,
        num_relations: usize,
        facts: Vec<OntoFact>,
        original_len: usize,
        augmented: bool,
    ) -> Self {
        let n = num_entities + num_concepts;
        let mut in_degree = vec![0u32; n];
        let mut incident = vec![Vec::new(); n];
        for (i, f) in facts.iter().enumerate() {
            in_degree[f.tail as usize] += 1;
            incident[f.head as usize].push(i as u32);
            if f.tail != f.head {
                incident[f.tail as usize].push(i as u32);
            }
        }
        let mut graph = OntologyGraph {
            num_entities,
            num_concepts,
            num_relations,
            facts,
            original_len,
            augmented,
            in_degree,
            incident,
            fingerprint: 0,
        };
        graph.fingerprint = graph.compute_fingerprint();
        graph
    }

    /// Adds `(c, r_O + |R_O|, ec)` for every fact so entity nodes receive messages.
    pub fn augment_inverse(&self) -> Result<Self> {
        if self.augmented {
            return Err(Error::AlreadyAugmented);
        }
        let r = self.num_relations as u32;
        let mut facts = self.facts.clone();
        facts.extend(self.facts.iter().map(|f| OntoFact {
            head: f.tail,
            rel: f.rel + r,
            tail: f.head,
        }));
        Ok(Self::assemble(
            self.num_entities,
            self.num_concepts,
            self.num_relations,
            facts,
            self.original_len,
            true,
        ))
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_concepts(&self) -> usize {
        self.num_concepts
    }

    pub fn num_nodes(&self) -> usize {
        self.num_entities + self.num_concepts
    }

    /// Number of original ontology relations `|R_O|`.
    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    /// Relation ids in use: `2|R_O|` once augmented.
    pub fn relation_space(&self) -> usize {
        if self.augmented {
            2 * self.num_relations
        } else {
            self.num_relations
        }
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn facts(&self) -> &[OntoFact] {
        &self.facts
    }

    /// Facts as loaded, without inverse copies.
    pub fn original_facts(&self) -> &[OntoFact] {
        &self.facts[..self.original_len]
    }

    /// `v_c`: number of facts whose tail is `node`.
    pub fn in_degree(&self, node: usize) -> u32 {
        self.in_degree[node]
    }

    pub fn in_degrees(&self) -> &[u32] {
        &self.in_degree
    }

    /// Order-sensitive fingerprint of the fact list, for cache invalidation.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        mix(self.num_entities as u64);
        mix(self.num_concepts as u64);
        mix(self.num_relations as u64);
        for f in &self.facts {
            mix(u64::from(f.head));
            mix(u64::from(f.rel));
            mix(u64::from(f.tail));
        }
        h
    }

    /// Nodes within `hops` undirected steps of `seed`, and the facts whose
    /// endpoints were both reached.
    pub fn nhop_subgraph(&self, seed: u32, hops: Hops) -> Result<Subgraph> {
        if seed as usize >= self.num_entities {
            return Err(Error::InvalidSeed {
                seed,
                entities: self.num_entities,
            });
        }
        let n = self.num_nodes();
        let (nodes, reached) = match hops {
            Hops::Max => ((0..n as u32).collect::<Vec<_>>(), vec![true; n]),
            Hops::Finite(limit) => {
                let mut depth = vec![usize::MAX; n];
                let mut queue = VecDeque::from([seed]);
                depth[seed as usize] = 0;
                while let Some(u) = queue.pop_front() {
                    let du = depth[u as usize];
                    if du == limit {
                        continue;
                    }
                    for &fi in &self.incident[u as usize] {
                        let f = self.facts[fi as usize];
                        let v = if f.head == u { f.tail } else { f.head };
                        if depth[v as usize] == usize::MAX {
                            depth[v as usize] = du + 1;
                            queue.push_back(v);
                        }
                    }
                }
                let reached: Vec<bool> = depth.iter().map(|&d| d != usize::MAX).collect();
                let nodes = (0..n as u32).filter(|&v| reached[v as usize]).collect();
                (nodes, reached)
            }
        };
        let facts = match hops {
            Hops::Max => self.facts.clone(),
            Hops::Finite(_) => {
                // Visit facts through incidence lists of reached nodes so the
                // cost follows the subgraph size, then restore file order.
                let mut idx: Vec<u32> = nodes
                    .iter()
                    .flat_map(|&v| self.incident[v as usize].iter().copied())
                    .filter(|&fi| {
                        let f = self.facts[fi as usize];
                        reached[f.head as usize] && reached[f.tail as usize]
                    })
                    .collect();
                idx.sort_unstable();
                idx.dedup();
                idx.into_iter().map(|fi| self.facts[fi as usize]).collect()
            }
        };
        Ok(Subgraph {
            seed,
            hops,
            nodes,
            facts,
        })
    }
}

/// Neighbourhood extracted by [`OntologyGraph::nhop_subgraph`].
#[derive(Clone, Debug, PartialEq)]
pub struct Subgraph {
    pub seed: u32,
    pub hops: Hops,
    /// Reached node ids, ascending.
    pub nodes: Vec<u32>,
    /// Facts among reached nodes, in ontology order.
    pub facts: Vec<OntoFact>,
}
