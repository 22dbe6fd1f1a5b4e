//! Temporal quadruples, snapshots, and the ontology graph.
//!
//! On-disk layout of a dataset directory:
//!
//! | file | line format |
//! |------|-------------|
//! | `train.txt`, `valid.txt`, `test.txt` | `s⟨TAB⟩r⟨TAB⟩o⟨TAB⟩t` |
//! | `stat.txt` | `entity_count⟨TAB⟩relation_count` |
//! | `ontology.txt` | `ec⟨TAB⟩r_O⟨TAB⟩c`, with `c ≥ entity_count` |
//! | `ontology_names.txt` (optional) | `id⟨TAB⟩label` |
//!
//! Raw timestamps may be any integers; they are ranked into contiguous
//! indices over the union of all three splits.

mod ontology;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ontology::{Hops, OntoFact, OntologyGraph, Subgraph};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruple {
    pub s: u32,
    pub r: u32,
    pub o: u32,
    pub t: u32,
}

impl Quadruple {
    pub fn new(s: u32, r: u32, o: u32, t: u32) -> Self {
        Quadruple { s, r, o, t }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

/// All facts at one timestamp.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Snapshot {
    pub t: u32,
    pub facts: Vec<Quadruple>,
    /// entity → (relation, object) for facts where it is the subject.
    pub out_edges: BTreeMap<u32, Vec<(u32, u32)>>,
    /// entity → (relation, subject) for facts where it is the object.
    pub in_edges: BTreeMap<u32, Vec<(u32, u32)>>,
}

impl Snapshot {
    pub fn new(t: u32, facts: Vec<Quadruple>) -> Self {
        let mut out_edges: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
        let mut in_edges: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
        for q in &facts {
            debug_assert_eq!(q.t, t);
            out_edges.entry(q.s).or_default().push((q.r, q.o));
            in_edges.entry(q.o).or_default().push((q.r, q.s));
        }
        Snapshot {
            t,
            facts,
            out_edges,
            in_edges,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

/// Training-degree ranges used for per-bucket reporting. Intervals are
/// half-open: `[0,10)`, …, `[50,100)`, `[100,∞)`; labels follow the
/// conventional table headings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DegreeBucket {
    D0To10,
    D10To20,
    D20To30,
    D30To40,
    D40To50,
    D50To100,
    D100Plus,
}

impl DegreeBucket {
    pub const ALL: [DegreeBucket; 7] = [
        DegreeBucket::D0To10,
        DegreeBucket::D10To20,
        DegreeBucket::D20To30,
        DegreeBucket::D30To40,
        DegreeBucket::D40To50,
        DegreeBucket::D50To100,
        DegreeBucket::D100Plus,
    ];

    pub fn of_degree(degree: u32) -> Self {
        match degree {
            0..=9 => DegreeBucket::D0To10,
            10..=19 => DegreeBucket::D10To20,
            20..=29 => DegreeBucket::D20To30,
            30..=39 => DegreeBucket::D30To40,
            40..=49 => DegreeBucket::D40To50,
            50..=99 => DegreeBucket::D50To100,
            _ => DegreeBucket::D100Plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DegreeBucket::D0To10 => "[0,10]",
            DegreeBucket::D10To20 => "[10,20]",
            DegreeBucket::D20To30 => "[20,30]",
            DegreeBucket::D30To40 => "[30,40]",
            DegreeBucket::D40To50 => "[40,50]",
            DegreeBucket::D50To100 => "[50,100]",
            DegreeBucket::D100Plus => "[100,max]",
        }
    }
}

impl fmt::Display for DegreeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for DegreeBucket {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

/// A loaded dataset: three time-ordered splits plus the ontology.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
    pub entity_count: usize,
    /// Original relation count `|R|`; ids `|R|..2|R|` are inverses once augmented.
    pub relation_count: usize,
    pub timestamp_count: usize,
    /// Raw timestamp for each contiguous index.
    pub raw_timestamps: Vec<i64>,
    pub ontology: OntologyGraph,
    /// Number of original training facts each entity takes part in.
    pub train_degree: Vec<u32>,
    augmented: bool,
}

impl DatasetBundle {
    /// Assembles a bundle from already-indexed facts, validating ids.
    pub fn from_parts(
        train: Vec<Quadruple>,
        valid: Vec<Quadruple>,
        test: Vec<Quadruple>,
        entity_count: usize,
        relation_count: usize,
        raw_timestamps: Vec<i64>,
        ontology: OntologyGraph,
    ) -> Result<Self> {
        let timestamp_count = raw_timestamps.len();
        for q in train.iter().chain(&valid).chain(&test) {
            check_id("entity", q.s, entity_count)?;
            check_id("entity", q.o, entity_count)?;
            check_id("relation", q.r, relation_count)?;
            check_id("timestamp", q.t, timestamp_count)?;
        }
        if ontology.num_entities() != entity_count {
            return Err(Error::Config(format!(
                "ontology has {} entities, dataset has {entity_count}",
                ontology.num_entities()
            )));
        }
        let train_degree = degrees(&train, entity_count);
        Ok(DatasetBundle {
            train,
            valid,
            test,
            entity_count,
            relation_count,
            timestamp_count,
            raw_timestamps,
            ontology,
            train_degree,
            augmented: false,
        })
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    /// Relation ids in use: `2|R|` once augmented.
    pub fn relation_space(&self) -> usize {
        if self.augmented {
            2 * self.relation_count
        } else {
            self.relation_count
        }
    }

    pub fn split(&self, split: Split) -> &[Quadruple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Adds `(o, r + |R|, s, t)` for every fact, and inverse ontology facts.
    pub fn augment_inverse(&self) -> Result<Self> {
        if self.augmented {
            return Err(Error::AlreadyAugmented);
        }
        let r = self.relation_count as u32;
        let inv = |facts: &[Quadruple]| -> Vec<Quadruple> {
            let mut out = facts.to_vec();
            out.extend(facts.iter().map(|q| Quadruple::new(q.o, q.r + r, q.s, q.t)));
            out
        };
        Ok(DatasetBundle {
            train: inv(&self.train),
            valid: inv(&self.valid),
            test: inv(&self.test),
            ontology: self.ontology.augment_inverse()?,
            augmented: true,
            ..self.clone()
        })
    }

    /// One snapshot per timestamp index from 0 to the split's last timestamp;
    /// timestamps without facts give empty snapshots so `result[t].t == t`.
    pub fn snapshots(&self, split: Split) -> Vec<Snapshot> {
        group_snapshots(self.split(split))
    }

    /// Snapshots over all splits together, indexed by timestamp.
    pub fn timeline(&self) -> Vec<Snapshot> {
        let all: Vec<Quadruple> = self
            .train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .copied()
            .collect();
        let mut snaps = group_snapshots(&all);
        while snaps.len() < self.timestamp_count {
            snaps.push(Snapshot::new(snaps.len() as u32, Vec::new()));
        }
        snaps
    }

    pub fn degree_bucket(&self, entity: u32) -> DegreeBucket {
        DegreeBucket::of_degree(self.train_degree.get(entity as usize).copied().unwrap_or(0))
    }

    /// Parses a dataset directory. The result is not augmented.
    pub fn load(dir: &Path) -> Result<Self> {
        let stat = read_table(&dir.join("stat.txt"), 2)?;
        let first = stat.first().ok_or_else(|| Error::Parse {
            file: "stat.txt".into(),
            line: 1,
            detail: "empty file".into(),
        })?;
        let (entity_count, relation_count) = (first.1[0] as usize, first.1[1] as usize);

        let mut raw_splits = Vec::new();
        for (name, tag) in [("train.txt", "train"), ("valid.txt", "valid"), ("test.txt", "test")] {
            let rows = read_table(&dir.join(name), 4)?;
            if rows.is_empty() {
                return Err(Error::EmptySplit(tag));
            }
            raw_splits.push((name, rows));
        }

        let mut raw_ts: Vec<i64> = raw_splits
            .iter()
            .flat_map(|(_, rows)| rows.iter().map(|(_, v)| v[3]))
            .collect();
        raw_ts.sort_unstable();
        raw_ts.dedup();

        let mut splits = Vec::new();
        for (name, rows) in &raw_splits {
            let mut facts = Vec::with_capacity(rows.len());
            for (line, v) in rows {
                let id = |what: &'static str, x: i64, limit: usize| -> Result<u32> {
                    if x < 0 {
                        return Err(Error::Parse {
                            file: (*name).into(),
                            line: *line,
                            detail: format!("negative {what} id {x}"),
                        });
                    }
                    if x as u64 >= limit as u64 {
                        log::error!("{name}:{line}: {what} id {x} out of range");
                        return Err(Error::IdOutOfRange {
                            what,
                            id: x as u64,
                            limit: limit as u64,
                        });
                    }
                    Ok(x as u32)
                };
                let t = raw_ts.binary_search(&v[3]).expect("timestamp collected") as u32;
                facts.push(Quadruple::new(
                    id("entity", v[0], entity_count)?,
                    id("relation", v[1], relation_count)?,
                    id("entity", v[2], entity_count)?,
                    t,
                ));
            }
            splits.push(facts);
        }

        let onto_rows = read_table(&dir.join("ontology.txt"), 3)?;
        let mut onto_facts = Vec::with_capacity(onto_rows.len());
        let (mut max_node, mut max_rel) = (entity_count as i64 - 1, -1i64);
        for (line, v) in &onto_rows {
            if v.iter().any(|&x| x < 0 || x > u32::MAX as i64) {
                return Err(Error::Parse {
                    file: "ontology.txt".into(),
                    line: *line,
                    detail: "negative or oversized id".into(),
                });
            }
            if v[2] < entity_count as i64 {
                return Err(Error::Parse {
                    file: "ontology.txt".into(),
                    line: *line,
                    detail: format!("target {} is an entity id, expected a concept", v[2]),
                });
            }
            max_node = max_node.max(v[0]).max(v[2]);
            max_rel = max_rel.max(v[1]);
            onto_facts.push(OntoFact {
                head: v[0] as u32,
                rel: v[1] as u32,
                tail: v[2] as u32,
            });
        }
        let num_concepts = (max_node + 1) as usize - entity_count;
        let ontology = OntologyGraph::new(entity_count, num_concepts, (max_rel + 1) as usize, onto_facts)?;

        let test = splits.pop().unwrap();
        let valid = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        DatasetBundle::from_parts(train, valid, test, entity_count, relation_count, raw_ts, ontology)
    }

    /// Writes the bundle in the directory format read by [`DatasetBundle::load`].
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        if self.augmented {
            return Err(Error::AlreadyAugmented);
        }
        fs::create_dir_all(dir)?;
        let mut stat = fs::File::create(dir.join("stat.txt"))?;
        writeln!(stat, "{}\t{}", self.entity_count, self.relation_count)?;
        for split in [Split::Train, Split::Valid, Split::Test] {
            let mut f = std::io::BufWriter::new(fs::File::create(dir.join(format!("{}.txt", split.name())))?);
            for q in self.split(split) {
                writeln!(f, "{}\t{}\t{}\t{}", q.s, q.r, q.o, self.raw_timestamps[q.t as usize])?;
            }
            f.flush()?;
        }
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join("ontology.txt"))?);
        for fact in self.ontology.original_facts() {
            writeln!(f, "{}\t{}\t{}", fact.head, fact.rel, fact.tail)?;
        }
        f.flush()?;
        Ok(())
    }
}

fn check_id(what: &'static str, id: u32, limit: usize) -> Result<()> {
    if id as usize >= limit {
        return Err(Error::IdOutOfRange {
            what,
            id: id.into(),
            limit: limit as u64,
        });
    }
    Ok(())
}

fn degrees(facts: &[Quadruple], entity_count: usize) -> Vec<u32> {
    let mut deg = vec![0u32; entity_count];
    for q in facts {
        deg[q.s as usize] += 1;
        if q.o != q.s {
            deg[q.o as usize] += 1;
        }
    }
    deg
}

fn group_snapshots(facts: &[Quadruple]) -> Vec<Snapshot> {
    let Some(max_t) = facts.iter().map(|q| q.t).max() else {
        return Vec::new();
    };
    let mut buckets: Vec<Vec<Quadruple>> = vec![Vec::new(); max_t as usize + 1];
    for q in facts {
        buckets[q.t as usize].push(*q);
    }
    buckets
        .into_iter()
        .enumerate()
        .map(|(t, f)| Snapshot::new(t as u32, f))
        .collect()
}

/// Reads a TSV file of integers with exactly `cols` columns; blank lines are skipped.
fn read_table(path: &Path, cols: usize) -> Result<Vec<(usize, Vec<i64>)>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = path
        .file_name()
        .map_or_else(String::new, |f| f.to_string_lossy().into_owned());
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < cols {
            return Err(Error::Parse {
                file: file.clone(),
                line: i + 1,
                detail: format!("expected {cols} tab-separated fields, got {}", fields.len()),
            });
        }
        let mut vals = Vec::with_capacity(cols);
        for tok in &fields[..cols] {
            let v = tok.trim().parse::<i64>().map_err(|_| Error::Parse {
                file: file.clone(),
                line: i + 1,
                detail: format!("non-integer token `{tok}`"),
            })?;
            vals.push(v);
        }
        rows.push((i + 1, vals));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests;
