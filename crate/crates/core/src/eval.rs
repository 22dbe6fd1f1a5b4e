//! Time-aware filtered ranking, degree-bucketed reports and rank dumps.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::autodiff::Tape;
use crate::data::{DatasetBundle, DegreeBucket, Quadruple, Split};
use crate::error::{Error, Result};
use crate::model::{history_window, Context, Model};

/// Hits@k cut-offs reported.
pub const HITS_AT: [usize; 3] = [1, 3, 10];

/// Filtered rank of `gold`: one plus the number of candidates outside
/// `known_true ∖ {gold}` scoring strictly higher.
pub fn filtered_rank(scores: &[f64], gold: u32, known_true: &BTreeSet<u32>) -> Result<usize> {
    let g = gold as usize;
    if g >= scores.len() {
        return Err(Error::IdOutOfRange {
            what: "gold entity",
            id: gold.into(),
            limit: scores.len() as u64,
        });
    }
    let target = scores[g];
    let better = scores
        .iter()
        .enumerate()
        .filter(|&(e, &s)| s > target && !known_true.contains(&(e as u32)))
        .count();
    Ok(better + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `(s, r, ?)`.
    Object,
    /// `(?, r, o)`, answered through the inverse relation.
    Subject,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Object => "object",
            Direction::Subject => "subject",
        }
    }
}

/// One ranked query, reported on the original fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct QueryRank {
    pub fact: Quadruple,
    pub direction: Direction,
    pub rank: usize,
}

impl QueryRank {
    /// Entity given in the query.
    pub fn query_entity(&self) -> u32 {
        match self.direction {
            Direction::Object => self.fact.s,
            Direction::Subject => self.fact.o,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub count: usize,
    pub mrr: f64,
    pub hits: BTreeMap<String, f64>,
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        let n = ranks.len();
        let mean = |f: &dyn Fn(usize) -> f64| {
            if n == 0 {
                0.0
            } else {
                ranks.iter().map(|&r| f(r)).sum::<f64>() / n as f64
            }
        };
        let hits = HITS_AT
            .iter()
            .map(|&k| (k.to_string(), mean(&|r| if r <= k { 1.0 } else { 0.0 })))
            .collect();
        Metrics {
            count: n,
            mrr: mean(&|r| 1.0 / r as f64),
            hits,
        }
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        self.hits.get(&k.to_string()).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub split: String,
    #[serde(flatten)]
    pub overall: Metrics,
    /// Keyed by the training degree of the query entity.
    pub buckets: BTreeMap<DegreeBucket, Metrics>,
    #[serde(skip)]
    pub per_query: Vec<QueryRank>,
}

impl RankReport {
    pub fn new(split: Split, per_query: Vec<QueryRank>, bundle: &DatasetBundle) -> Self {
        let ranks: Vec<usize> = per_query.iter().map(|q| q.rank).collect();
        let mut grouped: BTreeMap<DegreeBucket, Vec<usize>> =
            DegreeBucket::ALL.iter().map(|&b| (b, Vec::new())).collect();
        for q in &per_query {
            grouped
                .entry(bundle.degree_bucket(q.query_entity()))
                .or_default()
                .push(q.rank);
        }
        RankReport {
            split: split.name().to_string(),
            overall: Metrics::from_ranks(&ranks),
            buckets: grouped.into_iter().map(|(b, r)| (b, Metrics::from_ranks(&r))).collect(),
            per_query,
        }
    }

    pub fn mrr(&self) -> f64 {
        self.overall.mrr
    }

    pub fn bucket(&self, b: DegreeBucket) -> &Metrics {
        &self.buckets[&b]
    }

    /// JSON report; `with_buckets` adds the per-degree table.
    pub fn to_json(&self, with_buckets: bool) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if !with_buckets {
            v.as_object_mut().expect("object").remove("buckets");
        }
        serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
    }

    /// Writes `s r o t direction rank` rows, tab-separated, with a header.
    pub fn write_ranks(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "s\tr\to\tt\tdirection\trank")?;
        for q in &self.per_query {
            let p = q.fact;
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}",
                p.s,
                p.r,
                p.o,
                p.t,
                q.direction.name(),
                q.rank
            )?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Ranks both query directions of every fact in `split`. The history of
/// each timestamp is the ground-truth timeline; filtering removes other
/// true answers at the same timestamp.
pub fn evaluate(model: &Model, bundle: &DatasetBundle, split: Split) -> Result<RankReport> {
    let ctx = Context::new(bundle)?;
    evaluate_in(model, &ctx, bundle, split)
}

pub fn evaluate_in(model: &Model, ctx: &Context<'_>, bundle: &DatasetBundle, split: Split) -> Result<RankReport> {
    if !bundle.is_augmented() {
        return Err(Error::NotAugmented);
    }
    let timeline = bundle.timeline();
    let relations = bundle.relation_count as u32;
    let mut by_time: BTreeMap<u32, Vec<Quadruple>> = BTreeMap::new();
    for q in bundle.split(split) {
        by_time.entry(q.t).or_default().push(*q);
    }
    let mut per_query = Vec::with_capacity(bundle.split(split).len());
    for (&t, queries) in &by_time {
        let mut known: HashMap<(u32, u32), BTreeSet<u32>> = HashMap::new();
        for q in &timeline[t as usize].facts {
            known.entry((q.s, q.r)).or_default().insert(q.o);
        }
        let tape = Tape::new();
        let vars = model.params.bind(&tape);
        let history = history_window(&timeline, t as usize, model.cfg.history);
        let fw = model.forward(&tape, &vars, ctx, &history, queries)?;
        let raw = tape.value(fw.raw);
        for (i, q) in queries.iter().enumerate() {
            let rank = filtered_rank(raw.row(i), q.o, &known[&(q.s, q.r)])?;
            let (fact, direction) = if q.r < relations {
                (*q, Direction::Object)
            } else {
                (Quadruple::new(q.o, q.r - relations, q.s, q.t), Direction::Subject)
            };
            per_query.push(QueryRank { fact, direction, rank });
        }
    }
    Ok(RankReport::new(split, per_query, bundle))
}
