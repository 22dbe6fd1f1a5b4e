//! One-axis hyperparameter sweeps: a model per value, evaluated on the
//! full test split.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::config::TrainConfig;
use crate::data::{DatasetBundle, Hops, Split};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::train::train;

pub const SWEEP_HEADER: &str = "axis,value,mrr,h1,h10,seconds";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    TrainFraction,
    /// Local neighbourhood radius.
    Hops,
    /// CompGCN depth.
    Layers,
    /// Entailment aperture constant.
    K,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train_fraction" => Ok(SweepAxis::TrainFraction),
            "N" | "n" | "hops" => Ok(SweepAxis::Hops),
            "J" | "j" | "layers" => Ok(SweepAxis::Layers),
            "K" | "k" => Ok(SweepAxis::K),
            _ => Err(Error::Config(format!(
                "unknown sweep axis `{s}` (train_fraction, N, J, K)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::TrainFraction => "train_fraction",
            SweepAxis::Hops => "N",
            SweepAxis::Layers => "J",
            SweepAxis::K => "K",
        })
    }
}

impl SweepAxis {
    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &TrainConfig, value: &str) -> Result<TrainConfig> {
        let bad = |e: String| Error::Config(format!("{self} value `{value}`: {e}"));
        let mut cfg = base.clone();
        match self {
            SweepAxis::TrainFraction => cfg.train_fraction = value.parse().map_err(|e| bad(format!("{e}")))?,
            SweepAxis::Hops => cfg.hops = value.parse::<Hops>().map_err(|e| bad(e.to_string()))?,
            SweepAxis::Layers => cfg.layers = value.parse().map_err(|e| bad(format!("{e}")))?,
            SweepAxis::K => cfg.k = value.parse().map_err(|e| bad(format!("{e}")))?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub mrr: f64,
    pub h1: f64,
    pub h10: f64,
    pub seconds: f64,
}

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.axis, self.value, self.mrr, self.h1, self.h10, self.seconds
        )
    }
}

/// Trains and tests one model per value, all from the same seed.
pub fn sweep(axis: SweepAxis, values: &[String], base: &TrainConfig, bundle: &DatasetBundle) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values.iter().map(|v| axis.apply(base, v)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(values.len());
    for (value, cfg) in values.iter().zip(configs) {
        let start = Instant::now();
        let outcome = train(cfg, bundle)?;
        let report = evaluate(&outcome.model, bundle, Split::Test)?;
        let row = SweepRow {
            axis,
            value: value.clone(),
            mrr: report.mrr(),
            h1: report.overall.hits_at(1),
            h10: report.overall.hits_at(10),
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{}", row.csv_row());
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_csv(mut out: impl Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
