//! Training loop: one optimizer step per training timestamp, validation
//! after every epoch, and best-epoch selection by filtered MRR.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::autodiff::Tape;
use crate::config::TrainConfig;
use crate::data::{DatasetBundle, Quadruple, Snapshot, Split};
use crate::error::{Error, Result};
use crate::eval::evaluate_in;
use crate::model::{history_window, Context, Model};
use crate::optim::{clip_grad_norm, Adam, Optimizer};

/// Column header of the training log.
pub const LOG_HEADER: &str = "epoch,L_tkg,L_hie,L_cl,L_total,val_mrr,seconds";

/// Mean losses over the steps of one epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    pub l_tkg: f64,
    pub l_hie: f64,
    pub l_cl: f64,
    pub l_total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub losses: StepLosses,
    /// Filtered validation MRR; NaN when there is no validation split.
    pub val_mrr: f64,
    pub seconds: f64,
}

impl EpochStats {
    pub fn csv_row(&self) -> String {
        let l = self.losses;
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.epoch, l.l_tkg, l.l_hie, l.l_cl, l.l_total, self.val_mrr, self.seconds
        )
    }
}

pub fn write_log(path: &Path, log: &[EpochStats]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{LOG_HEADER}")?;
    for row in log {
        writeln!(f, "{}", row.csv_row())?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model,
    pub log: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Training facts grouped by timestamp, limited to the leading
/// `train_fraction` of training timestamps.
pub fn training_steps(bundle: &DatasetBundle, train_fraction: f64) -> Vec<(usize, Vec<Quadruple>)> {
    let mut by_time: BTreeMap<u32, Vec<Quadruple>> = BTreeMap::new();
    for q in &bundle.train {
        by_time.entry(q.t).or_default().push(*q);
    }
    let keep = ((train_fraction * by_time.len() as f64).ceil() as usize).clamp(1, by_time.len().max(1));
    by_time.into_iter().take(keep).map(|(t, f)| (t as usize, f)).collect()
}

/// Drives the optimizer over the training timeline.
pub struct Trainer<'a> {
    pub model: Model,
    optimizer: Adam,
    ctx: Context<'a>,
    bundle: &'a DatasetBundle,
    timeline: Vec<Snapshot>,
    steps: Vec<(usize, Vec<Quadruple>)>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: Model, bundle: &'a DatasetBundle) -> Result<Self> {
        let ctx = Context::new(bundle)?;
        if bundle.train.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        let steps = training_steps(bundle, model.cfg.train_fraction);
        let optimizer = Adam::new(model.cfg.lr);
        Ok(Trainer {
            model,
            optimizer,
            ctx,
            bundle,
            timeline: bundle.timeline(),
            steps,
        })
    }

    /// One forward/backward/update at timestamp `t`.
    pub fn step(&mut self, t: usize, queries: &[Quadruple]) -> Result<StepLosses> {
        let tape = Tape::new();
        let vars = self.model.params.bind(&tape);
        let history = history_window(&self.timeline, t, self.model.cfg.history);
        let abort = |e: Error| match e {
            Error::NonFinite { .. } => Error::NumericalAbort {
                timestamp: t,
                tkg: f64::NAN,
                hie: f64::NAN,
                cl: f64::NAN,
            },
            other => other,
        };
        let fw = self
            .model
            .forward(&tape, &vars, &self.ctx, &history, queries)
            .map_err(abort)?;
        let val = |v: Option<crate::autodiff::Var>| v.map_or(0.0, |v| tape.value(v).item());
        let losses = StepLosses {
            l_tkg: val(Some(fw.l_tkg)),
            l_hie: val(fw.l_hie),
            l_cl: val(fw.l_cl),
            l_total: val(Some(fw.total)),
        };
        if ![losses.l_tkg, losses.l_hie, losses.l_cl, losses.l_total]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::NumericalAbort {
                timestamp: t,
                tkg: losses.l_tkg,
                hie: losses.l_hie,
                cl: losses.l_cl,
            });
        }
        let grads = tape.backward(fw.total).map_err(abort)?;
        let mut grads = vars.gradients(&grads);
        let norm = clip_grad_norm(&mut grads, self.model.cfg.grad_clip);
        if !norm.is_finite() {
            return Err(Error::NumericalAbort {
                timestamp: t,
                tkg: losses.l_tkg,
                hie: losses.l_hie,
                cl: losses.l_cl,
            });
        }
        self.optimizer.step(&mut self.model.params, &grads)?;
        Ok(losses)
    }

    /// One pass over the training timestamps in ascending order; returns
    /// the mean losses.
    pub fn epoch(&mut self) -> Result<StepLosses> {
        let steps = std::mem::take(&mut self.steps);
        let mut sum = StepLosses::default();
        let mut result = Ok(());
        for (t, queries) in &steps {
            match self.step(*t, queries) {
                Ok(l) => {
                    sum.l_tkg += l.l_tkg;
                    sum.l_hie += l.l_hie;
                    sum.l_cl += l.l_cl;
                    sum.l_total += l.l_total;
                }
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        let n = steps.len().max(1) as f64;
        self.steps = steps;
        result?;
        Ok(StepLosses {
            l_tkg: sum.l_tkg / n,
            l_hie: sum.l_hie / n,
            l_cl: sum.l_cl / n,
            l_total: sum.l_total / n,
        })
    }

    pub fn validate(&self) -> Result<f64> {
        if self.bundle.valid.is_empty() {
            return Ok(f64::NAN);
        }
        Ok(evaluate_in(&self.model, &self.ctx, self.bundle, Split::Valid)?.mrr())
    }
}

/// Trains for `cfg.epochs` epochs and keeps the epoch with the best
/// validation MRR (the last epoch when there is no validation split).
pub fn train(cfg: TrainConfig, bundle: &DatasetBundle) -> Result<TrainOutcome> {
    train_with(Model::new(cfg, bundle)?, bundle, |_| {})
}

/// As [`train`], starting from `model` and reporting each epoch to `on_epoch`.
pub fn train_with(model: Model, bundle: &DatasetBundle, mut on_epoch: impl FnMut(&EpochStats)) -> Result<TrainOutcome> {
    let epochs = model.cfg.epochs;
    let mut trainer = Trainer::new(model, bundle)?;
    let mut log = Vec::with_capacity(epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    for epoch in 1..=epochs {
        let start = Instant::now();
        let losses = trainer.epoch()?;
        let val_mrr = trainer.validate()?;
        let stats = EpochStats {
            epoch,
            losses,
            val_mrr,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{}", stats.csv_row());
        on_epoch(&stats);
        log.push(stats);
        let better = match &best {
            None => true,
            Some((b, _, _)) => val_mrr.is_nan() || val_mrr > *b,
        };
        if better {
            best = Some((val_mrr, epoch, trainer.model.clone()));
        }
    }
    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (trainer.model, 0),
    };
    Ok(TrainOutcome { model, log, best_epoch })
}
