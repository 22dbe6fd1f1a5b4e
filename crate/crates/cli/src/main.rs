//! `ontotkge` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data error,
//! 3 numerical abort. Set `ONTOTKGE_LOG` (e.g. `info`) for progress output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ontotkge::checkpoint;
use ontotkge::compgcn::Composition;
use ontotkge::config::TrainConfig;
use ontotkge::data::{DatasetBundle, Hops, Split};
use ontotkge::eval::evaluate;
use ontotkge::fusion::FusionMode;
use ontotkge::model::ModelDims;
use ontotkge::selfcheck;
use ontotkge::sweep::{self, SweepAxis};
use ontotkge::synth::{self, SynthSpec};
use ontotkge::train::{train, write_log};
use ontotkge::Error;

#[derive(Parser)]
#[command(
    name = "ontotkge",
    version,
    about = "Ontology-enhanced temporal knowledge graph extrapolation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes the checkpoint, training log and resolved config.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory.
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint with time-aware filtered ranking.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the per-degree-bucket table.
        #[arg(long)]
        buckets: bool,
        /// Write per-query ranks as TSV.
        #[arg(long)]
        dump_ranks: Option<PathBuf>,
    },
    /// Train one model per value of a hyperparameter and test each.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// train_fraction, N, J or K.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; N accepts `max`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    Synth {
        /// JSON generator spec; defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the randomised gradient suites.
    Selfcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// TOML configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    grad_clip: Option<f64>,
    /// CompGCN depth J.
    #[arg(long)]
    layers: Option<usize>,
    /// Local neighbourhood radius N (integer or `max`).
    #[arg(long)]
    hops: Option<Hops>,
    /// Entailment aperture constant K.
    #[arg(long)]
    k: Option<f64>,
    /// History window m.
    #[arg(long)]
    history: Option<usize>,
    #[arg(long)]
    op: Option<Composition>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    fusion: Option<FusionMode>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Entity embeddings from a plain table, no ontology encoder.
    #[arg(long)]
    no_global_init: bool,
    /// Disable the local encoder and contrastive loss.
    #[arg(long)]
    no_local_encoder: bool,
    /// Entity embeddings from a plain table; the ontology encoder trains on the cone loss only.
    #[arg(long)]
    random_init: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<TrainConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { cfg.$f = v; })* };
        }
        set!(
            alpha1,
            alpha2,
            tau,
            dim,
            epochs,
            seed,
            lr,
            grad_clip,
            layers,
            hops,
            k,
            history,
            op,
            channels,
            width,
            fusion,
            train_fraction
        );
        cfg.no_global_init |= self.no_global_init;
        cfg.no_local_encoder |= self.no_local_encoder;
        cfg.random_init |= self.random_init;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_data(dir: &Path) -> Result<DatasetBundle, Error> {
    DatasetBundle::load(dir)?.augment_inverse()
}

/// Returns the process exit code on success paths.
fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Train { run, out } => {
            let cfg = run.resolve()?;
            let bundle = load_data(&run.data)?;
            std::fs::create_dir_all(&out)?;
            cfg.save(&out.join("config.toml"))?;
            let outcome = train(cfg, &bundle)?;
            checkpoint::save(&outcome.model, &out.join("model.ckpt"))?;
            write_log(&out.join("train_log.csv"), &outcome.log)?;
            let best = &outcome.log[outcome.best_epoch.max(1) - 1];
            println!(
                "trained {} epochs; best epoch {} (val MRR {}); wrote {}",
                outcome.log.len(),
                outcome.best_epoch,
                best.val_mrr,
                out.display()
            );
        }
        Command::Eval {
            checkpoint: ckpt,
            data,
            split,
            out,
            buckets,
            dump_ranks,
        } => {
            let model = checkpoint::load(&ckpt)?;
            let bundle = load_data(&data)?;
            checkpoint::check_compatible(&model, ModelDims::of(&bundle)?)?;
            let report = evaluate(&model, &bundle, split)?;
            let json = report.to_json(buckets);
            match out {
                Some(p) => {
                    std::fs::write(&p, &json)?;
                    let o = &report.overall;
                    println!(
                        "{}: MRR {:.4}  H@1 {:.4}  H@3 {:.4}  H@10 {:.4}  ({} queries)",
                        report.split,
                        o.mrr,
                        o.hits_at(1),
                        o.hits_at(3),
                        o.hits_at(10),
                        o.count
                    );
                }
                None => print!("{json}"),
            }
            if let Some(p) = dump_ranks {
                report.write_ranks(&p)?;
            }
        }
        Command::Sweep { run, axis, values, out } => {
            let axis: SweepAxis = axis.parse()?;
            let cfg = run.resolve()?;
            let bundle = load_data(&run.data)?;
            let rows = sweep::sweep(axis, &values, &cfg, &bundle)?;
            match out {
                Some(p) => sweep::write_csv(std::fs::File::create(p)?, &rows)?,
                None => sweep::write_csv(std::io::stdout().lock(), &rows)?,
            }
        }
        Command::Synth { spec, out } => {
            let spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|_| Error::MissingFile(p.clone()))?;
                    SynthSpec::from_json(&text)?
                }
                None => SynthSpec::default(),
            };
            let ds = synth::generate(&spec)?;
            ds.write_to(&out)?;
            let b = &ds.bundle;
            println!(
                "wrote {} ({} entities, {} train / {} valid / {} test facts)",
                out.display(),
                b.entity_count,
                b.train.len(),
                b.valid.len(),
                b.test.len()
            );
        }
        Command::Selfcheck { instances, seed } => {
            let results = selfcheck::run(instances, seed)?;
            let mut failed = 0;
            for r in &results {
                let ok = r.passed(1e-4);
                failed += usize::from(!ok);
                println!(
                    "{} {:<16} {} instances, max relative error {:.2e}",
                    if ok { "PASS" } else { "FAIL" },
                    r.suite,
                    r.instances,
                    r.max_rel_err
                );
            }
            if failed > 0 {
                return Ok(3);
            }
        }
    }
    Ok(0)
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else if e.is_data_error() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ONTOTKGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
