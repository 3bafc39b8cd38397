//! `kgforget` — train, unlearn, retrain, and evaluate knowledge-graph
//! embeddings with influence-function deletion.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use kgforget::eval::EvalSetting;
use kgforget::graph::DeletionKind;
use kgforget::model::{ModelKind, Norm};
use kgforget::train::Optimizer;
use kgforget::unlearn::{FdMode, Method};

use kgforget_cli::commands;
use kgforget_cli::config::{resolve_config, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "kgforget",
    version,
    about = "Knowledge-graph embedding unlearning workbench",
    after_help = "All outputs land under --out: a manifest.json that fully \
                  reproduces the run, deterministic reports and checkpoints, \
                  and volatile timings in run_stats.json."
)]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Args)]
struct Flags {
    /// Config file (TOML, or JSON — a previous run's manifest works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset: split directory (train.txt [+ valid/test.txt]) or one TSV.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Embedding family.
    #[arg(long, global = true, value_parser = ModelKind::from_str)]
    model: Option<ModelKind>,
    /// Embedding dimension.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Ranking-loss margin.
    #[arg(long, global = true)]
    margin: Option<f64>,
    /// Score norm: l1 or l2.
    #[arg(long, global = true, value_parser = Norm::from_str)]
    norm: Option<Norm>,
    /// Training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Learning rate (defaults to the optimizer's convention).
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Optimizer: sgd or adam (default follows the model family).
    #[arg(long, global = true, value_parser = Optimizer::from_str)]
    optimizer: Option<Optimizer>,
    /// Mini-batch size.
    #[arg(long, global = true)]
    batch: Option<usize>,
    /// Negative samples per positive triple.
    #[arg(long, global = true)]
    neg: Option<usize>,
    /// What the deletion ids denote: triples, entities, or relations.
    #[arg(long, global = true, value_parser = DeletionKind::from_str)]
    delete_kind: Option<DeletionKind>,
    /// Fraction to delete (seeded draw).
    #[arg(long, global = true)]
    delete_ratio: Option<f64>,
    /// Label file naming the deletions (overrides --delete-ratio).
    #[arg(long, global = true)]
    delete_file: Option<PathBuf>,
    /// Unlearning method(s): kgif, wf-kgif, zerofisher (comma-separated).
    #[arg(long, global = true, value_parser = Method::from_str, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    /// Inverse-curvature iteration count.
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Curvature damping γ.
    #[arg(long, global = true)]
    damping: Option<f64>,
    /// Iteration step coefficient.
    #[arg(long, global = true)]
    step: Option<f64>,
    /// Final divisor on the applied update.
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Finite-difference step for zeroth-order gradients.
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// Finite-difference stencil: central, forward, or backward.
    #[arg(long, global = true, value_parser = FdMode::from_str)]
    fd_mode: Option<FdMode>,
    /// Update-mask radius: a hop count, or "unbounded".
    #[arg(long, global = true, value_parser = parse_khop)]
    khop: Option<KhopArg>,
    /// Global seed for every stochastic choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Ranking protocol: raw or filtered.
    #[arg(long, global = true, value_parser = EvalSetting::from_str)]
    eval_setting: Option<EvalSetting>,
    /// Test fraction held out of single-file datasets.
    #[arg(long, global = true)]
    holdout_frac: Option<f64>,
    /// Deletion ratios for the sweep subcommand (comma-separated).
    #[arg(long, global = true, value_delimiter = ',')]
    sweep_ratios: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug)]
struct KhopArg(Option<usize>);

fn parse_khop(s: &str) -> Result<KhopArg, String> {
    if s.eq_ignore_ascii_case("unbounded") {
        return Ok(KhopArg(None));
    }
    s.parse::<usize>()
        .map(|k| KhopArg(Some(k)))
        .map_err(|_| format!("expected a hop count or \"unbounded\", got {s:?}"))
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and checkpoint it.
    Train,
    /// Drop the deletion set from the training split, then train from scratch.
    Retrain,
    /// Apply influence-function unlearning to a trained checkpoint.
    Unlearn {
        /// Trained model to unlearn from.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Rank the held-out test split with a checkpoint.
    Eval {
        /// Model to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional reference model for the parameter-distance column.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Train, retrain, and run every unlearning method; tabulate results.
    Compare,
    /// Run compare once per deletion ratio.
    Sweep,
}

fn to_overrides(f: &Flags) -> Overrides {
    Overrides {
        dataset: f.dataset.clone(),
        model: f.model,
        dim: f.dim,
        margin: f.margin,
        norm: f.norm,
        epochs: f.epochs,
        lr: f.lr,
        optimizer: f.optimizer,
        batch: f.batch,
        neg: f.neg,
        delete_kind: f.delete_kind,
        delete_ratio: f.delete_ratio,
        delete_file: f.delete_file.clone(),
        methods: f.method.clone(),
        iters: f.iters,
        damping: f.damping,
        step: f.step,
        scale: f.scale,
        noise: f.noise,
        fd_mode: f.fd_mode,
        khop: f.khop.map(|k| k.0),
        seed: f.seed,
        out: f.out.clone(),
        eval_setting: f.eval_setting,
        holdout_frac: f.holdout_frac,
        sweep_ratios: f.sweep_ratios.clone(),
    }
}

fn run(cfg: &RunConfig, cmd: &Cmd) -> Result<()> {
    match cmd {
        Cmd::Train => {
            let outcome = commands::cmd_train(cfg)?;
            let last = outcome.history.last().copied().unwrap_or(f64::NAN);
            log::info!("final epoch mean loss {last:.6}");
            if let Some(r) = &outcome.report {
                println!(
                    "trained: test MRR {:.4} over {} triples → {}",
                    r.mrr.unwrap_or(f64::NAN),
                    r.n_test,
                    cfg.out.display()
                );
            } else {
                println!("trained (no held-out split) → {}", cfg.out.display());
            }
        }
        Cmd::Retrain => {
            let outcome = commands::cmd_retrain(cfg)?;
            if let Some(r) = &outcome.report {
                println!(
                    "retrained: test MRR {:.4} over {} triples → {}",
                    r.mrr.unwrap_or(f64::NAN),
                    r.n_test,
                    cfg.out.display()
                );
            } else {
                println!("retrained (no held-out split) → {}", cfg.out.display());
            }
        }
        Cmd::Unlearn { checkpoint } => {
            let (_, stats) = commands::cmd_unlearn(cfg, checkpoint)?;
            println!(
                "unlearned with {}: update norm {:.3e}, {} support slots, {} masked → {}",
                stats.method,
                stats.update_norm,
                stats.support_size,
                stats.mask_size,
                cfg.out.display()
            );
        }
        Cmd::Eval {
            checkpoint,
            reference,
        } => {
            let report = commands::cmd_eval(cfg, checkpoint, reference.as_deref())?;
            println!(
                "MRR {:.4}, Hit@1 {:.4}, Hit@3 {:.4}, Hit@10 {:.4} over {} triples",
                report.mrr.unwrap_or(f64::NAN),
                report.hits.as_ref().map_or(f64::NAN, |h| h[&1]),
                report.hits.as_ref().map_or(f64::NAN, |h| h[&3]),
                report.hits.as_ref().map_or(f64::NAN, |h| h[&10]),
                report.n_test
            );
            if let Some(d) = report.l2_to_reference {
                println!("distance to reference: {d:.6}");
            }
        }
        Cmd::Compare => {
            let outcome = commands::cmd_compare(cfg)?;
            for row in &outcome.rows {
                println!(
                    "{:<12} time {:>10.1} ms  MRR {:.4}  Hit@3 {:.4}  Hit@1 {:.4}  L2→retrain {:.4}",
                    row.method, row.time_ms, row.mrr, row.hit3, row.hit1, row.l2_to_retrain
                );
            }
            println!("tables written to {}", cfg.out.display());
        }
        Cmd::Sweep => {
            let outcomes = commands::cmd_sweep(cfg)?;
            for (ratio, outcome) in &outcomes {
                println!("deletion ratio {ratio}: {} rows", outcome.rows.len());
            }
            println!("per-ratio tables written under {}", cfg.out.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match resolve_config(cli.flags.config.as_deref(), &to_overrides(&cli.flags)) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(&cfg, &cli.cmd) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
