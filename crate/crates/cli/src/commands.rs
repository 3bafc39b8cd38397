//! Subcommand implementations.
//!
//! Every command materializes its artifacts under the configured output
//! directory. Deterministic artifacts (checkpoints, reports, metric tables,
//! the manifest) contain no wall-clock or memory readings, so a rerun with
//! the same manifest reproduces them byte for byte; measured timings and
//! peak RSS go to `run_stats.json` and `compare.csv` instead.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use kgforget::checkpoint::{load_model, save_model};
use kgforget::datasets::{load_dataset, DatasetSplits};
use kgforget::eval::{evaluate, l2_distance, split_eval, EvalReport, EvalSetting};
use kgforget::graph::{
    resolve_deletion, sample_random_deletion, DeletionKind, DeletionRequest, KnowledgeGraph,
    Triple,
};
use kgforget::model::EmbeddingModel;
use kgforget::rss::peak_rss_bytes;
use kgforget::train::{retrain, train};
use kgforget::unlearn::{unlearn, UnlearnStats};

use crate::config::{config_hash, RunConfig};

/// Deterministic run descriptor, written as `manifest.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
}

/// Volatile measurements, written as `run_stats.json`.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub wall_ms: f64,
    pub peak_rss_bytes: Option<u64>,
    /// Per-leg wall times for orchestrating commands, in execution order.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub legs: Vec<(String, f64)>,
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    Ok(cfg.out.clone())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_manifest(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let manifest = Manifest {
        format_version: 1,
        config: cfg.clone(),
        config_hash: config_hash(cfg),
        seed: cfg.seed,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn write_loss_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "mean_loss"])?;
    for (i, loss) in history.iter().enumerate() {
        w.write_record([(i + 1).to_string(), loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// A clone of the report with its timing zeroed, for deterministic files.
fn detimed(report: &EvalReport) -> EvalReport {
    let mut r = report.clone();
    r.wall_ms = 0.0;
    r
}

fn load_splits(cfg: &RunConfig) -> Result<DatasetSplits> {
    load_dataset(&cfg.dataset, cfg.holdout_frac, cfg.seed)
        .with_context(|| format!("loading dataset {}", cfg.dataset.display()))
}

/// Turn the configured deletion spec into a resolved request against `g`.
pub fn resolve_delete_spec(g: &KnowledgeGraph, cfg: &RunConfig) -> Result<DeletionRequest> {
    if let Some(file) = &cfg.delete.file {
        let text = std::fs::read_to_string(file)
            .with_context(|| format!("reading deletion file {}", file.display()))?;
        let raw_ids = parse_deletion_labels(g, cfg.delete.kind, &text, file)?;
        Ok(resolve_deletion(g, cfg.delete.kind, &raw_ids)?)
    } else {
        let ratio = cfg
            .delete
            .ratio
            .ok_or_else(|| anyhow!("deletion spec has neither ratio nor file"))?;
        Ok(sample_random_deletion(g, cfg.delete.kind, ratio, cfg.seed)?)
    }
}

fn parse_deletion_labels(
    g: &KnowledgeGraph,
    kind: DeletionKind,
    text: &str,
    path: &Path,
) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    let triple_index: HashMap<Triple, usize> = match kind {
        DeletionKind::Triples => g
            .triples()
            .iter()
            .enumerate()
            .map(|(i, t)| (*t, i))
            .collect(),
        _ => HashMap::new(),
    };
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), lineno + 1);
        match kind {
            DeletionKind::Triples => {
                let fields: Vec<&str> = line.split('\t').collect();
                let [h, r, t] = fields[..] else {
                    bail!("{}: expected 3 tab-separated labels", at());
                };
                let head = g
                    .entities
                    .get(h)
                    .ok_or_else(|| anyhow!("{}: unknown entity {h:?}", at()))?;
                let rel = g
                    .relations
                    .get(r)
                    .ok_or_else(|| anyhow!("{}: unknown relation {r:?}", at()))?;
                let tail = g
                    .entities
                    .get(t)
                    .ok_or_else(|| anyhow!("{}: unknown entity {t:?}", at()))?;
                let idx = triple_index
                    .get(&Triple::new(head, rel, tail))
                    .ok_or_else(|| anyhow!("{}: triple not in the graph", at()))?;
                ids.push(*idx);
            }
            DeletionKind::Entities => {
                ids.push(
                    g.entities
                        .get(line)
                        .ok_or_else(|| anyhow!("{}: unknown entity {line:?}", at()))?,
                );
            }
            DeletionKind::Relations => {
                ids.push(
                    g.relations
                        .get(line)
                        .ok_or_else(|| anyhow!("{}: unknown relation {line:?}", at()))?,
                );
            }
        }
    }
    Ok(ids)
}

fn eval_on_test(
    m: &EmbeddingModel,
    splits: &DatasetSplits,
    setting: EvalSetting,
) -> Result<Option<EvalReport>> {
    if splits.test.is_empty() {
        return Ok(None);
    }
    Ok(Some(evaluate(m, &splits.test, &splits.full, setting)?))
}

pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub history: Vec<f64>,
    pub report: Option<EvalReport>,
    pub wall_ms: f64,
}

/// `train`: fit a model on the training split, checkpoint it, and score it
/// on the held-out test split when one exists.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let out = prepare_out(cfg)?;
    write_manifest(cfg, &out)?;
    let splits = load_splits(cfg)?;
    let started = Instant::now();
    let (model, history) = train(
        &splits.train,
        cfg.model,
        &cfg.train,
        cfg.dim,
        cfg.margin,
        cfg.norm,
    )?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    save_model(&model, out.join("model.kgun"))?;
    write_loss_csv(&out.join("loss.csv"), &history)?;
    let report = eval_on_test(&model, &splits, cfg.eval_setting)?;
    if let Some(r) = &report {
        write_json(&out.join("eval.json"), &detimed(r))?;
    }
    write_json(
        &out.join("run_stats.json"),
        &RunStats {
            wall_ms,
            peak_rss_bytes: peak_rss_bytes(),
            legs: Vec::new(),
        },
    )?;
    Ok(TrainOutcome {
        model,
        history,
        report,
        wall_ms,
    })
}

/// `retrain`: resolve the deletion request, drop it from the training split,
/// and train from scratch on the remainder.
pub fn cmd_retrain(cfg: &RunConfig) -> Result<TrainOutcome> {
    let out = prepare_out(cfg)?;
    write_manifest(cfg, &out)?;
    let splits = load_splits(cfg)?;
    let req = resolve_delete_spec(&splits.train, cfg)?;
    write_json(&out.join("deletion.json"), &req)?;
    let started = Instant::now();
    let (model, history) = retrain(
        &splits.train,
        &req,
        cfg.model,
        &cfg.train,
        cfg.dim,
        cfg.margin,
        cfg.norm,
    )?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    save_model(&model, out.join("model.kgun"))?;
    write_loss_csv(&out.join("loss.csv"), &history)?;
    let report = eval_on_test(&model, &splits, cfg.eval_setting)?;
    if let Some(r) = &report {
        write_json(&out.join("eval.json"), &detimed(r))?;
    }
    write_json(
        &out.join("run_stats.json"),
        &RunStats {
            wall_ms,
            peak_rss_bytes: peak_rss_bytes(),
            legs: Vec::new(),
        },
    )?;
    Ok(TrainOutcome {
        model,
        history,
        report,
        wall_ms,
    })
}

/// `unlearn`: load a trained checkpoint, resolve the deletion request against
/// the training split, and apply the configured influence-function update.
pub fn cmd_unlearn(
    cfg: &RunConfig,
    checkpoint: &Path,
) -> Result<(EmbeddingModel, UnlearnStats)> {
    let out = prepare_out(cfg)?;
    write_manifest(cfg, &out)?;
    let splits = load_splits(cfg)?;
    let model = load_model(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    check_model_matches(&model, &splits.train)?;
    let req = resolve_delete_spec(&splits.train, cfg)?;
    write_json(&out.join("deletion.json"), &req)?;
    let started = Instant::now();
    let (unlearned, stats) = unlearn(&model, &splits.train, &req, &cfg.unlearn, cfg.seed)?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    save_model(&unlearned, out.join("model.kgun"))?;
    write_json(&out.join("unlearn_stats.json"), &stats)?;
    let report = eval_on_test(&unlearned, &splits, cfg.eval_setting)?;
    if let Some(r) = &report {
        write_json(&out.join("eval.json"), &detimed(r))?;
    }
    write_json(
        &out.join("run_stats.json"),
        &RunStats {
            wall_ms,
            peak_rss_bytes: peak_rss_bytes(),
            legs: Vec::new(),
        },
    )?;
    Ok((unlearned, stats))
}

fn check_model_matches(m: &EmbeddingModel, g: &KnowledgeGraph) -> Result<()> {
    if m.n_entities != g.n_entities() || m.n_relations != g.n_relations() {
        bail!(
            "checkpoint vocabulary ({} entities, {} relations) does not match \
             the dataset ({}, {})",
            m.n_entities,
            m.n_relations,
            g.n_entities(),
            g.n_relations()
        );
    }
    Ok(())
}

/// `eval`: rank the held-out test split with a checkpoint; with a reference
/// checkpoint, also report the parameter-space distance to it.
pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    reference: Option<&Path>,
) -> Result<EvalReport> {
    let out = prepare_out(cfg)?;
    write_manifest(cfg, &out)?;
    let splits = load_splits(cfg)?;
    let model = load_model(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    check_model_matches(&model, &splits.train)?;
    if splits.test.is_empty() {
        bail!("dataset has no held-out test triples to rank");
    }
    let started = Instant::now();
    let mut report = evaluate(&model, &splits.test, &splits.full, cfg.eval_setting)?;
    if let Some(ref_path) = reference {
        let reference = load_model(ref_path)
            .with_context(|| format!("loading reference checkpoint {}", ref_path.display()))?;
        report.l2_to_reference = Some(l2_distance(&model, &reference, None)?);
    }
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    write_json(&out.join("eval.json"), &detimed(&report))?;
    write_json(
        &out.join("run_stats.json"),
        &RunStats {
            wall_ms,
            peak_rss_bytes: peak_rss_bytes(),
            legs: Vec::new(),
        },
    )?;
    Ok(report)
}

/// One comparison-table row. Timings and memory are volatile; everything
/// else is deterministic for a fixed manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub time_ms: f64,
    pub peak_rss_bytes: Option<u64>,
    pub mrr: f64,
    pub hit1: f64,
    pub hit3: f64,
    pub hit10: f64,
    pub deleted_mrr: Option<f64>,
    pub remain_mrr: Option<f64>,
    pub l2_to_retrain: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareOutcome {
    pub config_hash: String,
    pub rows: Vec<CompareRow>,
    /// Stats per unlearning method, keyed like the rows.
    pub unlearn_stats: Vec<(String, UnlearnStats)>,
}

/// The deterministic projection of a row (no time, no memory).
#[derive(Debug, Serialize)]
struct MetricRow<'a> {
    method: &'a str,
    mrr: f64,
    hit1: f64,
    hit3: f64,
    hit10: f64,
    deleted_mrr: Option<f64>,
    remain_mrr: Option<f64>,
    l2_to_retrain: f64,
}

/// `compare`: train the original model, retrain without the deletion set,
/// run every configured unlearning method on the original, and tabulate
/// metrics side by side.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareOutcome> {
    let out = prepare_out(cfg)?;
    write_manifest(cfg, &out)?;
    let splits = load_splits(cfg)?;
    if splits.test.is_empty() {
        bail!("compare needs a held-out test split (directory test.txt or single-file holdout)");
    }
    let req = resolve_delete_spec(&splits.train, cfg)?;
    write_json(&out.join("deletion.json"), &req)?;

    let mut legs: Vec<(String, f64)> = Vec::new();
    let mut time_leg = |name: &str, ms: f64| legs.push((name.to_string(), ms));

    // original model
    let started = Instant::now();
    let (original, _) = train(
        &splits.train,
        cfg.model,
        &cfg.train,
        cfg.dim,
        cfg.margin,
        cfg.norm,
    )?;
    let original_ms = started.elapsed().as_secs_f64() * 1e3;
    time_leg("train", original_ms);
    save_model(&original, out.join("original.kgun"))?;

    // retraining reference
    let started = Instant::now();
    let (retrained, _) = retrain(
        &splits.train,
        &req,
        cfg.model,
        &cfg.train,
        cfg.dim,
        cfg.margin,
        cfg.norm,
    )?;
    let retrain_ms = started.elapsed().as_secs_f64() * 1e3;
    time_leg("retrain", retrain_ms);
    save_model(&retrained, out.join("retrain.kgun"))?;

    let mut rows = Vec::new();
    let mut unlearn_stats = Vec::new();
    let describe = |name: &str,
                        model: &EmbeddingModel,
                        time_ms: f64|
     -> Result<CompareRow> {
        let test = evaluate(model, &splits.test, &splits.full, cfg.eval_setting)?;
        let hits = test.hits.as_ref().expect("non-empty test split");
        let (deleted, remaining) = split_eval(model, &splits.train, &req, cfg.eval_setting)?;
        Ok(CompareRow {
            method: name.to_string(),
            time_ms,
            peak_rss_bytes: peak_rss_bytes(),
            mrr: test.mrr.expect("non-empty test split"),
            hit1: hits[&1],
            hit3: hits[&3],
            hit10: hits[&10],
            deleted_mrr: deleted.mrr,
            remain_mrr: remaining.mrr,
            l2_to_retrain: l2_distance(model, &retrained, None)?,
        })
    };

    rows.push(describe("original", &original, original_ms)?);
    rows.push(describe("retrain", &retrained, retrain_ms)?);

    for &method in &cfg.methods {
        let mut mcfg = cfg.unlearn.clone();
        mcfg.method = method;
        let started = Instant::now();
        let (unlearned, stats) = unlearn(&original, &splits.train, &req, &mcfg, cfg.seed)?;
        let ms = started.elapsed().as_secs_f64() * 1e3;
        let name = method.to_string();
        time_leg(&format!("unlearn:{name}"), ms);
        save_model(&unlearned, out.join(format!("{name}.kgun")))?;
        write_json(&out.join(format!("unlearn_stats_{name}.json")), &stats)?;
        rows.push(describe(&name, &unlearned, ms)?);
        unlearn_stats.push((name, stats));
    }

    let outcome = CompareOutcome {
        config_hash: config_hash(cfg),
        rows,
        unlearn_stats,
    };
    write_compare_tables(&out, &outcome)?;
    write_json(
        &out.join("run_stats.json"),
        &RunStats {
            wall_ms: legs.iter().map(|(_, ms)| ms).sum(),
            peak_rss_bytes: peak_rss_bytes(),
            legs,
        },
    )?;
    Ok(outcome)
}

fn write_compare_tables(out: &Path, outcome: &CompareOutcome) -> Result<()> {
    // volatile table, standard benchmark column order
    let mut w = csv::Writer::from_path(out.join("compare.csv"))?;
    w.write_record([
        "method",
        "time_ms",
        "peak_rss_bytes",
        "mrr",
        "hit3",
        "hit1",
    ])?;
    let blank_if_none =
        |v: &Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &outcome.rows {
        w.write_record([
            r.method.clone(),
            r.time_ms.to_string(),
            blank_if_none(&r.peak_rss_bytes),
            r.mrr.to_string(),
            r.hit3.to_string(),
            r.hit1.to_string(),
        ])?;
    }
    w.flush()?;

    // deterministic table: metrics only
    let mut w = csv::Writer::from_path(out.join("metrics.csv"))?;
    w.write_record([
        "method",
        "mrr",
        "hit1",
        "hit3",
        "hit10",
        "deleted_mrr",
        "remain_mrr",
        "l2_to_retrain",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &outcome.rows {
        w.write_record([
            r.method.clone(),
            r.mrr.to_string(),
            r.hit1.to_string(),
            r.hit3.to_string(),
            r.hit10.to_string(),
            opt(r.deleted_mrr),
            opt(r.remain_mrr),
            r.l2_to_retrain.to_string(),
        ])?;
    }
    w.flush()?;

    // deterministic report: rows without their volatile fields
    let metric_rows: Vec<MetricRow> = outcome
        .rows
        .iter()
        .map(|r| MetricRow {
            method: &r.method,
            mrr: r.mrr,
            hit1: r.hit1,
            hit3: r.hit3,
            hit10: r.hit10,
            deleted_mrr: r.deleted_mrr,
            remain_mrr: r.remain_mrr,
            l2_to_retrain: r.l2_to_retrain,
        })
        .collect();
    write_json(
        &out.join("report.json"),
        &serde_json::json!({
            "config_hash": outcome.config_hash,
            "rows": metric_rows,
        }),
    )?;
    Ok(())
}

/// `sweep`: run `compare` once per configured deletion ratio, each in its
/// own subdirectory, emitting one table per ratio.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<(f64, CompareOutcome)>> {
    let out = prepare_out(cfg)?;
    write_manifest(cfg, &out)?;
    if cfg.sweep_ratios.is_empty() {
        bail!("sweep needs at least one deletion ratio");
    }
    let mut outcomes = Vec::new();
    for &ratio in &cfg.sweep_ratios {
        let mut sub = cfg.clone();
        sub.delete.ratio = Some(ratio);
        sub.delete.file = None;
        sub.out = out.join(format!("ratio_{ratio}"));
        let outcome = cmd_compare(&sub)
            .with_context(|| format!("comparison at deletion ratio {ratio}"))?;
        outcomes.push((ratio, outcome));
    }
    Ok(outcomes)
}
