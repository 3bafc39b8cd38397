//! Mini-batch training of embedding models.
//!
//! Each epoch shuffles the triple order and draws fresh negatives from one
//! seeded generator, so a (config, seed) pair pins the entire optimization
//! trajectory. Updates touch only the parameter rows present in the batch
//! gradient; the Adam variant keeps its moment estimates per slot but applies
//! bias correction by the global step count, matching the sparse-Adam
//! convention of the major deep-learning frameworks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::pairs_loss_grad;
use crate::graph::{
    remove_triples, sample_negatives_with_rng, DeletionRequest, KnowledgeGraph, Triple,
};
use crate::model::{init_model, EmbeddingModel, ModelKind, Norm};
use crate::score::{build_pairs, DeltaView};
use crate::sparse::{ArrayTag, SparseVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    /// Conventional optimizer for each family: rotations train poorly under
    /// plain SGD, the translational models prefer it.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::RotatE => Optimizer::Adam,
            _ => Optimizer::Sgd,
        }
    }

    /// Conventional learning rate for each optimizer.
    pub fn default_lr(self) -> f64 {
        match self {
            Optimizer::Sgd => 0.01,
            Optimizer::Adam => 0.001,
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::InvalidArgument(format!(
                "unknown optimizer {other:?} (expected sgd|adam)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub n_neg_per_pos: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 512,
            lr: Optimizer::Sgd.default_lr(),
            optimizer: Optimizer::Sgd,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            n_neg_per_pos: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lr must be a positive real, got {}",
                self.lr
            )));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::InvalidArgument(format!(
                "adam betas must lie in [0, 1), got ({b1}, {b2})"
            )));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::InvalidArgument("adam_eps must be > 0".into()));
        }
        if self.n_neg_per_pos < 1 {
            return Err(Error::InvalidArgument("n_neg_per_pos must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-slot first/second moment estimates, shaped like the model's arrays.
struct AdamState {
    exp_avg: Vec<Vec<f64>>,
    exp_avg_sq: Vec<Vec<f64>>,
    step: u64,
}

const ALL_TAGS: [ArrayTag; 4] = [
    ArrayTag::Entity,
    ArrayTag::Relation,
    ArrayTag::RelAux,
    ArrayTag::EntAux,
];

fn tag_index(tag: ArrayTag) -> usize {
    ALL_TAGS.iter().position(|t| *t == tag).unwrap()
}

impl AdamState {
    fn for_model(m: &EmbeddingModel) -> Self {
        let shaped = |_: &EmbeddingModel| {
            ALL_TAGS
                .map(|tag| {
                    if m.has_array(tag) {
                        vec![0.0; m.rows(tag) * m.width(tag)]
                    } else {
                        Vec::new()
                    }
                })
                .into_iter()
                .collect::<Vec<_>>()
        };
        AdamState {
            exp_avg: shaped(m),
            exp_avg_sq: shaped(m),
            step: 0,
        }
    }
}

fn apply_step(
    m: &mut EmbeddingModel,
    grad: &SparseVec,
    cfg: &TrainConfig,
    adam: &mut Option<AdamState>,
) {
    match adam {
        None => {
            for &(slot, g) in grad.iter() {
                let key = slot.row_key();
                let row = m.row_mut(key);
                let i = slot.col as usize;
                row[i] = (row[i] as f64 - cfg.lr * g) as f32;
            }
        }
        Some(state) => {
            state.step += 1;
            let (b1, b2) = cfg.adam_betas;
            let bc1 = 1.0 - b1.powi(state.step as i32);
            let bc2 = 1.0 - b2.powi(state.step as i32);
            for &(slot, g) in grad.iter() {
                let ti = tag_index(slot.tag);
                let width = m.width(slot.tag);
                let flat = slot.row as usize * width + slot.col as usize;
                let ea = &mut state.exp_avg[ti][flat];
                *ea = b1 * *ea + (1.0 - b1) * g;
                let eas = &mut state.exp_avg_sq[ti][flat];
                *eas = b2 * *eas + (1.0 - b2) * g * g;
                let m_hat = *ea / bc1;
                let v_hat = *eas / bc2;
                let row = m.row_mut(slot.row_key());
                let i = slot.col as usize;
                row[i] = (row[i] as f64 - cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps)) as f32;
            }
        }
    }
    if m.kind == ModelKind::TransH {
        // keep hyperplane normals unit-length; only touched normals moved
        let mut done = std::collections::BTreeSet::new();
        for &(slot, _) in grad.iter() {
            if slot.tag == ArrayTag::RelAux && done.insert(slot.row) {
                m.renormalize_normal(slot.row as usize);
            }
        }
    }
}

/// Train a fresh model on `g`. Returns the model and per-epoch mean loss
/// (epoch loss sum divided by the number of pos/neg pairs that epoch).
pub fn train(
    g: &KnowledgeGraph,
    kind: ModelKind,
    cfg: &TrainConfig,
    dim: usize,
    margin: f64,
    norm: Norm,
) -> Result<(EmbeddingModel, Vec<f64>)> {
    train_observed(g, kind, cfg, dim, margin, norm, |_, _| {})
}

/// As [`train`], invoking `observe_batch(epoch, batch_positives)` before each
/// optimizer step — an audit hook for verifying which triples drive updates.
pub fn train_observed(
    g: &KnowledgeGraph,
    kind: ModelKind,
    cfg: &TrainConfig,
    dim: usize,
    margin: f64,
    norm: Norm,
    mut observe_batch: impl FnMut(usize, &[Triple]),
) -> Result<(EmbeddingModel, Vec<f64>)> {
    cfg.validate()?;
    if g.n_triples() == 0 {
        return Err(Error::InvalidArgument(
            "cannot train on a graph with no triples".into(),
        ));
    }
    let mut m = init_model(kind, g, dim, margin, norm, cfg.seed)?;
    // the trainer's draws run on their own stream so they never replay the
    // initializer's sequence
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = match cfg.optimizer {
        Optimizer::Sgd => None,
        Optimizer::Adam => Some(AdamState::for_model(&m)),
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..g.n_triples()).collect();
    let mut batch_pos = Vec::new();
    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_pairs = 0usize;
        for (batch_no, batch) in indices.chunks(cfg.batch_size).enumerate() {
            let negs = sample_negatives_with_rng(g, batch, cfg.n_neg_per_pos, &mut rng)?;
            batch_pos.clear();
            batch_pos.extend(batch.iter().map(|&i| g.triple(i)));
            let pairs = build_pairs(&batch_pos, &negs)?;
            let (loss, grad) = pairs_loss_grad(&m, &DeltaView::None, &pairs);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            observe_batch(epoch, &batch_pos);
            apply_step(&mut m, &grad, cfg, &mut adam);
            epoch_loss += loss;
            epoch_pairs += pairs.len();
        }
        history.push(epoch_loss / epoch_pairs as f64);
    }
    Ok((m, history))
}

/// Train from scratch on `g` minus the requested triples — the gold-standard
/// reference every unlearning method is judged against. Uses the same seed
/// (fresh initialization, same initial values) so parameter-space distances
/// against the original model are meaningful.
pub fn retrain(
    g: &KnowledgeGraph,
    req: &DeletionRequest,
    kind: ModelKind,
    cfg: &TrainConfig,
    dim: usize,
    margin: f64,
    norm: Norm,
) -> Result<(EmbeddingModel, Vec<f64>)> {
    let remaining = remove_triples(g, req)?;
    train(&remaining, kind, cfg, dim, margin, norm)
}
