//! Embedding-model parameter families.
//!
//! Four scoring families share one flat parameter layout: an entity table, a
//! relation table, and up to two auxiliary tables. All scores are distances
//! (lower = more plausible).
//!
//! | kind   | entity row | relation row      | rel-aux row        | ent-aux row       |
//! |--------|------------|-------------------|--------------------|-------------------|
//! | TransE | d reals    | d reals           | —                  | —                 |
//! | TransH | d reals    | d reals (d_r)     | d reals (normal w) | —                 |
//! | TransD | d reals    | d reals           | d reals (r_p)      | d reals (e_p)     |
//! | RotatE | 2d reals   | d phases (rad)    | —                  | —                 |
//!
//! RotatE entity rows interleave complex pairs `[re_0, im_0, re_1, im_1, …]`; the
//! relation row stores the rotation phase per complex coordinate, so the implied
//! rotation always has unit modulus.
//!
//! Parameters are stored as `f32` (that is the checkpoint width); all arithmetic
//! on them happens in `f64` elsewhere in the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::sparse::{ArrayTag, RowKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    TransH,
    TransD,
    RotatE,
}

impl ModelKind {
    pub fn tag(self) -> u64 {
        match self {
            ModelKind::TransE => 0,
            ModelKind::TransH => 1,
            ModelKind::TransD => 2,
            ModelKind::RotatE => 3,
        }
    }

    pub fn from_tag(tag: u64) -> Result<Self> {
        Ok(match tag {
            0 => ModelKind::TransE,
            1 => ModelKind::TransH,
            2 => ModelKind::TransD,
            3 => ModelKind::RotatE,
            other => {
                return Err(Error::BadCheckpoint(format!("unknown model kind tag {other}")))
            }
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transe" => Ok(ModelKind::TransE),
            "transh" => Ok(ModelKind::TransH),
            "transd" => Ok(ModelKind::TransD),
            "rotate" => Ok(ModelKind::RotatE),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind {other:?} (expected transe|transh|transd|rotate)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::TransE => "transe",
            ModelKind::TransH => "transh",
            ModelKind::TransD => "transd",
            ModelKind::RotatE => "rotate",
        };
        f.write_str(s)
    }
}

/// Which vector norm the score uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn tag(self) -> u64 {
        match self {
            Norm::L1 => 1,
            Norm::L2 => 2,
        }
    }

    pub fn from_tag(tag: u64) -> Result<Self> {
        Ok(match tag {
            1 => Norm::L1,
            2 => Norm::L2,
            other => return Err(Error::BadCheckpoint(format!("unknown norm tag {other}"))),
        })
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(Error::InvalidArgument(format!(
                "unknown norm {other:?} (expected l1|l2)"
            ))),
        }
    }
}

/// One trained (or training) embedding model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub kind: ModelKind,
    /// Embedding dimension d. RotatE entity rows are 2d wide (complex pairs).
    pub dim: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub margin: f64,
    pub norm: Norm,
    /// `n_entities × ent_width()`, row-major.
    pub entity_emb: Vec<f32>,
    /// `n_relations × dim`, row-major.
    pub relation_emb: Vec<f32>,
    /// TransH normals / TransD relation projectors: `n_relations × dim`.
    pub rel_aux: Option<Vec<f32>>,
    /// TransD entity projectors: `n_entities × dim`.
    pub ent_aux: Option<Vec<f32>>,
}

impl EmbeddingModel {
    /// Width of one entity row.
    pub fn ent_width(&self) -> usize {
        match self.kind {
            ModelKind::RotatE => 2 * self.dim,
            _ => self.dim,
        }
    }

    /// Width of a row in the given array.
    pub fn width(&self, tag: ArrayTag) -> usize {
        match tag {
            ArrayTag::Entity => self.ent_width(),
            _ => self.dim,
        }
    }

    /// Whether this model carries the given array at all.
    pub fn has_array(&self, tag: ArrayTag) -> bool {
        match tag {
            ArrayTag::Entity | ArrayTag::Relation => true,
            ArrayTag::RelAux => self.rel_aux.is_some(),
            ArrayTag::EntAux => self.ent_aux.is_some(),
        }
    }

    /// Number of rows in the given array (0 when absent).
    pub fn rows(&self, tag: ArrayTag) -> usize {
        match tag {
            ArrayTag::Entity => self.n_entities,
            ArrayTag::Relation => self.n_relations,
            ArrayTag::RelAux => {
                if self.rel_aux.is_some() {
                    self.n_relations
                } else {
                    0
                }
            }
            ArrayTag::EntAux => {
                if self.ent_aux.is_some() {
                    self.n_entities
                } else {
                    0
                }
            }
        }
    }

    pub fn row(&self, key: RowKey) -> &[f32] {
        let w = self.width(key.tag);
        let r = key.row as usize;
        match key.tag {
            ArrayTag::Entity => &self.entity_emb[r * w..(r + 1) * w],
            ArrayTag::Relation => &self.relation_emb[r * w..(r + 1) * w],
            ArrayTag::RelAux => {
                let a = self.rel_aux.as_ref().expect("model has no relation-aux array");
                &a[r * w..(r + 1) * w]
            }
            ArrayTag::EntAux => {
                let a = self.ent_aux.as_ref().expect("model has no entity-aux array");
                &a[r * w..(r + 1) * w]
            }
        }
    }

    pub fn row_mut(&mut self, key: RowKey) -> &mut [f32] {
        let w = self.width(key.tag);
        let r = key.row as usize;
        match key.tag {
            ArrayTag::Entity => &mut self.entity_emb[r * w..(r + 1) * w],
            ArrayTag::Relation => &mut self.relation_emb[r * w..(r + 1) * w],
            ArrayTag::RelAux => {
                let a = self.rel_aux.as_mut().expect("model has no relation-aux array");
                &mut a[r * w..(r + 1) * w]
            }
            ArrayTag::EntAux => {
                let a = self.ent_aux.as_mut().expect("model has no entity-aux array");
                &mut a[r * w..(r + 1) * w]
            }
        }
    }

    /// The arrays this kind carries beyond entity/relation, in storage order.
    pub fn aux_tags(&self) -> &'static [ArrayTag] {
        match self.kind {
            ModelKind::TransE | ModelKind::RotatE => &[],
            ModelKind::TransH => &[ArrayTag::RelAux],
            ModelKind::TransD => &[ArrayTag::RelAux, ArrayTag::EntAux],
        }
    }

    /// Total scalar parameter count.
    pub fn n_params(&self) -> usize {
        self.entity_emb.len()
            + self.relation_emb.len()
            + self.rel_aux.as_ref().map_or(0, |a| a.len())
            + self.ent_aux.as_ref().map_or(0, |a| a.len())
    }

    /// Rescale one relation-aux row to unit L2 norm (TransH hyperplane normals).
    /// No-op for models without the array. Rows at exactly zero are left alone.
    pub fn renormalize_normal(&mut self, rel: usize) {
        if self.kind != ModelKind::TransH {
            return;
        }
        let dim = self.dim;
        if let Some(aux) = self.rel_aux.as_mut() {
            let row = &mut aux[rel * dim..(rel + 1) * dim];
            let norm = row.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in row.iter_mut() {
                    *x = (*x as f64 / norm) as f32;
                }
            }
        }
    }

    pub fn renormalize_all_normals(&mut self) {
        for r in 0..self.n_relations {
            self.renormalize_normal(r);
        }
    }

    /// Same kind/shape/norm — the precondition for distances and checkpod swaps.
    pub fn same_shape(&self, other: &EmbeddingModel) -> bool {
        self.kind == other.kind
            && self.dim == other.dim
            && self.n_entities == other.n_entities
            && self.n_relations == other.n_relations
            && self.norm == other.norm
    }

    pub fn all_finite(&self) -> bool {
        let ok = |v: &[f32]| v.iter().all(|x| x.is_finite());
        ok(&self.entity_emb)
            && ok(&self.relation_emb)
            && self.rel_aux.as_deref().map_or(true, ok)
            && self.ent_aux.as_deref().map_or(true, ok)
    }
}

/// Fresh model with uniform initialization in `[−6/√d, +6/√d]` (RotatE phases
/// uniform in `[0, 2π)`); TransH normals start unit length. Deterministic per seed.
pub fn init_model(
    kind: ModelKind,
    g: &KnowledgeGraph,
    dim: usize,
    margin: f64,
    norm: Norm,
    seed: u64,
) -> Result<EmbeddingModel> {
    if dim < 1 {
        return Err(Error::InvalidArgument("dim must be >= 1".into()));
    }
    if !(margin.is_finite() && margin > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "margin must be a positive real, got {margin}"
        )));
    }
    let n_e = g.n_entities();
    let n_r = g.n_relations();
    let bound = 6.0 / (dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |n: usize, lo: f64, hi: f64| -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(lo..hi) as f32).collect()
    };

    let ent_width = if kind == ModelKind::RotatE { 2 * dim } else { dim };
    let entity_emb = uniform(n_e * ent_width, -bound, bound);
    let relation_emb = match kind {
        ModelKind::RotatE => uniform(n_r * dim, 0.0, std::f64::consts::TAU),
        _ => uniform(n_r * dim, -bound, bound),
    };
    let rel_aux = match kind {
        ModelKind::TransH | ModelKind::TransD => Some(uniform(n_r * dim, -bound, bound)),
        _ => None,
    };
    let ent_aux = match kind {
        ModelKind::TransD => Some(uniform(n_e * dim, -bound, bound)),
        _ => None,
    };

    let mut m = EmbeddingModel {
        kind,
        dim,
        n_entities: n_e,
        n_relations: n_r,
        margin,
        norm,
        entity_emb,
        relation_emb,
        rel_aux,
        ent_aux,
    };
    m.renormalize_all_normals();
    Ok(m)
}
