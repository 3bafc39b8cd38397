//! Scoring and margin loss.
//!
//! All four families reduce to "build a residual vector from the triple's rows,
//! take its norm". The kernels here work on gathered `f64` row buffers so that the
//! same code path serves plain scoring, loss at displaced parameters
//! ([`perturbed_loss`]), and the gradient module. Displacements arrive as a
//! [`DeltaView`] overlay — the stored `f32` parameters are never mutated.

use crate::error::{Error, Result};
use crate::graph::{NegativeSample, Triple};
use crate::model::{EmbeddingModel, ModelKind, Norm};
use crate::sparse::{ArrayTag, ParamSlot, RowKey, SparseVec};

/// A parameter displacement applied on top of the stored values.
#[derive(Clone, Copy)]
pub(crate) enum DeltaView<'a> {
    None,
    Sparse(&'a SparseVec),
    /// Single-coordinate displacement (finite-difference probes).
    Slot(ParamSlot, f64),
}

impl DeltaView<'_> {
    fn apply(&self, key: RowKey, buf: &mut [f64]) {
        match self {
            DeltaView::None => {}
            DeltaView::Sparse(v) => {
                for &(slot, val) in v.row_entries(key) {
                    buf[slot.col as usize] += val;
                }
            }
            DeltaView::Slot(slot, val) => {
                if slot.row_key() == key {
                    buf[slot.col as usize] += val;
                }
            }
        }
    }
}

/// Reusable gathered-row buffers for one triple.
///
/// `a`, `b`, `c` hold the kind-dependent auxiliary rows: TransH uses `a` for the
/// hyperplane normal; TransD uses `a` = relation projector, `b` = head projector,
/// `c` = tail projector.
#[derive(Default)]
pub(crate) struct TripleRows {
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

fn gather(m: &EmbeddingModel, delta: &DeltaView, key: RowKey, buf: &mut Vec<f64>) {
    let src = m.row(key);
    buf.clear();
    buf.extend(src.iter().map(|&x| x as f64));
    delta.apply(key, buf);
}

pub(crate) fn gather_triple(
    m: &EmbeddingModel,
    delta: &DeltaView,
    t: &Triple,
    rows: &mut TripleRows,
) {
    gather(m, delta, RowKey::new(ArrayTag::Entity, t.head), &mut rows.h);
    gather(m, delta, RowKey::new(ArrayTag::Relation, t.relation), &mut rows.r);
    gather(m, delta, RowKey::new(ArrayTag::Entity, t.tail), &mut rows.t);
    match m.kind {
        ModelKind::TransE | ModelKind::RotatE => {}
        ModelKind::TransH => {
            gather(m, delta, RowKey::new(ArrayTag::RelAux, t.relation), &mut rows.a);
        }
        ModelKind::TransD => {
            gather(m, delta, RowKey::new(ArrayTag::RelAux, t.relation), &mut rows.a);
            gather(m, delta, RowKey::new(ArrayTag::EntAux, t.head), &mut rows.b);
            gather(m, delta, RowKey::new(ArrayTag::EntAux, t.tail), &mut rows.c);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_of(norm: Norm, v: impl Iterator<Item = f64>) -> f64 {
    match norm {
        Norm::L1 => v.map(f64::abs).sum(),
        Norm::L2 => v.map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// Score from gathered rows. Lower is better; always ≥ 0 (it is a vector norm).
pub(crate) fn score_rows(kind: ModelKind, norm: Norm, dim: usize, rows: &TripleRows) -> f64 {
    match kind {
        ModelKind::TransE => norm_of(
            norm,
            (0..dim).map(|i| rows.h[i] + rows.r[i] - rows.t[i]),
        ),
        ModelKind::TransH => {
            // x⊥ = x − (wᵀx)w, residual h⊥ + d_r − t⊥
            let w = &rows.a;
            let wh = dot(w, &rows.h);
            let wt = dot(w, &rows.t);
            norm_of(
                norm,
                (0..dim).map(|i| rows.h[i] + rows.r[i] - rows.t[i] - (wh - wt) * w[i]),
            )
        }
        ModelKind::TransD => {
            // (r_p e_pᵀ + I)·e = e + (e_pᵀe) r_p
            let hp_h = dot(&rows.b, &rows.h);
            let tp_t = dot(&rows.c, &rows.t);
            norm_of(
                norm,
                (0..dim).map(|i| {
                    rows.h[i] + rows.r[i] - rows.t[i] + (hp_h - tp_t) * rows.a[i]
                }),
            )
        }
        ModelKind::RotatE => {
            // component-wise complex rotation of h by e^{iφ}, distance to t;
            // the norm acts on the per-component moduli.
            let mut acc = 0.0;
            for j in 0..dim {
                let (re, im) = (rows.h[2 * j], rows.h[2 * j + 1]);
                let (sin, cos) = rows.r[j].sin_cos();
                let x = re * cos - im * sin - rows.t[2 * j];
                let y = re * sin + im * cos - rows.t[2 * j + 1];
                let m2 = x * x + y * y;
                acc += match norm {
                    Norm::L1 => m2.sqrt(),
                    Norm::L2 => m2,
                };
            }
            match norm {
                Norm::L1 => acc,
                Norm::L2 => acc.sqrt(),
            }
        }
    }
}

pub(crate) fn validate_triple(m: &EmbeddingModel, t: &Triple) -> Result<()> {
    if t.head >= m.n_entities || t.tail >= m.n_entities {
        return Err(Error::UnknownId {
            what: "entity",
            id: t.head.max(t.tail).to_string(),
        });
    }
    if t.relation >= m.n_relations {
        return Err(Error::UnknownId {
            what: "relation",
            id: t.relation.to_string(),
        });
    }
    Ok(())
}

pub(crate) fn score_with(
    m: &EmbeddingModel,
    delta: &DeltaView,
    t: &Triple,
    rows: &mut TripleRows,
) -> f64 {
    gather_triple(m, delta, t, rows);
    score_rows(m.kind, m.norm, m.dim, rows)
}

/// Plausibility score of one triple (lower = better).
pub fn score(m: &EmbeddingModel, t: &Triple) -> Result<f64> {
    validate_triple(m, t)?;
    let mut rows = TripleRows::default();
    Ok(score_with(m, &DeltaView::None, t, &mut rows))
}

/// Distance from one triple's score to the nearest kink of the norm, given
/// already-gathered rows: the smallest |ρ_i| for L1, the full norm for L2
/// (whose only kink is at the origin), per-component moduli for rotations.
fn smoothness_margin(kind: ModelKind, norm: Norm, dim: usize, rows: &TripleRows) -> f64 {
    match kind {
        ModelKind::TransE | ModelKind::TransH | ModelKind::TransD => {
            let rho_i = |i: usize| -> f64 {
                match kind {
                    ModelKind::TransE => rows.h[i] + rows.r[i] - rows.t[i],
                    ModelKind::TransH => {
                        let w = &rows.a;
                        let s = dot(w, &rows.h) - dot(w, &rows.t);
                        rows.h[i] + rows.r[i] - rows.t[i] - s * w[i]
                    }
                    ModelKind::TransD => {
                        let shift = dot(&rows.b, &rows.h) - dot(&rows.c, &rows.t);
                        rows.h[i] + rows.r[i] - rows.t[i] + shift * rows.a[i]
                    }
                    ModelKind::RotatE => unreachable!(),
                }
            };
            match norm {
                Norm::L1 => (0..dim).map(|i| rho_i(i).abs()).fold(f64::INFINITY, f64::min),
                Norm::L2 => (0..dim).map(|i| rho_i(i).powi(2)).sum::<f64>().sqrt(),
            }
        }
        ModelKind::RotatE => {
            let modulus = |j: usize| -> f64 {
                let (re, im) = (rows.h[2 * j], rows.h[2 * j + 1]);
                let (sin, cos) = rows.r[j].sin_cos();
                let x = re * cos - im * sin - rows.t[2 * j];
                let y = re * sin + im * cos - rows.t[2 * j + 1];
                (x * x + y * y).sqrt()
            };
            match norm {
                Norm::L1 => (0..dim).map(modulus).fold(f64::INFINITY, f64::min),
                Norm::L2 => (0..dim).map(|j| modulus(j).powi(2)).sum::<f64>().sqrt(),
            }
        }
    }
}

/// Smallest distance from the margin loss at the current parameters to a
/// nondifferentiable point, over all pos/neg pairs.
///
/// Finite-difference probes of the loss are only trustworthy when this value
/// comfortably exceeds the probe step: the minimum runs over each pair's
/// hinge argument |f(pos) − f(neg) + margin| and, for pairs whose hinge is
/// active, the distance of both scores to their norm's kink. Returns
/// `+∞` for empty inputs.
pub fn kink_margin(
    m: &EmbeddingModel,
    pos: &[Triple],
    negs: &[NegativeSample],
) -> Result<f64> {
    let pairs = build_pairs(pos, negs)?;
    let mut rows = TripleRows::default();
    let mut min = f64::INFINITY;
    for (p, n) in &pairs {
        validate_triple(m, p)?;
        validate_triple(m, n)?;
        gather_triple(m, &DeltaView::None, p, &mut rows);
        let fp = score_rows(m.kind, m.norm, m.dim, &rows);
        let sp = smoothness_margin(m.kind, m.norm, m.dim, &rows);
        gather_triple(m, &DeltaView::None, n, &mut rows);
        let fneg = score_rows(m.kind, m.norm, m.dim, &rows);
        let sn = smoothness_margin(m.kind, m.norm, m.dim, &rows);
        let hinge = fp - fneg + m.margin;
        min = min.min(hinge.abs());
        if hinge > 0.0 {
            min = min.min(sp).min(sn);
        }
    }
    Ok(min)
}

/// Positive/negative pairs from aligned lists.
///
/// `negs` must hold the same number of corruptions for every positive, grouped:
/// entry `i*n_per + j` corrupts `pos[i]`.
pub(crate) fn build_pairs(
    pos: &[Triple],
    negs: &[NegativeSample],
) -> Result<Vec<(Triple, Triple)>> {
    if pos.is_empty() {
        if negs.is_empty() {
            return Ok(Vec::new());
        }
        return Err(Error::MisalignedLists {
            pos: 0,
            neg: negs.len(),
        });
    }
    if negs.is_empty() || negs.len() % pos.len() != 0 {
        return Err(Error::MisalignedLists {
            pos: pos.len(),
            neg: negs.len(),
        });
    }
    let n_per = negs.len() / pos.len();
    let mut pairs = Vec::with_capacity(negs.len());
    for (i, p) in pos.iter().enumerate() {
        for j in 0..n_per {
            pairs.push((*p, negs[i * n_per + j].corrupted));
        }
    }
    Ok(pairs)
}

/// One hinge term: `max(0, f(pos) − f(neg) + margin)`. NaN propagates (the
/// built-in `max` would silently clamp it to zero and mask a blown-up model).
pub(crate) fn pair_term(
    m: &EmbeddingModel,
    delta: &DeltaView,
    pair: &(Triple, Triple),
    rows: &mut TripleRows,
) -> f64 {
    let fp = score_with(m, delta, &pair.0, rows);
    let fn_ = score_with(m, delta, &pair.1, rows);
    let t = fp - fn_ + m.margin;
    if t.is_nan() {
        return f64::NAN;
    }
    t.max(0.0)
}

fn loss_of_pairs(m: &EmbeddingModel, delta: &DeltaView, pairs: &[(Triple, Triple)]) -> Result<f64> {
    let mut rows = TripleRows::default();
    let mut total = 0.0;
    for pair in pairs {
        validate_triple(m, &pair.0)?;
        validate_triple(m, &pair.1)?;
        total += pair_term(m, delta, pair, &mut rows);
    }
    Ok(total)
}

/// Margin ranking loss: `Σ max(0, f(pos) − f(neg) + margin)` over aligned pairs.
pub fn margin_loss(m: &EmbeddingModel, pos: &[Triple], negs: &[NegativeSample]) -> Result<f64> {
    let pairs = build_pairs(pos, negs)?;
    loss_of_pairs(m, &DeltaView::None, &pairs)
}

/// [`margin_loss`] evaluated at `θ + delta`, without mutating the model.
pub fn perturbed_loss(
    m: &EmbeddingModel,
    delta: &SparseVec,
    pos: &[Triple],
    negs: &[NegativeSample],
) -> Result<f64> {
    let pairs = build_pairs(pos, negs)?;
    loss_of_pairs(m, &DeltaView::Sparse(delta), &pairs)
}
