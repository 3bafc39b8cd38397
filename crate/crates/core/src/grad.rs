//! Analytic gradients of the margin loss.
//!
//! Each scoring family is a norm of a residual vector, so the chain rule
//! factors into two steps: the norm's gradient with respect to the residual
//! (sign pattern for L1, normalized residual for L2, zero at the kink), then
//! the residual's Jacobian applied per parameter row. Per-pair row gradients
//! are accumulated into a [`SparseVec`] so repeated rows — shared entities,
//! self-loops, the same relation on both sides of a pair — sum correctly.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::graph::{NegativeSample, Triple};
use crate::model::{EmbeddingModel, ModelKind, Norm};
use crate::score::{build_pairs, gather_triple, validate_triple, DeltaView, TripleRows};
use crate::sparse::{ArrayTag, ParamSlot, RowKey, SparseVec};

/// Per-row gradient buffers for one triple, mirroring [`TripleRows`].
#[derive(Default)]
pub(crate) struct TripleGrad {
    pub gh: Vec<f64>,
    pub gr: Vec<f64>,
    pub gt: Vec<f64>,
    pub ga: Vec<f64>,
    pub gb: Vec<f64>,
    pub gc: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of `‖ρ‖` with respect to `ρ`, written into `out`. Returns `‖ρ‖`.
fn norm_grad(norm: Norm, rho: &[f64], out: &mut Vec<f64>) -> f64 {
    out.clear();
    match norm {
        Norm::L1 => {
            let mut s = 0.0;
            for &x in rho {
                s += x.abs();
                out.push(if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                });
            }
            s
        }
        Norm::L2 => {
            let n = dot(rho, rho).sqrt();
            if n == 0.0 {
                out.extend(std::iter::repeat(0.0).take(rho.len()));
            } else {
                out.extend(rho.iter().map(|&x| x / n));
            }
            n
        }
    }
}

fn resize_zero(v: &mut Vec<f64>, n: usize) {
    v.clear();
    v.resize(n, 0.0);
}

/// Score and per-row gradients for one triple from gathered rows.
pub(crate) fn grad_rows(
    kind: ModelKind,
    norm: Norm,
    dim: usize,
    rows: &TripleRows,
    out: &mut TripleGrad,
) -> f64 {
    let mut rho = Vec::with_capacity(dim);
    let mut g = Vec::with_capacity(dim);
    match kind {
        ModelKind::TransE => {
            rho.extend((0..dim).map(|i| rows.h[i] + rows.r[i] - rows.t[i]));
            let score = norm_grad(norm, &rho, &mut g);
            out.gh.clear();
            out.gh.extend_from_slice(&g);
            out.gr.clear();
            out.gr.extend_from_slice(&g);
            out.gt.clear();
            out.gt.extend(g.iter().map(|x| -x));
            out.ga.clear();
            out.gb.clear();
            out.gc.clear();
            score
        }
        ModelKind::TransH => {
            let w = &rows.a;
            let s = dot(w, &rows.h) - dot(w, &rows.t);
            rho.extend((0..dim).map(|i| rows.h[i] + rows.r[i] - rows.t[i] - s * w[i]));
            let score = norm_grad(norm, &rho, &mut g);
            let wg = dot(w, &g);
            out.gh.clear();
            out.gh.extend((0..dim).map(|i| g[i] - wg * w[i]));
            out.gr.clear();
            out.gr.extend_from_slice(&g);
            out.gt.clear();
            out.gt.extend((0..dim).map(|i| -(g[i] - wg * w[i])));
            // ∂ρ_i/∂w_j = −(h−t)_j w_i − s δ_ij
            out.ga.clear();
            out.ga
                .extend((0..dim).map(|j| -(wg * (rows.h[j] - rows.t[j]) + s * g[j])));
            out.gb.clear();
            out.gc.clear();
            score
        }
        ModelKind::TransD => {
            let hp_h = dot(&rows.b, &rows.h);
            let tp_t = dot(&rows.c, &rows.t);
            rho.extend(
                (0..dim).map(|i| rows.h[i] + rows.r[i] - rows.t[i] + (hp_h - tp_t) * rows.a[i]),
            );
            let score = norm_grad(norm, &rho, &mut g);
            let rg = dot(&rows.a, &g);
            out.gh.clear();
            out.gh.extend((0..dim).map(|i| g[i] + rg * rows.b[i]));
            out.gr.clear();
            out.gr.extend_from_slice(&g);
            out.gt.clear();
            out.gt.extend((0..dim).map(|i| -(g[i] + rg * rows.c[i])));
            out.ga.clear();
            out.ga.extend(g.iter().map(|&gi| (hp_h - tp_t) * gi));
            out.gb.clear();
            out.gb.extend(rows.h.iter().map(|&hi| rg * hi));
            out.gc.clear();
            out.gc.extend(rows.t.iter().map(|&ti| -rg * ti));
            score
        }
        ModelKind::RotatE => {
            // residual per component j: (x_j, y_j) = R(φ_j)·(a,b) − (t_re, t_im)
            let mut xs = Vec::with_capacity(dim);
            let mut ys = Vec::with_capacity(dim);
            let mut mods = Vec::with_capacity(dim);
            for j in 0..dim {
                let (a, b) = (rows.h[2 * j], rows.h[2 * j + 1]);
                let (sin, cos) = rows.r[j].sin_cos();
                let x = a * cos - b * sin - rows.t[2 * j];
                let y = a * sin + b * cos - rows.t[2 * j + 1];
                xs.push(x);
                ys.push(y);
                mods.push((x * x + y * y).sqrt());
            }
            let score = match norm {
                Norm::L1 => mods.iter().sum(),
                Norm::L2 => mods.iter().map(|m| m * m).sum::<f64>().sqrt(),
            };
            resize_zero(&mut out.gh, 2 * dim);
            resize_zero(&mut out.gr, dim);
            resize_zero(&mut out.gt, 2 * dim);
            out.ga.clear();
            out.gb.clear();
            out.gc.clear();
            for j in 0..dim {
                // (p, q) = ∂score/∂(x_j, y_j)
                let (p, q) = match norm {
                    Norm::L1 => {
                        if mods[j] == 0.0 {
                            (0.0, 0.0)
                        } else {
                            (xs[j] / mods[j], ys[j] / mods[j])
                        }
                    }
                    Norm::L2 => {
                        if score == 0.0 {
                            (0.0, 0.0)
                        } else {
                            (xs[j] / score, ys[j] / score)
                        }
                    }
                };
                let (sin, cos) = rows.r[j].sin_cos();
                out.gh[2 * j] = p * cos + q * sin;
                out.gh[2 * j + 1] = -p * sin + q * cos;
                out.gt[2 * j] = -p;
                out.gt[2 * j + 1] = -q;
                // ∂x/∂φ = −(y + t_im), ∂y/∂φ = x + t_re
                out.gr[j] =
                    -p * (ys[j] + rows.t[2 * j + 1]) + q * (xs[j] + rows.t[2 * j]);
            }
            score
        }
    }
}

/// Row-keyed dense gradient accumulator.
#[derive(Default)]
pub(crate) struct GradAccum {
    map: BTreeMap<RowKey, Vec<f64>>,
}

impl GradAccum {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_row(&mut self, key: RowKey, grad: &[f64], weight: f64) {
        let buf = self
            .map
            .entry(key)
            .or_insert_with(|| vec![0.0; grad.len()]);
        for (b, &g) in buf.iter_mut().zip(grad) {
            *b += weight * g;
        }
    }

    /// Fold one triple's per-row gradients in, scaled by `weight`.
    pub fn add_triple(&mut self, kind: ModelKind, t: &Triple, tg: &TripleGrad, weight: f64) {
        self.add_row(RowKey::new(ArrayTag::Entity, t.head), &tg.gh, weight);
        self.add_row(RowKey::new(ArrayTag::Relation, t.relation), &tg.gr, weight);
        self.add_row(RowKey::new(ArrayTag::Entity, t.tail), &tg.gt, weight);
        match kind {
            ModelKind::TransE | ModelKind::RotatE => {}
            ModelKind::TransH => {
                self.add_row(RowKey::new(ArrayTag::RelAux, t.relation), &tg.ga, weight);
            }
            ModelKind::TransD => {
                self.add_row(RowKey::new(ArrayTag::RelAux, t.relation), &tg.ga, weight);
                self.add_row(RowKey::new(ArrayTag::EntAux, t.head), &tg.gb, weight);
                self.add_row(RowKey::new(ArrayTag::EntAux, t.tail), &tg.gc, weight);
            }
        }
    }

    pub fn into_sparse(self) -> SparseVec {
        let mut entries = Vec::new();
        for (key, row) in self.map {
            for (col, val) in row.into_iter().enumerate() {
                entries.push((ParamSlot::new(key.tag, key.row as usize, col), val));
            }
        }
        SparseVec::from_sorted(entries)
    }
}

/// Loss and gradient of the summed hinge over explicit pairs, at `θ + delta`.
pub(crate) fn pairs_loss_grad(
    m: &EmbeddingModel,
    delta: &DeltaView,
    pairs: &[(Triple, Triple)],
) -> (f64, SparseVec) {
    let mut acc = GradAccum::new();
    let mut rows = TripleRows::default();
    let mut tg = TripleGrad::default();
    let mut neg_tg = TripleGrad::default();
    let mut loss = 0.0;
    for (pos, neg) in pairs {
        gather_triple(m, delta, pos, &mut rows);
        let fp = grad_rows(m.kind, m.norm, m.dim, &rows, &mut tg);
        gather_triple(m, delta, neg, &mut rows);
        let fneg = grad_rows(m.kind, m.norm, m.dim, &rows, &mut neg_tg);
        let t = fp - fneg + m.margin;
        if t.is_nan() {
            // surface blown-up parameters instead of clamping NaN to zero
            loss = f64::NAN;
        } else if t > 0.0 {
            loss += t;
            acc.add_triple(m.kind, pos, &tg, 1.0);
            acc.add_triple(m.kind, neg, &neg_tg, -1.0);
        }
    }
    (loss, acc.into_sparse())
}

/// Gradient of the summed hinge over explicit pairs, evaluated at `θ + delta`.
pub(crate) fn pairs_grad(
    m: &EmbeddingModel,
    delta: &DeltaView,
    pairs: &[(Triple, Triple)],
) -> SparseVec {
    pairs_loss_grad(m, delta, pairs).1
}

/// Gradient of [`margin_loss`](crate::score::margin_loss) with respect to every
/// parameter the active pairs touch.
pub fn analytic_grad(
    m: &EmbeddingModel,
    pos: &[Triple],
    negs: &[NegativeSample],
) -> Result<SparseVec> {
    for t in pos {
        validate_triple(m, t)?;
    }
    for n in negs {
        validate_triple(m, &n.corrupted)?;
    }
    let pairs = build_pairs(pos, negs)?;
    Ok(pairs_grad(m, &DeltaView::None, &pairs))
}
