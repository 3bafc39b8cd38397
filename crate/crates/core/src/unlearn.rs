//! Influence-function unlearning.
//!
//! Removing a triple set `T_d` from a trained model shifts the optimum by
//! approximately `H⁻¹v`, where `v` is the gradient of the deleted triples'
//! loss at the trained parameters and `H` the Hessian of the retained loss.
//! Everything here is about computing that product cheaply, under three
//! regimes that trade fidelity for speed:
//!
//! * **Kgif** — analytic `v`, inverse-Hessian–vector product by Neumann
//!   iteration, each step applying the true Hessian through central-difference
//!   gradients of the remaining graph's loss.
//! * **WfKgif** — analytic `v`, but the Hessian is replaced by the rank-one
//!   curvature surrogate `vvᵀ + γI`, whose inverse action has a closed form;
//!   the Neumann recurrence runs against the surrogate and never touches the
//!   remaining graph.
//! * **ZeroFisher** — like WfKgif, with `v` itself estimated purely from loss
//!   values by per-coordinate finite differences over the deletion loss's
//!   sparse support: no gradients of any kind, no computation graph.
//!
//! The final update is masked to the K-hop neighborhood of the deleted
//! triples and scaled down before application; the input model is never
//! mutated.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::pairs_grad;
use crate::graph::{
    khop_neighborhood, remove_triples, sample_negatives, DeletionRequest, KnowledgeGraph,
    NegativeSample, Triple,
};
use crate::model::{EmbeddingModel, ModelKind};
use crate::rss::peak_rss_bytes;
use crate::score::{build_pairs, pair_term, validate_triple, DeltaView, TripleRows};
use crate::sparse::{ArrayTag, ParamSlot, RowKey, SparseVec};

/// How the influence update is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Kgif,
    WfKgif,
    #[serde(rename = "zerofisher")]
    ZeroFisher,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kgif" => Ok(Method::Kgif),
            "wf-kgif" => Ok(Method::WfKgif),
            "zerofisher" => Ok(Method::ZeroFisher),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected kgif|wf-kgif|zerofisher)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Kgif => "kgif",
            Method::WfKgif => "wf-kgif",
            Method::ZeroFisher => "zerofisher",
        };
        f.write_str(s)
    }
}

/// Finite-difference stencil for zeroth-order gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdMode {
    /// `(L(θ+εe) − L(θ−εe)) / 2ε` — error `O(ε²)`.
    Central,
    /// `(L(θ+εe) − L(θ)) / ε` — error `O(ε)`.
    Forward,
    /// `(L(θ) − L(θ−εe)) / ε` — error `O(ε)`.
    Backward,
}

impl std::str::FromStr for FdMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central" => Ok(FdMode::Central),
            "forward" => Ok(FdMode::Forward),
            "backward" => Ok(FdMode::Backward),
            other => Err(Error::InvalidArgument(format!(
                "unknown fd mode {other:?} (expected central|forward|backward)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct UnlearnConfig {
    pub method: Method,
    /// Neumann recursion depth `s`.
    pub iters: usize,
    /// Damping `γ` added to the curvature surrogate.
    pub damping: f64,
    /// Coefficient `η_step` on the Hessian term inside the recurrence.
    pub step: f64,
    /// Final divisor `η_scale` on the applied update.
    pub scale: f64,
    /// Finite-difference step `ε` for zeroth-order gradients.
    pub noise: f64,
    /// Neighborhood radius for the update mask; `None` = unbounded.
    pub khop: Option<usize>,
    pub fd_mode: FdMode,
    /// Finite-difference step for Hessian-vector products, scaled by `1/‖u‖₂`.
    pub hvp_delta: f64,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            method: Method::ZeroFisher,
            iters: 100,
            damping: 1.0,
            step: 0.01,
            scale: 10.0,
            noise: 1e-5,
            khop: Some(1),
            fd_mode: FdMode::Central,
            hvp_delta: 1e-4,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be a positive real, got {v}"
                )))
            }
        };
        positive("damping", self.damping)?;
        positive("step", self.step)?;
        positive("scale", self.scale)?;
        positive("noise", self.noise)?;
        positive("hvp_delta", self.hvp_delta)?;
        if self.method == Method::Kgif && self.iters < 1 {
            return Err(Error::InvalidArgument(
                "iters must be >= 1 for the iterative inverse".into(),
            ));
        }
        Ok(())
    }
}

/// The deletion loss `L_{T_d}` with one frozen negative draw, plus the
/// bookkeeping to re-evaluate it cheaply under single-slot displacements.
///
/// Freezing matters: every loss value, finite-difference probe, and gradient
/// inside one unlearning run must query the *same* function, so the negative
/// samples are drawn once at construction and never redrawn.
pub struct DeletionClosure<'a> {
    m: &'a EmbeddingModel,
    pairs: Vec<(Triple, Triple)>,
    base_terms: Vec<f64>,
    base_loss: f64,
    /// Touched parameter row → indices of pairs whose score reads that row.
    by_row: BTreeMap<RowKey, Vec<usize>>,
    support: Vec<ParamSlot>,
}

fn triple_rows(kind: ModelKind, t: &Triple, out: &mut Vec<RowKey>) {
    out.push(RowKey::new(ArrayTag::Entity, t.head));
    out.push(RowKey::new(ArrayTag::Entity, t.tail));
    out.push(RowKey::new(ArrayTag::Relation, t.relation));
    match kind {
        ModelKind::TransE | ModelKind::RotatE => {}
        ModelKind::TransH => out.push(RowKey::new(ArrayTag::RelAux, t.relation)),
        ModelKind::TransD => {
            out.push(RowKey::new(ArrayTag::RelAux, t.relation));
            out.push(RowKey::new(ArrayTag::EntAux, t.head));
            out.push(RowKey::new(ArrayTag::EntAux, t.tail));
        }
    }
}

impl<'a> DeletionClosure<'a> {
    /// Freeze the deletion loss: one negative per deleted triple, drawn from
    /// `seed`.
    pub fn new(
        m: &'a EmbeddingModel,
        g: &KnowledgeGraph,
        req: &DeletionRequest,
        seed: u64,
    ) -> Result<Self> {
        if req.resolved.is_empty() {
            return Err(Error::EmptyDeletion);
        }
        let negs: Vec<NegativeSample> = sample_negatives(g, &req.resolved, 1, seed)?;
        let positives: Vec<Triple> = req.resolved.iter().map(|&i| g.triple(i)).collect();
        for t in &positives {
            validate_triple(m, t)?;
        }
        for n in &negs {
            validate_triple(m, &n.corrupted)?;
        }
        let pairs = build_pairs(&positives, &negs)?;
        let mut rows = TripleRows::default();
        let mut base_terms = Vec::with_capacity(pairs.len());
        let mut base_loss = 0.0;
        for pair in &pairs {
            let t = pair_term(m, &DeltaView::None, pair, &mut rows);
            base_terms.push(t);
            base_loss += t;
        }
        let mut by_row: BTreeMap<RowKey, Vec<usize>> = BTreeMap::new();
        let mut keys = Vec::new();
        for (pi, (pos, neg)) in pairs.iter().enumerate() {
            keys.clear();
            triple_rows(m.kind, pos, &mut keys);
            triple_rows(m.kind, neg, &mut keys);
            keys.sort();
            keys.dedup();
            for &k in &keys {
                by_row.entry(k).or_default().push(pi);
            }
        }
        let mut support = Vec::new();
        for key in by_row.keys() {
            let width = m.width(key.tag);
            for col in 0..width {
                support.push(ParamSlot::new(key.tag, key.row as usize, col));
            }
        }
        Ok(DeletionClosure {
            m,
            pairs,
            base_terms,
            base_loss,
            by_row,
            support,
        })
    }

    /// `L_{T_d}(θ̂)` — the loss at the trained parameters.
    pub fn base_loss(&self) -> f64 {
        self.base_loss
    }

    /// Every slot of every parameter row the loss reads, sorted.
    pub fn support(&self) -> &[ParamSlot] {
        &self.support
    }

    /// The touched parameter rows, sorted.
    pub fn rows(&self) -> impl Iterator<Item = RowKey> + '_ {
        self.by_row.keys().copied()
    }

    pub(crate) fn pairs(&self) -> &[(Triple, Triple)] {
        &self.pairs
    }

    /// `L_{T_d}(θ̂ + delta)` under an arbitrary sparse displacement.
    pub fn eval(&self, delta: &SparseVec) -> f64 {
        let dv = DeltaView::Sparse(delta);
        let mut rows = TripleRows::default();
        self.pairs
            .iter()
            .map(|p| pair_term(self.m, &dv, p, &mut rows))
            .sum()
    }

    /// `L_{T_d}(θ̂ + off·e_slot)` — single-coordinate displacement.
    pub fn eval_slot(&self, slot: ParamSlot, off: f64) -> f64 {
        self.eval_slot_with(slot, off, &mut TripleRows::default())
    }

    /// As [`Self::eval_slot`] with a caller-owned scratch buffer, rescoring
    /// only the pairs that read the slot's row. Exactly equal (up to
    /// rounding) to [`Self::eval`] on a one-slot displacement, but
    /// O(affected pairs) instead of O(all pairs).
    pub(crate) fn eval_slot_with(
        &self,
        slot: ParamSlot,
        off: f64,
        rows: &mut TripleRows,
    ) -> f64 {
        let Some(affected) = self.by_row.get(&slot.row_key()) else {
            return self.base_loss;
        };
        let dv = DeltaView::Slot(slot, off);
        let mut loss = self.base_loss;
        for &pi in affected {
            loss -= self.base_terms[pi];
            loss += pair_term(self.m, &dv, &self.pairs[pi], rows);
        }
        loss
    }
}

/// Finite-difference gradient estimate over an explicit slot evaluator.
///
/// `eval(slot, off)` must return the loss under a single-coordinate
/// displacement; `base` is the loss at zero displacement.
fn fd_estimate(
    mut eval: impl FnMut(ParamSlot, f64) -> f64,
    base: f64,
    support: &[ParamSlot],
    eps: f64,
    mode: FdMode,
) -> Result<SparseVec> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be a positive real, got {eps}"
        )));
    }
    if support.is_empty() {
        return Err(Error::InvalidArgument(
            "zeroth-order gradient needs a non-empty support".into(),
        ));
    }
    let mut entries = Vec::with_capacity(support.len());
    for &slot in support {
        let g = match mode {
            FdMode::Central => (eval(slot, eps) - eval(slot, -eps)) / (2.0 * eps),
            FdMode::Forward => (eval(slot, eps) - base) / eps,
            FdMode::Backward => (base - eval(slot, -eps)) / eps,
        };
        if !g.is_finite() {
            return Err(Error::NonFiniteProbe {
                slot: slot.to_string(),
            });
        }
        entries.push((slot, g));
    }
    Ok(SparseVec::from_unsorted(entries))
}

/// Estimate `∇L_{T_d}` from loss values alone: one finite difference per
/// support slot, never touching gradient code.
pub fn zeroth_order_grad(
    closure: &DeletionClosure,
    support: &[ParamSlot],
    eps: f64,
    mode: FdMode,
) -> Result<SparseVec> {
    let mut rows = TripleRows::default();
    fd_estimate(
        |slot, off| closure.eval_slot_with(slot, off, &mut rows),
        closure.base_loss(),
        support,
        eps,
        mode,
    )
}

/// Exact `v = ∇L_{T_d}(θ̂)` with the same frozen negatives the closure draws,
/// densified onto the closure's support so both gradient routes report the
/// same touched-slot set.
pub fn analytic_deletion_grad(
    m: &EmbeddingModel,
    g: &KnowledgeGraph,
    req: &DeletionRequest,
    seed: u64,
) -> Result<SparseVec> {
    let closure = DeletionClosure::new(m, g, req, seed)?;
    let grad = pairs_grad(m, &DeltaView::None, closure.pairs());
    Ok(grad.densify_onto(closure.support()))
}

/// The true Hessian of a frozen remaining-graph batch, applied to vectors by
/// central differences of analytic gradients.
pub struct HvpOperator<'a> {
    m: &'a EmbeddingModel,
    pairs: Vec<(Triple, Triple)>,
    delta: f64,
    /// Gradient evaluations of the remaining-graph loss (2 per application).
    pub grad_calls: usize,
    /// Completed operator applications.
    pub calls: usize,
}

impl<'a> HvpOperator<'a> {
    /// Freeze the batch: every remaining triple with one seeded negative.
    pub fn from_graph(
        m: &'a EmbeddingModel,
        g_remaining: &KnowledgeGraph,
        hvp_delta: f64,
        seed: u64,
    ) -> Result<Self> {
        let indices: Vec<usize> = (0..g_remaining.n_triples()).collect();
        if indices.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot form a curvature batch from an empty remaining graph".into(),
            ));
        }
        let negs = sample_negatives(g_remaining, &indices, 1, seed)?;
        let positives: Vec<Triple> = indices.iter().map(|&i| g_remaining.triple(i)).collect();
        for t in positives.iter().chain(negs.iter().map(|n| &n.corrupted)) {
            validate_triple(m, t)?;
        }
        let pairs = build_pairs(&positives, &negs)?;
        Ok(HvpOperator {
            m,
            pairs,
            delta: hvp_delta,
            grad_calls: 0,
            calls: 0,
        })
    }

    /// Explicit pair list, for oracle tests against dense Hessians.
    pub fn from_pairs(m: &'a EmbeddingModel, pairs: Vec<(Triple, Triple)>, hvp_delta: f64) -> Self {
        HvpOperator {
            m,
            pairs,
            delta: hvp_delta,
            grad_calls: 0,
            calls: 0,
        }
    }

    /// `H·u ≈ (∇L(θ̂+δu) − ∇L(θ̂−δu)) / 2δ` with `δ = hvp_delta/‖u‖₂`.
    pub fn apply(&mut self, u: &SparseVec) -> Result<SparseVec> {
        let norm = u.norm2();
        if norm == 0.0 {
            return Ok(SparseVec::new());
        }
        let delta = self.delta / norm;
        let up = u.scale(delta);
        let dn = u.scale(-delta);
        let gp = pairs_grad(self.m, &DeltaView::Sparse(&up), &self.pairs);
        let gm = pairs_grad(self.m, &DeltaView::Sparse(&dn), &self.pairs);
        self.grad_calls += 2;
        self.calls += 1;
        Ok(gp.add_scaled(-1.0, &gm).scale(1.0 / (2.0 * delta)))
    }
}

/// One-shot convenience over [`HvpOperator`].
pub fn hvp_remaining(
    m: &EmbeddingModel,
    g_remaining: &KnowledgeGraph,
    u: &SparseVec,
    hvp_delta: f64,
    seed: u64,
) -> Result<SparseVec> {
    HvpOperator::from_graph(m, g_remaining, hvp_delta, seed)?.apply(u)
}

/// Result of an iterative inverse: the final iterate and the per-iteration
/// step sizes `‖u_j − u_{j−1}‖₂`.
#[derive(Debug, Clone)]
pub struct IhvpResult {
    pub u: SparseVec,
    pub residuals: Vec<f64>,
}

impl IhvpResult {
    pub fn iters_run(&self) -> usize {
        self.residuals.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// Iterates become untrustworthy past this growth factor over `‖v‖`.
const DIVERGENCE_FACTOR: f64 = 1e8;

fn divergence_guard(u: &SparseVec, v_norm: f64, iter: usize) -> Result<()> {
    let norm = u.norm2();
    let bound = DIVERGENCE_FACTOR * v_norm;
    if norm > bound {
        return Err(Error::Divergence { iter, norm, bound });
    }
    Ok(())
}

/// Neumann-series inverse: iterate `u_j = v + u_{j−1} − η_step·H(u_{j−1})`
/// from `u_0 = v`. At a fixed point `η_step·H·u = v`, so the converged
/// iterate estimates `H⁻¹v / η_step`; multiply by `η_step` to recover `H⁻¹v`.
pub fn ihvp_neumann(
    v: &SparseVec,
    mut hvp: impl FnMut(&SparseVec) -> Result<SparseVec>,
    s: usize,
    eta_step: f64,
) -> Result<IhvpResult> {
    if s < 1 {
        return Err(Error::InvalidArgument(
            "the iterative inverse needs at least one iteration".into(),
        ));
    }
    let v_norm = v.norm2();
    if v_norm == 0.0 {
        return Ok(IhvpResult {
            u: SparseVec::new(),
            residuals: Vec::new(),
        });
    }
    let mut u = v.clone();
    let mut residuals = Vec::with_capacity(s);
    for iter in 1..=s {
        let hu = hvp(&u)?;
        let next = v.add(&u).add_scaled(-eta_step, &hu);
        residuals.push(next.add_scaled(-1.0, &u).norm2());
        u = next;
        divergence_guard(&u, v_norm, iter)?;
    }
    Ok(IhvpResult {
        u,
        residuals,
    })
}

/// Closed-form `(γI + vvᵀ)⁻¹ v`, which the rank-one inverse identity
/// collapses to `v / (γ + vᵀv)`.
pub fn ihvp_woodfisher(v: &SparseVec, gamma: f64) -> Result<SparseVec> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "damping must be a positive real, got {gamma}"
        )));
    }
    Ok(v.scale(1.0 / (gamma + v.dot(v))))
}

/// The same expression with the identity's subtraction mis-printed as an
/// addition: `v/γ + (vᵀv)·v / (γ(γ+vᵀv))`. Kept as a diagnostic so the
/// difference is demonstrable — `(γI + vvᵀ)·result` misses `v` by
/// `(2vᵀv/γ)·v`, which the residual oracle in the acceptance suite shows.
pub fn ihvp_woodfisher_additive(v: &SparseVec, gamma: f64) -> Result<SparseVec> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "damping must be a positive real, got {gamma}"
        )));
    }
    let vv = v.dot(v);
    Ok(v.scale(1.0 / gamma + vv / (gamma * (gamma + vv))))
}

/// Neumann recurrence with the rank-one curvature surrogate
/// `H̃u = v(vᵀu) + γu` in place of the true Hessian, started from the
/// closed-form inverse. Each iteration costs one dot product and two scaled
/// additions over the support — no Hessian, no remaining-graph access.
pub fn ihvp_damped_iterate(
    v: &SparseVec,
    gamma: f64,
    s: usize,
    eta_step: f64,
) -> Result<IhvpResult> {
    let mut u = ihvp_woodfisher(v, gamma)?;
    let v_norm = v.norm2();
    let mut residuals = Vec::with_capacity(s);
    for iter in 1..=s {
        // u' = v + u − η(v(vᵀu) + γu) = (1 − η·vᵀu)·v + (1 − ηγ)·u
        let c = v.dot(&u);
        let next = v.scale(1.0 - eta_step * c).add_scaled(1.0 - eta_step * gamma, &u);
        residuals.push(next.add_scaled(-1.0, &u).norm2());
        u = next;
        divergence_guard(&u, v_norm, iter)?;
    }
    Ok(IhvpResult { u, residuals })
}

/// Wall time of each unlearning phase, milliseconds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseMillis {
    pub grad: f64,
    pub ihvp: f64,
    pub apply: f64,
}

impl PhaseMillis {
    pub fn total(&self) -> f64 {
        self.grad + self.ihvp + self.apply
    }
}

/// What one unlearning run did and what it cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnlearnStats {
    pub method: Method,
    pub phase_ms: PhaseMillis,
    /// Slots in the deletion gradient's support.
    pub support_size: usize,
    /// Slots the K-hop mask admits.
    pub mask_size: usize,
    pub iters_run: usize,
    pub final_residual: f64,
    /// L2 norm of the applied (masked, scaled) update.
    pub update_norm: f64,
    /// Analytic gradient evaluations over remaining-graph batches.
    /// Must be zero for the surrogate methods.
    pub remaining_grad_calls: usize,
    /// True-Hessian–vector products. Must be zero for the surrogate methods.
    pub hvp_calls: usize,
    pub peak_rss_bytes: Option<u64>,
}

fn mask_rows(
    m: &EmbeddingModel,
    g: &KnowledgeGraph,
    req: &DeletionRequest,
    closure: &DeletionClosure,
    khop: Option<usize>,
) -> std::collections::BTreeSet<RowKey> {
    let k = khop.unwrap_or(usize::MAX);
    let (ents, rels) = khop_neighborhood(g, &req.resolved, k);
    let mut rows = std::collections::BTreeSet::new();
    for &e in &ents {
        rows.insert(RowKey::new(ArrayTag::Entity, e));
        if m.has_array(ArrayTag::EntAux) {
            rows.insert(RowKey::new(ArrayTag::EntAux, e));
        }
    }
    for &r in &rels {
        rows.insert(RowKey::new(ArrayTag::Relation, r));
        if m.has_array(ArrayTag::RelAux) {
            rows.insert(RowKey::new(ArrayTag::RelAux, r));
        }
    }
    // the frozen negatives carry gradient too; their rows are part of the
    // minimal faithful mask at every K
    rows.extend(closure.rows());
    rows
}

/// Compute and apply the influence update for one deletion request.
///
/// Phases: estimate the deletion gradient `v`; run the configured inverse to
/// get `u ≈ H⁻¹v/η_step` and rescale by `η_step`; mask to the K-hop
/// neighborhood; apply `θ ← θ̂ + u/η_scale`. The input model is untouched;
/// stats record phase times, sizes, and the instrumentation counters that
/// prove the surrogate methods never touched the remaining graph.
pub fn unlearn(
    m: &EmbeddingModel,
    g: &KnowledgeGraph,
    req: &DeletionRequest,
    cfg: &UnlearnConfig,
    seed: u64,
) -> Result<(EmbeddingModel, UnlearnStats)> {
    cfg.validate()?;
    let mut remaining_grad_calls = 0usize;
    let mut hvp_calls = 0usize;

    let t_grad = Instant::now();
    let closure = DeletionClosure::new(m, g, req, seed)?;
    let v = match cfg.method {
        Method::Kgif | Method::WfKgif => {
            pairs_grad(m, &DeltaView::None, closure.pairs()).densify_onto(closure.support())
        }
        Method::ZeroFisher => {
            zeroth_order_grad(&closure, closure.support(), cfg.noise, cfg.fd_mode)?
        }
    };
    let grad_ms = t_grad.elapsed().as_secs_f64() * 1e3;

    let mut stats = UnlearnStats {
        method: cfg.method,
        phase_ms: PhaseMillis {
            grad: grad_ms,
            ihvp: 0.0,
            apply: 0.0,
        },
        support_size: v.len(),
        mask_size: 0,
        iters_run: 0,
        final_residual: 0.0,
        update_norm: 0.0,
        remaining_grad_calls: 0,
        hvp_calls: 0,
        peak_rss_bytes: peak_rss_bytes(),
    };

    if v.norm2() == 0.0 {
        // nothing to unlearn: every deletion pair is clamped
        return Ok((m.clone(), stats));
    }

    let t_ihvp = Instant::now();
    let ihvp = match cfg.method {
        Method::Kgif => {
            let remaining = remove_triples(g, req)?;
            let hvp_seed = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut op = HvpOperator::from_graph(m, &remaining, cfg.hvp_delta, hvp_seed)?;
            let result = ihvp_neumann(&v, |u| op.apply(u), cfg.iters, cfg.step)?;
            remaining_grad_calls = op.grad_calls;
            hvp_calls = op.calls;
            result
        }
        Method::WfKgif | Method::ZeroFisher => {
            ihvp_damped_iterate(&v, cfg.damping, cfg.iters, cfg.step)?
        }
    };
    // the recurrence estimates H⁻¹v/η_step; rescale so the update is an
    // η_step-independent H⁻¹v estimate
    let mut update = ihvp.u.scale(cfg.step);
    stats.iters_run = ihvp.iters_run();
    stats.final_residual = ihvp.final_residual();
    stats.phase_ms.ihvp = t_ihvp.elapsed().as_secs_f64() * 1e3;

    let t_apply = Instant::now();
    let mask = mask_rows(m, g, req, &closure, cfg.khop);
    stats.mask_size = mask
        .iter()
        .map(|k| m.width(k.tag))
        .sum();
    update.retain(|slot| mask.contains(&slot.row_key()));
    let mut out = m.clone();
    for &(slot, val) in update.iter() {
        let row = out.row_mut(slot.row_key());
        let i = slot.col as usize;
        row[i] = (row[i] as f64 + val / cfg.scale) as f32;
    }
    if out.kind == ModelKind::TransH {
        out.renormalize_all_normals();
    }
    stats.update_norm = update.norm2() / cfg.scale;
    stats.remaining_grad_calls = remaining_grad_calls;
    stats.hvp_calls = hvp_calls;
    stats.phase_ms.apply = t_apply.elapsed().as_secs_f64() * 1e3;
    stats.peak_rss_bytes = peak_rss_bytes();
    Ok((out, stats))
}
