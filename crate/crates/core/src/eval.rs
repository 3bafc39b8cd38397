//! Link-prediction metrics, parameter distances, and 2-D projections.
//!
//! Ranking follows the standard corruption protocol: for each test triple,
//! every entity is substituted into one side, candidates are ordered by
//! score (lower = better), and the true entity's rank feeds MRR and Hit@k.
//! Both sides are ranked, so a test set of N triples yields 2N ranks. The
//! filtered setting drops candidates that form a different known-true triple.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DeletionRequest, KnowledgeGraph, Triple};
use crate::model::EmbeddingModel;
use crate::score::{score_with, validate_triple, DeltaView, TripleRows};
use crate::sparse::ArrayTag;

/// Which entity of the test triple gets corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSetting {
    Raw,
    Filtered,
}

impl std::str::FromStr for EvalSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(EvalSetting::Raw),
            "filtered" => Ok(EvalSetting::Filtered),
            other => Err(Error::InvalidArgument(format!(
                "unknown eval setting {other:?} (expected raw|filtered)"
            ))),
        }
    }
}

/// How equal-scoring candidates share a rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// `1 + better + ties/2`, rounded half up — the reported setting.
    #[default]
    Midpoint,
    /// Ties resolve in the true entity's favor.
    Optimistic,
    /// Ties resolve against the true entity.
    Pessimistic,
}

/// Hit@k cutoffs reported everywhere.
pub const HIT_LEVELS: [usize; 3] = [1, 3, 10];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: EvalSetting,
    /// Number of test triples (each contributes two ranks).
    pub n_test: usize,
    /// Absent when the test set is empty.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mrr: Option<f64>,
    /// Hit@k for k in [`HIT_LEVELS`]; absent when the test set is empty.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hits: Option<BTreeMap<usize, f64>>,
    /// Parameter-space distance to a reference model, when one was given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2_to_reference: Option<f64>,
    pub wall_ms: f64,
}

impl EvalReport {
    fn empty(setting: EvalSetting) -> Self {
        EvalReport {
            setting,
            n_test: 0,
            mrr: None,
            hits: None,
            l2_to_reference: None,
            wall_ms: 0.0,
        }
    }
}

/// Rank the true entity among all corruptions of one side, midpoint ties.
pub fn rank_triple(
    m: &EmbeddingModel,
    g_filter: &KnowledgeGraph,
    t: &Triple,
    side: Side,
    setting: EvalSetting,
) -> Result<usize> {
    rank_triple_with_rule(m, g_filter, t, side, setting, TieRule::Midpoint)
}

/// As [`rank_triple`] with an explicit tie rule (diagnostics).
pub fn rank_triple_with_rule(
    m: &EmbeddingModel,
    g_filter: &KnowledgeGraph,
    t: &Triple,
    side: Side,
    setting: EvalSetting,
    rule: TieRule,
) -> Result<usize> {
    validate_triple(m, t)?;
    let mut rows = TripleRows::default();
    let true_score = score_with(m, &DeltaView::None, t, &mut rows);
    let true_entity = match side {
        Side::Head => t.head,
        Side::Tail => t.tail,
    };
    let mut better = 0usize;
    let mut ties = 0usize;
    for e in 0..m.n_entities {
        if e == true_entity {
            continue;
        }
        let candidate = match side {
            Side::Head => Triple::new(e, t.relation, t.tail),
            Side::Tail => Triple::new(t.head, t.relation, e),
        };
        if setting == EvalSetting::Filtered && g_filter.contains(&candidate) {
            continue;
        }
        let s = score_with(m, &DeltaView::None, &candidate, &mut rows);
        if s < true_score {
            better += 1;
        } else if s == true_score {
            ties += 1;
        }
    }
    Ok(match rule {
        TieRule::Midpoint => 1 + better + (ties as f64 / 2.0).round() as usize,
        TieRule::Optimistic => 1 + better,
        TieRule::Pessimistic => 1 + better + ties,
    })
}

/// MRR and Hit@k from a bag of ranks.
pub(crate) fn metrics_from_ranks(ranks: &[usize]) -> (f64, BTreeMap<usize, f64>) {
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let hits = HIT_LEVELS
        .iter()
        .map(|&k| {
            let frac = ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
            (k, frac)
        })
        .collect();
    (mrr, hits)
}

/// Rank every test triple on both sides and aggregate.
pub fn evaluate(
    m: &EmbeddingModel,
    test: &[Triple],
    g_filter: &KnowledgeGraph,
    setting: EvalSetting,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidArgument(
            "evaluate needs at least one test triple".into(),
        ));
    }
    let started = Instant::now();
    let mut ranks = Vec::with_capacity(2 * test.len());
    for t in test {
        ranks.push(rank_triple(m, g_filter, t, Side::Head, setting)?);
        ranks.push(rank_triple(m, g_filter, t, Side::Tail, setting)?);
    }
    let (mrr, hits) = metrics_from_ranks(&ranks);
    Ok(EvalReport {
        setting,
        n_test: test.len(),
        mrr: Some(mrr),
        hits: Some(hits),
        l2_to_reference: None,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Euclidean distance between two models' full parameter vectors, optionally
/// restricted to the given entity/relation rows.
pub fn l2_distance(
    a: &EmbeddingModel,
    b: &EmbeddingModel,
    restrict: Option<(&BTreeSet<usize>, &BTreeSet<usize>)>,
) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(
            "models differ in kind, dimension, or vocabulary sizes".into(),
        ));
    }
    let row_dist_sq = |xa: &[f32], xb: &[f32]| -> f64 {
        xa.iter()
            .zip(xb)
            .map(|(p, q)| (*p as f64 - *q as f64).powi(2))
            .sum()
    };
    let mut total = 0.0;
    let arrays: [(ArrayTag, bool); 4] = [
        (ArrayTag::Entity, true),
        (ArrayTag::EntAux, true),
        (ArrayTag::Relation, false),
        (ArrayTag::RelAux, false),
    ];
    for (tag, is_entity) in arrays {
        if !a.has_array(tag) {
            continue;
        }
        for row in 0..a.rows(tag) {
            if let Some((ents, rels)) = restrict {
                let wanted = if is_entity {
                    ents.contains(&row)
                } else {
                    rels.contains(&row)
                };
                if !wanted {
                    continue;
                }
            }
            let key = crate::sparse::RowKey::new(tag, row);
            total += row_dist_sq(a.row(key), b.row(key));
        }
    }
    Ok(total.sqrt())
}

/// Evaluate one model separately on the deleted and the remaining triples,
/// both filtered against the full original graph.
pub fn split_eval(
    m: &EmbeddingModel,
    g: &KnowledgeGraph,
    req: &DeletionRequest,
    setting: EvalSetting,
) -> Result<(EvalReport, EvalReport)> {
    let deleted_set: BTreeSet<usize> = req.resolved.iter().copied().collect();
    let mut deleted = Vec::with_capacity(deleted_set.len());
    let mut remaining = Vec::with_capacity(g.n_triples() - deleted_set.len());
    for i in 0..g.n_triples() {
        if deleted_set.contains(&i) {
            deleted.push(g.triple(i));
        } else {
            remaining.push(g.triple(i));
        }
    }
    let eval_side = |triples: &[Triple]| -> Result<EvalReport> {
        if triples.is_empty() {
            Ok(EvalReport::empty(setting))
        } else {
            evaluate(m, triples, g, setting)
        }
    };
    Ok((eval_side(&deleted)?, eval_side(&remaining)?))
}

/// 2-D principal-component projection of selected entity embeddings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Projection {
    /// `(entity id, first component, second component)` per input id.
    pub points: Vec<(usize, f64, f64)>,
    /// Set when the data had fewer than two informative directions; the
    /// missing coordinates are zero.
    pub rank_deficient: bool,
}

const POWER_TOL: f64 = 1e-9;
const POWER_MAX_ITERS: usize = 1000;

/// Power-method PCA onto the top two components.
///
/// Components are sign-fixed so each one's largest-magnitude loading is
/// positive, making the output reproducible across runs.
pub fn project_2d(
    m: &EmbeddingModel,
    entity_ids: &[usize],
    seed: u64,
) -> Result<Projection> {
    let width = m.ent_width();
    if entity_ids.len() < 2 {
        return Err(Error::InvalidArgument(
            "projection needs at least two entities".into(),
        ));
    }
    if width < 2 {
        return Err(Error::InvalidArgument(
            "projection needs embedding width of at least 2".into(),
        ));
    }
    for &e in entity_ids {
        if e >= m.n_entities {
            return Err(Error::UnknownId {
                what: "entity",
                id: e.to_string(),
            });
        }
    }
    let n = entity_ids.len();
    // centered data matrix, row per entity
    let mut data = vec![0.0f64; n * width];
    for (i, &e) in entity_ids.iter().enumerate() {
        let row = m.row(crate::sparse::RowKey::new(ArrayTag::Entity, e));
        for (j, &x) in row.iter().enumerate() {
            data[i * width + j] = x as f64;
        }
    }
    let mut mean = vec![0.0f64; width];
    for i in 0..n {
        for j in 0..width {
            mean[j] += data[i * width + j];
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    for i in 0..n {
        for j in 0..width {
            data[i * width + j] -= mean[j];
        }
    }

    // covariance action C·v = Xᵀ(X·v) without forming C
    let cov_apply = |v: &[f64], deflate: Option<(&[f64], f64)>| -> Vec<f64> {
        let mut xv = vec![0.0f64; n];
        for i in 0..n {
            xv[i] = (0..width).map(|j| data[i * width + j] * v[j]).sum();
        }
        let mut out = vec![0.0f64; width];
        for i in 0..n {
            for j in 0..width {
                out[j] += data[i * width + j] * xv[i];
            }
        }
        if let Some((u, lambda)) = deflate {
            let uv: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            for j in 0..width {
                out[j] -= lambda * uv * u[j];
            }
        }
        out
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut power = |deflate: Option<(&[f64], f64)>| -> (Vec<f64>, f64) {
        let mut v: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vn = norm(&v);
        for x in &mut v {
            *x /= vn;
        }
        for _ in 0..POWER_MAX_ITERS {
            let cv = cov_apply(&v, deflate);
            let cn = norm(&cv);
            if cn < 1e-300 {
                // no variance in this direction
                return (v, 0.0);
            }
            let next: Vec<f64> = cv.iter().map(|x| x / cn).collect();
            let delta: f64 = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            v = next;
            if delta < POWER_TOL {
                break;
            }
        }
        let cv = cov_apply(&v, deflate);
        let lambda: f64 = v.iter().zip(&cv).map(|(a, b)| a * b).sum();
        (v, lambda)
    };

    let (mut v1, l1) = power(None);
    let mut rank_deficient = false;
    let (mut v2, l2) = if l1 <= 1e-12 {
        // all points coincide: no informative direction at all
        rank_deficient = true;
        v1 = vec![0.0; width];
        (vec![0.0; width], 0.0)
    } else {
        let (v2, l2) = power(Some((&v1, l1)));
        if l2 <= 1e-12 * l1.max(1.0) {
            rank_deficient = true;
            (vec![0.0; width], 0.0)
        } else {
            (v2, l2)
        }
    };
    let _ = l2;

    // sign fix: the largest-magnitude loading points positive
    for comp in [&mut v1, &mut v2] {
        if let Some(extreme) = comp
            .iter()
            .copied()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        {
            if extreme < 0.0 {
                for x in comp.iter_mut() {
                    *x = -*x;
                }
            }
        }
    }

    let points = entity_ids
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let row = &data[i * width..(i + 1) * width];
            let x: f64 = row.iter().zip(&v1).map(|(a, b)| a * b).sum();
            let y: f64 = row.iter().zip(&v2).map(|(a, b)| a * b).sum();
            (e, x, y)
        })
        .collect();
    Ok(Projection {
        points,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{resolve_deletion, DeletionKind, Vocab};
    use crate::model::{init_model, EmbeddingModel, ModelKind, Norm};

    /// d=1 TransE model with entities on a line: the score of (h, r, t) is
    /// |x_h + r − x_t|, so ranks are readable by hand.
    fn line_model_rel(xs: &[f32], r: f32) -> EmbeddingModel {
        EmbeddingModel {
            kind: ModelKind::TransE,
            dim: 1,
            n_entities: xs.len(),
            n_relations: 1,
            margin: 1.0,
            norm: Norm::L1,
            entity_emb: xs.to_vec(),
            relation_emb: vec![r],
            rel_aux: None,
            ent_aux: None,
        }
    }

    fn line_model(xs: &[f32]) -> EmbeddingModel {
        line_model_rel(xs, 0.0)
    }

    fn graph_of(n_e: usize, triples: &[(usize, usize, usize)]) -> KnowledgeGraph {
        let mut e = Vocab::new();
        for i in 0..n_e {
            e.intern(&format!("e{i}"));
        }
        let mut r = Vocab::new();
        r.intern("r");
        KnowledgeGraph::new(
            e,
            r,
            triples.iter().map(|&(h, r, t)| Triple::new(h, r, t)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn strictly_best_candidate_ranks_first() {
        // relation shifts by +1, so a self-loop candidate no longer scores 0
        let g = graph_of(4, &[(0, 0, 1)]);
        let t = Triple::new(0, 0, 1);
        // tail candidates score |0 + 1 − x|: e0 → 1, e1 → 0 (true), e2 → 2, e3 → 4
        let m = line_model_rel(&[0.0, 1.0, 3.0, 5.0], 1.0);
        assert_eq!(
            rank_triple(&m, &g, &t, Side::Tail, EvalSetting::Raw).unwrap(),
            1
        );
        // nudge the true tail so exactly one candidate beats it, no ties:
        // e1 → 0.5 (true), e2 → 0.2 (better), e0 → 1, e3 → 3.5
        let m = line_model_rel(&[0.0, 1.5, 1.2, 4.5], 1.0);
        assert_eq!(
            rank_triple(&m, &g, &t, Side::Tail, EvalSetting::Raw).unwrap(),
            2
        );
        // head side on the same layout: |x + 1 − 1.5| → true e0 scores 0.5,
        // e1 → 1, e2 → 0.7, e3 → 4 — the true head is strictly best
        assert_eq!(
            rank_triple(&m, &g, &t, Side::Head, EvalSetting::Raw).unwrap(),
            1
        );
    }

    #[test]
    fn midpoint_tie_rounds_half_up() {
        // true tail tied with exactly one other candidate, none better
        let m = line_model(&[0.0, 0.0, 5.0]);
        let g = graph_of(3, &[(0, 0, 1)]);
        let t = Triple::new(0, 0, 1);
        // candidates: e0 → |0−0| = 0 (tie), e2 → 5; true score 0
        assert_eq!(
            rank_triple(&m, &g, &t, Side::Tail, EvalSetting::Raw).unwrap(),
            2
        );
        assert_eq!(
            rank_triple_with_rule(&m, &g, &t, Side::Tail, EvalSetting::Raw, TieRule::Optimistic)
                .unwrap(),
            1
        );
        assert_eq!(
            rank_triple_with_rule(
                &m,
                &g,
                &t,
                Side::Tail,
                EvalSetting::Raw,
                TieRule::Pessimistic
            )
            .unwrap(),
            2
        );
    }

    #[test]
    fn filtering_removes_known_true_competitors() {
        // true tail scores worst raw, but both competitors are known truths
        let m = line_model(&[0.0, 9.0, 1.0]);
        let g = graph_of(3, &[(0, 0, 0), (0, 0, 2), (0, 0, 1)]);
        let t = Triple::new(0, 0, 1);
        assert_eq!(
            rank_triple(&m, &g, &t, Side::Tail, EvalSetting::Raw).unwrap(),
            3
        );
        assert_eq!(
            rank_triple(&m, &g, &t, Side::Tail, EvalSetting::Filtered).unwrap(),
            1
        );
    }

    #[test]
    fn filtered_rank_never_exceeds_raw() {
        let g = graph_of(
            6,
            &[(0, 0, 1), (1, 0, 2), (2, 0, 3), (3, 0, 4), (4, 0, 5), (5, 0, 0)],
        );
        let m = init_model(ModelKind::TransE, &g, 3, 1.0, Norm::L2, 8).unwrap();
        for t in g.triples() {
            for side in [Side::Head, Side::Tail] {
                let raw = rank_triple(&m, &g, t, side, EvalSetting::Raw).unwrap();
                let filt = rank_triple(&m, &g, t, side, EvalSetting::Filtered).unwrap();
                assert!(filt <= raw, "filtered {filt} > raw {raw}");
            }
        }
    }

    #[test]
    fn metrics_formulas() {
        let (mrr, hits) = metrics_from_ranks(&[1, 2, 4]);
        assert!((mrr - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-12);
        assert!((mrr - 0.58333).abs() < 1e-4);
        assert!((hits[&1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((hits[&3] - 2.0 / 3.0).abs() < 1e-12);
        assert!((hits[&10] - 1.0).abs() < 1e-12);
        // perfect ranks
        let (mrr, hits) = metrics_from_ranks(&[1, 1, 1, 1]);
        assert_eq!(mrr, 1.0);
        assert_eq!(hits[&1], 1.0);
    }

    #[test]
    fn evaluate_bounds_and_monotonicity() {
        let g = graph_of(5, &[(0, 0, 1), (1, 0, 2), (2, 0, 3), (3, 0, 4)]);
        let m = init_model(ModelKind::TransE, &g, 3, 1.0, Norm::L1, 4).unwrap();
        let report = evaluate(&m, g.triples(), &g, EvalSetting::Filtered).unwrap();
        let mrr = report.mrr.unwrap();
        assert!(mrr >= 1.0 / g.n_entities() as f64 && mrr <= 1.0);
        let hits = report.hits.unwrap();
        assert!(hits[&1] <= hits[&3] && hits[&3] <= hits[&10]);
        assert_eq!(report.n_test, 4);
    }

    #[test]
    fn evaluate_is_order_independent() {
        let g = graph_of(5, &[(0, 0, 1), (1, 0, 2), (2, 0, 3), (3, 0, 4)]);
        let m = init_model(ModelKind::TransE, &g, 3, 1.0, Norm::L1, 4).unwrap();
        let fwd = evaluate(&m, g.triples(), &g, EvalSetting::Raw).unwrap();
        let mut rev: Vec<Triple> = g.triples().to_vec();
        rev.reverse();
        let bwd = evaluate(&m, &rev, &g, EvalSetting::Raw).unwrap();
        assert_eq!(fwd.mrr, bwd.mrr);
        assert_eq!(fwd.hits, bwd.hits);
    }

    #[test]
    fn l2_distance_basics() {
        let g = graph_of(4, &[(0, 0, 1)]);
        let a = init_model(ModelKind::TransE, &g, 2, 1.0, Norm::L1, 0).unwrap();
        assert_eq!(l2_distance(&a, &a, None).unwrap(), 0.0);
        // single entity row differing by (3, 4) → distance 5
        let mut b = a.clone();
        b.entity_emb[2] += 3.0;
        b.entity_emb[3] += 4.0;
        assert!((l2_distance(&a, &b, None).unwrap() - 5.0).abs() < 1e-6);
        // restriction to a different entity sees no difference
        let only_e0: BTreeSet<usize> = [0].into();
        let no_rels: BTreeSet<usize> = BTreeSet::new();
        assert_eq!(
            l2_distance(&a, &b, Some((&only_e0, &no_rels))).unwrap(),
            0.0
        );
        let only_e1: BTreeSet<usize> = [1].into();
        assert!((l2_distance(&a, &b, Some((&only_e1, &no_rels))).unwrap() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn l2_distance_is_a_metric_on_samples() {
        let g = graph_of(5, &[(0, 0, 1), (2, 0, 3)]);
        let a = init_model(ModelKind::TransH, &g, 3, 1.0, Norm::L1, 1).unwrap();
        let b = init_model(ModelKind::TransH, &g, 3, 1.0, Norm::L1, 2).unwrap();
        let c = init_model(ModelKind::TransH, &g, 3, 1.0, Norm::L1, 3).unwrap();
        let ab = l2_distance(&a, &b, None).unwrap();
        let ba = l2_distance(&b, &a, None).unwrap();
        let bc = l2_distance(&b, &c, None).unwrap();
        let ac = l2_distance(&a, &c, None).unwrap();
        assert_eq!(ab, ba);
        assert!(ac <= ab + bc + 1e-12);
        // shape mismatch rejected
        let d2 = init_model(ModelKind::TransH, &g, 4, 1.0, Norm::L1, 1).unwrap();
        assert!(l2_distance(&a, &d2, None).is_err());
    }

    #[test]
    fn split_eval_separates_deleted_from_remaining() {
        let g = graph_of(5, &[(0, 0, 1), (1, 0, 2), (2, 0, 3), (3, 0, 4)]);
        let m = init_model(ModelKind::TransE, &g, 3, 1.0, Norm::L1, 4).unwrap();
        let req = resolve_deletion(&g, DeletionKind::Triples, &[0, 1]).unwrap();
        let (del, rem) = split_eval(&m, &g, &req, EvalSetting::Filtered).unwrap();
        assert_eq!(del.n_test, 2);
        assert_eq!(rem.n_test, 2);
        assert!(del.mrr.is_some() && rem.mrr.is_some());
        // deleting everything leaves an empty remaining side
        let req_all = resolve_deletion(&g, DeletionKind::Triples, &[0, 1, 2, 3]).unwrap();
        let (del, rem) = split_eval(&m, &g, &req_all, EvalSetting::Filtered).unwrap();
        assert_eq!(del.n_test, 4);
        assert_eq!(rem.n_test, 0);
        assert!(rem.mrr.is_none() && rem.hits.is_none());
    }

    #[test]
    fn projection_recovers_axis_aligned_plane() {
        // entities laid out in the (x, y) plane of a 4-D space, x-spread 10,
        // y-spread 1: PC1 must align with x, PC2 with y
        let g = graph_of(4, &[(0, 0, 1)]);
        let mut m = init_model(ModelKind::TransE, &g, 4, 1.0, Norm::L1, 0).unwrap();
        #[rustfmt::skip]
        let rows: [[f32; 4]; 4] = [
            [-10.0, -1.0, 0.0, 0.0],
            [ 10.0,  1.0, 0.0, 0.0],
            [-10.0,  1.0, 0.0, 0.0],
            [ 10.0, -1.0, 0.0, 0.0],
        ];
        m.entity_emb = rows.concat();
        let p = project_2d(&m, &[0, 1, 2, 3], 7).unwrap();
        assert!(!p.rank_deficient);
        // PC1 coordinates reproduce the x layout (sign-fixed positive loading)
        let xs: Vec<f64> = p.points.iter().map(|&(_, x, _)| x).collect();
        let ys: Vec<f64> = p.points.iter().map(|&(_, _, y)| y).collect();
        assert!((xs[0] + 10.0).abs() < 1e-6 && (xs[1] - 10.0).abs() < 1e-6);
        assert!((ys[0] + 1.0).abs() < 1e-6 && (ys[1] - 1.0).abs() < 1e-6);
        // variance ordering
        let var = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(var(&xs) >= var(&ys));
    }

    #[test]
    fn projection_flags_degenerate_input() {
        let g = graph_of(3, &[(0, 0, 1)]);
        let mut m = init_model(ModelKind::TransE, &g, 3, 1.0, Norm::L1, 0).unwrap();
        m.entity_emb = vec![2.0, 1.0, 3.0, 2.0, 1.0, 3.0, 2.0, 1.0, 3.0];
        let p = project_2d(&m, &[0, 1, 2], 3).unwrap();
        assert!(p.rank_deficient);
        for &(_, x, y) in &p.points {
            assert_eq!(x, 0.0);
            assert_eq!(y, 0.0);
        }
        // collinear points: one informative direction, second zeroed
        let mut m2 = init_model(ModelKind::TransE, &g, 3, 1.0, Norm::L1, 0).unwrap();
        m2.entity_emb = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
        let p2 = project_2d(&m2, &[0, 1, 2], 3).unwrap();
        assert!(p2.rank_deficient);
        for &(_, _, y) in &p2.points {
            assert_eq!(y, 0.0);
        }
        let xs: Vec<f64> = p2.points.iter().map(|&(_, x, _)| x).collect();
        assert!(xs.iter().any(|x| x.abs() > 0.1));
    }

    #[test]
    fn projection_rejects_degenerate_calls() {
        let g = graph_of(3, &[(0, 0, 1)]);
        let m = init_model(ModelKind::TransE, &g, 3, 1.0, Norm::L1, 0).unwrap();
        assert!(project_2d(&m, &[0], 1).is_err());
        assert!(project_2d(&m, &[0, 7], 1).is_err());
        let m1 = init_model(ModelKind::TransE, &g, 1, 1.0, Norm::L1, 0).unwrap();
        assert!(project_2d(&m1, &[0, 1], 1).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn random_graph(raw: &[(usize, usize, usize)]) -> KnowledgeGraph {
            let n_e = raw
                .iter()
                .map(|&(h, _, t)| h.max(t) + 1)
                .max()
                .unwrap()
                .max(2);
            graph_of(n_e, raw)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            /// Filtering can only remove competitors, and the tie rules
            /// bracket each other for every triple, side, and setting.
            #[test]
            fn filtered_and_tie_rules_are_ordered(
                raw in proptest::collection::vec((0usize..7, 0usize..1, 0usize..7), 1..12),
                seed in 0u64..50,
            ) {
                let g = random_graph(&raw);
                let m = init_model(ModelKind::TransE, &g, 2, 1.0, Norm::L1, seed).unwrap();
                for t in g.triples() {
                    for side in [Side::Head, Side::Tail] {
                        let raw_rank =
                            rank_triple(&m, &g, t, side, EvalSetting::Raw).unwrap();
                        let filt =
                            rank_triple(&m, &g, t, side, EvalSetting::Filtered).unwrap();
                        prop_assert!(filt <= raw_rank);
                        let opt = rank_triple_with_rule(
                            &m, &g, t, side, EvalSetting::Raw, TieRule::Optimistic,
                        )
                        .unwrap();
                        let mid = rank_triple_with_rule(
                            &m, &g, t, side, EvalSetting::Raw, TieRule::Midpoint,
                        )
                        .unwrap();
                        let pess = rank_triple_with_rule(
                            &m, &g, t, side, EvalSetting::Raw, TieRule::Pessimistic,
                        )
                        .unwrap();
                        prop_assert!(opt <= mid && mid <= pess);
                        prop_assert!(opt >= 1);
                    }
                }
            }

            /// Ranks depend only on score order: scaling every embedding by a
            /// positive constant is a strictly monotone score transformation
            /// and must leave every rank unchanged.
            #[test]
            fn ranks_are_invariant_under_positive_score_scaling(
                raw in proptest::collection::vec((0usize..6, 0usize..1, 0usize..6), 1..10),
                seed in 0u64..50,
                scale in 0.1f32..8.0,
            ) {
                let g = random_graph(&raw);
                let m = init_model(ModelKind::TransE, &g, 2, 1.0, Norm::L1, seed).unwrap();
                let mut scaled = m.clone();
                for x in &mut scaled.entity_emb {
                    *x *= scale;
                }
                for x in &mut scaled.relation_emb {
                    *x *= scale;
                }
                for t in g.triples() {
                    for side in [Side::Head, Side::Tail] {
                        let a = rank_triple(&m, &g, t, side, EvalSetting::Raw).unwrap();
                        let b = rank_triple(&scaled, &g, t, side, EvalSetting::Raw).unwrap();
                        prop_assert_eq!(a, b);
                    }
                }
            }
        }
    }
}
