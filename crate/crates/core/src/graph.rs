//! Triple storage, vocabularies, deletion requests, and sampling.
//!
//! A [`KnowledgeGraph`] is an immutable, deduplicated triple store with dense
//! integer ids and adjacency indices. Deletions are expressed as a
//! [`DeletionRequest`]: the user names triples, entities, or relations, and the
//! request resolves to the exact set of triple indices to drop (deleting an entity
//! or a relation removes every triple it appears in).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One fact: (head entity, relation, tail entity), all dense ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Bijective label ↔ dense-id mapping.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    labels: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Vocab::default()
    }

    /// Id for `label`, inserting it at the next free id if unseen.
    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_string());
        self.ids.insert(label.to_string(), id);
        id
    }

    /// Insert a label at a caller-chosen id (id-map ingestion). Ids must end up
    /// dense and contiguous; [`Vocab::finalize_dense`] checks that.
    fn insert_at(&mut self, label: &str, id: usize) -> Result<()> {
        if self.ids.contains_key(label) {
            return Err(Error::InvalidArgument(format!(
                "duplicate label {label:?} in id map"
            )));
        }
        if self.labels.len() <= id {
            self.labels.resize(id + 1, String::new());
        }
        if !self.labels[id].is_empty() {
            return Err(Error::InvalidArgument(format!(
                "duplicate id {id} in id map"
            )));
        }
        self.labels[id] = label.to_string();
        self.ids.insert(label.to_string(), id);
        Ok(())
    }

    fn finalize_dense(&self) -> Result<()> {
        for (id, label) in self.labels.iter().enumerate() {
            if label.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "id map leaves id {id} unassigned (ids must be dense)"
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Immutable triple store with adjacency indices.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    pub entities: Vocab,
    pub relations: Vocab,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    by_entity: Vec<Vec<usize>>,
    by_relation: Vec<Vec<usize>>,
}

impl KnowledgeGraph {
    /// Build from vocabularies and a triple list; duplicates are dropped (the
    /// number dropped is logged at info level).
    pub fn new(entities: Vocab, relations: Vocab, triples: Vec<Triple>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(triples.len());
        let mut kept = Vec::with_capacity(triples.len());
        let mut dupes = 0usize;
        for t in triples {
            if t.head >= entities.len() || t.tail >= entities.len() {
                return Err(Error::UnknownId {
                    what: "entity",
                    id: t.head.max(t.tail).to_string(),
                });
            }
            if t.relation >= relations.len() {
                return Err(Error::UnknownId {
                    what: "relation",
                    id: t.relation.to_string(),
                });
            }
            if seen.insert(t) {
                kept.push(t);
            } else {
                dupes += 1;
            }
        }
        if dupes > 0 {
            log::info!("dropped {dupes} duplicate triples");
        }
        let mut by_entity = vec![Vec::new(); entities.len()];
        let mut by_relation = vec![Vec::new(); relations.len()];
        for (i, t) in kept.iter().enumerate() {
            by_entity[t.head].push(i);
            if t.tail != t.head {
                by_entity[t.tail].push(i);
            }
            by_relation[t.relation].push(i);
        }
        Ok(KnowledgeGraph {
            entities,
            relations,
            triple_set: seen,
            triples: kept,
            by_entity,
            by_relation,
        })
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn n_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, idx: usize) -> Triple {
        self.triples[idx]
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    /// Triple indices where `entity` appears as head or tail.
    pub fn triples_of_entity(&self, entity: usize) -> &[usize] {
        &self.by_entity[entity]
    }

    /// Triple indices carrying `relation`.
    pub fn triples_of_relation(&self, relation: usize) -> &[usize] {
        &self.by_relation[relation]
    }
}

/// What a deletion request names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeletionKind {
    Triples,
    Entities,
    Relations,
}

impl std::str::FromStr for DeletionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triples" => Ok(DeletionKind::Triples),
            "entities" => Ok(DeletionKind::Entities),
            "relations" => Ok(DeletionKind::Relations),
            other => Err(Error::InvalidArgument(format!(
                "unknown deletion kind {other:?} (expected triples|entities|relations)"
            ))),
        }
    }
}

/// A deletion, resolved down to the exact triple indices to remove.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeletionRequest {
    pub kind: DeletionKind,
    /// Triple indices, entity ids, or relation ids depending on `kind`.
    pub raw_ids: Vec<usize>,
    /// Triple indices after expansion, ascending.
    pub resolved: Vec<usize>,
}

/// Expand a deletion request: entity/relation deletions pull in every triple
/// that mentions any named id.
pub fn resolve_deletion(
    g: &KnowledgeGraph,
    kind: DeletionKind,
    raw_ids: &[usize],
) -> Result<DeletionRequest> {
    let mut resolved = BTreeSet::new();
    match kind {
        DeletionKind::Triples => {
            for &i in raw_ids {
                if i >= g.n_triples() {
                    return Err(Error::UnknownId {
                        what: "triple index",
                        id: i.to_string(),
                    });
                }
                resolved.insert(i);
            }
        }
        DeletionKind::Entities => {
            for &e in raw_ids {
                if e >= g.n_entities() {
                    return Err(Error::UnknownId {
                        what: "entity",
                        id: e.to_string(),
                    });
                }
                resolved.extend(g.triples_of_entity(e).iter().copied());
            }
        }
        DeletionKind::Relations => {
            for &r in raw_ids {
                if r >= g.n_relations() {
                    return Err(Error::UnknownId {
                        what: "relation",
                        id: r.to_string(),
                    });
                }
                resolved.extend(g.triples_of_relation(r).iter().copied());
            }
        }
    }
    if resolved.is_empty() {
        return Err(Error::EmptyDeletion);
    }
    Ok(DeletionRequest {
        kind,
        raw_ids: raw_ids.to_vec(),
        resolved: resolved.into_iter().collect(),
    })
}

/// Sample `ceil(ratio * count)` ids of the given kind without replacement and
/// resolve them. Same seed, same graph → identical request.
pub fn sample_random_deletion(
    g: &KnowledgeGraph,
    kind: DeletionKind,
    ratio: f64,
    seed: u64,
) -> Result<DeletionRequest> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "deletion ratio must be in (0,1), got {ratio}"
        )));
    }
    let count = match kind {
        DeletionKind::Triples => g.n_triples(),
        DeletionKind::Entities => g.n_entities(),
        DeletionKind::Relations => g.n_relations(),
    };
    let take = (ratio * count as f64).ceil() as usize;
    if take < 1 || take > count {
        return Err(Error::InvalidArgument(format!(
            "ratio {ratio} of {count} ids yields an unusable sample size {take}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, count, take).into_vec();
    resolve_deletion(g, kind, &picked)
}

/// The graph with the request's triples removed. Vocabularies are preserved
/// verbatim (ids stay aligned even if an entity no longer appears anywhere), so
/// parameter arrays of models trained before and after removal stay comparable.
pub fn remove_triples(g: &KnowledgeGraph, req: &DeletionRequest) -> Result<KnowledgeGraph> {
    let drop: HashSet<usize> = req.resolved.iter().copied().collect();
    for &i in &drop {
        if i >= g.n_triples() {
            return Err(Error::UnknownId {
                what: "triple index",
                id: i.to_string(),
            });
        }
    }
    let kept: Vec<Triple> = g
        .triples
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, t)| *t)
        .collect();
    KnowledgeGraph::new(g.entities.clone(), g.relations.clone(), kept)
}

/// Entities and relations reachable from the seed triples in `k` hops.
///
/// `k = 0` is exactly the entities and relations of the seed triples themselves;
/// each further hop adds every triple incident to an entity reached so far, then
/// collects its endpoints and relation. Output sets iterate in ascending id order.
pub fn khop_neighborhood(
    g: &KnowledgeGraph,
    seeds: &[usize],
    k: usize,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut ents = BTreeSet::new();
    let mut rels = BTreeSet::new();
    for &i in seeds {
        let t = g.triple(i);
        ents.insert(t.head);
        ents.insert(t.tail);
        rels.insert(t.relation);
    }
    let mut frontier: Vec<usize> = ents.iter().copied().collect();
    for _ in 0..k {
        let mut next = Vec::new();
        for &e in &frontier {
            for &ti in g.triples_of_entity(e) {
                let t = g.triple(ti);
                rels.insert(t.relation);
                for endpoint in [t.head, t.tail] {
                    if ents.insert(endpoint) {
                        next.push(endpoint);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    (ents, rels)
}

/// A corruption of one positive triple (head or tail replaced).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeSample {
    /// Index of the positive triple in the owning graph.
    pub positive: usize,
    pub corrupted: Triple,
}

/// How many corruption re-draws before giving up on filtering.
const NEG_SAMPLE_ATTEMPTS: usize = 100;

/// Draw `n_per` filtered corruptions per positive: flip a fair coin for the side
/// (head vs tail), resample that entity uniformly, and reject draws that hit a
/// real triple. After [`NEG_SAMPLE_ATTEMPTS`] rejections the last draw is kept
/// and a warning logged (saturated neighborhoods admit no filtered corruption).
pub fn sample_negatives(
    g: &KnowledgeGraph,
    positives: &[usize],
    n_per: usize,
    seed: u64,
) -> Result<Vec<NegativeSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_negatives_with_rng(g, positives, n_per, &mut rng)
}

/// As [`sample_negatives`] but drawing from a caller-owned stream, for callers
/// that need several draws from one seed (the trainer's per-epoch resampling).
pub fn sample_negatives_with_rng(
    g: &KnowledgeGraph,
    positives: &[usize],
    n_per: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<NegativeSample>> {
    if n_per < 1 {
        return Err(Error::InvalidArgument("n_per must be >= 1".into()));
    }
    let n_e = g.n_entities();
    if n_e == 0 {
        return Err(Error::InvalidArgument(
            "cannot sample negatives from an empty vocabulary".into(),
        ));
    }
    let mut out = Vec::with_capacity(positives.len() * n_per);
    for &pi in positives {
        if pi >= g.n_triples() {
            return Err(Error::UnknownId {
                what: "triple index",
                id: pi.to_string(),
            });
        }
        let pos = g.triple(pi);
        for _ in 0..n_per {
            let corrupt_head = rng.gen_bool(0.5);
            let mut candidate = pos;
            let mut accepted = false;
            for _ in 0..NEG_SAMPLE_ATTEMPTS {
                let e = rng.gen_range(0..n_e);
                candidate = if corrupt_head {
                    Triple::new(e, pos.relation, pos.tail)
                } else {
                    Triple::new(pos.head, pos.relation, e)
                };
                if candidate != pos && !g.contains(&candidate) {
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                log::warn!(
                    "negative sampling saturated for triple {pi}; keeping an unfiltered corruption"
                );
                // Ensure the structural contract (differs in one slot) even in the
                // saturated case.
                if candidate == pos {
                    let e = (if corrupt_head { pos.head } else { pos.tail } + 1) % n_e;
                    candidate = if corrupt_head {
                        Triple::new(e, pos.relation, pos.tail)
                    } else {
                        Triple::new(pos.head, pos.relation, e)
                    };
                }
            }
            out.push(NegativeSample {
                positive: pi,
                corrupted: candidate,
            });
        }
    }
    Ok(out)
}

/// Read a head⟶relation⟶tail TSV into a graph.
///
/// Without id maps, ids are assigned in first-appearance order. With maps (two
/// tab-separated columns, `label\tid`), the mapped ids are used and must be dense.
pub fn load_tsv(
    path: impl AsRef<Path>,
    entity_map: Option<&Path>,
    relation_map: Option<&Path>,
) -> Result<KnowledgeGraph> {
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    if let Some(p) = entity_map {
        load_id_map(p, &mut entities)?;
    }
    if let Some(p) = relation_map {
        load_id_map(p, &mut relations)?;
    }
    let fixed_entities = entity_map.is_some();
    let fixed_relations = relation_map.is_some();
    let triples = parse_triple_file(
        path.as_ref(),
        &mut entities,
        &mut relations,
        fixed_entities,
        fixed_relations,
    )?;
    KnowledgeGraph::new(entities, relations, triples)
}

pub(crate) fn parse_triple_file(
    path: &Path,
    entities: &mut Vocab,
    relations: &mut Vocab,
    fixed_entities: bool,
    fixed_relations: bool,
) -> Result<Vec<Triple>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut triples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (h, r, t) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(h), Some(r), Some(t), None) => (h, r, t),
            _ => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    reason: "expected exactly 3 tab-separated fields".into(),
                })
            }
        };
        let head = lookup_or_intern(entities, h, fixed_entities, "entity")?;
        let rel = lookup_or_intern(relations, r, fixed_relations, "relation")?;
        let tail = lookup_or_intern(entities, t, fixed_entities, "entity")?;
        triples.push(Triple::new(head, rel, tail));
    }
    Ok(triples)
}

fn lookup_or_intern(
    vocab: &mut Vocab,
    label: &str,
    fixed: bool,
    what: &'static str,
) -> Result<usize> {
    if fixed {
        vocab.get(label).ok_or_else(|| Error::UnknownId {
            what,
            id: label.to_string(),
        })
    } else {
        Ok(vocab.intern(label))
    }
}

fn load_id_map(path: &Path, vocab: &mut Vocab) -> Result<()> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (label, id) = match (fields.next(), fields.next(), fields.next()) {
            (Some(l), Some(i), None) => (l, i),
            _ => {
                return Err(Error::IdMap {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    reason: "expected exactly 2 tab-separated fields".into(),
                })
            }
        };
        let id: usize = id.parse().map_err(|_| Error::IdMap {
            path: path.display().to_string(),
            line: lineno + 1,
            reason: format!("id field {id:?} is not a non-negative integer"),
        })?;
        vocab.insert_at(label, id).map_err(|e| Error::IdMap {
            path: path.display().to_string(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
    }
    vocab.finalize_dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    pub(crate) fn graph_from_triples(
        n_entities: usize,
        n_relations: usize,
        triples: &[(usize, usize, usize)],
    ) -> KnowledgeGraph {
        let mut e = Vocab::new();
        for i in 0..n_entities {
            e.intern(&format!("e{i}"));
        }
        let mut r = Vocab::new();
        for i in 0..n_relations {
            r.intern(&format!("r{i}"));
        }
        let ts = triples
            .iter()
            .map(|&(h, rel, t)| Triple::new(h, rel, t))
            .collect();
        KnowledgeGraph::new(e, r, ts).unwrap()
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_tsv_basic() {
        let f = write_tmp("a\tr1\tb\nb\tr1\tc\n");
        let g = load_tsv(f.path(), None, None).unwrap();
        assert_eq!(g.n_entities(), 3);
        assert_eq!(g.n_relations(), 1);
        assert_eq!(g.n_triples(), 2);
        assert_eq!(g.entities.get("a"), Some(0));
        assert_eq!(g.entities.label(2), Some("c"));
    }

    #[test]
    fn load_tsv_dedups() {
        let f = write_tmp("a\tr1\tb\na\tr1\tb\n");
        let g = load_tsv(f.path(), None, None).unwrap();
        assert_eq!(g.n_triples(), 1);
    }

    #[test]
    fn load_tsv_rejects_two_field_line() {
        let f = write_tmp("a\tr1\tb\nbroken\tline\n");
        let err = load_tsv(f.path(), None, None).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn load_tsv_with_id_maps() {
        let data = write_tmp("a\tr1\tb\n");
        let emap = write_tmp("b\t0\na\t1\n");
        let rmap = write_tmp("r1\t0\n");
        let g = load_tsv(data.path(), Some(emap.path()), Some(rmap.path())).unwrap();
        assert_eq!(g.entities.get("a"), Some(1));
        assert_eq!(g.entities.get("b"), Some(0));
        assert_eq!(g.triple(0), Triple::new(1, 0, 0));

        // unknown label under a fixed map is an error
        let data2 = write_tmp("a\tr1\tzzz\n");
        assert!(load_tsv(data2.path(), Some(emap.path()), Some(rmap.path())).is_err());
    }

    #[test]
    fn resolve_entity_deletion_expands() {
        // a=0, b=1, c=2; triples (a,r1,b), (b,r1,c), (a,r1,c)
        let g = graph_from_triples(3, 1, &[(0, 0, 1), (1, 0, 2), (0, 0, 2)]);
        let req = resolve_deletion(&g, DeletionKind::Entities, &[1]).unwrap();
        assert_eq!(req.resolved, vec![0, 1]);
    }

    #[test]
    fn resolve_unused_relation_is_empty_deletion() {
        let g = graph_from_triples(3, 2, &[(0, 0, 1)]);
        assert!(matches!(
            resolve_deletion(&g, DeletionKind::Relations, &[1]),
            Err(Error::EmptyDeletion)
        ));
    }

    #[test]
    fn resolve_triples_is_identity() {
        let g = graph_from_triples(3, 1, &[(0, 0, 1), (1, 0, 2)]);
        let req = resolve_deletion(&g, DeletionKind::Triples, &[0]).unwrap();
        assert_eq!(req.resolved, vec![0]);
    }

    #[test]
    fn sample_deletion_sizes_and_determinism() {
        // (head, tail) = (i % 20, i / 20) is unique per i, so nothing dedups
        let triples: Vec<(usize, usize, usize)> =
            (0..100).map(|i| (i % 20, i % 3, i / 20)).collect();
        let g = graph_from_triples(20, 3, &triples);
        let req = sample_random_deletion(&g, DeletionKind::Triples, 0.05, 7).unwrap();
        assert_eq!(req.raw_ids.len(), 5);
        let again = sample_random_deletion(&g, DeletionKind::Triples, 0.05, 7).unwrap();
        assert_eq!(req.resolved, again.resolved);
        assert!(sample_random_deletion(&g, DeletionKind::Triples, 1.0, 7).is_err());
        assert!(sample_random_deletion(&g, DeletionKind::Triples, 0.0, 7).is_err());
    }

    #[test]
    fn remove_triples_preserves_vocab() {
        let g = graph_from_triples(3, 1, &[(0, 0, 1), (1, 0, 2)]);
        let req = resolve_deletion(&g, DeletionKind::Triples, &[0, 1]).unwrap();
        let g2 = remove_triples(&g, &req).unwrap();
        assert_eq!(g2.n_triples(), 0);
        assert_eq!(g2.n_entities(), 3);
        assert_eq!(g2.n_relations(), 1);
        // original untouched
        assert_eq!(g.n_triples(), 2);
    }

    #[test]
    fn remove_empty_request_is_identity() {
        let g = graph_from_triples(3, 1, &[(0, 0, 1), (1, 0, 2)]);
        let req = DeletionRequest {
            kind: DeletionKind::Triples,
            raw_ids: vec![],
            resolved: vec![],
        };
        let g2 = remove_triples(&g, &req).unwrap();
        assert_eq!(g2.triples(), g.triples());
    }

    #[test]
    fn remove_one_of_two() {
        let g = graph_from_triples(3, 1, &[(0, 0, 1), (1, 0, 2)]);
        let req = resolve_deletion(&g, DeletionKind::Triples, &[0]).unwrap();
        let g2 = remove_triples(&g, &req).unwrap();
        assert_eq!(g2.n_triples(), 1);
        assert_eq!(g2.triple(0), Triple::new(1, 0, 2));
        assert_eq!(g2.triples_of_entity(0), &[] as &[usize]);
        assert_eq!(g2.triples_of_entity(1), &[0]);
    }

    #[test]
    fn khop_base_case() {
        let g = graph_from_triples(4, 1, &[(0, 0, 1), (1, 0, 2), (2, 0, 3)]);
        let (e, r) = khop_neighborhood(&g, &[0], 0);
        assert_eq!(e.into_iter().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(r.into_iter().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn khop_one_hop_on_chain() {
        // chain a-b-c-d; seed (a,r1,b); 1 hop reaches c but not d
        let g = graph_from_triples(4, 1, &[(0, 0, 1), (1, 0, 2), (2, 0, 3)]);
        let (e, _) = khop_neighborhood(&g, &[0], 1);
        assert_eq!(e.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    /// Brute-force oracle: entities reachable within k hops, where "one hop" walks
    /// every triple incident to the current entity set.
    fn reachable_oracle(
        g: &KnowledgeGraph,
        seeds: &[usize],
        k: usize,
    ) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let mut ents = BTreeSet::new();
        let mut rels = BTreeSet::new();
        for &i in seeds {
            let t = g.triple(i);
            ents.insert(t.head);
            ents.insert(t.tail);
            rels.insert(t.relation);
        }
        for _ in 0..k {
            let snapshot: Vec<usize> = ents.iter().copied().collect();
            for t in g.triples() {
                if snapshot.contains(&t.head) || snapshot.contains(&t.tail) {
                    ents.insert(t.head);
                    ents.insert(t.tail);
                    rels.insert(t.relation);
                }
            }
        }
        (ents, rels)
    }

    #[test]
    fn khop_saturates_to_component() {
        // two components: 0-1-2 and 3-4
        let g = graph_from_triples(5, 2, &[(0, 0, 1), (1, 0, 2), (3, 1, 4)]);
        let (e, r) = khop_neighborhood(&g, &[0], 10);
        let (eo, ro) = reachable_oracle(&g, &[0], 10);
        assert_eq!(e, eo);
        assert_eq!(r, ro);
        assert_eq!(e.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(r.into_iter().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn negatives_structure_and_determinism() {
        let triples: Vec<(usize, usize, usize)> =
            (0..10).map(|i| (i, 0, (i + 1) % 10)).collect();
        let g = graph_from_triples(10, 1, &triples);
        let positives: Vec<usize> = (0..10).collect();
        let negs = sample_negatives(&g, &positives, 1, 42).unwrap();
        assert_eq!(negs.len(), 10);
        for ns in &negs {
            let pos = g.triple(ns.positive);
            let c = ns.corrupted;
            let head_differs = c.head != pos.head;
            let tail_differs = c.tail != pos.tail;
            assert!(head_differs ^ tail_differs, "exactly one slot must differ");
            assert_eq!(c.relation, pos.relation);
        }
        let again = sample_negatives(&g, &positives, 1, 42).unwrap();
        assert_eq!(negs, again);
    }

    #[test]
    fn negatives_saturated_graph_accepts_unfiltered() {
        // 2 entities, every (h, r0, t) combination present: no filtered corruption exists
        let g = graph_from_triples(2, 1, &[(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1)]);
        let negs = sample_negatives(&g, &[0, 1, 2, 3], 1, 3).unwrap();
        assert_eq!(negs.len(), 4);
        for ns in &negs {
            let pos = g.triple(ns.positive);
            assert_ne!(ns.corrupted, pos);
        }
    }

    proptest! {
        /// Entity deletion partitions the triple set: resolved ∪ remaining = all.
        #[test]
        fn deletion_partitions_triples(
            raw in proptest::collection::vec((0usize..8, 0usize..3, 0usize..8), 1..40),
            entity in 0usize..8,
        ) {
            let g = graph_from_triples(8, 3, &raw);
            if let Ok(req) = resolve_deletion(&g, DeletionKind::Entities, &[entity]) {
                let g2 = remove_triples(&g, &req).unwrap();
                prop_assert_eq!(g2.n_triples() + req.resolved.len(), g.n_triples());
                // no deleted triple survives, and none mention the entity
                for t in g2.triples() {
                    prop_assert!(t.head != entity && t.tail != entity);
                }
            }
        }

        /// khop output only grows with k.
        #[test]
        fn khop_monotone_in_k(
            raw in proptest::collection::vec((0usize..10, 0usize..3, 0usize..10), 1..30),
            k in 0usize..4,
        ) {
            let g = graph_from_triples(10, 3, &raw);
            let seeds = vec![0usize];
            let (e1, r1) = khop_neighborhood(&g, &seeds, k);
            let (e2, r2) = khop_neighborhood(&g, &seeds, k + 1);
            prop_assert!(e1.is_subset(&e2));
            prop_assert!(r1.is_subset(&r2));
        }

        /// khop agrees with the brute-force reachability oracle.
        #[test]
        fn khop_matches_oracle(
            raw in proptest::collection::vec((0usize..8, 0usize..2, 0usize..8), 1..25),
            k in 0usize..4,
        ) {
            let g = graph_from_triples(8, 2, &raw);
            let seeds = vec![0usize, g.n_triples() - 1];
            let got = khop_neighborhood(&g, &seeds, k);
            let want = reachable_oracle(&g, &seeds, k);
            prop_assert_eq!(got, want);
        }
    }
}
