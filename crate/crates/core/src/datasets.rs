//! Dataset assembly: directory splits, seeded holdouts, TSV export, and a
//! synthetic benchmark generator.
//!
//! A dataset is a training graph plus held-out triple lists that all share
//! one vocabulary, together with the union graph used for filtered ranking.
//! Directories follow the common distribution layout (`train.txt` plus
//! optional `valid.txt`/`test.txt`); a single file gets a seeded holdout.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{parse_triple_file, KnowledgeGraph, Triple, Vocab};
use crate::model::{EmbeddingModel, ModelKind, Norm};

/// A training graph with held-out splits over a shared vocabulary.
#[derive(Debug, Clone)]
pub struct DatasetSplits {
    /// Triples to train on; its vocabulary covers every split.
    pub train: KnowledgeGraph,
    /// Optional validation triples (empty when the dataset has none).
    pub valid: Vec<Triple>,
    /// Held-out test triples for ranking metrics.
    pub test: Vec<Triple>,
    /// Union of all splits — the filter set for filtered evaluation.
    pub full: KnowledgeGraph,
}

/// Load `train.txt` (+ optional `valid.txt`, `test.txt`) from a directory,
/// interning labels into one shared vocabulary in file order.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<DatasetSplits> {
    let dir = dir.as_ref();
    let train_path = dir.join("train.txt");
    if !train_path.is_file() {
        return Err(Error::InvalidArgument(format!(
            "dataset directory {} has no train.txt",
            dir.display()
        )));
    }
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let train_triples =
        parse_triple_file(&train_path, &mut entities, &mut relations, false, false)?;
    let mut read_optional = |name: &str| -> Result<Vec<Triple>> {
        let p = dir.join(name);
        if p.is_file() {
            parse_triple_file(&p, &mut entities, &mut relations, false, false)
        } else {
            Ok(Vec::new())
        }
    };
    let valid = read_optional("valid.txt")?;
    let test = read_optional("test.txt")?;
    let mut all = train_triples.clone();
    all.extend_from_slice(&valid);
    all.extend_from_slice(&test);
    let full = KnowledgeGraph::new(entities.clone(), relations.clone(), all)?;
    let train = KnowledgeGraph::new(entities, relations, train_triples)?;
    Ok(DatasetSplits {
        train,
        valid,
        test,
        full,
    })
}

/// Split one graph into train + test by holding out a seeded fraction of
/// triples. The held-out share is rounded to the nearest triple but never
/// empty, and the training side keeps the full vocabulary.
pub fn holdout_split(g: &KnowledgeGraph, frac: f64, seed: u64) -> Result<DatasetSplits> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must lie strictly between 0 and 1, got {frac}"
        )));
    }
    let n = g.n_triples();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "holdout needs at least two triples".into(),
        ));
    }
    let mut n_test = (frac * n as f64).round() as usize;
    n_test = n_test.clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let test_idx: BTreeSet<usize> = order[..n_test].iter().copied().collect();
    let mut train_triples = Vec::with_capacity(n - n_test);
    let mut test = Vec::with_capacity(n_test);
    for i in 0..n {
        if test_idx.contains(&i) {
            test.push(g.triple(i));
        } else {
            train_triples.push(g.triple(i));
        }
    }
    let train = KnowledgeGraph::new(g.entities.clone(), g.relations.clone(), train_triples)?;
    Ok(DatasetSplits {
        train,
        valid: Vec::new(),
        test,
        full: g.clone(),
    })
}

/// Load a dataset from either a split directory or a single TSV file; single
/// files get a seeded `holdout_frac` test split.
pub fn load_dataset(
    path: impl AsRef<Path>,
    holdout_frac: f64,
    seed: u64,
) -> Result<DatasetSplits> {
    let path = path.as_ref();
    if path.is_dir() {
        load_dir(path)
    } else {
        let g = crate::graph::load_tsv(path, None, None)?;
        holdout_split(&g, holdout_frac, seed)
    }
}

/// Write triples as tab-separated label lines, one per triple.
pub fn write_tsv(g: &KnowledgeGraph, triples: &[Triple], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for t in triples {
        let h = g.entities.label(t.head).ok_or(Error::UnknownId {
            what: "entity",
            id: t.head.to_string(),
        })?;
        let r = g.relations.label(t.relation).ok_or(Error::UnknownId {
            what: "relation",
            id: t.relation.to_string(),
        })?;
        let tl = g.entities.label(t.tail).ok_or(Error::UnknownId {
            what: "entity",
            id: t.tail.to_string(),
        })?;
        writeln!(out, "{h}\t{r}\t{tl}")?;
    }
    out.flush()?;
    Ok(())
}

/// Shape of a synthetic benchmark graph.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
    /// Fraction of triples drawn uniformly at random instead of from the
    /// planted geometry. Noise triples carry information that cannot be
    /// recovered from the rest of the graph, which is what makes deletion
    /// experiments meaningful.
    pub noise_frac: f64,
    /// Dimension of the planted translation geometry.
    pub planted_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_entities: 250,
            n_relations: 12,
            n_triples: 2000,
            noise_frac: 0.25,
            planted_dim: 6,
            seed: 0,
        }
    }
}

/// A generated graph together with the translation model that produced it.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub graph: KnowledgeGraph,
    /// The planted generator: entities and relation offsets as an actual
    /// model, so consistency of the structured triples is checkable.
    pub planted: EmbeddingModel,
    /// The first `n_structured` triples follow the planted geometry; the
    /// remainder are noise.
    pub n_structured: usize,
}

/// Generate a graph whose structured part is consistent with a planted
/// translation geometry: each structured triple's tail is the entity nearest
/// to `head + relation` in the planted space, so a low-loss embedding of the
/// graph exists by construction.
pub fn synth_toy(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.n_entities < 3 || cfg.n_relations < 1 || cfg.planted_dim < 1 {
        return Err(Error::InvalidArgument(
            "synthetic graph needs ≥3 entities, ≥1 relation, dim ≥1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.noise_frac) {
        return Err(Error::InvalidArgument(format!(
            "noise fraction must lie in [0, 1], got {}",
            cfg.noise_frac
        )));
    }
    let max_triples = cfg.n_entities * cfg.n_relations;
    if cfg.n_triples == 0 || cfg.n_triples > max_triples {
        return Err(Error::InvalidArgument(format!(
            "triple count must lie in 1..={max_triples} for this vocabulary"
        )));
    }
    let d = cfg.planted_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let z: Vec<f64> = (0..cfg.n_entities * d)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let q: Vec<f64> = (0..cfg.n_relations * d)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();

    let n_structured =
        ((cfg.n_triples as f64) * (1.0 - cfg.noise_frac)).round() as usize;
    let n_structured = n_structured.min(cfg.n_triples);

    // Structured part: walk distinct (head, relation) pairs in shuffled
    // order; the deterministic tail makes each resulting triple unique.
    let mut pairs: Vec<(usize, usize)> = (0..cfg.n_entities)
        .flat_map(|h| (0..cfg.n_relations).map(move |r| (h, r)))
        .collect();
    pairs.shuffle(&mut rng);
    let mut triples = Vec::with_capacity(cfg.n_triples);
    let mut seen = BTreeSet::new();
    for &(h, r) in pairs.iter().take(n_structured) {
        let target: Vec<f64> = (0..d).map(|j| z[h * d + j] + q[r * d + j]).collect();
        let mut best = usize::MAX;
        let mut best_dist = f64::INFINITY;
        for e in 0..cfg.n_entities {
            if e == h {
                continue;
            }
            let dist: f64 = (0..d)
                .map(|j| (z[e * d + j] - target[j]).powi(2))
                .sum();
            if dist < best_dist {
                best_dist = dist;
                best = e;
            }
        }
        let t = Triple::new(h, r, best);
        if seen.insert(t) {
            triples.push(t);
        }
    }

    // Noise part: uniform distinct non-self-loop triples.
    while triples.len() < cfg.n_triples {
        let h = rng.gen_range(0..cfg.n_entities);
        let r = rng.gen_range(0..cfg.n_relations);
        let t = rng.gen_range(0..cfg.n_entities);
        if h == t {
            continue;
        }
        let triple = Triple::new(h, r, t);
        if seen.insert(triple) {
            triples.push(triple);
        }
    }
    let n_structured = n_structured.min(triples.len());

    let mut entities = Vocab::new();
    for i in 0..cfg.n_entities {
        entities.intern(&format!("e{i}"));
    }
    let mut relations = Vocab::new();
    for i in 0..cfg.n_relations {
        relations.intern(&format!("r{i}"));
    }
    let graph = KnowledgeGraph::new(entities, relations, triples)?;
    let planted = EmbeddingModel {
        kind: ModelKind::TransE,
        dim: d,
        n_entities: cfg.n_entities,
        n_relations: cfg.n_relations,
        margin: 1.0,
        norm: Norm::L2,
        entity_emb: z.iter().map(|&x| x as f32).collect(),
        relation_emb: q.iter().map(|&x| x as f32).collect(),
        rel_aux: None,
        ent_aux: None,
    };
    Ok(SynthDataset {
        graph,
        planted,
        n_structured,
    })
}
