//! Bit-exact model serialization.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  b"KGUN"
//! u64    format version (currently 1)
//! u64    model kind tag (0 = transe, 1 = transh, 2 = transd, 3 = rotate)
//! u64    embedding dimension d
//! u64    entity count
//! u64    relation count
//! u64    norm tag (1 = L1, 2 = L2)
//! f64    margin
//! f32[]  entity embeddings, row-major
//! f32[]  relation embeddings, row-major
//! f32[]  auxiliary arrays in the model's fixed order, row-major
//! ```
//!
//! Saving the same model twice produces byte-identical files, and a
//! save → load → save cycle is the identity on bytes — `f32` values are
//! moved as raw bits, never reformatted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{EmbeddingModel, ModelKind, Norm};

const MAGIC: &[u8; 4] = b"KGUN";
const FORMAT_VERSION: u64 = 1;

fn write_f32s(w: &mut impl Write, vals: &[f32]) -> Result<()> {
    for &v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Serialize a model to `path`, overwriting any existing file.
pub fn save_model(m: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [
        FORMAT_VERSION,
        m.kind.tag(),
        m.dim as u64,
        m.n_entities as u64,
        m.n_relations as u64,
        m.norm.tag(),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&m.margin.to_le_bytes())?;
    write_f32s(&mut w, &m.entity_emb)?;
    write_f32s(&mut w, &m.relation_emb)?;
    if let Some(aux) = &m.rel_aux {
        write_f32s(&mut w, aux)?;
    }
    if let Some(aux) = &m.ent_aux {
        write_f32s(&mut w, aux)?;
    }
    w.flush()?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadCheckpoint(msg.into())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| bad(format!("truncated file while reading {what}")))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_or(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize, what: &str) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n.checked_mul(4).ok_or_else(|| bad("array size overflow"))?];
    read_exact_or(r, &mut bytes, what)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn usize_field(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| bad(format!("{what} {v} does not fit in usize")))
}

/// Load a model previously written by [`save_model`].
pub fn load_model(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let version = read_u64(&mut r, "format version")?;
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let kind = ModelKind::from_tag(read_u64(&mut r, "model kind")?)?;
    let dim = usize_field(read_u64(&mut r, "dimension")?, "dimension")?;
    if dim == 0 {
        return Err(bad("dimension must be at least 1"));
    }
    let n_entities = usize_field(read_u64(&mut r, "entity count")?, "entity count")?;
    let n_relations = usize_field(read_u64(&mut r, "relation count")?, "relation count")?;
    let norm = Norm::from_tag(read_u64(&mut r, "norm")?)?;
    let mut margin_bytes = [0u8; 8];
    read_exact_or(&mut r, &mut margin_bytes, "margin")?;
    let margin = f64::from_le_bytes(margin_bytes);

    let mut m = EmbeddingModel {
        kind,
        dim,
        n_entities,
        n_relations,
        margin,
        norm,
        entity_emb: Vec::new(),
        relation_emb: Vec::new(),
        rel_aux: None,
        ent_aux: None,
    };
    let len = |rows: usize, width: usize, what: &str| -> Result<usize> {
        rows.checked_mul(width)
            .ok_or_else(|| bad(format!("{what} array size overflow")))
    };
    m.entity_emb = read_f32s(
        &mut r,
        len(n_entities, m.ent_width(), "entity")?,
        "entity embeddings",
    )?;
    m.relation_emb = read_f32s(
        &mut r,
        len(n_relations, dim, "relation")?,
        "relation embeddings",
    )?;
    match kind {
        ModelKind::TransE | ModelKind::RotatE => {}
        ModelKind::TransH => {
            m.rel_aux = Some(read_f32s(
                &mut r,
                len(n_relations, dim, "relation-auxiliary")?,
                "hyperplane normals",
            )?);
        }
        ModelKind::TransD => {
            m.rel_aux = Some(read_f32s(
                &mut r,
                len(n_relations, dim, "relation-auxiliary")?,
                "relation projectors",
            )?);
            m.ent_aux = Some(read_f32s(
                &mut r,
                len(n_entities, dim, "entity-auxiliary")?,
                "entity projectors",
            )?);
        }
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(m),
        _ => Err(bad("trailing bytes after embedding arrays")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{KnowledgeGraph, Triple, Vocab};
    use crate::model::init_model;

    fn graph(n_e: usize, n_r: usize) -> KnowledgeGraph {
        let mut e = Vocab::new();
        for i in 0..n_e {
            e.intern(&format!("e{i}"));
        }
        let mut r = Vocab::new();
        for i in 0..n_r {
            r.intern(&format!("r{i}"));
        }
        KnowledgeGraph::new(e, r, vec![Triple::new(0, 0, 1)]).unwrap()
    }

    #[test]
    fn round_trip_is_exact_for_every_kind() {
        let g = graph(7, 4);
        let dir = tempfile::tempdir().unwrap();
        for (i, kind) in [
            ModelKind::TransE,
            ModelKind::TransH,
            ModelKind::TransD,
            ModelKind::RotatE,
        ]
        .into_iter()
        .enumerate()
        {
            for norm in [Norm::L1, Norm::L2] {
                let m = init_model(kind, &g, 5, 2.5, norm, 11 + i as u64).unwrap();
                let path = dir.path().join(format!("{kind}.{norm:?}.kgun"));
                save_model(&m, &path).unwrap();
                let back = load_model(&path).unwrap();
                assert_eq!(back.kind, m.kind);
                assert_eq!(back.dim, m.dim);
                assert_eq!(back.n_entities, m.n_entities);
                assert_eq!(back.n_relations, m.n_relations);
                assert_eq!(back.norm, m.norm);
                assert_eq!(back.margin.to_bits(), m.margin.to_bits());
                let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&back.entity_emb), bits(&m.entity_emb));
                assert_eq!(bits(&back.relation_emb), bits(&m.relation_emb));
                assert_eq!(
                    back.rel_aux.as_deref().map(bits),
                    m.rel_aux.as_deref().map(bits)
                );
                assert_eq!(
                    back.ent_aux.as_deref().map(bits),
                    m.ent_aux.as_deref().map(bits)
                );
            }
        }
    }

    #[test]
    fn repeated_saves_are_byte_identical() {
        let g = graph(5, 2);
        let m = init_model(ModelKind::TransD, &g, 3, 1.0, Norm::L1, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.kgun");
        let p2 = dir.path().join("b.kgun");
        save_model(&m, &p1).unwrap();
        save_model(&m, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);
        // save → load → save is also the identity on bytes
        let back = load_model(&p1).unwrap();
        let p3 = dir.path().join("c.kgun");
        save_model(&back, &p3).unwrap();
        assert_eq!(b1, std::fs::read(&p3).unwrap());
    }

    #[test]
    fn rejects_corrupted_files() {
        let g = graph(4, 2);
        let m = init_model(ModelKind::TransE, &g, 3, 1.0, Norm::L2, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.kgun");
        save_model(&m, &good).unwrap();
        let bytes = std::fs::read(&good).unwrap();

        // truncation anywhere must error, not panic
        let cut = dir.path().join("cut.kgun");
        for at in [0, 3, 4, 12, 40, bytes.len() - 1] {
            std::fs::write(&cut, &bytes[..at]).unwrap();
            assert!(matches!(load_model(&cut), Err(Error::BadCheckpoint(_))));
        }

        // bad magic
        let mut b = bytes.clone();
        b[0] = b'X';
        std::fs::write(&cut, &b).unwrap();
        assert!(matches!(load_model(&cut), Err(Error::BadCheckpoint(_))));

        // unsupported version
        let mut b = bytes.clone();
        b[4] = 9;
        std::fs::write(&cut, &b).unwrap();
        assert!(matches!(load_model(&cut), Err(Error::BadCheckpoint(_))));

        // unknown kind tag
        let mut b = bytes.clone();
        b[12] = 7;
        std::fs::write(&cut, &b).unwrap();
        assert!(matches!(load_model(&cut), Err(Error::BadCheckpoint(_))));

        // trailing garbage
        let mut b = bytes.clone();
        b.push(0);
        std::fs::write(&cut, &b).unwrap();
        assert!(matches!(load_model(&cut), Err(Error::BadCheckpoint(_))));

        // missing file surfaces as an I/O error
        assert!(matches!(
            load_model(dir.path().join("absent.kgun")),
            Err(Error::Io(_))
        ));
    }
}
