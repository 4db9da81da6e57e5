//! Versioned binary persistence for the retrieval indexes.
//!
//! One file carries the BM25 postings and lengths for both modality
//! partitions plus the embedder spec and precomputed document embeddings, so
//! a run can reload everything needed for either retriever. Writing is fully
//! deterministic (sorted maps, little-endian scalars) and save -> load ->
//! save reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::corpus::Modality;

use super::bm25::{Bm25Index, Bm25Params};
use super::dense::DenseIndex;
use super::embed::Embedder;
use super::RetrievalError;

const MAGIC: &[u8; 6] = b"THIDX\0";
const VERSION: u32 = 1;

/// Both retrievers over one corpus, as persisted to disk.
#[derive(Debug, Clone)]
pub struct IndexBundle {
    pub bm25: Bm25Index,
    pub dense: DenseIndex,
}

impl IndexBundle {
    pub fn embedder(&self) -> &Embedder {
        self.dense.embedder()
    }
}

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.out.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.out.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.out.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.out.write_all(&v.to_le_bytes())
    }
    fn string(&mut self, s: &str) -> std::io::Result<()> {
        self.u64(s.len() as u64)?;
        self.out.write_all(s.as_bytes())
    }
}

struct Reader<R: Read> {
    input: R,
}

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> std::io::Result<u8> {
        let mut b = [0u8; 1];
        self.input.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> std::io::Result<u32> {
        let mut b = [0u8; 4];
        self.input.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> std::io::Result<u64> {
        let mut b = [0u8; 8];
        self.input.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        self.input.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn string(&mut self) -> std::io::Result<String> {
        let len = self.u64()? as usize;
        let mut buf = vec![0u8; len];
        self.input.read_exact(&mut buf)?;
        String::from_utf8(buf)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

pub fn save_index(bundle: &IndexBundle, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
    let display = path.as_ref().display().to_string();
    let io_err = |source| RetrievalError::Io { path: display.clone(), source };
    let file = std::fs::File::create(path.as_ref()).map_err(io_err)?;
    let mut w = Writer { out: BufWriter::new(file) };
    write_bundle(&mut w, bundle).map_err(|source| RetrievalError::Io {
        path: display.clone(),
        source,
    })
}

fn write_bundle<W: Write>(w: &mut Writer<W>, bundle: &IndexBundle) -> std::io::Result<()> {
    w.out.write_all(MAGIC)?;
    w.u32(VERSION)?;
    w.f64(bundle.bm25.params.k1)?;
    w.f64(bundle.bm25.params.b)?;
    w.u64(bundle.dense.dim() as u64)?;

    match bundle.embedder() {
        Embedder::HashedBagOfTokens { .. } => w.u8(0)?,
        Embedder::External { table, .. } => {
            w.u8(1)?;
            w.u64(table.len() as u64)?;
            for (text, vec) in table {
                w.string(text)?;
                for &v in vec {
                    w.f64(v)?;
                }
            }
        }
    }

    for modality in Modality::ALL {
        let part = bundle.bm25.partition(modality);
        w.f64(part.avg_len)?;
        w.u64(part.doc_len.len() as u64)?;
        for (id, len) in &part.doc_len {
            w.string(id)?;
            w.u32(*len)?;
        }
        w.u64(part.postings.len() as u64)?;
        for (token, postings) in &part.postings {
            w.string(token)?;
            w.u64(postings.len() as u64)?;
            for (id, tf) in postings {
                w.string(id)?;
                w.u32(*tf)?;
            }
        }
    }

    let docs = bundle.dense.docs();
    w.u64(docs.len() as u64)?;
    for (id, modality, emb) in docs {
        w.string(id)?;
        w.u8(match modality {
            Modality::Text => 0,
            Modality::Table => 1,
        })?;
        for &v in emb {
            w.f64(v)?;
        }
    }
    w.out.flush()
}

pub fn load_index(path: impl AsRef<Path>) -> Result<IndexBundle, RetrievalError> {
    let display = path.as_ref().display().to_string();
    let file = std::fs::File::open(path.as_ref()).map_err(|source| RetrievalError::Io {
        path: display.clone(),
        source,
    })?;
    let mut r = Reader { input: BufReader::new(file) };
    read_bundle(&mut r).map_err(|e| RetrievalError::CorruptIndex {
        path: display,
        message: e.to_string(),
    })
}

fn read_bundle<R: Read>(r: &mut Reader<R>) -> std::io::Result<IndexBundle> {
    let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());

    let mut magic = [0u8; 6];
    r.input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let k1 = r.f64()?;
    let b = r.f64()?;
    let dim = r.u64()? as usize;

    let embedder = match r.u8()? {
        0 => Embedder::HashedBagOfTokens { dim },
        1 => {
            let count = r.u64()? as usize;
            let mut table = BTreeMap::new();
            for _ in 0..count {
                let text = r.string()?;
                let mut vec = Vec::with_capacity(dim);
                for _ in 0..dim {
                    vec.push(r.f64()?);
                }
                table.insert(text, vec);
            }
            Embedder::External { dim, table }
        }
        k => return Err(bad(&format!("unknown embedder kind {k}"))),
    };

    let mut partitions = Vec::with_capacity(2);
    for _ in Modality::ALL {
        let avg_len = r.f64()?;
        let doc_count = r.u64()? as usize;
        let mut doc_len = BTreeMap::new();
        for _ in 0..doc_count {
            let id = r.string()?;
            let len = r.u32()?;
            doc_len.insert(id, len);
        }
        let token_count = r.u64()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..token_count {
            let token = r.string()?;
            let plen = r.u64()? as usize;
            let mut list = Vec::with_capacity(plen);
            for _ in 0..plen {
                let id = r.string()?;
                let tf = r.u32()?;
                if tf == 0 {
                    return Err(bad("zero term frequency in postings"));
                }
                list.push((id, tf));
            }
            postings.insert(token, list);
        }
        partitions.push(super::bm25::Partition { postings, doc_len, avg_len });
    }
    let table_part = partitions.pop().expect("two partitions");
    let text_part = partitions.pop().expect("two partitions");
    let bm25 = Bm25Index {
        params: Bm25Params { k1, b },
        text: text_part,
        table: table_part,
    };

    let doc_count = r.u64()? as usize;
    let mut docs = Vec::with_capacity(doc_count);
    for _ in 0..doc_count {
        let id = r.string()?;
        let modality = match r.u8()? {
            0 => Modality::Text,
            1 => Modality::Table,
            m => return Err(bad(&format!("unknown modality tag {m}"))),
        };
        let mut emb = Vec::with_capacity(dim);
        for _ in 0..dim {
            emb.push(r.f64()?);
        }
        docs.push((id, modality, emb));
    }
    let dense = DenseIndex::from_parts(Arc::new(embedder), docs);
    Ok(IndexBundle { bm25, dense })
}

/// Sanity stats for the `stats` CLI subcommand.
pub fn describe(bundle: &IndexBundle) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "bm25 params: k1={} b={}\nembedding dim: {}\n",
        bundle.bm25.params.k1,
        bundle.bm25.params.b,
        bundle.dense.dim()
    ));
    for modality in Modality::ALL {
        out.push_str(&format!(
            "{modality}: docs={} vocab={} avg_len={:.3}\n",
            bundle.bm25.doc_count(modality),
            bundle.bm25.vocab_size(modality),
            bundle.bm25.avg_len(modality),
        ));
    }
    out
}
