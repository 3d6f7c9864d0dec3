//! Versioned little-endian binary files for the classifier and the node
//! embeddings it was trained with.
//!
//! Layout of a model file: 8-byte magic, `u32` version, `u64` graph
//! dimension, text dimension, hidden size and feature fingerprint, a
//! length-prefixed JSON training config, then `w1` (row-major,
//! input × hidden), `b1`, `w2` (hidden × 2) and `b2` as 8-byte floats.
//!
//! Embeddings are keyed by title so a file stays valid against any reload
//! of the same graph.

use std::path::Path;

use vocabforge_core::classify::{MlpConfig, MlpModel, NodeEmbeddings};
use vocabforge_core::{CategoryGraph, Title};

use crate::error::{AppError, Result};

const MODEL_MAGIC: &[u8; 8] = b"VFMLP\0\0\0";
const EMBED_MAGIC: &[u8; 8] = b"VFEMB\0\0\0";
pub const MODEL_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or("file is truncated")?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> std::result::Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|_| "size does not fit in memory".to_string())
    }
    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("size overflow")?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn bytes(&mut self) -> std::result::Result<&'a [u8], String> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn header(&mut self, magic: &[u8; 8]) -> std::result::Result<(), String> {
        if self.take(8)? != magic {
            return Err("not a file of the expected kind (bad magic)".into());
        }
        let version = self.u32()?;
        if version != MODEL_VERSION {
            return Err(format!("unsupported version {version} (expected {MODEL_VERSION})"));
        }
        Ok(())
    }
    fn finish(&self) -> std::result::Result<(), String> {
        if self.pos != self.data.len() {
            return Err("trailing bytes after the last field".into());
        }
        Ok(())
    }
}

pub fn model_bytes(model: &MlpModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.u64(model.graph_dimension as u64);
    w.u64(model.text_dimension as u64);
    w.u64(model.hidden as u64);
    w.u64(model.feature_fingerprint);
    w.bytes(&serde_json::to_vec(&model.config).expect("config serializes"));
    w.f64s(&model.w1);
    w.f64s(&model.b1);
    w.f64s(&model.w2);
    w.f64s(&model.b2);
    w.0
}

pub fn model_from_bytes(data: &[u8]) -> std::result::Result<MlpModel, String> {
    let mut r = Reader { data, pos: 0 };
    r.header(MODEL_MAGIC)?;
    let graph_dimension = r.usize()?;
    let text_dimension = r.usize()?;
    let hidden = r.usize()?;
    let feature_fingerprint = r.u64()?;
    let config: MlpConfig = serde_json::from_slice(r.bytes()?).map_err(|e| format!("bad training config: {e}"))?;
    let input = graph_dimension.checked_add(text_dimension).ok_or("size overflow")?;
    let w1 = r.f64s(input.checked_mul(hidden).ok_or("size overflow")?)?;
    let b1 = r.f64s(hidden)?;
    let w2 = r.f64s(hidden.checked_mul(2).ok_or("size overflow")?)?;
    let b2 = r.f64s(2)?;
    r.finish()?;
    let model = MlpModel {
        graph_dimension,
        text_dimension,
        hidden,
        w1,
        b1,
        w2,
        b2: [b2[0], b2[1]],
        feature_fingerprint,
        config,
    };
    model.validate().map_err(|e| e.to_string())?;
    Ok(model)
}

pub fn embeddings_bytes(emb: &NodeEmbeddings, graph: &CategoryGraph) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(EMBED_MAGIC);
    w.u32(MODEL_VERSION);
    w.u64(emb.dimension as u64);
    w.u64(emb.ids.len() as u64);
    w.u64(emb.epoch_losses.len() as u64);
    w.f64s(&emb.epoch_losses);
    for (i, &id) in emb.ids.iter().enumerate() {
        w.bytes(graph.category_title(id).as_str().as_bytes());
        w.f64s(&emb.vectors[i * emb.dimension..(i + 1) * emb.dimension]);
    }
    w.0
}

pub fn embeddings_from_bytes(data: &[u8], graph: &CategoryGraph) -> std::result::Result<NodeEmbeddings, String> {
    let mut r = Reader { data, pos: 0 };
    r.header(EMBED_MAGIC)?;
    let dimension = r.usize()?;
    let count = r.usize()?;
    let losses = r.usize()?;
    let epoch_losses = r.f64s(losses)?;
    let mut rows = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let title = std::str::from_utf8(r.bytes()?).map_err(|_| "title is not valid UTF-8")?;
        let title = Title::normalize(title).map_err(|e| e.to_string())?;
        let id = graph.category_id(&title).ok_or_else(|| format!("embedded category {title} is not in the graph"))?;
        let v = r.f64s(dimension)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("embedding of {title} is not finite"));
        }
        rows.push((id, v));
    }
    r.finish()?;
    rows.sort_by_key(|(id, _)| *id);
    if rows.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err("duplicate category in embeddings".into());
    }
    let ids = rows.iter().map(|(id, _)| *id).collect();
    let vectors = rows.into_iter().flat_map(|(_, v)| v).collect();
    Ok(NodeEmbeddings { dimension, ids, vectors, epoch_losses })
}

pub fn read_model(path: &Path) -> Result<MlpModel> {
    let data = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    model_from_bytes(&data).map_err(|m| AppError::data(path, m))
}

pub fn read_embeddings(path: &Path, graph: &CategoryGraph) -> Result<NodeEmbeddings> {
    let data = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    embeddings_from_bytes(&data, graph).map_err(|m| AppError::data(path, m))
}
