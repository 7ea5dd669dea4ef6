//! Little-endian binary formats.
//!
//! | magic  | layout |
//! |--------|--------|
//! | `GSB1` | u32 n; n × (3 f32 mean, 4 f32 quat wxyz, 3 f32 scale, f32 opacity, 3 f32 color); 3 f32 background |
//! | `ATN1` | u32 width, u32 height, width·height f32 row-major |
//! | `EMB1` | u32 dim, u32 count; count × (u16 id length, UTF-8 id, dim f32) |
//! | `GAP1` | u32 n, n f32 scores |
//!
//! Values live as f64 in memory and f32 on disk, so a decode followed by an
//! encode reproduces the original bytes.

use std::path::Path;

use splatedit_core::embedding::EmbeddingTable;
use splatedit_core::{Error as CoreError, Gaussian, ScalarMap, Scene};
use thiserror::Error;

pub const GSB_MAGIC: [u8; 4] = *b"GSB1";
pub const ATN_MAGIC: [u8; 4] = *b"ATN1";
pub const EMB_MAGIC: [u8; 4] = *b"EMB1";
pub const GAP_MAGIC: [u8; 4] = *b"GAP1";

const GSB_RECORD_FLOATS: usize = 14;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("truncated: {context} needs {needed} bytes at offset {offset}, {available} available")]
    Truncated { context: String, offset: usize, needed: usize, available: usize },
    #[error("record {index}: {reason}")]
    Record { index: usize, reason: String },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("{0}")]
    Invalid(String),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, context: &str) -> Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated { context: context.into(), offset: self.pos, needed: n, available });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found = self.take(4, "magic")?;
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(&expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    fn u16(&mut self, context: &str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, context)?.try_into().unwrap()))
    }

    fn u32(&mut self, context: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, context: &str) -> Result<Vec<f32>, FormatError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| FormatError::Invalid("size overflow".into()))?, context)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(self) -> Result<(), FormatError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::Trailing(n)),
        }
    }
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), FormatError> {
    let v = u32::try_from(v).map_err(|_| FormatError::Invalid(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_gsb(scene: &Scene) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(8 + scene.len() * GSB_RECORD_FLOATS * 4 + 12);
    out.extend_from_slice(&GSB_MAGIC);
    put_u32(&mut out, scene.len())?;
    for g in scene.gaussians() {
        for v in g.mean.iter().chain(&g.rotation).chain(&g.scale) {
            put_f32(&mut out, *v);
        }
        put_f32(&mut out, g.opacity);
        for v in &g.color {
            put_f32(&mut out, *v);
        }
    }
    for v in scene.background() {
        put_f32(&mut out, v);
    }
    Ok(out)
}

pub fn decode_gsb(bytes: &[u8]) -> Result<Scene, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(GSB_MAGIC)?;
    let n = r.u32("gaussian count")? as usize;
    let mut gaussians = Vec::with_capacity(n.min(bytes.len() / (GSB_RECORD_FLOATS * 4) + 1));
    for index in 0..n {
        let f: Vec<f64> =
            r.f32s(GSB_RECORD_FLOATS, &format!("gaussian record {index}"))?.into_iter().map(f64::from).collect();
        let g = Gaussian {
            mean: [f[0], f[1], f[2]],
            rotation: [f[3], f[4], f[5], f[6]],
            scale: [f[7], f[8], f[9]],
            opacity: f[10],
            color: [f[11], f[12], f[13]],
            attn_score: 0.0,
        };
        g.check().map_err(|reason| FormatError::Record { index, reason })?;
        gaussians.push(g);
    }
    let bg = r.f32s(3, "background")?;
    r.finish()?;
    let background = [bg[0] as f64, bg[1] as f64, bg[2] as f64];
    Scene::new(gaussians, background).map_err(|e| match e {
        CoreError::InvalidGaussian { index, reason } => FormatError::Record { index, reason },
        other => FormatError::Invalid(other.to_string()),
    })
}

pub fn encode_atn(map: &ScalarMap) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(12 + map.len() * 4);
    out.extend_from_slice(&ATN_MAGIC);
    put_u32(&mut out, map.width)?;
    put_u32(&mut out, map.height)?;
    for v in &map.values {
        put_f32(&mut out, *v);
    }
    Ok(out)
}

pub fn decode_atn(bytes: &[u8]) -> Result<ScalarMap, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(ATN_MAGIC)?;
    let width = r.u32("width")? as usize;
    let height = r.u32("height")? as usize;
    let n = width.checked_mul(height).ok_or_else(|| FormatError::Invalid("map size overflows".into()))?;
    let values: Vec<f64> = r.f32s(n, "map values")?.into_iter().map(f64::from).collect();
    r.finish()?;
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::Record { index, reason: format!("non-finite value {}", values[index]) });
    }
    ScalarMap::new(width, height, values).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn encode_emb(table: &EmbeddingTable) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    out.extend_from_slice(&EMB_MAGIC);
    put_u32(&mut out, table.dim())?;
    put_u32(&mut out, table.len())?;
    for (id, v) in table.iter() {
        let len = u16::try_from(id.len()).map_err(|_| FormatError::Invalid(format!("id {id} is too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_emb(bytes: &[u8]) -> Result<EmbeddingTable, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(EMB_MAGIC)?;
    let dim = r.u32("dim")? as usize;
    let count = r.u32("count")? as usize;
    let mut table = EmbeddingTable::new(dim);
    for index in 0..count {
        let len = r.u16(&format!("entry {index} id length"))? as usize;
        let raw = r.take(len, &format!("entry {index} id"))?;
        let id = std::str::from_utf8(raw)
            .map_err(|e| FormatError::Record { index, reason: format!("id is not UTF-8: {e}") })?;
        let v = r.f32s(dim, &format!("entry {index} vector"))?;
        table.insert(id, v).map_err(|e| FormatError::Record { index, reason: e.to_string() })?;
    }
    r.finish()?;
    Ok(table)
}

pub fn encode_gap(scores: &[f64]) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(8 + scores.len() * 4);
    out.extend_from_slice(&GAP_MAGIC);
    put_u32(&mut out, scores.len())?;
    for v in scores {
        put_f32(&mut out, *v);
    }
    Ok(out)
}

pub fn decode_gap(bytes: &[u8]) -> Result<Vec<f64>, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(GAP_MAGIC)?;
    let n = r.u32("count")? as usize;
    let scores: Vec<f64> = r.f32s(n, "scores")?.into_iter().map(f64::from).collect();
    r.finish()?;
    if let Some(index) = scores.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(FormatError::Record { index, reason: format!("score {} must be finite and nonnegative", scores[index]) });
    }
    Ok(scores)
}

/// A format failure tied to the file it came from.
#[derive(Debug, Error)]
#[error("{path}: {source}")]
pub struct FileError {
    pub path: String,
    #[source]
    pub source: FileErrorKind,
}

#[derive(Debug, Error)]
pub enum FileErrorKind {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
}

fn read_with<T>(path: &Path, decode: impl FnOnce(&[u8]) -> Result<T, FormatError>) -> Result<T, FileError> {
    let wrap = |source: FileErrorKind| FileError { path: path.display().to_string(), source };
    let bytes = std::fs::read(path).map_err(|e| wrap(e.into()))?;
    decode(&bytes).map_err(|e| wrap(e.into()))
}

fn write_with(path: &Path, bytes: Result<Vec<u8>, FormatError>) -> Result<(), FileError> {
    let wrap = |source: FileErrorKind| FileError { path: path.display().to_string(), source };
    let bytes = bytes.map_err(|e| wrap(e.into()))?;
    std::fs::write(path, bytes).map_err(|e| wrap(e.into()))
}

pub fn load_scene(path: &Path) -> Result<Scene, FileError> {
    read_with(path, decode_gsb)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<(), FileError> {
    write_with(path, encode_gsb(scene))
}

pub fn load_atn(path: &Path) -> Result<ScalarMap, FileError> {
    read_with(path, decode_atn)
}

pub fn save_atn(map: &ScalarMap, path: &Path) -> Result<(), FileError> {
    write_with(path, encode_atn(map))
}

pub fn load_emb(path: &Path) -> Result<EmbeddingTable, FileError> {
    read_with(path, decode_emb)
}

pub fn save_emb(table: &EmbeddingTable, path: &Path) -> Result<(), FileError> {
    write_with(path, encode_emb(table))
}

pub fn load_gap(path: &Path) -> Result<Vec<f64>, FileError> {
    read_with(path, decode_gap)
}

pub fn save_gap(scores: &[f64], path: &Path) -> Result<(), FileError> {
    write_with(path, encode_gap(scores))
}
