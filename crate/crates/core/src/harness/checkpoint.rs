//! Binary checkpoints.
//!
//! Layout: `b"RNND"`, version byte `0x01`, manifest length as `u64` LE, the
//! UTF-8 JSON manifest, then every tensor listed in the manifest as raw
//! little-endian `f64` values in row-major order.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rnn::{Parameterization, RnnParams, BLOCK_NAMES};
use crate::training::TrainReport;

pub const MAGIC: &[u8; 4] = b"RNND";
pub const VERSION: u8 = 0x01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tensors: Vec<TensorEntry>,
    pub parameterization: Parameterization,
    pub seed: u64,
    pub config_hash: String,
    /// Training record, present on final checkpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<TrainReport>,
}

/// Parameters plus the metadata stored beside them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: RnnParams,
    pub seed: u64,
    pub config_hash: String,
    pub report: Option<TrainReport>,
}

fn matrix_entry(name: &str, m: &DMatrix<f64>) -> TensorEntry {
    TensorEntry {
        name: name.into(),
        shape: vec![m.nrows(), m.ncols()],
        dtype: "f64".into(),
    }
}

fn vector_entry(name: &str, v: &DVector<f64>) -> TensorEntry {
    TensorEntry {
        name: name.into(),
        shape: vec![v.len()],
        dtype: "f64".into(),
    }
}

fn push_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
}

/// Serialize a checkpoint to bytes.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let p = &ckpt.params;
    let manifest = Manifest {
        tensors: vec![
            matrix_entry(BLOCK_NAMES[0], &p.w_h),
            matrix_entry(BLOCK_NAMES[1], &p.w_x),
            vector_entry(BLOCK_NAMES[2], &p.b),
            matrix_entry(BLOCK_NAMES[3], &p.w_out),
            vector_entry(BLOCK_NAMES[4], &p.b_out),
        ],
        parameterization: p.parameterization,
        seed: ckpt.seed,
        config_hash: ckpt.config_hash.clone(),
        report: ckpt.report.clone(),
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::invalid(format!("manifest: {e}")))?;
    let mut out = Vec::with_capacity(13 + json.len() + 8 * p.num_params());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    push_matrix(&mut out, &p.w_h);
    push_matrix(&mut out, &p.w_x);
    for v in p.b.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    push_matrix(&mut out, &p.w_out);
    for v in p.b_out.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt("truncated file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

/// Parse checkpoint bytes. Every failure is a corrupt-checkpoint error.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.take(1)?[0];
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version:#04x}")));
    }
    let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let len = usize::try_from(len).map_err(|_| corrupt("manifest length overflows"))?;
    let manifest: Manifest =
        serde_json::from_slice(r.take(len)?).map_err(|e| corrupt(format!("manifest: {e}")))?;

    let names: Vec<&str> = manifest.tensors.iter().map(|t| t.name.as_str()).collect();
    if names != BLOCK_NAMES {
        return Err(corrupt(format!("expected tensors {BLOCK_NAMES:?}, found {names:?}")));
    }
    let mut blocks = Vec::with_capacity(5);
    for t in &manifest.tensors {
        if t.dtype != "f64" {
            return Err(corrupt(format!("tensor {} has dtype {}", t.name, t.dtype)));
        }
        let count = t
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt("shape overflows"))?;
        blocks.push((t.shape.clone(), r.f64s(count)?));
    }
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes after payload", bytes.len() - r.pos)));
    }
    let matrix = |i: usize| -> Result<DMatrix<f64>> {
        let (shape, data) = &blocks[i];
        match shape.as_slice() {
            [rows, cols] => Ok(DMatrix::from_row_slice(*rows, *cols, data)),
            _ => Err(corrupt(format!("{} must be 2-D", BLOCK_NAMES[i]))),
        }
    };
    let vector = |i: usize| -> Result<DVector<f64>> {
        let (shape, data) = &blocks[i];
        match shape.as_slice() {
            [_] => Ok(DVector::from_column_slice(data)),
            _ => Err(corrupt(format!("{} must be 1-D", BLOCK_NAMES[i]))),
        }
    };
    let params = RnnParams::from_blocks(matrix(0)?, matrix(1)?, vector(2)?, matrix(3)?, vector(4)?, manifest.parameterization)
        .map_err(|e| corrupt(e.to_string()))?;
    Ok(Checkpoint {
        params,
        seed: manifest.seed,
        config_hash: manifest.config_hash,
        report: manifest.report,
    })
}

/// Write atomically: a temporary file in the target directory, then rename.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| corrupt(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}
