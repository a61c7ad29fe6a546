//! Versioned binary model checkpoints. Little-endian, lossless f64
//! round-trip.

use super::{EmbeddingModel, Tokenizer};
use crate::{Error, Result};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"PAIRLRN\0";
const VERSION: u32 = 1;

pub fn save(model: &EmbeddingModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let t = &model.tokenizer;
    w.write_all(&[u8::from(t.lowercase)])?;
    w.write_all(&t.hash_buckets.to_le_bytes())?;
    w.write_all(&t.hash_seed.to_le_bytes())?;
    w.write_all(&(t.max_tokens as u32).to_le_bytes())?;
    w.write_all(&(model.dim as u32).to_le_bytes())?;
    for scalar in [
        model.w,
        model.b,
        model.bn_mean,
        model.bn_var,
        model.bn_momentum,
        model.bn_epsilon,
    ] {
        w.write_all(&scalar.to_le_bytes())?;
    }
    w.write_all(&(model.table().len() as u64).to_le_bytes())?;
    for x in model.table() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<EmbeddingModel> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: not a model checkpoint",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let tokenizer = Tokenizer {
        lowercase: flag[0] != 0,
        hash_buckets: read_u32(&mut r)?,
        hash_seed: read_u64(&mut r)?,
        max_tokens: read_u32(&mut r)? as usize,
    };
    let dim = read_u32(&mut r)? as usize;
    let mut head = [0.0f64; 6];
    for h in &mut head {
        *h = read_f64(&mut r)?;
    }
    let len = read_u64(&mut r)? as usize;
    if len != tokenizer.hash_buckets as usize * dim {
        return Err(Error::Checkpoint(format!(
            "table length {len} does not match {} x {dim}",
            tokenizer.hash_buckets
        )));
    }
    let mut table = vec![0.0f64; len];
    let mut buf = [0u8; 8];
    for x in &mut table {
        r.read_exact(&mut buf)?;
        *x = f64::from_le_bytes(buf);
    }
    Ok(EmbeddingModel::from_parts(tokenizer, dim, table, head))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
