//! The `VATN` binary cache container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic   4 bytes  "VATN"
//! version u32      1
//! n       u64      token count
//! d       u64      head dimension
//! m       u64      query count
//! K       n*d f32  row-major
//! V       n*d f32  row-major
//! Q       m*d f32  row-major
//! ```
//!
//! Entries are stored as `f32`. Writing narrows each `f64` to the nearest
//! `f32`, so a write/read round trip is the identity for caches whose entries
//! are `f32`-representable (everything produced by the workload generators).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{validate_cache, KvCache, Matrix, QueryBatch};

pub const MAGIC: [u8; 4] = *b"VATN";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 * 3;

pub fn encode(cache: &KvCache, queries: &QueryBatch) -> Result<Vec<u8>> {
    validate_cache(cache, queries)?;
    let (n, d, m) = (cache.n(), cache.d(), queries.m());
    let mut buf = Vec::with_capacity(HEADER_LEN as usize + 4 * d * (2 * n + m));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [n, d, m] {
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for mat in [cache.keys(), cache.values(), queries.matrix()] {
        for &x in mat.as_slice() {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<(KvCache, QueryBatch)> {
    let found = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            found,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if found < HEADER_LEN {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            found,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (n, d, m) = (dim(8), dim(16), dim(24));

    let payload = n
        .checked_mul(2)
        .and_then(|x| x.checked_add(m))
        .and_then(|x| x.checked_mul(d))
        .and_then(|x| x.checked_mul(4));
    let expected = payload.and_then(|p| p.checked_add(HEADER_LEN));
    match expected {
        Some(e) if e <= found => {
            if e < found {
                return Err(Error::InvalidParameter(format!(
                    "{} trailing bytes after payload",
                    found - e
                )));
            }
        }
        _ => {
            return Err(Error::TruncatedFile {
                expected: expected.unwrap_or(u64::MAX),
                found,
            })
        }
    }

    let (n, d, m) = (n as usize, d as usize, m as usize);
    let mut at = HEADER_LEN as usize;
    let mut read_matrix = |rows: usize| -> Result<Matrix> {
        let len = rows * d;
        let data = bytes[at..at + 4 * len]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        at += 4 * len;
        Matrix::from_vec(rows, d, data)
    };
    let keys = read_matrix(n)?;
    let values = read_matrix(n)?;
    let queries = read_matrix(m)?;
    let cache = KvCache::new(keys, values)?;
    let queries = QueryBatch::new(queries)?;
    validate_cache(&cache, &queries)?;
    Ok((cache, queries))
}

pub fn write_cache(path: impl AsRef<Path>, cache: &KvCache, queries: &QueryBatch) -> Result<()> {
    let bytes = encode(cache, queries)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<(KvCache, QueryBatch)> {
    decode(&fs::read(path)?)
}
