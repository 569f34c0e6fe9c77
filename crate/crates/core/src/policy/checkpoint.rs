//! Flat binary checkpoint format for policy parameters.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  "2DPO"
//! version u32      currently 1
//! shape   4 x u64  vocab, dim, hidden, window
//! tensors f64...   embed, w1, b1, w2, b2, proj, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{PolicyParams, PolicyShape};

pub const MAGIC: [u8; 4] = *b"2DPO";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes; not a policy checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &PolicyParams) -> Result<(), CheckpointError> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for dim in [
        params.shape.vocab,
        params.shape.dim,
        params.shape.hidden,
        params.shape.window,
    ] {
        w.write_all(&(dim as u64).to_le_bytes())?;
    }
    for tensor in params.tensors() {
        for v in tensor {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<PolicyParams, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let mut dims = [0u64; 4];
    for d in dims.iter_mut() {
        let mut bytes = [0u8; 8];
        r.read_exact(&mut bytes)?;
        *d = u64::from_le_bytes(bytes);
    }
    let shape = PolicyShape {
        vocab: dims[0] as usize,
        dim: dims[1] as usize,
        hidden: dims[2] as usize,
        window: dims[3] as usize,
    };
    let mut read_tensor = |n: usize, name: &str| -> Result<Vec<f64>, CheckpointError> {
        let mut out = Vec::with_capacity(n);
        let mut bytes = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut bytes)
                .map_err(|_| CheckpointError::Truncated(name.to_string()))?;
            out.push(f64::from_le_bytes(bytes));
        }
        Ok(out)
    };
    let embed = read_tensor(shape.vocab * shape.dim, "embed")?;
    let w1 = read_tensor(shape.hidden * shape.window * shape.dim, "w1")?;
    let b1 = read_tensor(shape.hidden, "b1")?;
    let w2 = read_tensor(shape.dim * shape.hidden, "w2")?;
    let b2 = read_tensor(shape.dim, "b2")?;
    let proj = read_tensor(shape.vocab * shape.dim, "proj")?;
    Ok(PolicyParams {
        shape,
        embed,
        w1,
        b1,
        w2,
        b2,
        proj,
    })
}

pub fn save(path: &Path, params: &PolicyParams) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(file), params)
}

pub fn load(path: &Path) -> Result<PolicyParams, CheckpointError> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let shape = PolicyShape {
            vocab: 5,
            dim: 3,
            hidden: 4,
            window: 2,
        };
        let params = PolicyParams::init(shape, 42);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &params).unwrap();
        let loaded = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(loaded, params);
        assert_eq!(loaded.content_hash(), params.content_hash());
    }

    #[test]
    fn bad_magic_and_truncation_are_detected() {
        let shape = PolicyShape {
            vocab: 3,
            dim: 2,
            hidden: 2,
            window: 1,
        };
        let params = PolicyParams::init(shape, 0);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &params).unwrap();

        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(matches!(
            read_checkpoint(wrong.as_slice()),
            Err(CheckpointError::BadMagic)
        ));

        let truncated = &buf[..buf.len() - 9];
        assert!(matches!(
            read_checkpoint(truncated),
            Err(CheckpointError::Truncated(_))
        ));
    }
}
