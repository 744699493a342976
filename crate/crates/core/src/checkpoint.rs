//! Policy checkpoint file: magic `DAVN`, a format version, then one record
//! per parameter tensor — name length, name, shape, and little-endian
//! 64-bit floats. Round-trips bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::agent::Policy;

pub const MAGIC: &[u8; 4] = b"DAVN";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes (not a checkpoint file)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint holds {0} tensors, policy expects {1}")]
    CountMismatch(usize, usize),
    #[error("tensor {0}: expected name {1:?}")]
    NameMismatch(String, String),
    #[error("tensor {0}: shape {1:?} does not match policy shape {2:?}")]
    ShapeMismatch(String, Vec<usize>, Vec<usize>),
    #[error("malformed record: {0}")]
    Malformed(String),
}

pub fn save(policy: &Policy, w: &mut impl Write) -> Result<(), CheckpointError> {
    let params = policy.named_params();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in params {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &d in tensor.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_to_file(policy: &Policy, path: &Path) -> Result<(), CheckpointError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    save(policy, &mut f)?;
    Ok(())
}

/// Load parameter values into a policy built from the same profile. Names,
/// order, and shapes must all match.
pub fn load(policy: &mut Policy, r: &mut impl Read) -> Result<(), CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let count = read_u32(r)? as usize;
    let expected = policy.named_params().len();
    if count != expected {
        return Err(CheckpointError::CountMismatch(count, expected));
    }
    let mut params = policy.named_params_mut();
    for (name, tensor) in params.iter_mut() {
        let name_len = read_u32(r)? as usize;
        if name_len > 4096 {
            return Err(CheckpointError::Malformed(format!("name length {name_len}")));
        }
        let mut buf = vec![0u8; name_len];
        r.read_exact(&mut buf)?;
        let file_name = String::from_utf8(buf)
            .map_err(|e| CheckpointError::Malformed(format!("name not utf-8: {e}")))?;
        if &file_name != name {
            return Err(CheckpointError::NameMismatch(file_name, name.clone()));
        }
        let ndim = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(r)? as usize);
        }
        if shape != tensor.shape() {
            return Err(CheckpointError::ShapeMismatch(
                file_name,
                shape,
                tensor.shape().to_vec(),
            ));
        }
        let mut bytes = [0u8; 8];
        for v in tensor.data_mut() {
            r.read_exact(&mut bytes)?;
            *v = f64::from_le_bytes(bytes);
        }
    }
    Ok(())
}

pub fn load_from_file(policy: &mut Policy, path: &Path) -> Result<(), CheckpointError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    load(policy, &mut f)
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::NetProfile;
    use crate::rng::derive_stream;

    fn policy(seed: u64) -> Policy {
        let profile = NetProfile::named("desk16k", (8, 8), 64, 10.0).unwrap();
        Policy::init(profile, &mut derive_stream(seed, 0))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = policy(1);
        let mut bytes = Vec::new();
        save(&a, &mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"DAVN");

        let mut b = policy(2);
        load(&mut b, &mut bytes.as_slice()).unwrap();
        for ((na, ta), (nb, tb)) in a.named_params().iter().zip(b.named_params().iter()) {
            assert_eq!(na, nb);
            let bits_a: Vec<u64> = ta.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = tb.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "tensor {na} differs");
        }

        // Saving again reproduces the same bytes.
        let mut bytes2 = Vec::new();
        save(&b, &mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn rejects_garbage_and_mismatches() {
        let mut p = policy(3);
        assert!(matches!(
            load(&mut p, &mut &b"NOPE............."[..]),
            Err(CheckpointError::BadMagic)
        ));

        // Truncated file.
        let mut bytes = Vec::new();
        save(&p, &mut bytes).unwrap();
        bytes.truncate(bytes.len() / 2);
        let mut q = policy(3);
        assert!(load(&mut q, &mut bytes.as_slice()).is_err());
    }
}
