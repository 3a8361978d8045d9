//! `heads.bin`: `SLHD1`, a little-endian `u32` head count, then each head's
//! query and key projections as tensors.

use std::io::Read;

use slab_core::inject::HydraHead;
use slab_core::tensorcore::io::{read_tensor, write_tensor};
use slab_core::{Error, Result};

pub const HEADS_MAGIC: &[u8; 5] = b"SLHD1";

pub fn encode_heads(heads: &[HydraHead]) -> Vec<u8> {
    let mut out = HEADS_MAGIC.to_vec();
    out.extend((heads.len() as u32).to_le_bytes());
    for h in heads {
        write_tensor(&mut out, &h.wq).expect("in-memory write");
        write_tensor(&mut out, &h.wk).expect("in-memory write");
    }
    out
}

pub fn decode_heads(bytes: &[u8]) -> Result<Vec<HydraHead>> {
    let mut r = bytes;
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated heads file".into()))?;
    if &magic != HEADS_MAGIC {
        return Err(Error::Format("not a heads file".into()));
    }
    let mut n = [0u8; 4];
    r.read_exact(&mut n)
        .map_err(|_| Error::Format("truncated heads file".into()))?;
    let heads = (0..u32::from_le_bytes(n))
        .map(|_| HydraHead::new(read_tensor(&mut r)?, read_tensor(&mut r)?))
        .collect::<Result<Vec<_>>>()?;
    if !r.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the heads",
            r.len()
        )));
    }
    Ok(heads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip() {
        let heads = HydraHead::init(8, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let bytes = encode_heads(&heads);
        assert_eq!(decode_heads(&bytes).unwrap(), heads);
        assert!(decode_heads(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_heads(b"SLTN1\0\0\0\0").is_err());
    }
}
