//! Binary tensor format: `SLTN1`, rank and dims as little-endian u64, then
//! values as little-endian IEEE-754 doubles.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

pub const TENSOR_MAGIC: &[u8; 5] = b"SLTN1";

pub fn write_tensor<T: Scalar, W: Write>(w: &mut W, t: &Tensor<T>) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(t.rank() as u64).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<T: Scalar, R: Read>(r: &mut R) -> Result<Tensor<T>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format("missing SLTN1 magic".into()));
    }
    let rank = read_u64(r)? as usize;
    if rank > 2 {
        return Err(Error::Format(format!("rank {rank} unsupported")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        data.push(T::of(f64::from_le_bytes(buf)));
    }
    if rank == 0 {
        return Ok(Tensor::scalar(data[0]));
    }
    Tensor::new(shape, data)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn tensor_to_bytes<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::new();
    write_tensor(&mut out, t).expect("write to Vec");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_fixed() {
        let t = Tensor::<f64>::vector(vec![1.0, -2.5]).unwrap();
        let b = tensor_to_bytes(&t);
        assert_eq!(&b[..5], b"SLTN1");
        assert_eq!(&b[5..13], &1u64.to_le_bytes());
        assert_eq!(&b[13..21], &2u64.to_le_bytes());
        assert_eq!(&b[21..29], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 5 + 8 + 8 + 16);
    }

    #[test]
    fn bad_magic() {
        let mut b = tensor_to_bytes(&Tensor::<f64>::scalar(1.0));
        b[0] = b'X';
        assert!(matches!(
            read_tensor::<f64, _>(&mut b.as_slice()),
            Err(Error::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn roundtrip(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor::<f64>::randn(&[rows, cols], 1.0, &mut rng);
            let back: Tensor<f64> = read_tensor(&mut tensor_to_bytes(&t).as_slice()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
