//! Flat binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! u32 format version (= 1)
//! u32 parameter count
//! per parameter:
//!   u32 name length, name bytes (UTF-8)
//!   u32 rank, rank × u64 dims
//!   product(dims) × f64 values
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn write_params<'a, W: Write>(
    mut w: W,
    params: impl ExactSizeIterator<Item = (&'a str, &'a Tensor)>,
) -> Result<()> {
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated record: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_params<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| read_u64(&mut r).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        let t = Tensor::new(shape, data)
            .map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
        out.push((name, t));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last record".into()));
    }
    Ok(out)
}

pub fn save<'a>(
    path: &Path,
    params: impl ExactSizeIterator<Item = (&'a str, &'a Tensor)>,
) -> Result<()> {
    let mut buf = Vec::new();
    write_params(&mut buf, params)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = std::fs::read(path)?;
    read_params(bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::vector(vec![1.5]);
        let mut buf = Vec::new();
        write_params(&mut buf, [("a", &t)].into_iter()).unwrap();
        let mut want = Vec::new();
        want.extend(1u32.to_le_bytes());
        want.extend(1u32.to_le_bytes());
        want.extend(1u32.to_le_bytes());
        want.push(b'a');
        want.extend(1u32.to_le_bytes());
        want.extend(1u64.to_le_bytes());
        want.extend(1.5f64.to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn rejects_bad_version_and_truncation() {
        let mut buf = Vec::new();
        write_params(&mut buf, [("w", &Tensor::vector(vec![1.0, 2.0]))].into_iter()).unwrap();
        assert!(read_params(&buf[..buf.len() - 3]).is_err());
        buf[0] = 9;
        assert!(read_params(buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            bits in proptest::collection::vec(any::<u64>(), 1..40),
            rows in 1usize..4,
        ) {
            // arbitrary bit patterns, NaN payloads included
            let n = bits.len() - bits.len() % rows;
            prop_assume!(n > 0);
            let data: Vec<f64> = bits[..n].iter().map(|&b| f64::from_bits(b)).collect();
            let t = Tensor::matrix(rows, n / rows, data).unwrap();
            let mut buf = Vec::new();
            write_params(&mut buf, [("gru.w_update", &t)].into_iter()).unwrap();
            let back = read_params(buf.as_slice()).unwrap();
            prop_assert_eq!(&back[0].0, "gru.w_update");
            prop_assert_eq!(back[0].1.shape(), t.shape());
            let a: Vec<u64> = back[0].1.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
