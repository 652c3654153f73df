//! Binary tensor checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "RATN"            4 bytes magic
//! version           u32
//! count             u64
//! count × {
//!   name_len        u64, then name_len bytes of UTF-8
//!   ndim            u64, then ndim × u64 dims
//!   data            product(dims) × f64
//! }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"RATN";
pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on any single length field, to reject garbage before allocating.
const MAX_LEN: u64 = 1 << 32;

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(&str, &Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u64).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_len<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let n = read_u64(r, what)?;
    if n > MAX_LEN {
        return Err(Error::Format(format!("{what} length {n} is implausible")));
    }
    Ok(n as usize)
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic bytes {magic:?}")));
    }
    let mut v = [0u8; 4];
    read_exact(&mut r, &mut v, "version")?;
    let version = u32::from_le_bytes(v);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let count = read_len(&mut r, "tensor count")?;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = read_len(&mut r, "name")?;
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name, "name")?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("name is not UTF-8".into()))?;
        let ndim = read_len(&mut r, "shape")?;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_len(&mut r, "dimension")?);
        }
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        read_exact(&mut r, &mut bytes, &name)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("tensor `{name}`: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save_params(path: &Path, store: &ParamStore) -> Result<()> {
    let entries: Vec<(&str, &Tensor)> = store.iter().collect();
    let mut buf = Vec::new();
    write_tensors(&mut buf, &entries)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path)?;
    let mut store = ParamStore::new();
    for (name, t) in read_tensors(bytes.as_slice())? {
        store.add(name, t);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<u8> {
        let a = Tensor::new(vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5]).unwrap();
        let b = Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap();
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[("a", &a), ("bé", &b)]).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let buf = sample();
        let back = read_tensors(buf.as_slice()).unwrap();
        let refs: Vec<(&str, &Tensor)> = back.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut again = Vec::new();
        write_tensors(&mut again, &refs).unwrap();
        assert_eq!(buf, again);
        assert_eq!(back[0].1.data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn header_layout() {
        let buf = sample();
        assert_eq!(&buf[..4], b"RATN");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 2);
    }

    #[test]
    fn corrupted_magic() {
        let mut buf = sample();
        buf[0] = b'X';
        assert!(matches!(read_tensors(buf.as_slice()), Err(Error::Format(m)) if m.contains("magic")));
    }

    #[test]
    fn wrong_version() {
        let mut buf = sample();
        buf[4] = 9;
        assert!(matches!(read_tensors(buf.as_slice()), Err(Error::Format(m)) if m.contains("version")));
    }

    #[test]
    fn truncated() {
        let buf = sample();
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(read_tensors(cut), Err(Error::Format(m)) if m.contains("truncated")));
    }
}
