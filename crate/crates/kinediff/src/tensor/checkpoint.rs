//! Parameter checkpoint file io.
//!
//! Layout: magic `KDCK`, u32 version, u32 tensor count, then per tensor a
//! u32 name length, the UTF-8 name, u32 rank, u32 dims, and a little-endian
//! f64 payload.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"KDCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensorData {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn write_checkpoint(path: &Path, tensors: &[NamedTensorData]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        let expect: usize = t.shape.iter().product();
        assert_eq!(expect, t.data.len(), "checkpoint tensor {} shape/data mismatch", t.name);
        for &v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse {
                offset: self.pos as u64,
                what: format!("truncated checkpoint while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<NamedTensorData>> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let mut c = Cursor { buf: &raw, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse { offset: 0, what: format!("bad magic {magic:?}, expected {MAGIC:?}") });
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Parse { offset: 4, what: format!("unsupported checkpoint version {version}") });
    }
    let count = c.u32("tensor count")? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = c.u32("name length")? as usize;
        let name_bytes = c.take(name_len, "name")?;
        let name = String::from_utf8(name_bytes.to_vec()).map_err(|_| Error::Parse {
            offset: (c.pos - name_len) as u64,
            what: "tensor name is not valid UTF-8".into(),
        })?;
        let rank = c.u32("rank")? as usize;
        if rank > 8 {
            return Err(Error::Parse { offset: (c.pos - 4) as u64, what: format!("implausible rank {rank}") });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("dim")? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = c.take(n * 8, "payload")?;
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
            .collect();
        out.push(NamedTensorData { name, shape, data });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let dir = std::env::temp_dir().join("kdck_test_roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.kdck");
        let tensors = vec![
            NamedTensorData { name: "w".into(), shape: vec![2, 3], data: vec![1.0, -2.5, 3.25, 0.0, 1e-300, f64::MAX] },
            NamedTensorData { name: "alpha.0".into(), shape: vec![], data: vec![0.125] },
        ];
        write_checkpoint(&path, &tensors).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, tensors);
    }

    #[test]
    fn bad_magic_names_offset_zero() {
        let dir = std::env::temp_dir().join("kdck_test_magic");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.kdck");
        std::fs::write(&path, b"NOPE....").unwrap();
        match read_checkpoint(&path) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_a_parse_error() {
        let dir = std::env::temp_dir().join("kdck_test_trunc");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.kdck");
        let tensors = vec![NamedTensorData { name: "w".into(), shape: vec![4], data: vec![1.0; 4] }];
        write_checkpoint(&path, &tensors).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 9]).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Parse { .. })));
    }
}
