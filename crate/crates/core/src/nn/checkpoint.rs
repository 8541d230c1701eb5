//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!   magic "MKIDCKPT" | u32 version | u64 desc_len | desc utf-8 bytes |
//!   u32 n_params | per param:
//!     u32 name_len | name utf-8 | u32 n_dims | u64 dims... |
//!     u8 dtype (1 = f64) | raw values little-endian
//!
//! Save -> load -> save is byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MKIDCKPT";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

pub fn save(path: &Path, description: &str, params: &[&Param]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let desc = description.as_bytes();
    buf.extend_from_slice(&(desc.len() as u64).to_le_bytes());
    buf.extend_from_slice(desc);
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        let name = p.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(p.value.shape.len() as u32).to_le_bytes());
        for &d in &p.value.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.push(DTYPE_F64);
        for &v in &p.value.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Reader {
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.err(format!(
                "truncated: wanted {} bytes, {} remain",
                n,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        let bytes = self.take(len)?.to_vec();
        String::from_utf8(bytes).map_err(|_| self.err("invalid utf-8"))
    }
}

/// Returns the description header and the named parameter tensors.
pub fn load(path: &Path) -> Result<(String, Vec<(String, Tensor)>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf, pos: 0 };

    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint {
            offset: 0,
            message: "bad magic".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {}", version)));
    }
    let desc_len = r.u64()? as usize;
    let desc = r.string(desc_len)?;
    let n_params = r.u32()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name_len = r.u32()? as usize;
        let name = r.string(name_len)?;
        let n_dims = r.u32()? as usize;
        let mut shape = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            shape.push(r.u64()? as usize);
        }
        let dtype = r.take(1)?[0];
        if dtype != DTYPE_F64 {
            return Err(r.err(format!("unsupported dtype {}", dtype)));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok((desc, params))
}

/// Copy loaded tensors into params, matched by name. Every param must be
/// present with an identical shape.
pub fn restore_params(loaded: &[(String, Tensor)], params: &mut [&mut Param]) -> Result<()> {
    for p in params.iter_mut() {
        let found = loaded
            .iter()
            .find(|(n, _)| *n == p.name)
            .ok_or_else(|| Error::Data(format!("checkpoint is missing param {}", p.name)))?;
        if found.1.shape != p.value.shape {
            return Err(Error::shape(
                format!("param {}", p.name),
                format!("{:?}", p.value.shape),
                format!("{:?}", found.1.shape),
            ));
        }
        p.value = found.1.clone();
        p.grad = Tensor::zeros(&p.value.shape);
    }
    Ok(())
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut f, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", hasher.finalize()))
}
