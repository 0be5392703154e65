//! Binary tensor segments.
//!
//! Each tensor is written as: name length (`u32` LE), UTF-8 name bytes,
//! rank (`u32` LE), one `u64` LE per dimension, then the data as
//! little-endian `f64` in row-major order.

use super::{NumericsError, Tensor};

pub fn write_tensor(out: &mut Vec<u8>, name: &str, tensor: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Cursor over a byte buffer that reports truncation as an error.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], NumericsError> {
        if self.remaining() < n {
            return Err(NumericsError::Truncated { offset: self.pos });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, NumericsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, NumericsError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, NumericsError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_tensor(r: &mut Reader<'_>) -> Result<(String, Tensor), NumericsError> {
    let name_len = r.u32()? as usize;
    let name = std::str::from_utf8(r.take(name_len)?)
        .map_err(|_| NumericsError::Corrupt("tensor name is not UTF-8".into()))?
        .to_string();
    let rank = r.u32()? as usize;
    if rank == 0 || rank > 8 {
        return Err(NumericsError::Corrupt(format!("tensor {name:?} has rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u64()? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| NumericsError::Corrupt(format!("tensor {name:?} is too large")))?;
    if n.checked_mul(8).is_none_or(|bytes| bytes > r.remaining()) {
        return Err(NumericsError::Truncated { offset: r.position() });
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(r.f64()?);
    }
    Ok((name, Tensor::new(shape, data)?))
}
