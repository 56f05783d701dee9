//! Little-endian binary encoding shared by checkpoints and serving stores.
//!
//! A file is a magic tag, a `u32` format version, then a sequence of
//! primitive fields and named tensors. A tensor record is
//! `name (u32 len + utf8) | dtype u8 | ndim u32 | dims u64* | values`.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            t => Err(Error::Format(format!("unknown dtype tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner
            .write_all(bytes)
            .map_err(|e| Error::Format(format!("write failed: {e}")))
    }

    pub fn header(&mut self, magic: &[u8; 8], version: u32) -> Result<()> {
        self.put(magic)?;
        self.u32(version)
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.put(&[v])
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.put(s.as_bytes())
    }

    pub fn tensor(&mut self, name: &str, shape: &[usize], data: &[f64], dtype: DType) -> Result<()> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.str(name)?;
        self.u8(dtype as u8)?;
        self.u32(shape.len() as u32)?;
        for &d in shape {
            self.u64(d as u64)?;
        }
        match dtype {
            DType::F32 => {
                let mut buf = Vec::with_capacity(data.len() * 4);
                for &v in data {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
                self.put(&buf)
            }
            DType::F64 => {
                let mut buf = Vec::with_capacity(data.len() * 8);
                for &v in data {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                self.put(&buf)
            }
        }
    }
}

pub struct BinReader<R: Read> {
    inner: R,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated input: {e}")))?;
        Ok(buf)
    }

    fn take_vec(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated input: {e}")))?;
        Ok(buf)
    }

    /// Reads and checks the magic tag, returning the format version.
    pub fn header(&mut self, magic: &[u8; 8]) -> Result<u32> {
        let got = self.take::<8>()?;
        if &got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(magic)
            )));
        }
        self.u32()
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take_vec(len)?)
            .map_err(|e| Error::Format(format!("invalid utf-8 string: {e}")))
    }

    pub fn tensor(&mut self) -> Result<NamedTensor> {
        let name = self.str()?;
        let dtype = DType::from_tag(self.u8()?)?;
        let ndim = self.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let data = match dtype {
            DType::F32 => self
                .take_vec(count * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            DType::F64 => self
                .take_vec(count * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        };
        Ok(NamedTensor { name, shape, data })
    }

    /// Reads a tensor and checks its name and shape.
    pub fn expect_tensor(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self.tensor()?;
        if t.name != name {
            return Err(Error::Format(format!(
                "expected tensor `{name}`, found `{}`",
                t.name
            )));
        }
        if t.shape != shape {
            return Err(Error::Format(format!(
                "tensor `{name}` has shape {:?}, expected {:?}",
                t.shape, shape
            )));
        }
        Ok(t.data)
    }
}
