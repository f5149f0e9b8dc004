//! Little-endian binary container helpers shared by the model serializers.
//!
//! Every container starts with a 4-byte magic tag followed by a `u32`
//! format version. Scalars are little-endian; floats are IEEE-754 `f64`.

use std::io::{Cursor, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(magic);
        buf.write_u32::<LittleEndian>(version).unwrap();
        Self { buf }
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.write_u32::<LittleEndian>(v).unwrap();
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.write_u64::<LittleEndian>(v).unwrap();
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.write_f64::<LittleEndian>(v).unwrap();
        self
    }

    pub fn f64s(&mut self, vs: &[f64]) -> &mut Self {
        self.buf.reserve(vs.len() * 8);
        for &v in vs {
            self.buf.write_f64::<LittleEndian>(v).unwrap();
        }
        self
    }

    /// Length-prefixed (`u64`) byte blob.
    pub fn blob(&mut self, bytes: &[u8]) -> &mut Self {
        self.u64(bytes.len() as u64);
        self.buf.write_all(bytes).unwrap();
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Decoder<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Decoder<'a> {
    /// Checks magic and version, returning a decoder positioned after them.
    pub fn new(bytes: &'a [u8], magic: &[u8; 4], version: u32) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Truncated {
                expected: 8,
                missing: 8 - bytes.len() as u64,
            });
        }
        if &bytes[..4] != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                &bytes[..4],
                std::str::from_utf8(magic).unwrap_or("?")
            )));
        }
        let mut cur = Cursor::new(bytes);
        cur.set_position(4);
        let found = cur.read_u32::<LittleEndian>()?;
        if found != version {
            return Err(Error::Version {
                found,
                expected: version,
            });
        }
        Ok(Self { cur })
    }

    fn remaining(&self) -> u64 {
        self.cur.get_ref().len() as u64 - self.cur.position()
    }

    fn need(&self, n: u64) -> Result<()> {
        let left = self.remaining();
        if left < n {
            Err(Error::Truncated {
                expected: n,
                missing: n - left,
            })
        } else {
            Ok(())
        }
    }

    pub fn u8(&mut self) -> Result<u8> {
        self.need(1)?;
        Ok(self.cur.read_u8()?)
    }

    pub fn u32(&mut self) -> Result<u32> {
        self.need(4)?;
        Ok(self.cur.read_u32::<LittleEndian>()?)
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.need(8)?;
        Ok(self.cur.read_u64::<LittleEndian>()?)
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("size {v} overflows usize")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.need(8)?;
        Ok(self.cur.read_f64::<LittleEndian>()?)
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = (n as u64)
            .checked_mul(8)
            .ok_or_else(|| Error::Format("array length overflow".into()))?;
        self.need(bytes)?;
        let mut out = vec![0.0; n];
        self.cur.read_f64_into::<LittleEndian>(&mut out)?;
        Ok(out)
    }

    pub fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()?;
        self.need(n)?;
        let start = self.cur.position() as usize;
        let end = start + n as usize;
        self.cur.set_position(end as u64);
        Ok(&self.cur.get_ref()[start..end])
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        self.need(n as u64)?;
        let mut out = vec![0u8; n];
        self.cur.read_exact(&mut out)?;
        Ok(out)
    }

    pub fn finish(self) -> Result<()> {
        let left = self.remaining();
        if left == 0 {
            Ok(())
        } else {
            Err(Error::Format(format!("{left} trailing bytes")))
        }
    }
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}
