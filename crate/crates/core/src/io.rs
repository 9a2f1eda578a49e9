//! Little-endian binary readers/writers for model artifacts.
//!
//! Every artifact starts with a 4-byte magic tag and a u32 format version.

use std::io::{Read, Write};

use crate::{Error, Result};

pub(crate) struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn magic(&mut self, tag: &[u8; 4], version: u32) -> Result<()> {
        self.inner.write_all(tag)?;
        self.u32(version)
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.inner.write_all(&[v])?;
        Ok(())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.inner.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn f64_slice(&mut self, vs: &[f64]) -> Result<()> {
        self.u64(vs.len() as u64)?;
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub(crate) struct BinReader<R: Read> {
    inner: R,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn expect_magic(&mut self, tag: &[u8; 4], version: u32) -> Result<()> {
        let mut buf = [0u8; 4];
        self.inner.read_exact(&mut buf)?;
        if &buf != tag {
            return Err(Error::Format(format!(
                "bad magic tag {:?}, expected {:?}",
                buf, tag
            )));
        }
        let got = self.u32()?;
        if got != version {
            return Err(Error::Format(format!(
                "unsupported format version {got}, expected {version}"
            )));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        let mut buf = [0u8; 1];
        self.inner.read_exact(&mut buf)?;
        Ok(buf[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.inner.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.inner.read_exact(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    }

    pub fn f64(&mut self) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.inner.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(format!("invalid utf-8 string: {e}")))
    }

    pub fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.f64()?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_primitives() {
        let mut buf = Vec::new();
        let mut w = BinWriter::new(&mut buf);
        w.magic(b"XTST", 3).unwrap();
        w.u8(7).unwrap();
        w.u32(42).unwrap();
        w.u64(1 << 40).unwrap();
        w.f64(-0.25).unwrap();
        w.str("héllo").unwrap();
        w.f64_slice(&[1.0, 2.5]).unwrap();
        w.finish().unwrap();

        let mut r = BinReader::new(&buf[..]);
        r.expect_magic(b"XTST", 3).unwrap();
        assert_eq!(r.u8().unwrap(), 7);
        assert_eq!(r.u32().unwrap(), 42);
        assert_eq!(r.u64().unwrap(), 1 << 40);
        assert_eq!(r.f64().unwrap(), -0.25);
        assert_eq!(r.str().unwrap(), "héllo");
        assert_eq!(r.f64_vec().unwrap(), vec![1.0, 2.5]);
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut buf = Vec::new();
        let mut w = BinWriter::new(&mut buf);
        w.magic(b"XAAA", 1).unwrap();
        w.finish().unwrap();
        let mut r = BinReader::new(&buf[..]);
        assert!(r.expect_magic(b"XBBB", 1).is_err());
    }
}
