//! Little-endian primitives shared by the binary file formats.

use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub(crate) struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self {
            cur: Cursor::new(bytes),
        }
    }

    pub fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    fn need(&self, n: usize, what: &str) -> Result<()> {
        if self.remaining() < n {
            return Err(Error::format(format!(
                "truncated payload reading {what}: need {n} bytes, {} left",
                self.remaining()
            )));
        }
        Ok(())
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        self.need(4, "magic")?;
        let mut got = [0u8; 4];
        for b in &mut got {
            *b = self.cur.read_u8().expect("length checked");
        }
        if &got != expected {
            return Err(Error::format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    pub fn version(&mut self, supported: u32) -> Result<u32> {
        let v = self.u32("version")?;
        if v == 0 || v > supported {
            return Err(Error::format(format!(
                "unsupported version {v} (this build reads up to version {supported})"
            )));
        }
        Ok(v)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        self.need(1, what)?;
        Ok(self.cur.read_u8().expect("length checked"))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        self.need(4, what)?;
        Ok(self.cur.read_u32::<LittleEndian>().expect("length checked"))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        self.need(8, what)?;
        Ok(self.cur.read_u64::<LittleEndian>().expect("length checked"))
    }

    pub fn flag(&mut self, what: &str) -> Result<bool> {
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(format!("{what} flag must be 0 or 1, got {other}"))),
        }
    }

    /// Reads `n` floats, widened to `f64`. Non-finite values are rejected.
    pub fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::format(format!("{what}: length overflow")))?;
        self.need(bytes, what)?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let v = self.cur.read_f32::<LittleEndian>().expect("length checked");
            if !v.is_finite() {
                return Err(Error::format(format!("{what}: non-finite value {v}")));
            }
            out.push(f64::from(v));
        }
        Ok(out)
    }

    pub fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        self.need(len, what)?;
        let start = self.cur.position() as usize;
        let bytes = &self.cur.get_ref()[start..start + len];
        self.cur.set_position((start + len) as u64);
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::format(format!("{what}: invalid UTF-8")))
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(format!(
                "{} trailing bytes after payload",
                self.remaining()
            )));
        }
        Ok(())
    }
}

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.write_u32::<LittleEndian>(v).expect("vec write");
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.write_u64::<LittleEndian>(v).expect("vec write");
    }

    pub fn f32s(&mut self, values: &[f64]) {
        for &v in values {
            self.buf
                .write_f32::<LittleEndian>(v as f32)
                .expect("vec write");
        }
    }

    pub fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes via a temp file in the target directory, then renames over `path`.
pub(crate) fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
