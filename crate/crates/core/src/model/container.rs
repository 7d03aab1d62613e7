//! Versioned binary container for fitted models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "PBMODEL\0"
//! version   u16      currently 1
//! kind      u8       model-type tag
//! n_blobs   u32
//! n_blobs × { name_len u16 | name utf-8 | dtype u8 (1 f64, 2 u64, 3 u32) | len u64 | len values }
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a save/load cycle is bit-exact.

use std::io::{Read, Write};

use super::ModelKind;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PBMODEL\0";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Blob {
    F64(Vec<f64>),
    U64(Vec<u64>),
    U32(Vec<u32>),
}

impl Blob {
    fn dtype(&self) -> u8 {
        match self {
            Blob::F64(_) => 1,
            Blob::U64(_) => 2,
            Blob::U32(_) => 3,
        }
    }

    fn len(&self) -> usize {
        match self {
            Blob::F64(v) => v.len(),
            Blob::U64(v) => v.len(),
            Blob::U32(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelContainer {
    pub kind: ModelKind,
    blobs: Vec<(String, Blob)>,
}

impl ModelContainer {
    pub fn new(kind: ModelKind) -> Self {
        ModelContainer {
            kind,
            blobs: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, blob: Blob) -> &mut Self {
        self.blobs.push((name.to_string(), blob));
        self
    }

    pub fn push_f64(&mut self, name: &str, v: Vec<f64>) -> &mut Self {
        self.push(name, Blob::F64(v))
    }

    pub fn push_u64(&mut self, name: &str, v: Vec<u64>) -> &mut Self {
        self.push(name, Blob::U64(v))
    }

    pub fn push_u32(&mut self, name: &str, v: Vec<u32>) -> &mut Self {
        self.push(name, Blob::U32(v))
    }

    fn blob(&self, name: &str) -> Result<&Blob> {
        self.blobs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b)
            .ok_or_else(|| Error::validation(format!("model file lacks blob {name:?}")))
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        match self.blob(name)? {
            Blob::F64(v) => Ok(v),
            _ => Err(Error::validation(format!("blob {name:?} is not f64"))),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        match self.blob(name)? {
            Blob::U64(v) => Ok(v),
            _ => Err(Error::validation(format!("blob {name:?} is not u64"))),
        }
    }

    pub fn u32s(&self, name: &str) -> Result<&[u32]> {
        match self.blob(name)? {
            Blob::U32(v) => Ok(v),
            _ => Err(Error::validation(format!("blob {name:?} is not u32"))),
        }
    }

    pub fn f64_scalar(&self, name: &str) -> Result<f64> {
        match self.f64s(name)? {
            [x] => Ok(*x),
            _ => Err(Error::validation(format!("blob {name:?} is not a scalar"))),
        }
    }

    pub fn u64_scalar(&self, name: &str) -> Result<u64> {
        match self.u64s(name)? {
            [x] => Ok(*x),
            _ => Err(Error::validation(format!("blob {name:?} is not a scalar"))),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[self.kind.tag()])?;
        w.write_all(&(self.blobs.len() as u32).to_le_bytes())?;
        for (name, blob) in &self.blobs {
            let nb = name.as_bytes();
            let name_len = u16::try_from(nb.len())
                .map_err(|_| Error::validation("blob name too long"))?;
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(nb)?;
            w.write_all(&[blob.dtype()])?;
            w.write_all(&(blob.len() as u64).to_le_bytes())?;
            match blob {
                Blob::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_bits().to_le_bytes()))?,
                Blob::U64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                Blob::U32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::validation("not a model file (bad magic)"));
        }
        let version = u16::from_le_bytes(read_array(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(Error::validation(format!(
                "unsupported model format version {version}"
            )));
        }
        let [tag] = read_array::<1, _>(&mut r)?;
        let kind = ModelKind::from_tag(tag)?;
        let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut out = ModelContainer::new(kind);
        for _ in 0..n {
            let name_len = u16::from_le_bytes(read_array(&mut r)?) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::validation("blob name is not utf-8"))?;
            let [dtype] = read_array::<1, _>(&mut r)?;
            let len = u64::from_le_bytes(read_array(&mut r)?) as usize;
            let blob = match dtype {
                1 => Blob::F64(
                    (0..len)
                        .map(|_| Ok(f64::from_bits(u64::from_le_bytes(read_array(&mut r)?))))
                        .collect::<Result<_>>()?,
                ),
                2 => Blob::U64(
                    (0..len)
                        .map(|_| Ok(u64::from_le_bytes(read_array(&mut r)?)))
                        .collect::<Result<_>>()?,
                ),
                3 => Blob::U32(
                    (0..len)
                        .map(|_| Ok(u32::from_le_bytes(read_array(&mut r)?)))
                        .collect::<Result<_>>()?,
                ),
                other => return Err(Error::validation(format!("unknown blob dtype {other}"))),
            };
            out.blobs.push((name, blob));
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}
