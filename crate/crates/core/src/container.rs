//! Binary container shared by trajectories, metric/connection grids and scale
//! lattices.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes   "BLNDNRM1"
//! hlen    u64       length of the JSON header
//! header  hlen      UTF-8 JSON object; always carries a "kind" string
//! nsec    u32       number of sections
//! per section:
//!   nlen  u16, name bytes
//!   dtype u8        0 = f64, 1 = u8
//!   count u64       element count
//!   data            count * sizeof(dtype) bytes
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BLNDNRM1";

#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    F64(Vec<f64>),
    U8(Vec<u8>),
}

#[derive(Debug, Clone)]
pub struct Container {
    pub header: serde_json::Value,
    pub sections: BTreeMap<String, Section>,
}

impl Container {
    pub fn new(kind: &str, header: &impl Serialize) -> Result<Self> {
        let mut value = serde_json::to_value(header)?;
        match value.as_object_mut() {
            Some(obj) => {
                obj.insert("kind".into(), serde_json::Value::String(kind.into()));
            }
            None => {
                return Err(Error::InvalidArgument(
                    "container header must serialize to a JSON object".into(),
                ))
            }
        }
        Ok(Self {
            header: value,
            sections: BTreeMap::new(),
        })
    }

    pub fn with_f64(mut self, name: &str, data: Vec<f64>) -> Self {
        self.sections.insert(name.into(), Section::F64(data));
        self
    }

    pub fn with_u8(mut self, name: &str, data: Vec<u8>) -> Self {
        self.sections.insert(name.into(), Section::U8(data));
        self
    }

    pub fn kind(&self) -> Option<&str> {
        self.header.get("kind").and_then(|k| k.as_str())
    }

    pub fn header_as<T: DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_value(self.header.clone())?)
    }

    pub fn take_f64(&mut self, name: &str) -> Option<Vec<f64>> {
        match self.sections.remove(name) {
            Some(Section::F64(v)) => Some(v),
            Some(other) => {
                self.sections.insert(name.into(), other);
                None
            }
            None => None,
        }
    }

    pub fn take_u8(&mut self, name: &str) -> Option<Vec<u8>> {
        match self.sections.remove(name) {
            Some(Section::U8(v)) => Some(v),
            Some(other) => {
                self.sections.insert(name.into(), other);
                None
            }
            None => None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(header.len() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, section) in &self.sections {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match section {
                Section::F64(v) => {
                    out.push(0);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Section::U8(v) => {
                    out.push(1);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    out.extend_from_slice(v);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0, origin };
        if cur.take(8)? != MAGIC {
            return Err(Error::format(origin, "bad magic"));
        }
        let hlen = cur.u64()? as usize;
        let header: serde_json::Value = serde_json::from_slice(cur.take(hlen)?)?;
        let nsec = cur.u32()?;
        let mut sections = BTreeMap::new();
        for _ in 0..nsec {
            let nlen = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(nlen)?)
                .map_err(|_| Error::format(origin, "section name is not UTF-8"))?
                .to_string();
            let dtype = cur.take(1)?[0];
            let count = cur.u64()? as usize;
            let section = match dtype {
                0 => {
                    let raw = cur.take(count.checked_mul(8).ok_or_else(|| {
                        Error::format(origin, "section length overflow")
                    })?)?;
                    Section::F64(
                        raw.chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                1 => Section::U8(cur.take(count)?.to_vec()),
                other => return Err(Error::format(origin, format!("unknown dtype {other}"))),
            };
            sections.insert(name, section);
        }
        Ok(Self { header, sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Loads a container and checks its declared kind.
    pub fn load_kind(path: &Path, kind: &str) -> Result<Self> {
        let c = Self::load(path)?;
        match c.kind() {
            Some(k) if k == kind => Ok(c),
            other => Err(Error::format(
                path,
                format!("expected container kind `{kind}`, found {other:?}"),
            )),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.origin, "truncated container"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bytes_round_trip(data in proptest::collection::vec(-1e6f64..1e6, 0..64),
                            mask in proptest::collection::vec(any::<u8>(), 0..64)) {
            let c = Container::new("test", &serde_json::json!({"n": data.len()}))
                .unwrap()
                .with_f64("data", data.clone())
                .with_u8("mask", mask.clone());
            let bytes = c.to_bytes().unwrap();
            let mut back = Container::from_bytes(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(back.kind(), Some("test"));
            prop_assert_eq!(back.take_f64("data").unwrap(), data);
            prop_assert_eq!(back.take_u8("mask").unwrap(), mask);
        }
    }

    #[test]
    fn truncated_input_is_rejected() {
        let c = Container::new("t", &serde_json::json!({}))
            .unwrap()
            .with_f64("x", vec![1.0, 2.0]);
        let bytes = c.to_bytes().unwrap();
        let err = Container::from_bytes(&bytes[..bytes.len() - 3], Path::new("mem"));
        assert!(matches!(err, Err(Error::Format { .. })));
    }
}
