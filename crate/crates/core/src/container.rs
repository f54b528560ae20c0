//! Self-describing binary container shared by network parameters, teachers
//! and recorded episodes.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "NRCO"
//! 4       4     format version (u32, currently 1)
//! 8       8     header length H in bytes (u64)
//! 16      H     header: UTF-8 JSON object
//! 16+H    ...   payload: f64 LE values of each tensor, in header order
//! ```
//!
//! The header always has a string field `tag` and an array `tensors` of
//! `{ "name": .., "shape": [..] }` describing the payload in order. All other
//! header fields are specific to the tag.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"NRCO";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub tag: String,
    pub fields: Map<String, Value>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new(tag: impl Into<String>) -> Self {
        Container {
            tag: tag.into(),
            fields: Map::new(),
            tensors: Vec::new(),
        }
    }

    pub fn with_field(mut self, key: &str, value: impl Serialize) -> Self {
        self.fields.insert(
            key.to_string(),
            serde_json::to_value(value).expect("header fields are plain data"),
        );
        self
    }

    pub fn with_tensor(mut self, name: &str, tensor: Tensor) -> Self {
        self.tensors.push((name.to_string(), tensor));
        self
    }

    pub fn field<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self
            .fields
            .get(key)
            .ok_or_else(|| Error::Container(format!("missing header field `{key}`")))?;
        serde_json::from_value(v.clone())
            .map_err(|e| Error::Container(format!("header field `{key}`: {e}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Container(format!("missing tensor `{name}`")))
    }

    pub fn expect_tag(&self, tag: &str) -> Result<()> {
        if self.tag != tag {
            return Err(Error::Container(format!(
                "expected tag `{tag}`, found `{}`",
                self.tag
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = self.fields.clone();
        header.insert("tag".into(), Value::String(self.tag.clone()));
        let entries: Vec<TensorEntry> = self
            .tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect();
        header.insert(
            "tensors".into(),
            serde_json::to_value(entries).expect("plain data"),
        );
        let header = serde_json::to_vec(&Value::Object(header)).expect("plain data");

        let payload_len: usize = self.tensors.iter().map(|(_, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + header.len() + payload_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Container("truncated header".into()))?;
        let mut fields: Map<String, Value> = match serde_json::from_slice(&bytes[16..header_end])? {
            Value::Object(m) => m,
            _ => return Err(Error::Container("header is not an object".into())),
        };
        let tag = match fields.remove("tag") {
            Some(Value::String(s)) => s,
            _ => return Err(Error::Container("header lacks `tag`".into())),
        };
        let entries: Vec<TensorEntry> = match fields.remove("tensors") {
            Some(v) => serde_json::from_value(v)?,
            None => return Err(Error::Container("header lacks `tensors`".into())),
        };
        let mut offset = header_end;
        let mut tensors = Vec::with_capacity(entries.len());
        for entry in entries {
            let n: usize = entry.shape.iter().product();
            let end = offset
                .checked_add(n * 8)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::Container(format!("truncated tensor `{}`", entry.name)))?;
            let data = bytes[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((entry.name, Tensor::from_vec(&entry.shape, data)?));
            offset = end;
        }
        if offset != bytes.len() {
            return Err(Error::Container("trailing bytes after payload".into()));
        }
        Ok(Container {
            tag,
            fields,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Write to a temporary file in the destination directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
