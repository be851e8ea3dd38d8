//! Canonical byte serialization of a spec and the digest that keys the cache.
//!
//! Layout (version 1). Every field is a big-endian `u32` byte length
//! followed by that many bytes of UTF-8:
//!
//! ```text
//! field(CANONICAL_MAGIC)
//! field(name)
//! field(signature_text)
//! field(description)
//! u32 test_count
//! test_count x ( field(tag) field(text) )
//! field(backend_id)
//! ```
//!
//! `tag` is one of `assertion`, `suite`, `property`, `natural_language`.
//! The digest is the lowercase hex SHA-256 of these bytes. Options other
//! than the backend identity are deliberately left out.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::FunctionSpec;
use crate::error::{Error, Result};

pub const CANONICAL_MAGIC: &str = "pythoness.spec/v1";

const TAGS: [&str; 4] = ["assertion", "suite", "property", "natural_language"];

/// Lowercase hex SHA-256 of the canonical serialization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpecHash(String);

impl SpecHash {
    pub fn parse(s: &str) -> Option<Self> {
        let ok = s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        ok.then(|| SpecHash(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SpecHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The hash-relevant projection of a [`FunctionSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalSpec {
    pub name: String,
    pub signature_text: String,
    pub description: String,
    /// `(tag, text)` pairs in declaration order.
    pub tests: Vec<(String, String)>,
    pub backend_id: String,
}

impl From<&FunctionSpec> for CanonicalSpec {
    fn from(spec: &FunctionSpec) -> Self {
        CanonicalSpec {
            name: spec.name.clone(),
            signature_text: spec.signature_text.clone(),
            description: spec.description.clone(),
            tests: spec
                .tests
                .iter()
                .map(|t| (t.tag().to_string(), t.text().to_string()))
                .collect(),
            backend_id: spec.options.backend_id.clone(),
        }
    }
}

impl CanonicalSpec {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let field = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u32).to_be_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        field(&mut out, CANONICAL_MAGIC);
        field(&mut out, &self.name);
        field(&mut out, &self.signature_text);
        field(&mut out, &self.description);
        out.extend_from_slice(&(self.tests.len() as u32).to_be_bytes());
        for (tag, text) in &self.tests {
            field(&mut out, tag);
            field(&mut out, text);
        }
        field(&mut out, &self.backend_id);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader { bytes, pos: 0 };
        let magic = reader.field()?;
        if magic != CANONICAL_MAGIC {
            return Err(Error::spec(format!("unknown canonical format {magic:?}")));
        }
        let name = reader.field()?;
        let signature_text = reader.field()?;
        let description = reader.field()?;
        let count = reader.u32()?;
        let mut tests = Vec::new();
        for _ in 0..count {
            let tag = reader.field()?;
            if !TAGS.contains(&tag.as_str()) {
                return Err(Error::spec(format!("unknown test tag {tag:?}")));
            }
            tests.push((tag, reader.field()?));
        }
        let backend_id = reader.field()?;
        if reader.pos != bytes.len() {
            return Err(Error::spec("trailing bytes after canonical spec"));
        }
        Ok(CanonicalSpec {
            name,
            signature_text,
            description,
            tests,
            backend_id,
        })
    }

    pub fn digest(&self) -> SpecHash {
        SpecHash(hex::encode(Sha256::digest(self.to_bytes())))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::spec("truncated canonical spec"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn field(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::spec("canonical field is not UTF-8"))
    }
}

pub fn hash_spec(spec: &FunctionSpec) -> SpecHash {
    CanonicalSpec::from(spec).digest()
}
