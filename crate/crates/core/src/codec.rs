//! Canonical byte encoding used as the preimage for every hash and signature.
//!
//! The format is a strict subset of JSON:
//!
//! * objects carry their keys in byte-lexicographic order,
//! * arrays keep insertion order,
//! * unsigned integers are written as decimal ASCII,
//! * strings are UTF-8 between double quotes with only `"` and `\` escaped,
//! * byte strings are written as lowercase hex strings,
//! * no whitespace anywhere.
//!
//! Control characters (U+0000 to U+001F) have no representation and are
//! rejected, so every encodable value has exactly one encoding.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("ENCODE_UNREPRESENTABLE: field `{field}` contains a control character")]
    Unrepresentable { field: String },
}

/// Intermediate value tree for canonical encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Canon {
    Int(u64),
    Str(String),
    Arr(Vec<Canon>),
    Obj(BTreeMap<&'static str, Canon>),
}

impl Canon {
    pub fn str(s: impl Into<String>) -> Self {
        Canon::Str(s.into())
    }

    pub fn bytes(b: &[u8]) -> Self {
        Canon::Str(hex::encode(b))
    }

    pub fn obj<const N: usize>(fields: [(&'static str, Canon); N]) -> Self {
        Canon::Obj(fields.into_iter().collect())
    }
}

/// Types with a canonical encoding.
pub trait Canonical {
    fn canon(&self) -> Canon;
}

pub fn canonical_encode<T: Canonical + ?Sized>(value: &T) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(256);
    write_canon(&value.canon(), "$", &mut out)?;
    Ok(out)
}

pub fn encode_canon(value: &Canon) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(256);
    write_canon(value, "$", &mut out)?;
    Ok(out)
}

fn write_canon(value: &Canon, path: &str, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    match value {
        Canon::Int(n) => out.extend_from_slice(n.to_string().as_bytes()),
        Canon::Str(s) => write_str(s, path, out)?,
        Canon::Arr(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canon(item, path, out)?;
            }
            out.push(b']');
        }
        Canon::Obj(fields) => {
            out.push(b'{');
            for (i, (key, item)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_str(key, path, out)?;
                out.push(b':');
                write_canon(item, key, out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_str(s: &str, field: &str, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    out.push(b'"');
    for &b in s.as_bytes() {
        match b {
            0x00..=0x1f => {
                return Err(EncodeError::Unrepresentable {
                    field: field.to_string(),
                })
            }
            b'"' | b'\\' => {
                out.push(b'\\');
                out.push(b);
            }
            _ => out.push(b),
        }
    }
    out.push(b'"');
    Ok(())
}
