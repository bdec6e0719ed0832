//! The LSTC raster container.
//!
//! Layout:
//!
//! | bytes          | content                                        |
//! |----------------|------------------------------------------------|
//! | `0..6`         | magic `LSTC1\n`                                |
//! | `6..14`        | header length `H`, u64 little-endian           |
//! | `14..14+H`     | UTF-8 JSON header                              |
//! | `14+H..`       | `4 * d0 * d1 * d2` bytes of f32 little-endian  |
//!
//! The header carries `dims`, `days`, `dtype` (`"f32le"`), `order`
//! (`"day-major,row-major"`) and an optional `meta` object. NaN marks an
//! invalid cell. The same container holds scene stacks, feature rasters,
//! reanalysis series and model outputs; `meta.kind` tells them apart.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"LSTC1\n";
pub const DTYPE: &str = "f32le";
pub const ORDER: &str = "day-major,row-major";

/// Fixed-size prefix: magic plus the header length word.
pub const PREFIX_LEN: usize = 14;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dims: [usize; 3],
    days: Vec<u32>,
    dtype: String,
    order: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    meta: Option<Map<String, Value>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub dims: [usize; 3],
    /// One label per plane along the first axis.
    pub days: Vec<u32>,
    pub meta: Option<Map<String, Value>>,
    pub data: Vec<f32>,
}

impl Container {
    pub fn new(dims: [usize; 3], days: Vec<u32>, data: Vec<f32>) -> Self {
        Container {
            dims,
            days,
            meta: None,
            data,
        }
    }

    pub fn with_kind(mut self, kind: &str) -> Self {
        self.set_meta("kind", Value::String(kind.to_string()));
        self
    }

    pub fn set_meta(&mut self, key: &str, value: Value) {
        self.meta
            .get_or_insert_with(Map::new)
            .insert(key.to_string(), value);
    }

    pub fn meta_value(&self, key: &str) -> Option<&Value> {
        self.meta.as_ref().and_then(|m| m.get(key))
    }

    pub fn kind(&self) -> Option<&str> {
        self.meta_value("kind").and_then(Value::as_str)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        match self.kind() {
            Some(k) if k == kind => Ok(()),
            Some(k) => Err(Error::Format(format!("expected a '{kind}' container, found '{k}'"))),
            None => Err(Error::Format(format!("expected a '{kind}' container, found no kind"))),
        }
    }

    pub fn plane_len(&self) -> usize {
        self.dims[1] * self.dims[2]
    }

    pub fn plane(&self, i: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[i * n..(i + 1) * n]
    }

    fn check_shape(&self) -> Result<()> {
        let expected = self.dims.iter().product::<usize>();
        if self.data.len() != expected {
            return Err(Error::Format(format!(
                "payload holds {} values but dims {:?} imply {expected}",
                self.data.len(),
                self.dims
            )));
        }
        if self.days.len() != self.dims[0] {
            return Err(Error::Format(format!(
                "days array has {} entries but dims[0] = {}",
                self.days.len(),
                self.dims[0]
            )));
        }
        Ok(())
    }

    pub fn header_json(&self) -> Result<String> {
        let header = Header {
            dims: self.dims,
            days: self.days.clone(),
            dtype: DTYPE.to_string(),
            order: ORDER.to_string(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string(&header)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check_shape()?;
        let header = self.header_json()?;
        let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            let shown = String::from_utf8_lossy(&bytes[..bytes.len().min(MAGIC.len())]).into_owned();
            return Err(Error::Format(format!("bad magic {shown:?}")));
        }
        if bytes.len() < PREFIX_LEN {
            return Err(Error::Truncated {
                expected: PREFIX_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        let mut word = [0u8; 8];
        word.copy_from_slice(&bytes[6..PREFIX_LEN]);
        let header_len = u64::from_le_bytes(word);
        let header_end = (PREFIX_LEN as u64).saturating_add(header_len);
        if (bytes.len() as u64) < header_end {
            return Err(Error::Truncated {
                expected: header_end,
                actual: bytes.len() as u64,
            });
        }
        let header_end = header_end as usize;
        let text = std::str::from_utf8(&bytes[PREFIX_LEN..header_end])
            .map_err(|e| Error::Format(format!("header is not UTF-8: {e}")))?;
        let header: Header = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.dtype != DTYPE {
            return Err(Error::Format(format!("unsupported dtype {:?}", header.dtype)));
        }
        if header.order != ORDER {
            return Err(Error::Format(format!("unsupported order {:?}", header.order)));
        }
        let count = header
            .dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("dims overflow".into()))?;
        let expected = header_end as u64 + 4 * count as u64;
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(Error::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                actual - expected
            )));
        }
        let data = bytes[header_end..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let container = Container {
            dims: header.dims,
            days: header.days,
            meta: header.meta,
            data,
        };
        container.check_shape()?;
        Ok(container)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut file = fs::File::create(path)?;
        file.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Container::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_magic_is_a_format_error() {
        let mut bytes = Container::new([1, 1, 1], vec![1], vec![300.0]).to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(Container::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn short_payload_reports_byte_counts() {
        let bytes = Container::new([1, 2, 2], vec![1], vec![300.0; 4]).to_bytes().unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match Container::from_bytes(cut) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, bytes.len() as u64);
                assert_eq!(actual, bytes.len() as u64 - 3);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn header_longer_than_file_is_truncation() {
        let mut bytes = Container::new([1, 1, 1], vec![1], vec![300.0]).to_bytes().unwrap();
        bytes[6..14].copy_from_slice(&10_000u64.to_le_bytes());
        assert!(matches!(Container::from_bytes(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = Container::new([1, 1, 1], vec![1], vec![300.0]).to_bytes().unwrap();
        bytes.push(0);
        assert!(matches!(Container::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn header_key_order_is_fixed() {
        let c = Container::new([1, 1, 2], vec![7], vec![1.0, 2.0]).with_kind("test");
        assert_eq!(
            c.header_json().unwrap(),
            r#"{"dims":[1,1,2],"days":[7],"dtype":"f32le","order":"day-major,row-major","meta":{"kind":"test"}}"#
        );
    }

    #[test]
    fn nan_payload_survives() {
        let c = Container::new([1, 1, 2], vec![1], vec![f32::NAN, 1.5]);
        let back = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert!(back.data[0].is_nan());
        assert_eq!(back.data[1], 1.5);
    }
}
