//! Binary field container shared by samples, training pairs, predictions and
//! service payloads.
//!
//! Layout (little-endian):
//!
//! | bytes          | content                                  |
//! |----------------|------------------------------------------|
//! | 4              | magic `GWHP`                             |
//! | 2              | format version (`u16`)                   |
//! | 2 + 2          | `nx`, `ny` (`u16`)                       |
//! | 1              | channel count (`u8`)                     |
//! | 16 × channels  | ASCII channel names, NUL padded          |
//! | 4 × nx·ny × ch | channel data as `f32`, row-major         |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GWHP";
pub const VERSION: u16 = 1;
pub const NAME_LEN: usize = 16;
const HEADER_LEN: usize = 4 + 2 + 2 + 2 + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldContainer {
    pub nx: usize,
    pub ny: usize,
    channels: Vec<(String, Vec<f32>)>,
}

impl FieldContainer {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nx > u16::MAX as usize || ny > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "container size {nx}x{ny} not representable"
            )));
        }
        Ok(Self {
            nx,
            ny,
            channels: Vec::new(),
        })
    }

    pub fn push(&mut self, name: &str, values: Vec<f32>) -> Result<()> {
        if name.is_empty() || name.len() > NAME_LEN || !name.is_ascii() || name.contains('\0') {
            return Err(Error::InvalidParameter(format!(
                "invalid channel name {name:?}"
            )));
        }
        if values.len() != self.nx * self.ny {
            return Err(Error::LengthMismatch {
                expected: self.nx * self.ny,
                got: values.len(),
            });
        }
        if self.channels.len() == u8::MAX as usize {
            return Err(Error::InvalidParameter("too many channels".into()));
        }
        if self.channel(name).is_some() {
            return Err(Error::InvalidParameter(format!(
                "duplicate channel {name:?}"
            )));
        }
        self.channels.push((name.to_string(), values));
        Ok(())
    }

    /// Pushes f64 values, rounding to f32.
    pub fn push_f64(&mut self, name: &str, values: &[f64]) -> Result<()> {
        self.push(name, values.iter().map(|&v| v as f32).collect())
    }

    pub fn with(mut self, name: &str, values: &[f64]) -> Result<Self> {
        self.push_f64(name, values)?;
        Ok(self)
    }

    pub fn channel(&self, name: &str) -> Option<&[f32]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f32]> {
        self.channel(name)
            .ok_or_else(|| Error::Corrupt(format!("missing channel {name:?}")))
    }

    /// Channel widened to f64.
    pub fn channel_f64(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.require(name)?.iter().map(|&v| v as f64).collect())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|(n, _)| n.as_str())
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let n = self.nx * self.ny;
        let mut out = Vec::with_capacity(HEADER_LEN + self.channels.len() * (NAME_LEN + 4 * n));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.nx as u16).to_le_bytes());
        out.extend_from_slice(&(self.ny as u16).to_le_bytes());
        out.push(self.channels.len() as u8);
        for (name, _) in &self.channels {
            let mut buf = [0u8; NAME_LEN];
            buf[..name.len()].copy_from_slice(name.as_bytes());
            out.extend_from_slice(&buf);
        }
        for (_, values) in &self.channels {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Corrupt(format!(
                "container truncated: {} bytes",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Corrupt("bad container magic".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let version = u16_at(4);
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let nx = u16_at(6) as usize;
        let ny = u16_at(8) as usize;
        let count = bytes[10] as usize;
        let n = nx * ny;
        let expected = HEADER_LEN + count * (NAME_LEN + 4 * n);
        if bytes.len() != expected {
            return Err(Error::Corrupt(format!(
                "container length {} does not match header ({expected})",
                bytes.len()
            )));
        }
        let mut out = Self::new(nx, ny)?;
        let mut offset = HEADER_LEN;
        let mut names = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = &bytes[offset..offset + NAME_LEN];
            let end = raw.iter().position(|&b| b == 0).unwrap_or(NAME_LEN);
            if raw[end..].iter().any(|&b| b != 0) || !raw[..end].is_ascii() {
                return Err(Error::Corrupt("malformed channel name".into()));
            }
            names.push(String::from_utf8_lossy(&raw[..end]).into_owned());
            offset += NAME_LEN;
        }
        for name in names {
            let values = bytes[offset..offset + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            offset += 4 * n;
            out.push(&name, values)
                .map_err(|e| Error::Corrupt(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}
