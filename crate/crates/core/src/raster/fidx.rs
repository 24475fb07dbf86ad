//! Per-pixel face-index map and its on-disk form.
//!
//! File layout (little-endian): `b"FIDX"`, width `u32`, height `u32`,
//! format version `u32` (= 1), then `width * height` face ids as `u32`,
//! row-major, with [`BACKGROUND`] for empty pixels.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::FaceId;

/// Face id stored for pixels not covered by any face.
pub const BACKGROUND: FaceId = u32::MAX;

const MAGIC: &[u8; 4] = b"FIDX";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceIndexMap {
    width: u32,
    height: u32,
    ids: Vec<FaceId>,
}

impl FaceIndexMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            ids: vec![BACKGROUND; width as usize * height as usize],
        }
    }

    pub fn from_ids(width: u32, height: u32, ids: Vec<FaceId>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if ids.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: ids.len(),
            });
        }
        Ok(Self { width, height, ids })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> FaceId {
        self.ids[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub(crate) fn set(&mut self, x: u32, y: u32, id: FaceId) {
        self.ids[y as usize * self.width as usize + x as usize] = id;
    }

    pub fn ids(&self) -> &[FaceId] {
        &self.ids
    }

    /// `(x, y, face)` for every covered pixel in row-major order.
    pub fn covered(&self) -> impl Iterator<Item = (u32, u32, FaceId)> + '_ {
        let w = self.width as usize;
        self.ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id != BACKGROUND)
            .map(move |(i, &id)| ((i % w) as u32, (i / w) as u32, id))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.ids.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&VERSION.to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::UnsupportedFormat(
                "not a FIDX face-index file".into(),
            ));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let (width, height, version) = (word(4), word(8), word(12));
        if version != VERSION {
            return Err(Error::UnsupportedFormat(format!("FIDX version {version}")));
        }
        let n = width as usize * height as usize;
        if bytes.len() != HEADER_LEN + 4 * n {
            return Err(Error::LengthMismatch {
                expected: HEADER_LEN + 4 * n,
                actual: bytes.len(),
            });
        }
        let ids = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { width, height, ids })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
