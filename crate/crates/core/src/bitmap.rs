//! Plain 8-bit raster images used for rendered views, masks and textures.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};

/// Row-major 8-bit image with 1 (mask) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32, channels: u8) -> Self {
        Self::filled(width, height, channels, 0)
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        let len = width as usize * height as usize * channels as usize;
        Self {
            width,
            height,
            channels,
            data: vec![value; len],
        }
    }

    pub fn from_raw(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "bitmap channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[u8]) {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        self.data[o..o + c].copy_from_slice(&value[..c]);
    }

    pub fn decode_png(bytes: &[u8], channels: u8) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))?;
        match channels {
            1 => {
                let g = img.into_luma8();
                let (w, h) = g.dimensions();
                Self::from_raw(w, h, 1, g.into_raw())
            }
            3 => {
                let rgb = img.into_rgb8();
                let (w, h) = rgb.dimensions();
                Self::from_raw(w, h, 3, rgb.into_raw())
            }
            c => Err(Error::InvalidInput(format!(
                "unsupported channel count {c}"
            ))),
        }
    }

    /// PNG encoding with fixed encoder settings so identical bitmaps yield identical bytes.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let encoder = PngEncoder::new_with_quality(
            Cursor::new(&mut out),
            CompressionType::Default,
            FilterType::Adaptive,
        );
        let color = if self.channels == 1 {
            ExtendedColorType::L8
        } else {
            ExtendedColorType::Rgb8
        };
        encoder
            .write_image(&self.data, self.width, self.height, color)
            .map_err(|e| Error::Image(e.to_string()))?;
        Ok(out)
    }

    pub fn load_png(path: impl AsRef<Path>, channels: u8) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_png(&bytes, channels)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}
