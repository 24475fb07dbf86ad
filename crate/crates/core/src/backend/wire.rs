//! JSON bodies of the detection/segmentation sidecar protocol.
//!
//! `POST /detect`  `{"image": <base64 PNG RGB>, "prompt": <text>}` ->
//! `{"detections": [{"bbox": [x0, y0, x1, y1], "score": s}, ...]}`
//!
//! `POST /segment` `{"image": <base64 PNG>, "bbox": [x0, y0, x1, y1]}` ->
//! `{"mask": <base64 1-channel PNG, 0/255>}`
//!
//! `GET /health` -> `{"status": ..., "models": {"detector": .., "segmenter": .., "texture": ..}}`

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Detection, MaskImage};
use crate::bitmap::Bitmap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: String,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub models: BTreeMap<String, String>,
}

pub fn encode_png_base64(bitmap: &Bitmap) -> Result<String> {
    Ok(STANDARD.encode(bitmap.encode_png()?))
}

pub fn decode_png_base64(text: &str, channels: u8) -> Result<Bitmap> {
    let bytes = STANDARD
        .decode(text.trim())
        .map_err(|e| Error::InvalidInput(format!("bad base64 payload: {e}")))?;
    Bitmap::decode_png(&bytes, channels)
}

pub fn encode_mask(mask: &MaskImage) -> Result<String> {
    encode_png_base64(&mask.to_bitmap())
}

pub fn decode_mask(text: &str) -> Result<MaskImage> {
    Ok(MaskImage::from_bitmap(&decode_png_base64(text, 1)?))
}
