//! Per-view text-grounded detection and box-prompted segmentation.
//!
//! The pipeline talks to a [`GroundingBackend`]. Three implementations ship:
//! an [`OracleBackend`] that derives detections and masks from ground-truth
//! face labels (with scripted corruption), a [`FileBackend`] replaying
//! recorded outputs, and an [`HttpBackend`] speaking the sidecar wire
//! protocol.

mod files;
mod http;
mod oracle;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::raster::RenderOutput;

pub use crate::raster::Shading as Branch;
pub use files::{FileBackend, DETECTIONS_FILE, MASK_FILE};
pub use http::{HttpBackend, HttpConfig};
pub use oracle::{oracle_attach, BoundOracle, Corruption, OracleBackend, OracleConfig};

impl Branch {
    pub const ALL: [Branch; 2] = [Branch::Untextured, Branch::Textured];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Untextured => "untextured",
            Branch::Textured => "textured",
        }
    }
}

/// Directory name of view `k` in run and replay layouts.
pub fn view_dir_name(k: usize) -> String {
    format!("view_{k}")
}

/// Object class text and grounding text of one segmentation query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuerySpec {
    pub object: String,
    pub grounding: String,
}

impl QuerySpec {
    pub fn new(object: impl Into<String>, grounding: impl Into<String>) -> Result<Self> {
        let object = object.into().trim().to_string();
        let grounding = grounding.into().trim().to_string();
        if object.is_empty() || grounding.is_empty() {
            return Err(Error::InvalidInput("query texts must be non-empty".into()));
        }
        Ok(Self { object, grounding })
    }
}

/// Half-open pixel box `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", from = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl From<[f64; 4]> for BBox {
    fn from(a: [f64; 4]) -> Self {
        BBox {
            x0: a[0],
            y0: a[1],
            x1: a[2],
            y1: a[3],
        }
    }
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let ih = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    /// Checks ordering and containment in a `width x height` image.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        let ok = self.x0.is_finite()
            && self.y0.is_finite()
            && self.x1.is_finite()
            && self.y1.is_finite()
            && self.x0 < self.x1
            && self.y0 < self.y1
            && self.x0 >= 0.0
            && self.y0 >= 0.0
            && self.x1 <= width as f64
            && self.y1 <= height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "box {:?} invalid for {width}x{height} image",
                <[f64; 4]>::from(*self)
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    #[serde(rename = "score")]
    pub confidence: f64,
}

impl Detection {
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        self.bbox.validate(width, height)?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidInput(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Sorts by descending confidence, keeping backend order among equals.
pub(crate) fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
}

/// Binary per-pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl MaskImage {
    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width as usize * height as usize],
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Any nonzero sample counts as inside.
    pub fn from_bitmap(bitmap: &Bitmap) -> Self {
        let c = bitmap.channels() as usize;
        let bits = bitmap
            .data()
            .chunks_exact(c)
            .map(|px| px.iter().any(|&v| v != 0))
            .collect();
        Self {
            width: bitmap.width(),
            height: bitmap.height(),
            bits,
        }
    }

    /// Single-channel 0/255 bitmap.
    pub fn to_bitmap(&self) -> Bitmap {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        Bitmap::from_raw(self.width, self.height, 1, data).expect("mask dims are consistent")
    }

    pub fn union_with(&mut self, other: &MaskImage) -> Result<()> {
        if other.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
        Ok(())
    }

    /// Tight half-open box of the set pixels.
    pub fn bbox(&self) -> Option<BBox> {
        let w = self.width as usize;
        let mut b: Option<[usize; 4]> = None;
        for (i, _) in self.bits.iter().enumerate().filter(|(_, v)| **v) {
            let (x, y) = (i % w, i / w);
            b = Some(match b {
                None => [x, y, x, y],
                Some([x0, y0, x1, y1]) => [x0.min(x), y0.min(y), x1.max(x), y1.max(y)],
            });
        }
        b.map(|[x0, y0, x1, y1]| BBox::new(x0 as f64, y0 as f64, x1 as f64 + 1.0, y1 as f64 + 1.0))
    }
}

/// Everything a backend may look at for one view.
#[derive(Debug, Clone, Copy)]
pub struct ViewContext<'a> {
    pub branch: Branch,
    pub view: usize,
    pub render: &'a RenderOutput,
}

/// Source of per-view detections and masks. Implementations must tolerate
/// concurrent calls for different views.
pub trait GroundingBackend: Sync {
    /// Detections for the query's grounding text, sorted by descending confidence.
    fn detect(&self, view: &ViewContext<'_>, query: &QuerySpec) -> Result<Vec<Detection>>;

    /// Mask for the region inside `bbox`; same dimensions as the view.
    fn segment(&self, view: &ViewContext<'_>, query: &QuerySpec, bbox: &BBox) -> Result<MaskImage>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_texts_are_trimmed_and_required() {
        let q = QuerySpec::new(" car ", "door\n").unwrap();
        assert_eq!((q.object.as_str(), q.grounding.as_str()), ("car", "door"));
        assert!(QuerySpec::new("car", "  ").is_err());
        assert!(QuerySpec::new("", "door").is_err());
    }

    #[test]
    fn box_iou_by_hand() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 0.0, 3.0, 2.0);
        assert!((a.iou(&b) - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(5.0, 5.0, 6.0, 6.0)), 0.0);
    }

    #[test]
    fn box_validation() {
        assert!(BBox::new(0.0, 0.0, 10.0, 10.0).validate(10, 10).is_ok());
        assert!(BBox::new(0.0, 0.0, 11.0, 10.0).validate(10, 10).is_err());
        assert!(BBox::new(5.0, 0.0, 5.0, 10.0).validate(10, 10).is_err());
        let d = Detection {
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            confidence: 1.5,
        };
        assert!(d.validate(4, 4).is_err());
    }

    #[test]
    fn detection_wire_shape() {
        let d = Detection {
            bbox: BBox::new(1.0, 2.0, 3.0, 4.0),
            confidence: 0.5,
        };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"bbox":[1.0,2.0,3.0,4.0],"score":0.5}"#);
        assert_eq!(serde_json::from_str::<Detection>(&s).unwrap(), d);
    }

    #[test]
    fn mask_bbox_and_png_values() {
        let mut m = MaskImage::filled(8, 6, false);
        assert_eq!(m.bbox(), None);
        m.set(2, 3, true);
        m.set(5, 1, true);
        assert_eq!(m.bbox(), Some(BBox::new(2.0, 1.0, 6.0, 4.0)));
        let bm = m.to_bitmap();
        assert_eq!(bm.pixel(2, 3), &[255]);
        assert_eq!(MaskImage::from_bitmap(&bm), m);
    }
}
