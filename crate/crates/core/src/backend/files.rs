use std::path::{Path, PathBuf};

use super::{
    sort_detections, view_dir_name, BBox, Detection, GroundingBackend, MaskImage, QuerySpec,
    ViewContext,
};
use crate::bitmap::Bitmap;
use crate::error::{Error, Result};

pub const DETECTIONS_FILE: &str = "detections.json";
pub const MASK_FILE: &str = "mask.png";

/// Replays precomputed backend outputs from
/// `<dir>/<branch>/view_<k>/{detections.json, mask.png}`.
#[derive(Debug, Clone)]
pub struct FileBackend {
    root: PathBuf,
}

impl FileBackend {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn view_dir(&self, view: &ViewContext<'_>) -> PathBuf {
        self.root
            .join(view.branch.name())
            .join(view_dir_name(view.view))
    }
}

fn read_existing(path: &Path) -> Result<Vec<u8>> {
    match std::fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(Error::MissingPrecomputed(path.to_path_buf()))
        }
        Err(e) => Err(Error::io(path, e)),
    }
}

impl GroundingBackend for FileBackend {
    fn detect(&self, view: &ViewContext<'_>, _query: &QuerySpec) -> Result<Vec<Detection>> {
        let path = self.view_dir(view).join(DETECTIONS_FILE);
        let bytes = read_existing(&path)?;
        let mut dets: Vec<Detection> =
            serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
        let (w, h) = view.render.dims();
        for d in &dets {
            d.validate(w, h)?;
        }
        sort_detections(&mut dets);
        Ok(dets)
    }

    fn segment(
        &self,
        view: &ViewContext<'_>,
        _query: &QuerySpec,
        bbox: &BBox,
    ) -> Result<MaskImage> {
        let (w, h) = view.render.dims();
        bbox.validate(w, h)?;
        let path = self.view_dir(view).join(MASK_FILE);
        let bytes = read_existing(&path)?;
        let mask = MaskImage::from_bitmap(&Bitmap::decode_png(&bytes, 1)?);
        if mask.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                actual: mask.dims(),
            });
        }
        Ok(mask)
    }
}
