//! Ground-truth oracle standing in for the neural detector and segmenter.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BBox, Branch, Detection, GroundingBackend, MaskImage, QuerySpec, ViewContext};
use crate::error::{Error, Result};
use crate::raster::{RenderOutput, BACKGROUND};

/// Scripted per-view error model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Corruption {
    #[default]
    None,
    /// Mask becomes every object pixel that is *not* the target.
    Complement { views: BTreeSet<usize> },
    /// Mask and box translated by `(dx, dy)` pixels, clipped to the image.
    Shift {
        views: BTreeSet<usize>,
        dx: i32,
        dy: i32,
    },
    /// No detection at all.
    Drop { views: BTreeSet<usize> },
}

impl Corruption {
    pub fn views(&self) -> BTreeSet<usize> {
        match self {
            Corruption::None => BTreeSet::new(),
            Corruption::Complement { views }
            | Corruption::Shift { views, .. }
            | Corruption::Drop { views } => views.clone(),
        }
    }

    pub fn affects(&self, view: usize) -> bool {
        match self {
            Corruption::None => false,
            Corruption::Complement { views }
            | Corruption::Shift { views, .. }
            | Corruption::Drop { views } => views.contains(&view),
        }
    }

    /// `count` distinct views out of `0..total`, drawn from `seed`.
    pub fn pick_views(count: usize, total: usize, seed: u64) -> BTreeSet<usize> {
        let mut ids: Vec<usize> = (0..total).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        ids.into_iter().take(count).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Ground-truth label per face; -1 for unlabeled.
    pub gt_labels: Vec<i32>,
    pub target_label: i32,
    pub corruption: Corruption,
    pub confidence_correct: f64,
    pub confidence_corrupt: f64,
    pub seed: u64,
}

impl OracleConfig {
    pub fn new(gt_labels: Vec<i32>, target_label: i32) -> Self {
        Self {
            gt_labels,
            target_label,
            corruption: Corruption::None,
            confidence_correct: 0.9,
            confidence_corrupt: 0.9,
            seed: 0,
        }
    }

    pub fn with_corruption(mut self, corruption: Corruption) -> Self {
        self.corruption = corruption;
        self
    }

    pub fn validate(&self, view_count: Option<usize>) -> Result<()> {
        for c in [self.confidence_correct, self.confidence_corrupt] {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Config(format!(
                    "oracle confidence {c} outside [0, 1]"
                )));
            }
        }
        if let (Some(k), Some(&bad)) = (view_count, self.corruption.views().iter().next_back()) {
            if bad >= k {
                return Err(Error::Config(format!(
                    "corrupted view {bad} outside 0..{k}"
                )));
            }
        }
        Ok(())
    }
}

/// Oracle state for one rendered view.
#[derive(Debug, Clone)]
pub struct BoundOracle {
    detections: Vec<Detection>,
    mask: MaskImage,
}

impl BoundOracle {
    pub fn detect(&self) -> Vec<Detection> {
        self.detections.clone()
    }

    pub fn segment(&self, bbox: &BBox) -> Result<MaskImage> {
        let (w, h) = self.mask.dims();
        bbox.validate(w, h)?;
        Ok(self.mask.clone())
    }

    pub fn mask(&self) -> &MaskImage {
        &self.mask
    }
}

fn shifted(mask: &MaskImage, dx: i32, dy: i32) -> MaskImage {
    let (w, h) = mask.dims();
    let mut out = MaskImage::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let (nx, ny) = (x as i64 + dx as i64, y as i64 + dy as i64);
            if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                out.set(nx as u32, ny as u32, true);
            }
        }
    }
    out
}

fn shifted_box(b: &BBox, dx: i32, dy: i32, w: u32, h: u32) -> Option<BBox> {
    let c = BBox::new(
        (b.x0 + dx as f64).clamp(0.0, w as f64),
        (b.y0 + dy as f64).clamp(0.0, h as f64),
        (b.x1 + dx as f64).clamp(0.0, w as f64),
        (b.y1 + dy as f64).clamp(0.0, h as f64),
    );
    (c.x0 < c.x1 && c.y0 < c.y1).then_some(c)
}

/// Binds the oracle to view `view` of a render.
///
/// Clean views detect the tight box of the target's pixels and segment
/// exactly those pixels. Corrupted views follow [`Corruption`]; a complement
/// view reports the tight box of its (wrong) mask.
pub fn oracle_attach(
    render: &RenderOutput,
    view: usize,
    config: &OracleConfig,
) -> Result<BoundOracle> {
    let m = config.gt_labels.len();
    if let Some((&f, _)) = render.visible.iter().next_back() {
        if f as usize >= m {
            return Err(Error::LabelMismatch {
                expected: f as usize + 1,
                actual: m,
            });
        }
    }
    let (w, h) = render.dims();
    let mut target = MaskImage::filled(w, h, false);
    let mut others = MaskImage::filled(w, h, false);
    for (x, y, f) in render.face_index.covered() {
        debug_assert_ne!(f, BACKGROUND);
        if config.gt_labels[f as usize] == config.target_label {
            target.set(x, y, true);
        } else {
            others.set(x, y, true);
        }
    }
    let target_box = target.bbox();

    let corrupt = config.corruption.affects(view);
    let conf = if corrupt {
        config.confidence_corrupt
    } else {
        config.confidence_correct
    };
    let (bbox, mask) = match (&config.corruption, corrupt) {
        (_, false) | (Corruption::None, _) => (target_box, target),
        (Corruption::Drop { .. }, true) => (None, target),
        (Corruption::Complement { .. }, true) => (others.bbox(), others),
        (Corruption::Shift { dx, dy, .. }, true) => (
            target_box.and_then(|b| shifted_box(&b, *dx, *dy, w, h)),
            shifted(&target, *dx, *dy),
        ),
    };
    let detections = bbox
        .map(|bbox| Detection {
            bbox,
            confidence: conf,
        })
        .into_iter()
        .collect();
    Ok(BoundOracle { detections, mask })
}

/// [`GroundingBackend`] driven by ground-truth labels, with an optional
/// separate configuration per branch and per-query target lookup by part name.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    configs: BTreeMap<Branch, OracleConfig>,
    label_names: BTreeMap<String, i32>,
}

impl OracleBackend {
    /// Same oracle for both branches.
    pub fn new(config: OracleConfig) -> Self {
        let configs = Branch::ALL.iter().map(|b| (*b, config.clone())).collect();
        Self {
            configs,
            label_names: BTreeMap::new(),
        }
    }

    pub fn with_branch(mut self, branch: Branch, config: OracleConfig) -> Self {
        self.configs.insert(branch, config);
        self
    }

    /// Grounding texts listed here select their own target label instead of
    /// the configured `target_label`.
    pub fn with_label_names(mut self, names: BTreeMap<String, i32>) -> Self {
        self.label_names = names;
        self
    }

    pub fn config(&self, branch: Branch) -> &OracleConfig {
        &self.configs[&branch]
    }

    fn bind(&self, view: &ViewContext<'_>, query: &QuerySpec) -> Result<BoundOracle> {
        let config = &self.configs[&view.branch];
        match self.label_names.get(&query.grounding) {
            Some(&label) if label != config.target_label => {
                let cfg = OracleConfig {
                    target_label: label,
                    ..config.clone()
                };
                oracle_attach(view.render, view.view, &cfg)
            }
            _ => oracle_attach(view.render, view.view, config),
        }
    }
}

impl GroundingBackend for OracleBackend {
    fn detect(&self, view: &ViewContext<'_>, query: &QuerySpec) -> Result<Vec<Detection>> {
        Ok(self.bind(view, query)?.detect())
    }

    fn segment(&self, view: &ViewContext<'_>, query: &QuerySpec, bbox: &BBox) -> Result<MaskImage> {
        self.bind(view, query)?.segment(bbox)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitmap::Bitmap;
    use crate::raster::FaceIndexMap;

    /// 10x4 render: face 0 covers columns 0..4, face 1 columns 4..8, rest background.
    fn strip() -> RenderOutput {
        let mut ids = vec![BACKGROUND; 40];
        for y in 0..4 {
            for x in 0..8 {
                ids[y * 10 + x] = if x < 4 { 0 } else { 1 };
            }
        }
        let map = FaceIndexMap::from_ids(10, 4, ids).unwrap();
        RenderOutput::from_parts(Bitmap::new(10, 4, 3), map).unwrap()
    }

    fn cfg(corruption: Corruption) -> OracleConfig {
        OracleConfig::new(vec![5, 7], 7).with_corruption(corruption)
    }

    #[test]
    fn clean_view_detects_tight_target_box() {
        let o = oracle_attach(&strip(), 0, &cfg(Corruption::None)).unwrap();
        let d = o.detect();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].bbox, BBox::new(4.0, 0.0, 8.0, 4.0));
        assert_eq!(d[0].confidence, 0.9);
        let mask = o.segment(&d[0].bbox).unwrap();
        assert_eq!(mask.count(), 16);
        assert!(mask.get(4, 0) && !mask.get(3, 0) && !mask.get(8, 0));
    }

    #[test]
    fn invisible_target_yields_nothing() {
        let c = OracleConfig::new(vec![5, 7], 3);
        assert!(oracle_attach(&strip(), 0, &c).unwrap().detect().is_empty());
    }

    #[test]
    fn complement_masks_the_rest_of_the_object() {
        let views = BTreeSet::from([2]);
        let o = oracle_attach(&strip(), 2, &cfg(Corruption::Complement { views })).unwrap();
        let mask = o.mask();
        assert_eq!(mask.count(), 16);
        assert!(mask.get(0, 0) && !mask.get(4, 0) && !mask.get(9, 0));
        assert_eq!(o.detect()[0].bbox, BBox::new(0.0, 0.0, 4.0, 4.0));
    }

    #[test]
    fn corruption_only_hits_listed_views() {
        let views = BTreeSet::from([2]);
        let o = oracle_attach(&strip(), 1, &cfg(Corruption::Drop { views })).unwrap();
        assert_eq!(o.detect().len(), 1);
    }

    #[test]
    fn drop_returns_empty() {
        let views = BTreeSet::from([0]);
        let o = oracle_attach(&strip(), 0, &cfg(Corruption::Drop { views })).unwrap();
        assert!(o.detect().is_empty());
    }

    #[test]
    fn shift_translates_and_clips() {
        let clean = oracle_attach(&strip(), 0, &cfg(Corruption::None)).unwrap();
        let views = BTreeSet::from([0]);
        let o = oracle_attach(
            &strip(),
            0,
            &cfg(Corruption::Shift {
                views,
                dx: 5,
                dy: 0,
            }),
        )
        .unwrap();
        let mask = o.mask();
        for y in 0..4 {
            for x in 0..10 {
                let expected = x >= 5 && clean.mask().get(x - 5, y);
                assert_eq!(mask.get(x, y), expected, "({x},{y})");
            }
        }
        assert_eq!(o.detect()[0].bbox, BBox::new(9.0, 0.0, 10.0, 4.0));
    }

    #[test]
    fn label_length_checked() {
        let c = OracleConfig::new(vec![0], 0);
        assert!(matches!(
            oracle_attach(&strip(), 0, &c),
            Err(Error::LabelMismatch { .. })
        ));
    }

    #[test]
    fn segment_rejects_boxes_outside_the_image() {
        let o = oracle_attach(&strip(), 0, &cfg(Corruption::None)).unwrap();
        assert!(o.segment(&BBox::new(0.0, 0.0, 11.0, 4.0)).is_err());
    }

    #[test]
    fn attach_is_deterministic_and_view_picks_seeded() {
        let a = oracle_attach(&strip(), 0, &cfg(Corruption::None)).unwrap();
        let b = oracle_attach(&strip(), 0, &cfg(Corruption::None)).unwrap();
        assert_eq!(a.detect(), b.detect());
        assert_eq!(a.mask(), b.mask());
        assert_eq!(
            Corruption::pick_views(3, 8, 11),
            Corruption::pick_views(3, 8, 11)
        );
        assert_eq!(Corruption::pick_views(3, 8, 11).len(), 3);
        assert!(Corruption::pick_views(8, 8, 4).iter().copied().eq(0..8));
    }

    #[test]
    fn per_query_target_lookup() {
        let render = strip();
        let ctx = ViewContext {
            branch: Branch::Untextured,
            view: 0,
            render: &render,
        };
        let backend = OracleBackend::new(OracleConfig::new(vec![5, 7], 7)).with_label_names(
            BTreeMap::from([("wheel".to_string(), 5), ("door".to_string(), 7)]),
        );
        let wheel = backend
            .detect(&ctx, &QuerySpec::new("car", "wheel").unwrap())
            .unwrap();
        assert_eq!(wheel[0].bbox, BBox::new(0.0, 0.0, 4.0, 4.0));
        let door = backend
            .detect(&ctx, &QuerySpec::new("car", "door").unwrap())
            .unwrap();
        assert_eq!(door[0].bbox, BBox::new(4.0, 0.0, 8.0, 4.0));
    }
}
