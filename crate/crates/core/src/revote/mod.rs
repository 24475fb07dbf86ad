//! Face confidence revoting.
//!
//! Every view that keeps a detection votes on the faces it sees: faces inside
//! the view's mask receive `+c_k`, every other visible face receives `-c_k`.
//! Per-face sums over views give one score per branch; the two branch scores
//! are averaged, smoothed once over edge neighbors and thresholded strictly.

mod pipeline;
mod sum;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{BBox, Branch, Detection, MaskImage};
use crate::error::{Error, Result};
use crate::mesh::{FaceAdjacency, FaceId};
use crate::raster::{faces_in_mask, object_bbox, RenderOutput};

pub use pipeline::{
    assign_multi, assign_scores, baseline_segment, segment_mesh, Diagnostics, FaceScores, MultiBox,
    Report, SegmentParams, SegmentationResult, ViewRecord,
};
pub use sum::{exact_sum, ExactSum};

/// One view's local confidence assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewVote {
    pub view: usize,
    pub branch: Branch,
    pub confidence: f64,
    /// Faces voted `+confidence`, ascending.
    pub masked: Vec<FaceId>,
    /// Visible faces voted `-confidence`, ascending.
    pub unmasked: Vec<FaceId>,
}

/// Drops detections whose box nearly coincides with the rendered object's box
/// (IoU >= `iou_cutoff`). Order of the survivors is preserved.
pub fn filter_detections(
    detections: &[Detection],
    render: &RenderOutput,
    iou_cutoff: f64,
) -> Vec<Detection> {
    let Ok(object) = object_bbox(render) else {
        return detections.to_vec();
    };
    let object = BBox::from(object.half_open());
    detections
        .iter()
        .filter(|d| d.bbox.iou(&object) < iou_cutoff)
        .copied()
        .collect()
}

/// Splits the visible faces of a view into masked and unmasked sets.
///
/// Faces with fewer than `min_pixels` visible pixels abstain. A face counts
/// as masked when at least `membership_fraction` of its pixels are in the mask.
pub fn make_view_vote(
    view: usize,
    branch: Branch,
    render: &RenderOutput,
    detection: &Detection,
    mask: &MaskImage,
    membership_fraction: f64,
    min_pixels: u32,
) -> Result<ViewVote> {
    let coverage = faces_in_mask(render, mask)?;
    let mut masked = Vec::new();
    let mut unmasked = Vec::new();
    for (&face, cov) in &coverage {
        if cov.visible < min_pixels.max(1) {
            continue;
        }
        if cov.fraction() >= membership_fraction {
            masked.push(face);
        } else {
            unmasked.push(face);
        }
    }
    Ok(ViewVote {
        view,
        branch,
        confidence: detection.confidence,
        masked,
        unmasked,
    })
}

/// Per-face sum of local confidences over all votes.
pub fn accumulate(votes: &[ViewVote], face_count: usize) -> Result<Vec<f64>> {
    Ok(accumulate_exact(votes, face_count)?
        .iter()
        .map(ExactSum::value)
        .collect())
}

/// [`accumulate`] without the final rounding.
pub fn accumulate_exact(votes: &[ViewVote], face_count: usize) -> Result<Vec<ExactSum>> {
    let mut sums = vec![ExactSum::new(); face_count];
    for vote in votes {
        for (faces, sign) in [(&vote.masked, 1.0), (&vote.unmasked, -1.0)] {
            for &f in faces {
                let slot = sums.get_mut(f as usize).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "vote for face {f} but the mesh has {face_count} faces"
                    ))
                })?;
                slot.add(sign * vote.confidence);
            }
        }
    }
    Ok(sums)
}

/// Branch fusion followed by neighbor smoothing, computed from the unrounded
/// per-branch sums so that the sign of every output is exact. Equals
/// `smooth(fuse_branches(..))` up to rounding.
pub fn smooth_fused(branches: &[Vec<ExactSum>], adjacency: &FaceAdjacency) -> Result<Vec<f64>> {
    let m = adjacency.face_count();
    if branches.is_empty() {
        return Err(Error::InvalidInput("no branches to fuse".into()));
    }
    if let Some(bad) = branches.iter().find(|b| b.len() != m) {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: bad.len(),
        });
    }
    let nb = branches.len() as f64;
    let fused: Vec<f64> = (0..m)
        .map(|f| {
            let mut acc = ExactSum::new();
            branches.iter().for_each(|b| acc.merge(&b[f]));
            acc.value() / nb
        })
        .collect();
    Ok((0..m)
        .map(|f| {
            let nbrs = adjacency.neighbors(f);
            let mut acc = ExactSum::new();
            let (mut lo, mut hi) = (fused[f], fused[f]);
            for g in std::iter::once(f).chain(nbrs.iter().map(|&n| n as usize)) {
                branches.iter().for_each(|b| acc.merge(&b[g]));
                lo = lo.min(fused[g]);
                hi = hi.max(fused[g]);
            }
            (acc.value() / (nb * (nbrs.len() + 1) as f64)).clamp(lo, hi)
        })
        .collect())
}

/// Elementwise mean of the two branch scores.
pub fn fuse_branches(untextured: &[f64], textured: &[f64]) -> Result<Vec<f64>> {
    if untextured.len() != textured.len() {
        return Err(Error::LengthMismatch {
            expected: untextured.len(),
            actual: textured.len(),
        });
    }
    Ok(untextured
        .iter()
        .zip(textured)
        .map(|(a, b)| (a + b) / 2.0)
        .collect())
}

/// One pass of neighbor averaging: each face takes the mean over itself and
/// its edge neighbors.
pub fn smooth(scores: &[f64], adjacency: &FaceAdjacency) -> Result<Vec<f64>> {
    if adjacency.face_count() != scores.len() {
        return Err(Error::LengthMismatch {
            expected: adjacency.face_count(),
            actual: scores.len(),
        });
    }
    Ok((0..scores.len())
        .map(|f| {
            let nbrs = adjacency.neighbors(f);
            let values = std::iter::once(scores[f]).chain(nbrs.iter().map(|&n| scores[n as usize]));
            let (lo, hi) = values
                .clone()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            let mean = exact_sum(values) / (nbrs.len() + 1) as f64;
            // rounding must not push the mean outside its inputs
            mean.clamp(lo, hi)
        })
        .collect())
}

/// Faces whose score is strictly above `threshold`.
pub fn threshold(scores: &[f64], threshold: f64) -> Vec<FaceId> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(f, _)| f as FaceId)
        .collect()
}

/// Number of views (across branches) in which each face voted.
pub fn vote_counts(votes: &[ViewVote]) -> BTreeMap<FaceId, usize> {
    let mut counts = BTreeMap::new();
    for v in votes {
        for &f in v.masked.iter().chain(&v.unmasked) {
            *counts.entry(f).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitmap::Bitmap;
    use crate::mesh::{build_adjacency, primitives};
    use crate::raster::{FaceIndexMap, BACKGROUND};
    use proptest::prelude::*;

    fn vote(confidence: f64, masked: &[FaceId], unmasked: &[FaceId]) -> ViewVote {
        ViewVote {
            view: 0,
            branch: Branch::Untextured,
            confidence,
            masked: masked.to_vec(),
            unmasked: unmasked.to_vec(),
        }
    }

    #[test]
    fn accumulate_by_hand() {
        let votes = [
            vote(0.9, &[0], &[]),
            vote(0.8, &[0], &[1]),
            vote(0.7, &[], &[0]),
        ];
        let g = accumulate(&votes, 3).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert_eq!(g[1], -0.8);
        assert_eq!(g[2], 0.0);
        assert!(accumulate(&votes, 1).is_err());
    }

    #[test]
    fn fuse_by_hand() {
        let o = fuse_branches(&[0.4, 2.0], &[1.0, 2.0]).unwrap();
        assert!((o[0] - 0.7).abs() < 1e-15);
        assert_eq!(o[1], 2.0);
        assert!(matches!(
            fuse_branches(&[0.0], &[]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn smoothing_cases() {
        let tet = primitives::tetrahedron();
        let adj = build_adjacency(&tet);
        assert_eq!(smooth(&[0.3; 4], &adj).unwrap(), vec![0.3; 4]);
        let s = smooth(&[1.0, 0.0, 0.0, 0.0], &adj).unwrap();
        assert_eq!(s[0], 0.25);

        let isolated = FaceAdjacency::from_lists(vec![vec![], vec![]]);
        assert_eq!(smooth(&[5.0, -2.0], &isolated).unwrap(), vec![5.0, -2.0]);
    }

    #[test]
    fn fused_smoothing_keeps_exact_ties() {
        // faces 2, 4 and 8 are the three neighbors of face 3 on the icosahedron
        let adj = build_adjacency(&primitives::icosphere(0));
        let (a, b) = (0.23851555264010055, 0.02718500060527377);
        let votes = [vote(a, &[4], &[2]), vote(b, &[4], &[8])];
        let exact = accumulate_exact(&votes, 20).unwrap();
        let o = smooth_fused(&[exact], &adj).unwrap();
        assert_eq!(o[3], 0.0);
        assert!(threshold(&o, 0.0).iter().all(|&f| f != 3));
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(threshold(&[0.3, 0.0, -0.2], 0.0), vec![0]);
        assert!(threshold(&[-1.0, -0.1], 0.0).is_empty());
        assert_eq!(threshold(&[-1e300, 0.0, 5.0], f64::MIN), vec![0, 1, 2]);
        assert!(threshold(&[f64::NAN], f64::MIN).is_empty());
    }

    fn strip_render() -> RenderOutput {
        // face 0: 10 px, face 1: 10 px, face 2: 1 px
        let mut ids = vec![BACKGROUND; 30];
        for x in 0..10 {
            ids[x] = 0;
            ids[10 + x] = 1;
        }
        ids[20] = 2;
        RenderOutput::from_parts(
            Bitmap::new(10, 3, 3),
            FaceIndexMap::from_ids(10, 3, ids).unwrap(),
        )
        .unwrap()
    }

    fn det(c: f64) -> Detection {
        Detection {
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            confidence: c,
        }
    }

    #[test]
    fn view_vote_rules() {
        let r = strip_render();
        let full = MaskImage::filled(10, 3, true);
        let v = make_view_vote(0, Branch::Untextured, &r, &det(0.9), &full, 0.5, 2).unwrap();
        assert_eq!(
            (v.masked.as_slice(), v.unmasked.as_slice()),
            (&[0, 1][..], &[][..])
        );
        assert_eq!(v.confidence, 0.9);

        let empty = MaskImage::filled(10, 3, false);
        let v = make_view_vote(0, Branch::Untextured, &r, &det(0.9), &empty, 0.5, 2).unwrap();
        assert_eq!(
            (v.masked.as_slice(), v.unmasked.as_slice()),
            (&[][..], &[0, 1][..])
        );

        // 6 of face 0's 10 pixels inside
        let mut partial = MaskImage::filled(10, 3, false);
        for x in 0..6 {
            partial.set(x, 0, true);
        }
        let v = make_view_vote(0, Branch::Untextured, &r, &det(0.9), &partial, 0.5, 2).unwrap();
        assert_eq!(v.masked, vec![0]);
        let v = make_view_vote(0, Branch::Untextured, &r, &det(0.9), &partial, 0.7, 2).unwrap();
        assert!(v.masked.is_empty());

        // min_pixels 1 lets the single-pixel face vote
        let v = make_view_vote(0, Branch::Untextured, &r, &det(0.9), &empty, 0.5, 1).unwrap();
        assert_eq!(v.unmasked, vec![0, 1, 2]);
    }

    #[test]
    fn whole_object_boxes_are_filtered() {
        let r = strip_render();
        // object box is [0,10) x [0,3)
        let dets = [
            Detection {
                bbox: BBox::new(0.0, 0.0, 10.0, 3.0),
                confidence: 0.9,
            },
            Detection {
                bbox: BBox::new(0.0, 0.0, 1.0, 3.0),
                confidence: 0.8,
            },
            Detection {
                bbox: BBox::new(0.0, 0.0, 10.0, 2.9),
                confidence: 0.7,
            },
        ];
        let kept = filter_detections(&dets, &r, 0.9);
        assert_eq!(kept, vec![dets[1]]);
    }

    fn arb_votes(faces: u32) -> impl Strategy<Value = Vec<ViewVote>> {
        prop::collection::vec(
            (
                0.0f64..1.0,
                prop::collection::vec((0..faces, any::<bool>()), 0..30),
            ),
            0..20,
        )
        .prop_map(|vs| {
            vs.into_iter()
                .map(|(c, picks)| {
                    let mut seen = std::collections::BTreeMap::new();
                    for (f, m) in picks {
                        seen.entry(f).or_insert(m);
                    }
                    let masked = seen.iter().filter(|(_, m)| **m).map(|(f, _)| *f).collect();
                    let unmasked = seen.iter().filter(|(_, m)| !**m).map(|(f, _)| *f).collect();
                    vote(c, &[], &[]).with(masked, unmasked)
                })
                .collect()
        })
    }

    impl ViewVote {
        fn with(mut self, masked: Vec<FaceId>, unmasked: Vec<FaceId>) -> Self {
            self.masked = masked;
            self.unmasked = unmasked;
            self
        }
    }

    proptest! {
        #[test]
        fn accumulate_is_linear(a in arb_votes(15), b in arb_votes(15)) {
            let ga = accumulate(&a, 15).unwrap();
            let gb = accumulate(&b, 15).unwrap();
            let all: Vec<ViewVote> = a.iter().chain(&b).cloned().collect();
            let g = accumulate(&all, 15).unwrap();
            for f in 0..15 {
                prop_assert!((g[f] - (ga[f] + gb[f])).abs() <= 1e-12);
            }
            let mut rev = all.clone();
            rev.reverse();
            prop_assert_eq!(accumulate(&rev, 15).unwrap(), g);
        }

        #[test]
        fn vote_signs(votes in arb_votes(10)) {
            let g = accumulate(&votes, 10).unwrap();
            for f in 0..10u32 {
                let masked_somewhere = votes.iter().any(|v| v.masked.contains(&f));
                let unmasked_somewhere = votes.iter().any(|v| v.unmasked.contains(&f));
                if !unmasked_somewhere {
                    prop_assert!(g[f as usize] >= 0.0);
                }
                if !masked_somewhere {
                    prop_assert!(g[f as usize] <= 0.0);
                }
            }
        }

        #[test]
        fn smoothing_is_convex(values in prop::collection::vec(-10.0f64..10.0, 80)) {
            let mesh = primitives::icosphere(1);
            let adj = build_adjacency(&mesh);
            let s = smooth(&values, &adj).unwrap();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (f, v) in s.iter().enumerate() {
                prop_assert!(*v >= lo && *v <= hi);
                let local: Vec<f64> = std::iter::once(values[f])
                    .chain(adj.neighbors(f).iter().map(|&n| values[n as usize]))
                    .collect();
                let mean = local.iter().sum::<f64>() / local.len() as f64;
                prop_assert!((v - mean).abs() < 1e-12);
            }
        }

        #[test]
        fn positive_scaling_keeps_membership(votes in arb_votes(20), lambda in 0.01f64..100.0) {
            let mesh = primitives::icosphere(0);
            let adj = build_adjacency(&mesh);
            let g = accumulate(&votes, 20).unwrap();
            let scaled: Vec<ViewVote> = votes
                .iter()
                .map(|v| ViewVote { confidence: v.confidence * lambda, ..v.clone() })
                .collect();
            let gs = accumulate(&scaled, 20).unwrap();
            let exact = accumulate_exact(&votes, 20).unwrap();
            let exact_scaled = accumulate_exact(&scaled, 20).unwrap();
            let o = smooth_fused(&[exact.clone(), exact], &adj).unwrap();
            let os = smooth_fused(&[exact_scaled.clone(), exact_scaled], &adj).unwrap();
            let rounded = smooth(&fuse_branches(&g, &g).unwrap(), &adj).unwrap();
            let rounded_scaled = smooth(&fuse_branches(&gs, &gs).unwrap(), &adj).unwrap();
            for f in 0..20 {
                prop_assert!((os[f] - lambda * o[f]).abs() <= 1e-9 * (1.0 + lambda * o[f].abs()));
                prop_assert!((o[f] - rounded[f]).abs() <= 1e-12);
                prop_assert!((os[f] - rounded_scaled[f]).abs() <= 1e-12 * lambda.max(1.0));
            }
            prop_assert_eq!(threshold(&o, 0.0), threshold(&os, 0.0));
        }
    }
}
