use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    accumulate_exact, filter_detections, fuse_branches, make_view_vote, smooth_fused, threshold,
    ExactSum, ViewVote,
};
use crate::backend::{Branch, Detection, GroundingBackend, MaskImage, QuerySpec, ViewContext};
use crate::error::{Error, Result};
use crate::mesh::{build_adjacency, FaceId, Mesh};
use crate::raster::{render, RenderOutput};
use crate::viewgen::{generate_trajectory, TrajectoryConfig, Viewpoint};

/// How several surviving detections in one view are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiBox {
    /// Highest-confidence surviving box only.
    #[default]
    Top1,
    /// Union of the masks of all surviving boxes, voted at the top confidence.
    Union,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Detections with at least this IoU against the object box are dropped.
    pub iou_cutoff: f64,
    /// Fraction of a face's visible pixels that must be in the mask.
    pub membership_fraction: f64,
    /// Faces with fewer visible pixels in a view abstain from that view.
    pub min_pixels: u32,
    pub o_threshold: f64,
    pub multi_box: MultiBox,
    /// Process views on the rayon pool.
    pub parallel: bool,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            iou_cutoff: 0.90,
            membership_fraction: 0.5,
            min_pixels: 2,
            o_threshold: 0.0,
            multi_box: MultiBox::Top1,
            parallel: true,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_cutoff > 0.0 && self.iou_cutoff <= 1.0) {
            return Err(Error::Config(format!(
                "iou_cutoff {} outside (0, 1]",
                self.iou_cutoff
            )));
        }
        if !(self.membership_fraction > 0.0 && self.membership_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "membership_fraction {} outside (0, 1]",
                self.membership_fraction
            )));
        }
        if self.o_threshold.is_nan() {
            return Err(Error::Config("o_threshold is NaN".into()));
        }
        Ok(())
    }
}

/// Everything that happened in one (branch, view) cell.
#[derive(Debug, Clone)]
pub struct ViewRecord {
    pub branch: Branch,
    pub view: usize,
    pub render: RenderOutput,
    /// Raw backend detections, sorted by confidence.
    pub detections: Vec<Detection>,
    /// Detections surviving the whole-object filter.
    pub kept: Vec<Detection>,
    pub mask: Option<MaskImage>,
    pub vote: Option<ViewVote>,
    /// Backend failure that caused the view to be skipped.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceScores {
    pub g_untextured: Vec<f64>,
    /// Absent in single-branch runs, where `o == g_untextured`.
    pub g_textured: Option<Vec<f64>>,
    pub o: Vec<f64>,
    pub o_smoothed: Vec<f64>,
    pub o_threshold: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// (branch, view) cells that cast a vote.
    pub views_used: usize,
    /// Cells without a vote: no surviving detection or a backend failure.
    pub views_skipped: usize,
    /// Cells skipped because the backend failed.
    pub views_failed: usize,
    /// Detections removed by the whole-object filter.
    pub detections_filtered: usize,
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub query: QuerySpec,
    pub view_count: usize,
    pub face_count: usize,
    pub member_faces: Vec<FaceId>,
    pub scores: FaceScores,
    pub per_view_votes: Vec<ViewVote>,
    /// Faces owning at least one pixel in at least one view.
    pub visible_faces: Vec<FaceId>,
    pub diagnostics: Diagnostics,
    pub records: Vec<ViewRecord>,
}

/// Serialized form of a [`SegmentationResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub query: QuerySpec,
    #[serde(rename = "K")]
    pub view_count: usize,
    pub seed: Option<u64>,
    pub face_count: usize,
    pub o_threshold: f64,
    pub o_smoothed: Vec<f64>,
    pub member_faces: Vec<FaceId>,
    pub visible_faces: Vec<FaceId>,
    pub diagnostics: Diagnostics,
}

impl SegmentationResult {
    pub fn report(&self, seed: Option<u64>) -> Report {
        Report {
            query: self.query.clone(),
            view_count: self.view_count,
            seed,
            face_count: self.face_count,
            o_threshold: self.scores.o_threshold,
            o_smoothed: self.scores.o_smoothed.clone(),
            member_faces: self.member_faces.clone(),
            visible_faces: self.visible_faces.clone(),
            diagnostics: self.diagnostics,
        }
    }

    pub fn is_member(&self, face: FaceId) -> bool {
        self.member_faces.binary_search(&face).is_ok()
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

fn process_view(
    mesh: &Mesh,
    branch: Branch,
    viewpoint: &Viewpoint,
    query: &QuerySpec,
    backend: &dyn GroundingBackend,
    params: &SegmentParams,
    whole_object_filter: bool,
) -> Result<(ViewRecord, Option<Error>)> {
    let render = render(mesh, viewpoint, branch)?;
    let mut record = ViewRecord {
        branch,
        view: viewpoint.index,
        render,
        detections: Vec::new(),
        kept: Vec::new(),
        mask: None,
        vote: None,
        error: None,
    };
    let ctx = ViewContext {
        branch,
        view: viewpoint.index,
        render: &record.render,
    };

    let outcome = (|| -> Result<_> {
        let detections = backend.detect(&ctx, query)?;
        let kept = if whole_object_filter {
            filter_detections(&detections, ctx.render, params.iou_cutoff)
        } else {
            detections.clone()
        };
        let Some(top) = kept.first().copied() else {
            return Ok((detections, kept, None));
        };
        let mask = match params.multi_box {
            MultiBox::Top1 => backend.segment(&ctx, query, &top.bbox)?,
            MultiBox::Union => {
                let mut acc = backend.segment(&ctx, query, &top.bbox)?;
                for d in &kept[1..] {
                    acc.union_with(&backend.segment(&ctx, query, &d.bbox)?)?;
                }
                acc
            }
        };
        Ok((detections, kept, Some((top, mask))))
    })();

    match outcome {
        Ok((detections, kept, chosen)) => {
            if let Some((top, mask)) = chosen {
                record.vote = Some(make_view_vote(
                    viewpoint.index,
                    branch,
                    &record.render,
                    &top,
                    &mask,
                    params.membership_fraction,
                    params.min_pixels,
                )?);
                record.mask = Some(mask);
            }
            record.detections = detections;
            record.kept = kept;
            Ok((record, None))
        }
        Err(e) if e.is_backend() => {
            log::warn!(
                "{} view {}: backend failed, skipping: {e}",
                branch.name(),
                viewpoint.index
            );
            record.error = Some(e.to_string());
            Ok((record, Some(e)))
        }
        Err(e) => Err(e),
    }
}

/// Rendered, detected and segmented views of both branches.
struct ViewRun {
    query: QuerySpec,
    view_count: usize,
    face_count: usize,
    has_textured: bool,
    records: Vec<ViewRecord>,
    diagnostics: Diagnostics,
    visible_faces: Vec<FaceId>,
}

fn run_views(
    untextured: &Mesh,
    textured: Option<&Mesh>,
    query: &QuerySpec,
    trajectory: &TrajectoryConfig,
    backend: &dyn GroundingBackend,
    params: &SegmentParams,
    whole_object_filter: bool,
) -> Result<ViewRun> {
    params.validate()?;
    if let Some(t) = textured {
        if !untextured.same_topology(t) {
            return Err(Error::TopologyMismatch(format!(
                "untextured mesh has {} faces, textured mesh has {}",
                untextured.face_count(),
                t.face_count()
            )));
        }
        if !t.is_textured() {
            return Err(Error::MissingTexture);
        }
    }
    let views = generate_trajectory(trajectory)?;
    let mut jobs: Vec<(&Mesh, Branch, &Viewpoint)> = views
        .iter()
        .map(|v| (untextured, Branch::Untextured, v))
        .collect();
    if let Some(t) = textured {
        jobs.extend(views.iter().map(|v| (t, Branch::Textured, v)));
    }

    let run = |(mesh, branch, vp): &(&Mesh, Branch, &Viewpoint)| {
        process_view(
            mesh,
            *branch,
            vp,
            query,
            backend,
            params,
            whole_object_filter,
        )
    };
    let outcomes: Vec<(ViewRecord, Option<Error>)> = if params.parallel {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };

    let total = outcomes.len();
    let failed = outcomes.iter().filter(|(_, e)| e.is_some()).count();
    let mut records = Vec::with_capacity(total);
    let mut first_error = None;
    for (record, err) in outcomes {
        if first_error.is_none() {
            first_error = err;
        }
        records.push(record);
    }
    if total > 0 && failed == total {
        return Err(first_error.expect("failed views carry their error"));
    }

    let used = records.iter().filter(|r| r.vote.is_some()).count();
    let diagnostics = Diagnostics {
        views_used: used,
        views_skipped: total - used,
        views_failed: failed,
        detections_filtered: records
            .iter()
            .map(|r| r.detections.len() - r.kept.len())
            .sum(),
    };
    let visible_faces: BTreeSet<FaceId> = records
        .iter()
        .flat_map(|r| r.render.visible.keys().copied())
        .collect();

    Ok(ViewRun {
        query: query.clone(),
        view_count: views.len(),
        face_count: untextured.face_count(),
        has_textured: textured.is_some(),
        records,
        diagnostics,
        visible_faces: visible_faces.into_iter().collect(),
    })
}

impl ViewRun {
    fn votes(&self, branch: Branch) -> Vec<ViewVote> {
        self.records
            .iter()
            .filter(|r| r.branch == branch)
            .filter_map(|r| r.vote.clone())
            .collect()
    }

    fn revote(self, mesh: &Mesh, o_threshold: f64) -> Result<SegmentationResult> {
        let mut exact = vec![accumulate_exact(
            &self.votes(Branch::Untextured),
            self.face_count,
        )?];
        if self.has_textured {
            exact.push(accumulate_exact(
                &self.votes(Branch::Textured),
                self.face_count,
            )?);
        }
        let rounded = |sums: &[ExactSum]| sums.iter().map(ExactSum::value).collect::<Vec<_>>();
        let g_untextured = rounded(&exact[0]);
        let g_textured = exact.get(1).map(|s| rounded(s));
        let o = match &g_textured {
            Some(gt) => fuse_branches(&g_untextured, gt)?,
            None => g_untextured.clone(),
        };
        let o_smoothed = smooth_fused(&exact, &build_adjacency(mesh))?;
        let member_faces = threshold(&o_smoothed, o_threshold);
        Ok(self.finish(
            member_faces,
            FaceScores {
                g_untextured,
                g_textured,
                o,
                o_smoothed,
                o_threshold,
            },
        ))
    }

    fn baseline(self, o_threshold: f64) -> SegmentationResult {
        let max_conf = |branch: Branch| {
            let mut g = vec![0.0f64; self.face_count];
            for v in self.votes(branch) {
                for &f in &v.masked {
                    g[f as usize] = g[f as usize].max(v.confidence);
                }
            }
            g
        };
        let g_untextured = max_conf(Branch::Untextured);
        let g_textured = self.has_textured.then(|| max_conf(Branch::Textured));
        let o: Vec<f64> = match &g_textured {
            Some(gt) => g_untextured
                .iter()
                .zip(gt)
                .map(|(a, b)| a.max(*b))
                .collect(),
            None => g_untextured.clone(),
        };
        let members: BTreeSet<FaceId> = self
            .records
            .iter()
            .filter_map(|r| r.vote.as_ref())
            .flat_map(|v| v.masked.iter().copied())
            .collect();
        self.finish(
            members.into_iter().collect(),
            FaceScores {
                g_untextured,
                g_textured,
                o_smoothed: o.clone(),
                o,
                o_threshold,
            },
        )
    }

    fn finish(self, member_faces: Vec<FaceId>, scores: FaceScores) -> SegmentationResult {
        let per_view_votes = self.records.iter().filter_map(|r| r.vote.clone()).collect();
        SegmentationResult {
            query: self.query,
            view_count: self.view_count,
            face_count: self.face_count,
            member_faces,
            scores,
            per_view_votes,
            visible_faces: self.visible_faces,
            diagnostics: self.diagnostics,
            records: self.records,
        }
    }
}

/// Full pipeline: render every trajectory view of both branches, detect,
/// filter whole-object boxes, segment, vote, fuse, smooth and threshold.
///
/// Pass `textured = None` for a single-branch run. A view whose backend call
/// fails is skipped; if every view fails the first backend error is returned.
pub fn segment_mesh(
    untextured: &Mesh,
    textured: Option<&Mesh>,
    query: &QuerySpec,
    trajectory: &TrajectoryConfig,
    backend: &dyn GroundingBackend,
    params: &SegmentParams,
) -> Result<SegmentationResult> {
    run_views(
        untextured, textured, query, trajectory, backend, params, true,
    )?
    .revote(untextured, params.o_threshold)
}

/// Comparator without revoting: every view's highest-confidence box is
/// segmented and the masked faces of all views are united. No whole-object
/// filtering, negative votes or smoothing; `iou_cutoff` is ignored.
pub fn baseline_segment(
    untextured: &Mesh,
    textured: Option<&Mesh>,
    query: &QuerySpec,
    trajectory: &TrajectoryConfig,
    backend: &dyn GroundingBackend,
    params: &SegmentParams,
) -> Result<SegmentationResult> {
    Ok(run_views(
        untextured, textured, query, trajectory, backend, params, false,
    )?
    .baseline(params.o_threshold))
}

/// Per-face label from several single-query results: the query with the
/// highest smoothed score wins (lowest index on ties); faces whose scores are
/// all `<= 0` get `-1`.
pub fn assign_multi(queries: &[QuerySpec], results: &[SegmentationResult]) -> Result<Vec<i32>> {
    if queries.len() != results.len() {
        return Err(Error::LengthMismatch {
            expected: queries.len(),
            actual: results.len(),
        });
    }
    let Some(first) = results.first() else {
        return Ok(Vec::new());
    };
    let m = first.face_count;
    if let Some(bad) = results
        .iter()
        .find(|r| r.face_count != m || r.scores.o_smoothed.len() != m)
    {
        return Err(Error::MeshMismatch(format!(
            "query {:?} covers {} faces, expected {m}",
            bad.query.grounding, bad.face_count
        )));
    }
    let scores: Vec<&[f64]> = results
        .iter()
        .map(|r| r.scores.o_smoothed.as_slice())
        .collect();
    assign_scores(&scores)
}

/// Argmax over per-query score vectors of equal length, with the tie and
/// non-positive rules of [`assign_multi`].
pub fn assign_scores(scores: &[&[f64]]) -> Result<Vec<i32>> {
    let Some(first) = scores.first() else {
        return Ok(Vec::new());
    };
    let m = first.len();
    if let Some(bad) = scores.iter().find(|s| s.len() != m) {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: bad.len(),
        });
    }
    Ok((0..m)
        .map(|f| {
            let mut best: Option<(usize, f64)> = None;
            for (q, s) in scores.iter().enumerate() {
                let s = s[f];
                if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
                    best = Some((q, s));
                }
            }
            best.map_or(-1, |(q, _)| q as i32)
        })
        .collect())
}
