//! Ground-truth labels and face-level IoU evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{FaceId, Mesh};

/// Per-face part labels, `-1` for unlabeled faces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: Vec<i32>,
    pub names: BTreeMap<i32, String>,
}

impl GroundTruth {
    pub fn new(labels: Vec<i32>, names: BTreeMap<i32, String>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l < -1) {
            return Err(Error::InvalidInput(format!("label {bad} below -1")));
        }
        let used: BTreeSet<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
        if let Some(missing) = used.iter().find(|l| !names.contains_key(l)) {
            return Err(Error::InvalidInput(format!("label {missing} has no name")));
        }
        Ok(Self { labels, names })
    }

    /// Labels without names; each id `i` is called `part_i`.
    pub fn from_labels(labels: Vec<i32>) -> Result<Self> {
        let names = labels
            .iter()
            .filter(|&&l| l >= 0)
            .map(|&l| (l, format!("part_{l}")))
            .collect();
        Self::new(labels, names)
    }

    pub fn face_count(&self) -> usize {
        self.labels.len()
    }

    pub fn check_face_count(&self, faces: usize) -> Result<()> {
        if self.labels.len() != faces {
            return Err(Error::LengthMismatch {
                expected: faces,
                actual: self.labels.len(),
            });
        }
        Ok(())
    }

    pub fn faces_with(&self, label: i32) -> Vec<FaceId> {
        (0..self.labels.len() as FaceId)
            .filter(|&f| self.labels[f as usize] == label)
            .collect()
    }

    /// Resolves a part name, or a bare integer id, to a label.
    pub fn label_id(&self, part: &str) -> Result<i32> {
        if let Some((&id, _)) = self.names.iter().find(|(_, n)| n.as_str() == part) {
            return Ok(id);
        }
        match part.trim().parse::<i32>() {
            Ok(id) if self.names.contains_key(&id) => Ok(id),
            _ => Err(Error::UnknownLabel(part.to_string())),
        }
    }

    pub fn name(&self, label: i32) -> Option<&str> {
        self.names.get(&label).map(String::as_str)
    }
}

/// Reads labels from either one integer per line (face order) or JSON
/// `{"labels": [...], "names": {"0": "..."}}`. With `expected_faces` set the
/// label count must match it.
pub fn load_labels(path: impl AsRef<Path>, expected_faces: Option<usize>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let truth = parse_labels(&text, path)?;
    if let Some(m) = expected_faces {
        truth.check_face_count(m)?;
    }
    Ok(truth)
}

fn parse_labels(text: &str, path: &Path) -> Result<GroundTruth> {
    if text.trim_start().starts_with('{') {
        #[derive(Deserialize)]
        struct Raw {
            labels: Vec<i32>,
            #[serde(default)]
            names: BTreeMap<i32, String>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        return if raw.names.is_empty() {
            GroundTruth::from_labels(raw.labels)
        } else {
            GroundTruth::new(raw.labels, raw.names)
        };
    }
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse::<i32>().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("bad label {line:?}: {e}"),
        })?);
    }
    GroundTruth::from_labels(labels)
}

/// Writes the JSON form read by [`load_labels`].
pub fn save_labels(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string(truth).expect("labels serialize");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// `|P ∩ T| / |P ∪ T|`, or 1.0 when both are empty. Duplicates are ignored.
pub fn iou(predicted: &[FaceId], truth: &[FaceId]) -> f64 {
    let p: BTreeSet<FaceId> = predicted.iter().copied().collect();
    let t: BTreeSet<FaceId> = truth.iter().copied().collect();
    let union = p.union(&t).count();
    if union == 0 {
        return 1.0;
    }
    p.intersection(&t).count() as f64 / union as f64
}

/// IoU with each face counted by `weights[face]`.
pub fn weighted_iou(predicted: &[FaceId], truth: &[FaceId], weights: &[f64]) -> f64 {
    let p: BTreeSet<FaceId> = predicted.iter().copied().collect();
    let t: BTreeSet<FaceId> = truth.iter().copied().collect();
    let w = |f: &FaceId| weights[*f as usize];
    let union: f64 = p.union(&t).map(w).sum();
    if p.is_empty() && t.is_empty() {
        return 1.0;
    }
    if union <= 0.0 {
        return 0.0;
    }
    p.intersection(&t).map(w).sum::<f64>() / union
}

/// Restrictions applied to both predicted and true sets before scoring.
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Score only these faces, typically those visible in some view.
    pub visible: Option<Vec<FaceId>>,
    /// Per-face weights (usually areas) for a weighted IoU.
    pub weights: Option<Vec<f64>>,
}

impl EvalOptions {
    pub fn visible_only(mut self, visible: &[FaceId]) -> Self {
        self.visible = Some(visible.to_vec());
        self
    }

    pub fn area_weighted(mut self, mesh: &Mesh) -> Self {
        self.weights = Some((0..mesh.face_count()).map(|f| mesh.face_area(f)).collect());
        self
    }

    fn score(&self, predicted: &[FaceId], truth: &[FaceId]) -> f64 {
        let keep = |set: &[FaceId]| -> Vec<FaceId> {
            match &self.visible {
                Some(v) => {
                    let v: BTreeSet<FaceId> = v.iter().copied().collect();
                    set.iter().copied().filter(|f| v.contains(f)).collect()
                }
                None => set.to_vec(),
            }
        };
        let (p, t) = (keep(predicted), keep(truth));
        match &self.weights {
            Some(w) => weighted_iou(&p, &t, w),
            None => iou(&p, &t),
        }
    }

    fn check(&self, faces: usize) -> Result<()> {
        if let Some(w) = &self.weights {
            if w.len() != faces {
                return Err(Error::LengthMismatch {
                    expected: faces,
                    actual: w.len(),
                });
            }
        }
        if let Some(&f) = self
            .visible
            .iter()
            .flatten()
            .find(|&&f| f as usize >= faces)
        {
            return Err(Error::InvalidInput(format!(
                "visible face {f} out of range"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartScore {
    pub part: String,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<PartScore>,
    /// Unweighted mean of the row IoUs.
    pub miou: f64,
}

impl EvalReport {
    fn from_rows(rows: Vec<PartScore>) -> Self {
        let miou = if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.iou).sum::<f64>() / rows.len() as f64
        };
        Self { rows, miou }
    }

    pub fn per_part(&self) -> BTreeMap<&str, f64> {
        self.rows.iter().map(|r| (r.part.as_str(), r.iou)).collect()
    }

    /// `part,iou` rows followed by a `miou` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("part,iou\n");
        for r in &self.rows {
            writeln!(out, "{},{}", csv_field(&r.part), r.iou).unwrap();
        }
        writeln!(out, "miou,{}", self.miou).unwrap();
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: "<csv>".into(),
            line,
            message,
        };
        let mut rows = Vec::new();
        let mut miou = None;
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let (part, value) = line
                .rsplit_once(',')
                .ok_or_else(|| bad(i + 1, "expected part,iou".into()))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| bad(i + 1, format!("bad iou: {e}")))?;
            if part == "miou" {
                miou = Some(value);
            } else {
                let part = part.trim_matches('"').replace("\"\"", "\"");
                rows.push(PartScore { part, iou: value });
            }
        }
        let miou = miou.ok_or_else(|| bad(0, "missing miou row".into()))?;
        Ok(Self { rows, miou })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Scores one predicted face set against the faces labeled `part`.
pub fn evaluate_single(
    predicted: &[FaceId],
    part: &str,
    truth: &GroundTruth,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let m = truth.face_count();
    options.check(m)?;
    if let Some(&f) = predicted.iter().find(|&&f| f as usize >= m) {
        return Err(Error::MeshMismatch(format!(
            "predicted face {f} beyond {m} faces"
        )));
    }
    let label = truth.label_id(part)?;
    let name = truth.name(label).unwrap_or(part).to_string();
    let score = options.score(predicted, &truth.faces_with(label));
    Ok(EvalReport::from_rows(vec![PartScore {
        part: name,
        iou: score,
    }]))
}

/// Scores a per-face assignment (`assignment[f]` indexes `parts`, `-1` for
/// none) part by part; mIoU is the unweighted mean.
pub fn evaluate_multi(
    assignment: &[i32],
    parts: &[String],
    truth: &GroundTruth,
    options: &EvalOptions,
) -> Result<EvalReport> {
    truth.check_face_count(assignment.len())?;
    options.check(assignment.len())?;
    let mut rows = Vec::with_capacity(parts.len());
    for (q, part) in parts.iter().enumerate() {
        let label = truth.label_id(part)?;
        let predicted: Vec<FaceId> = (0..assignment.len() as FaceId)
            .filter(|&f| assignment[f as usize] == q as i32)
            .collect();
        rows.push(PartScore {
            part: truth.name(label).unwrap_or(part).to_string(),
            iou: options.score(&predicted, &truth.faces_with(label)),
        });
    }
    Ok(EvalReport::from_rows(rows))
}
