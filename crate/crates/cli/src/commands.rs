use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::info;
use meshseg_core::backend::{
    view_dir_name, Branch, Corruption, FileBackend, GroundingBackend, HttpBackend, HttpConfig,
    OracleBackend, OracleConfig, QuerySpec, DETECTIONS_FILE, MASK_FILE,
};
use meshseg_core::eval::{
    evaluate_multi, evaluate_single, load_labels, save_labels, EvalOptions, GroundTruth,
};
use meshseg_core::mesh::{export_labeled_mesh, load_mesh, Mesh};
use meshseg_core::raster::{render, RenderOutput};
use meshseg_core::revote::{
    assign_multi, assign_scores, baseline_segment, segment_mesh, MultiBox, Report, SegmentParams,
    SegmentationResult,
};
use meshseg_core::viewgen::generate_trajectory;
use meshseg_core::Error;

use crate::args::{
    BackendKind, BranchSel, CorruptKind, EvalArgs, MeshArgs, Method, MultiBoxArg, RenderArgs,
    SegmentArgs, ViewsArgs,
};
use crate::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const PLY_FILE: &str = "segmented.ply";
pub const ASSIGNMENT_FILE: &str = "assignment.json";
pub const IMAGE_FILE: &str = "image.png";
pub const FIDX_FILE: &str = "fidx.bin";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

pub fn views(a: &ViewsArgs) -> Result<(), CliError> {
    let views = generate_trajectory(&a.trajectory.config())?;
    let text = if a.json {
        serde_json::to_string_pretty(&views).expect("viewpoints serialize") + "\n"
    } else {
        let mut s = String::from("view\ttheta\tphi\tx\ty\tz\n");
        for v in &views {
            let p = v.position;
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                v.index, v.theta, v.phi, p.x, p.y, p.z
            );
        }
        s
    };
    match &a.output {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Original untextured mesh plus the normalized branch meshes.
struct Meshes {
    original: Mesh,
    untextured: Mesh,
    textured: Option<Mesh>,
}

fn load_meshes(a: &MeshArgs) -> Result<Meshes, CliError> {
    let original = load_mesh(&a.mesh, None)?;
    let textured = match (&a.textured_mesh, &a.texture) {
        (Some(path), tex) => {
            let m = load_mesh(path, tex.as_deref())?;
            if !m.is_textured() {
                return Err(Error::MissingTexture.into());
            }
            if !m.same_topology(&original) {
                return Err(Error::TopologyMismatch(format!(
                    "{} and {}",
                    a.mesh.display(),
                    path.display()
                ))
                .into());
            }
            Some(m)
        }
        (None, Some(tex)) => Some(load_mesh(&a.mesh, Some(tex))?),
        (None, None) => None,
    };
    Ok(Meshes {
        untextured: original.normalized()?,
        textured: textured.map(|m| m.normalized()).transpose()?,
        original,
    })
}

fn write_view(dir: &Path, r: &RenderOutput) -> Result<PathBuf, CliError> {
    create_dir(dir)?;
    r.image.save_png(dir.join(IMAGE_FILE))?;
    r.face_index.save(dir.join(FIDX_FILE))?;
    Ok(dir.to_path_buf())
}

pub fn render_cmd(a: &RenderArgs) -> Result<(), CliError> {
    let views = generate_trajectory(&a.trajectory.config())?;
    let meshes = load_meshes(&a.mesh)?;
    let mut branches = vec![(Branch::Untextured, &meshes.untextured)];
    if let Some(t) = &meshes.textured {
        branches.push((Branch::Textured, t));
    }
    for (branch, mesh) in branches {
        for v in &views {
            let out = render(mesh, v, branch)?;
            write_view(
                &a.out.join(branch.name()).join(view_dir_name(v.index)),
                &out,
            )?;
        }
        info!("rendered {} {} views", views.len(), branch.name());
    }
    println!("{}", a.out.display());
    Ok(())
}

fn corruption(a: &SegmentArgs) -> Result<Corruption, CliError> {
    if a.corrupt == CorruptKind::None {
        return Ok(Corruption::None);
    }
    let views: BTreeSet<usize> = match a.corrupt_count {
        Some(n) if n > a.trajectory.k => {
            return Err(CliError::Config(format!(
                "--corrupt-count {n} exceeds {} views",
                a.trajectory.k
            )))
        }
        Some(n) => Corruption::pick_views(n, a.trajectory.k, a.seed),
        None if a.corrupt_views.is_empty() => {
            return Err(CliError::Config(
                "--corrupt needs --corrupt-views or --corrupt-count".into(),
            ))
        }
        None => a.corrupt_views.iter().copied().collect(),
    };
    Ok(match a.corrupt {
        CorruptKind::None => unreachable!(),
        CorruptKind::Complement => Corruption::Complement { views },
        CorruptKind::Shift => Corruption::Shift {
            views,
            dx: a.shift_dx,
            dy: a.shift_dy,
        },
        CorruptKind::Drop => Corruption::Drop { views },
    })
}

fn oracle(a: &SegmentArgs, faces: usize, queries: &[QuerySpec]) -> Result<OracleBackend, CliError> {
    let path = a
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Config("the oracle backend needs --labels".into()))?;
    let truth = load_labels(path, None)?;
    if truth.face_count() != faces {
        return Err(Error::LabelMismatch {
            expected: faces,
            actual: truth.face_count(),
        }
        .into());
    }
    let mut names = BTreeMap::new();
    let target = match &a.target {
        Some(t) if queries.len() > 1 => {
            return Err(CliError::Config(format!(
                "--target {t:?} is ambiguous with several queries"
            )))
        }
        Some(t) => truth.label_id(t)?,
        None => {
            for q in queries {
                names.insert(q.grounding.clone(), truth.label_id(&q.grounding)?);
            }
            names[&queries[0].grounding]
        }
    };
    let clean = OracleConfig {
        confidence_correct: a.confidence,
        confidence_corrupt: a.corrupt_confidence,
        seed: a.seed,
        ..OracleConfig::new(truth.labels.clone(), target)
    };
    let corrupt = clean.clone().with_corruption(corruption(a)?);
    corrupt.validate(Some(a.trajectory.k))?;
    let backend = match a.corrupt_branch {
        BranchSel::Both => OracleBackend::new(corrupt),
        BranchSel::Untextured => OracleBackend::new(clean).with_branch(Branch::Untextured, corrupt),
        BranchSel::Textured => OracleBackend::new(clean).with_branch(Branch::Textured, corrupt),
    };
    Ok(backend.with_label_names(names))
}

fn backend(
    a: &SegmentArgs,
    faces: usize,
    queries: &[QuerySpec],
) -> Result<Box<dyn GroundingBackend>, CliError> {
    Ok(match a.backend {
        BackendKind::Oracle => Box::new(oracle(a, faces, queries)?),
        BackendKind::Files => {
            let dir = a
                .replay_dir
                .as_ref()
                .ok_or_else(|| CliError::Config("the files backend needs --replay-dir".into()))?;
            Box::new(FileBackend::new(dir))
        }
        BackendKind::Http => {
            if !(a.timeout > 0.0 && a.timeout.is_finite()) {
                return Err(CliError::Config(format!("bad --timeout {}", a.timeout)));
            }
            Box::new(HttpBackend::new(HttpConfig {
                base_url: a.url.clone(),
                timeout: Duration::from_secs_f64(a.timeout),
                max_in_flight: a.max_in_flight,
            })?)
        }
    })
}

/// Writes renders, backend outputs, report and colored mesh of one query.
fn write_result(
    dir: &Path,
    result: &SegmentationResult,
    mesh: &Mesh,
    label: i32,
    seed: u64,
) -> Result<(), CliError> {
    for rec in &result.records {
        let vdir = dir.join(rec.branch.name()).join(view_dir_name(rec.view));
        write_view(&vdir, &rec.render)?;
        if rec.error.is_some() {
            continue;
        }
        let dets = serde_json::to_string_pretty(&rec.detections).expect("detections serialize");
        write(&vdir.join(DETECTIONS_FILE), dets + "\n")?;
        if let Some(mask) = &rec.mask {
            mask.to_bitmap().save_png(vdir.join(MASK_FILE))?;
        }
    }
    write(
        &dir.join(REPORT_FILE),
        result.report(Some(seed)).to_json() + "\n",
    )?;
    let labels: Vec<i32> = (0..result.face_count as u32)
        .map(|f| if result.is_member(f) { label } else { -1 })
        .collect();
    export_labeled_mesh(mesh, &labels, dir.join(PLY_FILE))?;
    Ok(())
}

pub fn segment(a: &SegmentArgs) -> Result<(), CliError> {
    let trajectory = a.trajectory.config();
    trajectory.validate()?;
    let queries = a
        .query
        .iter()
        .map(|g| QuerySpec::new(&a.object, g))
        .collect::<Result<Vec<_>, _>>()?;
    let params = SegmentParams {
        iou_cutoff: a.iou_cutoff,
        membership_fraction: a.membership_fraction,
        min_pixels: a.min_pixels,
        o_threshold: a.o_threshold,
        multi_box: match a.multi_box {
            MultiBoxArg::Top1 => MultiBox::Top1,
            MultiBoxArg::Union => MultiBox::Union,
        },
        parallel: true,
    };
    params.validate()?;
    let meshes = load_meshes(&a.mesh)?;
    if meshes.textured.is_none() {
        info!("no texture given; running the untextured branch only");
    }
    let backend = backend(a, meshes.untextured.face_count(), &queries)?;

    let run = |q: &QuerySpec| {
        let f = match a.method {
            Method::Revote => segment_mesh,
            Method::Baseline => baseline_segment,
        };
        f(
            &meshes.untextured,
            meshes.textured.as_ref(),
            q,
            &trajectory,
            backend.as_ref(),
            &params,
        )
    };
    let run_all = || queries.iter().map(run).collect::<Result<Vec<_>, _>>();
    let results = if a.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(a.threads)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?
            .install(run_all)?
    } else {
        run_all()?
    };

    create_dir(&a.out)?;
    if let [result] = results.as_slice() {
        write_result(&a.out, result, &meshes.original, 0, a.seed)?;
    } else {
        for (i, result) in results.iter().enumerate() {
            let dir = a.out.join(format!("query_{i}"));
            write_result(&dir, result, &meshes.original, i as i32, a.seed)?;
        }
        let assignment = assign_multi(&queries, &results)?;
        let names = queries
            .iter()
            .enumerate()
            .map(|(i, q)| (i as i32, q.grounding.clone()))
            .collect();
        export_labeled_mesh(&meshes.original, &assignment, a.out.join(PLY_FILE))?;
        save_labels(
            &GroundTruth::new(assignment, names)?,
            a.out.join(ASSIGNMENT_FILE),
        )?;
    }
    for r in &results {
        let d = r.diagnostics;
        println!(
            "{}\t{} of {} faces\t{} views used, {} skipped, {} failed",
            r.query.grounding,
            r.member_faces.len(),
            r.face_count,
            d.views_used,
            d.views_skipped,
            d.views_failed
        );
    }
    Ok(())
}

fn read_report(path: &Path) -> Result<Report, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Parse {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        }
        .into()
    })
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let reports = a
        .report
        .iter()
        .map(|p| read_report(p))
        .collect::<Result<Vec<_>, _>>()?;
    let truth = load_labels(&a.labels, None)?;
    for r in &reports {
        truth.check_face_count(r.face_count)?;
    }
    let mut opts = EvalOptions::default();
    if a.visible_only {
        let seen: BTreeSet<u32> = reports
            .iter()
            .flat_map(|r| r.visible_faces.iter().copied())
            .collect();
        opts = opts.visible_only(&seen.into_iter().collect::<Vec<_>>());
    }
    if a.area_weighted {
        let path = a.mesh.as_ref().expect("clap enforces --mesh");
        let mesh = load_mesh(path, None)?;
        truth.check_face_count(mesh.face_count())?;
        opts = opts.area_weighted(&mesh);
    }
    let report = if let [r] = reports.as_slice() {
        let part = a.part.as_deref().unwrap_or(&r.query.grounding);
        evaluate_single(&r.member_faces, part, &truth, &opts)?
    } else {
        if a.part.is_some() {
            return Err(CliError::Config("--part applies to a single report".into()));
        }
        let scores: Vec<&[f64]> = reports.iter().map(|r| r.o_smoothed.as_slice()).collect();
        let parts: Vec<String> = reports.iter().map(|r| r.query.grounding.clone()).collect();
        evaluate_multi(&assign_scores(&scores)?, &parts, &truth, &opts)?
    };
    let out = match &a.out {
        Some(d) => d.clone(),
        None => a.report[0]
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf(),
    };
    create_dir(&out)?;
    report.save_csv(out.join("eval.csv"))?;
    report.save_json(out.join("eval.json"))?;
    print!("{}", report.to_csv());
    Ok(())
}
