use std::fmt::Write as _;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use meshseg_core::eval::{load_labels, save_labels, EvalReport, GroundTruth};
use meshseg_core::mesh::primitives::{cube, painted_sphere, PaintedSphere};
use meshseg_core::mesh::{label_color, read_face_colors, Mesh, UNLABELED_COLOR};
use meshseg_core::revote::Report;

fn meshseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Cap of 160 faces centered on +x, where the trajectory sees it well.
fn sphere() -> PaintedSphere {
    let mut s = painted_sphere(32, 21, 3, Default::default());
    s.mesh = turn(&s.mesh);
    s.textured = turn(&s.textured);
    s
}

/// Quarter turn about z taking +y to +x.
fn turn(mesh: &Mesh) -> Mesh {
    mesh.map_vertices(|p| {
        let mut q = *p;
        q.x = p.y;
        q.y = -p.x;
        q
    })
}

fn write_obj(mesh: &Mesh, path: &Path) {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    match mesh.uvs() {
        Some(uvs) => {
            for tri in uvs {
                for uv in tri {
                    let _ = writeln!(out, "vt {} {}", uv[0], uv[1]);
                }
            }
            for (i, f) in mesh.faces().iter().enumerate() {
                let t = 3 * i + 1;
                let _ = writeln!(
                    out,
                    "f {}/{} {}/{} {}/{}",
                    f[0] + 1,
                    t,
                    f[1] + 1,
                    t + 1,
                    f[2] + 1,
                    t + 2
                );
            }
        }
        None => {
            for f in mesh.faces() {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
    }
    fs::write(path, out).unwrap();
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    sphere: PaintedSphere,
}

impl Fixture {
    /// Sphere mesh, textured variant, checker texture and labels named
    /// body (0), cap (1) and spot (2, the opposite cap).
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let sphere = sphere();
        write_obj(&sphere.mesh, &root.join("sphere.obj"));
        write_obj(&sphere.textured, &root.join("sphere_tex.obj"));
        sphere
            .textured
            .texture()
            .unwrap()
            .save_png(root.join("checker.png"))
            .unwrap();
        let mut labels = sphere.labels.clone();
        let m = labels.len();
        for l in &mut labels[m - 160..] {
            *l = 2;
        }
        let names = [(0, "body"), (1, "cap"), (2, "spot")]
            .into_iter()
            .map(|(i, n)| (i, n.to_string()))
            .collect();
        save_labels(
            &GroundTruth::new(labels, names).unwrap(),
            root.join("labels.json"),
        )
        .unwrap();
        Self {
            _dir: dir,
            root,
            sphere,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn segment_args(&self, out: &str) -> Vec<String> {
        [
            "segment",
            "--mesh",
            s(&self.path("sphere.obj")),
            "--textured-mesh",
            s(&self.path("sphere_tex.obj")),
            "--texture",
            s(&self.path("checker.png")),
            "--image-size",
            "256",
            "--query",
            "cap",
            "--backend",
            "oracle",
            "--labels",
            s(&self.path("labels.json")),
            "--out",
            s(&self.path(out)),
        ]
        .map(String::from)
        .to_vec()
    }

    fn run(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = self.segment_args(out);
        args.extend(extra.iter().map(|a| a.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        meshseg(&refs)
    }
}

fn read_report(path: &Path) -> Report {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Relative paths of all files below `root`, sorted.
fn tree(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn data_rows(stdout: &str) -> Vec<Vec<String>> {
    stdout
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(String::from).collect())
        .collect()
}

#[test]
fn views_lists_one_row_per_camera() {
    let rows = data_rows(&ok(&meshseg(&["views", "--k", "8"])));
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[1] == "75" || r[1] == "115"));

    let bad = meshseg(&["views", "--k", "3"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("configuration"));

    assert_eq!(
        data_rows(&ok(&meshseg(&["views", "--k", "2", "--thetas", "90"]))).len(),
        2
    );
}

#[test]
fn views_json_carries_matrices() {
    let out = ok(&meshseg(&["views", "--json"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let views = v.as_array().unwrap();
    assert_eq!(views.len(), 8);
    assert!(views[0].get("view").is_some() && views[0].get("projection").is_some());
}

#[test]
fn render_writes_png_and_fidx_per_view() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("cube.obj");
    write_obj(&cube(), &obj);
    let out = dir.path().join("run");
    ok(&meshseg(&[
        "render",
        "--mesh",
        s(&obj),
        "--image-size",
        "64",
        "--out",
        s(&out),
    ]));
    for k in 0..8 {
        let v = out.join("untextured").join(format!("view_{k}"));
        assert!(
            v.join("image.png").is_file() && v.join("fidx.bin").is_file(),
            "view {k}"
        );
    }
    assert!(!out.join("textured").exists());

    let missing = meshseg(&["render", "--mesh", "/nonexistent/m.obj", "--out", s(&out)]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("I/O error"));

    let png = dir.path().join("t.png");
    meshseg_core::mesh::primitives::checker_texture(8, 2)
        .save_png(&png)
        .unwrap();
    let no_uv = meshseg(&[
        "render",
        "--mesh",
        s(&obj),
        "--texture",
        s(&png),
        "--out",
        s(&out),
    ]);
    assert_eq!(no_uv.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_uv.stderr).contains("no texture"));
}

#[test]
fn oracle_segment_colors_the_cap_and_reruns_identically() {
    let fx = Fixture::new();
    ok(&fx.run("run", &["--seed", "7"]));
    let run = fx.path("run");
    let report = read_report(&run.join("report.json"));
    assert_eq!((report.view_count, report.seed), (8, Some(7)));

    let cap: Vec<u32> = (0..fx.sphere.labels.len() as u32)
        .filter(|&f| fx.sphere.labels[f as usize] == 1)
        .collect();
    let expected: Vec<u32> = cap
        .iter()
        .copied()
        .filter(|f| report.visible_faces.binary_search(f).is_ok())
        .collect();
    assert!(!expected.is_empty());
    assert_eq!(report.member_faces, expected);

    let colors = read_face_colors(run.join("segmented.ply"))
        .unwrap()
        .unwrap();
    for (f, c) in colors.iter().enumerate() {
        let want = if expected.binary_search(&(f as u32)).is_ok() {
            label_color(0)
        } else {
            UNLABELED_COLOR
        };
        assert_eq!(*c, want, "face {f}");
    }
    for b in ["untextured", "textured"] {
        for k in 0..8 {
            let v = run.join(b).join(format!("view_{k}"));
            for f in ["image.png", "fidx.bin", "detections.json"] {
                assert!(v.join(f).is_file(), "{b} view {k} {f}");
            }
        }
    }

    ok(&fx.run("again", &["--seed", "7", "--threads", "3"]));
    let again = fx.path("again");
    let files = tree(&run);
    assert!(files.iter().any(|f| f.ends_with("mask.png")));
    assert_eq!(files, tree(&again));
    for f in &files {
        assert_eq!(
            fs::read(run.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{}",
            f.display()
        );
    }

    let replay = fx.run(
        "replay",
        &["--seed", "7", "--backend", "files", "--replay-dir", s(&run)],
    );
    ok(&replay);
    assert_eq!(
        fs::read(run.join("report.json")).unwrap(),
        fs::read(fx.path("replay/report.json")).unwrap()
    );
}

#[test]
fn eval_scores_a_clean_run_and_roundtrips_csv() {
    let fx = Fixture::new();
    ok(&fx.run("run", &[]));
    let report = fx.path("run/report.json");
    let stdout = ok(&meshseg(&[
        "eval",
        "--report",
        s(&report),
        "--labels",
        s(&fx.path("labels.json")),
        "--visible-only",
    ]));
    let csv = fs::read_to_string(fx.path("run/eval.csv")).unwrap();
    assert_eq!(stdout, csv);
    let parsed = EvalReport::from_csv(&csv).unwrap();
    assert_eq!(parsed.miou, 1.0);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fx.path("run/eval.json")).unwrap()).unwrap();
    assert_eq!(json["miou"].as_f64(), Some(parsed.miou));
    assert_eq!(json["rows"][0]["iou"].as_f64(), Some(parsed.rows[0].iou));

    // Without the visibility restriction the invisible cap faces count as misses.
    ok(&meshseg(&[
        "eval",
        "--report",
        s(&report),
        "--labels",
        s(&fx.path("labels.json")),
        "--area-weighted",
        "--mesh",
        s(&fx.path("sphere.obj")),
        "--out",
        s(&fx.path("plain")),
    ]));
    let plain =
        EvalReport::from_csv(&fs::read_to_string(fx.path("plain/eval.csv")).unwrap()).unwrap();
    assert!(plain.miou > 0.5 && plain.miou <= 1.0, "{}", plain.miou);

    let short = fx.path("short.txt");
    fs::write(&short, "0\n1\n1\n").unwrap();
    let bad = meshseg(&["eval", "--report", s(&report), "--labels", s(&short)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("length mismatch"));
}

#[test]
fn multi_query_writes_reports_and_assignment() {
    let fx = Fixture::new();
    let out = ok(&fx.run("multi", &["--query", "spot"]));
    assert_eq!(out.lines().count(), 2);
    let multi = fx.path("multi");
    let r0 = read_report(&multi.join("query_0/report.json"));
    let r1 = read_report(&multi.join("query_1/report.json"));
    assert_eq!(
        (r0.query.grounding.as_str(), r1.query.grounding.as_str()),
        ("cap", "spot")
    );
    assert!(multi.join("segmented.ply").is_file());

    let assignment =
        load_labels(multi.join("assignment.json"), Some(fx.sphere.labels.len())).unwrap();
    assert_eq!(assignment.name(0), Some("cap"));
    assert_eq!(assignment.faces_with(0), r0.member_faces);
    assert_eq!(assignment.faces_with(1), r1.member_faces);

    ok(&meshseg(&[
        "eval",
        "--report",
        s(&multi.join("query_0/report.json")),
        "--report",
        s(&multi.join("query_1/report.json")),
        "--labels",
        s(&fx.path("labels.json")),
        "--visible-only",
        "--out",
        s(&multi),
    ]));
    let e = EvalReport::from_csv(&fs::read_to_string(multi.join("eval.csv")).unwrap()).unwrap();
    let parts: Vec<&str> = e.rows.iter().map(|r| r.part.as_str()).collect();
    assert_eq!(parts, ["cap", "spot"]);
    assert_eq!(e.miou, 1.0);
}

#[test]
fn http_backend_down_exits_with_backend_code() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let fx = Fixture::new();
    let url = format!("http://127.0.0.1:{port}");
    let out = fx.run(
        "http",
        &[
            "--backend",
            "http",
            "--url",
            &url,
            "--k",
            "2",
            "--thetas",
            "90",
            "--image-size",
            "32",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("backend unavailable"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let fx = Fixture::new();
    let cfg = fx.path("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# small run\nbackend = oracle\nlabels = {}\nquery = cap\nk = 4\nimage_size = 64\nseed = 3\n",
            s(&fx.path("labels.json"))
        ),
    )
    .unwrap();
    let out = fx.path("cfg");
    ok(&meshseg(&[
        "--config",
        s(&cfg),
        "segment",
        "--mesh",
        s(&fx.path("sphere.obj")),
        "--seed",
        "11",
        "--out",
        s(&out),
    ]));
    let r = read_report(&out.join("report.json"));
    assert_eq!((r.view_count, r.seed), (4, Some(11)));
    assert!(
        !out.join("textured").exists(),
        "no texture means one branch"
    );

    fs::write(&cfg, "nonsense_key = 1\n").unwrap();
    let bad = meshseg(&["--config", s(&cfg), "views"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bad_input_exits_with_input_code() {
    let fx = Fixture::new();
    let no_labels = meshseg(&[
        "segment",
        "--mesh",
        s(&fx.path("sphere.obj")),
        "--query",
        "cap",
        "--backend",
        "oracle",
        "--out",
        s(&fx.path("x")),
    ]);
    assert_eq!(no_labels.status.code(), Some(2));
    let unknown = fx.run("x", &["--query", "wheel"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown label"));
    let usage = meshseg(&["segment", "--bogus"]);
    assert_eq!(usage.status.code(), Some(2));
}
