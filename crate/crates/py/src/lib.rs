//! Python module `meshseg`: meshes, trajectory, rendering, vote arithmetic,
//! IoU and an oracle-driven segmentation run.

use std::collections::BTreeMap;
use std::ops::Index;
use std::path::PathBuf;

use meshseg_core::backend::{Branch, Corruption, OracleBackend, OracleConfig, QuerySpec};
use meshseg_core::mesh::{self, build_adjacency, primitives};
use meshseg_core::raster::{self, BACKGROUND};
use meshseg_core::revote::{self, ViewVote};
use meshseg_core::viewgen::{generate_trajectory, PolarAxis, TrajectoryConfig};
use meshseg_core::{eval, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(meshseg, MeshsegError, PyException);
create_exception!(meshseg, BackendError, MeshsegError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e if e.is_backend() => BackendError::new_err(e.to_string()),
        e => MeshsegError::new_err(e.to_string()),
    }
}

/// Triangle mesh, optionally textured.
#[pyclass(name = "Mesh", module = "meshseg", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyMesh {
    inner: mesh::Mesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    fn new(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>) -> PyResult<Self> {
        let vertices = vertices
            .into_iter()
            .map(|[x, y, z]| [x, y, z].into())
            .collect();
        Ok(Self {
            inner: mesh::Mesh::new(vertices, faces).map_err(to_py)?,
        })
    }

    /// Loads OBJ or PLY, attaching a PNG texture when given.
    #[staticmethod]
    #[pyo3(signature = (path, texture=None))]
    fn load(path: PathBuf, texture: Option<PathBuf>) -> PyResult<Self> {
        let inner = mesh::load_mesh(&path, texture.as_deref()).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner
            .vertices()
            .iter()
            .map(|v| [v.x, v.y, v.z])
            .collect()
    }

    #[getter]
    fn faces(&self) -> Vec<[u32; 3]> {
        self.inner.faces().to_vec()
    }

    #[getter]
    fn face_count(&self) -> usize {
        self.inner.face_count()
    }

    #[getter]
    fn is_textured(&self) -> bool {
        self.inner.is_textured()
    }

    fn face_area(&self, face: usize) -> PyResult<f64> {
        if face >= self.inner.face_count() {
            return Err(PyValueError::new_err(format!("face {face} out of range")));
        }
        Ok(self.inner.face_area(face))
    }

    /// Centered copy with the farthest vertex at radius 1.
    fn normalized(&self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.normalized().map_err(to_py)?,
        })
    }

    fn untextured(&self) -> Self {
        Self {
            inner: self.inner.untextured(),
        }
    }

    /// Writes an ascii PLY colored by per-face label (-1 for none).
    fn export_labeled(&self, path: PathBuf, labels: Vec<i32>) -> PyResult<()> {
        mesh::export_labeled_mesh(&self.inner, &labels, path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.face_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(vertices={}, faces={}, textured={})",
            self.inner.vertices().len(),
            self.inner.face_count(),
            self.inner.is_textured()
        )
    }
}

/// Camera trajectory settings.
#[pyclass(
    name = "Trajectory",
    module = "meshseg",
    get_all,
    set_all,
    from_py_object
)]
#[derive(Clone)]
pub struct PyTrajectory {
    k: usize,
    radius: f64,
    thetas: Vec<f64>,
    image_size: u32,
    fov: f64,
    polar_axis: String,
}

impl PyTrajectory {
    fn config(&self) -> PyResult<TrajectoryConfig> {
        let polar_axis = match self.polar_axis.as_str() {
            "y" => PolarAxis::Y,
            "z" => PolarAxis::Z,
            other => return Err(PyValueError::new_err(format!("polar_axis {other:?}"))),
        };
        let c = TrajectoryConfig {
            views: self.k,
            radius: self.radius,
            polar_angles: self.thetas.clone(),
            image_size: self.image_size,
            fov_y: self.fov,
            polar_axis,
        };
        c.validate().map_err(to_py)?;
        Ok(c)
    }
}

#[pymethods]
impl PyTrajectory {
    #[new]
    #[pyo3(signature = (k=8, radius=2.0, thetas=vec![75.0, 115.0], image_size=512, fov=60.0, polar_axis="y".to_string()))]
    fn new(
        k: usize,
        radius: f64,
        thetas: Vec<f64>,
        image_size: u32,
        fov: f64,
        polar_axis: String,
    ) -> PyResult<Self> {
        let t = Self {
            k,
            radius,
            thetas,
            image_size,
            fov,
            polar_axis,
        };
        t.config()?;
        Ok(t)
    }

    /// One dict per view: index, theta, phi, position, view and projection matrices.
    fn views<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let views = generate_trajectory(&self.config()?).map_err(to_py)?;
        views
            .iter()
            .map(|v| {
                let d = PyDict::new(py);
                d.set_item("index", v.index)?;
                d.set_item("theta", v.theta)?;
                d.set_item("phi", v.phi)?;
                d.set_item("position", [v.position.x, v.position.y, v.position.z])?;
                d.set_item("view", rows(&v.view))?;
                d.set_item("projection", rows(&v.projection))?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory(k={}, radius={}, thetas={:?}, image_size={}, fov={})",
            self.k, self.radius, self.thetas, self.image_size, self.fov
        )
    }
}

fn rows<M: Index<(usize, usize), Output = f64>>(m: &M) -> Vec<[f64; 4]> {
    (0..4)
        .map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)], m[(r, 3)]])
        .collect()
}

fn trajectory_or_default(t: Option<PyTrajectory>) -> PyResult<TrajectoryConfig> {
    match t {
        Some(t) => t.config(),
        None => Ok(TrajectoryConfig::default()),
    }
}

/// Rendered view: RGB bytes row-major, face id per pixel (-1 for background).
#[pyclass(name = "Render", module = "meshseg", frozen, get_all)]
pub struct PyRender {
    width: u32,
    height: u32,
    image: Vec<u8>,
    face_ids: Vec<i64>,
    visible: BTreeMap<u32, u32>,
}

/// Renders view `view` of the trajectory.
#[pyfunction]
#[pyo3(signature = (mesh, view, trajectory=None, textured=false))]
fn render(
    mesh: &PyMesh,
    view: usize,
    trajectory: Option<PyTrajectory>,
    textured: bool,
) -> PyResult<PyRender> {
    let views = generate_trajectory(&trajectory_or_default(trajectory)?).map_err(to_py)?;
    let vp = views
        .get(view)
        .ok_or_else(|| PyValueError::new_err(format!("view {view} outside 0..{}", views.len())))?;
    let shading = if textured {
        Branch::Textured
    } else {
        Branch::Untextured
    };
    let out = raster::render(&mesh.inner, vp, shading).map_err(to_py)?;
    let (width, height) = out.dims();
    let face_ids = out
        .face_index
        .ids()
        .iter()
        .map(|&f| if f == BACKGROUND { -1 } else { i64::from(f) })
        .collect();
    Ok(PyRender {
        width,
        height,
        image: out.image.into_raw(),
        face_ids,
        visible: out.visible,
    })
}

/// Per-face vote totals. Each vote is `(masked, unmasked, confidence)`.
#[pyfunction]
fn accumulate(votes: Vec<(Vec<u32>, Vec<u32>, f64)>, face_count: usize) -> PyResult<Vec<f64>> {
    let votes: Vec<ViewVote> = votes
        .into_iter()
        .enumerate()
        .map(|(view, (mut masked, mut unmasked, confidence))| {
            masked.sort_unstable();
            unmasked.sort_unstable();
            ViewVote {
                view,
                branch: Branch::Untextured,
                confidence,
                masked,
                unmasked,
            }
        })
        .collect();
    revote::accumulate(&votes, face_count).map_err(to_py)
}

/// Mean of each face's score and its edge neighbors' scores.
#[pyfunction]
fn smooth(scores: Vec<f64>, mesh: &PyMesh) -> PyResult<Vec<f64>> {
    revote::smooth(&scores, &build_adjacency(&mesh.inner)).map_err(to_py)
}

/// Faces whose score is strictly above `t`.
#[pyfunction]
#[pyo3(signature = (scores, t=0.0))]
fn threshold(scores: Vec<f64>, t: f64) -> Vec<u32> {
    revote::threshold(&scores, t)
}

#[pyfunction]
fn iou(predicted: Vec<u32>, truth: Vec<u32>) -> f64 {
    eval::iou(&predicted, &truth)
}

#[pyfunction]
fn cube() -> PyMesh {
    PyMesh {
        inner: primitives::cube(),
    }
}

#[pyfunction]
#[pyo3(signature = (subdivisions=2))]
fn icosphere(subdivisions: u32) -> PyMesh {
    PyMesh {
        inner: primitives::icosphere(subdivisions),
    }
}

/// `(mesh, textured_mesh, labels)` for a sphere whose top cap is label 1.
/// `seed` rotates the sphere randomly; `None` keeps the cap at +y.
#[pyfunction]
#[pyo3(signature = (segments=32, rings=21, cap_rings=3, seed=None))]
fn painted_sphere(
    segments: u32,
    rings: u32,
    cap_rings: u32,
    seed: Option<u64>,
) -> PyResult<(PyMesh, PyMesh, Vec<i32>)> {
    if segments < 3 || rings < 3 || cap_rings == 0 || cap_rings >= rings {
        return Err(PyValueError::new_err(
            "need segments >= 3, rings >= 3, 0 < cap_rings < rings",
        ));
    }
    let rotation = seed.map_or_else(Default::default, primitives::random_rotation);
    let s = primitives::painted_sphere(segments, rings, cap_rings, rotation);
    Ok((
        PyMesh { inner: s.mesh },
        PyMesh { inner: s.textured },
        s.labels,
    ))
}

/// Outcome of one segmentation query.
#[pyclass(name = "Segmentation", module = "meshseg", frozen, get_all)]
pub struct PySegmentation {
    member_faces: Vec<u32>,
    o_smoothed: Vec<f64>,
    visible_faces: Vec<u32>,
    views_used: usize,
    views_skipped: usize,
    report_json: String,
}

#[pymethods]
impl PySegmentation {
    fn __repr__(&self) -> String {
        format!(
            "Segmentation(members={}, views_used={})",
            self.member_faces.len(),
            self.views_used
        )
    }
}

/// Segments the faces labeled `target` using the ground-truth oracle as the
/// grounding backend. `corrupt` is one of none, complement, shift or drop and
/// applies to `corrupt_views`.
#[pyfunction]
#[pyo3(signature = (mesh, labels, target, textured=None, trajectory=None, corrupt="none", corrupt_views=vec![], seed=0, baseline=false))]
#[allow(clippy::too_many_arguments)]
fn segment_oracle(
    py: Python<'_>,
    mesh: &PyMesh,
    labels: Vec<i32>,
    target: i32,
    textured: Option<PyMesh>,
    trajectory: Option<PyTrajectory>,
    corrupt: &str,
    corrupt_views: Vec<usize>,
    seed: u64,
    baseline: bool,
) -> PyResult<PySegmentation> {
    let trajectory = trajectory_or_default(trajectory)?;
    let views = corrupt_views.into_iter().collect();
    let corruption = match corrupt {
        "none" => Corruption::None,
        "complement" => Corruption::Complement { views },
        "shift" => Corruption::Shift {
            views,
            dx: 5,
            dy: 0,
        },
        "drop" => Corruption::Drop { views },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown corruption {other:?}"
            )))
        }
    };
    let config = OracleConfig {
        seed,
        ..OracleConfig::new(labels, target)
    }
    .with_corruption(corruption);
    config.validate(Some(trajectory.views)).map_err(to_py)?;
    let backend = OracleBackend::new(config);
    let query = QuerySpec::new("object", format!("part {target}")).map_err(to_py)?;
    let params = revote::SegmentParams::default();
    let untextured = &mesh.inner;
    let textured = textured.as_ref().map(|m| &m.inner);
    let result = py
        .detach(|| {
            let f = if baseline {
                revote::baseline_segment
            } else {
                revote::segment_mesh
            };
            f(untextured, textured, &query, &trajectory, &backend, &params)
        })
        .map_err(to_py)?;
    Ok(PySegmentation {
        report_json: result.report(Some(seed)).to_json(),
        member_faces: result.member_faces,
        o_smoothed: result.scores.o_smoothed,
        visible_faces: result.visible_faces,
        views_used: result.diagnostics.views_used,
        views_skipped: result.diagnostics.views_skipped,
    })
}

#[pymodule]
pub fn meshseg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MeshsegError", m.py().get_type::<MeshsegError>())?;
    m.add("BackendError", m.py().get_type::<BackendError>())?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyRender>()?;
    m.add_class::<PySegmentation>()?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(accumulate, m)?)?;
    m.add_function(wrap_pyfunction!(smooth, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(cube, m)?)?;
    m.add_function(wrap_pyfunction!(icosphere, m)?)?;
    m.add_function(wrap_pyfunction!(painted_sphere, m)?)?;
    m.add_function(wrap_pyfunction!(segment_oracle, m)?)?;
    Ok(())
}
