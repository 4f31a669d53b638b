//! Python bindings: camera models, warping, pinhole fitting, plane sweep,
//! the DSM pipeline and synthetic scenes.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rpcmvs::geo::dsm::{evaluate_dsm, Dsm};
use rpcmvs::geo::pipeline::{run_pipeline, PipelineConfig, View};
use rpcmvs::pinhole::fit_pinhole as fit_pinhole_rs;
use rpcmvs::raster::{read_pgm, PixelRect};
use rpcmvs::rpc::{fit_inverse_rpc, parse_rpc, write_rpc, GridSpec, GroundPoint, ImagePoint, RpcModel};
use rpcmvs::sweep::{run_multistage, SweepConfig};
use rpcmvs::synthetic::{gen_scene, read_manifest, render_views, write_bundle, SceneParams};
use rpcmvs::warp::WarpPair as WarpPairRs;
use rpcmvs::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_)
        | Error::HeightOutOfRange { .. }
        | Error::MissingKey(_)
        | Error::NonNumeric { .. }
        | Error::CoefficientCount { .. }
        | Error::InvalidModel(_)
        | Error::ShapeMismatch(_)
        | Error::Format(_)
        | Error::Json(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Serializable value to a plain Python object through `json.loads`.
fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn from_json<T: serde::de::DeserializeOwned + Default>(s: Option<&str>) -> PyResult<T> {
    match s {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string())),
        None => Ok(T::default()),
    }
}

/// Rational polynomial camera model.
#[pyclass(name = "Rpc", module = "rpcmvs_py", from_py_object)]
#[derive(Clone)]
struct Rpc {
    inner: RpcModel,
}

#[pymethods]
impl Rpc {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_rpc(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    fn to_text(&self) -> String {
        write_rpc(&self.inner)
    }

    #[getter]
    fn height_range(&self) -> (f64, f64) {
        let [a, b] = self.inner.height_range();
        (a, b)
    }

    #[getter]
    fn has_inverse(&self) -> bool {
        self.inner.inverse.is_some()
    }

    /// `(samp, line)` of a ground point.
    fn project(&self, lat: f64, lon: f64, hei: f64) -> PyResult<(f64, f64)> {
        let q = self.inner.project_forward(&GroundPoint::new(lat, lon, hei)).map_err(py_err)?;
        Ok((q.samp, q.line))
    }

    /// `(lat, lon, hei)` of an image point at height `hei`.
    #[pyo3(signature = (samp, line, hei, fitted = false, tol = 1e-9))]
    fn localize(&self, samp: f64, line: f64, hei: f64, fitted: bool, tol: f64) -> PyResult<(f64, f64, f64)> {
        let q = ImagePoint::new(samp, line);
        let g = if fitted {
            self.inner.localize_inverse_fitted(&q, hei)
        } else {
            self.inner.localize_iterative(&q, hei, tol)
        }
        .map_err(py_err)?;
        Ok((g.lat, g.lon, g.hei))
    }

    /// Model with fitted inverse polynomials, and the fit report.
    #[pyo3(signature = (grid = 20))]
    fn fit_inverse(&self, py: Python<'_>, grid: usize) -> PyResult<(Rpc, Py<PyAny>)> {
        let (m, rep) = fit_inverse_rpc(&self.inner, GridSpec::new(grid, grid, grid)).map_err(py_err)?;
        Ok((Rpc { inner: m }, to_py(py, &rep)?))
    }

    fn cropped(&self, samp0: f64, line0: f64) -> Self {
        Self { inner: self.inner.cropped(samp0, line0) }
    }

    fn downscaled(&self, factor: f64) -> Self {
        Self { inner: self.inner.downscaled(factor) }
    }

    fn __repr__(&self) -> String {
        let n = &self.inner.norm;
        format!("Rpc(lat_off={}, lon_off={}, samp_off={}, line_off={})", n.lat_off, n.lon_off, n.samp_off, n.line_off)
    }
}

/// Reference-to-source pixel transfer through height planes.
#[pyclass(name = "WarpPair", module = "rpcmvs_py")]
struct WarpPair {
    inner: WarpPairRs,
}

#[pymethods]
impl WarpPair {
    #[new]
    fn new(reference: &Rpc, source: &Rpc) -> Self {
        Self { inner: WarpPairRs::new(&reference.inner, &source.inner) }
    }

    fn warp(&self, samp: f64, line: f64, hei: f64) -> PyResult<(f64, f64)> {
        let q = self.inner.warp(&ImagePoint::new(samp, line), hei).map_err(py_err)?;
        Ok((q.samp, q.line))
    }

    /// Derivative of the warped `(samp, line)` with respect to height.
    fn jacobian(&self, samp: f64, line: f64, hei: f64) -> PyResult<(f64, f64)> {
        let j = self.inner.jacobian(&ImagePoint::new(samp, line), hei).map_err(py_err)?;
        Ok((j[0], j[1]))
    }
}

/// Gridded surface model on a UTM grid.
#[pyclass(name = "Dsm", module = "rpcmvs_py")]
struct PyDsm {
    inner: Dsm,
}

#[pymethods]
impl PyDsm {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: Dsm::read(path).map_err(py_err)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(path).map_err(py_err)
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.grid.rows
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.grid.cols
    }

    #[getter]
    fn cell(&self) -> f64 {
        self.inner.grid.cell
    }

    /// Row-major heights, row 0 north, nodata as -9999.
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    fn valid_count(&self) -> usize {
        self.inner.valid_count()
    }

    /// MAE, RMSE, threshold percentages and completeness against `gt`.
    fn evaluate(&self, py: Python<'_>, gt: &PyDsm) -> PyResult<Py<PyAny>> {
        let m = evaluate_dsm(&self.inner, &gt.inner).map_err(py_err)?;
        to_py(py, &m)
    }
}

/// Pinhole fit over a patch; returns the error summary.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (rpc, x0, y0, width, height, heights, grid = 10))]
fn fit_pinhole(
    py: Python<'_>,
    rpc: &Rpc,
    x0: i64,
    y0: i64,
    width: usize,
    height: usize,
    heights: (f64, f64),
    grid: usize,
) -> PyResult<Py<PyAny>> {
    let patch = PixelRect::new(x0, y0, width, height);
    let (cam, rep) =
        fit_pinhole_rs(&rpc.inner, patch, [heights.0, heights.1], GridSpec::new(grid, grid, grid)).map_err(py_err)?;
    let summary: serde_json::Value = serde_json::from_str(&rep.summary_json().map_err(py_err)?)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &serde_json::json!({ "report": summary, "camera": cam }))
}

/// Multi-stage plane sweep. Returns `(width, height, heights)` with NaN for
/// invalid pixels.
#[pyfunction]
#[pyo3(signature = (ref_image, ref_rpc, src_images, src_rpcs, height_range, config_json = None))]
fn sweep(
    py: Python<'_>,
    ref_image: PathBuf,
    ref_rpc: &Rpc,
    src_images: Vec<PathBuf>,
    src_rpcs: Vec<Rpc>,
    height_range: (f64, f64),
    config_json: Option<&str>,
) -> PyResult<(usize, usize, Vec<f64>)> {
    let cfg: SweepConfig = from_json(config_json)?;
    if src_images.len() != src_rpcs.len() {
        return Err(PyValueError::new_err("one model per source image is required"));
    }
    let r = read_pgm(&ref_image).map_err(py_err)?;
    let srcs = src_images.iter().map(read_pgm).collect::<Result<Vec<_>, _>>().map_err(py_err)?;
    let mut rpcs = vec![ref_rpc.inner.clone()];
    rpcs.extend(src_rpcs.into_iter().map(|m| m.inner));
    let map = py.detach(|| run_multistage(&r, &srcs, &rpcs, [height_range.0, height_range.1], &cfg)).map_err(py_err)?;
    Ok((map.width, map.height, map.heights))
}

/// Writes a synthetic scene bundle to `out_dir`; returns its manifest.
#[pyfunction]
#[pyo3(signature = (seed, out_dir, size = None, relief = None))]
fn synth(py: Python<'_>, seed: u64, out_dir: PathBuf, size: Option<usize>, relief: Option<f64>) -> PyResult<Py<PyAny>> {
    let mut params = SceneParams::default();
    if let Some(s) = size {
        params.image_size = s;
    }
    if let Some(r) = relief {
        params.relief = r;
    }
    let man = py
        .detach(|| {
            let scene = gen_scene(seed, &params)?;
            let renders = render_views(&scene)?;
            write_bundle(&scene, &renders, &out_dir)
        })
        .map_err(py_err)?;
    to_py(py, &man)
}

/// Runs the DSM pipeline on a scene bundle. Returns the DSM and the metrics
/// against the bundle's ground truth (None without overlap).
#[pyfunction]
#[pyo3(signature = (scene_dir, config_json = None, threads = None))]
fn pipeline(
    py: Python<'_>,
    scene_dir: PathBuf,
    config_json: Option<&str>,
    threads: Option<usize>,
) -> PyResult<(PyDsm, Py<PyAny>)> {
    let mut cfg: PipelineConfig = from_json(config_json)?;
    if let Some(t) = threads {
        cfg.threads = t;
    }
    let man = read_manifest(&scene_dir).map_err(py_err)?;
    let views = man
        .views
        .iter()
        .map(|v| {
            let image = read_pgm(scene_dir.join(&v.image))?;
            let rpc = parse_rpc(&std::fs::read_to_string(scene_dir.join(&v.rpc))?)?;
            Ok(View { image, rpc })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(py_err)?;
    let gt = Dsm::read(scene_dir.join(&man.gt_dsm)).map_err(py_err)?;
    let out = py.detach(|| run_pipeline(&views, &man.aoi, &cfg, None, Some(&gt))).map_err(py_err)?;
    let metrics = to_py(py, &out.metrics)?;
    Ok((PyDsm { inner: out.dsm }, metrics))
}

#[pymodule]
fn rpcmvs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Rpc>()?;
    m.add_class::<WarpPair>()?;
    m.add_class::<PyDsm>()?;
    m.add_function(wrap_pyfunction!(fit_pinhole, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    Ok(())
}
