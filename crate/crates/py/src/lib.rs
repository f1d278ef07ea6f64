//! Python bindings for `patchbound`.

use std::path::PathBuf;

use patchbound::aggregate::{self, predict_all};
use patchbound::bound::{self, DEFAULT_ALPHA, DEFAULT_C4, DEFAULT_C6, DEFAULT_MIN_PATCH, DEFAULT_STRIDE};
use patchbound::logits::{self, ImageLogits};
use patchbound::mesh::{self, MeshExperiment, Norm};
use patchbound::sweep::{self, Preset};
use patchbound::toy;
use patchbound::Error;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Stream(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_norm(name: &str) -> PyResult<Norm> {
    match name {
        "euclidean" => Ok(Norm::Euclidean),
        "manhattan" => Ok(Norm::Manhattan),
        "chebyshev" => Ok(Norm::Chebyshev),
        other => Err(PyValueError::new_err(format!("unknown norm {other:?}"))),
    }
}

/// Data set and patch configuration for one bound evaluation.
#[pyclass(name = "BoundParams", frozen, get_all)]
struct PyBoundParams {
    n_train: u64,
    n_classes: u32,
    height: u32,
    width: u32,
    channels: u32,
    patch_height: u32,
    patch_width: u32,
    stride_h: u32,
    stride_w: u32,
    alpha: f64,
    c4: f64,
    c6: f64,
}

impl PyBoundParams {
    fn inner(&self) -> bound::BoundParams {
        bound::BoundParams {
            n_train: self.n_train,
            n_classes: self.n_classes,
            height: self.height,
            width: self.width,
            channels: self.channels,
            patch_height: self.patch_height,
            patch_width: self.patch_width,
            stride_h: self.stride_h,
            stride_w: self.stride_w,
            alpha: self.alpha,
            c4: self.c4,
            c6: self.c6,
        }
    }

    fn from_inner(p: bound::BoundParams) -> Self {
        PyBoundParams {
            n_train: p.n_train,
            n_classes: p.n_classes,
            height: p.height,
            width: p.width,
            channels: p.channels,
            patch_height: p.patch_height,
            patch_width: p.patch_width,
            stride_h: p.stride_h,
            stride_w: p.stride_w,
            alpha: p.alpha,
            c4: p.c4,
            c6: p.c6,
        }
    }
}

#[pymethods]
impl PyBoundParams {
    /// Patch size defaults to the full image.
    #[new]
    #[pyo3(signature = (n_train, n_classes, height, width, channels, patch_height=None, patch_width=None, stride=DEFAULT_STRIDE, alpha=DEFAULT_ALPHA, c4=DEFAULT_C4, c6=DEFAULT_C6))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_train: u64,
        n_classes: u32,
        height: u32,
        width: u32,
        channels: u32,
        patch_height: Option<u32>,
        patch_width: Option<u32>,
        stride: u32,
        alpha: f64,
        c4: f64,
        c6: f64,
    ) -> PyResult<Self> {
        let mut p = bound::BoundParams::full_image(n_train, n_classes, height, width, channels)
            .with_patch(patch_height.unwrap_or(height), patch_width.unwrap_or(width))
            .with_stride(stride);
        p.alpha = alpha;
        p.c4 = c4;
        p.c6 = c6;
        p.validate().map_err(py_err)?;
        Ok(Self::from_inner(p))
    }

    /// Full-image parameters of a named data set (`cifar10`, `cifar100`, `stl10`, `imagenet1k`).
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let preset: Preset = name.parse().map_err(py_err)?;
        Ok(Self::from_inner(preset.params()))
    }

    fn with_patch(&self, patch_height: u32, patch_width: u32) -> PyResult<Self> {
        let p = self.inner().with_patch(patch_height, patch_width);
        p.validate().map_err(py_err)?;
        Ok(Self::from_inner(p))
    }

    fn with_stride(&self, stride: u32) -> PyResult<Self> {
        let p = self.inner().with_stride(stride);
        p.validate().map_err(py_err)?;
        Ok(Self::from_inner(p))
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner())
    }
}

#[pyclass(name = "BoundBreakdown", frozen, get_all)]
struct PyBoundBreakdown {
    t_eff: f64,
    d_t: f64,
    mesh_term: f64,
    roughness: f64,
    noise_term: f64,
    total: f64,
}

#[pymethods]
impl PyBoundBreakdown {
    fn __repr__(&self) -> String {
        format!(
            "BoundBreakdown(t_eff={}, d_t={}, mesh_term={}, roughness={}, noise_term={}, total={})",
            self.t_eff, self.d_t, self.mesh_term, self.roughness, self.noise_term, self.total
        )
    }
}

#[pyfunction]
fn image_bound(params: &PyBoundParams) -> PyResult<PyBoundBreakdown> {
    let b = bound::image_bound(&params.inner()).map_err(py_err)?;
    Ok(PyBoundBreakdown {
        t_eff: b.t_eff,
        d_t: b.d_t,
        mesh_term: b.mesh_term,
        roughness: b.roughness,
        noise_term: b.noise_term,
        total: b.total,
    })
}

/// `[(patch_size, raw, envelope), ...]` over square patches.
#[pyfunction]
#[pyo3(signature = (params, max_patch=None, min_patch=DEFAULT_MIN_PATCH))]
fn bound_envelope(params: &PyBoundParams, max_patch: Option<u32>, min_patch: u32) -> PyResult<Vec<(u32, f64, f64)>> {
    let p = params.inner();
    let max = max_patch.unwrap_or(p.height.min(p.width));
    let env = bound::bound_envelope(&p, max, min_patch).map_err(py_err)?;
    Ok(env.into_iter().map(|e| (e.patch_size, e.raw, e.envelope)).collect())
}

/// Top-left `(row, col)` of every grid patch, row-major.
#[pyfunction]
#[pyo3(signature = (height, width, patch_height, patch_width, stride_h=1, stride_w=1))]
fn enumerate_grid(height: u32, width: u32, patch_height: u32, patch_width: u32, stride_h: u32, stride_w: u32) -> PyResult<Vec<(u32, u32)>> {
    let grid = patchbound::enumerate_grid(height, width, patch_height, patch_width, stride_h, stride_w).map_err(py_err)?;
    Ok(grid.positions.into_iter().map(|p| (p.row, p.col)).collect())
}

/// Mean logits and predicted class for one image's flattened `[patch][class]` logits.
#[pyfunction]
fn average_predict(logits: Vec<f32>, n_patches: usize, n_classes: usize) -> PyResult<(Vec<f64>, usize)> {
    if n_patches == 0 || logits.len() != n_patches * n_classes {
        return Err(PyValueError::new_err(format!(
            "expected {n_patches} x {n_classes} logits, got {}",
            logits.len()
        )));
    }
    let image = ImageLogits { image_id: 0, grid_rows: 1, grid_cols: n_patches as u32, label: None, logits };
    let p = aggregate::average_predict(&image, n_classes).map_err(py_err)?;
    Ok((p.mean_logits, p.predicted))
}

/// Contents of a PLG1 file.
#[pyclass(name = "LogitSet", frozen)]
struct PyLogitSet(logits::LogitSet);

#[pymethods]
impl PyLogitSet {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        logits::read_logits_file(&path).map(PyLogitSet).map_err(py_err)
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        logits::read_logits(data).map(PyLogitSet).map_err(py_err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let buf = self.0.to_bytes().map_err(py_err)?;
        Ok(PyBytes::new(py, &buf))
    }

    fn write(&self, path: PathBuf) -> PyResult<usize> {
        logits::write_logits_file(&self.0, &path).map_err(py_err)
    }

    #[getter]
    fn n_classes(&self) -> u32 {
        self.0.n_classes
    }

    /// `(H, W, H_T, W_T, S_H, S_W)`.
    #[getter]
    fn geometry(&self) -> (u32, u32, u32, u32, u32, u32) {
        let g = self.0.geometry;
        (g.height, g.width, g.patch_height, g.patch_width, g.stride_h, g.stride_w)
    }

    #[getter]
    fn image_ids(&self) -> Vec<u32> {
        self.0.images.iter().map(|im| im.image_id).collect()
    }

    #[getter]
    fn labels(&self) -> Vec<Option<u32>> {
        self.0.images.iter().map(|im| im.label).collect()
    }

    /// `[(image_id, mean_logits, predicted), ...]`.
    fn predictions(&self) -> PyResult<Vec<(u32, Vec<f64>, usize)>> {
        let preds = predict_all(&self.0).map_err(py_err)?;
        Ok(preds.into_iter().map(|p| (p.image_id, p.mean_logits, p.predicted)).collect())
    }

    /// Percent of labeled images predicted correctly.
    fn patchwise_accuracy(&self) -> PyResult<f64> {
        aggregate::patchwise_accuracy(&self.0).map_err(py_err)
    }

    /// Heat map as a list of H rows.
    fn heatmap(&self, image_id: u32, class_index: usize) -> PyResult<Vec<Vec<f64>>> {
        let map = self.0.heatmap(image_id, class_index).map_err(py_err)?;
        Ok(map.values.chunks(map.width as usize).map(<[f64]>::to_vec).collect())
    }

    fn render_heatmap(&self, image_id: u32, class_index: usize, path: PathBuf) -> PyResult<()> {
        let map = self.0.heatmap(image_id, class_index).map_err(py_err)?;
        aggregate::render_heatmap_file(&map, &path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.images.len()
    }
}

#[pyfunction]
#[pyo3(signature = (dim, n, queries=100, seed=0))]
fn estimate_mesh_norm(dim: usize, n: usize, queries: usize, seed: u64) -> PyResult<f64> {
    mesh::estimate_mesh_norm(dim, n, queries, seed).map_err(py_err)
}

/// `(slope, intercept, residual)` of ln mean mesh norm against ln N.
#[pyfunction]
#[pyo3(signature = (dim, sample_counts, queries=100, trials=20, seed=7, norm="euclidean"))]
fn fit_scaling_exponent(dim: usize, sample_counts: Vec<usize>, queries: usize, trials: usize, seed: u64, norm: &str) -> PyResult<(f64, f64, f64)> {
    let exp = MeshExperiment { dim, sample_counts, queries, trials, seed, norm: parse_norm(norm)? };
    let fit = mesh::fit_scaling_exponent(&exp).map_err(py_err)?;
    Ok((fit.slope, fit.intercept, fit.residual))
}

/// `[(dataset, patch_size, train_accuracy, test_accuracy), ...]`.
#[pyfunction]
fn builtin_fixtures() -> Vec<(&'static str, u32, Option<f64>, f64)> {
    sweep::builtin_fixtures()
        .into_iter()
        .map(|r| (r.dataset, r.patch_size, r.train_accuracy, r.test_accuracy))
        .collect()
}

/// `[(patch_size, empirical_error, predicted_envelope), ...]`.
#[pyfunction]
#[pyo3(signature = (dataset, stride=DEFAULT_STRIDE))]
fn compare_dataset(dataset: &str, stride: u32) -> PyResult<Vec<(u32, f64, f64)>> {
    let rows = sweep::compare_dataset(dataset, stride).map_err(py_err)?;
    Ok(rows.into_iter().map(|r| (r.patch_size, r.empirical_error, r.predicted_envelope)).collect())
}

/// Train the linear patch model on the synthetic task and return
/// `(patch_avg_accuracy, single_patch_accuracy, test_logits)`.
#[pyfunction]
#[pyo3(signature = (patch=4, n_classes=4, size=32, rho=0.3, n_train=5000, n_test=1000, steps=20000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train_toy(
    py: Python<'_>,
    patch: u32,
    n_classes: u32,
    size: u32,
    rho: f64,
    n_train: usize,
    n_test: usize,
    steps: usize,
    seed: u64,
) -> PyResult<(f64, f64, PyLogitSet)> {
    py.detach(|| {
        let task = toy::SyntheticTask::new(n_classes, size, size, 1, rho, seed);
        let (train_set, test_set) = toy::generate_dataset(&task, n_train, n_test)?;
        let config = toy::TrainConfig { steps, ..toy::TrainConfig::square(patch, seed) };
        let model = toy::train(config, n_classes, &train_set)?.model;
        let eval = toy::evaluate(&model, &test_set, seed)?;
        let logits = toy::export_logits(&model, &test_set, 1, 1)?;
        Ok((eval.patch_avg_accuracy, eval.single_patch_accuracy, PyLogitSet(logits)))
    })
    .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "patchbound")]
fn patchbound_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBoundParams>()?;
    m.add_class::<PyBoundBreakdown>()?;
    m.add_class::<PyLogitSet>()?;
    m.add_function(wrap_pyfunction!(image_bound, m)?)?;
    m.add_function(wrap_pyfunction!(bound_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_grid, m)?)?;
    m.add_function(wrap_pyfunction!(average_predict, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_mesh_norm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_scaling_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_fixtures, m)?)?;
    m.add_function(wrap_pyfunction!(compare_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train_toy, m)?)?;
    Ok(())
}
