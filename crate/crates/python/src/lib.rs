//! Python bindings: the main simulator types and operations, plus
//! JSON-config entry points for whole harness runs.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fndlink::harness::{self, ExperimentConfig};
use fndlink::modem;
use fndlink::nvphys;
use fndlink::rxdetect;
use fndlink::scene;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// NV spin-resonance parameters.
#[pyclass(name = "NvSpinModel", from_py_object)]
#[derive(Clone)]
struct PyNvSpinModel {
    inner: nvphys::NvSpinModel,
}

#[pymethods]
impl PyNvSpinModel {
    #[new]
    #[pyo3(signature = (zfs_freq_mhz=2870.0, gyromagnetic_mhz_per_g=2.8, linewidth_fwhm_mhz=10.0, contrast_cap=0.05, saturation_power_mw=1.0))]
    fn new(
        zfs_freq_mhz: f64,
        gyromagnetic_mhz_per_g: f64,
        linewidth_fwhm_mhz: f64,
        contrast_cap: f64,
        saturation_power_mw: f64,
    ) -> PyResult<Self> {
        let inner = nvphys::NvSpinModel {
            zfs_freq_mhz,
            gyromagnetic_mhz_per_g,
            linewidth_fwhm_mhz,
            contrast_cap,
            saturation_power_mw,
        };
        inner.validate().map_err(|f| value_err(format!("invalid {f}")))?;
        Ok(Self { inner })
    }

    #[getter]
    fn zfs_freq_mhz(&self) -> f64 {
        self.inner.zfs_freq_mhz
    }

    #[getter]
    fn linewidth_fwhm_mhz(&self) -> f64 {
        self.inner.linewidth_fwhm_mhz
    }

    #[getter]
    fn contrast_cap(&self) -> f64 {
        self.inner.contrast_cap
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// One microwave tone (frequency MHz, power dBm).
#[pyclass(name = "Tone", from_py_object)]
#[derive(Clone)]
struct PyTone {
    inner: nvphys::Tone,
}

#[pymethods]
impl PyTone {
    #[new]
    fn new(freq_mhz: f64, power_dbm: f64) -> Self {
        Self { inner: nvphys::Tone::new(freq_mhz, power_dbm) }
    }

    #[getter]
    fn freq_mhz(&self) -> f64 {
        self.inner.freq_mhz
    }

    #[getter]
    fn power_dbm(&self) -> f64 {
        self.inner.power_dbm
    }

    fn __repr__(&self) -> String {
        format!("Tone({} MHz, {} dBm)", self.inner.freq_mhz, self.inner.power_dbm)
    }
}

/// Uniform field plus linear gradient over the focal plane.
#[pyclass(name = "MagneticFieldMap", from_py_object)]
#[derive(Clone)]
struct PyFieldMap {
    inner: nvphys::MagneticFieldMap,
}

#[pymethods]
impl PyFieldMap {
    #[new]
    #[pyo3(signature = (uniform_field_g, gradient_g_per_um=None))]
    fn new(uniform_field_g: [f64; 3], gradient_g_per_um: Option<[[f64; 2]; 3]>) -> Self {
        Self {
            inner: nvphys::MagneticFieldMap {
                uniform_field_g,
                gradient_g_per_um: gradient_g_per_um.unwrap_or([[0.0; 2]; 3]),
            },
        }
    }

    #[staticmethod]
    fn zero() -> Self {
        Self { inner: nvphys::MagneticFieldMap::zero() }
    }

    fn field_at(&self, position_um: [f64; 2]) -> [f64; 3] {
        self.inner.field_at(position_um)
    }
}

/// One fluorescent nanodiamond cluster.
#[pyclass(name = "FndCluster", from_py_object)]
#[derive(Clone)]
struct PyCluster {
    inner: nvphys::FndCluster,
}

#[pymethods]
impl PyCluster {
    #[new]
    #[pyo3(signature = (id, position_um, nv_axis, brightness_cpms, spin_model=None))]
    fn new(
        id: u32,
        position_um: [f64; 2],
        nv_axis: [f64; 3],
        brightness_cpms: f64,
        spin_model: Option<PyNvSpinModel>,
    ) -> PyResult<Self> {
        let inner = nvphys::FndCluster {
            id,
            position_um,
            nv_axis,
            brightness_cpms,
            spin_model: spin_model.map(|m| m.inner).unwrap_or_default(),
            axis_mixture: Vec::new(),
        };
        inner.validate().map_err(|f| value_err(format!("invalid {f}")))?;
        Ok(Self { inner })
    }

    #[getter]
    fn id(&self) -> u32 {
        self.inner.id
    }

    #[getter]
    fn position_um(&self) -> [f64; 2] {
        self.inner.position_um
    }

    #[getter]
    fn brightness_cpms(&self) -> f64 {
        self.inner.brightness_cpms
    }

    #[getter]
    fn spin_model(&self) -> PyNvSpinModel {
        PyNvSpinModel { inner: self.inner.spin_model }
    }
}

/// Imaged region and pixel grid.
#[pyclass(name = "FieldOfView", from_py_object)]
#[derive(Clone)]
struct PyFov {
    inner: scene::FieldOfView,
}

#[pymethods]
impl PyFov {
    #[new]
    #[pyo3(signature = (width_um=75.0, height_um=75.0, pixels_x=64, pixels_y=64))]
    fn new(width_um: f64, height_um: f64, pixels_x: usize, pixels_y: usize) -> Self {
        Self { inner: scene::FieldOfView::new(width_um, height_um, pixels_x, pixels_y) }
    }
}

/// Camera noise and illumination for one slot.
#[pyclass(name = "NoiseModel", from_py_object)]
#[derive(Clone)]
struct PyNoise {
    inner: scene::NoiseModel,
}

#[pymethods]
impl PyNoise {
    #[new]
    #[pyo3(signature = (exposure_ms=40.0, laser_scale=1.0, background_rate=0.2, read_noise_sd=3.0))]
    fn new(exposure_ms: f64, laser_scale: f64, background_rate: f64, read_noise_sd: f64) -> Self {
        Self {
            inner: scene::NoiseModel { exposure_ms, laser_scale, background_rate, read_noise_sd },
        }
    }
}

/// One rendered camera frame.
#[pyclass(name = "Frame", from_py_object)]
#[derive(Clone)]
struct PyFrame {
    inner: scene::FluorescenceFrame,
}

#[pymethods]
impl PyFrame {
    #[getter]
    fn dims(&self) -> (usize, usize) {
        self.inner.dims()
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }

    /// Row-major nested list of photon counts.
    fn counts(&self) -> Vec<Vec<f64>> {
        self.inner
            .counts
            .rows()
            .into_iter()
            .map(|row| row.to_vec())
            .collect()
    }

    fn sq_distance(&self, other: &PyFrame) -> f64 {
        self.inner.sq_distance(&other.inner)
    }
}

/// Immutable cluster field plus optics.
#[pyclass(name = "Scene")]
struct PyScene {
    inner: scene::Scene,
}

#[pymethods]
impl PyScene {
    #[new]
    #[pyo3(signature = (clusters, field_map, fov, psf_sigma_um=1.0))]
    fn new(clusters: Vec<PyCluster>, field_map: PyFieldMap, fov: PyFov, psf_sigma_um: f64) -> Self {
        Self {
            inner: scene::Scene {
                clusters: clusters.into_iter().map(|c| c.inner).collect(),
                field_map: field_map.inner,
                fov: fov.inner,
                psf_sigma_um,
            },
        }
    }

    /// Render one slot; `per_cluster_tones[k]` lists the tones reaching
    /// cluster `k`.
    #[pyo3(signature = (per_cluster_tones, noise, deterministic=false, seed=0))]
    fn render(
        &self,
        per_cluster_tones: Vec<Vec<PyTone>>,
        noise: &PyNoise,
        deterministic: bool,
        seed: u64,
    ) -> PyResult<PyFrame> {
        let tones: Vec<Vec<nvphys::Tone>> = per_cluster_tones
            .into_iter()
            .map(|ts| ts.into_iter().map(|t| t.inner).collect())
            .collect();
        self.inner
            .render(&tones, &noise.inner, deterministic, seed)
            .map(|f| PyFrame { inner: f })
            .map_err(value_err)
    }
}

/// Per-user symbol-to-tone map.
#[pyclass(name = "SymbolMap", from_py_object)]
#[derive(Clone)]
struct PySymbolMap {
    inner: modem::SymbolMap,
}

#[pymethods]
impl PySymbolMap {
    #[getter]
    fn users(&self) -> usize {
        self.inner.users()
    }

    #[getter]
    fn bits_per_symbol(&self) -> u8 {
        self.inner.bits_per_symbol
    }

    fn tone_for(&self, user: usize, symbol: u8) -> PyResult<PyTone> {
        self.inner
            .tone_for(user, symbol)
            .map(|t| PyTone { inner: t })
            .map_err(value_err)
    }
}

#[pyfunction]
fn zeeman_peaks(model: &PyNvSpinModel, b_axial_g: f64) -> (f64, f64) {
    nvphys::zeeman_peaks(&model.inner, b_axial_g)
}

#[pyfunction]
fn lorentzian_dip(f_mhz: f64, f0_mhz: f64, fwhm_mhz: f64) -> f64 {
    nvphys::lorentzian_dip(f_mhz, f0_mhz, fwhm_mhz)
}

#[pyfunction]
fn contrast_at_power(power_dbm: f64, model: &PyNvSpinModel) -> f64 {
    nvphys::contrast_at_power(power_dbm, &model.inner)
}

#[pyfunction]
fn cluster_fluorescence(
    cluster: &PyCluster,
    tones: Vec<PyTone>,
    field_map: &PyFieldMap,
    laser_scale: f64,
) -> f64 {
    let tones: Vec<nvphys::Tone> = tones.into_iter().map(|t| t.inner).collect();
    nvphys::cluster_fluorescence(&cluster.inner, &tones, &field_map.inner, laser_scale)
}

/// Random cluster field with the library's generation defaults.
#[pyfunction]
#[pyo3(signature = (seed, count, fov, model=None))]
fn generate_clusters(
    seed: u64,
    count: usize,
    fov: &PyFov,
    model: Option<PyNvSpinModel>,
) -> Vec<PyCluster> {
    let model = model.map(|m| m.inner).unwrap_or_default();
    scene::generate_clusters(seed, count, &fov.inner, &model, &scene::ClusterGenConfig::default())
        .into_iter()
        .map(|c| PyCluster { inner: c })
        .collect()
}

#[pyfunction]
fn average_frames(frames: Vec<PyFrame>) -> PyResult<PyFrame> {
    let inner: Vec<scene::FluorescenceFrame> = frames.into_iter().map(|f| f.inner).collect();
    scene::average_frames(&inner).map(|f| PyFrame { inner: f }).map_err(value_err)
}

/// Serialize 8-bit pixels (row-major) into bits, MSB first.
#[pyfunction]
fn encode_image(pixels: Vec<u8>, width: usize, height: usize) -> PyResult<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(value_err("pixel buffer does not match width*height"));
    }
    Ok(modem::encode_image(&modem::ImageMessage::new(width, height, pixels)).0)
}

/// Exact inverse of `encode_image`.
#[pyfunction]
fn decode_image(bits: Vec<u8>, width: usize, height: usize) -> PyResult<Vec<u8>> {
    modem::decode_image(&modem::Bitstream(bits), width, height)
        .map(|img| img.pixels)
        .map_err(value_err)
}

#[pyfunction]
fn paper_symbol_maps(scheme: &str) -> PyResult<PySymbolMap> {
    modem::paper_symbol_maps(scheme)
        .map(|m| PySymbolMap { inner: m })
        .map_err(value_err)
}

#[pyfunction]
fn ber(tx: Vec<u8>, rx: Vec<u8>) -> PyResult<f64> {
    modem::ber(&modem::Bitstream(tx), &modem::Bitstream(rx)).map_err(value_err)
}

/// Minimum-MSE detection of a frame against `(tuple, frame)` references.
#[pyfunction]
fn mse_detect(frame: &PyFrame, references: Vec<(Vec<u8>, PyFrame)>) -> PyResult<Vec<u8>> {
    let bank = rxdetect::ReferenceBank::from_frames(
        references.into_iter().map(|(t, f)| (t, f.inner)).collect(),
    );
    rxdetect::mse_detect(&frame.inner, &bank).map_err(value_err)
}

/// Fit Lorentzian dips; returns `(baseline, [(center, fwhm, contrast)],
/// converged)`.
#[pyfunction]
fn fit_lorentzian(
    freqs_mhz: Vec<f64>,
    counts: Vec<f64>,
    n_peaks: usize,
) -> PyResult<(f64, Vec<(f64, f64, f64)>, bool)> {
    let fit = rxdetect::fit_lorentzian(&freqs_mhz, &counts, n_peaks).map_err(value_err)?;
    Ok((
        fit.baseline,
        fit.peaks.iter().map(|p| (p.center_mhz, p.fwhm_mhz, p.contrast)).collect(),
        fit.converged,
    ))
}

/// Full `simulate` run from a JSON config string; returns the report JSON.
#[pyfunction]
fn run_simulate(config_json: &str, out_dir: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(value_err)?;
    let report = harness::run_simulate(&cfg, config_json, std::path::Path::new(out_dir))
        .map_err(runtime_err)?;
    Ok(report.to_json())
}

/// Capacity study from a JSON config string; returns the report JSON.
#[pyfunction]
fn run_capacity(config_json: &str, out_dir: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(value_err)?;
    let report = harness::run_capacity(&cfg, config_json, std::path::Path::new(out_dir))
        .map_err(runtime_err)?;
    Ok(report.to_json())
}

#[pymodule]
fn fndlink_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNvSpinModel>()?;
    m.add_class::<PyTone>()?;
    m.add_class::<PyFieldMap>()?;
    m.add_class::<PyCluster>()?;
    m.add_class::<PyFov>()?;
    m.add_class::<PyNoise>()?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PySymbolMap>()?;
    m.add_function(wrap_pyfunction!(zeeman_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(lorentzian_dip, m)?)?;
    m.add_function(wrap_pyfunction!(contrast_at_power, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_fluorescence, m)?)?;
    m.add_function(wrap_pyfunction!(generate_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(average_frames, m)?)?;
    m.add_function(wrap_pyfunction!(encode_image, m)?)?;
    m.add_function(wrap_pyfunction!(decode_image, m)?)?;
    m.add_function(wrap_pyfunction!(paper_symbol_maps, m)?)?;
    m.add_function(wrap_pyfunction!(ber, m)?)?;
    m.add_function(wrap_pyfunction!(mse_detect, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lorentzian, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_capacity, m)?)?;
    Ok(())
}
