//! FND fields over a camera field of view and shot-noise-limited frame
//! rendering.
//!
//! A scene is a set of immutable clusters plus the static field map; one
//! acquisition slot renders to a [`FluorescenceFrame`] by depositing each
//! cluster's expected counts through a Gaussian point-spread function and
//! sampling per-pixel Poisson shot noise plus Gaussian read noise. Rendering
//! takes an explicit seed, so distinct slots can be rendered in parallel
//! with bit-identical results.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nvphys::{cluster_fluorescence, FndCluster, MagneticFieldMap, NvSpinModel, Tone};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("per-cluster tone list length {tones} does not match cluster count {clusters}")]
    TonesLengthMismatch { clusters: usize, tones: usize },
    #[error("cannot average an empty frame list")]
    EmptyFrameList,
    #[error("frame dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid {0}")]
    InvalidField(&'static str),
}

/// Imaged region and camera grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView {
    pub width_um: f64,
    pub height_um: f64,
    pub pixels_x: usize,
    pub pixels_y: usize,
}

impl FieldOfView {
    pub fn new(width_um: f64, height_um: f64, pixels_x: usize, pixels_y: usize) -> Self {
        Self { width_um, height_um, pixels_x, pixels_y }
    }

    /// Pixel pitch along x, μm.
    pub fn pitch_x(&self) -> f64 {
        self.width_um / self.pixels_x as f64
    }

    /// Pixel pitch along y, μm.
    pub fn pitch_y(&self) -> f64 {
        self.height_um / self.pixels_y as f64
    }

    pub fn contains(&self, position_um: [f64; 2]) -> bool {
        position_um[0] >= 0.0
            && position_um[0] <= self.width_um
            && position_um[1] >= 0.0
            && position_um[1] <= self.height_um
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.width_um > 0.0 && self.height_um > 0.0) {
            return Err(SceneError::InvalidField("fov width/height"));
        }
        if self.pixels_x == 0 || self.pixels_y == 0 {
            return Err(SceneError::InvalidField("fov pixel grid"));
        }
        Ok(())
    }
}

impl Default for FieldOfView {
    /// 75 μm × 75 μm on a 64×64 grid.
    fn default() -> Self {
        Self::new(75.0, 75.0, 64, 64)
    }
}

/// Camera and illumination parameters for one acquisition slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Exposure per frame, ms.
    pub exposure_ms: f64,
    /// Multiplier on every cluster's brightness (laser power knob).
    pub laser_scale: f64,
    /// Uniform background, counts/ms/pixel.
    pub background_rate: f64,
    /// Additive Gaussian read noise, counts RMS.
    pub read_noise_sd: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            exposure_ms: 40.0,
            laser_scale: 1.0,
            background_rate: 0.2,
            read_noise_sd: 3.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.exposure_ms > 0.0) {
            return Err(SceneError::InvalidField("exposure_ms"));
        }
        if !(self.laser_scale >= 0.0) {
            return Err(SceneError::InvalidField("laser_scale"));
        }
        if !(self.background_rate >= 0.0) {
            return Err(SceneError::InvalidField("background_rate"));
        }
        if !(self.read_noise_sd >= 0.0) {
            return Err(SceneError::InvalidField("read_noise_sd"));
        }
        Ok(())
    }
}

/// One acquired camera frame: photon counts on the `pixels_y × pixels_x`
/// grid, row-major with row index = y.
#[derive(Debug, Clone, PartialEq)]
pub struct FluorescenceFrame {
    pub counts: Array2<f64>,
}

impl FluorescenceFrame {
    pub fn zeros(fov: &FieldOfView) -> Self {
        Self { counts: Array2::zeros((fov.pixels_y, fov.pixels_x)) }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.counts.dim()
    }

    pub fn total(&self) -> f64 {
        self.counts.sum()
    }

    /// Squared Frobenius distance to another frame.
    pub fn sq_distance(&self, other: &FluorescenceFrame) -> f64 {
        self.counts
            .iter()
            .zip(other.counts.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Mean counts over the disk of pixels whose centers lie within
    /// `radius_um` of `center_um`. Returns `(mean, n_pixels)`.
    pub fn disk_mean(&self, fov: &FieldOfView, center_um: [f64; 2], radius_um: f64) -> (f64, usize) {
        let (py, px) = self.dims();
        let (pw, ph) = (fov.pitch_x(), fov.pitch_y());
        let ix0 = (((center_um[0] - radius_um) / pw).floor().max(0.0)) as usize;
        let ix1 = ((((center_um[0] + radius_um) / pw).ceil()) as usize).min(px);
        let iy0 = (((center_um[1] - radius_um) / ph).floor().max(0.0)) as usize;
        let iy1 = ((((center_um[1] + radius_um) / ph).ceil()) as usize).min(py);
        let mut sum = 0.0;
        let mut n = 0usize;
        for iy in iy0..iy1 {
            let cy = (iy as f64 + 0.5) * ph - center_um[1];
            for ix in ix0..ix1 {
                let cx = (ix as f64 + 0.5) * pw - center_um[0];
                if cx * cx + cy * cy <= radius_um * radius_um {
                    sum += self.counts[(iy, ix)];
                    n += 1;
                }
            }
        }
        if n == 0 {
            (0.0, 0)
        } else {
            (sum / n as f64, n)
        }
    }
}

/// Element-wise arithmetic mean of a non-empty list of same-size frames.
pub fn average_frames(frames: &[FluorescenceFrame]) -> Result<FluorescenceFrame, SceneError> {
    let first = frames.first().ok_or(SceneError::EmptyFrameList)?;
    let dims = first.dims();
    let mut sum = first.counts.clone();
    for f in &frames[1..] {
        if f.dims() != dims {
            return Err(SceneError::DimensionMismatch(dims.0, dims.1, f.dims().0, f.dims().1));
        }
        sum += &f.counts;
    }
    sum /= frames.len() as f64;
    Ok(FluorescenceFrame { counts: sum })
}

/// Knobs for random cluster generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterGenConfig {
    /// Median of the log-normal brightness distribution, counts/ms.
    pub brightness_median_cpms: f64,
    /// Log-scale sigma of the brightness distribution.
    pub brightness_sigma_ln: f64,
    /// Fractional jitter applied to contrast cap and linewidth (±).
    pub heterogeneity: f64,
    /// Model each cluster as a 4-axis mixture instead of one dominant axis.
    pub four_axis_mixture: bool,
}

impl Default for ClusterGenConfig {
    fn default() -> Self {
        Self {
            brightness_median_cpms: 3000.0,
            brightness_sigma_ln: 0.5,
            heterogeneity: 0.2,
            four_axis_mixture: false,
        }
    }
}

/// The four ⟨111⟩ crystal axes of diamond.
const TETRAHEDRAL_AXES: [[f64; 3]; 4] = {
    const S: f64 = 0.5773502691896258; // 1/√3
    [[S, S, S], [S, -S, -S], [-S, S, -S], [-S, -S, S]]
};

fn rotate(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    // Quaternion rotation q v q*.
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let (vx, vy, vz) = (v[0], v[1], v[2]);
    let tx = 2.0 * (y * vz - z * vy);
    let ty = 2.0 * (z * vx - x * vz);
    let tz = 2.0 * (x * vy - y * vx);
    [
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    ]
}

/// Draw a random FND field: positions uniform over the FOV, axes uniform on
/// the unit sphere, log-normal brightness, and per-cluster contrast cap and
/// linewidth jittered by `±heterogeneity`. Deterministic given `seed`.
pub fn generate_clusters(
    seed: u64,
    count: usize,
    fov: &FieldOfView,
    model_defaults: &NvSpinModel,
    gen: &ClusterGenConfig,
) -> Vec<FndCluster> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let brightness = LogNormal::new(gen.brightness_median_cpms.ln(), gen.brightness_sigma_ln)
        .expect("valid log-normal parameters");
    let mut clusters = Vec::with_capacity(count);
    for id in 0..count {
        let position_um = [
            rng.random::<f64>() * fov.width_um,
            rng.random::<f64>() * fov.height_um,
        ];
        let mut spin_model = *model_defaults;
        let jitter = |rng: &mut ChaCha8Rng, h: f64| 1.0 + h * (2.0 * rng.random::<f64>() - 1.0);
        spin_model.contrast_cap *= jitter(&mut rng, gen.heterogeneity);
        spin_model.linewidth_fwhm_mhz *= jitter(&mut rng, gen.heterogeneity);

        let (nv_axis, axis_mixture) = if gen.four_axis_mixture {
            // Random crystal orientation shared by the four axes; weights
            // from normalized uniforms.
            let mut q = [0.0f64; 4];
            let n = Normal::new(0.0, 1.0).unwrap();
            for c in &mut q {
                *c = n.sample(&mut rng);
            }
            let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-12);
            q.iter_mut().for_each(|c| *c /= norm);
            let mut weights = [0.0f64; 4];
            for w in &mut weights {
                *w = rng.random::<f64>() + 1e-3;
            }
            let total: f64 = weights.iter().sum();
            let mixture: Vec<([f64; 3], f64)> = TETRAHEDRAL_AXES
                .iter()
                .zip(weights.iter())
                .map(|(axis, w)| (rotate(q, *axis), w / total))
                .collect();
            let dominant = mixture
                .iter()
                .cloned()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            (dominant, mixture)
        } else {
            (UnitSphere.sample(&mut rng), Vec::new())
        };

        clusters.push(FndCluster {
            id: id as u32,
            position_um,
            nv_axis,
            brightness_cpms: brightness.sample(&mut rng),
            spin_model,
            axis_mixture,
        });
    }
    clusters
}

/// Re-orient a cluster's dominant axis so that its upper Zeeman transition
/// sits exactly at `target_f_plus_mhz` under the given field map.
///
/// Returns `false` (cluster untouched) when the local field is too weak to
/// reach the requested shift.
pub fn plant_resonance(
    cluster: &mut FndCluster,
    field_map: &MagneticFieldMap,
    target_f_plus_mhz: f64,
) -> bool {
    let b = field_map.field_at(cluster.position_um);
    let b_mag = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    let needed =
        (target_f_plus_mhz - cluster.spin_model.zfs_freq_mhz) / cluster.spin_model.gyromagnetic_mhz_per_g;
    if needed < 0.0 || b_mag < 1e-12 || needed > b_mag {
        return false;
    }
    let cos_t = needed / b_mag;
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let b_hat = [b[0] / b_mag, b[1] / b_mag, b[2] / b_mag];
    // Any unit vector orthogonal to b_hat works; pick one deterministically.
    let helper = if b_hat[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let mut perp = [
        b_hat[1] * helper[2] - b_hat[2] * helper[1],
        b_hat[2] * helper[0] - b_hat[0] * helper[2],
        b_hat[0] * helper[1] - b_hat[1] * helper[0],
    ];
    let pn = perp.iter().map(|c| c * c).sum::<f64>().sqrt();
    perp.iter_mut().for_each(|c| *c /= pn);
    cluster.nv_axis = [
        cos_t * b_hat[0] + sin_t * perp[0],
        cos_t * b_hat[1] + sin_t * perp[1],
        cos_t * b_hat[2] + sin_t * perp[2],
    ];
    cluster.axis_mixture.clear();
    true
}

/// Immutable scene shared by every slot of a run.
#[derive(Debug, Clone)]
pub struct Scene {
    pub clusters: Vec<FndCluster>,
    pub field_map: MagneticFieldMap,
    pub fov: FieldOfView,
    /// Isotropic Gaussian point-spread sigma, μm.
    pub psf_sigma_um: f64,
}

/// Abramowitz–Stegun 7.1.26 rational approximation of erf (|err| < 1.5e-7).
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

impl Scene {
    /// Expected (noise-free) frame for one slot.
    ///
    /// `per_cluster_tones[k]` is the tone set arriving at cluster `k` after
    /// its wireless channel. Each cluster deposits
    /// `cluster_fluorescence · exposure` counts through the Gaussian PSF,
    /// integrated exactly over pixel areas; contributions beyond 5σ are
    /// dropped.
    pub fn expectation(
        &self,
        per_cluster_tones: &[Vec<Tone>],
        noise: &NoiseModel,
    ) -> Result<FluorescenceFrame, SceneError> {
        if per_cluster_tones.len() != self.clusters.len() {
            return Err(SceneError::TonesLengthMismatch {
                clusters: self.clusters.len(),
                tones: per_cluster_tones.len(),
            });
        }
        let mut frame = FluorescenceFrame::zeros(&self.fov);
        let bg = noise.background_rate * noise.exposure_ms;
        if bg > 0.0 {
            frame.counts.fill(bg);
        }
        for (cluster, tones) in self.clusters.iter().zip(per_cluster_tones) {
            let rate = cluster_fluorescence(cluster, tones, &self.field_map, noise.laser_scale);
            let total = rate * noise.exposure_ms;
            if total <= 0.0 {
                continue;
            }
            self.deposit_spot(&mut frame, cluster.position_um, total);
        }
        Ok(frame)
    }

    fn deposit_spot(&self, frame: &mut FluorescenceFrame, center_um: [f64; 2], total: f64) {
        let sigma = self.psf_sigma_um;
        let (pw, ph) = (self.fov.pitch_x(), self.fov.pitch_y());
        let reach = 5.0 * sigma;
        let ix0 = (((center_um[0] - reach) / pw).floor().max(0.0)) as usize;
        let ix1 = ((((center_um[0] + reach) / pw).ceil()) as usize).min(self.fov.pixels_x);
        let iy0 = (((center_um[1] - reach) / ph).floor().max(0.0)) as usize;
        let iy1 = ((((center_um[1] + reach) / ph).ceil()) as usize).min(self.fov.pixels_y);
        if ix0 >= ix1 || iy0 >= iy1 {
            return;
        }
        let wx: Vec<f64> = (ix0..ix1)
            .map(|ix| {
                let lo = (ix as f64 * pw - center_um[0]) / sigma;
                let hi = ((ix + 1) as f64 * pw - center_um[0]) / sigma;
                normal_cdf(hi) - normal_cdf(lo)
            })
            .collect();
        for iy in iy0..iy1 {
            let lo = (iy as f64 * ph - center_um[1]) / sigma;
            let hi = ((iy + 1) as f64 * ph - center_um[1]) / sigma;
            let wy = normal_cdf(hi) - normal_cdf(lo);
            for (ix, wxv) in (ix0..ix1).zip(&wx) {
                frame.counts[(iy, ix)] += total * wxv * wy;
            }
        }
    }

    /// Render one slot.
    ///
    /// `deterministic` replaces the Poisson draw by its mean and disables
    /// read noise; otherwise each pixel is
    /// `Poisson(expected) + N(0, read_noise_sd)`, clamped at zero.
    /// Bit-identical output for identical `(scene, tones, noise, seed)`.
    pub fn render(
        &self,
        per_cluster_tones: &[Vec<Tone>],
        noise: &NoiseModel,
        deterministic: bool,
        seed: u64,
    ) -> Result<FluorescenceFrame, SceneError> {
        let expected = self.expectation(per_cluster_tones, noise)?;
        if deterministic {
            Ok(expected)
        } else {
            Ok(sample_frame(&expected, noise, seed))
        }
    }
}

/// Sample camera noise around an expected frame (shared by every render
/// path so cached expectations stay consistent with direct renders).
pub fn sample_frame(expected: &FluorescenceFrame, noise: &NoiseModel, seed: u64) -> FluorescenceFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let read = if noise.read_noise_sd > 0.0 {
        Some(Normal::new(0.0, noise.read_noise_sd).expect("valid read noise sd"))
    } else {
        None
    };
    let counts = expected.counts.map(|&lambda| {
        let mut v = if lambda > 0.0 {
            Poisson::new(lambda).expect("positive mean").sample(&mut rng)
        } else {
            0.0
        };
        if let Some(n) = &read {
            v += n.sample(&mut rng);
        }
        v.max(0.0)
    });
    FluorescenceFrame { counts }
}
