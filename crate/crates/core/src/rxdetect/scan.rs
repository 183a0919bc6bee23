//! ODMR frequency sweeps over the cluster field.

use super::DetectError;
use crate::nvphys::Tone;
use crate::scene::{FieldOfView, FluorescenceFrame, NoiseModel, Scene};
use crate::seed::{self, stream};

/// Mean ROI fluorescence of one cluster across the sweep grid.
#[derive(Debug, Clone)]
pub struct RoiTrace {
    pub roi_id: u32,
    /// Spot centroid the ROI disk is centered on, μm.
    pub center_um: [f64; 2],
    /// Mean counts per ROI pixel at each grid frequency.
    pub counts: Vec<f64>,
}

/// One full ODMR sweep: a strictly increasing frequency grid and one trace
/// per cluster region of interest.
#[derive(Debug, Clone)]
pub struct OdmrScan {
    pub freqs_mhz: Vec<f64>,
    pub traces: Vec<RoiTrace>,
}

/// Intensity-weighted spot centroid within a square window around an
/// approximate position. Falls back to the approximate position when the
/// window holds no counts.
pub fn fit_spot_centroid(
    frame: &FluorescenceFrame,
    fov: &FieldOfView,
    approx_um: [f64; 2],
    window_um: f64,
) -> [f64; 2] {
    let (py, px) = frame.dims();
    let (pw, ph) = (fov.pitch_x(), fov.pitch_y());
    let ix0 = (((approx_um[0] - window_um) / pw).floor().max(0.0)) as usize;
    let ix1 = ((((approx_um[0] + window_um) / pw).ceil()) as usize).min(px);
    let iy0 = (((approx_um[1] - window_um) / ph).floor().max(0.0)) as usize;
    let iy1 = ((((approx_um[1] + window_um) / ph).ceil()) as usize).min(py);

    // Weight by counts above the window's minimum so a flat background
    // does not drag the centroid toward the window center.
    let mut floor = f64::INFINITY;
    for iy in iy0..iy1 {
        for ix in ix0..ix1 {
            floor = floor.min(frame.counts[(iy, ix)]);
        }
    }
    let (mut wsum, mut xsum, mut ysum) = (0.0, 0.0, 0.0);
    for iy in iy0..iy1 {
        for ix in ix0..ix1 {
            let w = (frame.counts[(iy, ix)] - floor).max(0.0);
            wsum += w;
            xsum += w * (ix as f64 + 0.5) * pw;
            ysum += w * (iy as f64 + 0.5) * ph;
        }
    }
    if wsum <= 0.0 {
        approx_um
    } else {
        [xsum / wsum, ysum / wsum]
    }
}

/// Sweep a single probe tone across `freq_grid_mhz` and record the mean ROI
/// counts of every cluster at each grid point.
///
/// ROI centers are spot centroids fitted on a probe-off frame; the ROI is a
/// disk of `roi_radius_um`. One frame is rendered per grid point
/// (expectation mode when `deterministic`), seeded from
/// `(master_seed, SCAN, grid index)`.
pub fn sweep_odmr(
    scene: &Scene,
    noise: &NoiseModel,
    freq_grid_mhz: &[f64],
    probe_power_dbm: f64,
    roi_radius_um: f64,
    deterministic: bool,
    master_seed: u64,
) -> Result<OdmrScan, DetectError> {
    if freq_grid_mhz.is_empty() {
        return Err(DetectError::EmptyGrid);
    }
    if freq_grid_mhz.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DetectError::GridNotIncreasing);
    }

    // Probe-off frame for centroiding.
    let no_tones = vec![Vec::new(); scene.clusters.len()];
    let dark = scene.render(&no_tones, noise, deterministic, seed::mix(master_seed, stream::SCAN, u64::MAX))?;
    let centers: Vec<[f64; 2]> = scene
        .clusters
        .iter()
        .map(|c| fit_spot_centroid(&dark, &scene.fov, c.position_um, 3.0 * scene.psf_sigma_um))
        .collect();

    let mut traces: Vec<RoiTrace> = scene
        .clusters
        .iter()
        .zip(&centers)
        .map(|(c, &center)| RoiTrace {
            roi_id: c.id,
            center_um: center,
            counts: Vec::with_capacity(freq_grid_mhz.len()),
        })
        .collect();

    for (i, &f) in freq_grid_mhz.iter().enumerate() {
        let probe = vec![vec![Tone::new(f, probe_power_dbm)]; scene.clusters.len()];
        let frame = scene.render(
            &probe,
            noise,
            deterministic,
            seed::mix(master_seed, stream::SCAN, i as u64),
        )?;
        for trace in traces.iter_mut() {
            let (mean, _) = frame.disk_mean(&scene.fov, trace.center_um, roi_radius_um);
            trace.counts.push(mean);
        }
    }

    Ok(OdmrScan { freqs_mhz: freq_grid_mhz.to_vec(), traces })
}
