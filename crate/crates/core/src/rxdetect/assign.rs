//! Spectral user-to-cluster assignment and reference-free demodulation.
//!
//! Each user is bound to one cluster whose fitted resonance is spectrally
//! separated from every other assigned resonance. Data bits are then
//! recovered per user by thresholding the counts in that cluster's ROI: a
//! tone on the user's resonance suppresses its fluorescence (bit 0), the
//! parking frequency leaves it bright (bit 1). Thresholds come from a
//! two-slot calibration — one slot with every user on resonance, one with
//! every user parked — instead of the exponential reference preamble.

use super::{DetectError, LorentzianFit};
use crate::modem::{Bitstream, SymbolMap};
use crate::nvphys::Tone;
use crate::scene::{FieldOfView, FluorescenceFrame, NoiseModel, Scene};
use crate::seed::{self, stream};

/// Fitted spectrum of one cluster, input to assignment.
#[derive(Debug, Clone)]
pub struct ClusterFit {
    pub cluster_id: u32,
    pub center_um: [f64; 2],
    pub fit: LorentzianFit,
}

/// One user's channel: the cluster it listens on, the resonance, and the
/// ROI decision threshold (mean counts per ROI pixel).
#[derive(Debug, Clone)]
pub struct AssignedUser {
    pub user: usize,
    pub cluster_id: u32,
    pub center_um: [f64; 2],
    pub resonance_mhz: f64,
    /// NaN until thresholds are calibrated.
    pub threshold: f64,
}

/// Result of assigning users to spectrally separated clusters.
#[derive(Debug, Clone)]
pub struct UserAssignment {
    pub users: Vec<AssignedUser>,
    /// Assigned users / total observed clusters.
    pub utilization: f64,
    /// False when fewer eligible clusters than requested users were found.
    pub complete: bool,
    pub total_clusters: usize,
    pub min_separation_mhz: f64,
    pub roi_radius_um: f64,
}

fn eligible(
    candidate: &ClusterFit,
    peak_mhz: f64,
    chosen: &[AssignedUser],
    min_separation_mhz: f64,
    roi_radius_um: f64,
) -> bool {
    chosen.iter().all(|sel| {
        let df = (sel.resonance_mhz - peak_mhz).abs();
        let dx = sel.center_um[0] - candidate.center_um[0];
        let dy = sel.center_um[1] - candidate.center_um[1];
        // Overlapping ROIs disqualify the pair outright.
        df >= min_separation_mhz && (dx * dx + dy * dy).sqrt() >= 2.0 * roi_radius_um
    })
}

/// Greedy assignment by descending fitted contrast.
///
/// A cluster is selected when its strongest peak is at least
/// `min_separation_mhz` from every previously selected resonance and its ROI
/// does not overlap a selected ROI. `n_users = None` assigns as many users
/// as the field supports; `Some(n)` stops at `n` and reports a partial
/// assignment when fewer are eligible.
pub fn assign_users(
    fits: &[ClusterFit],
    n_users: Option<usize>,
    min_separation_mhz: f64,
    roi_radius_um: f64,
) -> UserAssignment {
    let mut order: Vec<&ClusterFit> = fits.iter().collect();
    order.sort_by(|a, b| {
        b.fit
            .strongest_peak()
            .contrast
            .total_cmp(&a.fit.strongest_peak().contrast)
            .then(a.cluster_id.cmp(&b.cluster_id))
    });

    let cap = n_users.unwrap_or(usize::MAX);
    let mut users: Vec<AssignedUser> = Vec::new();
    for candidate in order {
        if users.len() >= cap {
            break;
        }
        let peak = candidate.fit.strongest_peak();
        if eligible(candidate, peak.center_mhz, &users, min_separation_mhz, roi_radius_um) {
            users.push(AssignedUser {
                user: users.len(),
                cluster_id: candidate.cluster_id,
                center_um: candidate.center_um,
                resonance_mhz: peak.center_mhz,
                threshold: f64::NAN,
            });
        }
    }

    let complete = n_users.map_or(true, |n| users.len() == n);
    let utilization = if fits.is_empty() {
        0.0
    } else {
        users.len() as f64 / fits.len() as f64
    };
    UserAssignment {
        users,
        utilization,
        complete,
        total_clusters: fits.len(),
        min_separation_mhz,
        roi_radius_um,
    }
}

/// Bind each user of a symbol map to the cluster whose fitted resonance is
/// nearest that user's bit-0 frequency (within `tol_mhz`), honoring the
/// separation and ROI constraints.
pub fn assign_users_to_map(
    fits: &[ClusterFit],
    map: &SymbolMap,
    tol_mhz: f64,
    min_separation_mhz: f64,
    roi_radius_um: f64,
) -> Result<UserAssignment, DetectError> {
    let mut users: Vec<AssignedUser> = Vec::new();
    for u in 0..map.users() {
        let want = map.tone_for(u, 0)?.freq_mhz;
        let best = fits
            .iter()
            .filter_map(|c| {
                let peak = c.fit.strongest_peak();
                let err = (peak.center_mhz - want).abs();
                (err <= tol_mhz
                    && eligible(c, peak.center_mhz, &users, min_separation_mhz, roi_radius_um))
                .then_some((c, peak, err))
            })
            .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cluster_id.cmp(&b.0.cluster_id)));
        match best {
            Some((c, peak, _)) => users.push(AssignedUser {
                user: u,
                cluster_id: c.cluster_id,
                center_um: c.center_um,
                resonance_mhz: peak.center_mhz,
                threshold: f64::NAN,
            }),
            None => return Err(DetectError::AssignmentIncomplete(u)),
        }
    }
    Ok(UserAssignment {
        users,
        utilization: if fits.is_empty() { 0.0 } else { map.users() as f64 / fits.len() as f64 },
        complete: true,
        total_clusters: fits.len(),
        min_separation_mhz,
        roi_radius_um,
    })
}

/// Check that every assigned resonance matches the user's bit-0 tone.
pub fn verify_against_map(
    assignment: &UserAssignment,
    map: &SymbolMap,
    tol_mhz: f64,
) -> Result<(), DetectError> {
    for (u, a) in assignment.users.iter().enumerate() {
        let want = map.tone_for(u, 0)?.freq_mhz;
        if (a.resonance_mhz - want).abs() > tol_mhz {
            return Err(DetectError::ResonanceMismatch { user: u, got: a.resonance_mhz, want });
        }
    }
    Ok(())
}

/// Measure per-user decision thresholds from the two calibration slots.
///
/// `on_tones` / `off_tones` are the per-cluster tone lists of the slot where
/// every user transmits bit 0 (on resonance) and bit 1 (parked). The
/// threshold is the midpoint of the two ROI means; a user whose on-level is
/// not below its off-level is a calibration failure.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_thresholds(
    scene: &Scene,
    assignment: &mut UserAssignment,
    on_tones: &[Vec<Tone>],
    off_tones: &[Vec<Tone>],
    noise: &NoiseModel,
    deterministic: bool,
    master_seed: u64,
) -> Result<(), DetectError> {
    let on = scene.render(on_tones, noise, deterministic, seed::mix(master_seed, stream::CALIBRATION, 0))?;
    let off =
        scene.render(off_tones, noise, deterministic, seed::mix(master_seed, stream::CALIBRATION, 1))?;
    for user in assignment.users.iter_mut() {
        let (mean_on, n) = on.disk_mean(&scene.fov, user.center_um, assignment.roi_radius_um);
        let (mean_off, _) = off.disk_mean(&scene.fov, user.center_um, assignment.roi_radius_um);
        if n == 0 || !(mean_on < mean_off) {
            return Err(DetectError::CalibrationFailure(format!(
                "user {}: on-resonance ROI mean {mean_on:.3} not below off level {mean_off:.3}",
                user.user
            )));
        }
        user.threshold = 0.5 * (mean_on + mean_off);
    }
    Ok(())
}

/// Decide each assigned user's bit for one data frame: 0 when the ROI mean
/// is below the user's threshold (resonant tone suppressing fluorescence),
/// else 1.
pub fn reffree_detect_slot(
    frame: &FluorescenceFrame,
    fov: &FieldOfView,
    assignment: &UserAssignment,
) -> Vec<u8> {
    assignment
        .users
        .iter()
        .map(|u| {
            let (mean, _) = frame.disk_mean(fov, u.center_um, assignment.roi_radius_um);
            u8::from(mean >= u.threshold)
        })
        .collect()
}

/// Reference-free detection over a data section, truncated to each user's
/// unpadded bit count.
pub fn reffree_detect(
    frames: &[FluorescenceFrame],
    fov: &FieldOfView,
    assignment: &UserAssignment,
    user_data_bits: &[usize],
) -> Vec<Bitstream> {
    let mut streams: Vec<Vec<u8>> = assignment.users.iter().map(|_| Vec::new()).collect();
    for frame in frames {
        for (u, bit) in reffree_detect_slot(frame, fov, assignment).into_iter().enumerate() {
            streams[u].push(bit);
        }
    }
    streams
        .into_iter()
        .enumerate()
        .map(|(u, mut bits)| {
            if let Some(&n) = user_data_bits.get(u) {
                bits.truncate(n);
            }
            Bitstream(bits)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rxdetect::PeakFit;

    fn fit_with(center: f64, contrast: f64) -> LorentzianFit {
        LorentzianFit {
            baseline: 1000.0,
            peaks: vec![PeakFit { center_mhz: center, fwhm_mhz: 10.0, contrast }],
            residual_norm: 0.0,
            relative_residual: 0.0,
            converged: true,
            iterations: 1,
        }
    }

    fn cluster_fit(id: u32, pos: [f64; 2], center: f64, contrast: f64) -> ClusterFit {
        ClusterFit { cluster_id: id, center_um: pos, fit: fit_with(center, contrast) }
    }

    #[test]
    fn separated_resonances_are_both_assigned() {
        let fits = vec![
            cluster_fit(0, [10.0, 10.0], 2946.5, 0.04),
            cluster_fit(1, [30.0, 30.0], 2959.5, 0.05),
        ];
        let a = assign_users(&fits, Some(2), 10.0, 2.0);
        assert!(a.complete);
        assert_eq!(a.users.len(), 2);
        assert_eq!(a.utilization, 1.0);
        // Separation constraint holds pairwise.
        let d = (a.users[0].resonance_mhz - a.users[1].resonance_mhz).abs();
        assert!(d >= 10.0);
    }

    #[test]
    fn identical_peaks_yield_exactly_one_assignment() {
        let fits: Vec<ClusterFit> = (0..5)
            .map(|i| cluster_fit(i, [10.0 * i as f64, 5.0], 2950.0, 0.03))
            .collect();
        let a = assign_users(&fits, None, 10.0, 2.0);
        assert_eq!(a.users.len(), 1);
        assert!((a.utilization - 0.2).abs() < 1e-12);
    }

    #[test]
    fn five_of_forty_five_is_eleven_percent() {
        let mut fits = Vec::new();
        for i in 0..45u32 {
            // Five well-separated resonances, the rest crowded together.
            let f = if i < 5 { 2900.0 + 15.0 * i as f64 } else { 2871.0 + 0.01 * i as f64 };
            let contrast = if i < 5 { 0.05 } else { 0.02 };
            fits.push(cluster_fit(i, [(i as f64) * 1.6, 40.0 + 10.0 * (i % 3) as f64], f, contrast));
        }
        let a = assign_users(&fits, Some(5), 10.0, 0.5);
        assert!(a.complete);
        assert_eq!(a.users.len(), 5);
        assert!((a.utilization - 5.0 / 45.0).abs() < 1e-12);
        assert!((a.utilization - 0.111).abs() < 2e-3);
    }

    #[test]
    fn partial_assignment_is_flagged() {
        let fits = vec![cluster_fit(0, [10.0, 10.0], 2950.0, 0.04)];
        let a = assign_users(&fits, Some(3), 10.0, 2.0);
        assert!(!a.complete);
        assert_eq!(a.users.len(), 1);
    }

    #[test]
    fn overlapping_rois_disqualify_a_pair() {
        let fits = vec![
            cluster_fit(0, [10.0, 10.0], 2940.0, 0.05),
            cluster_fit(1, [11.0, 10.0], 2960.0, 0.04), // 1 μm away, ROI radius 2 μm
            cluster_fit(2, [40.0, 40.0], 2980.0, 0.03),
        ];
        let a = assign_users(&fits, None, 10.0, 2.0);
        let ids: Vec<u32> = a.users.iter().map(|u| u.cluster_id).collect();
        assert_eq!(ids, vec![0, 2]);
    }

    #[test]
    fn greedy_prefers_contrast() {
        let fits = vec![
            cluster_fit(0, [10.0, 10.0], 2950.0, 0.01),
            cluster_fit(1, [40.0, 40.0], 2952.0, 0.09),
        ];
        let a = assign_users(&fits, Some(1), 10.0, 2.0);
        assert_eq!(a.users[0].cluster_id, 1);
    }

    #[test]
    fn map_binding_matches_nearest_resonance() {
        let map = crate::modem::paper_symbol_maps("fsk-reffree").unwrap();
        let fits = vec![
            cluster_fit(0, [10.0, 10.0], 2959.2, 0.05),
            cluster_fit(1, [40.0, 40.0], 2946.9, 0.04),
            cluster_fit(2, [60.0, 60.0], 2990.0, 0.06),
        ];
        let a = assign_users_to_map(&fits, &map, 2.0, 10.0, 2.0).unwrap();
        assert_eq!(a.users[0].cluster_id, 1); // user 0 wants 2946.5
        assert_eq!(a.users[1].cluster_id, 0); // user 1 wants 2959.5
        assert!(verify_against_map(&a, &map, 2.0).is_ok());
        assert!(matches!(
            verify_against_map(&a, &map, 0.01),
            Err(DetectError::ResonanceMismatch { .. })
        ));
    }

    #[test]
    fn map_binding_fails_when_no_cluster_is_close() {
        let map = crate::modem::paper_symbol_maps("fsk-reffree").unwrap();
        let fits = vec![cluster_fit(0, [10.0, 10.0], 2900.0, 0.05)];
        assert!(matches!(
            assign_users_to_map(&fits, &map, 2.0, 10.0, 2.0),
            Err(DetectError::AssignmentIncomplete(0))
        ));
    }
}
