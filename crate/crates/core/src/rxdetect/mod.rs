//! Receiver-side signal processing.
//!
//! Digital path: average the reference section into a [`ReferenceBank`] and
//! match every data frame against it by minimum Frobenius distance.
//! Reference-free path: sweep ODMR spectra per cluster, fit Lorentzians,
//! assign spectrally separated clusters to users and threshold per-cluster
//! ROI counts. Analog path: invert a measured calibration curve.

mod analog;
mod assign;
mod fit;
mod scan;

pub use analog::{
    calibrate_analog, calibrate_analog_joint, demod_analog, AnalogCalibration, AnalogDemodResult,
    AnalogMode, AnalogSetup, CalibrationCurve, JointCalibration,
};
pub use assign::{
    assign_users, assign_users_to_map, calibrate_thresholds, reffree_detect, reffree_detect_slot,
    verify_against_map, AssignedUser, ClusterFit, UserAssignment,
};
pub use fit::{fit_lorentzian, LorentzianFit, PeakFit};
pub use scan::{fit_spot_centroid, sweep_odmr, OdmrScan, RoiTrace};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::modem::{unpack_tuples, Bitstream, FrameLayout};
use crate::scene::{average_frames, FluorescenceFrame, SceneError};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("reference bank is empty")]
    EmptyBank,
    #[error("frame dimensions {0}x{1} do not match the bank ({2}x{3})")]
    FrameDimMismatch(usize, usize, usize, usize),
    #[error("no reference frames for tuple {0:?}")]
    MissingTuple(Vec<u8>),
    #[error("frequency grid is empty")]
    EmptyGrid,
    #[error("frequency grid must be strictly increasing")]
    GridNotIncreasing,
    #[error("peak count {0} not supported (expected 1 or 2)")]
    BadPeakCount(usize),
    #[error("trace of {got} points is too short to fit {peaks} peak(s) (need {need})")]
    TraceTooShort { got: usize, need: usize, peaks: usize },
    #[error("calibration failure: {0}")]
    CalibrationFailure(String),
    #[error("analog sample {0} outside [-1, 1]")]
    SampleOutOfRange(f64),
    #[error("assignment does not cover user {0}")]
    AssignmentIncomplete(usize),
    #[error("assigned resonance {got} MHz does not match user {user}'s bit-0 tone {want} MHz")]
    ResonanceMismatch { user: usize, got: f64, want: f64 },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Modem(#[from] crate::modem::ModemError),
}

/// Averaged reference frame per transmitted symbol tuple — the MSE
/// detector's lookup table.
#[derive(Debug, Clone)]
pub struct ReferenceBank {
    frames: BTreeMap<Vec<u8>, FluorescenceFrame>,
}

impl ReferenceBank {
    pub fn from_frames(frames: BTreeMap<Vec<u8>, FluorescenceFrame>) -> Self {
        Self { frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn get(&self, tuple: &[u8]) -> Option<&FluorescenceFrame> {
        self.frames.get(tuple)
    }

    pub fn tuples(&self) -> impl Iterator<Item = &Vec<u8>> {
        self.frames.keys()
    }
}

/// Average per-tuple reference frames into a bank, checking that every
/// expected tuple is present and all frames share one size.
pub fn build_reference_bank(
    groups: &BTreeMap<Vec<u8>, Vec<FluorescenceFrame>>,
    expected_tuples: &[Vec<u8>],
) -> Result<ReferenceBank, DetectError> {
    let mut frames = BTreeMap::new();
    let mut dims: Option<(usize, usize)> = None;
    for tuple in expected_tuples {
        let group = groups
            .get(tuple)
            .filter(|g| !g.is_empty())
            .ok_or_else(|| DetectError::MissingTuple(tuple.clone()))?;
        let avg = average_frames(group)?;
        if let Some(d) = dims {
            if avg.dims() != d {
                let (gy, gx) = avg.dims();
                return Err(DetectError::FrameDimMismatch(gy, gx, d.0, d.1));
            }
        } else {
            dims = Some(avg.dims());
        }
        frames.insert(tuple.clone(), avg);
    }
    Ok(ReferenceBank { frames })
}

/// Minimum mean-squared-error detection of one frame against the bank.
///
/// Returns the tuple minimizing `Σ_pixels (I − R(tuple))²`; exact ties go to
/// the lexicographically smallest tuple (the bank iterates in that order
/// and only a strictly smaller distance displaces the incumbent).
pub fn mse_detect(frame: &FluorescenceFrame, bank: &ReferenceBank) -> Result<Vec<u8>, DetectError> {
    let mut best: Option<(f64, &Vec<u8>)> = None;
    for (tuple, reference) in &bank.frames {
        if reference.dims() != frame.dims() {
            let (fy, fx) = frame.dims();
            let (ry, rx) = reference.dims();
            return Err(DetectError::FrameDimMismatch(fy, fx, ry, rx));
        }
        let d = frame.sq_distance(reference);
        match best {
            Some((bd, _)) if d >= bd => {}
            _ => best = Some((d, tuple)),
        }
    }
    best.map(|(_, t)| t.clone()).ok_or(DetectError::EmptyBank)
}

/// Detect a whole data section: per-slot MSE detection, de-interleaved into
/// per-user bitstreams with the schedule's padding stripped.
pub fn detect_stream(
    frames: &[FluorescenceFrame],
    bank: &ReferenceBank,
    layout: &FrameLayout,
) -> Result<Vec<Bitstream>, DetectError> {
    let tuples = frames
        .iter()
        .map(|f| mse_detect(f, bank))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(unpack_tuples(layout, &tuples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::{build_schedule, paper_symbol_maps};
    use ndarray::Array2;

    fn frame_of(values: &[f64], rows: usize, cols: usize) -> FluorescenceFrame {
        FluorescenceFrame {
            counts: Array2::from_shape_vec((rows, cols), values.to_vec()).unwrap(),
        }
    }

    fn toy_bank() -> ReferenceBank {
        let mut frames = BTreeMap::new();
        frames.insert(vec![0, 0], frame_of(&[10.0, 10.0, 10.0, 10.0], 2, 2));
        frames.insert(vec![0, 1], frame_of(&[10.0, 5.0, 10.0, 10.0], 2, 2));
        frames.insert(vec![1, 0], frame_of(&[5.0, 10.0, 10.0, 10.0], 2, 2));
        frames.insert(vec![1, 1], frame_of(&[5.0, 5.0, 10.0, 10.0], 2, 2));
        ReferenceBank::from_frames(frames)
    }

    #[test]
    fn exact_reference_match_wins() {
        let bank = toy_bank();
        let probe = bank.get(&[0, 1]).unwrap().clone();
        assert_eq!(mse_detect(&probe, &bank).unwrap(), vec![0, 1]);
    }

    #[test]
    fn equidistant_tie_breaks_lexicographically() {
        let mut frames = BTreeMap::new();
        frames.insert(vec![0u8], frame_of(&[0.0], 1, 1));
        frames.insert(vec![1u8], frame_of(&[2.0], 1, 1));
        let bank = ReferenceBank::from_frames(frames);
        let probe = frame_of(&[1.0], 1, 1);
        assert_eq!(mse_detect(&probe, &bank).unwrap(), vec![0]);
    }

    #[test]
    fn empty_bank_is_an_error() {
        let bank = ReferenceBank::from_frames(BTreeMap::new());
        let probe = frame_of(&[1.0], 1, 1);
        assert!(matches!(mse_detect(&probe, &bank), Err(DetectError::EmptyBank)));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let bank = toy_bank();
        let probe = frame_of(&[1.0], 1, 1);
        assert!(matches!(mse_detect(&probe, &bank), Err(DetectError::FrameDimMismatch(..))));
    }

    /// Independent oracle: exhaustive search over the tuple space with
    /// index arithmetic instead of the bank's map iteration.
    fn oracle_detect(frame: &FluorescenceFrame, refs: &[(Vec<u8>, FluorescenceFrame)]) -> Vec<u8> {
        let mut best_idx = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, (_, r)) in refs.iter().enumerate() {
            let mut d = 0.0;
            for (a, b) in frame.counts.iter().zip(r.counts.iter()) {
                d += (a - b).powi(2);
            }
            let candidate_smaller = d < best_d || (d == best_d && refs[i].0 < refs[best_idx].0);
            if candidate_smaller {
                best_d = d;
                best_idx = i;
            }
        }
        refs[best_idx].0.clone()
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_instances() {
        let mut state = 0x1234_5678_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..1000 {
            let n_refs = 2 + (next() as usize % 6);
            let mut refs = Vec::new();
            for t in 0..n_refs {
                let vals: Vec<f64> = (0..16).map(|_| (next() % 32) as f64).collect();
                refs.push((vec![t as u8], frame_of(&vals, 4, 4)));
            }
            let probe_vals: Vec<f64> = (0..16).map(|_| (next() % 32) as f64).collect();
            let probe = frame_of(&probe_vals, 4, 4);
            let bank = ReferenceBank::from_frames(refs.iter().cloned().collect());
            assert_eq!(mse_detect(&probe, &bank).unwrap(), oracle_detect(&probe, &refs));
        }
    }

    #[test]
    fn detection_invariant_under_shared_offset_and_permutation() {
        let bank = toy_bank();
        let probe = frame_of(&[9.0, 6.0, 10.0, 10.0], 2, 2);
        let base = mse_detect(&probe, &bank).unwrap();

        // Constant added to the frame and every reference.
        let shift = |f: &FluorescenceFrame| FluorescenceFrame { counts: &f.counts + 17.5 };
        let shifted_bank = ReferenceBank::from_frames(
            bank.frames.iter().map(|(k, v)| (k.clone(), shift(v))).collect(),
        );
        assert_eq!(mse_detect(&shift(&probe), &shifted_bank).unwrap(), base);

        // The same pixel permutation applied to the frame and the bank.
        let perm = [2usize, 0, 3, 1];
        let permute = |f: &FluorescenceFrame| {
            let flat: Vec<f64> = f.counts.iter().copied().collect();
            let vals: Vec<f64> = perm.iter().map(|&i| flat[i]).collect();
            frame_of(&vals, 2, 2)
        };
        let permuted_bank = ReferenceBank::from_frames(
            bank.frames.iter().map(|(k, v)| (k.clone(), permute(v))).collect(),
        );
        assert_eq!(mse_detect(&permute(&probe), &permuted_bank).unwrap(), base);
    }

    #[test]
    fn bank_building_checks_completeness_and_averages() {
        let tuples = vec![vec![0u8], vec![1u8]];
        let mut groups = BTreeMap::new();
        groups.insert(vec![0u8], vec![frame_of(&[2.0], 1, 1), frame_of(&[4.0], 1, 1)]);
        assert!(matches!(
            build_reference_bank(&groups, &tuples),
            Err(DetectError::MissingTuple(_))
        ));
        groups.insert(vec![1u8], vec![frame_of(&[8.0], 1, 1)]);
        let bank = build_reference_bank(&groups, &tuples).unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank.get(&[0]).unwrap().counts[(0, 0)], 3.0);
        // n_ref = 1 keeps the raw frame.
        assert_eq!(bank.get(&[1]).unwrap().counts[(0, 0)], 8.0);
    }

    #[test]
    fn noiseless_stream_detection_is_perfect() {
        // Distinct noiseless references: every data slot detects exactly.
        let map = paper_symbol_maps("fsk-zfs").unwrap();
        let tx = vec![
            Bitstream(vec![1, 0, 0, 1, 1, 1, 0, 0]),
            Bitstream(vec![0, 0, 1, 1, 0, 1, 0, 1]),
        ];
        let layout = build_schedule(&tx, &map, 1).unwrap();
        let bank = toy_bank();
        let frames: Vec<FluorescenceFrame> = layout
            .data_tuples
            .iter()
            .map(|t| bank.get(t).unwrap().clone())
            .collect();
        let rx = detect_stream(&frames, &bank, &layout).unwrap();
        assert_eq!(rx, tx);
    }

    #[test]
    fn single_user_mse_equals_intensity_threshold() {
        // With flat references the MSE rule reduces to thresholding the
        // total frame intensity at the midpoint.
        let r0 = frame_of(&[4.0; 9], 3, 3);
        let r1 = frame_of(&[8.0; 9], 3, 3);
        let mut frames = BTreeMap::new();
        frames.insert(vec![0u8], r0);
        frames.insert(vec![1u8], r1);
        let bank = ReferenceBank::from_frames(frames);
        let midpoint_total = (4.0 + 8.0) / 2.0 * 9.0;
        for level in [3.0, 4.5, 5.9, 6.1, 7.5, 9.0] {
            let probe = frame_of(&[level; 9], 3, 3);
            let detected = mse_detect(&probe, &bank).unwrap()[0];
            let thresholded = if probe.total() < midpoint_total { 0 } else { 1 };
            assert_eq!(detected, thresholded, "level {level}");
        }
    }
}
