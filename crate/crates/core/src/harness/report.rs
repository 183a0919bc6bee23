//! Run reports: everything a run produced, plus the verbatim config text
//! for provenance. Reports contain only simulated quantities so identical
//! `(config, seed)` runs serialize to identical bytes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SlotCounts {
    pub reference: usize,
    pub calibration: usize,
    pub data: usize,
}

impl SlotCounts {
    pub fn total(&self) -> usize {
        self.reference + self.calibration + self.data
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct TimingReport {
    /// Exposure plus settling interval, ms.
    pub slot_period_ms: f64,
    /// Slot count × slot period, ms.
    pub simulated_duration_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacitySummary {
    pub seeds: usize,
    pub assigned_per_seed: Vec<usize>,
    pub utilization_per_seed: Vec<f64>,
    pub mean_assigned: Option<f64>,
    pub mean_utilization: Option<f64>,
    /// Every run satisfied the pairwise resonance-separation constraint.
    pub separation_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AudioSummary {
    pub samples: usize,
    pub max_residual_frac_am: f64,
    pub max_residual_frac_fm: f64,
    pub max_residual_frac_joint: f64,
}

/// Result of one harness run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scheme: String,
    pub master_seed: u64,
    pub deterministic: bool,
    pub users: usize,
    pub per_user_bits: Vec<usize>,
    pub per_user_errors: Vec<usize>,
    pub per_user_ber: Vec<f64>,
    /// Pooled errors over pooled bits across users.
    pub aggregate_ber: Option<f64>,
    pub slots: SlotCounts,
    pub timing: TimingReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<CapacitySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioSummary>,
    /// Verbatim text of the input config file.
    pub config_echo: String,
    /// Output files written by the run, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Pooled aggregate BER: total mismatches over total compared bits.
pub fn aggregate_ber(per_user_errors: &[usize], per_user_bits: &[usize]) -> Option<f64> {
    let bits: usize = per_user_bits.iter().sum();
    if bits == 0 {
        return None;
    }
    let errors: usize = per_user_errors.iter().sum();
    Some(errors as f64 / bits as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_is_pooled_not_averaged() {
        // 1.79% of 10000 and 0.38% of 10000 pool to ~1.08%.
        let errors = [179, 38];
        let bits = [10_000, 10_000];
        let agg = aggregate_ber(&errors, &bits).unwrap();
        assert!((agg - 0.01085).abs() < 1e-12);
        // Unequal payloads pool by bit count, not by user.
        let agg = aggregate_ber(&[100, 0], &[1000, 9000]).unwrap();
        assert!((agg - 0.01).abs() < 1e-12);
        assert_eq!(aggregate_ber(&[], &[]), None);
    }
}
