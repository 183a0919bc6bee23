//! Analog audio demodulation runs: one waveform through amplitude,
//! frequency and joint modulation, with residual CSV exports.

use std::path::Path;

use crate::rxdetect::{
    calibrate_analog, calibrate_analog_joint, demod_analog, AnalogDemodResult, AnalogMode,
    AnalogSetup,
};
use crate::seed::{self, stream};

use super::config::ExperimentConfig;
use super::report::{AudioSummary, RunReport, SlotCounts, TimingReport};
use super::{write_csv, HarnessError};

fn load_waveform(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut samples = Vec::new();
    for (i, token) in text.split_ascii_whitespace().enumerate() {
        let v: f64 = token.parse().map_err(|_| HarnessError::Waveform {
            path: path.display().to_string(),
            reason: format!("sample {i} (`{token}`) is not a number"),
        })?;
        if !(-1.0..=1.0).contains(&v) {
            return Err(HarnessError::Waveform {
                path: path.display().to_string(),
                reason: format!("sample {i} ({v}) outside [-1, 1]"),
            });
        }
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(HarnessError::Waveform {
            path: path.display().to_string(),
            reason: "no samples".into(),
        });
    }
    Ok(samples)
}

fn histogram(residuals: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let max = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs())).max(1e-12);
    let lo = -max;
    let width = 2.0 * max / bins as f64;
    let mut counts = vec![0usize; bins];
    for &r in residuals {
        let mut b = ((r - lo) / width) as usize;
        if b >= bins {
            b = bins - 1;
        }
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c))
        .collect()
}

/// Demodulate a waveform file in all three analog modes and write residual
/// tables, residual histograms and the JSON report.
pub fn run_demod_audio(
    config: &ExperimentConfig,
    config_echo: &str,
    waveform_path: &Path,
    out_dir: &Path,
) -> Result<RunReport, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let samples = load_waveform(waveform_path)?;
    let setup = AnalogSetup::single_emitter(config.audio.counts_per_slot);
    let points = config.audio.calibration_points;

    use crate::rxdetect::AnalogCalibration;
    let am = AnalogCalibration::Amplitude(calibrate_analog(&setup, AnalogMode::Amplitude, points)?);
    let fm = AnalogCalibration::Frequency(calibrate_analog(&setup, AnalogMode::Frequency, points)?);
    let joint = AnalogCalibration::Joint(calibrate_analog_joint(&setup, points, points)?);

    let run = |cal: &AnalogCalibration, idx: u64| -> Result<AnalogDemodResult, HarnessError> {
        Ok(demod_analog(
            &setup,
            &samples,
            cal,
            config.deterministic,
            seed::mix(config.master_seed, stream::RUN, idx),
        )?)
    };
    let res_am = run(&am, 0)?;
    let res_fm = run(&fm, 1)?;
    let res_joint = run(&joint, 2)?;

    write_csv(
        &out_dir.join("residuals.csv"),
        "sample,expected,recovered_am,residual_am,recovered_fm,residual_fm,recovered_joint,residual_joint",
        samples.iter().enumerate().map(|(i, s)| {
            format!(
                "{i},{s},{},{},{},{},{},{}",
                res_am.recovered[i],
                res_am.residuals[i],
                res_fm.recovered[i],
                res_fm.residuals[i],
                res_joint.recovered[i],
                res_joint.residuals[i]
            )
        }),
    )?;

    for (name, res) in [("am", &res_am), ("fm", &res_fm), ("joint", &res_joint)] {
        write_csv(
            &out_dir.join(format!("residual_hist_{name}.csv")),
            "bin_lo,bin_hi,count",
            histogram(&res.residuals, config.audio.histogram_bins)
                .into_iter()
                .map(|(lo, hi, c)| format!("{lo},{hi},{c}")),
        )?;
    }

    let report = RunReport {
        scheme: config.scheme.clone(),
        master_seed: config.master_seed,
        deterministic: config.deterministic,
        users: 1,
        per_user_bits: Vec::new(),
        per_user_errors: Vec::new(),
        per_user_ber: Vec::new(),
        aggregate_ber: None,
        slots: SlotCounts { reference: 0, calibration: 0, data: samples.len() * 3 },
        timing: TimingReport {
            slot_period_ms: config.slot_period_ms(),
            simulated_duration_ms: config.slot_period_ms() * (samples.len() * 3) as f64,
        },
        capacity: None,
        audio: Some(AudioSummary {
            samples: samples.len(),
            max_residual_frac_am: res_am.max_abs_residual_frac,
            max_residual_frac_fm: res_fm.max_abs_residual_frac,
            max_residual_frac_joint: res_joint.max_abs_residual_frac,
        }),
        config_echo: config_echo.to_string(),
        artifacts: vec![
            "residuals.csv".into(),
            "residual_hist_am.csv".into(),
            "residual_hist_fm.csv".into(),
            "residual_hist_joint.csv".into(),
        ],
    };
    std::fs::write(out_dir.join("report.json"), report.to_json())
        .map_err(|e| HarnessError::io(out_dir, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_integrates_to_sample_count() {
        let residuals: Vec<f64> = (0..250).map(|i| ((i as f64) * 0.017).sin() * 0.004).collect();
        let hist = histogram(&residuals, 41);
        assert_eq!(hist.len(), 41);
        let total: usize = hist.iter().map(|(_, _, c)| c).sum();
        assert_eq!(total, 250);
    }
}
