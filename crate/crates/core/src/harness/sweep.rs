//! Monte-Carlo BER sweeps over one experiment parameter.

use std::path::Path;

use crate::modem::{ber_counts, Bitstream};
use crate::seed::{self, stream};

use super::config::{ExperimentConfig, SweepParameter};
use super::pipeline::{build_scene, simulate_bits, synthetic_bits};
use super::{write_csv, HarnessError};

/// One (sweep value, seed) measurement.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub seed_index: usize,
    pub per_user_ber: Vec<f64>,
    pub aggregate_ber: f64,
}

/// Run the configured sweep and write `sweep.csv` into `out_dir`.
///
/// Every sweep point runs `sweep.seeds` independent links with synthetic
/// payloads of `sweep.bits_per_user` bits per user; medians are computed
/// downstream of the CSV.
pub fn run_ber_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Vec<SweepRow>, HarnessError> {
    let sweep = config.sweep.clone().ok_or_else(|| HarnessError::Config {
        field: "sweep".into(),
        reason: "ber-sweep needs a sweep section".into(),
    })?;
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;

    let n_users = config.symbol_map()?.users();
    let mut rows = Vec::with_capacity(sweep.values.len() * sweep.seeds);
    for (vi, &value) in sweep.values.iter().enumerate() {
        for si in 0..sweep.seeds {
            let mut run = config.clone();
            run.n_ref = sweep.n_ref;
            run.master_seed =
                seed::mix(config.master_seed, stream::RUN, ((vi as u64) << 32) | si as u64);
            match sweep.parameter {
                SweepParameter::ClusterCount => run.cluster_count = value.round() as usize,
                SweepParameter::LaserScale => run.noise.laser_scale = value,
                SweepParameter::NRef => run.n_ref = value.round().max(1.0) as usize,
                SweepParameter::ReadNoise => run.noise.read_noise_sd = value,
            }
            run.validate()?;

            let tx: Vec<Bitstream> = (0..n_users)
                .map(|u| synthetic_bits(run.master_seed, u, sweep.bits_per_user))
                .collect();
            let scene = build_scene(&run)?;
            let outcome = simulate_bits(&run, &scene, &tx)?;

            let mut errors_total = 0usize;
            let mut bits_total = 0usize;
            let mut per_user_ber = Vec::with_capacity(n_users);
            for (t, r) in tx.iter().zip(&outcome.rx_bits) {
                let (e, b) = ber_counts(t, r)?;
                errors_total += e;
                bits_total += b;
                per_user_ber.push(e as f64 / b as f64);
            }
            rows.push(SweepRow {
                value,
                seed_index: si,
                per_user_ber,
                aggregate_ber: errors_total as f64 / bits_total as f64,
            });
        }
    }

    let user_cols: String = (0..n_users).map(|u| format!(",ber_user_{u}")).collect();
    write_csv(
        &out_dir.join("sweep.csv"),
        &format!("param,seed{user_cols},ber_aggregate"),
        rows.iter().map(|r| {
            let users: String = r.per_user_ber.iter().map(|b| format!(",{b}")).collect();
            format!("{},{}{users},{}", r.value, r.seed_index, r.aggregate_ber)
        }),
    )?;
    Ok(rows)
}

/// Median of a sample (empty input yields NaN).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
