//! Capacity studies and standalone ODMR scan export.

use std::path::Path;

use crate::rxdetect::{assign_users, fit_lorentzian, sweep_odmr, ClusterFit};
use crate::scene::{generate_clusters, Scene};
use crate::seed::{self, stream};

use super::config::ExperimentConfig;
use super::pipeline::build_scene;
use super::report::{CapacitySummary, RunReport, SlotCounts, TimingReport};
use super::{write_csv, HarnessError};

fn scan_and_fit(
    scene: &Scene,
    config: &ExperimentConfig,
    master_seed: u64,
) -> Result<Vec<ClusterFit>, HarnessError> {
    let scan = &config.scan;
    let sweep = sweep_odmr(
        scene,
        &config.noise,
        &scan.grid(),
        scan.probe_power_dbm,
        scan.roi_radius_um,
        config.deterministic,
        master_seed,
    )?;
    sweep
        .traces
        .iter()
        .map(|trace| {
            Ok(fit_lorentzian(&sweep.freqs_mhz, &trace.counts, 1).map(|fit| ClusterFit {
                cluster_id: trace.roi_id,
                center_um: trace.center_um,
                fit,
            })?)
        })
        .collect()
}

/// How many spectrally separated users the random field supports, over
/// `capacity.seeds` independent cluster draws.
pub fn run_capacity(
    config: &ExperimentConfig,
    config_echo: &str,
    out_dir: &Path,
) -> Result<RunReport, HarnessError> {
    let field_map = config.field_map();
    if field_map.gradient_g_per_um.iter().all(|row| row.iter().all(|&g| g == 0.0)) {
        return Err(HarnessError::Config {
            field: "field.gradient_g_per_um".into(),
            reason: "capacity runs need a nonzero field gradient".into(),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;

    let seeds = config.capacity.seeds;
    let mut assigned_per_seed = Vec::with_capacity(seeds);
    let mut utilization_per_seed = Vec::with_capacity(seeds);
    let mut separation_ok = true;

    for i in 0..seeds {
        let run_master = seed::mix(config.master_seed, stream::RUN, i as u64);
        // Natural field: no planted anchors in a capacity estimate.
        let clusters = generate_clusters(
            seed::mix(run_master, stream::SCENE, 0),
            config.cluster_count,
            &config.fov,
            &config.spin_model,
            &config.cluster_gen,
        );
        let scene = Scene {
            clusters,
            field_map,
            fov: config.fov,
            psf_sigma_um: config.psf_sigma_um,
        };
        if scene.clusters.is_empty() {
            assigned_per_seed.push(0);
            continue;
        }
        let fits = scan_and_fit(&scene, config, run_master)?;
        let assignment = assign_users(
            &fits,
            config.capacity.n_users,
            config.scan.min_separation_mhz,
            config.scan.roi_radius_um,
        );
        for a in &assignment.users {
            for b in &assignment.users {
                if a.user < b.user
                    && (a.resonance_mhz - b.resonance_mhz).abs() < config.scan.min_separation_mhz
                {
                    separation_ok = false;
                }
            }
        }
        assigned_per_seed.push(assignment.users.len());
        utilization_per_seed.push(assignment.utilization);
    }

    write_csv(
        &out_dir.join("capacity.csv"),
        "seed,assigned,total_clusters,utilization",
        assigned_per_seed.iter().enumerate().map(|(i, &a)| {
            let util = if config.cluster_count == 0 {
                String::new()
            } else {
                format!("{}", a as f64 / config.cluster_count as f64)
            };
            format!("{i},{a},{},{util}", config.cluster_count)
        }),
    )?;

    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    let assigned_f: Vec<f64> = assigned_per_seed.iter().map(|&a| a as f64).collect();
    let summary = CapacitySummary {
        seeds,
        assigned_per_seed,
        mean_assigned: mean(&assigned_f),
        mean_utilization: mean(&utilization_per_seed),
        utilization_per_seed,
        separation_ok,
    };

    let report = RunReport {
        scheme: config.scheme.clone(),
        master_seed: config.master_seed,
        deterministic: config.deterministic,
        users: 0,
        per_user_bits: Vec::new(),
        per_user_errors: Vec::new(),
        per_user_ber: Vec::new(),
        aggregate_ber: None,
        slots: SlotCounts::default(),
        timing: TimingReport {
            slot_period_ms: config.slot_period_ms(),
            simulated_duration_ms: 0.0,
        },
        capacity: Some(summary),
        audio: None,
        config_echo: config_echo.to_string(),
        artifacts: vec!["capacity.csv".into()],
    };
    std::fs::write(out_dir.join("report.json"), report.to_json())
        .map_err(|e| HarnessError::io(out_dir, e))?;
    Ok(report)
}

/// Standalone ODMR scan: sweep the configured grid over the scheme's scene
/// and export traces plus per-cluster fits as CSV.
pub fn run_odmr_scan(config: &ExperimentConfig, out_dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let scene = build_scene(config)?;
    let scan = &config.scan;
    let sweep = sweep_odmr(
        &scene,
        &config.noise,
        &scan.grid(),
        scan.probe_power_dbm,
        scan.roi_radius_um,
        config.deterministic,
        config.master_seed,
    )?;

    let mut rows = Vec::new();
    for trace in &sweep.traces {
        for (f, c) in sweep.freqs_mhz.iter().zip(&trace.counts) {
            rows.push(format!("{f},{},{c}", trace.roi_id));
        }
    }
    write_csv(&out_dir.join("scan.csv"), "freq_mhz,roi_id,counts", rows)?;

    let fits: Vec<String> = sweep
        .traces
        .iter()
        .map(|trace| {
            let fit = fit_lorentzian(&sweep.freqs_mhz, &trace.counts, 1)?;
            let p = fit.strongest_peak();
            Ok(format!(
                "{},{},{},{},{},{},{}",
                trace.roi_id,
                fit.baseline,
                p.center_mhz,
                p.fwhm_mhz,
                p.contrast,
                fit.residual_norm,
                fit.converged
            ))
        })
        .collect::<Result<_, HarnessError>>()?;
    write_csv(
        &out_dir.join("fits.csv"),
        "roi_id,baseline,center_mhz,fwhm_mhz,contrast,residual_norm,converged",
        fits,
    )?;
    Ok(())
}
