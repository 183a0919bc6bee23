//! End-to-end transmission pipeline: encode → schedule → channel → render →
//! detect → decode.
//!
//! Slots render independently — each takes its noise from
//! `(master_seed, SLOT, absolute slot index)` — so the data section runs in
//! parallel with results identical to a serial run. Expected frames are
//! cached per symbol tuple (the scene and channel are static within a run),
//! which turns per-slot rendering into pure noise sampling.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::modem::{
    ber_counts, build_schedule, decode_image, encode_image, unpack_tuples, Bitstream, FrameLayout,
    SymbolMap,
};
use crate::nvphys::Tone;
use crate::rxdetect::{
    assign_users_to_map, build_reference_bank, calibrate_thresholds, fit_lorentzian, mse_detect,
    reffree_detect_slot, sweep_odmr, verify_against_map, ClusterFit,
};
use crate::scene::{
    generate_clusters, plant_resonance, sample_frame, FluorescenceFrame, NoiseModel, Scene,
};
use crate::seed::{self, stream};

use super::config::ExperimentConfig;
use super::report::{aggregate_ber, RunReport, SlotCounts, TimingReport};
use super::{pgm, HarnessError};

/// Static per-(user, cluster) channel attenuation in dB: the user's bulk
/// offset plus a normal draw.
pub fn draw_channel_gains(config: &ExperimentConfig, n_users: usize, n_clusters: usize) -> Vec<Vec<f64>> {
    let mut rng = seed::rng_for(config.master_seed, stream::GAINS, 0);
    let normal = Normal::new(0.0, config.channel.gain_sigma_db.max(1e-12)).expect("valid sigma");
    // Reference-free links are separated per cluster; they run at equal
    // mean power instead of the bank detector's attenuation ladder.
    let ladder = config.scheme != "fsk-reffree";
    (0..n_users)
        .map(|u| {
            let bulk = config.channel.bulk_offset(u, ladder);
            (0..n_clusters).map(|_| bulk + normal.sample(&mut rng)).collect()
        })
        .collect()
}

/// Tones arriving at each cluster while `tuple` is transmitted.
pub fn tones_for_tuple(
    map: &SymbolMap,
    tuple: &[u8],
    gains_db: &[Vec<f64>],
    n_clusters: usize,
) -> Result<Vec<Vec<Tone>>, HarnessError> {
    let mut per_cluster = vec![Vec::with_capacity(tuple.len()); n_clusters];
    for (u, &symbol) in tuple.iter().enumerate() {
        let tone = map.tone_for(u, symbol)?;
        for (k, tones) in per_cluster.iter_mut().enumerate() {
            tones.push(tone.attenuated(gains_db[u][k]));
        }
    }
    Ok(per_cluster)
}

/// Generate the run's cluster field, planting aligned clusters on the
/// scheme's resonant frequencies where the band demands them.
pub fn build_scene(config: &ExperimentConfig) -> Result<Scene, HarnessError> {
    let field_map = config.field_map();
    let mut clusters = generate_clusters(
        seed::mix(config.master_seed, stream::SCENE, 0),
        config.cluster_count,
        &config.fov,
        &config.spin_model,
        &config.cluster_gen,
    );

    let targets = config.plant_targets();
    if !targets.is_empty() {
        let min_dist = 4.0 * config.scan.roi_radius_um;
        let mut planted_positions: Vec<[f64; 2]> = Vec::new();
        let mut cursor = 0usize;
        for (f_plus, n) in targets {
            let mut placed = 0usize;
            while placed < n && cursor < clusters.len() {
                let k = cursor;
                cursor += 1;
                let pos = clusters[k].position_um;
                let clear = planted_positions.iter().all(|p| {
                    let (dx, dy) = (p[0] - pos[0], p[1] - pos[1]);
                    (dx * dx + dy * dy).sqrt() >= min_dist
                });
                if !clear {
                    continue;
                }
                if plant_resonance(&mut clusters[k], &field_map, f_plus) {
                    // Anchors model the hand-picked bright FNDs of the
                    // band experiments: at least twice the median.
                    clusters[k].brightness_cpms = clusters[k]
                        .brightness_cpms
                        .max(2.0 * config.cluster_gen.brightness_median_cpms);
                    planted_positions.push(pos);
                    placed += 1;
                }
            }
            if placed < n {
                return Err(HarnessError::Config {
                    field: "cluster_count".into(),
                    reason: format!(
                        "could not plant {n} cluster(s) at {f_plus} MHz (field too weak or too few clusters)"
                    ),
                });
            }
        }
    }

    Ok(Scene {
        clusters,
        field_map,
        fov: config.fov,
        psf_sigma_um: config.psf_sigma_um,
    })
}

/// Slot counts and recovered bitstreams of one transmission run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub rx_bits: Vec<Bitstream>,
    pub slots: SlotCounts,
}

fn slot_frame(
    expected: &FluorescenceFrame,
    noise: &NoiseModel,
    deterministic: bool,
    slot_seed: u64,
) -> FluorescenceFrame {
    if deterministic {
        expected.clone()
    } else {
        sample_frame(expected, noise, slot_seed)
    }
}

/// Transmit `tx_bits` through the configured scene and recover them.
///
/// The reference-bank flow transmits the full reference section first; the
/// reference-free flow transmits no reference slots at all — it sweeps the
/// spectrum receiver-side, binds users to clusters, and spends exactly two
/// calibration slots on thresholds.
pub fn simulate_bits(
    config: &ExperimentConfig,
    scene: &Scene,
    tx_bits: &[Bitstream],
) -> Result<SimOutcome, HarnessError> {
    let map = config.symbol_map()?;
    let layout = build_schedule(tx_bits, &map, config.n_ref)?;
    let gains = draw_channel_gains(config, map.users(), scene.clusters.len());

    // Expected frame per distinct symbol tuple.
    let mut expectations: BTreeMap<Vec<u8>, FluorescenceFrame> = BTreeMap::new();
    for tuple in layout.reference_tuples.iter().chain(layout.data_tuples.iter()) {
        if !expectations.contains_key(tuple) {
            let tones = tones_for_tuple(&map, tuple, &gains, scene.clusters.len())?;
            expectations.insert(tuple.clone(), scene.expectation(&tones, &config.noise)?);
        }
    }

    if config.scheme == "fsk-reffree" {
        simulate_reffree(config, scene, &map, &layout, &gains, &expectations)
    } else {
        simulate_with_bank(config, &layout, &expectations)
    }
}

fn simulate_with_bank(
    config: &ExperimentConfig,
    layout: &FrameLayout,
    expectations: &BTreeMap<Vec<u8>, FluorescenceFrame>,
) -> Result<SimOutcome, HarnessError> {
    let noise = &config.noise;
    let deterministic = config.deterministic;
    let master = config.master_seed;

    // Reference section: tuple i occupies slots [i·n_ref, (i+1)·n_ref).
    let groups: BTreeMap<Vec<u8>, Vec<FluorescenceFrame>> = layout
        .reference_tuples
        .par_iter()
        .enumerate()
        .map(|(i, tuple)| {
            let expected = &expectations[tuple];
            let frames: Vec<FluorescenceFrame> = (0..layout.n_ref)
                .map(|r| {
                    let slot = i * layout.n_ref + r;
                    slot_frame(expected, noise, deterministic, seed::mix(master, stream::SLOT, slot as u64))
                })
                .collect();
            (tuple.clone(), frames)
        })
        .collect();
    let bank = build_reference_bank(&groups, &layout.reference_tuples)?;
    drop(groups);

    // Data section: render → detect → drop, one slot at a time.
    let first_data_slot = layout.reference_slots();
    let detected: Vec<Vec<u8>> = layout
        .data_tuples
        .par_iter()
        .enumerate()
        .map(|(t, tuple)| {
            let slot = first_data_slot + t;
            let frame = slot_frame(
                &expectations[tuple],
                noise,
                deterministic,
                seed::mix(master, stream::SLOT, slot as u64),
            );
            mse_detect(&frame, &bank)
        })
        .collect::<Result<_, _>>()?;

    Ok(SimOutcome {
        rx_bits: unpack_tuples(layout, &detected),
        slots: SlotCounts {
            reference: layout.reference_slots(),
            calibration: 0,
            data: layout.data_slots(),
        },
    })
}

fn simulate_reffree(
    config: &ExperimentConfig,
    scene: &Scene,
    map: &SymbolMap,
    layout: &FrameLayout,
    gains: &[Vec<f64>],
    expectations: &BTreeMap<Vec<u8>, FluorescenceFrame>,
) -> Result<SimOutcome, HarnessError> {
    let noise = &config.noise;
    let deterministic = config.deterministic;
    let master = config.master_seed;
    let scan = &config.scan;

    // Receiver-side spectroscopy: sweep, fit one dip per cluster ROI in the
    // scanned band, bind users to the clusters matching their bit-0 tones.
    let sweep = sweep_odmr(
        scene,
        noise,
        &scan.grid(),
        scan.probe_power_dbm,
        scan.roi_radius_um,
        deterministic,
        master,
    )?;
    let fits: Vec<ClusterFit> = sweep
        .traces
        .iter()
        .map(|trace| {
            fit_lorentzian(&sweep.freqs_mhz, &trace.counts, 1).map(|fit| ClusterFit {
                cluster_id: trace.roi_id,
                center_um: trace.center_um,
                fit,
            })
        })
        .collect::<Result<_, _>>()?;
    let mut assignment = assign_users_to_map(
        &fits,
        map,
        scan.tol_mhz,
        scan.min_separation_mhz,
        scan.roi_radius_um,
    )?;
    verify_against_map(&assignment, map, scan.tol_mhz)?;

    // Two threshold-calibration slots: all users on resonance, all parked.
    let on_tuple: Vec<u8> = vec![0; map.users()];
    let off_tuple: Vec<u8> = vec![1; map.users()];
    let on_tones = tones_for_tuple(map, &on_tuple, gains, scene.clusters.len())?;
    let off_tones = tones_for_tuple(map, &off_tuple, gains, scene.clusters.len())?;
    calibrate_thresholds(
        scene,
        &mut assignment,
        &on_tones,
        &off_tones,
        noise,
        deterministic,
        master,
    )?;

    let detected: Vec<Vec<u8>> = layout
        .data_tuples
        .par_iter()
        .enumerate()
        .map(|(t, tuple)| {
            let frame = slot_frame(
                &expectations[tuple],
                noise,
                deterministic,
                seed::mix(master, stream::SLOT, t as u64),
            );
            reffree_detect_slot(&frame, &scene.fov, &assignment)
        })
        .collect();

    Ok(SimOutcome {
        rx_bits: unpack_tuples(layout, &detected),
        slots: SlotCounts { reference: 0, calibration: 2, data: layout.data_slots() },
    })
}

/// Full `simulate` run: load message images, transmit, decode, and write
/// recovered images, bitstream dumps and the JSON report.
pub fn run_simulate(
    config: &ExperimentConfig,
    config_echo: &str,
    out_dir: &Path,
) -> Result<RunReport, HarnessError> {
    if config.users.is_empty() {
        return Err(HarnessError::Config {
            field: "users".into(),
            reason: "simulate needs at least one user payload".into(),
        });
    }
    let map = config.symbol_map()?;
    if config.users.len() != map.users() {
        return Err(HarnessError::Config {
            field: "users".into(),
            reason: format!(
                "scheme `{}` carries {} users, config lists {}",
                config.scheme,
                map.users(),
                config.users.len()
            ),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;

    // Per-user payload: the listed images, transmitted back to back.
    let mut tx_bits: Vec<Bitstream> = Vec::new();
    let mut image_dims: Vec<Vec<(usize, usize)>> = Vec::new();
    for payload in &config.users {
        if payload.images.is_empty() {
            return Err(HarnessError::Config {
                field: "users.images".into(),
                reason: "every user needs at least one message image".into(),
            });
        }
        let mut bits = Vec::new();
        let mut dims = Vec::new();
        for path in &payload.images {
            let img = pgm::read_pgm8(path)?;
            dims.push((img.width, img.height));
            bits.extend(encode_image(&img).0);
        }
        tx_bits.push(Bitstream(bits));
        image_dims.push(dims);
    }

    let scene = build_scene(config)?;
    let outcome = simulate_bits(config, &scene, &tx_bits)?;

    let mut artifacts: Vec<String> = Vec::new();

    // Recovered images, sliced back out of each user's bit stream.
    for (u, dims) in image_dims.iter().enumerate() {
        let rx = &outcome.rx_bits[u];
        let mut offset = 0usize;
        for (i, &(w, h)) in dims.iter().enumerate() {
            let n = w * h * 8;
            let slice = Bitstream(rx.0[offset..offset + n].to_vec());
            offset += n;
            let img = decode_image(&slice, w, h)?;
            let name = format!("recovered_user{u}_img{i}.pgm");
            pgm::write_pgm8(&out_dir.join(&name), &img)?;
            artifacts.push(name);
        }
    }

    // Bitstream dumps (hex text) for debugging and self-consistency checks.
    for (u, (tx, rx)) in tx_bits.iter().zip(&outcome.rx_bits).enumerate() {
        let tx_name = format!("bits_user{u}_tx.hex");
        let rx_name = format!("bits_user{u}_rx.hex");
        std::fs::write(out_dir.join(&tx_name), tx.to_hex())
            .map_err(|e| HarnessError::io(out_dir, e))?;
        std::fs::write(out_dir.join(&rx_name), rx.to_hex())
            .map_err(|e| HarnessError::io(out_dir, e))?;
        artifacts.push(tx_name);
        artifacts.push(rx_name);
    }

    // Optional reference-bank export for inspection.
    if config.export_frames && config.scheme != "fsk-reffree" {
        let layout = build_schedule(&tx_bits, &map, config.n_ref)?;
        let gains = draw_channel_gains(config, map.users(), scene.clusters.len());
        for tuple in &layout.reference_tuples {
            let tones = tones_for_tuple(&map, tuple, &gains, scene.clusters.len())?;
            let expected = scene.expectation(&tones, &config.noise)?;
            let label: String = tuple.iter().map(|s| s.to_string()).collect();
            let name = format!("expected_ref_{label}.pgm");
            pgm::write_pgm16(&out_dir.join(&name), &expected)?;
            artifacts.push(name);
        }
    }

    let mut per_user_errors = Vec::new();
    let mut per_user_bits = Vec::new();
    let mut per_user_ber = Vec::new();
    for (tx, rx) in tx_bits.iter().zip(&outcome.rx_bits) {
        let (errors, bits) = ber_counts(tx, rx)?;
        per_user_errors.push(errors);
        per_user_bits.push(bits);
        per_user_ber.push(errors as f64 / bits as f64);
    }

    let slot_period = config.slot_period_ms();
    let report = RunReport {
        scheme: config.scheme.clone(),
        master_seed: config.master_seed,
        deterministic: config.deterministic,
        users: config.users.len(),
        aggregate_ber: aggregate_ber(&per_user_errors, &per_user_bits),
        per_user_bits,
        per_user_errors,
        per_user_ber,
        slots: outcome.slots,
        timing: TimingReport {
            slot_period_ms: slot_period,
            simulated_duration_ms: slot_period * outcome.slots.total() as f64,
        },
        capacity: None,
        audio: None,
        config_echo: config_echo.to_string(),
        artifacts,
    };
    std::fs::write(out_dir.join("report.json"), report.to_json())
        .map_err(|e| HarnessError::io(out_dir, e))?;
    Ok(report)
}

/// Deterministic synthetic payload for sweep and trend runs.
pub(crate) fn synthetic_bits(master_seed: u64, user: usize, n_bits: usize) -> Bitstream {
    use rand::Rng;
    let mut rng = seed::rng_for(master_seed, stream::MESSAGE, user as u64);
    Bitstream((0..n_bits).map(|_| rng.random::<bool>() as u8).collect())
}
