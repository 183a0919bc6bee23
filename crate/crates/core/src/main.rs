//! Command-line front end for the FND-receiver link simulator.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fndlink::harness::{
    run_ber_sweep, run_capacity, run_demod_audio, run_odmr_scan, run_simulate, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "fndlink", version, about = "Link-level simulator for nanodiamond multi-user receivers")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Expectation mode: replace all camera noise by its mean.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker thread count (defaults to the CPU count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: encode message images, transmit, detect, decode.
    Simulate,
    /// Monte-Carlo BER sweep over one parameter.
    BerSweep,
    /// Sweep the ODMR spectrum and export per-cluster traces and fits.
    OdmrScan,
    /// How many spectrally separated users the cluster field supports.
    Capacity,
    /// Demodulate an audio waveform via amplitude/frequency/joint modes.
    DemodAudio {
        /// Text file of whitespace-separated samples in [-1, 1].
        #[arg(long)]
        waveform: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();

    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("rayon thread pool")?;
    }

    let config_path = cli.config.as_deref().context("--config <path> is required")?;
    let (mut config, echo) = ExperimentConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if cli.deterministic {
        config.deterministic = true;
    }
    let out_dir = cli
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let started = Instant::now();
    match cli.command {
        Command::Simulate => {
            let report = run_simulate(&config, &echo, &out_dir)?;
            for (u, ber) in report.per_user_ber.iter().enumerate() {
                println!("user {u}: {} bits, BER {:.6}%", report.per_user_bits[u], ber * 100.0);
            }
            if let Some(agg) = report.aggregate_ber {
                println!("aggregate BER {:.6}%", agg * 100.0);
            }
            println!(
                "slots: {} reference, {} calibration, {} data",
                report.slots.reference, report.slots.calibration, report.slots.data
            );
        }
        Command::BerSweep => {
            let rows = run_ber_sweep(&config, &out_dir)?;
            println!("{} sweep rows -> {}", rows.len(), out_dir.join("sweep.csv").display());
        }
        Command::OdmrScan => {
            run_odmr_scan(&config, &out_dir)?;
            println!("scan exported -> {}", out_dir.join("scan.csv").display());
        }
        Command::Capacity => {
            let report = run_capacity(&config, &echo, &out_dir)?;
            let cap = report.capacity.as_ref().expect("capacity summary");
            match cap.mean_assigned {
                Some(mean) => println!(
                    "mean assigned users {:.2} over {} seeds (mean utilization {:.1}%)",
                    mean,
                    cap.seeds,
                    cap.mean_utilization.unwrap_or(0.0) * 100.0
                ),
                None => println!("no clusters: utilization undefined"),
            }
        }
        Command::DemodAudio { waveform } => {
            let report = run_demod_audio(&config, &echo, &waveform, &out_dir)?;
            let audio = report.audio.as_ref().expect("audio summary");
            println!(
                "max residual: AM {:.4}% FM {:.4}% joint {:.4}% of full scale",
                audio.max_residual_frac_am * 100.0,
                audio.max_residual_frac_fm * 100.0,
                audio.max_residual_frac_joint * 100.0
            );
        }
    }
    eprintln!("done in {:.1}s, outputs in {}", started.elapsed().as_secs_f64(), out_dir.display());
    Ok(())
}
