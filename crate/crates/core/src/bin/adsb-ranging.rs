use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adsb_ranging::channel::{synthesize, DroneTruth, NoiseParams, ADSB_WAVELENGTH_M};
use adsb_ranging::harness::output::{write_outage_csv, write_records_jsonl, write_tracking_csv};
use adsb_ranging::harness::{
    run_m_sensitivity, run_sweep, run_tracking, ExperimentConfig, Metric, OutageReport,
};
use adsb_ranging::mixture::{bernoulli_p, mode_vector};
use adsb_ranging::pipeline::{estimate, EstimatorConfig};
use adsb_ranging::reorder::{reorder, ReorderMethod};
use adsb_ranging::Result;

/// Monte Carlo driver for joint range and phase-offset estimation of
/// colliding ADS-B transmitters.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// TOML experiment file; defaults are used when omitted. Keys can be
    /// overridden with ADSBR_<SECTION>__<KEY> environment variables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Trials per setting (overrides the config file).
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Outage probabilities over the configured SNR list.
    Sweep,
    /// Per-packet range tracking of three drones.
    Track,
    /// Outage probabilities over the configured maximum delays.
    Msens,
    /// Quick built-in consistency checks.
    Selftest,
    /// Print the effective configuration as TOML.
    Config,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn print_report(report: &OutageReport) {
    println!(
        "{:>8} {:>6} {:>15} {:>6} {:>8} {:>8}",
        "M", "snr_dB", "metric", "alpha", "1-Pout", "se"
    );
    for r in &report.rows {
        let metric = match r.metric {
            Metric::Range => "range",
            Metric::PhaseRaw => "phase-raw",
            Metric::PhaseCircular => "phase-circular",
        };
        println!(
            "{:>8} {:>6.1} {:>15} {:>6.3} {:>8.4} {:>8.4}",
            r.max_delay, r.snr_db, metric, r.alpha, r.success, r.std_err
        );
    }
    println!(
        "failed trials: {}/{} ({:.2}%)",
        report.failures_total,
        report.trials_total,
        100.0 * report.failure_rate()
    );
}

fn exit_for(rate: f64, ceiling: f64) -> ExitCode {
    if rate > ceiling {
        eprintln!("estimation failure rate {rate:.4} exceeds ceiling {ceiling:.4}");
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn check(name: &str, ok: bool, failures: &mut usize) {
    println!("{} {name}", if ok { "PASS" } else { "FAIL" });
    *failures += (!ok) as usize;
}

fn selftest() -> Result<bool> {
    let mut failures = 0;

    let p_ok = [0i64, 20, 100].iter().all(|&m| {
        let z = m as f64 + 124.0;
        let best = (1..100_000)
            .map(|i| i as f64 * 1e-5)
            .max_by(|a, b| {
                (z * a.ln() + 116.0 * (1.0 - a).ln())
                    .total_cmp(&(z * b.ln() + 116.0 * (1.0 - b).ln()))
            })
            .unwrap();
        bernoulli_p(m)
            .map(|p| (p.p - best).abs() < 1e-4)
            .unwrap_or(false)
    });
    check(
        "bernoulli parameter maximizes the packet likelihood",
        p_ok,
        &mut failures,
    );

    let h = [
        num_complex::Complex64::from_polar(2.0, 0.7),
        num_complex::Complex64::from_polar(1.1, 4.0),
        num_complex::Complex64::from_polar(0.4, 2.2),
    ];
    let mut mu = mode_vector(&h);
    mu.rotate_left(3);
    let r = reorder(&mu, 3, ReorderMethod::LsConstrained)?;
    let reorder_ok = r.h.iter().zip(&h).all(|(a, b)| (a - b).norm() < 1e-12);
    check(
        "constrained reordering recovers permuted modes",
        reorder_ok,
        &mut failures,
    );

    for k in 1..=2usize {
        let drones: Vec<DroneTruth> = (0..k)
            .map(|i| DroneTruth {
                power_w: 1.0,
                range_m: 600.0 + 1500.0 * i as f64,
                phases: vec![1.0 + i as f64, 3.0 + i as f64],
                delay: 5 * i,
            })
            .collect();
        let syn = synthesize(
            &drones,
            NoiseParams {
                sigma2: 0.0,
                seed: 7,
            },
            ADSB_WAVELENGTH_M,
            20,
            2,
        )?;
        let (est, _) = estimate(&syn.window, &vec![1.0; k], 0.0, &EstimatorConfig::default())?;
        let ok = drones.iter().enumerate().all(|(i, d)| {
            (est.ranges_m[i] - d.range_m).abs() <= 1e-6 * d.range_m
                && (0..2).all(|l| (est.phases[l][i] - d.phases[l]).abs() <= 1e-6 * d.phases[l])
        });
        check(
            &format!("noiseless pipeline identity, K={k}"),
            ok,
            &mut failures,
        );
    }
    Ok(failures == 0)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.scenario.trials = trials;
    }
    cfg.validate()?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| adsb_ranging::Error::Config(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = cli.threads;

    match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => Ok(if selftest()? {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        }),
        Command::Sweep => {
            std::fs::create_dir_all(&cli.out)?;
            let res = run_sweep(&cfg.scenario, cfg.seed)?;
            write_outage_csv(&res.report.rows, create(&cli.out, "sweep.csv")?)?;
            write_records_jsonl(&res.records, create(&cli.out, "sweep_trials.jsonl")?)?;
            print_report(&res.report);
            Ok(exit_for(res.report.failure_rate(), cfg.failure_ceiling))
        }
        Command::Msens => {
            std::fs::create_dir_all(&cli.out)?;
            let res = run_m_sensitivity(&cfg.scenario, &cfg.msens, cfg.seed)?;
            write_outage_csv(&res.report.rows, create(&cli.out, "msens.csv")?)?;
            write_records_jsonl(&res.records, create(&cli.out, "msens_trials.jsonl")?)?;
            print_report(&res.report);
            Ok(exit_for(res.report.failure_rate(), cfg.failure_ceiling))
        }
        Command::Track => {
            std::fs::create_dir_all(&cli.out)?;
            let res = run_tracking(&cfg.tracking, &cfg.scenario, cfg.seed)?;
            write_tracking_csv(&res.rows, create(&cli.out, "track.csv")?)?;
            serde_json::to_writer_pretty(create(&cli.out, "track_summary.json")?, &res.summary)?;
            println!(
                "{:>5} {:>14} {:>14} {:>8}",
                "drone", "mse_m2", "median_rel", "failed"
            );
            for s in &res.summary {
                println!(
                    "{:>5} {:>14.3} {:>14.6} {:>8}",
                    s.drone, s.mse_m2, s.median_rel_err, s.failures
                );
            }
            let failed: usize = res.summary.iter().map(|s| s.failures).sum();
            Ok(exit_for(
                failed as f64 / res.rows.len() as f64,
                cfg.failure_ceiling,
            ))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
