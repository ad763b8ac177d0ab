//! CSV and JSON-lines writers.

use std::io::Write;

use serde::Serialize;

use super::sweep::{Metric, OutageRow, TrialRecord};
use super::tracking::TrackRow;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct OutageCsvRow<'a> {
    experiment: &'a str,
    max_delay: usize,
    n_antennas: usize,
    snr_db: f64,
    metric: &'static str,
    alpha: f64,
    success: f64,
    std_err: f64,
    events: usize,
    trials: usize,
    failures: usize,
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Range => "range",
        Metric::PhaseRaw => "phase-raw",
        Metric::PhaseCircular => "phase-circular",
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// One row per `(snr, alpha, metric)` with a header line.
pub fn write_outage_csv<W: Write>(rows: &[OutageRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(OutageCsvRow {
            experiment: &r.experiment,
            max_delay: r.max_delay,
            n_antennas: r.n_antennas,
            snr_db: r.snr_db,
            metric: metric_name(r.metric),
            alpha: r.alpha,
            success: r.success,
            std_err: r.std_err,
            events: r.events,
            trials: r.trials,
            failures: r.failures,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrackCsvRow {
    packet: usize,
    drone: usize,
    range_true_m: f64,
    range_est_m: Option<f64>,
}

/// Empty `range_est_m` marks a packet on which estimation failed.
pub fn write_tracking_csv<W: Write>(rows: &[TrackRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(TrackCsvRow {
            packet: r.packet,
            drone: r.drone,
            range_true_m: r.range_true_m,
            range_est_m: r.range_est_m,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_jsonl<W: Write>(records: &[TrialRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
