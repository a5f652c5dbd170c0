//! CSV files written for single runs and sweeps. Each file starts with a
//! `# aqmsim <schema> v1` comment line; rates are in Mb/s and every real
//! number has six decimals.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::metrics::sample_std_dev;

use super::{RunReport, SweepRow};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub const SUMMARY_HEADER: [&str; 6] = [
    "flow_id",
    "kind",
    "app",
    "throughput_mbps",
    "goodput_mbps",
    "fair_share_mbps",
];
pub const AGGREGATE_HEADER: [&str; 5] = [
    "discipline",
    "tcp_goodput_mbps",
    "udp_throughput_mbps",
    "fairness",
    "queuing_delay_s",
];
pub const QUEUE_TRACE_HEADER: [&str; 3] = ["t_s", "q_c", "q_a"];
pub const TIMESERIES_HEADER: [&str; 3] = ["t_s", "flow_id", "throughput_mbps"];
pub const SWEEP_HEADER: [&str; 12] = [
    "preset",
    "point",
    "discipline",
    "seed",
    "tcp_throughput_mbps",
    "tcp_goodput_mbps",
    "udp_throughput_mbps",
    "fairness",
    "queuing_delay_s",
    "mean_q_a",
    "sdv_kbps",
    "fair_share_mbps",
];
pub const SWEEP_FLOWS_HEADER: [&str; 9] = [
    "preset",
    "point",
    "discipline",
    "seed",
    "flow_id",
    "kind",
    "app",
    "throughput_mbps",
    "goodput_mbps",
];

fn real(x: f64) -> String {
    format!("{x:.6}")
}

fn mbps(bps: f64) -> String {
    real(bps / 1e6)
}

fn delay(d: Option<f64>) -> String {
    d.map(real).unwrap_or_default()
}

fn write_csv(
    dir: &Path,
    file: &str,
    schema: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<PathBuf, OutputError> {
    let path = dir.join(file);
    let io = |source| OutputError::Io {
        path: path.clone(),
        source,
    };
    let mut out = BufWriter::new(File::create(&path).map_err(io)?);
    writeln!(out, "# aqmsim {schema} v1").map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |source| OutputError::Csv {
        path: path.clone(),
        source,
    };
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    Ok(path)
}

/// Writes summary, aggregate, queue_trace and timeseries CSVs for one run
/// into `dir` (created if missing). Returns the written paths.
pub fn emit_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let summary = report.flows.iter().map(|f| {
        vec![
            f.flow_id.to_string(),
            f.kind.to_string(),
            f.app.to_string(),
            mbps(f.throughput_bps),
            mbps(f.goodput_bps),
            mbps(report.fair_share_bps),
        ]
    });
    let aggregate = [vec![
        report.discipline.to_string(),
        mbps(report.tcp_goodput_bps),
        mbps(report.udp_throughput_bps),
        real(report.fairness),
        delay(report.queuing_delay_s),
    ]];
    let trace = report
        .queue_trace
        .iter()
        .map(|p| vec![real(p.t.as_secs_f64()), p.q_c.to_string(), real(p.q_a)]);
    let series = report.timeseries.iter().enumerate().flat_map(|(i, bins)| {
        bins.iter().enumerate().map(move |(b, &bps)| {
            vec![real(b as f64), (i + 1).to_string(), mbps(bps)]
        })
    });
    Ok(vec![
        write_csv(dir, "summary.csv", "summary", &SUMMARY_HEADER, summary)?,
        write_csv(dir, "aggregate.csv", "aggregate", &AGGREGATE_HEADER, aggregate)?,
        write_csv(dir, "queue_trace.csv", "queue_trace", &QUEUE_TRACE_HEADER, trace)?,
        write_csv(dir, "timeseries.csv", "timeseries", &TIMESERIES_HEADER, series)?,
    ])
}

/// Writes sweep.csv (one row per run) and sweep_flows.csv (one row per
/// flow per run).
pub fn emit_sweep(rows: &[SweepRow], dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let lead = |r: &SweepRow| {
        vec![
            r.preset.name().to_string(),
            r.point.clone(),
            r.discipline.name().to_string(),
            r.seed.to_string(),
        ]
    };
    let runs = rows.iter().map(|r| {
        let rep = &r.report;
        let kbps: Vec<f64> = rep.throughputs().iter().map(|x| x / 1e3).collect();
        let mut row = lead(r);
        row.extend([
            mbps(rep.tcp_throughput_bps),
            mbps(rep.tcp_goodput_bps),
            mbps(rep.udp_throughput_bps),
            real(rep.fairness),
            delay(rep.queuing_delay_s),
            real(rep.mean_avg_queue),
            real(sample_std_dev(&kbps)),
            mbps(rep.fair_share_bps),
        ]);
        row
    });
    let flows = rows.iter().flat_map(|r| {
        r.report.flows.iter().map(move |f| {
            let mut row = lead(r);
            row.extend([
                f.flow_id.to_string(),
                f.kind.to_string(),
                f.app.to_string(),
                mbps(f.throughput_bps),
                mbps(f.goodput_bps),
            ]);
            row
        })
    });
    Ok(vec![
        write_csv(dir, "sweep.csv", "sweep", &SWEEP_HEADER, runs)?,
        write_csv(dir, "sweep_flows.csv", "sweep_flows", &SWEEP_FLOWS_HEADER, flows)?,
    ])
}
