//! Artifact writers. Every file is written to a temporary sibling and renamed
//! into place, so readers never observe a partial file.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use reminis::TimeseriesRow;

use crate::error::CliError;

/// One line of `timeseries.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t_s: f64,
    pub flow_id: u32,
    pub throughput_mbps: f64,
    pub rtt_ms_avg: Option<f64>,
    pub queuing_delay_ms_avg: Option<f64>,
    pub cwnd_pkts: Option<f64>,
    pub zone: Option<String>,
    pub guardian_multiplier: Option<f64>,
    pub mu: Option<f64>,
}

impl From<&TimeseriesRow> for CsvRow {
    fn from(r: &TimeseriesRow) -> Self {
        CsvRow {
            t_s: r.t_s,
            flow_id: r.flow_id.0,
            throughput_mbps: r.throughput_mbps,
            rtt_ms_avg: r.rtt_ms_avg,
            queuing_delay_ms_avg: r.queuing_delay_ms_avg,
            cwnd_pkts: r.cwnd_pkts,
            zone: r.zone.map(|z| z.as_str().to_string()),
            guardian_multiplier: r.guardian_multiplier,
            mu: r.mu,
        }
    }
}

/// Writes `path` atomically with the bytes produced by `fill`.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(format!("creating a file in {}", dir.display()), e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for row in rows {
            csv.serialize(row)?;
        }
        csv.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| CliError::io(format!("writing {}", path.display()), e)))
}
