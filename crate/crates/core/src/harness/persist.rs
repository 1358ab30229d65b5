//! JSON-lines trial records and CSV tables for plotting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::sweep::{CellSummary, CriticalSigma};
use crate::harness::trial::{TrialRecord, SCHEMA_VERSION};

pub const CELL_COLUMNS: [&str; 7] = [
    "sigma",
    "n_samples",
    "beta",
    "eta_eff",
    "mean_acc",
    "max_acc",
    "conv_rate",
];

/// Paths written by [`persist`].
#[derive(Debug, Clone, PartialEq)]
pub struct Persisted {
    pub records: PathBuf,
    pub table: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes one record per line.
pub fn write_records(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrialRecord = serde_json::from_str(&line).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if record.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "{}: record schema {} is not {SCHEMA_VERSION}",
                path.display(),
                record.schema_version
            )));
        }
        records.push(record);
    }
    Ok(records)
}

/// Writes the per-cell table; the header is written even with no rows.
pub fn write_cells(cells: &[CellSummary], path: &Path) -> Result<()> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(CELL_COLUMNS).map_err(csv_err)?;
    for c in cells {
        w.write_record([
            c.sigma.to_string(),
            c.n_samples.to_string(),
            c.beta.to_string(),
            c.eta_eff.to_string(),
            c.mean_acc.to_string(),
            c.max_acc.to_string(),
            c.conv_rate.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Critical sigma per sample count; empty cells mean no tested sigma converged.
pub fn write_critical(critical: &[CriticalSigma], path: &Path) -> Result<()> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["n_samples", "critical_sigma"]).map_err(csv_err)?;
    for c in critical {
        w.write_record([
            c.n_samples.to_string(),
            c.sigma.map(|s| s.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<name>.jsonl` and `<name>.csv` under `out_dir`, creating it.
pub fn persist(records: &[TrialRecord], cells: &[CellSummary], out_dir: &Path, name: &str) -> Result<Persisted> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = Persisted {
        records: out_dir.join(format!("{name}.jsonl")),
        table: out_dir.join(format!("{name}.csv")),
    };
    write_records(records, &files.records)?;
    write_cells(cells, &files.table)?;
    Ok(files)
}
