//! CSV and JSON export of run records.
//!
//! CSV holds only the per-iteration rows, with the header
//! `t,loss,grad_norm_sq,adv_grad_norm_sq,eps_norm,d0_diag,oracle_calls`.
//! JSON holds the whole [`RunRecord`], including the echoed configuration.
//! Floats are written in shortest round-trip form, so re-importing gives
//! bit-identical values.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{AmdReport, ExportFormat, RunRecord, RunRow, ValleyReport, CSV_HEADER};

pub fn write_rows_csv<W: Write>(rows: &[RunRow], writer: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(reader: R) -> std::result::Result<Vec<RunRow>, csv::Error> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().collect()
}

pub fn rows_to_csv_string(rows: &[RunRow]) -> String {
    let mut buf = Vec::new();
    write_rows_csv(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `record` to `path` in the given format, creating parent directories.
pub fn export_record(record: &RunRecord, path: &Path, format: ExportFormat) -> Result<()> {
    let mut out = create(path)?;
    match format {
        ExportFormat::Csv => write_rows_csv(&record.rows, &mut out).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?,
        ExportFormat::Json => serde_json::to_writer_pretty(&mut out, record)?,
    }
    out.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn import_rows_csv(path: &Path) -> Result<Vec<RunRow>> {
    read_rows_csv(open(path)?).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn import_record_json(path: &Path) -> Result<RunRecord> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}

/// Writes any serializable report as pretty JSON.
pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn table_to_csv(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory cannot fail");
    for row in rows {
        w.write_record(&row).expect("writing to memory cannot fail");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

/// Valley trajectories as columns `t,sgd,sam,noisy_sam_<seed>...`; shorter
/// runs are padded with empty cells.
pub fn valley_trajectories_csv(report: &ValleyReport) -> String {
    let runs: Vec<_> = [&report.sgd, &report.sam]
        .into_iter()
        .chain(&report.noisy_sam)
        .collect();
    let mut header = vec!["t".to_string(), "sgd".to_string(), "sam".to_string()];
    header.extend(report.noisy_sam.iter().map(|r| format!("noisy_sam_{}", r.seed)));
    let len = runs.iter().map(|r| r.trajectory.len()).max().unwrap_or(0);
    table_to_csv(
        &header,
        (0..len).map(|t| {
            std::iter::once(t.to_string())
                .chain(
                    runs.iter()
                        .map(|r| r.trajectory.get(t).map_or(String::new(), |x| x.to_string())),
                )
                .collect()
        }),
    )
}

/// Per-sample perturbations as columns `sam_0..,infosam_0..`.
pub fn amd_samples_csv(report: &AmdReport) -> String {
    let dim = report.epsilons.first().map_or(0, |s| s.sam.len());
    let header: Vec<String> = (0..dim)
        .map(|i| format!("sam_{i}"))
        .chain((0..dim).map(|i| format!("infosam_{i}")))
        .collect();
    table_to_csv(
        &header,
        report.epsilons.iter().map(|s| {
            s.sam
                .iter()
                .chain(&s.infosam)
                .map(|x| x.to_string())
                .collect()
        }),
    )
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(text: &str, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<RunRow> {
        (0..3)
            .map(|t| RunRow {
                t,
                loss: 0.1 / (t as f64 + 3.0),
                grad_norm_sq: 1e-300 * t as f64,
                adv_grad_norm_sq: std::f64::consts::PI,
                eps_norm: 0.05,
                d0_diag: 1.0,
                oracle_calls: 2 * (t as u64 + 1),
            })
            .collect()
    }

    #[test]
    fn header_and_round_trip() {
        let text = rows_to_csv_string(&rows());
        assert!(text.starts_with("t,loss,grad_norm_sq,adv_grad_norm_sq,eps_norm,d0_diag,oracle_calls\n"));
        let back = read_rows_csv(text.as_bytes()).unwrap();
        assert_eq!(back, rows());
    }

    #[test]
    fn empty_rows_still_have_header() {
        let text = rows_to_csv_string(&[]);
        assert_eq!(text.lines().count(), 1);
    }
}
