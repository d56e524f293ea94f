//! CSV output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TRIAL_COLUMNS: [&str; 15] = [
    "method",
    "eps",
    "delta",
    "fs",
    "fl",
    "ft",
    "fb",
    "bound",
    "relaxation",
    "query",
    "density",
    "budget",
    "rel_err_out",
    "rel_err_den",
    "seed",
];

/// One row of a sweep or verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: String,
    pub eps: f64,
    pub delta: f64,
    pub fs: f64,
    pub fl: f64,
    pub ft: f64,
    pub fb: f64,
    pub bound: String,
    pub relaxation: String,
    pub query: usize,
    pub density: f64,
    pub budget: usize,
    pub rel_err_out: f64,
    pub rel_err_den: f64,
    pub seed: u64,
}

/// Writes a header row followed by one row per record.
pub fn emit_csv(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    write_rows(&TRIAL_COLUMNS, records, File::create(path)?)
}

/// Serializes `rows` under an explicit header, so an empty table still
/// carries its column names.
pub fn write_rows<T: Serialize, W: Write>(header: &[&str], rows: &[T], sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(sink);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = vec![];
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: &str) -> TrialRecord {
        TrialRecord {
            method: method.into(),
            eps: 0.1,
            delta: 0.05,
            fs: 0.02,
            fl: 0.02,
            ft: 0.05,
            fb: 0.025,
            bound: "clt".into(),
            relaxation: "den".into(),
            query: 3,
            density: 0.123456789012345,
            budget: 97,
            rel_err_out: 1.0 / 3.0,
            rel_err_den: 2.5e-17,
            seed: u64::MAX,
        }
    }

    #[test]
    fn empty_record_list_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        emit_csv(&[], &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            TRIAL_COLUMNS.join(",") + "\n"
        );
        assert!(read_records(&path).unwrap().is_empty());
    }

    #[test]
    fn round_trip_recovers_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows = vec![record("vattention"), record("needs,\"quoting\"")];
        emit_csv(&rows, &path).unwrap();
        assert_eq!(read_records(&path).unwrap(), rows);
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_csv(&[record("x")], dir.path().join("missing/dir/out.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
