//! Flat CSV files for per-cell results and per-(method, ε, N) aggregates.

use std::io::{Read, Write};

use super::{AggregateRow, SweepRow};
use crate::error::{Error, Result};

pub const RESULTS_COLUMNS: [&str; 9] = [
    "method",
    "seed",
    "epsilon",
    "N",
    "x_star",
    "oos_mean",
    "oos_var",
    "solve_seconds",
    "status",
];

pub const AGGREGATE_COLUMNS: [&str; 5] = ["method", "epsilon", "N", "m", "v"];

pub fn write_results_csv<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(RESULTS_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(writer: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(AGGREGATE_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Input(format!(
            "unexpected CSV header {:?}; expected {:?}",
            header.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    Ok(())
}

pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(reader);
    check_header(&mut r, &RESULTS_COLUMNS)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_aggregate_csv<R: Read>(reader: R) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_reader(reader);
    check_header(&mut r, &AGGREGATE_COLUMNS)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
