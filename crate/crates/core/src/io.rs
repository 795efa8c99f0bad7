//! CSV and binary export helpers.
//!
//! CSV files carry `#`-prefixed comment lines (units, provenance hash) above a
//! header row. Floats are written with Rust's shortest round-trip formatting,
//! so identical data produces byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::Result;
use crate::evolution::{PolarizationSeries, StateVector};

/// Write a CSV file: comment lines, one header row, then data rows.
pub fn write_csv<P: AsRef<Path>>(
    path: P,
    comments: &[String],
    header: &str,
    rows: impl Iterator<Item = String>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

/// Dense complex matrix as CSV with interleaved re/im columns.
pub fn write_matrix_csv<P: AsRef<Path>>(
    path: P,
    m: &DMatrix<Complex64>,
    comments: &[String],
) -> Result<()> {
    let header: String = (0..m.ncols())
        .flat_map(|j| [format!("re{j}"), format!("im{j}")])
        .collect::<Vec<_>>()
        .join(",");
    let rows = (0..m.nrows()).map(|i| {
        (0..m.ncols())
            .flat_map(|j| [format!("{}", m[(i, j)].re), format!("{}", m[(i, j)].im)])
            .collect::<Vec<_>>()
            .join(",")
    });
    write_csv(path, comments, &header, rows)
}

/// Polarization series as CSV: time column plus one column per group, with
/// optional standard-error columns.
pub fn write_series_csv<P: AsRef<Path>>(
    path: P,
    series: &PolarizationSeries,
    comments: &[String],
) -> Result<()> {
    let mut header = String::from("time_s");
    for l in &series.labels {
        header.push(',');
        header.push_str(l);
    }
    if series.std_err.is_some() {
        for l in &series.labels {
            header.push_str(&format!(",stderr_{l}"));
        }
    }
    let rows = series.times.iter().enumerate().map(|(i, t)| {
        let mut row = format!("{t}");
        for v in &series.values[i] {
            row.push_str(&format!(",{v}"));
        }
        if let Some(se) = &series.std_err {
            for v in &se[i] {
                row.push_str(&format!(",{v}"));
            }
        }
        row
    });
    write_csv(path, comments, &header, rows)
}

/// State snapshot: little-endian f64 pairs (re, im) in basis order.
pub fn write_state_binary<P: AsRef<Path>>(path: P, state: &StateVector) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for a in state.amplitudes() {
        w.write_all(&a.re.to_le_bytes())?;
        w.write_all(&a.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a state snapshot written by [`write_state_binary`].
pub fn read_state_binary<P: AsRef<Path>>(path: P, n_sites: usize) -> Result<StateVector> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let dim = 1usize << n_sites;
    if bytes.len() != dim * 16 {
        return Err(crate::error::Error::InvalidParameter(format!(
            "snapshot has {} bytes, expected {}",
            bytes.len(),
            dim * 16
        )));
    }
    let mut amps = Vec::with_capacity(dim);
    for k in 0..dim {
        let re = f64::from_le_bytes(bytes[16 * k..16 * k + 8].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[16 * k + 8..16 * k + 16].try_into().unwrap());
        amps.push(Complex64::new(re, im));
    }
    StateVector::new(amps, n_sites)
}
