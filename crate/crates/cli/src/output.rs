//! Output sinks, CSV rows and grid parsing.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::CliError;

/// A buffered file, or standard output when no path is given.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Config(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub const EIGENVALUE_HEADER: &str = "sample,index,re,im";

/// Rows of the eigenvalue CSV schema for one sample.
pub fn write_eigen_rows(out: &mut dyn Write, sample: u64, values: &[Complex64]) -> io::Result<()> {
    for (k, z) in values.iter().enumerate() {
        writeln!(out, "{sample},{k},{},{}", fmt_f64(z.re), fmt_f64(z.im))?;
    }
    Ok(())
}

#[derive(Serialize)]
pub struct JsonSample {
    pub sample: u64,
    pub eigenvalues: Vec<[f64; 2]>,
}

impl JsonSample {
    pub fn new(sample: u64, values: &[Complex64]) -> Self {
        Self {
            sample,
            eigenvalues: values.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

pub fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Io(e.into()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Parses `start:stop:count` into `count` evenly spaced points with both
/// endpoints included.
pub fn parse_grid(grid: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("grid must be start:stop:count, got '{grid}'"));
    let parts: Vec<&str> = grid.split(':').collect();
    let [start, stop, count] = parts.as_slice() else {
        return Err(bad());
    };
    let start: f64 = start.trim().parse().map_err(|_| bad())?;
    let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
    let count: usize = count.trim().parse().map_err(|_| bad())?;
    if !(start.is_finite() && stop.is_finite()) || count == 0 || stop < start {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { stop } else { start + step * i as f64 })
        .collect())
}
