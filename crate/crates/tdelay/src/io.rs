//! CSV ingestion and emission. Plain comma-separated text, no quoting:
//! every artifact is numeric with a fixed column schema.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::embed::{PointCloud, TimeSeries};
use crate::systems::EmpiricalMeasure;
use crate::{Error, Result};

/// Reads a single-column CSV into a time series. With `has_header` the
/// first line is skipped; blank lines are ignored.
pub fn read_series_csv(path: &Path, has_header: bool) -> Result<TimeSeries> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut values = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if lineno == 0 && has_header {
            continue;
        }
        let field = trimmed.split(',').next().unwrap_or("");
        let v: f64 = field.trim().parse().map_err(|_| {
            Error::InvalidInput(format!("line {}: cannot parse '{field}'", lineno + 1))
        })?;
        values.push(v);
    }
    TimeSeries::new(values, path.display().to_string())
}

pub struct CsvWriter {
    out: std::io::BufWriter<std::fs::File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: Option<&[&str]>) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        if let Some(cols) = header {
            writeln!(out, "{}", cols.join(","))?;
        }
        Ok(CsvWriter { out })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn numeric_row(&mut self, fields: &[f64]) -> Result<()> {
        let rendered: Vec<String> = fields.iter().map(|v| format_float(*v)).collect();
        self.row(&rendered)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Shortest round-trip rendering; stable across platforms.
pub fn format_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// Writes one point per row with coordinate-name header c0..c{k-1}.
pub fn write_cloud_csv(path: &Path, cloud: &PointCloud, header: bool) -> Result<()> {
    let names: Vec<String> = (0..cloud.dim()).map(|i| format!("c{i}")).collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut w = CsvWriter::create(path, header.then_some(refs.as_slice()))?;
    for i in 0..cloud.len() {
        w.numeric_row(cloud.point(i))?;
    }
    w.finish()
}

/// Writes atoms with their masses: coordinates then mass.
pub fn write_measure_csv(path: &Path, measure: &EmpiricalMeasure, header: bool) -> Result<()> {
    let mut names: Vec<String> = (0..measure.dim).map(|i| format!("c{i}")).collect();
    names.push("mass".into());
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut w = CsvWriter::create(path, header.then_some(refs.as_slice()))?;
    for i in 0..measure.len() {
        let mut row: Vec<f64> = measure.atom(i).to_vec();
        row.push(measure.mass(i));
        w.numeric_row(&row)?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_roundtrip_with_and_without_header() {
        let dir = std::env::temp_dir().join("tdelay_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("series.csv");
        std::fs::write(&p, "value\n0.5\n1.25\n-3.0\n").unwrap();
        let s = read_series_csv(&p, true).unwrap();
        assert_eq!(s.values(), &[0.5, 1.25, -3.0]);
        std::fs::write(&p, "0.5\n1.25\n").unwrap();
        let s = read_series_csv(&p, false).unwrap();
        assert_eq!(s.values(), &[0.5, 1.25]);
        std::fs::remove_file(&p).unwrap();
    }

    #[test]
    fn bad_field_reports_line() {
        let dir = std::env::temp_dir().join("tdelay_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.csv");
        std::fs::write(&p, "1.0\nnot_a_number\n").unwrap();
        let err = read_series_csv(&p, false).unwrap_err();
        assert!(err.to_string().contains("line 2"));
        std::fs::remove_file(&p).unwrap();
    }

    #[test]
    fn float_formatting_is_roundtrip() {
        for v in [0.1, 1.0, -2.5, 1e-9, 123456.789, 2.0f64.powi(-40)] {
            let s = format_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, v, "{s}");
        }
    }
}
