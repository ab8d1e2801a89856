//! CSV emission for metric logs and point clouds.
//!
//! Metric CSVs carry a header row and a fixed column order; values are
//! written with Rust's shortest-roundtrip float formatting, so identical
//! runs produce byte-identical files. Point-cloud CSVs are bare float rows,
//! one sample per row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::nn::Tensor;
use crate::trainlog::TrainLog;

pub fn write_metrics_csv(path: &Path, log: &TrainLog) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "{}", log.step_name())?;
    for c in log.columns() {
        write!(w, ",{}", c)?;
    }
    writeln!(w)?;
    for row in log.rows() {
        write!(w, "{}", row.step)?;
        for v in &row.values {
            write!(w, ",{}", v)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_point_cloud_csv(path: &Path, samples: &Tensor) -> Result<()> {
    let (n, _) = samples.as_matrix()?;
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..n {
        let row = samples.row(i);
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                write!(w, ",")?;
            }
            write!(w, "{}", v)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut log = TrainLog::new(vec!["a", "b"]);
        log.push(0, vec![0.5, f64::NAN]).unwrap();
        log.push(10, vec![-1.25, 3.0]).unwrap();
        write_metrics_csv(&path, &log).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "step,a,b\n0,0.5,NaN\n10,-1.25,3\n");
    }

    #[test]
    fn point_cloud_roundtrip_through_dataset_reader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        let t = Tensor::from_rows(&[vec![0.125, -2.0], vec![1e-3, 4.5]]);
        write_point_cloud_csv(&path, &t).unwrap();
        let spec = crate::data::DatasetSpec {
            kind: crate::data::DatasetKind::PointFile,
            n: 1,
            noise: 0.05,
            seed: 0,
            path: Some(path),
        };
        let ds = crate::data::make_dataset(&spec).unwrap();
        assert_eq!(ds.samples, t);
    }
}
