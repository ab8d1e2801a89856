//! Metric records shared by every trainer.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::nn::{ParamVector, Tensor};

/// One evaluation point: a step index, the metric values in column order,
/// and the wall-clock time since the run started. Wall time is never written
/// into metric CSVs (those must be byte-reproducible); it surfaces in run
/// summaries instead.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub values: Vec<f64>,
    pub wall_time_s: f64,
}

/// Append-only metric table with a fixed column schema.
#[derive(Debug, Clone)]
pub struct TrainLog {
    step_name: &'static str,
    columns: Vec<&'static str>,
    rows: Vec<MetricsRecord>,
    started: Instant,
}

impl TrainLog {
    pub fn new(columns: Vec<&'static str>) -> TrainLog {
        TrainLog { step_name: "step", columns, rows: Vec::new(), started: Instant::now() }
    }

    /// Same table with a different name for the step column (EM logs
    /// iterations, not optimizer steps).
    pub fn with_step_name(step_name: &'static str, columns: Vec<&'static str>) -> TrainLog {
        TrainLog { step_name, columns, rows: Vec::new(), started: Instant::now() }
    }

    pub fn step_name(&self) -> &'static str {
        self.step_name
    }

    pub fn columns(&self) -> &[&'static str] {
        &self.columns
    }

    pub fn rows(&self) -> &[MetricsRecord] {
        &self.rows
    }

    pub fn last(&self) -> Option<&MetricsRecord> {
        self.rows.last()
    }

    /// Steps must be strictly increasing within a run.
    pub fn push(&mut self, step: u64, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::Contract(format!(
                "{} values for {} columns",
                values.len(),
                self.columns.len()
            )));
        }
        if let Some(last) = self.rows.last() {
            if step <= last.step {
                return Err(Error::Contract(format!(
                    "step {} not greater than previous step {}",
                    step, last.step
                )));
            }
        }
        self.rows.push(MetricsRecord {
            step,
            values,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    /// Value of a named column in the last row.
    pub fn final_value(&self, column: &str) -> Option<f64> {
        let idx = self.columns.iter().position(|c| *c == column)?;
        Some(self.rows.last()?.values[idx])
    }

    /// All values of a named column.
    pub fn column(&self, column: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| *c == column)?;
        Some(self.rows.iter().map(|r| r.values[idx]).collect())
    }
}

/// Draws a batch of rows (with replacement) from a data matrix.
pub(crate) fn sample_batch<R: rand::Rng>(data: &Tensor, batch: usize, rng: &mut R) -> Tensor {
    let (n, d) = data.as_matrix().expect("batch source must be a matrix");
    let mut out = Vec::with_capacity(batch * d);
    for _ in 0..batch {
        let i = rng.gen_range(0..n);
        out.extend_from_slice(data.row(i));
    }
    Tensor::new(vec![batch, d], out)
}

/// FNV-1a over the parameter bit patterns; used in divergence diagnostics.
pub(crate) fn params_checksum(parts: &[&ParamVector]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for p in parts {
        for v in p.values() {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_enforces_increasing_steps_and_schema() {
        let mut log = TrainLog::new(vec!["a", "b"]);
        log.push(0, vec![1.0, 2.0]).unwrap();
        assert!(log.push(0, vec![1.0, 2.0]).is_err());
        assert!(log.push(5, vec![1.0]).is_err());
        log.push(5, vec![3.0, 4.0]).unwrap();
        assert_eq!(log.final_value("b"), Some(4.0));
        assert_eq!(log.column("a"), Some(vec![1.0, 3.0]));
    }
}
