//! Synthetic dataset generators and file-backed datasets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dist::GmmModel;
use crate::error::{Error, Result};
use crate::metrics::ModeSpec;
use crate::nn::Tensor;
use crate::rng::{stream, Stream};

pub const DEFAULT_NOISE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Ring8,
    Grid25,
    Spiral,
    GmmFile,
    PointFile,
}

/// What to sample, how much of it, how noisy, and from which seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Backing file for `gmm-file` / `point-file` kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, n: usize, noise: f64, seed: u64) -> DatasetSpec {
        DatasetSpec { kind, n, noise, seed, path: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("dataset size must be >= 1".into()));
        }
        match self.kind {
            DatasetKind::GmmFile | DatasetKind::PointFile => {
                if self.path.is_none() {
                    return Err(Error::Config(format!("{:?} dataset needs a path", self.kind)));
                }
            }
            _ => {
                if !(self.noise > 0.0) {
                    return Err(Error::Config("noise scale must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Sample matrix plus the generating mixture where one exists.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Tensor,
    pub truth: Option<GmmModel>,
}

impl Dataset {
    /// Mode spec from the ground-truth mixture: centers at the component
    /// means, capture radius three times the mean component sigma.
    pub fn mode_spec(&self) -> Option<ModeSpec> {
        let truth = self.truth.as_ref()?;
        let mean_sigma = truth
            .log_vars()
            .iter()
            .flat_map(|lv| lv.iter().map(|v| (0.5 * v).exp()))
            .sum::<f64>()
            / (truth.k() * truth.dim()) as f64;
        Some(ModeSpec::new(truth.means().to_vec(), 3.0 * mean_sigma))
    }

    /// Axis-aligned bounding box of the samples, padded on each side.
    pub fn bounds(&self, pad: f64) -> Vec<(f64, f64)> {
        let (n, d) = self.samples.as_matrix().expect("dataset samples are a matrix");
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        for r in 0..n {
            for (c, &v) in self.samples.row(r).iter().enumerate() {
                out[c].0 = out[c].0.min(v);
                out[c].1 = out[c].1.max(v);
            }
        }
        out.iter().map(|&(lo, hi)| (lo - pad, hi + pad)).collect()
    }
}

/// Eight equal Gaussians, means equally spaced on the unit circle.
pub fn ring8_model(noise: f64) -> GmmModel {
    let k = 8;
    let mut means = Vec::with_capacity(k);
    for i in 0..k {
        let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
        means.push(vec![a.cos(), a.sin()]);
    }
    let lv = vec![vec![2.0 * noise.ln(); 2]; k];
    GmmModel::new(vec![1.0 / k as f64; k], means, lv).unwrap()
}

/// 5x5 grid of equal Gaussians, unit spacing, centered at the origin.
pub fn grid25_model(noise: f64) -> GmmModel {
    let mut means = Vec::with_capacity(25);
    for i in -2..=2 {
        for j in -2..=2 {
            means.push(vec![i as f64, j as f64]);
        }
    }
    let lv = vec![vec![2.0 * noise.ln(); 2]; 25];
    GmmModel::new(vec![0.04; 25], means, lv).unwrap()
}

/// Builds the dataset described by `spec`, deterministically per seed.
pub fn make_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Stream::Data);
    match spec.kind {
        DatasetKind::Ring8 => {
            let truth = ring8_model(spec.noise);
            let (samples, _) = truth.sample_n(spec.n, &mut rng);
            Ok(Dataset { samples, truth: Some(truth) })
        }
        DatasetKind::Grid25 => {
            let truth = grid25_model(spec.noise);
            let (samples, _) = truth.sample_n(spec.n, &mut rng);
            Ok(Dataset { samples, truth: Some(truth) })
        }
        DatasetKind::Spiral => {
            use rand::Rng;
            use rand_distr::StandardNormal;
            // Archimedean arc from half a turn to one-and-a-quarter turns,
            // radius growing to 2, plus isotropic noise.
            let mut data = Vec::with_capacity(spec.n * 2);
            let a = 0.8 / std::f64::consts::PI;
            for _ in 0..spec.n {
                let t: f64 = rng.gen_range(0.5 * std::f64::consts::PI..2.5 * std::f64::consts::PI);
                let ex: f64 = rng.sample(StandardNormal);
                let ey: f64 = rng.sample(StandardNormal);
                data.push(a * t * t.cos() + spec.noise * ex);
                data.push(a * t * t.sin() + spec.noise * ey);
            }
            Ok(Dataset { samples: Tensor::new(vec![spec.n, 2], data), truth: None })
        }
        DatasetKind::GmmFile => {
            let path = spec.path.as_ref().unwrap();
            let truth = GmmModel::load(path)
                .map_err(|e| Error::Config(format!("cannot read gmm file {}: {}", path.display(), e)))?;
            let (samples, _) = truth.sample_n(spec.n, &mut rng);
            Ok(Dataset { samples, truth: Some(truth) })
        }
        DatasetKind::PointFile => {
            let path = spec.path.as_ref().unwrap();
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read point file {}: {}", path.display(), e)))?;
            let mut rows = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let row: std::result::Result<Vec<f64>, _> =
                    line.split(',').map(|f| f.trim().parse::<f64>()).collect();
                let row = row.map_err(|e| {
                    Error::Config(format!("{}:{}: bad float: {}", path.display(), lineno + 1, e))
                })?;
                rows.push(row);
            }
            if rows.is_empty() {
                return Err(Error::Config(format!("{} holds no samples", path.display())));
            }
            let d = rows[0].len();
            if rows.iter().any(|r| r.len() != d) {
                return Err(Error::Config(format!("{} has ragged rows", path.display())));
            }
            Ok(Dataset { samples: Tensor::from_rows(&rows), truth: None })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring8_component_counts_concentrate() {
        let spec = DatasetSpec::new(DatasetKind::Ring8, 8000, 0.05, 7);
        let d = make_dataset(&spec).unwrap();
        let truth = d.truth.as_ref().unwrap();
        // count samples nearest each center; at sigma = 0.05 and unit ring the
        // assignment is essentially exact
        let mut counts = vec![0usize; 8];
        let (n, _) = d.samples.as_matrix().unwrap();
        for i in 0..n {
            let x = d.samples.row(i);
            let (best, _) = truth
                .means()
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let d2: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                    (k, d2)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            counts[best] += 1;
        }
        let bound = 3.0 * (1000.0f64 * 7.0 / 8.0).sqrt();
        for (k, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - 1000.0).abs() <= bound,
                "component {} drew {} samples (expected 1000 +/- {:.0})",
                k,
                c,
                bound
            );
        }
    }

    #[test]
    fn grid25_truth_has_uniform_weights() {
        let m = grid25_model(0.05);
        assert_eq!(m.k(), 25);
        assert!(m.weights().iter().all(|&w| w == 0.04));
    }

    #[test]
    fn same_seed_reproduces_exactly() {
        let spec = DatasetSpec::new(DatasetKind::Spiral, 500, 0.05, 99);
        let a = make_dataset(&spec).unwrap();
        let b = make_dataset(&spec).unwrap();
        assert_eq!(a.samples, b.samples);
        let spec2 = DatasetSpec::new(DatasetKind::Ring8, 500, 0.05, 99);
        let c = make_dataset(&spec2).unwrap();
        let d = make_dataset(&spec2).unwrap();
        assert_eq!(c.samples, d.samples);
    }

    #[test]
    fn config_errors() {
        let mut spec = DatasetSpec::new(DatasetKind::Ring8, 0, 0.05, 1);
        assert!(matches!(make_dataset(&spec), Err(Error::Config(_))));
        spec.n = 10;
        spec.noise = 0.0;
        assert!(matches!(make_dataset(&spec), Err(Error::Config(_))));
        let gf = DatasetSpec { kind: DatasetKind::GmmFile, n: 10, noise: 0.05, seed: 0, path: None };
        assert!(matches!(make_dataset(&gf), Err(Error::Config(_))));
        let missing = DatasetSpec {
            kind: DatasetKind::PointFile,
            n: 10,
            noise: 0.05,
            seed: 0,
            path: Some("/nonexistent/file.csv".into()),
        };
        assert!(matches!(make_dataset(&missing), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_kind_rejected_at_parse() {
        let r: std::result::Result<DatasetSpec, _> =
            serde_json::from_str("{\"kind\":\"moons\",\"n\":100}");
        assert!(r.is_err());
    }

    #[test]
    fn mode_spec_radius_tracks_noise() {
        let spec = DatasetSpec::new(DatasetKind::Ring8, 100, 0.05, 1);
        let d = make_dataset(&spec).unwrap();
        let ms = d.mode_spec().unwrap();
        assert_eq!(ms.k(), 8);
        assert!((ms.radius() - 0.15).abs() < 1e-12);
    }
}
