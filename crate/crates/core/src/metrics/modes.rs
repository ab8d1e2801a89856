//! Mode-coverage statistics: the observable proxy for generator collapse on
//! known mixtures.

use crate::nn::Tensor;

/// Known mode centers plus the capture radius around each.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    centers: Vec<Vec<f64>>,
    radius: f64,
}

impl ModeSpec {
    /// Panics on an empty center list or nonpositive radius.
    pub fn new(centers: Vec<Vec<f64>>, radius: f64) -> ModeSpec {
        assert!(!centers.is_empty(), "mode spec needs at least one center");
        assert!(radius > 0.0, "capture radius must be positive");
        let d = centers[0].len();
        assert!(centers.iter().all(|c| c.len() == d), "ragged centers");
        ModeSpec { centers, radius }
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub modes_covered: usize,
    /// Share of samples within the radius of any center.
    pub captured_fraction: f64,
}

/// A mode counts as covered when at least `max(5, 0.1 * N / K)` samples fall
/// within the capture radius of its center.
pub fn mode_coverage(samples: &Tensor, spec: &ModeSpec) -> Coverage {
    let (n, d) = samples.as_matrix().expect("samples must be a matrix");
    assert_eq!(d, spec.centers[0].len(), "sample/center dimension mismatch");
    let r2 = spec.radius * spec.radius;
    let mut hits = vec![0usize; spec.k()];
    let mut captured = 0usize;
    for i in 0..n {
        let x = samples.row(i);
        let mut any = false;
        for (k, c) in spec.centers.iter().enumerate() {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= r2 {
                hits[k] += 1;
                any = true;
            }
        }
        if any {
            captured += 1;
        }
    }
    let min_hits = (0.1 * n as f64 / spec.k() as f64).max(5.0);
    let modes_covered = hits.iter().filter(|&&h| h as f64 >= min_hits).count();
    Coverage { modes_covered, captured_fraction: captured as f64 / n as f64 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ring8_model;
    use crate::rng::{stream, Stream};

    fn ring_spec() -> ModeSpec {
        let m = ring8_model(0.05);
        ModeSpec::new(m.means().to_vec(), 3.0 * 0.05)
    }

    #[test]
    fn samples_at_all_centers_cover_everything() {
        let spec = ring_spec();
        let mut rows = Vec::new();
        for c in spec.centers() {
            for _ in 0..100 {
                rows.push(c.clone());
            }
        }
        let cov = mode_coverage(&Tensor::from_rows(&rows), &spec);
        assert_eq!(cov.modes_covered, 8);
        assert_eq!(cov.captured_fraction, 1.0);
    }

    #[test]
    fn collapse_signature_is_one_mode() {
        let spec = ring_spec();
        let rows = vec![spec.centers()[3].clone(); 800];
        let cov = mode_coverage(&Tensor::from_rows(&rows), &spec);
        assert_eq!(cov.modes_covered, 1);
        assert_eq!(cov.captured_fraction, 1.0);
    }

    #[test]
    fn true_ring_draws_cover_all_modes() {
        let m = ring8_model(0.05);
        let mut rng = stream(12, Stream::Data);
        let (samples, _) = m.sample_n(10_000, &mut rng);
        let cov = mode_coverage(&samples, &ring_spec());
        assert_eq!(cov.modes_covered, 8);
        // 3-sigma capture radius holds ~98.9% of 2-D Gaussian mass
        assert!(cov.captured_fraction >= 0.95, "captured {}", cov.captured_fraction);
    }

    #[test]
    fn permutation_invariance() {
        let m = ring8_model(0.05);
        let mut rng = stream(13, Stream::Data);
        let (samples, _) = m.sample_n(400, &mut rng);
        let spec = ring_spec();
        let cov = mode_coverage(&samples, &spec);

        // reverse the samples
        let rows: Vec<Vec<f64>> = (0..400).rev().map(|i| samples.row(i).to_vec()).collect();
        let cov_rev = mode_coverage(&Tensor::from_rows(&rows), &spec);
        assert_eq!(cov, cov_rev);

        // permute the centers
        let mut centers = spec.centers().to_vec();
        centers.rotate_left(3);
        let spec_rot = ModeSpec::new(centers, spec.radius());
        let cov_rot = mode_coverage(&samples, &spec_rot);
        assert_eq!(cov.modes_covered, cov_rot.modes_covered);
        assert_eq!(cov.captured_fraction, cov_rot.captured_fraction);
    }
}
