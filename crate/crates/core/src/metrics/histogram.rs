//! Histogram KL estimation between sample clouds.

use crate::error::{Error, Result};
use crate::metrics::kl_discrete;
use crate::nn::Tensor;

/// Fixed binning over an axis-aligned box, with pseudo-count smoothing so the
/// resulting distribution has full support. Transparent and deterministic;
/// adequate in low dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramEstimator {
    lo: Vec<f64>,
    hi: Vec<f64>,
    bins: Vec<usize>,
    pseudo_count: f64,
}

impl HistogramEstimator {
    pub fn new(bounds: &[(f64, f64)], bins: &[usize], pseudo_count: f64) -> Result<HistogramEstimator> {
        if bounds.is_empty() || bounds.len() != bins.len() {
            return Err(Error::Contract(format!(
                "{} bounds vs {} bin counts",
                bounds.len(),
                bins.len()
            )));
        }
        if bins.iter().any(|&b| b < 2) {
            return Err(Error::Contract("need at least 2 bins per dimension".into()));
        }
        if !(pseudo_count > 0.0) {
            return Err(Error::Contract("pseudo-count must be positive".into()));
        }
        for &(lo, hi) in bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Contract(format!("bad bound ({}, {})", lo, hi)));
            }
        }
        Ok(HistogramEstimator {
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
            bins: bins.to_vec(),
            pseudo_count,
        })
    }

    /// Same bounds and bin count in every one of `d` dimensions.
    pub fn uniform(d: usize, lo: f64, hi: f64, bins: usize, pseudo_count: f64) -> Result<HistogramEstimator> {
        HistogramEstimator::new(&vec![(lo, hi); d], &vec![bins; d], pseudo_count)
    }

    pub fn dim(&self) -> usize {
        self.bins.len()
    }

    pub fn cell_count(&self) -> usize {
        self.bins.iter().product()
    }

    /// Flat cell index; out-of-bounds coordinates clip to the edge bins.
    fn cell_of(&self, x: &[f64]) -> (usize, bool) {
        let mut idx = 0;
        let mut clipped = false;
        for i in 0..self.dim() {
            let w = (self.hi[i] - self.lo[i]) / self.bins[i] as f64;
            let mut b = ((x[i] - self.lo[i]) / w).floor() as isize;
            if b < 0 {
                b = 0;
                clipped = true;
            }
            if b >= self.bins[i] as isize {
                b = self.bins[i] as isize - 1;
                if x[i] > self.hi[i] {
                    clipped = true;
                }
            }
            idx = idx * self.bins[i] + b as usize;
        }
        (idx, clipped)
    }

    /// Smoothed, normalized cell probabilities for a sample cloud.
    pub fn smoothed_hist(&self, samples: &Tensor) -> Result<Vec<f64>> {
        let (n, d) = samples.as_matrix()?;
        if n == 0 {
            return Err(Error::Contract("empty sample set".into()));
        }
        if d != self.dim() {
            return Err(Error::Dimension(format!(
                "samples have {} columns, estimator expects {}",
                d,
                self.dim()
            )));
        }
        let cells = self.cell_count();
        let mut counts = vec![0.0f64; cells];
        let mut clipped = 0usize;
        for r in 0..n {
            let (c, was_clipped) = self.cell_of(samples.row(r));
            counts[c] += 1.0;
            if was_clipped {
                clipped += 1;
            }
        }
        if clipped > 0 {
            log::warn!("histogram: {} of {} samples outside bounds were clipped to edge bins", clipped, n);
        }
        let total = n as f64 + self.pseudo_count * cells as f64;
        Ok(counts.into_iter().map(|c| (c + self.pseudo_count) / total).collect())
    }
}

/// KL between the smoothed histograms of two sample clouds. Smoothing
/// guarantees full support, so this cannot fail on valid shapes.
pub fn kl_histogram(samples_p: &Tensor, samples_q: &Tensor, est: &HistogramEstimator) -> Result<f64> {
    let p = est.smoothed_hist(samples_p)?;
    let q = est.smoothed_hist(samples_q)?;
    kl_discrete(&p, &q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, stream, Stream};

    #[test]
    fn identical_sample_sets_have_zero_kl() {
        let mut rng = stream(3, Stream::Data);
        let rows: Vec<Vec<f64>> = (0..500).map(|_| normal_vec(&mut rng, 2)).collect();
        let t = Tensor::from_rows(&rows);
        let est = HistogramEstimator::uniform(2, -5.0, 5.0, 20, 0.5).unwrap();
        let kl = kl_histogram(&t, &t, &est).unwrap();
        assert!(kl.abs() <= 1e-10);
    }

    #[test]
    fn unit_mean_shift_estimates_half() {
        // KL(N(0,1) || N(1,1)) = 0.5 exactly
        let mut rng = stream(4, Stream::Data);
        let n = 100_000;
        let a = Tensor::new(vec![n, 1], normal_vec(&mut rng, n));
        let b = Tensor::new(vec![n, 1], normal_vec(&mut rng, n).into_iter().map(|v| v + 1.0).collect());
        let est = HistogramEstimator::new(&[(-6.0, 7.0)], &[100], 0.5).unwrap();
        let kl = kl_histogram(&a, &b, &est).unwrap();
        assert!((kl - 0.5).abs() < 0.1, "estimate {} not within 0.5 +/- 0.1", kl);
    }

    #[test]
    fn estimator_is_deterministic() {
        let mut rng = stream(5, Stream::Data);
        let a = Tensor::new(vec![200, 1], normal_vec(&mut rng, 200));
        let b = Tensor::new(vec![200, 1], normal_vec(&mut rng, 200));
        let est = HistogramEstimator::new(&[(-4.0, 4.0)], &[32], 0.5).unwrap();
        let k1 = kl_histogram(&a, &b, &est).unwrap();
        let k2 = kl_histogram(&a, &b, &est).unwrap();
        assert_eq!(k1.to_bits(), k2.to_bits());
    }

    #[test]
    fn out_of_bounds_samples_clip_not_crash() {
        let t = Tensor::from_rows(&[vec![100.0], vec![-100.0], vec![0.0]]);
        let est = HistogramEstimator::new(&[(-1.0, 1.0)], &[4], 0.5).unwrap();
        let h = est.smoothed_hist(&t).unwrap();
        let sum: f64 = h.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constructor_contracts() {
        assert!(HistogramEstimator::uniform(2, -1.0, 1.0, 1, 0.5).is_err());
        assert!(HistogramEstimator::uniform(2, -1.0, 1.0, 4, 0.0).is_err());
        assert!(HistogramEstimator::uniform(2, 1.0, -1.0, 4, 0.5).is_err());
        assert!(HistogramEstimator::new(&[(-1.0, 1.0)], &[4, 4], 0.5).is_err());
    }
}
