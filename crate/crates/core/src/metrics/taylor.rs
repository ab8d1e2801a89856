//! Scaling probe: how fast does the generator's output distribution drift as
//! its parameters move a distance `epsilon` along a fixed direction?
//!
//! For a smooth generator the KL between the original and the perturbed
//! sample cloud grows quadratically in `epsilon` at leading order, so the
//! fitted log-log slope should sit near 2.

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::{kl_histogram, HistogramEstimator};
use crate::nn::{Mlp, ParamVector, Tensor};
use crate::rng::normal_tensor;

#[derive(Debug, Clone)]
pub struct TaylorProbe {
    /// `(epsilon, kl_estimate)` per requested epsilon.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `ln kl` against `ln epsilon`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// False when the KL estimates were too close to zero to fit.
    pub conclusive: bool,
}

/// Estimates `KL(G_theta || G_{theta - eps * direction})` for each epsilon by
/// pushing one shared latent cloud through both parameter settings and
/// comparing histograms, then fits the log-log slope.
///
/// Sharing the latent draws between the two settings removes the sampling
/// noise floor: at `epsilon = 0` the clouds are identical and the estimate is
/// exactly zero.
pub fn taylor_scaling_probe<R: Rng>(
    generator: &Mlp,
    direction: &ParamVector,
    epsilons: &[f64],
    z_sample_count: usize,
    est: &HistogramEstimator,
    rng: &mut R,
) -> Result<TaylorProbe> {
    if epsilons.is_empty() {
        return Err(Error::Contract("need at least one epsilon".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Contract("epsilons must be positive".into()));
    }
    if epsilons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract("epsilons must be strictly increasing".into()));
    }
    if direction.len() != generator.param_count() {
        return Err(Error::Contract(format!(
            "direction length {} does not match generator parameter count {}",
            direction.len(),
            generator.param_count()
        )));
    }
    let norm = direction.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Contract(format!("direction must be unit length, got norm {}", norm)));
    }

    let z = normal_tensor(rng, &[z_sample_count, generator.in_dim()]);
    let base = generator.forward(&z)?;

    let mut points = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut perturbed = generator.clone();
        for (w, d) in perturbed.params_mut().values_mut().iter_mut().zip(direction.values()) {
            *w -= eps * d;
        }
        let moved = perturbed.forward(&z)?;
        let kl = kl_histogram(&base, &moved, est)?;
        points.push((eps, kl));
    }

    let conclusive = points.iter().all(|&(_, kl)| kl > 1e-12);
    if !conclusive {
        return Ok(TaylorProbe { points, slope: f64::NAN, intercept: f64::NAN, r_squared: f64::NAN, conclusive });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(TaylorProbe { points, slope, intercept, r_squared, conclusive })
}

/// A random unit vector in the parameter space of `net`.
pub fn random_unit_direction<R: Rng>(net: &Mlp, rng: &mut R) -> ParamVector {
    let mut values = crate::rng::normal_vec(rng, net.param_count());
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    net.params().with_values(values).unwrap()
}

/// Zero-perturbation sanity value: the probe's estimator applied to two
/// identical clouds, which must be exactly zero.
pub fn zero_perturbation_kl(generator: &Mlp, z: &Tensor, est: &HistogramEstimator) -> Result<f64> {
    let out = generator.forward(z)?;
    kl_histogram(&out, &out, est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::rng::{stream, Stream};

    #[test]
    fn zero_epsilon_limit_is_exactly_zero() {
        let mut rng = stream(21, Stream::Probe);
        let net = Mlp::new(&[2, 16, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let z = normal_tensor(&mut rng, &[500, 2]);
        let est = HistogramEstimator::uniform(2, -3.0, 3.0, 20, 0.5).unwrap();
        assert_eq!(zero_perturbation_kl(&net, &z, &est).unwrap(), 0.0);
    }

    #[test]
    fn contracts_on_inputs() {
        let mut rng = stream(22, Stream::Probe);
        let net = Mlp::new(&[2, 8, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let dir = random_unit_direction(&net, &mut rng);
        let est = HistogramEstimator::uniform(2, -3.0, 3.0, 16, 0.5).unwrap();
        assert!(taylor_scaling_probe(&net, &dir, &[], 100, &est, &mut rng).is_err());
        assert!(taylor_scaling_probe(&net, &dir, &[0.02, 0.01], 100, &est, &mut rng).is_err());
        assert!(taylor_scaling_probe(&net, &dir, &[-0.01, 0.02], 100, &est, &mut rng).is_err());
        let bad_dir = net.params().with_values(vec![2.0; net.param_count()]).unwrap();
        assert!(taylor_scaling_probe(&net, &bad_dir, &[0.01], 100, &est, &mut rng).is_err());
    }

    #[test]
    fn direction_helper_returns_unit_vector() {
        let mut rng = stream(23, Stream::Probe);
        let net = Mlp::new(&[2, 8, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let dir = random_unit_direction(&net, &mut rng);
        let norm: f64 = dir.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
