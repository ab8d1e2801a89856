//! EM for Gaussian mixtures by exact alternating coordinate optimization:
//! the E step solves for the posterior responsibilities in closed form, the
//! M step re-fits weights, means, and diagonal variances from the weighted
//! data. Each (E, M) pair cannot decrease the log-likelihood, and the fit
//! harness records the whole trajectory so that property is checkable.

use serde::{Deserialize, Serialize};

use crate::dist::GmmModel;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    pub k: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Relative log-likelihood improvement below which the fit stops.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_var_floor")]
    pub var_floor: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_iters() -> usize {
    500
}
fn default_rel_tol() -> f64 {
    1e-8
}
fn default_var_floor() -> f64 {
    1e-6
}

impl EmConfig {
    pub fn new(k: usize, seed: u64) -> EmConfig {
        EmConfig { k, max_iters: 500, rel_tol: 1e-8, var_floor: 1e-6, seed }
    }
}

/// Model, responsibilities, and the data they refer to.
#[derive(Debug, Clone)]
pub struct EmState {
    pub model: GmmModel,
    /// `N x K` row-stochastic responsibilities.
    resp: Vec<f64>,
    data: Tensor,
    pub iteration: usize,
    pub loglik_history: Vec<f64>,
    var_floor: f64,
}

impl EmState {
    /// Seeds the model from the data: means by distance-weighted draws from
    /// the data points, uniform weights, variances set to the global
    /// per-dimension variance.
    pub fn init(data: Tensor, cfg: &EmConfig) -> Result<EmState> {
        let (n, d) = data.as_matrix()?;
        if cfg.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if n < cfg.k {
            return Err(Error::Config(format!("{} points cannot support {} components", n, cfg.k)));
        }
        let mut rng = stream(cfg.seed, Stream::Init);

        // global variance, floored
        let mut gmean = vec![0.0; d];
        for r in 0..n {
            for (c, &v) in data.row(r).iter().enumerate() {
                gmean[c] += v;
            }
        }
        for v in &mut gmean {
            *v /= n as f64;
        }
        let mut gvar = vec![0.0; d];
        for r in 0..n {
            for (c, &v) in data.row(r).iter().enumerate() {
                gvar[c] += (v - gmean[c]) * (v - gmean[c]);
            }
        }
        for v in &mut gvar {
            *v = (*v / n as f64).max(cfg.var_floor);
        }

        // distance-weighted seeding of means from data points
        use rand::Rng;
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(cfg.k);
        means.push(data.row(rng.gen_range(0..n)).to_vec());
        let mut d2 = vec![f64::INFINITY; n];
        while means.len() < cfg.k {
            let last = means.last().unwrap();
            let mut total = 0.0;
            for r in 0..n {
                let dist: f64 = data.row(r).iter().zip(last).map(|(a, b)| (a - b) * (a - b)).sum();
                d2[r] = d2[r].min(dist);
                total += d2[r];
            }
            let pick = if total > 0.0 {
                let mut t = rng.gen_range(0.0..total);
                let mut chosen = n - 1;
                for r in 0..n {
                    if t < d2[r] {
                        chosen = r;
                        break;
                    }
                    t -= d2[r];
                }
                chosen
            } else {
                rng.gen_range(0..n)
            };
            means.push(data.row(pick).to_vec());
        }

        let log_vars = vec![gvar.iter().map(|&v| v.ln()).collect::<Vec<f64>>(); cfg.k];
        let model = GmmModel::new(vec![1.0 / cfg.k as f64; cfg.k], means, log_vars)?;
        Ok(EmState {
            model,
            resp: vec![0.0; n * cfg.k],
            data,
            iteration: 0,
            loglik_history: Vec::new(),
            var_floor: cfg.var_floor,
        })
    }

    pub fn n(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn k(&self) -> usize {
        self.model.k()
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    /// Responsibility row for data point `i`.
    pub fn responsibilities(&self, i: usize) -> &[f64] {
        &self.resp[i * self.k()..(i + 1) * self.k()]
    }

    /// Overrides the responsibility matrix (for driving the M step directly).
    pub fn set_responsibilities(&mut self, resp: Vec<f64>) -> Result<()> {
        if resp.len() != self.n() * self.k() {
            return Err(Error::Contract(format!(
                "responsibility matrix of {} entries does not fit {}x{}",
                resp.len(),
                self.n(),
                self.k()
            )));
        }
        self.resp = resp;
        Ok(())
    }
}

/// Posterior responsibilities under the current model, in log space:
/// `r[n,k] = w_k N_k(x_n) / sum_j w_j N_j(x_n)`. Returns the data
/// log-likelihood of the current model as a by-product.
pub fn e_step(state: &mut EmState) -> Result<f64> {
    let (n, k) = (state.n(), state.k());
    let mut loglik = 0.0;
    let mut terms = vec![0.0f64; k];
    for i in 0..n {
        let x = state.data.row(i).to_vec();
        for (j, t) in terms.iter_mut().enumerate() {
            let w = state.model.weights()[j];
            *t = if w == 0.0 {
                f64::NEG_INFINITY
            } else {
                w.ln() + state.model.component_log_pdf(j, &x)
            };
        }
        let z = crate::dist::log_sum_exp_slice(&terms);
        if !z.is_finite() {
            return Err(Error::DegeneratePoint { index: i });
        }
        loglik += z;
        for j in 0..k {
            state.resp[i * k + j] = (terms[j] - z).exp();
        }
        debug_assert!({
            let s: f64 = state.resp[i * k..(i + 1) * k].iter().sum();
            (s - 1.0).abs() < 1e-10
        });
    }
    Ok(loglik)
}

/// Re-fits the mixture from the current responsibilities: weights from the
/// responsibility mass, means and (floored) diagonal variances from the
/// weighted moments. An empty component is re-seeded at the data point the
/// model currently explains worst.
pub fn m_step(state: &mut EmState) -> Result<()> {
    let (n, k, d) = (state.n(), state.k(), state.dim());
    let mut weights = vec![0.0; k];
    let mut means = vec![vec![0.0; d]; k];
    let mut vars = vec![vec![0.0; d]; k];
    let mut mass = vec![0.0; k];

    for i in 0..n {
        let x = state.data.row(i);
        for j in 0..k {
            let r = state.resp[i * k + j];
            mass[j] += r;
            for c in 0..d {
                means[j][c] += r * x[c];
            }
        }
    }

    let mut reseed = Vec::new();
    for j in 0..k {
        if mass[j] < 1e-12 {
            reseed.push(j);
            continue;
        }
        for c in 0..d {
            means[j][c] /= mass[j];
        }
        weights[j] = mass[j] / n as f64;
    }

    for i in 0..n {
        let x = state.data.row(i);
        for j in 0..k {
            if mass[j] < 1e-12 {
                continue;
            }
            let r = state.resp[i * k + j];
            for c in 0..d {
                let dv = x[c] - means[j][c];
                vars[j][c] += r * dv * dv;
            }
        }
    }
    for j in 0..k {
        if mass[j] < 1e-12 {
            continue;
        }
        for c in 0..d {
            vars[j][c] = (vars[j][c] / mass[j]).max(state.var_floor);
        }
    }

    if !reseed.is_empty() {
        // re-seed at the points with lowest current model density
        let mut scored: Vec<(usize, f64)> =
            (0..n).map(|i| (i, state.model.log_pdf(state.data.row(i)))).collect();
        scored.sort_by(|a, b| a.1.total_cmp(&b.1));
        let gvar: Vec<f64> = {
            // global variance fallback for the re-seeded component
            let mut gm = vec![0.0; d];
            for i in 0..n {
                for (c, &v) in state.data.row(i).iter().enumerate() {
                    gm[c] += v;
                }
            }
            for v in &mut gm {
                *v /= n as f64;
            }
            let mut gv = vec![0.0; d];
            for i in 0..n {
                for (c, &v) in state.data.row(i).iter().enumerate() {
                    gv[c] += (v - gm[c]) * (v - gm[c]);
                }
            }
            gv.iter().map(|&v| (v / n as f64).max(state.var_floor)).collect()
        };
        for (slot, &j) in reseed.iter().enumerate() {
            let (pt, _) = scored[slot.min(n - 1)];
            log::warn!("m_step: component {} lost all mass; re-seeding at point {}", j, pt);
            means[j] = state.data.row(pt).to_vec();
            vars[j] = gvar.clone();
            weights[j] = 1.0 / n as f64;
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
    }

    // close the simplex exactly
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[0] += drift;

    let log_vars = vars.iter().map(|row| row.iter().map(|&v| v.ln()).collect()).collect();
    state.model = GmmModel::new(weights, means, log_vars)?;
    Ok(())
}

/// Outcome of [`em_fit`].
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    pub loglik_history: Vec<f64>,
    pub iterations: usize,
}

/// Alternates E and M steps until the relative log-likelihood improvement
/// drops below `rel_tol` or `max_iters` is reached. The recorded history is
/// the model log-likelihood before each M step, so it is non-decreasing up
/// to floating-point slack.
pub fn em_fit(data: &Tensor, cfg: &EmConfig) -> Result<EmFit> {
    let mut state = EmState::init(data.clone(), cfg)?;
    let mut prev: Option<f64> = None;
    for _ in 0..cfg.max_iters {
        let ll = e_step(&mut state)?;
        state.loglik_history.push(ll);
        if let Some(p) = prev {
            let improvement = (ll - p).abs() / p.abs().max(1e-12);
            if improvement < cfg.rel_tol {
                break;
            }
        }
        prev = Some(ll);
        m_step(&mut state)?;
        state.iteration += 1;
    }
    if state.loglik_history.is_empty() {
        // zero-iteration call: report the initialization's likelihood
        let ll = e_step(&mut state)?;
        state.loglik_history.push(ll);
    }
    Ok(EmFit { model: state.model, loglik_history: state.loglik_history, iterations: state.iteration })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_dataset, DatasetKind, DatasetSpec};
    use rand::Rng;

    fn three_blob_data(seed: u64, n: usize) -> (Tensor, Vec<Vec<f64>>) {
        let centers = vec![vec![0.0, 0.0], vec![8.0, 0.0], vec![0.0, 8.0]];
        let truth = GmmModel::new(
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0],
            centers.clone(),
            vec![vec![0.0, 0.0]; 3],
        )
        .unwrap();
        let mut rng = stream(seed, Stream::Data);
        let (samples, _) = truth.sample_n(n, &mut rng);
        (samples, centers)
    }

    #[test]
    fn single_component_responsibilities_are_one() {
        let (data, _) = three_blob_data(1, 50);
        let cfg = EmConfig::new(1, 1);
        let mut state = EmState::init(data, &cfg).unwrap();
        e_step(&mut state).unwrap();
        for i in 0..state.n() {
            assert_eq!(state.responsibilities(i), &[1.0]);
        }
    }

    #[test]
    fn symmetric_point_splits_evenly() {
        let model = GmmModel::new(
            vec![0.5, 0.5],
            vec![vec![-1.0], vec![1.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        let cfg = EmConfig::new(2, 0);
        let mut state = EmState::init(Tensor::from_rows(&[vec![0.0], vec![5.0]]), &cfg).unwrap();
        state.model = model;
        e_step(&mut state).unwrap();
        let r = state.responsibilities(0);
        assert!((r[0] - 0.5).abs() < 1e-12);
        assert!((r[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn e_step_matches_bayes_rule_oracle() {
        let mut rng = stream(33, Stream::Probe);
        let k = 3;
        let d = 2;
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let t: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / t).collect();
        let drift = 1.0 - weights.iter().sum::<f64>();
        weights[0] += drift;
        let means: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let log_vars: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect()).collect();
        let model = GmmModel::new(weights.clone(), means.clone(), log_vars.clone()).unwrap();

        let rows: Vec<Vec<f64>> = (0..10).map(|_| (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect()).collect();
        let cfg = EmConfig::new(k, 0);
        let mut state = EmState::init(Tensor::from_rows(&rows), &cfg).unwrap();
        state.model = model;
        e_step(&mut state).unwrap();

        for (i, x) in rows.iter().enumerate() {
            // naive density-ratio oracle in linear space
            let dens: Vec<f64> = (0..k)
                .map(|j| {
                    let mut lp = 0.0;
                    for c in 0..d {
                        let lv = log_vars[j][c];
                        let diff = x[c] - means[j][c];
                        lp += -0.5 * ((2.0 * std::f64::consts::PI).ln() + lv + diff * diff / lv.exp());
                    }
                    weights[j] * lp.exp()
                })
                .collect();
            let total: f64 = dens.iter().sum();
            for j in 0..k {
                assert!(
                    (state.responsibilities(i)[j] - dens[j] / total).abs() < 1e-12,
                    "point {} component {}",
                    i,
                    j
                );
            }
        }
    }

    #[test]
    fn e_step_is_idempotent_for_fixed_model() {
        let (data, _) = three_blob_data(5, 120);
        let cfg = EmConfig::new(3, 5);
        let mut state = EmState::init(data, &cfg).unwrap();
        e_step(&mut state).unwrap();
        let first = state.resp.clone();
        e_step(&mut state).unwrap();
        assert_eq!(state.resp, first);
    }

    #[test]
    fn degenerate_point_is_an_error() {
        let cfg = EmConfig::new(1, 0);
        let mut state =
            EmState::init(Tensor::from_rows(&[vec![0.0], vec![1.0]]), &cfg).unwrap();
        state.data = Tensor::from_rows(&[vec![1e200], vec![0.0]]);
        assert!(matches!(e_step(&mut state), Err(Error::DegeneratePoint { index: 0 })));
    }

    #[test]
    fn m_step_single_component_gives_sample_moments() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 4.0]];
        let cfg = EmConfig::new(1, 0);
        let mut state = EmState::init(Tensor::from_rows(&rows), &cfg).unwrap();
        state.set_responsibilities(vec![1.0, 1.0, 1.0]).unwrap();
        m_step(&mut state).unwrap();
        assert_eq!(state.model.means()[0], vec![3.0, 4.0]);
        let var0 = ((1.0f64 - 3.0).powi(2) + (3.0f64 - 3.0).powi(2) + (5.0f64 - 3.0).powi(2)) / 3.0;
        assert!((state.model.log_vars()[0][0].exp() - var0).abs() < 1e-12);
    }

    #[test]
    fn m_step_one_hot_recovers_cluster_statistics() {
        let (data, centers) = three_blob_data(6, 300);
        let truth = GmmModel::new(
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0],
            centers.clone(),
            vec![vec![0.0, 0.0]; 3],
        )
        .unwrap();
        let cfg = EmConfig::new(3, 6);
        let mut state = EmState::init(data.clone(), &cfg).unwrap();

        // one-hot responsibilities by nearest true center
        let n = data.shape()[0];
        let mut resp = vec![0.0; n * 3];
        let mut cluster_sums = vec![vec![0.0; 2]; 3];
        let mut cluster_counts = vec![0usize; 3];
        for i in 0..n {
            let x = data.row(i);
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
            resp[i * 3 + best] = 1.0;
            cluster_counts[best] += 1;
            for c in 0..2 {
                cluster_sums[best][c] += x[c];
            }
        }
        state.set_responsibilities(resp).unwrap();
        m_step(&mut state).unwrap();
        for j in 0..3 {
            for c in 0..2 {
                let direct = cluster_sums[j][c] / cluster_counts[j] as f64;
                assert!((state.model.means()[j][c] - direct).abs() < 1e-10);
            }
            assert!((state.model.weights()[j] - cluster_counts[j] as f64 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn m_step_uniform_responsibilities_collapse_to_global_stats() {
        let (data, _) = three_blob_data(7, 90);
        let cfg = EmConfig::new(3, 7);
        let mut state = EmState::init(data, &cfg).unwrap();
        let n = state.n();
        state.set_responsibilities(vec![1.0 / 3.0; n * 3]).unwrap();
        m_step(&mut state).unwrap();
        for j in 1..3 {
            assert_eq!(state.model.means()[j], state.model.means()[0]);
            assert_eq!(state.model.log_vars()[j], state.model.log_vars()[0]);
        }
    }

    #[test]
    fn fit_recovers_single_gaussian_mean() {
        let truth = GmmModel::single(vec![2.0, -1.0], 1.0);
        let mut rng = stream(8, Stream::Data);
        let n = 2000;
        let (data, _) = truth.sample_n(n, &mut rng);
        let fit = em_fit(&data, &EmConfig::new(1, 8)).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        for c in 0..2 {
            assert!(
                (fit.model.means()[0][c] - truth.means()[0][c]).abs() < bound,
                "mean {} off by more than {}",
                c,
                bound
            );
        }
    }

    #[test]
    fn fit_recovers_separated_components() {
        let (data, centers) = three_blob_data(9, 500);
        let fit = em_fit(&data, &EmConfig::new(3, 9)).unwrap();
        // match each true center to the closest recovered mean
        for c in &centers {
            let best = fit
                .model
                .means()
                .iter()
                .map(|m| {
                    let d2: f64 = m.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    d2.sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.2, "recovered mean {} away from {:?}", best, c);
        }
    }

    #[test]
    fn zero_iteration_fit_returns_initialization() {
        let (data, _) = three_blob_data(10, 60);
        let mut cfg = EmConfig::new(3, 10);
        cfg.max_iters = 0;
        let init = EmState::init(data.clone(), &cfg).unwrap();
        let fit = em_fit(&data, &cfg).unwrap();
        assert_eq!(fit.model, init.model);
        assert_eq!(fit.iterations, 0);
        assert_eq!(fit.loglik_history.len(), 1);
    }

    #[test]
    fn loglik_is_monotone_on_assorted_datasets() {
        for seed in 0..5u64 {
            let spec = DatasetSpec::new(DatasetKind::Ring8, 300, 0.1, seed);
            let data = make_dataset(&spec).unwrap().samples;
            let fit = em_fit(&data, &EmConfig::new(4, seed)).unwrap();
            for w in fit.loglik_history.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-9,
                    "log-likelihood decreased: {} -> {} (seed {})",
                    w[0],
                    w[1],
                    seed
                );
            }
        }
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let (data, _) = three_blob_data(11, 200);
        let a = em_fit(&data, &EmConfig::new(3, 11)).unwrap();
        let b = em_fit(&data, &EmConfig::new(3, 11)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loglik_history, b.loglik_history);
    }
}
