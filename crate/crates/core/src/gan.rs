//! GAN with the discriminator loss
//! `-E_data[ln D(x)] - E_gen[ln(1 - D(G(z)))]`, the non-saturating generator
//! loss `-E[ln D(G(z))]`, and the complete generator loss that adds the
//! drift penalty `lambda * E||G(z) - G_old(z)||^2` against a lagged frozen
//! snapshot of the generator.
//!
//! Phase discipline is exact: the discriminator phase stops gradients at the
//! generated samples, and the generator phase binds the discriminator
//! frozen, so each loss carries exactly zero gradient for the other net.

use serde::{Deserialize, Serialize};

use crate::dist::{GmmModel, PROB_CLAMP};
use crate::error::{Error, Result};
use crate::metrics::{kl_histogram, mode_coverage, HistogramEstimator, ModeSpec};
use crate::nn::graph::{Graph, NodeId};
use crate::nn::{snapshot, Mlp, NetSnapshot, OptimSpec, ParamVector, Tensor};
use crate::rng::{normal_tensor, stream, Stream};
use crate::trainlog::{params_checksum, sample_batch, TrainLog};

/// Generator, discriminator, and the frozen old-generator snapshot the
/// regularizer compares against.
#[derive(Debug, Clone)]
pub struct GanModel {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub latent_dim: usize,
    generator_snapshot: Option<NetSnapshot>,
}

impl GanModel {
    pub fn new(generator: Mlp, discriminator: Mlp) -> Result<GanModel> {
        if discriminator.out_dim() != 1 {
            return Err(Error::Contract("discriminator must emit a single logit".into()));
        }
        if discriminator.in_dim() != generator.out_dim() {
            return Err(Error::Contract(format!(
                "discriminator input width {} must match generator output width {}",
                discriminator.in_dim(),
                generator.out_dim()
            )));
        }
        let latent_dim = generator.in_dim();
        Ok(GanModel { generator, discriminator, latent_dim, generator_snapshot: None })
    }

    /// Default desk-scale architecture: tanh generator (smooth outputs),
    /// relu discriminator.
    pub fn new_random<R: rand::Rng>(
        x_dim: usize,
        latent_dim: usize,
        gen_hidden: &[usize],
        disc_hidden: &[usize],
        rng: &mut R,
    ) -> GanModel {
        use crate::nn::Activation;
        let mut gs = vec![latent_dim];
        gs.extend_from_slice(gen_hidden);
        gs.push(x_dim);
        let mut ds = vec![x_dim];
        ds.extend_from_slice(disc_hidden);
        ds.push(1);
        let generator = Mlp::new(&gs, Activation::Tanh, Activation::Identity, rng);
        let discriminator = Mlp::new(&ds, Activation::Relu, Activation::Identity, rng);
        GanModel::new(generator, discriminator).unwrap()
    }

    pub fn snapshot_ref(&self) -> Option<&NetSnapshot> {
        self.generator_snapshot.as_ref()
    }

    /// Freezes the current generator parameters as the "old generator".
    pub fn refresh_snapshot(&mut self) {
        self.generator_snapshot = Some(snapshot(self.generator.params()));
    }

    /// The old generator as a runnable network.
    pub fn old_generator(&self) -> Result<Mlp> {
        let snap = self
            .generator_snapshot
            .as_ref()
            .ok_or_else(|| Error::Contract("generator snapshot missing".into()))?;
        Mlp::with_params(
            self.generator.sizes(),
            self.generator.hidden_activation(),
            self.generator.output_activation(),
            snap.params().clone(),
        )
    }

    /// Generator samples at fresh prior draws.
    pub fn sample<R: rand::Rng>(&self, n: usize, rng: &mut R) -> Tensor {
        let z = normal_tensor(rng, &[n, self.latent_dim]);
        self.generator.forward(&z).expect("generator accepts prior draws")
    }
}

/// `sigmoid` then clamp to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
fn d_prob(g: &mut Graph, logit: NodeId) -> NodeId {
    let p = g.sigmoid(logit);
    g.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Discriminator loss on a real batch and a latent batch:
/// `-2 p1 mean[ln D(x)] - 2 p0 mean[ln(1 - D(G(z)))]`.
/// At `p1 = p0 = 1/2` the class priors scale both terms to weight one.
/// Gradients stop at the generated samples.
pub fn d_loss(model: &GanModel, real: &Tensor, z: &Tensor, p1: f64) -> Result<f64> {
    Ok(d_loss_grad(model, real, z, p1)?.0)
}

/// As [`d_loss`], also returning `(discriminator grad, generator grad)`;
/// the generator gradient is exactly zero by the stop-gradient contract.
pub fn d_loss_grad(
    model: &GanModel,
    real: &Tensor,
    z: &Tensor,
    p1: f64,
) -> Result<(f64, ParamVector, ParamVector)> {
    let (n, dx) = real.as_matrix()?;
    let (m, dz) = z.as_matrix()?;
    if n == 0 || m == 0 {
        return Err(Error::Contract("batches must be non-empty".into()));
    }
    if dx != model.discriminator.in_dim() || dz != model.latent_dim {
        return Err(Error::Dimension("batch widths do not match the model".into()));
    }
    let p0 = 1.0 - p1;
    let mut g = Graph::new();
    let gen = model.generator.bind(&mut g, true);
    let disc = model.discriminator.bind(&mut g, true);

    let xr = g.input(real.clone());
    let logit_r = disc.forward(&mut g, xr);
    let pr = d_prob(&mut g, logit_r);
    let ln_r = g.ln(pr);
    let sum_r = g.sum(ln_r);
    let term_r = g.scale(sum_r, -2.0 * p1 / n as f64);

    let zc = g.input(z.clone());
    let xf_live = gen.forward(&mut g, zc);
    let xf = g.detach(xf_live);
    let logit_f = disc.forward(&mut g, xf);
    let pf = d_prob(&mut g, logit_f);
    let neg = g.neg(pf);
    let one_minus = g.add_const(neg, 1.0);
    let ln_f = g.ln(one_minus);
    let sum_f = g.sum(ln_f);
    let term_f = g.scale(sum_f, -2.0 * p0 / m as f64);

    let loss = g.add(term_r, term_f);
    let grads = g.backward(loss)?;
    Ok((
        g.value(loss).item(),
        model.discriminator.grad_from(&disc, &grads),
        model.generator.grad_from(&gen, &grads),
    ))
}

/// Non-saturating generator loss `-mean[ln D(G(z))]` with the discriminator
/// frozen.
pub fn g_loss_standard(model: &GanModel, z: &Tensor) -> Result<f64> {
    Ok(g_loss_standard_grad(model, z)?.0)
}

/// As [`g_loss_standard`], returning `(generator grad, discriminator grad)`;
/// the discriminator gradient is exactly zero because its parameters enter
/// the graph as constants.
pub fn g_loss_standard_grad(model: &GanModel, z: &Tensor) -> Result<(f64, ParamVector, ParamVector)> {
    let (b, loss) = build_g_standard(model, z)?;
    let grads = b.graph.backward(loss)?;
    Ok((
        b.graph.value(loss).item(),
        model.generator.grad_from(&b.gen, &grads),
        model.discriminator.grad_from(&b.disc, &grads),
    ))
}

struct GGraph {
    graph: Graph,
    gen: crate::nn::BoundMlp,
    disc: crate::nn::BoundMlp,
    gen_out: NodeId,
}

fn build_g_standard(model: &GanModel, z: &Tensor) -> Result<(GGraph, NodeId)> {
    let (m, dz) = z.as_matrix()?;
    if m == 0 {
        return Err(Error::Contract("latent batch must be non-empty".into()));
    }
    if dz != model.latent_dim {
        return Err(Error::Dimension(format!(
            "latent width {} does not match model latent dimension {}",
            dz, model.latent_dim
        )));
    }
    let mut g = Graph::new();
    let gen = model.generator.bind(&mut g, true);
    let disc = model.discriminator.bind(&mut g, false);
    let zc = g.input(z.clone());
    let x = gen.forward(&mut g, zc);
    let logit = disc.forward(&mut g, x);
    let p = d_prob(&mut g, logit);
    let ln_p = g.ln(p);
    let s = g.sum(ln_p);
    let loss = g.scale(s, -1.0 / m as f64);
    Ok((GGraph { graph: g, gen, disc, gen_out: x }, loss))
}

/// Breakdown of the complete generator loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GLoss {
    pub total: f64,
    pub adversarial: f64,
    /// Unweighted `mean||G(z) - G_old(z)||^2`.
    pub penalty: f64,
    pub lambda: f64,
}

/// Complete generator loss `-mean[ln D(G(z))] + lambda * mean||G(z) - G_old(z)||^2`.
/// Requires a generator snapshot. At `lambda = 0` the total (and its
/// gradient) equals the standard loss bit for bit.
pub fn g_loss_regularized(model: &GanModel, z: &Tensor, lambda: f64) -> Result<GLoss> {
    Ok(g_loss_regularized_grad(model, z, lambda)?.0)
}

/// As [`g_loss_regularized`], returning `(generator grad, discriminator grad)`.
pub fn g_loss_regularized_grad(
    model: &GanModel,
    z: &Tensor,
    lambda: f64,
) -> Result<(GLoss, ParamVector, ParamVector)> {
    if lambda < 0.0 {
        return Err(Error::Contract(format!("lambda must be >= 0, got {}", lambda)));
    }
    let old = model.old_generator()?;
    let (mut b, adv) = build_g_standard(model, z)?;
    let old_out = old.forward(z)?;
    let m = z.shape()[0];

    let g = &mut b.graph;
    let old_c = g.input(old_out);
    let diff = g.sub(b.gen_out, old_c);
    let sq = g.square(diff);
    let sq_sum = g.sum(sq);
    let pen = g.scale(sq_sum, 1.0 / m as f64);

    let total = if lambda > 0.0 {
        let weighted = g.scale(pen, lambda);
        g.add(adv, weighted)
    } else {
        adv
    };
    let grads = g.backward(total)?;
    let loss = GLoss {
        total: b.graph.value(total).item(),
        adversarial: b.graph.value(adv).item(),
        penalty: b.graph.value(pen).item(),
        lambda,
    };
    Ok((
        loss,
        model.generator.grad_from(&b.gen, &grads),
        model.discriminator.grad_from(&b.disc, &grads),
    ))
}

/// Exact density-ratio discriminator `p(x) / (p(x) + q(x))` between two known
/// mixtures, evaluated stably in log space. Errors when both densities
/// underflow to zero.
pub fn optimal_d_reference(p: &GmmModel, q: &GmmModel, x: &[f64]) -> Result<f64> {
    let lp = p.log_pdf(x);
    let lq = q.log_pdf(x);
    // exp underflows to 0 below roughly -745
    const LOG_UNDERFLOW: f64 = -745.0;
    if lp < LOG_UNDERFLOW && lq < LOG_UNDERFLOW {
        return Err(Error::Contract(format!(
            "both densities underflow at {:?} (log p = {}, log q = {})",
            x, lp, lq
        )));
    }
    Ok(crate::nn::graph::sigmoid(lp - lq))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanTrainConfig {
    /// Regularizer weight; 0 recovers the standard GAN.
    pub lambda: f64,
    pub d_steps: usize,
    pub g_steps: usize,
    /// Generator steps between snapshot refreshes (K >= 1).
    pub snapshot_lag: usize,
    /// Class prior for the data side; `p0 = 1 - p1`.
    pub p1: f64,
    pub optim: OptimSpec,
    pub seed: u64,
    /// Training periods; each runs `d_steps` then `g_steps`.
    pub periods: u64,
    pub batch_size: usize,
    /// Metric cadence in optimizer updates.
    pub eval_interval: u64,
    pub eval_samples: usize,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        GanTrainConfig {
            lambda: 0.5,
            d_steps: 1,
            g_steps: 1,
            snapshot_lag: 5,
            p1: 0.5,
            optim: OptimSpec::adam(1e-3),
            seed: 0,
            periods: 2000,
            batch_size: 128,
            eval_interval: 500,
            eval_samples: 4096,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if self.snapshot_lag == 0 {
            return Err(Error::Config("snapshot lag must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p1) {
            return Err(Error::Config("p1 must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.eval_samples == 0 {
            return Err(Error::Config("batch and eval sizes must be >= 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Alternating trainer. Drive it period by period or via [`GanTrainer::run`].
pub struct GanTrainer<'a> {
    model: GanModel,
    data: &'a Tensor,
    cfg: GanTrainConfig,
    mode_spec: Option<ModeSpec>,
    estimator: Option<HistogramEstimator>,
    opt_d: Optimizerish,
    opt_g: Optimizerish,
    noise_rng: rand_xoshiro::Xoshiro256PlusPlus,
    log: TrainLog,
    updates: u64,
    gen_steps: u64,
    next_eval: u64,
}

type Optimizerish = crate::nn::Optimizer;

impl<'a> GanTrainer<'a> {
    pub fn new(
        mut model: GanModel,
        data: &'a Tensor,
        mode_spec: Option<ModeSpec>,
        estimator: Option<HistogramEstimator>,
        cfg: GanTrainConfig,
    ) -> Result<GanTrainer<'a>> {
        cfg.validate()?;
        data.as_matrix()?;
        model.refresh_snapshot();
        let opt_d = cfg.optim.build(model.discriminator.param_count());
        let opt_g = cfg.optim.build(model.generator.param_count());
        let noise_rng = stream(cfg.seed, Stream::Noise);
        let log = TrainLog::new(vec!["d_loss", "g_loss", "reg_term", "mode_coverage", "kl_est"]);
        let mut t = GanTrainer {
            model,
            data,
            cfg,
            mode_spec,
            estimator,
            opt_d,
            opt_g,
            noise_rng,
            log,
            updates: 0,
            gen_steps: 0,
            next_eval: 0,
        };
        t.evaluate()?; // step-0 row
        t.next_eval = t.cfg.eval_interval;
        Ok(t)
    }

    pub fn model(&self) -> &GanModel {
        &self.model
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One period: `d_steps` discriminator updates then `g_steps` generator
    /// updates, snapshot refresh every `snapshot_lag` generator steps.
    pub fn step_period(&mut self) -> Result<()> {
        for _ in 0..self.cfg.d_steps {
            let real = sample_batch(self.data, self.cfg.batch_size, &mut self.noise_rng);
            let z = normal_tensor(&mut self.noise_rng, &[self.cfg.batch_size, self.model.latent_dim]);
            let (loss, d_grad, _) = d_loss_grad(&self.model, &real, &z, self.cfg.p1)?;
            self.check_finite(loss, "d_loss")?;
            self.opt_d.step(self.model.discriminator.params_mut(), d_grad.values())?;
            self.updates += 1;
        }
        for _ in 0..self.cfg.g_steps {
            let z = normal_tensor(&mut self.noise_rng, &[self.cfg.batch_size, self.model.latent_dim]);
            let loss = if self.cfg.lambda > 0.0 {
                let (l, g_grad, _) = g_loss_regularized_grad(&self.model, &z, self.cfg.lambda)?;
                self.opt_g.step(self.model.generator.params_mut(), g_grad.values())?;
                l.total
            } else {
                let (l, g_grad, _) = g_loss_standard_grad(&self.model, &z)?;
                self.opt_g.step(self.model.generator.params_mut(), g_grad.values())?;
                l
            };
            self.check_finite(loss, "g_loss")?;
            self.updates += 1;
            self.gen_steps += 1;
            if self.gen_steps % self.cfg.snapshot_lag as u64 == 0 {
                self.model.refresh_snapshot();
            }
        }
        if self.updates >= self.next_eval {
            self.evaluate()?;
            while self.next_eval <= self.updates {
                self.next_eval += self.cfg.eval_interval;
            }
        }
        Ok(())
    }

    fn check_finite(&self, loss: f64, which: &str) -> Result<()> {
        if loss.is_finite() {
            return Ok(());
        }
        Err(Error::Diverged {
            step: self.updates,
            detail: format!(
                "{} = {}; params checksum {:#x}; config {:?}",
                which,
                loss,
                params_checksum(&[self.model.generator.params(), self.model.discriminator.params()]),
                self.cfg
            ),
        })
    }

    /// Metrics on a fixed evaluation stream (re-seeded per call, so constant
    /// parameters give constant metrics).
    fn evaluate(&mut self) -> Result<()> {
        let mut eval_rng = stream(self.cfg.seed, Stream::Eval);
        let real = sample_batch(self.data, self.cfg.batch_size, &mut eval_rng);
        let z_small = normal_tensor(&mut eval_rng, &[self.cfg.batch_size, self.model.latent_dim]);
        let d = d_loss(&self.model, &real, &z_small, self.cfg.p1)?;
        let (gl, reg) = {
            let l = g_loss_regularized(&self.model, &z_small, self.cfg.lambda)?;
            (l.total, l.lambda * l.penalty)
        };
        let z_eval = normal_tensor(&mut eval_rng, &[self.cfg.eval_samples, self.model.latent_dim]);
        let samples = self.model.generator.forward(&z_eval)?;
        let coverage = self
            .mode_spec
            .as_ref()
            .map(|ms| mode_coverage(&samples, ms).modes_covered as f64)
            .unwrap_or(f64::NAN);
        let kl = match &self.estimator {
            Some(est) => kl_histogram(self.data, &samples, est)?,
            None => f64::NAN,
        };
        self.log.push(self.updates, vec![d, gl, reg, coverage, kl])?;
        Ok(())
    }

    pub fn run(mut self) -> Result<(GanModel, TrainLog)> {
        for _ in 0..self.cfg.periods {
            self.step_period()?;
        }
        if self.log.last().map(|r| r.step) != Some(self.updates) && self.updates > 0 {
            self.evaluate()?;
        }
        Ok((self.model, self.log))
    }
}

/// Builds a trainer and runs it to completion.
pub fn gan_train<'a>(
    model: GanModel,
    data: &'a Tensor,
    mode_spec: Option<ModeSpec>,
    estimator: Option<HistogramEstimator>,
    cfg: GanTrainConfig,
) -> Result<(GanModel, TrainLog)> {
    GanTrainer::new(model, data, mode_spec, estimator, cfg)?.run()
}
