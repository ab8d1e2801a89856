//! AAE and ALI under one alternating driver: a discriminator phase, an
//! encoder/generator phase, and shared evaluation/abort plumbing.

pub mod aae;
pub mod ali;

pub use aae::{aae_d_loss, aae_d_loss_grad, aae_joint_loss, aae_joint_loss_grad, AaeJointLoss, AaeModel};
pub use ali::{
    ali_d_loss, ali_d_loss_grad, ali_g_loss, ali_g_loss_grad, AliGLoss, AliModel, AliNoise, AliVariant,
};

use serde::{Deserialize, Serialize};

use crate::dist::dirac_penalty;
use crate::error::{Error, Result};
use crate::metrics::{kl_histogram, mode_coverage, HistogramEstimator, ModeSpec};
use crate::nn::{OptimSpec, Tensor};
use crate::rng::{normal_tensor, stream, Stream};
use crate::trainlog::{params_checksum, sample_batch, TrainLog};

/// Either adversarial variant, for the shared driver.
#[derive(Debug, Clone)]
pub enum VariantModel {
    Aae(AaeModel),
    Ali(AliModel),
}

impl VariantModel {
    pub fn latent_dim(&self) -> usize {
        match self {
            VariantModel::Aae(m) => m.latent_dim,
            VariantModel::Ali(m) => m.latent_dim,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantTrainConfig {
    pub d_steps: usize,
    pub g_steps: usize,
    /// AAE reconstruction weight.
    pub lambda_rec: f64,
    /// ALI encoder/generator loss form.
    pub variant: AliVariant,
    /// ALI: add the closed-form generator-drift KL to the loss.
    pub analytic_kl: bool,
    /// Generator steps between snapshot refreshes (ALI analytic term).
    pub snapshot_lag: usize,
    pub optim: OptimSpec,
    pub seed: u64,
    pub periods: u64,
    pub batch_size: usize,
    pub eval_interval: u64,
    pub eval_samples: usize,
}

impl Default for VariantTrainConfig {
    fn default() -> Self {
        VariantTrainConfig {
            d_steps: 1,
            g_steps: 1,
            lambda_rec: 1.0,
            variant: AliVariant::Paper,
            analytic_kl: false,
            snapshot_lag: 5,
            optim: OptimSpec::adam(1e-3),
            seed: 0,
            periods: 2000,
            batch_size: 128,
            eval_interval: 500,
            eval_samples: 4096,
        }
    }
}

impl VariantTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_rec < 0.0 {
            return Err(Error::Config("lambda_rec must be >= 0".into()));
        }
        if self.snapshot_lag == 0 {
            return Err(Error::Config("snapshot lag must be >= 1".into()));
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

/// Alternating trainer over either variant.
pub struct VariantTrainer<'a> {
    model: VariantModel,
    data: &'a Tensor,
    cfg: VariantTrainConfig,
    mode_spec: Option<ModeSpec>,
    estimator: Option<HistogramEstimator>,
    /// Code-space estimator for the AAE latent-match metric.
    code_estimator: HistogramEstimator,
    opt_d: crate::nn::Optimizer,
    opt_e: crate::nn::Optimizer,
    opt_g: crate::nn::Optimizer,
    noise_rng: rand_xoshiro::Xoshiro256PlusPlus,
    log: TrainLog,
    updates: u64,
    gen_steps: u64,
    next_eval: u64,
}

impl<'a> VariantTrainer<'a> {
    pub fn new(
        mut model: VariantModel,
        data: &'a Tensor,
        mode_spec: Option<ModeSpec>,
        estimator: Option<HistogramEstimator>,
        cfg: VariantTrainConfig,
    ) -> Result<VariantTrainer<'a>> {
        cfg.validate()?;
        data.as_matrix()?;
        let (opt_d, opt_e, opt_g, columns) = match &mut model {
            VariantModel::Aae(m) => (
                cfg.optim.build(m.discriminator.param_count()),
                cfg.optim.build(m.encoder.param_count()),
                cfg.optim.build(m.decoder.param_count()),
                vec!["d_loss", "g_loss", "latent_kl", "recon_err"],
            ),
            VariantModel::Ali(m) => {
                m.refresh_snapshot();
                (
                    cfg.optim.build(m.discriminator.param_count()),
                    cfg.optim.build(m.encoder.param_count()),
                    cfg.optim.build(m.generator.param_count()),
                    vec!["d_loss", "g_loss", "mode_coverage", "kl_est"],
                )
            }
        };
        let code_estimator =
            HistogramEstimator::uniform(model.latent_dim(), -4.0, 4.0, 30, 0.5).expect("static bounds");
        let noise_rng = stream(cfg.seed, Stream::Noise);
        let log = TrainLog::new(columns);
        let mut t = VariantTrainer {
            model,
            data,
            cfg,
            mode_spec,
            estimator,
            code_estimator,
            opt_d,
            opt_e,
            opt_g,
            noise_rng,
            log,
            updates: 0,
            gen_steps: 0,
            next_eval: 0,
        };
        t.evaluate()?;
        t.next_eval = t.cfg.eval_interval;
        Ok(t)
    }

    pub fn model(&self) -> &VariantModel {
        &self.model
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    fn diverged(&self, which: &str, loss: f64) -> Error {
        let parts = match &self.model {
            VariantModel::Aae(m) => {
                params_checksum(&[m.encoder.params(), m.decoder.params(), m.discriminator.params()])
            }
            VariantModel::Ali(m) => {
                params_checksum(&[m.encoder.params(), m.generator.params(), m.discriminator.params()])
            }
        };
        Error::Diverged {
            step: self.updates,
            detail: format!("{} = {}; params checksum {:#x}; config {:?}", which, loss, parts, self.cfg),
        }
    }

    pub fn step_period(&mut self) -> Result<()> {
        let bs = self.cfg.batch_size;
        for _ in 0..self.cfg.d_steps {
            let batch = sample_batch(self.data, bs, &mut self.noise_rng);
            let loss = match &mut self.model {
                VariantModel::Aae(m) => {
                    let prior = normal_tensor(&mut self.noise_rng, &[bs, m.latent_dim]);
                    let (loss, d_grad, _) = aae_d_loss_grad(m, &batch, &prior)?;
                    self.opt_d.step(m.discriminator.params_mut(), d_grad.values())?;
                    loss
                }
                VariantModel::Ali(m) => {
                    let prior = normal_tensor(&mut self.noise_rng, &[bs, m.latent_dim]);
                    let noise = AliNoise::draw(m, bs, bs, &mut self.noise_rng);
                    let (loss, d_grad, _, _) = ali_d_loss_grad(m, &batch, &prior, &noise)?;
                    self.opt_d.step(m.discriminator.params_mut(), d_grad.values())?;
                    loss
                }
            };
            if !loss.is_finite() {
                return Err(self.diverged("d_loss", loss));
            }
            self.updates += 1;
        }
        for _ in 0..self.cfg.g_steps {
            let batch = sample_batch(self.data, bs, &mut self.noise_rng);
            let loss = match &mut self.model {
                VariantModel::Aae(m) => {
                    let (loss, e_grad, g_grad, _) = aae_joint_loss_grad(m, &batch, self.cfg.lambda_rec)?;
                    self.opt_e.step(m.encoder.params_mut(), e_grad.values())?;
                    self.opt_g.step(m.decoder.params_mut(), g_grad.values())?;
                    loss.total
                }
                VariantModel::Ali(m) => {
                    let prior = normal_tensor(&mut self.noise_rng, &[bs, m.latent_dim]);
                    let noise = AliNoise::draw(m, bs, bs, &mut self.noise_rng);
                    let (loss, e_grad, g_grad, _) =
                        ali_g_loss_grad(m, &batch, &prior, &noise, self.cfg.variant, self.cfg.analytic_kl)?;
                    self.opt_e.step(m.encoder.params_mut(), e_grad.values())?;
                    self.opt_g.step(m.generator.params_mut(), g_grad.values())?;
                    loss.total
                }
            };
            if !loss.is_finite() {
                return Err(self.diverged("g_loss", loss));
            }
            self.updates += 1;
            self.gen_steps += 1;
            if let VariantModel::Ali(m) = &mut self.model {
                if self.gen_steps % self.cfg.snapshot_lag as u64 == 0 {
                    m.refresh_snapshot();
                }
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

    /// Fixed evaluation stream per call: constant parameters mean constant
    /// metric rows.
    fn evaluate(&mut self) -> Result<()> {
        let mut eval_rng = stream(self.cfg.seed, Stream::Eval);
        let bs = self.cfg.batch_size;
        let values = match &self.model {
            VariantModel::Aae(m) => {
                let batch = sample_batch(self.data, bs, &mut eval_rng);
                let prior_small = normal_tensor(&mut eval_rng, &[bs, m.latent_dim]);
                let d = aae_d_loss(m, &batch, &prior_small)?;
                let j = aae_joint_loss(m, &batch, self.cfg.lambda_rec)?;

                let eval_n = self.cfg.eval_samples;
                let eval_x = sample_batch(self.data, eval_n, &mut eval_rng);
                let prior_big = normal_tensor(&mut eval_rng, &[eval_n, m.latent_dim]);
                let codes = m.encoder.forward(&eval_x)?;
                let latent_kl = kl_histogram(&codes, &prior_big, &self.code_estimator)?;
                let recon = m.decoder.forward(&codes)?;
                let recon_err = dirac_penalty(&eval_x, &recon)?;
                vec![d, j.total, latent_kl, recon_err]
            }
            VariantModel::Ali(m) => {
                let batch = sample_batch(self.data, bs, &mut eval_rng);
                let prior_small = normal_tensor(&mut eval_rng, &[bs, m.latent_dim]);
                let noise = AliNoise::draw(m, bs, bs, &mut eval_rng);
                let d = ali_d_loss(m, &batch, &prior_small, &noise)?;
                let gl = ali_g_loss(m, &batch, &prior_small, &noise, self.cfg.variant, false)?;

                let eval_n = self.cfg.eval_samples;
                let z = normal_tensor(&mut eval_rng, &[eval_n, m.latent_dim]);
                let x_noise = normal_tensor(&mut eval_rng, &[eval_n, m.x_dim()]);
                let samples = ali::reparam_batch(&m.generator, &z, &x_noise);
                let coverage = self
                    .mode_spec
                    .as_ref()
                    .map(|ms| mode_coverage(&samples, ms).modes_covered as f64)
                    .unwrap_or(f64::NAN);
                let kl = match &self.estimator {
                    Some(est) => kl_histogram(self.data, &samples, est)?,
                    None => f64::NAN,
                };
                vec![d, gl.total, coverage, kl]
            }
        };
        self.log.push(self.updates, values)?;
        Ok(())
    }

    pub fn run(mut self) -> Result<(VariantModel, TrainLog)> {
        for _ in 0..self.cfg.periods {
            self.step_period()?;
        }
        if self.log.last().map(|r| r.step) != Some(self.updates) && self.updates > 0 {
            self.evaluate()?;
        }
        Ok((self.model, self.log))
    }
}

/// Builds the shared alternating trainer and runs it to completion.
pub fn variant_train<'a>(
    model: VariantModel,
    data: &'a Tensor,
    mode_spec: Option<ModeSpec>,
    estimator: Option<HistogramEstimator>,
    cfg: VariantTrainConfig,
) -> Result<(VariantModel, TrainLog)> {
    VariantTrainer::new(model, data, mode_spec, estimator, cfg)?.run()
}
