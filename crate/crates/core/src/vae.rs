//! Variational autoencoder: Gaussian encoder, Gaussian decoder with a fixed
//! configured variance, standard-normal prior on the code, trained on the
//! single-sample reparametrized bound
//! `mean_batch[ -log q(x|z) + KL(p(z|x) || N(0, I)) ]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::graph::Graph;
use crate::nn::{Mlp, OptimSpec, ParamVector, Tensor};
use crate::rng::{normal_tensor, stream, Stream};
use crate::trainlog::{params_checksum, sample_batch, TrainLog};

const LN_2PI: f64 = 1.8378770664093453;

/// Encoder maps `x` to `[mean | log-variance]` of the code; decoder maps a
/// code to the mean of `x`. The decoder variance is a configuration scalar,
/// not a network output.
#[derive(Debug, Clone)]
pub struct VaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub dec_log_var: f64,
    pub latent_dim: usize,
}

impl VaeModel {
    pub fn new(encoder: Mlp, decoder: Mlp, dec_log_var: f64) -> Result<VaeModel> {
        let latent_dim = decoder.in_dim();
        if encoder.out_dim() != 2 * latent_dim {
            return Err(Error::Contract(format!(
                "encoder output width {} must be twice the latent dimension {}",
                encoder.out_dim(),
                latent_dim
            )));
        }
        if decoder.out_dim() != encoder.in_dim() {
            return Err(Error::Contract(format!(
                "decoder output width {} must match encoder input width {}",
                decoder.out_dim(),
                encoder.in_dim()
            )));
        }
        if !dec_log_var.is_finite() {
            return Err(Error::Contract("decoder log-variance must be finite".into()));
        }
        Ok(VaeModel { encoder, decoder, dec_log_var, latent_dim })
    }

    pub fn x_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    /// Fresh random model with the given hidden stack in both nets.
    pub fn new_random<R: rand::Rng>(
        x_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        dec_log_var: f64,
        rng: &mut R,
    ) -> VaeModel {
        use crate::nn::Activation;
        let mut enc_sizes = vec![x_dim];
        enc_sizes.extend_from_slice(hidden);
        enc_sizes.push(2 * latent_dim);
        let mut dec_sizes = vec![latent_dim];
        dec_sizes.extend_from_slice(hidden);
        dec_sizes.push(x_dim);
        let encoder = Mlp::new(&enc_sizes, Activation::Tanh, Activation::Identity, rng);
        let decoder = Mlp::new(&dec_sizes, Activation::Tanh, Activation::Identity, rng);
        VaeModel::new(encoder, decoder, dec_log_var).unwrap()
    }

    /// Generative samples: decoder means at prior draws.
    pub fn sample<R: rand::Rng>(&self, n: usize, rng: &mut R) -> Tensor {
        let z = normal_tensor(rng, &[n, self.latent_dim]);
        self.decoder.forward(&z).expect("decoder accepts prior draws")
    }
}

/// Per-term breakdown of the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

struct VaeGraph {
    graph: Graph,
    loss: crate::nn::NodeId,
    recon: crate::nn::NodeId,
    kl: crate::nn::NodeId,
    enc: crate::nn::BoundMlp,
    dec: crate::nn::BoundMlp,
}

fn build_vae_graph(model: &VaeModel, batch: &Tensor, noise: &Tensor) -> Result<VaeGraph> {
    let (n, d) = batch.as_matrix()?;
    if d != model.x_dim() {
        return Err(Error::Dimension(format!(
            "batch width {} does not match data dimension {}",
            d,
            model.x_dim()
        )));
    }
    if noise.shape() != [n, model.latent_dim] {
        return Err(Error::Dimension(format!(
            "noise shape {:?} does not match batch {} x latent {}",
            noise.shape(),
            n,
            model.latent_dim
        )));
    }
    let dz = model.latent_dim;
    let mut g = Graph::new();
    let enc = model.encoder.bind(&mut g, true);
    let dec = model.decoder.bind(&mut g, true);

    let x = g.input(batch.clone());
    let enc_out = enc.forward(&mut g, x);
    let mu = g.slice_cols(enc_out, 0, dz);
    let lv = g.slice_cols(enc_out, dz, dz);

    // z = mu + exp(lv/2) * eps
    let half = g.scale(lv, 0.5);
    let std = g.exp(half);
    let eps = g.input(noise.clone());
    let scaled = g.mul(std, eps);
    let z = g.add(mu, scaled);

    // reconstruction: ||x - dec(z)||^2 / (2 s^2), batch-mean, plus the
    // Gaussian normalizer (d/2) ln(2 pi s^2)
    let dec_mu = dec.forward(&mut g, z);
    let diff = g.sub(x, dec_mu);
    let sq = g.square(diff);
    let sq_sum = g.sum(sq);
    let var = model.dec_log_var.exp();
    let recon_core = g.scale(sq_sum, 1.0 / (2.0 * var * n as f64));
    let recon = g.add_const(recon_core, 0.5 * d as f64 * (LN_2PI + model.dec_log_var));

    // KL(N(mu, e^lv) || N(0, I)) = 1/2 sum(e^lv + mu^2 - 1 - lv), batch-mean
    let e_lv = g.exp(lv);
    let mu2 = g.square(mu);
    let t = g.add(e_lv, mu2);
    let t = g.add_const(t, -1.0);
    let t = g.sub(t, lv);
    let kl_sum = g.sum(t);
    let kl = g.scale(kl_sum, 0.5 / n as f64);

    let loss = g.add(recon, kl);
    Ok(VaeGraph { graph: g, loss, recon, kl, enc, dec })
}

/// Loss value with its reconstruction/KL breakdown.
pub fn vae_loss(model: &VaeModel, batch: &Tensor, noise: &Tensor) -> Result<VaeLoss> {
    let vg = build_vae_graph(model, batch, noise)?;
    Ok(VaeLoss {
        total: vg.graph.value(vg.loss).item(),
        recon: vg.graph.value(vg.recon).item(),
        kl: vg.graph.value(vg.kl).item(),
    })
}

/// Loss plus gradients for encoder and decoder.
pub fn vae_loss_grad(
    model: &VaeModel,
    batch: &Tensor,
    noise: &Tensor,
) -> Result<(VaeLoss, ParamVector, ParamVector)> {
    let vg = build_vae_graph(model, batch, noise)?;
    let grads = vg.graph.backward(vg.loss)?;
    let loss = VaeLoss {
        total: vg.graph.value(vg.loss).item(),
        recon: vg.graph.value(vg.recon).item(),
        kl: vg.graph.value(vg.kl).item(),
    };
    let enc_grad = model.encoder.grad_from(&vg.enc, &grads);
    let dec_grad = model.decoder.grad_from(&vg.dec, &grads);
    Ok((loss, enc_grad, dec_grad))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaeTrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub optim: OptimSpec,
    pub seed: u64,
    pub eval_interval: u64,
    /// Rows of the fixed evaluation batch.
    pub eval_batch: usize,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            steps: 2000,
            batch_size: 128,
            optim: OptimSpec::adam(1e-3),
            seed: 0,
            eval_interval: 500,
            eval_batch: 512,
        }
    }
}

/// Minimizes the bound with one Monte-Carlo code sample per datum per step.
/// Metrics rows are `(step, total, recon, kl)` on a fixed evaluation batch,
/// recorded at step 0, every `eval_interval`, and at the end.
pub fn vae_train(model: &mut VaeModel, data: &Tensor, cfg: &VaeTrainConfig) -> Result<TrainLog> {
    if cfg.batch_size == 0 || cfg.eval_batch == 0 {
        return Err(Error::Config("batch sizes must be >= 1".into()));
    }
    let mut noise_rng = stream(cfg.seed, Stream::Noise);
    let mut eval_rng = stream(cfg.seed, Stream::Eval);
    let eval_x = sample_batch(data, cfg.eval_batch, &mut eval_rng);
    let eval_noise = normal_tensor(&mut eval_rng, &[cfg.eval_batch, model.latent_dim]);

    let mut opt_enc = cfg.optim.build(model.encoder.param_count());
    let mut opt_dec = cfg.optim.build(model.decoder.param_count());
    let mut log = TrainLog::new(vec!["total", "recon", "kl"]);

    let eval = |m: &VaeModel| -> Result<VaeLoss> { vae_loss(m, &eval_x, &eval_noise) };

    let l0 = eval(model)?;
    log.push(0, vec![l0.total, l0.recon, l0.kl])?;

    for step in 1..=cfg.steps {
        let batch = sample_batch(data, cfg.batch_size, &mut noise_rng);
        let noise = normal_tensor(&mut noise_rng, &[cfg.batch_size, model.latent_dim]);
        let (loss, enc_grad, dec_grad) = vae_loss_grad(model, &batch, &noise)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!(
                    "loss {} (recon {}, kl {}); params checksum {:#x}; config {:?}",
                    loss.total,
                    loss.recon,
                    loss.kl,
                    params_checksum(&[model.encoder.params(), model.decoder.params()]),
                    cfg
                ),
            });
        }
        opt_enc.step(model.encoder.params_mut(), enc_grad.values())?;
        opt_dec.step(model.decoder.params_mut(), dec_grad.values())?;
        if step % cfg.eval_interval == 0 || step == cfg.steps {
            let l = eval(model)?;
            log.push(step, vec![l.total, l.recon, l.kl])?;
        }
    }
    Ok(log)
}
