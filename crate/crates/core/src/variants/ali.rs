//! Adversarially learned inference: a stochastic encoder `x -> z`, a
//! stochastic generator `z -> x`, and a joint discriminator over `(x, z)`
//! pairs. Three encoder/generator losses are provided: the symmetric
//! `-E[ln D]` form over both pair directions, and the two conventional
//! min-max forms, for comparison.

use serde::{Deserialize, Serialize};

use crate::dist::PROB_CLAMP;
use crate::error::{Error, Result};
use crate::nn::graph::{Graph, NodeId};
use crate::nn::{snapshot, Mlp, NetSnapshot, ParamVector, Tensor};
use crate::rng::normal_tensor;

/// Which encoder/generator loss to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AliVariant {
    /// `-E_data[ln D] - E_prior[ln D]`.
    Paper,
    /// `+E_data[ln D] + E_prior[ln(1 - D)]`.
    MinmaxA,
    /// `-E_data[ln(1 - D)] - E_prior[ln D]`.
    MinmaxB,
}

impl std::str::FromStr for AliVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<AliVariant> {
        match s {
            "paper" => Ok(AliVariant::Paper),
            "minmax-a" => Ok(AliVariant::MinmaxA),
            "minmax-b" => Ok(AliVariant::MinmaxB),
            other => Err(Error::Contract(format!(
                "unknown ALI variant {:?} (expected paper, minmax-a, or minmax-b)",
                other
            ))),
        }
    }
}

/// Stochastic encoder/generator heads emit `[mean | log-variance]`; output
/// variances are floored at 1e-6.
#[derive(Debug, Clone)]
pub struct AliModel {
    pub encoder: Mlp,
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub latent_dim: usize,
    generator_snapshot: Option<NetSnapshot>,
}

impl AliModel {
    pub fn new(encoder: Mlp, generator: Mlp, discriminator: Mlp) -> Result<AliModel> {
        if encoder.out_dim() % 2 != 0 || generator.out_dim() % 2 != 0 {
            return Err(Error::Contract("stochastic heads need even output width".into()));
        }
        let latent_dim = encoder.out_dim() / 2;
        let x_dim = generator.out_dim() / 2;
        if generator.in_dim() != latent_dim {
            return Err(Error::Contract("generator input must match the latent dimension".into()));
        }
        if encoder.in_dim() != x_dim {
            return Err(Error::Contract("encoder input must match the data dimension".into()));
        }
        if discriminator.in_dim() != x_dim + latent_dim {
            return Err(Error::Contract(format!(
                "joint discriminator input width {} must be d_x + d_z = {}",
                discriminator.in_dim(),
                x_dim + latent_dim
            )));
        }
        if discriminator.out_dim() != 1 {
            return Err(Error::Contract("discriminator must emit a single logit".into()));
        }
        Ok(AliModel { encoder, generator, discriminator, latent_dim, generator_snapshot: None })
    }

    pub fn new_random<R: rand::Rng>(
        x_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> AliModel {
        use crate::nn::Activation;
        let mut es = vec![x_dim];
        es.extend_from_slice(hidden);
        es.push(2 * latent_dim);
        let mut gs = vec![latent_dim];
        gs.extend_from_slice(hidden);
        gs.push(2 * x_dim);
        let mut ds = vec![x_dim + latent_dim];
        ds.extend_from_slice(hidden);
        ds.push(1);
        let encoder = Mlp::new(&es, Activation::Tanh, Activation::Identity, rng);
        let generator = Mlp::new(&gs, Activation::Tanh, Activation::Identity, rng);
        let discriminator = Mlp::new(&ds, Activation::Relu, Activation::Identity, rng);
        AliModel::new(encoder, generator, discriminator).unwrap()
    }

    pub fn x_dim(&self) -> usize {
        self.generator.out_dim() / 2
    }

    pub fn refresh_snapshot(&mut self) {
        self.generator_snapshot = Some(snapshot(self.generator.params()));
    }

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

    /// Stochastic generator samples at prior draws.
    pub fn sample<R: rand::Rng>(&self, n: usize, rng: &mut R) -> Tensor {
        let z = normal_tensor(rng, &[n, self.latent_dim]);
        let noise = normal_tensor(rng, &[n, self.x_dim()]);
        reparam_batch(&self.generator, &z, &noise)
    }
}

const LV_FLOOR: f64 = -13.815510557964274; // ln(crate::dist::VAR_FLOOR)

/// Plain (off-tape) stochastic head evaluation with the variance floor:
/// `mean + exp(max(lv, ln 1e-6) / 2) * noise`.
pub(crate) fn reparam_batch(net: &Mlp, input: &Tensor, noise: &Tensor) -> Tensor {
    let out = net.forward(input).expect("head accepts its input");
    let (n, two_d) = out.as_matrix().unwrap();
    let d = two_d / 2;
    assert_eq!(noise.shape(), &[n, d], "noise shape mismatch");
    let mut data = Vec::with_capacity(n * d);
    for r in 0..n {
        let row = out.row(r);
        for c in 0..d {
            let lv = row[d + c].max(LV_FLOOR);
            data.push(row[c] + (0.5 * lv).exp() * noise.row(r)[c]);
        }
    }
    Tensor::new(vec![n, d], data)
}

/// Reparametrized noise for one ALI loss evaluation: `z` for the encoder
/// direction (`[n_data, d_z]`) and `x` for the generator direction
/// (`[n_prior, d_x]`).
#[derive(Debug, Clone)]
pub struct AliNoise {
    pub z: Tensor,
    pub x: Tensor,
}

impl AliNoise {
    pub fn draw<R: rand::Rng>(model: &AliModel, n_data: usize, n_prior: usize, rng: &mut R) -> AliNoise {
        AliNoise {
            z: normal_tensor(rng, &[n_data, model.latent_dim]),
            x: normal_tensor(rng, &[n_prior, model.x_dim()]),
        }
    }
}

fn d_prob(g: &mut Graph, logit: NodeId) -> NodeId {
    let p = g.sigmoid(logit);
    g.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// On-tape stochastic head: forward `net(input)`, split mean/log-variance,
/// floor the log-variance, reparametrize with the given noise.
fn head_sample(g: &mut Graph, net: &crate::nn::BoundMlp, input: NodeId, noise: &Tensor, d: usize) -> NodeId {
    let out = net.forward(g, input);
    let mu = g.slice_cols(out, 0, d);
    let lv_raw = g.slice_cols(out, d, d);
    let lv = g.clamp(lv_raw, LV_FLOOR, f64::INFINITY);
    let half = g.scale(lv, 0.5);
    let std = g.exp(half);
    let eps = g.input(noise.clone());
    let scaled = g.mul(std, eps);
    g.add(mu, scaled)
}

struct AliGraph {
    graph: Graph,
    enc: crate::nn::BoundMlp,
    gen: crate::nn::BoundMlp,
    disc: crate::nn::BoundMlp,
    /// `(data-direction pair logit prob, prior-direction pair logit prob)`.
    p_data: NodeId,
    p_prior: NodeId,
    /// Prior z input node (for the analytic add-on).
    z_prior: NodeId,
}

/// Builds both pair-direction probabilities. `detach_samples` realizes the
/// discriminator phase (gradients stop at the reparametrized samples);
/// otherwise the encoder/generator are live and the discriminator is frozen.
fn build_ali_graph(
    model: &AliModel,
    data: &Tensor,
    prior: &Tensor,
    noise: &AliNoise,
    detach_samples: bool,
) -> Result<AliGraph> {
    let (n, dx) = data.as_matrix()?;
    let (m, dz) = prior.as_matrix()?;
    if n == 0 || m == 0 {
        return Err(Error::Contract("batches must be non-empty".into()));
    }
    if dx != model.x_dim() || dz != model.latent_dim {
        return Err(Error::Dimension("batch widths do not match the model".into()));
    }
    if noise.z.shape() != [n, dz] || noise.x.shape() != [m, dx] {
        return Err(Error::Dimension(format!(
            "noise shapes {:?}/{:?} do not match batches {}x{} / {}x{}",
            noise.z.shape(),
            noise.x.shape(),
            n,
            dz,
            m,
            dx
        )));
    }
    let mut g = Graph::new();
    let enc = model.encoder.bind(&mut g, true);
    let gen = model.generator.bind(&mut g, true);
    // discriminator trains in its own phase and is frozen in the other
    let disc = model.discriminator.bind(&mut g, detach_samples);

    let x_data = g.input(data.clone());
    let z_samp_live = head_sample(&mut g, &enc, x_data, &noise.z, dz);
    let z_samp = if detach_samples { g.detach(z_samp_live) } else { z_samp_live };
    let pair_data = g.concat_cols(x_data, z_samp);
    let logit_data = disc.forward(&mut g, pair_data);
    let p_data = d_prob(&mut g, logit_data);

    let z_prior = g.input(prior.clone());
    let x_samp_live = head_sample(&mut g, &gen, z_prior, &noise.x, dx);
    let x_samp = if detach_samples { g.detach(x_samp_live) } else { x_samp_live };
    let pair_prior = g.concat_cols(x_samp, z_prior);
    let logit_prior = disc.forward(&mut g, pair_prior);
    let p_prior = d_prob(&mut g, logit_prior);

    Ok(AliGraph { graph: g, enc, gen, disc, p_data, p_prior, z_prior })
}

fn mean_ln(g: &mut Graph, p: NodeId, n: usize) -> NodeId {
    let ln_p = g.ln(p);
    let s = g.sum(ln_p);
    g.scale(s, 1.0 / n as f64)
}

fn mean_ln_one_minus(g: &mut Graph, p: NodeId, n: usize) -> NodeId {
    let neg = g.neg(p);
    let one_minus = g.add_const(neg, 1.0);
    let ln_q = g.ln(one_minus);
    let s = g.sum(ln_q);
    g.scale(s, 1.0 / n as f64)
}

/// Joint-discriminator loss
/// `-mean[ln D(x, z~p(z|x))] - mean[ln(1 - D(x~q(x|z), z))]`
/// over reparametrized samples, with gradients stopped at the samples.
pub fn ali_d_loss(model: &AliModel, data: &Tensor, prior: &Tensor, noise: &AliNoise) -> Result<f64> {
    Ok(ali_d_loss_grad(model, data, prior, noise)?.0)
}

/// As [`ali_d_loss`], returning `(discriminator grad, encoder grad,
/// generator grad)`; the last two are exactly zero.
pub fn ali_d_loss_grad(
    model: &AliModel,
    data: &Tensor,
    prior: &Tensor,
    noise: &AliNoise,
) -> Result<(f64, ParamVector, ParamVector, ParamVector)> {
    let mut b = build_ali_graph(model, data, prior, noise, true)?;
    let n = data.shape()[0];
    let m = prior.shape()[0];
    let g = &mut b.graph;
    let t1 = mean_ln(g, b.p_data, n);
    let t2 = mean_ln_one_minus(g, b.p_prior, m);
    let s = g.add(t1, t2);
    let loss = g.neg(s);
    let grads = g.backward(loss)?;
    Ok((
        g.value(loss).item(),
        model.discriminator.grad_from(&b.disc, &grads),
        model.encoder.grad_from(&b.enc, &grads),
        model.generator.grad_from(&b.gen, &grads),
    ))
}

/// Breakdown of the encoder/generator loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliGLoss {
    pub total: f64,
    /// Contribution of the data-direction pairs.
    pub term_data: f64,
    /// Contribution of the prior-direction pairs.
    pub term_prior: f64,
    /// Analytic generator-drift KL when enabled.
    pub analytic_kl: Option<f64>,
}

/// Encoder/generator loss in the requested variant, discriminator frozen.
/// With `analytic_kl`, adds `mean_z KL(q(x|z) || q_old(x|z))` against the
/// lagged generator snapshot (closed form for the Gaussian heads).
pub fn ali_g_loss(
    model: &AliModel,
    data: &Tensor,
    prior: &Tensor,
    noise: &AliNoise,
    variant: AliVariant,
    analytic_kl: bool,
) -> Result<AliGLoss> {
    Ok(ali_g_loss_grad(model, data, prior, noise, variant, analytic_kl)?.0)
}

/// As [`ali_g_loss`], returning `(encoder grad, generator grad,
/// discriminator grad)`; the discriminator gradient is exactly zero.
pub fn ali_g_loss_grad(
    model: &AliModel,
    data: &Tensor,
    prior: &Tensor,
    noise: &AliNoise,
    variant: AliVariant,
    analytic_kl: bool,
) -> Result<(AliGLoss, ParamVector, ParamVector, ParamVector)> {
    let mut b = build_ali_graph(model, data, prior, noise, false)?;
    let n = data.shape()[0];
    let m = prior.shape()[0];

    let (term_data, term_prior) = {
        let g = &mut b.graph;
        match variant {
            AliVariant::Paper => {
                let t1 = mean_ln(g, b.p_data, n);
                let t2 = mean_ln(g, b.p_prior, m);
                (g.neg(t1), g.neg(t2))
            }
            AliVariant::MinmaxA => {
                let t1 = mean_ln(g, b.p_data, n);
                let t2 = mean_ln_one_minus(g, b.p_prior, m);
                (t1, t2)
            }
            AliVariant::MinmaxB => {
                let t1 = mean_ln_one_minus(g, b.p_data, n);
                let t2 = mean_ln(g, b.p_prior, m);
                let n1 = g.neg(t1);
                let n2 = g.neg(t2);
                (n1, n2)
            }
        }
    };

    let base = b.graph.add(term_data, term_prior);
    let (total, kl_value) = if analytic_kl {
        let kl = analytic_drift_kl(model, &mut b, prior, m)?;
        let t = b.graph.add(base, kl);
        (t, Some(b.graph.value(kl).item()))
    } else {
        (base, None)
    };

    let grads = b.graph.backward(total)?;
    let loss = AliGLoss {
        total: b.graph.value(total).item(),
        term_data: b.graph.value(term_data).item(),
        term_prior: b.graph.value(term_prior).item(),
        analytic_kl: kl_value,
    };
    Ok((
        loss,
        model.encoder.grad_from(&b.enc, &grads),
        model.generator.grad_from(&b.gen, &grads),
        model.discriminator.grad_from(&b.disc, &grads),
    ))
}

/// `mean_z KL(q(x|z) || q_old(x|z))` on the tape: both heads are diagonal
/// Gaussians, the old one a constant from the snapshot.
fn analytic_drift_kl(model: &AliModel, b: &mut AliGraph, prior: &Tensor, m: usize) -> Result<NodeId> {
    let dx = model.x_dim();
    let old = model.old_generator()?;
    let old_out = old.forward(prior)?;
    let (rows, _) = old_out.as_matrix()?;
    let mut mu_old = Vec::with_capacity(rows * dx);
    let mut lv_old = Vec::with_capacity(rows * dx);
    for r in 0..rows {
        let row = old_out.row(r);
        mu_old.extend_from_slice(&row[..dx]);
        lv_old.extend(row[dx..].iter().map(|&v| v.max(LV_FLOOR)));
    }
    let inv_var_old: Vec<f64> = lv_old.iter().map(|&lv| (-lv).exp()).collect();

    let g = &mut b.graph;
    // head_sample keeps mu/lv internal; run the head again on the same
    // bound parameters to expose them for the closed-form KL
    let gen_head = b.gen.forward(g, b.z_prior);
    let mu = g.slice_cols(gen_head, 0, dx);
    let lv_raw = g.slice_cols(gen_head, dx, dx);
    let lv = g.clamp(lv_raw, LV_FLOOR, f64::INFINITY);

    let mu_old_c = g.input(Tensor::new(vec![rows, dx], mu_old));
    let lv_old_c = g.input(Tensor::new(vec![rows, dx], lv_old.clone()));
    let inv_old_c = g.input(Tensor::new(vec![rows, dx], inv_var_old));

    // 1/2 [ e^{lv - lv_old} + (mu - mu_old)^2 e^{-lv_old} - 1 + lv_old - lv ]
    let lv_diff = g.sub(lv, lv_old_c);
    let ratio = g.exp(lv_diff);
    let mu_diff = g.sub(mu, mu_old_c);
    let mu_sq = g.square(mu_diff);
    let maha = g.mul(mu_sq, inv_old_c);
    let t = g.add(ratio, maha);
    let t = g.add_const(t, -1.0);
    let old_minus_new = g.sub(lv_old_c, lv);
    let t = g.add(t, old_minus_new);
    let s = g.sum(t);
    Ok(g.scale(s, 0.5 / m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::rng::{stream, Stream};

    fn random_model(seed: u64) -> AliModel {
        let mut rng = stream(seed, Stream::Init);
        AliModel::new_random(2, 2, &[8], &mut rng)
    }

    fn model_with_constant_d(logit: f64, seed: u64) -> AliModel {
        let mut m = random_model(seed);
        let mut d = Mlp::zeros(&[4, 1], Activation::Relu, Activation::Identity);
        let nw = d.param_count();
        d.params_mut().values_mut()[nw - 1] = logit;
        m.discriminator = d;
        m
    }

    fn batches(seed: u64, n: usize, m: usize) -> (Tensor, Tensor, AliNoise) {
        let mut rng = stream(seed, Stream::Data);
        let data = normal_tensor(&mut rng, &[n, 2]);
        let prior = normal_tensor(&mut rng, &[m, 2]);
        let noise = AliNoise {
            z: normal_tensor(&mut rng, &[n, 2]),
            x: normal_tensor(&mut rng, &[m, 2]),
        };
        (data, prior, noise)
    }

    #[test]
    fn d_loss_at_half_is_two_ln_two() {
        let model = model_with_constant_d(0.0, 1);
        let (data, prior, noise) = batches(1, 5, 5);
        let loss = ali_d_loss(&model, &data, &prior, &noise).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn d_phase_sends_zero_gradient_to_heads() {
        let model = random_model(2);
        let (data, prior, noise) = batches(2, 6, 4);
        let (_, d_grad, enc_grad, gen_grad) = ali_d_loss_grad(&model, &data, &prior, &noise).unwrap();
        assert!(enc_grad.values().iter().all(|&v| v == 0.0));
        assert!(gen_grad.values().iter().all(|&v| v == 0.0));
        assert!(d_grad.values().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn d_loss_matches_hand_composition() {
        let model = random_model(3);
        let (data, prior, noise) = batches(3, 3, 2);
        let loss = ali_d_loss(&model, &data, &prior, &noise).unwrap();

        let mut oracle = 0.0;
        for i in 0..3 {
            let x = data.row(i);
            let z = reparam_batch(
                &model.encoder,
                &Tensor::from_rows(&[x.to_vec()]),
                &Tensor::from_rows(&[noise.z.row(i).to_vec()]),
            );
            let mut pair = x.to_vec();
            pair.extend_from_slice(z.row(0));
            let logit = model.discriminator.forward(&Tensor::from_vec(pair)).unwrap();
            let p = crate::nn::graph::sigmoid(logit.item()).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            oracle += -p.ln() / 3.0;
        }
        for j in 0..2 {
            let z = prior.row(j);
            let x = reparam_batch(
                &model.generator,
                &Tensor::from_rows(&[z.to_vec()]),
                &Tensor::from_rows(&[noise.x.row(j).to_vec()]),
            );
            let mut pair = x.row(0).to_vec();
            pair.extend_from_slice(z);
            let logit = model.discriminator.forward(&Tensor::from_vec(pair)).unwrap();
            let p = crate::nn::graph::sigmoid(logit.item()).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            oracle += -(1.0 - p).ln() / 2.0;
        }
        assert!((loss - oracle).abs() < 1e-12, "{} vs {}", loss, oracle);
    }

    #[test]
    fn g_loss_constant_d_values() {
        let model = model_with_constant_d(0.0, 4);
        let (data, prior, noise) = batches(4, 5, 5);
        let paper = ali_g_loss(&model, &data, &prior, &noise, AliVariant::Paper, false).unwrap();
        assert!((paper.total - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let mmb = ali_g_loss(&model, &data, &prior, &noise, AliVariant::MinmaxB, false).unwrap();
        assert!((mmb.total - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let mma = ali_g_loss(&model, &data, &prior, &noise, AliVariant::MinmaxA, false).unwrap();
        assert!((mma.total + 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn constant_d_gives_heads_exactly_zero_gradient() {
        // D with zero weights: its output cannot depend on (x, z), so the
        // paper-variant loss is flat in the encoder and generator
        let model = model_with_constant_d(0.7, 5);
        let (data, prior, noise) = batches(5, 4, 4);
        let (loss, eg, gg, dg) =
            ali_g_loss_grad(&model, &data, &prior, &noise, AliVariant::Paper, false).unwrap();
        let d = crate::nn::graph::sigmoid(0.7);
        assert!((loss.total - (-2.0 * d.ln())).abs() < 1e-12);
        assert!(eg.values().iter().all(|&v| v == 0.0));
        assert!(gg.values().iter().all(|&v| v == 0.0));
        assert!(dg.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_expectation_batches_double_the_term() {
        // both directions see identical pairs: zero-weight heads emit
        // constant (mu, lv), data/prior chosen to reproduce those constants
        let mut model = model_with_constant_d(0.4, 6);
        let mut enc = Mlp::zeros(&[2, 4], Activation::Tanh, Activation::Identity);
        enc.params_mut().values_mut()[8..].copy_from_slice(&[0.5, -0.3, 0.0, 0.0]); // mu=(0.5,-0.3), lv=0
        let mut gen = Mlp::zeros(&[2, 4], Activation::Tanh, Activation::Identity);
        gen.params_mut().values_mut()[8..].copy_from_slice(&[1.2, 0.9, 0.0, 0.0]); // mu=(1.2,0.9), lv=0
        model.encoder = enc;
        model.generator = gen;
        // data rows equal generator mean; prior rows equal encoder mean
        let data = Tensor::from_rows(&vec![vec![1.2, 0.9]; 3]);
        let prior = Tensor::from_rows(&vec![vec![0.5, -0.3]; 3]);
        let noise = AliNoise { z: Tensor::zeros(vec![3, 2]), x: Tensor::zeros(vec![3, 2]) };
        let loss = ali_g_loss(&model, &data, &prior, &noise, AliVariant::Paper, false).unwrap();
        assert!((loss.term_data - loss.term_prior).abs() < 1e-12);
        assert!((loss.total - 2.0 * loss.term_data).abs() < 1e-12);
    }

    #[test]
    fn g_phase_sends_zero_gradient_to_discriminator() {
        let model = random_model(7);
        let (data, prior, noise) = batches(7, 5, 5);
        for variant in [AliVariant::Paper, AliVariant::MinmaxA, AliVariant::MinmaxB] {
            let (_, eg, gg, dg) = ali_g_loss_grad(&model, &data, &prior, &noise, variant, false).unwrap();
            assert!(dg.values().iter().all(|&v| v == 0.0));
            assert!(eg.values().iter().any(|&v| v != 0.0), "{:?} encoder grad empty", variant);
            assert!(gg.values().iter().any(|&v| v != 0.0), "{:?} generator grad empty", variant);
        }
    }

    #[test]
    fn analytic_kl_zero_at_snapshot_and_positive_after_drift() {
        let mut model = random_model(8);
        model.refresh_snapshot();
        let (data, prior, noise) = batches(8, 4, 4);
        let at_snap = ali_g_loss(&model, &data, &prior, &noise, AliVariant::Paper, true).unwrap();
        assert_eq!(at_snap.analytic_kl, Some(0.0));
        let base = ali_g_loss(&model, &data, &prior, &noise, AliVariant::Paper, false).unwrap();
        assert!((at_snap.total - base.total).abs() < 1e-15);

        model.generator.params_mut().values_mut()[0] += 0.3;
        let drifted = ali_g_loss(&model, &data, &prior, &noise, AliVariant::Paper, true).unwrap();
        let kl = drifted.analytic_kl.unwrap();
        assert!(kl > 0.0);
        assert!((drifted.total - (drifted.term_data + drifted.term_prior + kl)).abs() < 1e-12);

        // oracle: closed-form KL from the plain forward heads
        use crate::dist::{kl_diag_gaussian, DiagGaussian};
        let old = model.old_generator().unwrap();
        let mut oracle = 0.0;
        for j in 0..4 {
            let z = Tensor::from_vec(prior.row(j).to_vec());
            let new_out = model.generator.forward(&z).unwrap();
            let old_out = old.forward(&z).unwrap();
            let dx = 2;
            let p = DiagGaussian::new(
                new_out.data()[..dx].to_vec(),
                new_out.data()[dx..].iter().map(|&v| v.max(LV_FLOOR)).collect(),
            )
            .unwrap();
            let q = DiagGaussian::new(
                old_out.data()[..dx].to_vec(),
                old_out.data()[dx..].iter().map(|&v| v.max(LV_FLOOR)).collect(),
            )
            .unwrap();
            oracle += kl_diag_gaussian(&p, &q).unwrap() / 4.0;
        }
        assert!((kl - oracle).abs() < 1e-12, "{} vs {}", kl, oracle);
    }

    #[test]
    fn missing_snapshot_with_analytic_kl_is_contract_error() {
        let model = random_model(9);
        let (data, prior, noise) = batches(9, 3, 3);
        assert!(matches!(
            ali_g_loss(&model, &data, &prior, &noise, AliVariant::Paper, true),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("paper".parse::<AliVariant>().unwrap(), AliVariant::Paper);
        assert_eq!("minmax-a".parse::<AliVariant>().unwrap(), AliVariant::MinmaxA);
        assert_eq!("minmax-b".parse::<AliVariant>().unwrap(), AliVariant::MinmaxB);
        assert!(matches!("wgan".parse::<AliVariant>(), Err(Error::Contract(_))));
    }
}
