//! Adversarial autoencoder: a deterministic encoder whose aggregate code
//! distribution is pushed onto the standard-normal prior by a code-space
//! discriminator, plus a decoder trained jointly through a reconstruction
//! penalty.
//!
//! Convention note: here `D(z)` is the probability that `z` is a *prior*
//! draw (`p(y=0|z)` with `y = 0` labelling the prior side), so the
//! discriminator loss places `log D` on prior samples and `log(1 - D)` on
//! encoder codes. This is the opposite sign placement from the GAN
//! discriminator and is kept as is.

use crate::dist::PROB_CLAMP;
use crate::error::{Error, Result};
use crate::nn::graph::{Graph, NodeId};
use crate::nn::{Mlp, ParamVector, Tensor};

/// Deterministic encoder `E`, decoder `G`, code discriminator `D`.
#[derive(Debug, Clone)]
pub struct AaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub discriminator: Mlp,
    pub latent_dim: usize,
}

impl AaeModel {
    pub fn new(encoder: Mlp, decoder: Mlp, discriminator: Mlp) -> Result<AaeModel> {
        let latent_dim = encoder.out_dim();
        if decoder.in_dim() != latent_dim || discriminator.in_dim() != latent_dim {
            return Err(Error::Contract(format!(
                "encoder output {}, decoder input {}, discriminator input {} must agree",
                latent_dim,
                decoder.in_dim(),
                discriminator.in_dim()
            )));
        }
        if discriminator.out_dim() != 1 {
            return Err(Error::Contract("code discriminator must emit a single logit".into()));
        }
        if decoder.out_dim() != encoder.in_dim() {
            return Err(Error::Contract("decoder output must match encoder input".into()));
        }
        Ok(AaeModel { encoder, decoder, discriminator, latent_dim })
    }

    pub fn new_random<R: rand::Rng>(
        x_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> AaeModel {
        use crate::nn::Activation;
        let mut es = vec![x_dim];
        es.extend_from_slice(hidden);
        es.push(latent_dim);
        let mut gs = vec![latent_dim];
        gs.extend_from_slice(hidden);
        gs.push(x_dim);
        let mut ds = vec![latent_dim];
        ds.extend_from_slice(hidden);
        ds.push(1);
        let encoder = Mlp::new(&es, Activation::Tanh, Activation::Identity, rng);
        let decoder = Mlp::new(&gs, Activation::Tanh, Activation::Identity, rng);
        let discriminator = Mlp::new(&ds, Activation::Relu, Activation::Identity, rng);
        AaeModel::new(encoder, decoder, discriminator).unwrap()
    }

    pub fn x_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    /// Generative samples: decoder outputs at prior draws.
    pub fn sample<R: rand::Rng>(&self, n: usize, rng: &mut R) -> Tensor {
        let z = crate::rng::normal_tensor(rng, &[n, self.latent_dim]);
        self.decoder.forward(&z).expect("decoder accepts prior draws")
    }
}

fn d_prob(g: &mut Graph, logit: NodeId) -> NodeId {
    let p = g.sigmoid(logit);
    g.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Code-discriminator loss
/// `-mean[ln(1 - D(E(x)))] - mean[ln D(z_prior)]`
/// with gradients stopped at the encoder codes.
pub fn aae_d_loss(model: &AaeModel, data: &Tensor, prior: &Tensor) -> Result<f64> {
    Ok(aae_d_loss_grad(model, data, prior)?.0)
}

/// As [`aae_d_loss`], returning `(discriminator grad, encoder grad)`; the
/// encoder gradient is exactly zero.
pub fn aae_d_loss_grad(
    model: &AaeModel,
    data: &Tensor,
    prior: &Tensor,
) -> Result<(f64, ParamVector, ParamVector)> {
    let (n, dx) = data.as_matrix()?;
    let (m, dz) = prior.as_matrix()?;
    if n == 0 || m == 0 {
        return Err(Error::Contract("batches must be non-empty".into()));
    }
    if dx != model.x_dim() || dz != model.latent_dim {
        return Err(Error::Dimension("batch widths do not match the model".into()));
    }
    let mut g = Graph::new();
    let enc = model.encoder.bind(&mut g, true);
    let disc = model.discriminator.bind(&mut g, true);

    let x = g.input(data.clone());
    let codes_live = enc.forward(&mut g, x);
    let codes = g.detach(codes_live);
    let logit_c = disc.forward(&mut g, codes);
    let pc = d_prob(&mut g, logit_c);
    let neg = g.neg(pc);
    let one_minus = g.add_const(neg, 1.0);
    let ln_c = g.ln(one_minus);
    let s_c = g.sum(ln_c);
    let term_codes = g.scale(s_c, -1.0 / n as f64);

    let zp = g.input(prior.clone());
    let logit_p = disc.forward(&mut g, zp);
    let pp = d_prob(&mut g, logit_p);
    let ln_p = g.ln(pp);
    let s_p = g.sum(ln_p);
    let term_prior = g.scale(s_p, -1.0 / m as f64);

    let loss = g.add(term_codes, term_prior);
    let grads = g.backward(loss)?;
    Ok((
        g.value(loss).item(),
        model.discriminator.grad_from(&disc, &grads),
        model.encoder.grad_from(&enc, &grads),
    ))
}

/// Breakdown of the joint encoder/decoder loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AaeJointLoss {
    pub total: f64,
    pub adversarial: f64,
    /// Unweighted `mean||x - G(E(x))||^2`.
    pub reconstruction: f64,
    pub lambda_rec: f64,
}

/// Joint loss `mean[-ln D(E(x)) + lambda_rec ||x - G(E(x))||^2]` with the
/// discriminator frozen. At `lambda_rec = 0` it reduces bitwise to the
/// adversarial term.
pub fn aae_joint_loss(model: &AaeModel, data: &Tensor, lambda_rec: f64) -> Result<AaeJointLoss> {
    Ok(aae_joint_loss_grad(model, data, lambda_rec)?.0)
}

/// As [`aae_joint_loss`], returning `(encoder grad, decoder grad,
/// discriminator grad)`; the discriminator gradient is exactly zero.
pub fn aae_joint_loss_grad(
    model: &AaeModel,
    data: &Tensor,
    lambda_rec: f64,
) -> Result<(AaeJointLoss, ParamVector, ParamVector, ParamVector)> {
    let (n, dx) = data.as_matrix()?;
    if n == 0 {
        return Err(Error::Contract("batch must be non-empty".into()));
    }
    if dx != model.x_dim() {
        return Err(Error::Dimension("batch width does not match the model".into()));
    }
    if lambda_rec < 0.0 {
        return Err(Error::Contract("lambda_rec must be >= 0".into()));
    }
    let mut g = Graph::new();
    let enc = model.encoder.bind(&mut g, true);
    let dec = model.decoder.bind(&mut g, true);
    let disc = model.discriminator.bind(&mut g, false);

    let x = g.input(data.clone());
    let codes = enc.forward(&mut g, x);
    let logit = disc.forward(&mut g, codes);
    let p = d_prob(&mut g, logit);
    let ln_p = g.ln(p);
    let s = g.sum(ln_p);
    let adv = g.scale(s, -1.0 / n as f64);

    let recon_x = dec.forward(&mut g, codes);
    let diff = g.sub(x, recon_x);
    let sq = g.square(diff);
    let sq_sum = g.sum(sq);
    let recon = g.scale(sq_sum, 1.0 / n as f64);

    let total = if lambda_rec > 0.0 {
        let weighted = g.scale(recon, lambda_rec);
        g.add(adv, weighted)
    } else {
        adv
    };
    let grads = g.backward(total)?;
    let loss = AaeJointLoss {
        total: g.value(total).item(),
        adversarial: g.value(adv).item(),
        reconstruction: g.value(recon).item(),
        lambda_rec,
    };
    Ok((
        loss,
        model.encoder.grad_from(&enc, &grads),
        model.decoder.grad_from(&dec, &grads),
        model.discriminator.grad_from(&disc, &grads),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::rng::{normal_tensor, stream, Stream};

    fn random_model(seed: u64) -> AaeModel {
        let mut rng = stream(seed, Stream::Init);
        AaeModel::new_random(2, 2, &[8], &mut rng)
    }

    fn model_with_constant_d(logit: f64, seed: u64) -> AaeModel {
        let mut m = random_model(seed);
        let mut d = Mlp::zeros(&[2, 1], Activation::Relu, Activation::Identity);
        let nw = d.param_count();
        d.params_mut().values_mut()[nw - 1] = logit;
        m.discriminator = d;
        m
    }

    #[test]
    fn d_loss_at_half_is_two_ln_two() {
        let model = model_with_constant_d(0.0, 1);
        let mut rng = stream(1, Stream::Data);
        let data = normal_tensor(&mut rng, &[6, 2]);
        let prior = normal_tensor(&mut rng, &[6, 2]);
        let loss = aae_d_loss(&model, &data, &prior).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn d_loss_matches_per_sample_loop() {
        let model = random_model(2);
        let mut rng = stream(2, Stream::Data);
        let data = normal_tensor(&mut rng, &[3, 2]);
        let prior = normal_tensor(&mut rng, &[3, 2]);
        let loss = aae_d_loss(&model, &data, &prior).unwrap();
        let mut oracle = 0.0;
        for i in 0..3 {
            let code = model.encoder.forward(&Tensor::from_vec(data.row(i).to_vec())).unwrap();
            let logit = model.discriminator.forward(&code).unwrap();
            let p = crate::nn::graph::sigmoid(logit.item()).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            oracle += -(1.0 - p).ln() / 3.0;
        }
        for i in 0..3 {
            let logit = model.discriminator.forward(&Tensor::from_vec(prior.row(i).to_vec())).unwrap();
            let p = crate::nn::graph::sigmoid(logit.item()).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            oracle += -p.ln() / 3.0;
        }
        assert!((loss - oracle).abs() < 1e-12);
    }

    #[test]
    fn identity_encoder_makes_terms_symmetric() {
        // encoder = identity, data == prior draws: the two terms see the same
        // code set, so swapping data and prior leaves the loss unchanged
        let mut model = random_model(3);
        let mut enc = Mlp::zeros(&[2, 2], Activation::Tanh, Activation::Identity);
        enc.params_mut().values_mut()[0] = 1.0;
        enc.params_mut().values_mut()[3] = 1.0;
        model.encoder = enc;
        let mut rng = stream(3, Stream::Data);
        let p = normal_tensor(&mut rng, &[5, 2]);
        let a = aae_d_loss(&model, &p, &p).unwrap();
        let b = aae_d_loss(&model, &p, &p).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        // and the hand value: -mean[ln(1-D) + ln D] over the same points
        let mut oracle = 0.0;
        for i in 0..5 {
            let logit = model.discriminator.forward(&Tensor::from_vec(p.row(i).to_vec())).unwrap();
            let d = crate::nn::graph::sigmoid(logit.item()).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            oracle += (-(1.0 - d).ln() - d.ln()) / 5.0;
        }
        assert!((a - oracle).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_perfect_autoencoder_has_zero_reconstruction() {
        // identity encoder and decoder on 2-D data
        let mut model = random_model(4);
        let mut id2 = Mlp::zeros(&[2, 2], Activation::Tanh, Activation::Identity);
        id2.params_mut().values_mut()[0] = 1.0;
        id2.params_mut().values_mut()[3] = 1.0;
        model.encoder = id2.clone();
        model.decoder = id2;
        let mut rng = stream(4, Stream::Data);
        let data = normal_tensor(&mut rng, &[4, 2]);
        let loss = aae_joint_loss(&model, &data, 1.0).unwrap();
        assert_eq!(loss.reconstruction, 0.0);
        assert_eq!(loss.total.to_bits(), loss.adversarial.to_bits());
    }

    #[test]
    fn joint_loss_constant_d_adversarial_term() {
        let model = model_with_constant_d(0.0, 5);
        let mut rng = stream(5, Stream::Data);
        let data = normal_tensor(&mut rng, &[7, 2]);
        let loss = aae_joint_loss(&model, &data, 0.3).unwrap();
        assert!((loss.adversarial - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn lambda_rec_zero_is_adversarial_alone() {
        let model = random_model(6);
        let mut rng = stream(6, Stream::Data);
        let data = normal_tensor(&mut rng, &[5, 2]);
        let (loss, eg, dg, _) = aae_joint_loss_grad(&model, &data, 0.0).unwrap();
        assert!(loss.reconstruction > 0.0);
        assert_eq!(loss.total.to_bits(), loss.adversarial.to_bits());
        // decoder receives no gradient without the reconstruction term
        assert!(dg.values().iter().all(|&v| v == 0.0));
        assert!(eg.values().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn phase_discipline_is_exact() {
        let model = random_model(7);
        let mut rng = stream(7, Stream::Data);
        let data = normal_tensor(&mut rng, &[5, 2]);
        let prior = normal_tensor(&mut rng, &[5, 2]);
        let (_, _, enc_grad) = aae_d_loss_grad(&model, &data, &prior).unwrap();
        assert!(enc_grad.values().iter().all(|&v| v == 0.0));
        let (_, eg, dg, disc_grad) = aae_joint_loss_grad(&model, &data, 0.5).unwrap();
        assert!(disc_grad.values().iter().all(|&v| v == 0.0));
        assert!(eg.values().iter().any(|&v| v != 0.0));
        assert!(dg.values().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn reconstruction_term_is_permutation_invariant() {
        let model = random_model(8);
        let mut rng = stream(8, Stream::Data);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| crate::rng::normal_vec(&mut rng, 2)).collect();
        let base = aae_joint_loss(&model, &Tensor::from_rows(&rows), 1.0).unwrap();
        let mut permuted = rows.clone();
        permuted.rotate_left(2);
        permuted.swap(0, 3);
        let perm = aae_joint_loss(&model, &Tensor::from_rows(&permuted), 1.0).unwrap();
        assert!((base.reconstruction - perm.reconstruction).abs() < 1e-12);
        assert!((base.total - perm.total).abs() < 1e-12);
    }
}
