//! Whole-model checkpoints on top of the flat parameter-file format: the
//! component networks are bundled into one value array and the architecture
//! rides in the header's meta JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::GanModel;
use crate::nn::{bundle, load_params, save_params, unbundle, Activation, Mlp, ParamVector};
use crate::vae::VaeModel;
use crate::variants::{AaeModel, AliModel};

#[derive(Serialize, Deserialize)]
struct MlpArch {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
}

impl MlpArch {
    fn of(m: &Mlp) -> MlpArch {
        MlpArch { sizes: m.sizes().to_vec(), hidden: m.hidden_activation(), output: m.output_activation() }
    }

    fn rebuild(&self, params: ParamVector) -> Result<Mlp> {
        Mlp::with_params(&self.sizes, self.hidden, self.output, params)
    }
}

/// Any trainable model in the crate.
#[derive(Debug, Clone)]
pub enum Checkpoint {
    Vae(VaeModel),
    Gan(GanModel),
    Aae(AaeModel),
    Ali(AliModel),
}

impl Checkpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            Checkpoint::Vae(_) => "vae",
            Checkpoint::Gan(_) => "gan",
            Checkpoint::Aae(_) => "aae",
            Checkpoint::Ali(_) => "ali",
        }
    }

    /// The deterministic sampler network, where the model has one
    /// (generator or decoder). ALI's generator is stochastic, so it has none.
    pub fn generator_net(&self) -> Option<&Mlp> {
        match self {
            Checkpoint::Vae(m) => Some(&m.decoder),
            Checkpoint::Gan(m) => Some(&m.generator),
            Checkpoint::Aae(m) => Some(&m.decoder),
            Checkpoint::Ali(_) => None,
        }
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let (parts, meta): (Vec<(&str, &ParamVector)>, serde_json::Value) = match ckpt {
        Checkpoint::Vae(m) => (
            vec![("encoder", m.encoder.params()), ("decoder", m.decoder.params())],
            serde_json::json!({
                "kind": "vae",
                "dec_log_var": m.dec_log_var,
                "nets": {"encoder": MlpArch::of(&m.encoder), "decoder": MlpArch::of(&m.decoder)},
            }),
        ),
        Checkpoint::Gan(m) => (
            vec![("generator", m.generator.params()), ("discriminator", m.discriminator.params())],
            serde_json::json!({
                "kind": "gan",
                "nets": {
                    "generator": MlpArch::of(&m.generator),
                    "discriminator": MlpArch::of(&m.discriminator),
                },
            }),
        ),
        Checkpoint::Aae(m) => (
            vec![
                ("encoder", m.encoder.params()),
                ("decoder", m.decoder.params()),
                ("discriminator", m.discriminator.params()),
            ],
            serde_json::json!({
                "kind": "aae",
                "nets": {
                    "encoder": MlpArch::of(&m.encoder),
                    "decoder": MlpArch::of(&m.decoder),
                    "discriminator": MlpArch::of(&m.discriminator),
                },
            }),
        ),
        Checkpoint::Ali(m) => (
            vec![
                ("encoder", m.encoder.params()),
                ("generator", m.generator.params()),
                ("discriminator", m.discriminator.params()),
            ],
            serde_json::json!({
                "kind": "ali",
                "nets": {
                    "encoder": MlpArch::of(&m.encoder),
                    "generator": MlpArch::of(&m.generator),
                    "discriminator": MlpArch::of(&m.discriminator),
                },
            }),
        ),
    };
    let packed = bundle(&parts);
    save_params(path, &packed, &meta)
}

fn net(meta: &serde_json::Value, packed: &ParamVector, name: &str) -> Result<Mlp> {
    let arch: MlpArch = serde_json::from_value(
        meta.get("nets")
            .and_then(|n| n.get(name))
            .ok_or_else(|| Error::Format(format!("checkpoint meta lacks net {:?}", name)))?
            .clone(),
    )?;
    arch.rebuild(unbundle(packed, name)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (packed, meta) = load_params(path)?;
    let kind = meta
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| Error::Format("checkpoint meta lacks kind".into()))?;
    match kind {
        "vae" => {
            let dec_log_var = meta
                .get("dec_log_var")
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Error::Format("vae checkpoint lacks dec_log_var".into()))?;
            let model = VaeModel::new(
                net(&meta, &packed, "encoder")?,
                net(&meta, &packed, "decoder")?,
                dec_log_var,
            )?;
            Ok(Checkpoint::Vae(model))
        }
        "gan" => Ok(Checkpoint::Gan(GanModel::new(
            net(&meta, &packed, "generator")?,
            net(&meta, &packed, "discriminator")?,
        )?)),
        "aae" => Ok(Checkpoint::Aae(AaeModel::new(
            net(&meta, &packed, "encoder")?,
            net(&meta, &packed, "decoder")?,
            net(&meta, &packed, "discriminator")?,
        )?)),
        "ali" => Ok(Checkpoint::Ali(AliModel::new(
            net(&meta, &packed, "encoder")?,
            net(&meta, &packed, "generator")?,
            net(&meta, &packed, "discriminator")?,
        )?)),
        other => Err(Error::Format(format!("unknown checkpoint kind {:?}", other))),
    }
}
