//! Network definitions: the latent-representation model and the
//! MC-dropout segmentation network.
//!
//! Parameters live in a flat [`Params`] store. A forward pass first binds
//! the store onto a tape, then layers look their tensors up by index.

mod checkpoint;
mod layers;
mod lrl;
mod segnet;

pub use checkpoint::{Checkpointable, load_lrl, load_segnet, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{Conv, Decoder, Encoder, Linear};
pub use lrl::{LrlModel, LrlOutput, LrlPass};
pub use segnet::SegNet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::GaussianError;
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint not found: {0}")]
    CheckpointNotFound(String),
    #[error("corrupt checkpoint {path}: {detail}")]
    Checkpoint { path: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Which KL term the latent head is trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlVariant {
    /// Per-slice Gaussians fused by product of experts.
    #[default]
    Fused,
    /// One Gaussian for the whole volume.
    Volume,
    /// Per-slice diagonal Gaussians.
    Ic,
}

impl KlVariant {
    fn code(self) -> f64 {
        match self {
            KlVariant::Fused => 0.0,
            KlVariant::Volume => 1.0,
            KlVariant::Ic => 2.0,
        }
    }

    fn from_code(c: f64) -> Option<Self> {
        match c as i64 {
            0 => Some(KlVariant::Fused),
            1 => Some(KlVariant::Volume),
            2 => Some(KlVariant::Ic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub classes: usize,
    /// Channel widths of the two encoder stages.
    pub channels: [usize; 2],
    pub latent_dim: usize,
    /// Channels the latent vector is projected to before injection.
    pub latent_channels: usize,
    /// 3³ convolutions per encoder/decoder stage.
    pub convs_per_stage: usize,
    pub dropout: f64,
    pub share_encoders: bool,
    pub kl_variant: KlVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            channels: [8, 16],
            latent_dim: 8,
            latent_channels: 4,
            convs_per_stage: 1,
            dropout: 0.2,
            share_encoders: false,
            kl_variant: KlVariant::Fused,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.classes < 2 || self.classes > 255 {
            return bad(format!("classes must be in 2..=255, got {}", self.classes));
        }
        if self.channels.contains(&0) || self.latent_channels == 0 || self.convs_per_stage == 0 {
            return bad("channel counts and convs_per_stage must be positive".into());
        }
        if self.latent_dim < 2 || self.latent_dim > 64 {
            return bad(format!("latent_dim must be in 2..=64, got {}", self.latent_dim));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    /// Depth receptive field of the latent encoder.
    pub fn receptive_field(&self) -> usize {
        2 * (2 * self.convs_per_stage) + 1
    }

    fn conv_count(cin: usize, cout: usize) -> usize {
        cout * cin * 27 + cout
    }

    fn encoder_count(&self, cin: usize) -> usize {
        let [c1, c2] = self.channels;
        let k = self.convs_per_stage;
        Self::conv_count(cin, c1)
            + (k - 1) * Self::conv_count(c1, c1)
            + Self::conv_count(c1, c2)
            + (k - 1) * Self::conv_count(c2, c2)
    }

    fn decoder_count(&self, bottom_in: usize, cout: usize) -> usize {
        let [c1, c2] = self.channels;
        let k = self.convs_per_stage;
        Self::conv_count(bottom_in, c2)
            + (k - 1) * Self::conv_count(c2, c2)
            + Self::conv_count(c2 + c1, c1)
            + (k - 1) * Self::conv_count(c1, c1)
            + Self::conv_count(c1, cout)
    }

    /// Closed-form scalar parameter count of an [`LrlModel`].
    pub fn lrl_param_count(&self) -> usize {
        let [_, c2] = self.channels;
        let (d, p) = (self.latent_dim, self.latent_channels);
        let encoders = if self.share_encoders { 1 } else { 2 } * self.encoder_count(1);
        let off = match self.kl_variant {
            KlVariant::Ic => 0,
            _ => (c2 + 1) * (d * (d - 1) / 2),
        };
        let head = 2 * (c2 + 1) * d + off;
        let proj = 2 * (d + 1) * p;
        encoders + head + proj + self.decoder_count(p, 1) + self.decoder_count(c2 + p, self.classes)
    }

    /// Closed-form scalar parameter count of a [`SegNet`].
    pub fn segnet_param_count(&self) -> usize {
        self.encoder_count(1) + self.decoder_count(self.channels[1], self.classes)
    }

    fn to_meta(&self) -> Tensor {
        Tensor::from_vec(vec![
            self.classes as f64,
            self.channels[0] as f64,
            self.channels[1] as f64,
            self.latent_dim as f64,
            self.latent_channels as f64,
            self.convs_per_stage as f64,
            self.dropout,
            self.share_encoders as u8 as f64,
            self.kl_variant.code(),
        ])
    }

    fn from_meta(t: &Tensor) -> Option<Self> {
        let v = t.data();
        if v.len() != 9 || v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return None;
        }
        Some(Self {
            classes: v[0] as usize,
            channels: [v[1] as usize, v[2] as usize],
            latent_dim: v[3] as usize,
            latent_channels: v[4] as usize,
            convs_per_stage: v[5] as usize,
            dropout: v[6],
            share_encoders: v[7] != 0.0,
            kl_variant: KlVariant::from_code(v[8])?,
        })
    }
}

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl Params {
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// FNV-1a over the raw bits of every value.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in self.values.iter().flat_map(|t| t.data()) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    /// Places every parameter on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        Bound(
            self.values
                .iter()
                .map(|t| tape.leaf(t.clone(), trainable))
                .collect(),
        )
    }
}

/// Tape handles for a bound [`Params`] store.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    /// Wraps handles that are already on a tape, in store order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self(vars)
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl std::ops::Index<usize> for Bound {
    type Output = Var;
    fn index(&self, i: usize) -> &Var {
        &self.0[i]
    }
}

/// Normal samples with standard deviation `sqrt(2 / fan_in)`.
pub fn kaiming<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

/// Human-readable parameter table ending in the total count.
pub fn summary(params: &Params) -> String {
    let mut out = String::new();
    for (name, t) in params.iter() {
        out.push_str(&format!("{name:<28} {:?} {}\n", t.shape(), t.len()));
    }
    out.push_str(&format!("total parameters: {}\n", params.count()));
    out
}
