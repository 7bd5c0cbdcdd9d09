//! Encoder/decoder segmentation network with MC dropout after every
//! decoder stage.

use rand::Rng;

use super::{Bound, Decoder, Encoder, ModelConfig, ModelError, Params, Result};
use crate::tensor::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct SegNet {
    pub config: ModelConfig,
    pub params: Params,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl SegNet {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (ch, k) = (config.channels, config.convs_per_stage);
        let mut params = Params::default();
        let encoder = Encoder::new(&mut params, "enc", 1, ch, k, rng);
        let decoder = Decoder::new(&mut params, "dec", ch[1], ch, config.classes, k, rng);
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
        })
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn dropout_rate(&self) -> f64 {
        self.config.dropout
    }

    /// Logits `C×n×H×W` for `x` of shape `1×n×H×W`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        b: &Bound,
        x: Var,
        stochastic: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let shape = tape.shape(x);
        if shape.len() != 4 || shape[0] != 1 || shape[2] % 2 != 0 || shape[3] % 2 != 0 {
            return Err(ModelError::Config(format!(
                "input must be 1×n×H×W with even H, W; got {shape:?}"
            )));
        }
        let rate = self.config.dropout;
        let (skip, bottleneck) = self.encoder.forward(tape, b, x)?;
        let mut drop = |tape: &mut Tape, v: Var| Ok(tape.dropout(v, rate, stochastic, &mut *rng)?);
        self.decoder.forward(tape, b, bottleneck, skip, &mut drop)
    }
}
