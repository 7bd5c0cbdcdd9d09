//! Latent representation learning model.
//!
//! E1 encodes the volume and a linear head turns each slice's pooled
//! bottleneck features into a slice Gaussian. A sample from every slice
//! Gaussian is projected, broadcast over the slice and decoded by D1 into
//! a reconstruction. E2 encodes the volume again and D2 combines those
//! features with the same latent maps to produce class logits.

use rand::Rng;

use super::{Bound, Decoder, Encoder, KlVariant, Linear, ModelConfig, ModelError, Params, Result};
use crate::gaussian::{self, SliceGaussianVar, PRECISION_JITTER};
use crate::tensor::{Tape, Tensor, Var};

/// Lower bound on the diagonal of the precision Cholesky factor.
const DIAG_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LrlModel {
    pub config: ModelConfig,
    pub params: Params,
    pub encoder_rec: Encoder,
    pub encoder_seg: Encoder,
    pub decoder_rec: Decoder,
    pub decoder_seg: Decoder,
    head_mean: Linear,
    head_diag: Linear,
    head_off: Option<Linear>,
    proj_rec: Linear,
    proj_seg: Linear,
}

/// Which branches to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LrlPass {
    pub reconstruct: bool,
    pub segment: bool,
}

impl LrlPass {
    pub const FULL: Self = Self { reconstruct: true, segment: true };
    pub const UNLABELED: Self = Self { reconstruct: true, segment: false };
    pub const SEGMENT: Self = Self { reconstruct: false, segment: true };
}

#[derive(Debug, Clone)]
pub struct LrlOutput {
    /// One per slice, or a single one for the volume variant.
    pub gaussians: Vec<SliceGaussianVar>,
    pub kl: Var,
    /// Latent vector per slice, `n×D`.
    pub z: Var,
    /// `1×n×H×W`.
    pub recon: Option<Var>,
    /// `C×n×H×W`.
    pub seg_logits: Option<Var>,
}

impl LrlModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let (ch, k, d, p) = (c.channels, c.convs_per_stage, c.latent_dim, c.latent_channels);
        let mut params = Params::default();
        let encoder_rec = Encoder::new(&mut params, "e1", 1, ch, k, rng);
        let encoder_seg = if c.share_encoders {
            encoder_rec.clone()
        } else {
            Encoder::new(&mut params, "e2", 1, ch, k, rng)
        };
        let head_mean = Linear::new(&mut params, "head.mean", ch[1], d, rng);
        let head_diag = Linear::new(&mut params, "head.diag", ch[1], d, rng);
        let head_off = match c.kl_variant {
            KlVariant::Ic => None,
            _ => Some(Linear::new(&mut params, "head.off", ch[1], d * (d - 1) / 2, rng)),
        };
        let proj_rec = Linear::new(&mut params, "proj.rec", d, p, rng);
        let proj_seg = Linear::new(&mut params, "proj.seg", d, p, rng);
        let decoder_rec = Decoder::new(&mut params, "d1", p, ch, 1, k, rng);
        let decoder_seg = Decoder::new(&mut params, "d2", ch[1] + p, ch, c.classes, k, rng);
        Ok(Self {
            config,
            params,
            encoder_rec,
            encoder_seg,
            decoder_rec,
            decoder_seg,
            head_mean,
            head_diag,
            head_off,
            proj_rec,
            proj_seg,
        })
    }

    pub fn receptive_field(&self) -> usize {
        self.config.receptive_field()
    }

    /// Indices of the latent-head parameters.
    pub fn head_params(&self) -> Vec<usize> {
        let mut v = vec![self.head_mean.weight, self.head_diag.weight];
        v.extend(self.head_off.map(|l| l.weight));
        v
    }

    /// Number of noise vectors one forward pass consumes.
    pub fn noise_count(&self, depth: usize) -> usize {
        match self.config.kl_variant {
            KlVariant::Volume => 1,
            _ => depth,
        }
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Vec<Tensor> {
        gaussian::draw_noise(self.noise_count(depth), self.config.latent_dim, rng)
    }

    pub fn zero_noise(&self, depth: usize) -> Vec<Tensor> {
        vec![Tensor::zeros(&[self.config.latent_dim]); self.noise_count(depth)]
    }

    /// `x` is `1×n×H×W`; `noise` holds [`Self::noise_count`] vectors.
    pub fn forward(
        &self,
        tape: &mut Tape,
        b: &Bound,
        x: Var,
        noise: &[Tensor],
        pass: LrlPass,
    ) -> Result<LrlOutput> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 4 || shape[0] != 1 || shape[2] % 2 != 0 || shape[3] % 2 != 0 {
            return Err(ModelError::Config(format!(
                "input must be 1×n×H×W with even H, W; got {shape:?}"
            )));
        }
        let (n, h2, w2) = (shape[1], shape[2] / 2, shape[3] / 2);
        let d = self.config.latent_dim;

        let (skip1, bott1) = self.encoder_rec.forward(tape, b, x)?;
        let pooled = tape.mean_spatial(bott1)?;
        let mut feats = tape.transpose(pooled)?;
        if self.config.kl_variant == KlVariant::Volume {
            let avg = tape.constant(Tensor::full(&[1, n], 1.0 / n as f64));
            feats = tape.matmul(avg, feats)?;
        }
        let m = tape.shape(feats)[0];
        let means = self.head_mean.apply(tape, b, feats)?;
        let raw = self.head_diag.apply(tape, b, feats)?;
        let sp = tape.softplus(raw);
        let diag = tape.offset(sp, DIAG_FLOOR);
        let off = match self.head_off {
            Some(l) => Some(l.apply(tape, b, feats)?),
            None => None,
        };
        let zero_off = tape.constant(Tensor::zeros(&[d * (d - 1) / 2]));
        let mut gaussians = Vec::with_capacity(m);
        for i in 0..m {
            let row = |tape: &mut Tape, v: Var| -> Result<Var> {
                let r = tape.slice_index(v, 0, i, 1)?;
                let len = tape.shape(r)[1];
                Ok(tape.reshape(r, &[len])?)
            };
            let mean = row(tape, means)?;
            let dg = row(tape, diag)?;
            let of = match off {
                Some(o) => row(tape, o)?,
                None => zero_off,
            };
            let prec_chol = tape.lower_tri(dg, of)?;
            gaussians.push(SliceGaussianVar { mean, prec_chol });
        }

        let kl = match self.config.kl_variant {
            KlVariant::Fused => gaussian::kl_fused_on(tape, &gaussians)?,
            KlVariant::Volume => {
                let g = gaussians[0];
                let prec = gaussian::precision_on(tape, g.prec_chol)?;
                gaussian::kl_volume_on(tape, g.mean, prec)?
            }
            KlVariant::Ic => {
                let sq = tape.mul(diag, diag)?;
                let prec = tape.offset(sq, PRECISION_JITTER);
                let lp = tape.log(prec)?;
                let nlp = tape.neg(lp);
                let var = tape.exp(nlp);
                gaussian::kl_ic_on(tape, means, var)?
            }
        };

        let zs = gaussian::sample_with_noise_on(tape, &gaussians, noise)?;
        let rows = zs
            .iter()
            .map(|&z| tape.reshape(z, &[1, d]))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut z = tape.concat(&rows, 0)?;
        if m == 1 && n > 1 {
            let ones = tape.constant(Tensor::full(&[n, 1], 1.0));
            z = tape.matmul(ones, z)?;
        }

        let latent_map = |tape: &mut Tape, proj: &Linear| -> Result<Var> {
            let pz = proj.apply(tape, b, z)?;
            let pt = tape.transpose(pz)?;
            Ok(tape.broadcast_spatial(pt, h2, w2)?)
        };
        let mut identity = |_: &mut Tape, v: Var| Ok(v);

        let recon = if pass.reconstruct {
            let lm = latent_map(tape, &self.proj_rec)?;
            Some(self.decoder_rec.forward(tape, b, lm, skip1, &mut identity)?)
        } else {
            None
        };
        let seg_logits = if pass.segment {
            let (skip2, bott2) = self.encoder_seg.forward(tape, b, x)?;
            let lm = latent_map(tape, &self.proj_seg)?;
            let bottom = tape.concat(&[bott2, lm], 0)?;
            Some(self.decoder_seg.forward(tape, b, bottom, skip2, &mut identity)?)
        } else {
            None
        };
        Ok(LrlOutput {
            gaussians,
            kl,
            z,
            recon,
            seg_logits,
        })
    }
}
