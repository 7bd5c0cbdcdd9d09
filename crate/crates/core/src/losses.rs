//! Segmentation and reconstruction losses.
//!
//! Logits and probabilities are `C×n×H×W`; targets are label slices in
//! the matching `n×H×W` row-major layout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Smoothing constant for the Dice loss.
pub const DICE_SMOOTH: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("label {label} out of range for {classes} classes")]
    ClassOutOfRange { label: u8, classes: usize },
    #[error("target has {got} voxels, prediction has {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("loss weight {name} must be non-negative, got {value}")]
    NegativeWeight { name: &'static str, value: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, LossError>;

/// `λ1..λ4` weight the stage-1 objective, `β1, β2` the segmentation one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_ce: f64,
    pub lambda_dice: f64,
    pub lambda_mse: f64,
    pub lambda_kl: f64,
    pub beta_ce: f64,
    pub beta_dice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ce: 1.0,
            lambda_dice: 2.0,
            lambda_mse: 1.0,
            lambda_kl: 0.005,
            beta_ce: 1.0,
            beta_dice: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_ce", self.lambda_ce),
            ("lambda_dice", self.lambda_dice),
            ("lambda_mse", self.lambda_mse),
            ("lambda_kl", self.lambda_kl),
            ("beta_ce", self.beta_ce),
            ("beta_dice", self.beta_dice),
        ];
        for (name, value) in all {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(LossError::NegativeWeight { name, value });
            }
        }
        Ok(())
    }

    /// Every weight multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            lambda_ce: self.lambda_ce * k,
            lambda_dice: self.lambda_dice * k,
            lambda_mse: self.lambda_mse * k,
            lambda_kl: self.lambda_kl * k,
            beta_ce: self.beta_ce * k,
            beta_dice: self.beta_dice * k,
        }
    }
}

/// Stage-1 loss terms. `ce` and `dice` are absent for unlabeled inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboParts<T> {
    pub ce: Option<T>,
    pub dice: Option<T>,
    pub mse: T,
    pub kl: T,
}

/// `C×…` one-hot encoding of `labels`.
pub fn one_hot(labels: &[u8], classes: usize, spatial: &[usize]) -> Result<Tensor> {
    let n = labels.len();
    if spatial.iter().product::<usize>() != n {
        return Err(LossError::ShapeMismatch {
            expected: spatial.iter().product(),
            got: n,
        });
    }
    let mut data = vec![0.0; classes * n];
    for (i, &l) in labels.iter().enumerate() {
        if l as usize >= classes {
            return Err(LossError::ClassOutOfRange { label: l, classes });
        }
        data[l as usize * n + i] = 1.0;
    }
    let mut shape = vec![classes];
    shape.extend_from_slice(spatial);
    Ok(Tensor::new(shape, data)?)
}

fn target_for(tape: &Tape, pred: Var, target: &[u8]) -> Result<Tensor> {
    let shape = tape.shape(pred);
    let voxels = shape[1..].iter().product::<usize>();
    if target.len() != voxels {
        return Err(LossError::ShapeMismatch {
            expected: voxels,
            got: target.len(),
        });
    }
    one_hot(target, shape[0], &shape[1..])
}

/// Voxel-mean of `−log softmax(logits)[target]`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, target: &[u8]) -> Result<Var> {
    let oh = target_for(tape, logits, target)?;
    let lsm = tape.log_softmax(logits, 0)?;
    let g = tape.constant(oh);
    let picked = tape.mul(lsm, g)?;
    let s = tape.sum(picked);
    Ok(tape.scale(s, -1.0 / target.len() as f64))
}

/// `1 − (2Σpg + s)/(Σp + Σg + s)` averaged over the foreground classes.
pub fn dice_loss(tape: &mut Tape, probs: Var, target: &[u8]) -> Result<Var> {
    let oh = target_for(tape, probs, target)?;
    let classes = oh.shape()[0];
    let per = oh.len() / classes;
    let g = tape.constant(oh.clone());
    let mut total: Option<Var> = None;
    for c in 1..classes {
        let gsum = oh.data()[c * per..(c + 1) * per].iter().sum::<f64>();
        let p = tape.slice_index(probs, 0, c, 1)?;
        let gc = tape.slice_index(g, 0, c, 1)?;
        let pg = tape.mul(p, gc)?;
        let inter = tape.sum(pg);
        let num = tape.scale(inter, 2.0);
        let num = tape.offset(num, DICE_SMOOTH);
        let psum = tape.sum(p);
        let den = tape.offset(psum, gsum + DICE_SMOOTH);
        let lden = tape.log(den)?;
        let nl = tape.neg(lden);
        let inv = tape.exp(nl);
        let ratio = tape.mul(num, inv)?;
        let nr = tape.neg(ratio);
        let term = tape.offset(nr, 1.0);
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    let total = total.ok_or_else(|| TensorError::Invalid("dice needs at least 2 classes".into()))?;
    Ok(tape.scale(total, 1.0 / (classes - 1) as f64))
}

/// Mean squared voxel difference.
pub fn mse(tape: &mut Tape, recon: Var, x: Var) -> Result<Var> {
    let d = tape.sub(recon, x)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

fn weighted(tape: &mut Tape, terms: &[(Option<Var>, f64)]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &(v, w) in terms {
        let Some(v) = v else { continue };
        let t = tape.scale(v, w);
        total = Some(match total {
            Some(acc) => tape.add(acc, t)?,
            None => t,
        });
    }
    Ok(total.expect("mse and kl are always present"))
}

/// `λ1·ce + λ2·dice + λ3·mse + λ4·kl`, skipping absent terms.
pub fn elbo_loss(tape: &mut Tape, parts: ElboParts<Var>, w: &LossWeights) -> Result<Var> {
    w.validate()?;
    weighted(
        tape,
        &[
            (parts.ce, w.lambda_ce),
            (parts.dice, w.lambda_dice),
            (Some(parts.mse), w.lambda_mse),
            (Some(parts.kl), w.lambda_kl),
        ],
    )
}

pub fn elbo_value(parts: ElboParts<f64>, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    Ok(w.lambda_ce * parts.ce.unwrap_or(0.0)
        + w.lambda_dice * parts.dice.unwrap_or(0.0)
        + w.lambda_mse * parts.mse
        + w.lambda_kl * parts.kl)
}

#[derive(Debug, Clone, Copy)]
pub struct SegLoss {
    pub total: Var,
    pub ce: Var,
    pub dice: Var,
}

/// `β1·ce + β2·dice` on raw logits.
pub fn seg_loss(tape: &mut Tape, logits: Var, target: &[u8], w: &LossWeights) -> Result<SegLoss> {
    w.validate()?;
    let ce = cross_entropy(tape, logits, target)?;
    let probs = tape.softmax(logits, 0)?;
    let dice = dice_loss(tape, probs, target)?;
    let a = tape.scale(ce, w.beta_ce);
    let b = tape.scale(dice, w.beta_dice);
    let total = tape.add(a, b)?;
    Ok(SegLoss { total, ce, dice })
}

pub fn seg_value(ce: f64, dice: f64, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    Ok(w.beta_ce * ce + w.beta_dice * dice)
}
