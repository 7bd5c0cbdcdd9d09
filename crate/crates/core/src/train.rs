//! Two-stage training, pseudo-labelling and MC-dropout prediction.
//!
//! Stage 1 fits the [`LrlModel`] on every training volume: labeled items
//! contribute all four ELBO terms, unlabeled ones only reconstruction and
//! KL. The frozen model then labels the unlabeled volumes, and stage 2
//! trains a [`SegNet`] on ground truth plus pseudo-labels.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Mask, Volume};
use crate::losses::{self, ElboParts, LossError, LossWeights};
use crate::metrics::{self, MetricError, MetricRow};
use crate::model::{Bound, LrlModel, LrlPass, ModelConfig, ModelError, Params, SegNet};
use crate::rng::{self, streams};
use crate::tensor::{Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dataset has no labeled volumes")]
    NoLabeledData,
    #[error("missing pseudo-labels for: {}", .0.join(", "))]
    MissingPseudoLabels(Vec<String>),
    #[error("non-finite loss in {stage} epoch {epoch}")]
    NonFinite { stage: &'static str, epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs_lrl: usize,
    pub epochs_seg: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub batch_size: usize,
    /// Latent draws averaged per pseudo-label.
    pub latent_draws: usize,
    /// Pseudo-labelled pairs generated per unlabeled volume.
    pub pseudo_pairs: usize,
    /// MC-dropout passes at prediction time.
    pub passes: usize,
    pub weights: LossWeights,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs_lrl: 20,
            epochs_seg: 20,
            learning_rate: 0.01,
            momentum: 0.9,
            grad_clip: 5.0,
            batch_size: 2,
            latent_draws: 5,
            pseudo_pairs: 1,
            passes: 5,
            weights: LossWeights::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.latent_draws == 0 || self.passes == 0 || self.pseudo_pairs == 0 {
            return bad("latent_draws, passes and pseudo_pairs must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        self.weights.validate()?;
        self.model.validate()?;
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `v ← μv + g`, `θ ← θ − ηv`. When
/// `clip > 0` the gradient is first rescaled to global norm at most `clip`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub clip: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, params: &Params) -> Self {
        Self {
            lr,
            momentum,
            clip: 0.0,
            velocity: params.values().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip = clip;
        self
    }

    pub fn step(&mut self, params: &mut Params, grads: &[Tensor]) {
        let norm = grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum::<f64>().sqrt();
        let k = if self.clip > 0.0 && norm > self.clip { self.clip / norm } else { 1.0 };
        for ((p, v), g) in params.values_mut().iter_mut().zip(&mut self.velocity).zip(grads) {
            for ((pi, vi), gi) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vi = self.momentum * *vi + k * gi;
                *pi -= self.lr * *vi;
            }
        }
    }
}

/// One line of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub stage: &'static str,
    pub epoch: usize,
    pub total: f64,
    pub ce: f64,
    pub dice: f64,
    pub mse: f64,
    pub kl: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {:.9} {:.9} {:.9} {:.9} {:.9}",
            self.stage, self.epoch, self.total, self.ce, self.dice, self.mse, self.kl
        )
    }
}

fn grads_of(tape: &Tape, bound: &Bound) -> Vec<Tensor> {
    bound
        .vars()
        .iter()
        .map(|&v| tape.grad(v).expect("bound params are leaves"))
        .collect()
}

fn batches(n: usize, size: usize, rng: &mut rng::Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(size).map(<[usize]>::to_vec).collect()
}

/// Stage-1 batches over items `0..labeled` (labeled) and
/// `labeled..labeled+unlabeled`. With unlabeled data present, one epoch is
/// a pass over the unlabeled items and every batch also takes
/// `max(1, size/2)` labeled items, cycling through a reshuffled labeled
/// order. Without unlabeled data this is plain shuffled batching.
fn mixed_batches(labeled: usize, unlabeled: usize, size: usize, rng: &mut rng::Rng) -> Vec<Vec<usize>> {
    if unlabeled == 0 {
        return batches(labeled, size, rng);
    }
    let lab_per = (size / 2).max(1);
    let unl_per = size.saturating_sub(lab_per).max(1);
    let mut unl: Vec<usize> = (labeled..labeled + unlabeled).collect();
    unl.shuffle(rng);
    let mut lab: Vec<usize> = Vec::new();
    unl.chunks(unl_per)
        .map(|chunk| {
            let mut b = Vec::with_capacity(lab_per + chunk.len());
            for _ in 0..lab_per {
                if lab.is_empty() {
                    lab = (0..labeled).collect();
                    lab.shuffle(rng);
                }
                b.push(lab.pop().expect("refilled"));
            }
            b.extend_from_slice(chunk);
            b
        })
        .collect()
}

#[derive(Default)]
struct Tally {
    total: f64,
    ce: f64,
    dice: f64,
    mse: f64,
    kl: f64,
    items: usize,
    labeled: usize,
}

impl Tally {
    fn log(&self, stage: &'static str, epoch: usize) -> EpochLog {
        let per = |x: f64, n: usize| if n == 0 { 0.0 } else { x / n as f64 };
        EpochLog {
            stage,
            epoch,
            total: per(self.total, self.items),
            ce: per(self.ce, self.labeled),
            dice: per(self.dice, self.labeled),
            mse: per(self.mse, self.items),
            kl: per(self.kl, self.items),
        }
    }
}

/// Stage 1. Returns the trained model and one log line per epoch.
pub fn train_lrl(data: &Dataset, cfg: &TrainConfig) -> Result<(LrlModel, Vec<EpochLog>)> {
    train_lrl_impl(data, cfg, true)
}

/// Stage 1 with the reconstruction decoder and KL term removed from the
/// graph; only the segmentation path is trained.
pub fn train_lrl_supervised(data: &Dataset, cfg: &TrainConfig) -> Result<(LrlModel, Vec<EpochLog>)> {
    train_lrl_impl(data, cfg, false)
}

fn train_lrl_impl(data: &Dataset, cfg: &TrainConfig, generative: bool) -> Result<(LrlModel, Vec<EpochLog>)> {
    cfg.validate()?;
    if data.train_labeled.is_empty() {
        return Err(TrainError::NoLabeledData);
    }
    let mut model = LrlModel::new(cfg.model.clone(), &mut rng::stream(cfg.seed, streams::INIT_LRL))?;
    let unlabeled = if generative { data.train_unlabeled.len() } else { 0 };
    let items: Vec<(&Volume, Option<&Mask>)> = data
        .train_labeled
        .iter()
        .map(|s| (&s.volume, Some(&s.mask)))
        .chain(if generative {
            Some(data.train_unlabeled.iter().map(|s| (&s.volume, None)))
        } else {
            None
        }
        .into_iter()
        .flatten())
        .collect();
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum, &model.params).with_clip(cfg.grad_clip);
    let mut logs = Vec::with_capacity(cfg.epochs_lrl);
    for epoch in 0..cfg.epochs_lrl {
        let mut r = rng::stream(cfg.seed, streams::sub(streams::TRAIN_LRL, epoch as u64, 0));
        let mut tally = Tally::default();
        for batch in mixed_batches(data.train_labeled.len(), unlabeled, cfg.batch_size, &mut r) {
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape, true);
            let mut sum = None;
            for &i in &batch {
                let (vol, mask) = items[i];
                let x = tape.constant(vol.to_tensor());
                let noise = model.draw_noise(vol.depth(), &mut r);
                let pass = match (generative, mask.is_some()) {
                    (false, _) => LrlPass::SEGMENT,
                    (true, true) => LrlPass::FULL,
                    (true, false) => LrlPass::UNLABELED,
                };
                let out = model.forward(&mut tape, &bound, x, &noise, pass)?;
                let (ce, dice) = match (mask, out.seg_logits) {
                    (Some(m), Some(logits)) => {
                        let ce = losses::cross_entropy(&mut tape, logits, m.labels())?;
                        let probs = tape.softmax(logits, 0)?;
                        (Some(ce), Some(losses::dice_loss(&mut tape, probs, m.labels())?))
                    }
                    _ => (None, None),
                };
                let loss = if generative {
                    let recon = out.recon.expect("reconstruction requested");
                    let mse = losses::mse(&mut tape, recon, x)?;
                    tally.mse += tape.value(mse).item();
                    tally.kl += tape.value(out.kl).item();
                    losses::elbo_loss(&mut tape, ElboParts { ce, dice, mse, kl: out.kl }, &cfg.weights)?
                } else {
                    let (ce, dice) = (ce.expect("labeled"), dice.expect("labeled"));
                    let a = tape.scale(ce, cfg.weights.lambda_ce);
                    let b = tape.scale(dice, cfg.weights.lambda_dice);
                    tape.add(a, b)?
                };
                if let (Some(ce), Some(dice)) = (ce, dice) {
                    tally.ce += tape.value(ce).item();
                    tally.dice += tape.value(dice).item();
                    tally.labeled += 1;
                }
                tally.total += tape.value(loss).item();
                tally.items += 1;
                sum = Some(match sum {
                    Some(s) => tape.add(s, loss)?,
                    None => loss,
                });
            }
            let sum = sum.expect("non-empty batch");
            let mean = tape.scale(sum, 1.0 / batch.len() as f64);
            if !tape.value(mean).item().is_finite() {
                return Err(TrainError::NonFinite { stage: "lrl", epoch });
            }
            tape.backward(mean)?;
            let grads = grads_of(&tape, &bound);
            opt.step(&mut model.params, &grads);
        }
        logs.push(tally.log("lrl", epoch));
    }
    Ok((model, logs))
}

/// Softmax probabilities of the frozen segmentation branch for one latent draw.
pub fn lrl_probs(lrl: &LrlModel, vol: &Volume, noise: &[Tensor]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = lrl.params.bind(&mut tape, false);
    let x = tape.constant(vol.to_tensor());
    let out = lrl.forward(&mut tape, &bound, x, noise, LrlPass::SEGMENT)?;
    let probs = tape.softmax(out.seg_logits.expect("segment pass"), 0)?;
    Ok(tape.value(probs).clone())
}

/// Noise for draw `j` of unlabeled volume `v`.
pub fn pseudo_noise(lrl: &LrlModel, seed: u64, v: usize, j: usize, depth: usize) -> Vec<Tensor> {
    let mut r = rng::stream(seed, streams::sub(streams::PSEUDO, v as u64, j as u64));
    lrl.draw_noise(depth, &mut r)
}

/// Mean of per-draw probabilities for draws `first..first+m`.
pub fn pseudo_probs(lrl: &LrlModel, vol: &Volume, v: usize, first: usize, m: usize, seed: u64) -> Result<Tensor> {
    let mut acc: Option<Tensor> = None;
    for j in first..first + m {
        let p = lrl_probs(lrl, vol, &pseudo_noise(lrl, seed, v, j, vol.depth()))?;
        acc = Some(match acc {
            None => p,
            Some(mut a) => {
                a.data_mut().iter_mut().zip(p.data()).for_each(|(x, y)| *x += y);
                a
            }
        });
    }
    let mut a = acc.ok_or_else(|| TrainError::Config("latent_draws must be at least 1".into()))?;
    a.data_mut().iter_mut().for_each(|x| *x /= m as f64);
    Ok(a)
}

/// Per-voxel argmax over the leading class axis; ties go to the lowest index.
pub fn argmax_classes(probs: &Tensor) -> Vec<u8> {
    let c = probs.shape()[0];
    let n = probs.len() / c;
    let d = probs.data();
    (0..n)
        .map(|i| {
            let mut best = 0;
            for k in 1..c {
                if d[k * n + i] > d[best * n + i] {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}

/// Pseudo-labels for every unlabeled volume, `pseudo_pairs` per volume.
/// Pair `k` of volume `v` averages draws `k·M .. (k+1)·M`.
pub fn make_pseudo_labels(lrl: &LrlModel, unlabeled: &[&Volume], cfg: &TrainConfig) -> Result<Vec<Mask>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(unlabeled.len() * cfg.pseudo_pairs);
    for (v, vol) in unlabeled.iter().enumerate() {
        for k in 0..cfg.pseudo_pairs {
            let m = cfg.latent_draws;
            let probs = pseudo_probs(lrl, vol, v, k * m, m, cfg.seed)?;
            let mask = Mask::new(vol.id.clone(), vol.shape(), argmax_classes(&probs))
                .map_err(|e| TrainError::Config(e.to_string()))?;
            out.push(mask);
        }
    }
    Ok(out)
}

/// Stage 2 on ground truth plus pseudo-labels (matched by volume id).
pub fn train_segnet(data: &Dataset, pseudo: &[Mask], cfg: &TrainConfig) -> Result<(SegNet, Vec<EpochLog>)> {
    let missing: Vec<String> = data
        .train_unlabeled
        .iter()
        .filter(|s| !pseudo.iter().any(|m| m.id == s.volume.id))
        .map(|s| s.volume.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(TrainError::MissingPseudoLabels(missing));
    }
    let mut pairs: Vec<(&Volume, &Mask)> = data.train_labeled.iter().map(|s| (&s.volume, &s.mask)).collect();
    for s in &data.train_unlabeled {
        pairs.extend(pseudo.iter().filter(|m| m.id == s.volume.id).map(|m| (&s.volume, m)));
    }
    fit_segnet(&pairs, cfg, cfg.epochs_seg)
}

/// Labeled-only SegNet given as many optimizer steps as [`train_segnet`]
/// would take on the full training set.
pub fn train_baseline(data: &Dataset, cfg: &TrainConfig) -> Result<(SegNet, Vec<EpochLog>)> {
    if data.train_labeled.is_empty() {
        return Err(TrainError::NoLabeledData);
    }
    let pairs: Vec<(&Volume, &Mask)> = data.train_labeled.iter().map(|s| (&s.volume, &s.mask)).collect();
    let full = data.train_labeled.len() + data.train_unlabeled.len() * cfg.pseudo_pairs;
    let steps = cfg.epochs_seg * full.div_ceil(cfg.batch_size);
    let per_epoch = pairs.len().div_ceil(cfg.batch_size);
    fit_segnet(&pairs, cfg, steps.div_ceil(per_epoch))
}

fn fit_segnet(pairs: &[(&Volume, &Mask)], cfg: &TrainConfig, epochs: usize) -> Result<(SegNet, Vec<EpochLog>)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::NoLabeledData);
    }
    let mut net = SegNet::new(cfg.model.clone(), &mut rng::stream(cfg.seed, streams::INIT_SEG))?;
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum, &net.params).with_clip(cfg.grad_clip);
    let mut logs = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut r = rng::stream(cfg.seed, streams::sub(streams::TRAIN_SEG, epoch as u64, 0));
        let mut tally = Tally::default();
        for batch in batches(pairs.len(), cfg.batch_size, &mut r) {
            let mut tape = Tape::new();
            let bound = net.params.bind(&mut tape, true);
            let mut sum = None;
            for &i in &batch {
                let (vol, mask) = pairs[i];
                let x = tape.constant(vol.to_tensor());
                let logits = net.forward(&mut tape, &bound, x, true, &mut r)?;
                let l = losses::seg_loss(&mut tape, logits, mask.labels(), &cfg.weights)?;
                tally.total += tape.value(l.total).item();
                tally.ce += tape.value(l.ce).item();
                tally.dice += tape.value(l.dice).item();
                tally.items += 1;
                tally.labeled += 1;
                sum = Some(match sum {
                    Some(s) => tape.add(s, l.total)?,
                    None => l.total,
                });
            }
            let mean = tape.scale(sum.expect("non-empty batch"), 1.0 / batch.len() as f64);
            if !tape.value(mean).item().is_finite() {
                return Err(TrainError::NonFinite { stage: "seg", epoch });
            }
            tape.backward(mean)?;
            let grads = grads_of(&tape, &bound);
            opt.step(&mut net.params, &grads);
        }
        logs.push(tally.log("seg", epoch));
    }
    Ok((net, logs))
}

/// Averaged class probabilities and voxel-wise entropy of `T` MC passes.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSummary {
    pub shape: [usize; 3],
    /// `C×depth×H×W`.
    pub mean_probs: Tensor,
    /// Bits, `depth×H×W`.
    pub entropy: Vec<f64>,
    pub hard_mask: Vec<u8>,
}

impl PredictionSummary {
    pub fn from_mean_probs(shape: [usize; 3], mean_probs: Tensor) -> Self {
        let c = mean_probs.shape()[0];
        let n = mean_probs.len() / c;
        let p = mean_probs.data();
        let entropy = (0..n)
            .map(|i| {
                -(0..c)
                    .map(|k| p[k * n + i])
                    .filter(|&q| q > 0.0)
                    .map(|q| q * q.log2())
                    .sum::<f64>()
            })
            .map(|h| h.max(0.0))
            .collect();
        let hard_mask = argmax_classes(&mean_probs);
        Self {
            shape,
            mean_probs,
            entropy,
            hard_mask,
        }
    }

    pub fn mask(&self, id: &str) -> Mask {
        Mask::new(id, self.shape, self.hard_mask.clone()).expect("prediction shape")
    }

    pub fn entropy_volume(&self, id: &str) -> Volume {
        Volume::new(id, self.shape, self.entropy.clone()).expect("finite entropy")
    }
}

/// Probabilities of one stochastic pass driven by `stream`.
pub fn single_pass(net: &SegNet, vol: &Volume, seed: u64, stream: u64) -> Result<Tensor> {
    let mut r = rng::stream(seed, stream);
    let mut tape = Tape::new();
    let bound = net.params.bind(&mut tape, false);
    let x = tape.constant(vol.to_tensor());
    let logits = net.forward(&mut tape, &bound, x, true, &mut r)?;
    let probs = tape.softmax(logits, 0)?;
    Ok(tape.value(probs).clone())
}

/// Stream id of pass `t` for volume `v`.
pub fn pass_stream(v: usize, t: usize) -> u64 {
    streams::sub(streams::PREDICT, v as u64, t as u64)
}

/// `T` MC-dropout passes over up to `threads` workers. Each pass owns its
/// stream and results are summed in pass order, so the output does not
/// depend on scheduling.
pub fn bayesian_predict(
    net: &SegNet,
    vol: &Volume,
    v: usize,
    passes: usize,
    seed: u64,
    threads: usize,
) -> Result<PredictionSummary> {
    if passes == 0 {
        return Err(TrainError::Config("passes must be at least 1".into()));
    }
    let threads = threads.clamp(1, passes);
    let mut results: Vec<Option<Result<Tensor>>> = (0..passes).map(|_| None).collect();
    if threads == 1 {
        for (t, out) in results.iter_mut().enumerate() {
            *out = Some(single_pass(net, vol, seed, pass_stream(v, t)));
        }
    } else {
        std::thread::scope(|s| {
            let chunk = passes.div_ceil(threads);
            for (w, slot) in results.chunks_mut(chunk).enumerate() {
                s.spawn(move || {
                    for (k, out) in slot.iter_mut().enumerate() {
                        *out = Some(single_pass(net, vol, seed, pass_stream(v, w * chunk + k)));
                    }
                });
            }
        });
    }
    let mut acc: Option<Tensor> = None;
    for r in results {
        let p = r.expect("every pass ran")?;
        acc = Some(match acc {
            None => p,
            Some(mut a) => {
                a.data_mut().iter_mut().zip(p.data()).for_each(|(x, y)| *x += y);
                a
            }
        });
    }
    let mut mean = acc.expect("passes ≥ 1");
    mean.data_mut().iter_mut().for_each(|x| *x /= passes as f64);
    Ok(PredictionSummary::from_mean_probs(vol.shape(), mean))
}

/// One volume to score: ground truth, predicted labels and entropy in bits.
#[derive(Debug, Clone, Copy)]
pub struct EvalCase<'a> {
    pub truth: &'a Mask,
    pub hard_mask: &'a [u8],
    pub entropy: &'a [f64],
}

impl<'a> EvalCase<'a> {
    pub fn new(truth: &'a Mask, pred: &'a PredictionSummary) -> Self {
        Self {
            truth,
            hard_mask: &pred.hard_mask,
            entropy: &pred.entropy,
        }
    }
}

/// Metric rows per case. The PAvPU threshold defaults to the mean voxel
/// entropy over all cases. Surface distances are NaN when either mask is
/// empty.
pub fn evaluate(cases: &[EvalCase], patch: usize, threshold: Option<f64>) -> Result<Vec<MetricRow>> {
    let threshold = threshold.unwrap_or_else(|| {
        let (s, n) = cases
            .iter()
            .fold((0.0, 0usize), |(s, n), c| (s + c.entropy.iter().sum::<f64>(), n + c.entropy.len()));
        if n == 0 { 0.0 } else { s / n as f64 }
    });
    cases
        .iter()
        .map(|&EvalCase { truth, hard_mask, entropy }| {
            let o = metrics::overlap_scores(hard_mask, truth.labels())?;
            let (hd95, asd) = match metrics::surface_distances(hard_mask, truth.labels(), truth.shape()) {
                Ok(s) => (s.hd95, s.asd),
                Err(MetricError::EmptyMask(_)) => (f64::NAN, f64::NAN),
                Err(e) => return Err(e.into()),
            };
            let pavpu = metrics::pavpu(hard_mask, truth.labels(), entropy, truth.shape(), patch, threshold)?;
            Ok(MetricRow {
                id: truth.id.clone(),
                dice: o.dice,
                jaccard: o.jaccard,
                hd95,
                asd,
                pavpu,
            })
        })
        .collect()
}

/// PAvPU patch edge used when none is given.
pub const DEFAULT_PATCH: usize = 4;

/// Predicts every test volume and scores it.
pub fn evaluate_net(net: &SegNet, data: &Dataset, passes: usize, seed: u64, threads: usize) -> Result<Vec<MetricRow>> {
    let preds = data
        .test
        .iter()
        .enumerate()
        .map(|(v, s)| bayesian_predict(net, &s.volume, v, passes, seed, threads))
        .collect::<Result<Vec<_>>>()?;
    let cases: Vec<_> = data.test.iter().zip(&preds).map(|(s, p)| EvalCase::new(&s.mask, p)).collect();
    evaluate(&cases, DEFAULT_PATCH, None)
}
