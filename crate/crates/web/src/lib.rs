//! WebAssembly bindings for the demo page in `www/`.
//!
//! Everything returns flat numeric arrays so the page can draw straight
//! onto a canvas.

use gbdl::data::{self, Dataset, GenConfig};
use gbdl::gaussian::{self, SliceGaussian};
use gbdl::metrics;
use gbdl::model::{ModelConfig, SegNet};
use gbdl::train::{self, PredictionSummary, TrainConfig};
use wasm_bindgen::prelude::*;

fn text(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Densities of one-dimensional slice Gaussians and their product.
#[wasm_bindgen]
pub struct Fusion {
    xs: Vec<f64>,
    slices: Vec<Vec<f64>>,
    fused: Vec<f64>,
    mean: f64,
    sd: f64,
    kl: f64,
}

#[wasm_bindgen]
impl Fusion {
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    pub fn slice_count(&self) -> usize {
        self.slices.len()
    }

    pub fn slice_pdf(&self, i: usize) -> Vec<f64> {
        self.slices.get(i).cloned().unwrap_or_default()
    }

    pub fn fused_pdf(&self) -> Vec<f64> {
        self.fused.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> f64 {
        self.mean
    }

    #[wasm_bindgen(getter)]
    pub fn sd(&self) -> f64 {
        self.sd
    }

    /// KL of the fused Gaussian from the standard normal, in nats.
    #[wasm_bindgen(getter)]
    pub fn kl(&self) -> f64 {
        self.kl
    }
}

fn pdf(x: f64, mean: f64, precision: f64) -> f64 {
    (precision / (2.0 * std::f64::consts::PI)).sqrt() * (-0.5 * precision * (x - mean).powi(2)).exp()
}

/// Fuses 1-D slices given their means and standard deviations and samples
/// every density on `points` evenly spaced values in `[lo, hi]`.
#[wasm_bindgen]
pub fn fuse_1d(means: &[f64], sds: &[f64], lo: f64, hi: f64, points: usize) -> Result<Fusion, JsError> {
    try_fuse_1d(means, sds, lo, hi, points).map_err(js)
}

pub fn try_fuse_1d(means: &[f64], sds: &[f64], lo: f64, hi: f64, points: usize) -> Result<Fusion, String> {
    if means.len() != sds.len() || means.is_empty() {
        return Err("need one standard deviation per mean".into());
    }
    if sds.iter().any(|s| !(*s > 0.0)) || !(hi > lo) || points < 2 {
        return Err("standard deviations and the plotting range must be positive".into());
    }
    let slices: Vec<SliceGaussian> = means
        .iter()
        .zip(sds)
        .map(|(&m, &s)| SliceGaussian::diagonal(vec![m], &[1.0 / s]))
        .collect::<Result<_, _>>()
        .map_err(text)?;
    let f = gaussian::fuse(&slices).map_err(text)?;
    let kl = gaussian::kl_fused_to_standard(&slices).map_err(text)?;
    let xs: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let curves = slices
        .iter()
        .map(|s| {
            let p = s.precision().item();
            xs.iter().map(|&x| pdf(x, s.mean()[0], p)).collect()
        })
        .collect();
    let fp = f.precision.item();
    Ok(Fusion {
        fused: xs.iter().map(|&x| pdf(x, f.mean[0], fp)).collect(),
        xs,
        slices: curves,
        mean: f.mean[0],
        sd: fp.powf(-0.5),
        kl,
    })
}

/// One slice of a synthetic volume.
#[wasm_bindgen]
pub struct SliceView {
    width: usize,
    height: usize,
    depth: usize,
    intensity: Vec<f64>,
    mask: Vec<u8>,
    foreground: f64,
}

#[wasm_bindgen]
impl SliceView {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.intensity.clone()
    }

    pub fn mask(&self) -> Vec<u8> {
        self.mask.clone()
    }

    /// Foreground fraction of the whole volume.
    #[wasm_bindgen(getter)]
    pub fn foreground(&self) -> f64 {
        self.foreground
    }
}

fn slice_of<T: Copy>(data: &[T], shape: [usize; 3], z: usize) -> Vec<T> {
    let n = shape[1] * shape[2];
    data[z * n..(z + 1) * n].to_vec()
}

/// Generates volume `index` for `seed` at the given noise level and returns
/// slice `z` (clamped to the volume).
#[wasm_bindgen]
pub fn synthetic_slice(seed: u64, index: usize, difficulty: f64, size: usize, z: usize) -> Result<SliceView, JsError> {
    try_synthetic_slice(seed, index, difficulty, size, z).map_err(js)
}

pub fn try_synthetic_slice(seed: u64, index: usize, difficulty: f64, size: usize, z: usize) -> Result<SliceView, String> {
    let cfg = GenConfig {
        seed,
        difficulty,
        shape: [8, size, size],
        ..GenConfig::default()
    };
    let s = data::sample("demo", index, &cfg).map_err(text)?;
    let shape = s.volume.shape();
    let z = z.min(shape[0] - 1);
    Ok(SliceView {
        width: shape[2],
        height: shape[1],
        depth: shape[0],
        intensity: slice_of(s.volume.data(), shape, z),
        mask: slice_of(s.mask.labels(), shape, z),
        foreground: s.mask.foreground_fraction(),
    })
}

/// A small segmentation network trained in the page, queried with MC dropout.
#[wasm_bindgen]
pub struct DropoutDemo {
    net: SegNet,
    data: Dataset,
    seed: u64,
}

/// MC-dropout output for one test slice.
#[wasm_bindgen]
pub struct Uncertainty {
    width: usize,
    height: usize,
    intensity: Vec<f64>,
    truth: Vec<u8>,
    probability: Vec<f64>,
    entropy: Vec<f64>,
    dice: f64,
}

#[wasm_bindgen]
impl Uncertainty {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.intensity.clone()
    }

    pub fn truth(&self) -> Vec<u8> {
        self.truth.clone()
    }

    /// Mean foreground probability over the passes.
    pub fn probability(&self) -> Vec<f64> {
        self.probability.clone()
    }

    /// Voxel entropy in bits.
    pub fn entropy(&self) -> Vec<f64> {
        self.entropy.clone()
    }

    /// Dice of the hard mask over the whole test volume.
    #[wasm_bindgen(getter)]
    pub fn dice(&self) -> f64 {
        self.dice
    }
}

#[wasm_bindgen]
impl DropoutDemo {
    /// Trains on a handful of small labeled volumes; takes a few seconds.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, difficulty: f64, epochs: usize) -> Result<DropoutDemo, JsError> {
        Self::try_new(seed, difficulty, epochs).map_err(js)
    }

    /// Runs `passes` stochastic forward passes on test volume `v` with the
    /// given dropout rate and returns slice `z`.
    pub fn predict(&mut self, v: usize, passes: usize, dropout: f64, z: usize) -> Result<Uncertainty, JsError> {
        self.try_predict(v, passes, dropout, z).map_err(js)
    }
}

impl DropoutDemo {
    pub fn try_new(seed: u64, difficulty: f64, epochs: usize) -> Result<DropoutDemo, String> {
        let data = data::generate(&GenConfig {
            seed,
            count: 6,
            labeled: 6,
            test: 2,
            shape: [4, 16, 16],
            difficulty,
        })
        .map_err(text)?;
        let cfg = TrainConfig {
            seed,
            epochs_seg: epochs,
            model: ModelConfig {
                channels: [4, 8],
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        };
        let (net, _) = train::train_segnet(&data, &[], &cfg).map_err(text)?;
        Ok(DropoutDemo { net, data, seed })
    }

    pub fn try_predict(&mut self, v: usize, passes: usize, dropout: f64, z: usize) -> Result<Uncertainty, String> {
        let sample = self.data.test.get(v).ok_or("no such test volume")?;
        self.net.config.dropout = dropout;
        self.net.config.validate().map_err(text)?;
        let pred: PredictionSummary =
            train::bayesian_predict(&self.net, &sample.volume, v, passes, self.seed, 1).map_err(text)?;
        let shape = sample.volume.shape();
        let z = z.min(shape[0] - 1);
        let n = shape.iter().product::<usize>();
        let fg = &pred.mean_probs.data()[n..2 * n];
        let dice = metrics::overlap_scores(&pred.hard_mask, sample.mask.labels()).map_err(text)?.dice;
        Ok(Uncertainty {
            width: shape[2],
            height: shape[1],
            intensity: slice_of(sample.volume.data(), shape, z),
            truth: slice_of(sample.mask.labels(), shape, z),
            probability: slice_of(fg, shape, z),
            entropy: slice_of(&pred.entropy, shape, z),
            dice,
        })
    }
}
