//! Procedural ellipsoid volumes.
//!
//! Each sample holds one to three ellipsoids (rotated in-plane) on a smooth
//! linear background ramp, plus i.i.d. Gaussian noise of standard deviation
//! `difficulty`. The mask is exact ellipsoid membership. Before noise the
//! background lies in `[0.05, 0.35]` and the foreground in `[0.55, 0.85]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Mask, Result, Sample, Volume};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub seed: u64,
    /// Training volumes (labeled + unlabeled).
    pub count: usize,
    pub labeled: usize,
    pub test: usize,
    /// `[depth, H, W]`.
    pub shape: [usize; 3],
    pub difficulty: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 40,
            labeled: 4,
            test: 10,
            shape: [8, 16, 16],
            difficulty: 0.4,
        }
    }
}

const BG_LO: f64 = 0.05;
const BG_HI: f64 = 0.35;
const FG_LO: f64 = 0.55;
const FG_HI: f64 = 0.85;

struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
    cos: f64,
    sin: f64,
}

impl Ellipsoid {
    fn contains(&self, z: f64, y: f64, x: f64) -> bool {
        let (dz, dy, dx) = (z - self.center[0], y - self.center[1], x - self.center[2]);
        let u = self.cos * dy + self.sin * dx;
        let v = -self.sin * dy + self.cos * dx;
        (dz / self.radii[0]).powi(2) + (u / self.radii[1]).powi(2) + (v / self.radii[2]).powi(2)
            <= 1.0
    }
}

fn validate(cfg: &GenConfig) -> Result<()> {
    let [d, h, w] = cfg.shape;
    let pow2 = |n: usize| n >= 8 && n.is_power_of_two();
    if !pow2(h) || !pow2(w) {
        return Err(DataError::InvalidShape(
            cfg.shape,
            "spatial dims must be powers of two ≥ 8".into(),
        ));
    }
    if d < 4 {
        return Err(DataError::InvalidShape(cfg.shape, "depth must be ≥ 4".into()));
    }
    if cfg.labeled == 0 || cfg.labeled > cfg.count {
        return Err(DataError::Manifest(format!(
            "labeled count {} must be in 1..={}",
            cfg.labeled, cfg.count
        )));
    }
    if !(cfg.difficulty >= 0.0) || !cfg.difficulty.is_finite() {
        return Err(DataError::Manifest(format!("bad difficulty {}", cfg.difficulty)));
    }
    Ok(())
}

/// One volume/mask pair from its own seeded stream.
pub fn sample(id: &str, index: usize, cfg: &GenConfig) -> Result<Sample> {
    validate(cfg)?;
    let [d, h, w] = cfg.shape;
    let mut r = rng::stream(cfg.seed, streams::sub(streams::DATA, index as u64, 0));
    let count = r.random_range(1..=3);
    let shapes: Vec<Ellipsoid> = (0..count)
        .map(|_| {
            let rd = r.random_range(1.5..(d as f64 / 2.5).max(1.6));
            let rh = r.random_range(h as f64 / 8.0..h as f64 / 4.0);
            let rw = r.random_range(w as f64 / 8.0..w as f64 / 4.0);
            let margin = |n: usize, rad: f64| {
                let lo = (rad * 0.6).min(n as f64 / 2.0);
                let hi = (n as f64 - 1.0 - rad * 0.6).max(lo + 1e-9);
                (lo, hi)
            };
            let (zl, zh) = margin(d, rd);
            let (yl, yh) = margin(h, rh);
            let (xl, xh) = margin(w, rw);
            let theta: f64 = r.random_range(0.0..std::f64::consts::PI);
            Ellipsoid {
                center: [
                    r.random_range(zl..zh),
                    r.random_range(yl..yh),
                    r.random_range(xl..xh),
                ],
                radii: [rd, rh, rw],
                cos: theta.cos(),
                sin: theta.sin(),
            }
        })
        .collect();
    let levels: Vec<f64> = shapes.iter().map(|_| r.random_range(FG_LO..FG_HI)).collect();

    // background ramp along a random direction, normalized to [BG_LO, BG_HI]
    let dir: [f64; 3] = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
    let ramp = |z: usize, y: usize, x: usize| {
        dir[0] * z as f64 / d as f64 + dir[1] * y as f64 / h as f64 + dir[2] * x as f64 / w as f64
    };
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for z in [0, d - 1] {
        for y in [0, h - 1] {
            for x in [0, w - 1] {
                rmin = rmin.min(ramp(z, y, x));
                rmax = rmax.max(ramp(z, y, x));
            }
        }
    }
    let span = (rmax - rmin).max(1e-12);

    let noise = Normal::new(0.0, cfg.difficulty.max(0.0)).expect("finite sigma");
    let mut data = Vec::with_capacity(d * h * w);
    let mut labels = Vec::with_capacity(d * h * w);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let mut v = BG_LO + (BG_HI - BG_LO) * (ramp(z, y, x) - rmin) / span;
                let mut fg = false;
                for (e, &level) in shapes.iter().zip(&levels) {
                    if e.contains(z as f64, y as f64, x as f64) {
                        v = if fg { v.max(level) } else { level };
                        fg = true;
                    }
                }
                if cfg.difficulty > 0.0 {
                    v += noise.sample(&mut r);
                }
                data.push(v.clamp(0.0, 1.0));
                labels.push(fg as u8);
            }
        }
    }
    Ok(Sample {
        volume: Volume::new(id, cfg.shape, data)?,
        mask: Mask::new(id, cfg.shape, labels)?,
    })
}

pub fn generate(cfg: &GenConfig) -> Result<Dataset> {
    validate(cfg)?;
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for i in 0..cfg.count {
        let s = sample(&format!("train_{i:03}"), i, cfg)?;
        if i < cfg.labeled {
            labeled.push(s);
        } else {
            unlabeled.push(s);
        }
    }
    let test = (0..cfg.test)
        .map(|i| sample(&format!("test_{i:03}"), cfg.count + i, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        train_labeled: labeled,
        train_unlabeled: unlabeled,
        test,
        classes: 2,
        seed: cfg.seed,
        shape: cfg.shape,
        difficulty: cfg.difficulty,
        manifest_path: None,
    })
}
