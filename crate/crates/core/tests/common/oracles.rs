//! Independent reference computations for the test suites.
//!
//! Nothing here calls into the crate's numerical routines: Gaussian
//! quantities go through nalgebra and the metric oracles are brute force.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn dmat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// log N(x; μ, Λ⁻¹) with precision Λ.
pub fn log_pdf_precision(x: &DVector<f64>, mean: &DVector<f64>, prec: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let diff = x - mean;
    let quad = (diff.transpose() * prec * &diff)[(0, 0)];
    0.5 * prec.determinant().ln() - 0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * quad
}

/// Textbook KL(N(μ, Σ) ‖ N(0, I)) = ½(tr Σ + μᵀμ − D − log det Σ).
pub fn kl_to_standard(mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = mean.len() as f64;
    0.5 * (cov.trace() + mean.dot(mean) - d - cov.determinant().ln())
}

/// Monte-Carlo estimate of KL(N(μ, Σ) ‖ N(0, I)) from `n` draws.
pub fn kl_monte_carlo(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    n: usize,
    rng: &mut impl Rng,
) -> f64 {
    let d = mean.len();
    let chol = cov.clone().cholesky().expect("SPD covariance").l();
    let prec = cov.clone().try_inverse().expect("invertible");
    let zero = DVector::zeros(d);
    let eye = DMatrix::identity(d, d);
    let mut acc = 0.0;
    for _ in 0..n {
        let e = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let z = mean + &chol * e;
        acc += log_pdf_precision(&z, mean, &prec) - log_pdf_precision(&z, &zero, &eye);
    }
    acc / n as f64
}

/// Binary foreground voxel counts `(|A|, |B|, |A∩B|, |A∪B|)`.
pub fn overlap_counts(a: &[u8], b: &[u8]) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x > 0, y > 0);
        c.0 += x as usize;
        c.1 += y as usize;
        c.2 += (x && y) as usize;
        c.3 += (x || y) as usize;
    }
    c
}

/// Surface voxels: foreground with a background 6-neighbour or on the border.
pub fn boundary(mask: &[u8], shape: [usize; 3]) -> Vec<[usize; 3]> {
    let [d, h, w] = shape;
    let at = |z: usize, y: usize, x: usize| mask[(z * h + y) * w + x] > 0;
    let mut out = Vec::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if !at(z, y, x) {
                    continue;
                }
                let edge = z == 0 || y == 0 || x == 0 || z + 1 == d || y + 1 == h || x + 1 == w;
                let bg = edge
                    || !at(z - 1, y, x)
                    || !at(z + 1, y, x)
                    || !at(z, y - 1, x)
                    || !at(z, y + 1, x)
                    || !at(z, y, x - 1)
                    || !at(z, y, x + 1);
                if bg {
                    out.push([z, y, x]);
                }
            }
        }
    }
    out
}

fn dist(p: [usize; 3], q: [usize; 3]) -> f64 {
    p.iter()
        .zip(&q)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// All-pairs symmetric surface distances: `(hd95, asd, hausdorff)`.
pub fn surface_bruteforce(a: &[u8], b: &[u8], shape: [usize; 3]) -> (f64, f64, f64) {
    let (ba, bb) = (boundary(a, shape), boundary(b, shape));
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| -> Vec<f64> {
        from.iter()
            .map(|&p| to.iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min))
            .collect()
    };
    let mut all = directed(&ba, &bb);
    all.extend(directed(&bb, &ba));
    all.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let asd = all.iter().sum::<f64>() / all.len() as f64;
    let pos = 0.95 * (all.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let hd95 = all[lo] + (pos - lo as f64) * (all[hi] - all[lo]);
    (hd95, asd, *all.last().unwrap())
}

/// PAvPU by enumerating every (zero-padded) patch.
pub fn pavpu_bruteforce(
    pred: &[u8],
    truth: &[u8],
    entropy: &[f64],
    shape: [usize; 3],
    patch: usize,
    threshold: f64,
) -> f64 {
    let [d, h, w] = shape;
    let up = |n: usize| n.div_ceil(patch) * patch;
    let (pd, ph, pw) = (up(d), up(h), up(w));
    let (mut ac, mut au, mut ic, mut iu) = (0usize, 0usize, 0usize, 0usize);
    for z0 in (0..pd).step_by(patch) {
        for y0 in (0..ph).step_by(patch) {
            for x0 in (0..pw).step_by(patch) {
                let (mut correct, mut ent) = (0usize, 0.0);
                for z in z0..z0 + patch {
                    for y in y0..y0 + patch {
                        for x in x0..x0 + patch {
                            if z < d && y < h && x < w {
                                let i = (z * h + y) * w + x;
                                correct += (pred[i] == truth[i]) as usize;
                                ent += entropy[i];
                            } else {
                                correct += 1;
                            }
                        }
                    }
                }
                let n = (patch * patch * patch) as f64;
                let accurate = correct as f64 / n >= 0.5;
                let uncertain = ent / n > threshold;
                match (accurate, uncertain) {
                    (true, false) => ac += 1,
                    (true, true) => au += 1,
                    (false, false) => ic += 1,
                    (false, true) => iu += 1,
                }
            }
        }
    }
    (ac + iu) as f64 / (ac + au + ic + iu) as f64
}
