//! Latent Gaussian mathematics.
//!
//! Each slice of a volume carries its own Gaussian `q(zᵢ | x)` parametrized
//! by a mean `μᵢ` and a lower-triangular precision factor `Lᵢ` with
//! `Λᵢ = LᵢLᵢᵀ + εI`. Multiplying the slice densities gives an unnormalized
//! Gaussian with
//!
//! ```text
//! Λ* = Σ Λᵢ        μ* = Λ*⁻¹ Σ Λᵢ μᵢ
//! ```
//!
//! and the KL of that product against the standard normal prior is
//!
//! ```text
//! ½ ( log det Λ* + tr Λ*⁻¹ + μ*ᵀμ* − D )
//! ```
//!
//! Every routine has a tape form (`*_on`) used inside models and a value
//! form for standalone use.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Diagonal jitter added to every slice precision.
pub const PRECISION_JITTER: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("cannot fuse an empty list of Gaussians")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("variance at ({slice}, {dim}) must be positive, got {value}")]
    NonPositiveVariance { slice: usize, dim: usize, value: f64 },
    #[error("precision factor diagonal must be positive (entry {0})")]
    NonPositiveDiagonal(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, GaussianError>;

/// One slice's variational Gaussian, as plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceGaussian {
    mean: Tensor,
    prec_chol: Tensor,
}

impl SliceGaussian {
    pub fn new(mean: Vec<f64>, prec_chol: Tensor) -> Result<Self> {
        let d = mean.len();
        if prec_chol.shape() != [d, d] {
            return Err(GaussianError::DimMismatch {
                expected: d,
                got: prec_chol.shape()[0],
            });
        }
        for i in 0..d {
            if !(prec_chol.at2(i, i) > 0.0) {
                return Err(GaussianError::NonPositiveDiagonal(i));
            }
        }
        // only the lower triangle is meaningful
        let mut l = prec_chol;
        for i in 0..d {
            for j in (i + 1)..d {
                l.data_mut()[i * d + j] = 0.0;
            }
        }
        Ok(Self {
            mean: Tensor::from_vec(mean),
            prec_chol: l,
        })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: Tensor::zeros(&[d]),
            prec_chol: Tensor::eye(d),
        }
    }

    /// Diagonal factor `diag(l)`, i.e. precision `diag(l²) + εI`.
    pub fn diagonal(mean: Vec<f64>, l: &[f64]) -> Result<Self> {
        let d = l.len();
        let mut m = Tensor::zeros(&[d, d]);
        for (i, &v) in l.iter().enumerate() {
            m.data_mut()[i * d + i] = v;
        }
        Self::new(mean, m)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.data()
    }

    pub fn prec_chol(&self) -> &Tensor {
        &self.prec_chol
    }

    /// `Λ = LLᵀ + εI`.
    pub fn precision(&self) -> Tensor {
        let d = self.dim();
        let l = self.prec_chol.data();
        let mut p = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                p[i * d + j] = (0..d).map(|k| l[i * d + k] * l[j * d + k]).sum();
            }
            p[i * d + i] += PRECISION_JITTER;
        }
        Tensor::new(vec![d, d], p).expect("square")
    }

    fn on(&self, tape: &mut Tape, requires_grad: bool) -> SliceGaussianVar {
        SliceGaussianVar {
            mean: tape.leaf(self.mean.clone(), requires_grad),
            prec_chol: tape.leaf(self.prec_chol.clone(), requires_grad),
        }
    }
}

/// Product of slice Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedGaussian {
    pub mean: Vec<f64>,
    pub precision: Tensor,
}

impl FusedGaussian {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Per-slice latent vectors, `n×D`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z: Tensor,
}

impl LatentSample {
    pub fn slices(&self) -> usize {
        self.z.shape()[0]
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let d = self.z.shape()[1];
        &self.z.data()[i * d..(i + 1) * d]
    }
}

/// A slice Gaussian whose parameters live on a tape.
#[derive(Debug, Clone, Copy)]
pub struct SliceGaussianVar {
    /// `D` vector.
    pub mean: Var,
    /// `D×D` lower-triangular factor.
    pub prec_chol: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct FusedGaussianVar {
    pub mean: Var,
    pub precision: Var,
    pub precision_chol: Var,
}

fn check_dims(tape: &Tape, slices: &[SliceGaussianVar]) -> Result<usize> {
    let first = slices.first().ok_or(GaussianError::Empty)?;
    let d = tape.shape(first.mean)[0];
    for s in slices {
        let got = tape.shape(s.mean)[0];
        if got != d || tape.shape(s.prec_chol) != [d, d] {
            return Err(GaussianError::DimMismatch { expected: d, got });
        }
    }
    Ok(d)
}

/// `LLᵀ + εI` on the tape.
pub fn precision_on(tape: &mut Tape, prec_chol: Var) -> Result<Var> {
    let d = tape.shape(prec_chol)[0];
    let lt = tape.transpose(prec_chol)?;
    let llt = tape.matmul(prec_chol, lt)?;
    let mut jitter = Tensor::eye(d);
    jitter.data_mut().iter_mut().for_each(|v| *v *= PRECISION_JITTER);
    let j = tape.constant(jitter);
    Ok(tape.add(llt, j)?)
}

/// Product-of-experts fusion: summed precisions, mean from a Cholesky solve.
pub fn fuse_on(tape: &mut Tape, slices: &[SliceGaussianVar]) -> Result<FusedGaussianVar> {
    let d = check_dims(tape, slices)?;
    let mut prec_sum: Option<Var> = None;
    let mut info_sum: Option<Var> = None;
    for s in slices {
        let p = precision_on(tape, s.prec_chol)?;
        let m = tape.reshape(s.mean, &[d, 1])?;
        let pm = tape.matmul(p, m)?;
        prec_sum = Some(match prec_sum {
            Some(acc) => tape.add(acc, p)?,
            None => p,
        });
        info_sum = Some(match info_sum {
            Some(acc) => tape.add(acc, pm)?,
            None => pm,
        });
    }
    let (precision, info) = (prec_sum.expect("non-empty"), info_sum.expect("non-empty"));
    let chol = tape.cholesky(precision)?;
    let y = tape.tri_solve(chol, info, false)?;
    let mean = tape.tri_solve(chol, y, true)?;
    let mean = tape.reshape(mean, &[d])?;
    Ok(FusedGaussianVar {
        mean,
        precision,
        precision_chol: chol,
    })
}

/// `½(log det Λ + tr Λ⁻¹ + μᵀμ − D)`: KL of `N(μ, Λ⁻¹)` against `N(0, I)`.
pub fn kl_volume_on(tape: &mut Tape, mean: Var, precision: Var) -> Result<Var> {
    let d = tape.shape(mean)[0];
    if tape.shape(precision) != [d, d] {
        return Err(GaussianError::DimMismatch {
            expected: d,
            got: tape.shape(precision)[0],
        });
    }
    let logdet = tape.logdet(precision)?;
    let cov = tape.matinv(precision)?;
    let tr = tape.trace(cov)?;
    let mm = tape.mul(mean, mean)?;
    let quad = tape.sum(mm);
    let a = tape.add(logdet, tr)?;
    let b = tape.add(a, quad)?;
    let c = tape.offset(b, -(d as f64));
    Ok(tape.scale(c, 0.5))
}

/// KL of the fused slice product against the standard normal prior.
pub fn kl_fused_on(tape: &mut Tape, slices: &[SliceGaussianVar]) -> Result<Var> {
    let fused = fuse_on(tape, slices)?;
    kl_volume_on(tape, fused.mean, fused.precision)
}

/// Independent-components KL from per-slice means and variances (`n×D`).
pub fn kl_ic_on(tape: &mut Tape, means: Var, variances: Var) -> Result<Var> {
    let shape = tape.shape(means).to_vec();
    if shape.len() != 2 || tape.shape(variances) != shape.as_slice() {
        return Err(TensorError::ShapeMismatch {
            op: "kl_ic",
            left: shape,
            right: tape.shape(variances).to_vec(),
        }
        .into());
    }
    let (n, d) = (shape[0], shape[1]);
    if let Some(k) = tape.value(variances).data().iter().position(|&v| !(v > 0.0)) {
        return Err(GaussianError::NonPositiveVariance {
            slice: k / d,
            dim: k % d,
            value: tape.value(variances).data()[k],
        });
    }
    // 1/σ² = exp(−log σ²)
    let logv = tape.log(variances)?;
    let nlogv = tape.neg(logv);
    let inv_var = tape.exp(nlogv);
    let weighted = tape.mul(means, inv_var)?;
    let ones = tape.constant(Tensor::full(&[1, n], 1.0));
    let prec = tape.matmul(ones, inv_var)?;
    let info = tape.matmul(ones, weighted)?;
    // fused variance v = 1/Σ(1/σ²), fused mean m = v·Σ(μ/σ²)
    let logp = tape.log(prec)?;
    let nlogp = tape.neg(logp);
    let var = tape.exp(nlogp);
    let m = tape.mul(var, info)?;
    let m2 = tape.mul(m, m)?;
    // −log v + v + m² − 1, summed over D
    let t1 = tape.add(logp, var)?;
    let t2 = tape.add(t1, m2)?;
    let s = tape.sum(t2);
    let s = tape.offset(s, -(d as f64));
    Ok(tape.scale(s, 0.5))
}

/// `zᵢ = μᵢ + Lᵢ⁻ᵀ εᵢ` for supplied noise vectors.
pub fn sample_with_noise_on(
    tape: &mut Tape,
    slices: &[SliceGaussianVar],
    noise: &[Tensor],
) -> Result<Vec<Var>> {
    let d = check_dims(tape, slices)?;
    if noise.len() != slices.len() {
        return Err(GaussianError::DimMismatch {
            expected: slices.len(),
            got: noise.len(),
        });
    }
    slices
        .iter()
        .zip(noise)
        .map(|(s, e)| {
            if e.len() != d {
                return Err(GaussianError::DimMismatch {
                    expected: d,
                    got: e.len(),
                });
            }
            let ev = tape.constant(e.reshape(&[d])?);
            let offset = tape.tri_solve(s.prec_chol, ev, true)?;
            Ok(tape.add(s.mean, offset)?)
        })
        .collect()
}

/// Standard-normal noise for `n` slices of dimension `d`.
pub fn draw_noise<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<Tensor> {
    (0..n)
        .map(|_| Tensor::from_vec((0..d).map(|_| StandardNormal.sample(rng)).collect()))
        .collect()
}

pub fn sample_per_slice_on<R: Rng + ?Sized>(
    tape: &mut Tape,
    slices: &[SliceGaussianVar],
    rng: &mut R,
) -> Result<Vec<Var>> {
    let d = check_dims(tape, slices)?;
    let noise = draw_noise(slices.len(), d, rng);
    sample_with_noise_on(tape, slices, &noise)
}

// ---- value-level wrappers ---------------------------------------------

fn lift(tape: &mut Tape, slices: &[SliceGaussian]) -> Vec<SliceGaussianVar> {
    slices.iter().map(|s| s.on(tape, false)).collect()
}

pub fn fuse(slices: &[SliceGaussian]) -> Result<FusedGaussian> {
    let mut tape = Tape::new();
    let vars = lift(&mut tape, slices);
    let f = fuse_on(&mut tape, &vars)?;
    Ok(FusedGaussian {
        mean: tape.value(f.mean).data().to_vec(),
        precision: tape.value(f.precision).clone(),
    })
}

pub fn kl_fused_to_standard(slices: &[SliceGaussian]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = lift(&mut tape, slices);
    let kl = kl_fused_on(&mut tape, &vars)?;
    Ok(tape.value(kl).item())
}

pub fn kl_volume_variant(vol: &FusedGaussian) -> Result<f64> {
    let mut tape = Tape::new();
    let m = tape.constant(Tensor::from_vec(vol.mean.clone()));
    let p = tape.constant(vol.precision.clone());
    let kl = kl_volume_on(&mut tape, m, p)?;
    Ok(tape.value(kl).item())
}

pub fn kl_ic_variant(means: &Tensor, variances: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let m = tape.constant(means.clone());
    let v = tape.constant(variances.clone());
    let kl = kl_ic_on(&mut tape, m, v)?;
    Ok(tape.value(kl).item())
}

pub fn sample_per_slice<R: Rng + ?Sized>(
    slices: &[SliceGaussian],
    rng: &mut R,
) -> Result<LatentSample> {
    let d = slices.first().ok_or(GaussianError::Empty)?.dim();
    let noise = draw_noise(slices.len(), d, rng);
    sample_with_noise(slices, &noise)
}

pub fn sample_with_noise(slices: &[SliceGaussian], noise: &[Tensor]) -> Result<LatentSample> {
    let mut tape = Tape::new();
    let vars = lift(&mut tape, slices);
    let zs = sample_with_noise_on(&mut tape, &vars, noise)?;
    let d = vars.first().map(|v| tape.shape(v.mean)[0]).unwrap_or(0);
    let data = zs.iter().flat_map(|&z| tape.value(z).data().to_vec()).collect();
    Ok(LatentSample {
        z: Tensor::new(vec![zs.len(), d], data)?,
    })
}
