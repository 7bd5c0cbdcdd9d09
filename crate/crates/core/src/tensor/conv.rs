//! Direct 3×3×3 convolution over `C×D×H×W` volumes.
//!
//! Padding is always 1 on every axis. The stride applies to H and W only;
//! the depth axis always uses stride 1 so output depth equals input depth.

use super::{Result, TensorError};

const K: usize = 3;

/// Output shape `[c_out, d, h_out, w_out]` for an input of shape
/// `[c_in, d, h, w]` and kernels `[c_out, c_in, 3, 3, 3]`.
pub fn conv3d_out_shape(x: &[usize], k: &[usize], stride: usize) -> Result<[usize; 4]> {
    if k.len() != 5 || k[2..] != [K, K, K] {
        return Err(TensorError::Invalid(format!(
            "conv3d: kernel must be [c_out, c_in, 3, 3, 3], got {k:?}"
        )));
    }
    if x.len() != 4 {
        return Err(TensorError::Invalid(format!(
            "conv3d: input must be [c, d, h, w], got {x:?}"
        )));
    }
    if x[0] != k[1] {
        return Err(TensorError::ShapeMismatch {
            op: "conv3d",
            left: x.to_vec(),
            right: k.to_vec(),
        });
    }
    if stride == 0 {
        return Err(TensorError::Invalid("conv3d: stride must be ≥ 1".into()));
    }
    if stride > 1 && (x[2] % stride != 0 || x[3] % stride != 0) {
        return Err(TensorError::Invalid(format!(
            "conv3d: spatial dims {}×{} not divisible by stride {stride}",
            x[2], x[3]
        )));
    }
    Ok([k[0], x[1], (x[2] - 1) / stride + 1, (x[3] - 1) / stride + 1])
}

/// Range of output columns whose input column `o*stride + kw - 1` is in bounds.
#[inline]
fn valid_range(out_len: usize, in_len: usize, stride: usize, kw: usize) -> (usize, usize) {
    // need 0 <= o*s + kw - 1 < in_len
    let lo = if kw == 0 { 1usize.div_ceil(stride) } else { 0 };
    let hi_excl = (in_len + 1 - kw).div_ceil(stride);
    (lo.min(out_len), hi_excl.min(out_len))
}

pub fn conv3d_forward(
    x: &[f64],
    xs: &[usize],
    k: &[f64],
    ks: &[usize],
    stride: usize,
) -> Result<(Vec<f64>, [usize; 4])> {
    let os = conv3d_out_shape(xs, ks, stride)?;
    let [c_out, d, ho, wo] = os;
    let (c_in, h, w) = (xs[0], xs[2], xs[3]);
    let mut out = vec![0.0; c_out * d * ho * wo];
    for co in 0..c_out {
        for ci in 0..c_in {
            let kbase = (co * c_in + ci) * K * K * K;
            for kd in 0..K {
                for kh in 0..K {
                    for kw in 0..K {
                        let wv = k[kbase + (kd * K + kh) * K + kw];
                        if wv == 0.0 {
                            continue;
                        }
                        let (lo, hi) = valid_range(wo, w, stride, kw);
                        for od in 0..d {
                            let id = od + kd;
                            if id == 0 || id > d {
                                continue;
                            }
                            let id = id - 1;
                            for oh in 0..ho {
                                let ih = oh * stride + kh;
                                if ih == 0 || ih > h {
                                    continue;
                                }
                                let ih = ih - 1;
                                let orow = ((co * d + od) * ho + oh) * wo;
                                let irow = ((ci * d + id) * h + ih) * w;
                                if stride == 1 {
                                    let dst = &mut out[orow + lo..orow + hi];
                                    let src = &x[irow + lo + kw - 1..irow + hi + kw - 1];
                                    for (o, &v) in dst.iter_mut().zip(src) {
                                        *o += wv * v;
                                    }
                                } else {
                                    for ow in lo..hi {
                                        out[orow + ow] += wv * x[irow + ow * stride + kw - 1];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((out, os))
}

/// Gradients `(d_input, d_kernels)` given the output adjoint `g`.
pub fn conv3d_backward(
    x: &[f64],
    xs: &[usize],
    k: &[f64],
    ks: &[usize],
    stride: usize,
    g: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let [c_out, d, ho, wo] = conv3d_out_shape(xs, ks, stride)?;
    let (c_in, h, w) = (xs[0], xs[2], xs[3]);
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    for co in 0..c_out {
        for ci in 0..c_in {
            let kbase = (co * c_in + ci) * K * K * K;
            for kd in 0..K {
                for kh in 0..K {
                    for kw in 0..K {
                        let kidx = kbase + (kd * K + kh) * K + kw;
                        let wv = k[kidx];
                        let (lo, hi) = valid_range(wo, w, stride, kw);
                        let mut acc = 0.0;
                        for od in 0..d {
                            let id = od + kd;
                            if id == 0 || id > d {
                                continue;
                            }
                            let id = id - 1;
                            for oh in 0..ho {
                                let ih = oh * stride + kh;
                                if ih == 0 || ih > h {
                                    continue;
                                }
                                let ih = ih - 1;
                                let orow = ((co * d + od) * ho + oh) * wo;
                                let irow = ((ci * d + id) * h + ih) * w;
                                if stride == 1 {
                                    let gsrc = &g[orow + lo..orow + hi];
                                    let (a, b) = (irow + lo + kw - 1, irow + hi + kw - 1);
                                    let xsrc = &x[a..b];
                                    for (&gv, &xv) in gsrc.iter().zip(xsrc) {
                                        acc += gv * xv;
                                    }
                                    let gdst = &mut gx[a..b];
                                    for (o, &gv) in gdst.iter_mut().zip(gsrc) {
                                        *o += wv * gv;
                                    }
                                } else {
                                    for ow in lo..hi {
                                        let gi = irow + ow * stride + kw - 1;
                                        let gv = g[orow + ow];
                                        acc += gv * x[gi];
                                        gx[gi] += wv * gv;
                                    }
                                }
                            }
                        }
                        gk[kidx] += acc;
                    }
                }
            }
        }
    }
    Ok((gx, gk))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_bruteforce() {
        for in_len in 1..9 {
            for stride in 1..3 {
                if stride > 1 && in_len % stride != 0 {
                    continue;
                }
                let out_len = (in_len - 1) / stride + 1;
                for kw in 0..3 {
                    let brute: Vec<usize> = (0..out_len)
                        .filter(|&o| {
                            let i = (o * stride + kw) as isize - 1;
                            i >= 0 && (i as usize) < in_len
                        })
                        .collect();
                    let (lo, hi) = valid_range(out_len, in_len, stride, kw);
                    assert_eq!(brute, (lo..hi).collect::<Vec<_>>(), "{in_len} {stride} {kw}");
                }
            }
        }
    }

    #[test]
    fn strided_output_shape() {
        let s = conv3d_out_shape(&[2, 3, 8, 6], &[4, 2, 3, 3, 3], 2).unwrap();
        assert_eq!(s, [4, 3, 4, 3]);
        assert!(conv3d_out_shape(&[2, 3, 7, 6], &[4, 2, 3, 3, 3], 2).is_err());
        assert!(conv3d_out_shape(&[2, 3, 8, 6], &[4, 2, 3, 3, 1], 1).is_err());
    }
}
