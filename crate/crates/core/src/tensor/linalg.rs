//! Small dense linear-algebra kernels on row-major `n×n` slices.
//!
//! Sizes here are at most a few dozen, so everything is the textbook
//! O(n³) algorithm with no blocking.

use super::{Result, TensorError};

/// Lower Cholesky factor of the symmetric part of `a`. Only the lower
/// triangle of `a` is read.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(TensorError::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` (or `Lᵀ X = B` when `transpose`) for lower-triangular
/// `L` (`n×n`) and `B` (`n×k`). Only the lower triangle of `l` is read.
pub fn tri_solve(l: &[f64], b: &[f64], n: usize, k: usize, transpose: bool) -> Result<Vec<f64>> {
    for i in 0..n {
        if l[i * n + i] == 0.0 {
            return Err(TensorError::Domain {
                op: "tri_solve",
                detail: format!("zero diagonal at {i}"),
            });
        }
    }
    let mut x = b.to_vec();
    for c in 0..k {
        if !transpose {
            for i in 0..n {
                let mut s = x[i * k + c];
                for j in 0..i {
                    s -= l[i * n + j] * x[j * k + c];
                }
                x[i * k + c] = s / l[i * n + i];
            }
        } else {
            for i in (0..n).rev() {
                let mut s = x[i * k + c];
                for j in (i + 1)..n {
                    s -= l[j * n + i] * x[j * k + c];
                }
                x[i * k + c] = s / l[i * n + i];
            }
        }
    }
    Ok(x)
}

/// LU factorization with partial pivoting, packed in place.
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &[f64], n: usize) -> Result<Self> {
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for col in 0..n {
            let (p, max) = (col..n)
                .map(|r| (r, lu[r * n + col].abs()))
                .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if max == 0.0 {
                return Err(TensorError::Domain {
                    op: "lu",
                    detail: format!("singular matrix at column {col}"),
                });
            }
            if p != col {
                for j in 0..n {
                    lu.swap(p * n + j, col * n + j);
                }
                perm.swap(p, col);
                sign = -sign;
            }
            let piv = lu[col * n + col];
            for r in (col + 1)..n {
                let f = lu[r * n + col] / piv;
                lu[r * n + col] = f;
                for j in (col + 1)..n {
                    lu[r * n + j] -= f * lu[col * n + j];
                }
            }
        }
        Ok(Self { n, lu, perm, sign })
    }

    /// `log|det A|` together with the sign of the determinant.
    pub fn log_abs_det(&self) -> (f64, f64) {
        let n = self.n;
        let mut sign = self.sign;
        let mut acc = 0.0;
        for i in 0..n {
            let d = self.lu[i * n + i];
            if d < 0.0 {
                sign = -sign;
            }
            acc += d.abs().ln();
        }
        (acc, sign)
    }

    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for c in 0..n {
            for (i, v) in col.iter_mut().enumerate() {
                *v = if self.perm[i] == c { 1.0 } else { 0.0 };
            }
            for i in 0..n {
                for j in 0..i {
                    col[i] -= self.lu[i * n + j] * col[j];
                }
            }
            for i in (0..n).rev() {
                for j in (i + 1)..n {
                    col[i] -= self.lu[i * n + j] * col[j];
                }
                col[i] /= self.lu[i * n + i];
            }
            for i in 0..n {
                inv[i * n + c] = col[i];
            }
        }
        inv
    }
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        let llt = matmul(&l, &transpose(&l, 3, 3), 3, 3, 3);
        for (x, y) in llt.iter().zip(&a) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_names_failing_pivot() {
        let a = [1.0, 2.0, 2.0, 1.0];
        match cholesky(&a, 2) {
            Err(TensorError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lu_inverse_and_det() {
        let a = [0.0, 2.0, 1.0, 3.0];
        let lu = Lu::new(&a, 2).unwrap();
        let (ld, s) = lu.log_abs_det();
        assert!((ld - 2f64.ln()).abs() < 1e-14);
        assert_eq!(s, -1.0);
        let inv = lu.inverse();
        let prod = matmul(&a, &inv, 2, 2, 2);
        assert!((prod[0] - 1.0).abs() < 1e-14 && prod[1].abs() < 1e-14);
        assert!(prod[2].abs() < 1e-14 && (prod[3] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn triangular_solves() {
        let l = [2.0, 0.0, 1.0, 3.0];
        let b = [4.0, 7.0];
        let x = tri_solve(&l, &b, 2, 1, false).unwrap();
        assert_eq!(x, vec![2.0, 5.0 / 3.0]);
        let xt = tri_solve(&l, &b, 2, 1, true).unwrap();
        // Lᵀ = [[2,1],[0,3]]
        assert!((xt[1] - 7.0 / 3.0).abs() < 1e-15);
        assert!((xt[0] - (4.0 - 7.0 / 3.0) / 2.0).abs() < 1e-15);
    }
}
