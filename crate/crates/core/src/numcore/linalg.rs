use crate::error::{Error, Result};

use super::tensor::Tensor;

const SYMMETRY_TOL: f64 = 1e-9;

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = S`.
///
/// `S` must be symmetric within `1e-9` (relative to its largest entry) and
/// positive definite. Entries above the diagonal of the result are exactly 0.
pub fn cholesky_factor(s: &Tensor) -> Result<Tensor> {
    let [n, m] = s.dims2()?;
    if n != m {
        return Err(Error::ShapeMismatch(format!("cholesky of {n}x{m}")));
    }
    let a = s.data();
    let scale = a.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (a[i * n + j] - a[j * n + i]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::ShapeMismatch(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { row: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            v -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
            l[i * n + j] = v / ljj;
        }
    }
    Tensor::matrix(n, n, l)
}

/// `A · Aᵀ` for a matrix `A`.
pub fn gram_outer(a: &Tensor) -> Result<Tensor> {
    let [r, c] = a.dims2()?;
    let mut out = vec![0.0; r * r];
    super::tensor::gemm_nt(r, c, r, a.data(), a.data(), &mut out);
    Tensor::matrix(r, r, out)
}

/// Adds `value` to every diagonal entry of a square matrix.
pub fn add_diagonal(s: &Tensor, value: f64) -> Result<Tensor> {
    let [n, m] = s.dims2()?;
    if n != m {
        return Err(Error::ShapeMismatch(format!("diagonal of {n}x{m}")));
    }
    let mut out = s.clone();
    for i in 0..n {
        out.data_mut()[i * n + i] += value;
    }
    Ok(out)
}

/// Computes `L · z` for lower-triangular `L`, skipping the zero upper half.
pub fn lower_matvec(l: &Tensor, z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let d = l.data();
    (0..n)
        .map(|i| d[i * n..=i * n + i].iter().zip(&z[..=i]).map(|(a, b)| a * b).sum())
        .collect()
}
