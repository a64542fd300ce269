use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Power-iteration cap per component.
pub const PCA_MAX_ITER: usize = 10_000;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// N×k scores of the centered data.
    pub projected: Tensor,
    /// k×D, one orthonormal component per row.
    pub components: Tensor,
    pub explained_fraction: Vec<f64>,
    pub mean: Vec<f64>,
}

impl PcaResult {
    /// Maps scores back to the input space.
    pub fn reconstruct(&self) -> Result<Tensor> {
        let mut out = self.projected.matmul(&self.components)?;
        let d = self.mean.len();
        for r in 0..out.rows() {
            out.row_mut(r).iter_mut().zip(&self.mean).for_each(|(v, m)| *v += m);
        }
        debug_assert_eq!(out.row_len(), d);
        Ok(out)
    }
}

/// Top-`k` principal components by power iteration on the covariance with
/// deflation. Each vector is re-orthogonalized against the components found
/// so far, so rank-deficient data yields an orthonormal basis completion with
/// zero explained variance.
pub fn pca_project(embeddings: &Tensor, k: usize) -> Result<PcaResult> {
    let [n, d] = embeddings.dims2()?;
    if n < 2 {
        return Err(Error::DegenerateInput(format!("PCA needs ≥ 2 rows, got {n}")));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::Validation(format!(
            "PCA k = {k} outside 1..={}",
            n.min(d)
        )));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        mean.iter_mut().zip(embeddings.row(r)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = embeddings.clone();
    for r in 0..n {
        centered.row_mut(r).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
    let mut cov = centered.transpose()?.matmul(&centered)?.scale(1.0 / n as f64);
    let trace: f64 = (0..d).map(|i| cov.get2(i, i)).sum();
    let tol = RESIDUAL_TOL * trace.max(f64::MIN_POSITIVE);

    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigvals = Vec::with_capacity(k);
    for c in 0..k {
        let (v, lambda) = leading_eigvec(&cov, &comps, c, tol)?;
        // deflate
        for i in 0..d {
            for j in 0..d {
                let x = cov.get2(i, j) - lambda * v[i] * v[j];
                cov.set2(i, j, x);
            }
        }
        comps.push(v);
        eigvals.push(lambda.max(0.0));
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eigvals[b].total_cmp(&eigvals[a]).then(a.cmp(&b)));
    let components = Tensor::from_rows(&order.iter().map(|&i| comps[i].clone()).collect::<Vec<_>>())?;
    let explained_fraction = order
        .iter()
        .map(|&i| if trace > 0.0 { eigvals[i] / trace } else { 0.0 })
        .collect();
    let projected = centered.matmul(&components.transpose()?)?;
    Ok(PcaResult {
        projected,
        components,
        explained_fraction,
        mean,
    })
}

fn leading_eigvec(cov: &Tensor, found: &[Vec<f64>], index: usize, tol: f64) -> Result<(Vec<f64>, f64)> {
    let d = cov.rows();
    // deterministic start that is unlikely to be orthogonal to the target
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + ((i * 7 + index * 13) % 11) as f64 / 10.0).collect();
    orthonormalize(&mut v, found);
    let mut w = vec![0.0; d];
    for _ in 0..PCA_MAX_ITER {
        matvec(cov, &v, &mut w);
        // deflation leaves O(tol) leakage along earlier components; measure
        // the residual of the operator restricted to their complement
        project_out(&mut w, found);
        let lambda: f64 = dot(&v, &w);
        let residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol {
            return Ok((v, lambda));
        }
        std::mem::swap(&mut v, &mut w);
        if !orthonormalize(&mut v, found) {
            // remaining spectrum is zero: any orthonormal completion works
            let mut e = basis_completion(found, d, index);
            orthonormalize(&mut e, found);
            return Ok((e, 0.0));
        }
    }
    Err(Error::ConvergenceFailure {
        component: index,
        iterations: PCA_MAX_ITER,
    })
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
}

/// Gram–Schmidt (twice, for stability) then normalize. Returns false when
/// nothing is left after projection.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    project_out(v, basis);
    let norm = dot(v, v).sqrt();
    if norm < 1e-300 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn basis_completion(basis: &[Vec<f64>], d: usize, index: usize) -> Vec<f64> {
    let mut best = vec![0.0; d];
    let mut best_norm = -1.0;
    for axis in 0..d {
        let mut e = vec![0.0; d];
        e[(axis + index) % d] = 1.0;
        for b in basis {
            let p = dot(&e, b);
            e.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = dot(&e, &e);
        if n > best_norm + 1e-12 {
            best_norm = n;
            best = e;
        }
    }
    best
}

fn matvec(a: &Tensor, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(a.row(i), x);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `label,pc1,pc2` rows for the first two scores.
pub fn pca_csv(result: &PcaResult, labels: &[i32]) -> Result<String> {
    let [n, k] = result.projected.dims2()?;
    if n != labels.len() {
        return Err(Error::ShapeMismatch(format!("{n} rows but {} labels", labels.len())));
    }
    let mut s = String::from("label,pc1,pc2\n");
    for (r, l) in labels.iter().enumerate() {
        let row = result.projected.row(r);
        let pc2 = if k > 1 { row[1] } else { 0.0 };
        s.push_str(&format!("{l},{},{}\n", row[0], pc2));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngStream;

    fn gram_is_identity(c: &Tensor) -> bool {
        let g = c.matmul(&c.transpose().unwrap()).unwrap();
        let k = g.rows();
        (0..k).all(|i| (0..k).all(|j| (g.get2(i, j) - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8))
    }

    #[test]
    fn line_in_3d_is_rank_one() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.3 - 2.0;
                vec![1.0 + t, 2.0 - 2.0 * t, 0.5 * t]
            })
            .collect();
        let z = Tensor::from_rows(&rows).unwrap();
        let r = pca_project(&z, 1).unwrap();
        assert!((r.explained_fraction[0] - 1.0).abs() < 1e-10);
        let r3 = pca_project(&z, 3).unwrap();
        assert!(gram_is_identity(&r3.components));
        assert!(r3.explained_fraction[1].abs() < 1e-10);
    }

    #[test]
    fn isotropic_cloud_splits_evenly() {
        let mut rng = RngStream::new(5);
        let rows: Vec<Vec<f64>> = (0..4000).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let r = pca_project(&Tensor::from_rows(&rows).unwrap(), 2).unwrap();
        for f in &r.explained_fraction {
            assert!((f - 0.5).abs() < 0.05, "{f}");
        }
    }

    #[test]
    fn full_reconstruction() {
        let mut rng = RngStream::new(9);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        let z = Tensor::from_rows(&rows).unwrap();
        let r = pca_project(&z, 4).unwrap();
        let back = r.reconstruct().unwrap();
        let err = back.sub(&z).unwrap().norm();
        assert!(err < 1e-8, "{err}");
        assert!(r.explained_fraction.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn last_component_converges_despite_deflation_error() {
        let z = crate::numcore::gaussian_matrix(&mut RngStream::new(14698149021488084430), 33, 6);
        let r = pca_project(&z, 6).unwrap();
        let total: f64 = r.explained_fraction.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
        assert!(gram_is_identity(&r.components));
    }

    #[test]
    fn k_out_of_range() {
        let z = Tensor::matrix(3, 2, vec![0.0; 6]).unwrap();
        assert!(pca_project(&z, 3).is_err());
        assert!(pca_project(&z, 0).is_err());
    }

    #[test]
    fn constant_data_still_gives_orthonormal_basis() {
        let z = Tensor::filled(&[5, 3], 2.0);
        let r = pca_project(&z, 3).unwrap();
        assert!(gram_is_identity(&r.components));
        assert!(r.explained_fraction.iter().all(|&f| f == 0.0));
    }
}
