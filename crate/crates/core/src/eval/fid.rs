//! Frechet distance between feature distributions.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

/// Ridge added to both covariance matrices before the square root.
pub const COVARIANCE_EPS: f64 = 1e-6;

fn check_features(x: &Array2<f64>, what: &str) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Validation(format!("{what}: empty feature matrix")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{what}: non-finite feature")));
    }
    Ok(())
}

/// Column means and the (unbiased, ridge-regularized) covariance of a
/// samples-by-features matrix.
fn gaussian_stats(x: &Array2<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = x.dim();
    let mut mean = DVector::zeros(d);
    for row in x.rows() {
        for (j, &v) in row.iter().enumerate() {
            mean[j] += v;
        }
    }
    mean /= n as f64;

    let mut cov = DMatrix::zeros(d, d);
    if n > 1 {
        for row in x.rows() {
            for i in 0..d {
                let di = row[i] - mean[i];
                for j in i..d {
                    cov[(i, j)] += di * (row[j] - mean[j]);
                }
            }
        }
        cov /= (n - 1) as f64;
        for i in 0..d {
            for j in 0..i {
                cov[(i, j)] = cov[(j, i)];
            }
        }
    }
    for i in 0..d {
        cov[(i, i)] += COVARIANCE_EPS;
    }
    (mean, cov)
}

/// Symmetric positive-semidefinite square root via eigendecomposition;
/// slightly negative eigenvalues from roundoff are clamped to zero.
fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose()
}

/// Frechet distance between the Gaussian fits of two feature sets
/// (rows = samples):
/// `‖μ_A − μ_B‖² + tr(C_A + C_B − 2 (C_A C_B)^{1/2})`.
///
/// The matrix square root is taken through the symmetrized product
/// `C_A^{1/2} C_B C_A^{1/2}`, which shares its eigenvalues with `C_A C_B`
/// but stays symmetric, so a symmetric eigensolver applies.
pub fn fid(features_a: &Array2<f64>, features_b: &Array2<f64>) -> Result<f64> {
    check_features(features_a, "features_a")?;
    check_features(features_b, "features_b")?;
    let d = features_a.ncols();
    if features_b.ncols() != d {
        return Err(Error::Shape(format!(
            "feature dims differ: {d} vs {}",
            features_b.ncols()
        )));
    }
    for (name, n) in [("A", features_a.nrows()), ("B", features_b.nrows())] {
        if n <= d {
            log::warn!("fid: set {name} has {n} samples for {d} dims; covariance is rank-deficient");
        }
    }

    let (mean_a, cov_a) = gaussian_stats(features_a);
    let (mean_b, cov_b) = gaussian_stats(features_b);

    let sqrt_a = symmetric_sqrt(&cov_a);
    let mut inner = &sqrt_a * &cov_b * &sqrt_a;
    // Re-symmetrize against roundoff before the eigensolve.
    inner = (&inner + inner.transpose()) * 0.5;
    let trace_sqrt: f64 = inner
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();

    let mean_diff = (&mean_a - &mean_b).norm_squared();
    let value = mean_diff + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("fid produced {value}")));
    }
    Ok(value)
}
