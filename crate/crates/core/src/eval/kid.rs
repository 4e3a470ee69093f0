//! Kernel distance between feature distributions: unbiased squared MMD
//! with the polynomial kernel `k(x, y) = (x·y/d + 1)^3`, averaged over
//! random subsets.

use crate::error::{Error, Result};
use ndarray::Array2;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SUBSETS: usize = 10;
pub const DEFAULT_SUBSET_SIZE: usize = 100;

/// Subset-averaged score. `mean` is the raw squared MMD; reports follow
/// the convention of quoting it multiplied by 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KidScore {
    pub mean: f64,
    /// Sample standard deviation over subsets (0 when folds == 1).
    pub std: f64,
    pub folds: usize,
    pub subset_size: usize,
}

fn kernel(x: &[f64], y: &[f64], d: f64) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let base = dot / d + 1.0;
    base * base * base
}

/// Unbiased MMD^2 between two equally sized index subsets.
fn mmd2_unbiased(a: &Array2<f64>, idx_a: &[usize], b: &Array2<f64>, idx_b: &[usize]) -> f64 {
    let d = a.ncols() as f64;
    let s = idx_a.len();
    let row = |m: &Array2<f64>, i: usize| m.row(i).to_vec();

    let mut k_aa = 0.0;
    let mut k_bb = 0.0;
    for i in 0..s {
        let ai = row(a, idx_a[i]);
        let bi = row(b, idx_b[i]);
        for j in 0..s {
            if i == j {
                continue;
            }
            k_aa += kernel(&ai, &row(a, idx_a[j]), d);
            k_bb += kernel(&bi, &row(b, idx_b[j]), d);
        }
    }
    let mut k_ab = 0.0;
    for i in 0..s {
        let ai = row(a, idx_a[i]);
        for j in 0..s {
            k_ab += kernel(&ai, &row(b, idx_b[j]), d);
        }
    }
    let ss = (s * (s - 1)) as f64;
    k_aa / ss + k_bb / ss - 2.0 * k_ab / (s * s) as f64
}

/// Kernel distance between two feature sets (rows = samples): the unbiased
/// squared MMD estimated on `folds` random subsets of `subset_size`
/// drawn without replacement from each set.
pub fn kid(
    features_a: &Array2<f64>,
    features_b: &Array2<f64>,
    subset_size: usize,
    folds: usize,
    seed: u64,
) -> Result<KidScore> {
    let d = features_a.ncols();
    if features_b.ncols() != d || d == 0 {
        return Err(Error::Shape(format!(
            "feature dims differ or empty: {d} vs {}",
            features_b.ncols()
        )));
    }
    if features_a.iter().chain(features_b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite feature".into()));
    }
    if subset_size < 2 {
        return Err(Error::Validation(format!(
            "subset_size must be >= 2 for the unbiased estimator, got {subset_size}"
        )));
    }
    if subset_size > features_a.nrows() || subset_size > features_b.nrows() {
        return Err(Error::Validation(format!(
            "subset_size {subset_size} exceeds sample counts ({}, {})",
            features_a.nrows(),
            features_b.nrows()
        )));
    }
    if folds == 0 {
        return Err(Error::Validation("folds must be >= 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(folds);
    for _ in 0..folds {
        let idx_a = rand::seq::index::sample(&mut rng, features_a.nrows(), subset_size).into_vec();
        let idx_b = rand::seq::index::sample(&mut rng, features_b.nrows(), subset_size).into_vec();
        values.push(mmd2_unbiased(features_a, &idx_a, features_b, &idx_b));
    }
    let mean = values.iter().sum::<f64>() / folds as f64;
    let std = if folds > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (folds - 1) as f64).sqrt()
    } else {
        0.0
    };
    if !mean.is_finite() || !std.is_finite() {
        return Err(Error::Numeric(format!("kid produced {mean} ± {std}")));
    }
    Ok(KidScore {
        mean,
        std,
        folds,
        subset_size,
    })
}
