//! Fixed random-projection convolutional embedding for FID/KID.
//!
//! Distribution distances only order models when both sides use the same
//! embedding, so the extractor is deterministic from a seed and carries a
//! content hash that every report records. Absolute values from different
//! embeddings are not comparable; rankings under one hash are. A
//! higher-capacity pretrained embedding can be swapped in through the
//! [`FeatureEmbedding`] trait.

use crate::autograd::{init, Graph, ParamSet};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nets::batch_from_images;
use ndarray::Array2;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Output dimension of the default extractor.
pub const FEATURE_DIM: usize = 64;

/// Images are first resampled to this side length.
const INPUT_SIDE: usize = 32;
const C1: usize = 16;
const C2: usize = 32;
/// Spatial side after the two stride-2 convolutions and the final pool.
const POOLED: usize = 4;

/// Anything that turns images into fixed-length feature vectors.
pub trait FeatureEmbedding {
    fn dim(&self) -> usize;
    /// Content hash identifying the embedding; equal hashes mean
    /// comparable scores.
    fn hash(&self) -> &str;
    fn extract(&self, images: &[&Image]) -> Result<Array2<f64>>;
}

/// The default embedding: two fixed random convolutions and a random
/// linear projection, untrained and frozen at construction.
pub struct FeatureExtractor {
    params: ParamSet<f32>,
    seed: u64,
    hash: String,
}

impl FeatureExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        p.add("conv1.w", init::he_normal::<f32, _>(&mut rng, &[C1, 3, 3, 3]));
        p.add(
            "conv2.w",
            init::he_normal::<f32, _>(&mut rng, &[C2, C1, 3, 3]),
        );
        p.add(
            "proj.w",
            init::he_normal::<f32, _>(&mut rng, &[FEATURE_DIM, C2 * POOLED * POOLED]),
        );
        p.add("proj.b", init::zeros::<f32>(&[FEATURE_DIM]));
        let hash = content_hash(seed, &p);
        FeatureExtractor {
            params: p,
            seed,
            hash,
        }
    }

    /// The pinned default used by all built-in experiments.
    pub fn default_extractor() -> Self {
        Self::new(0x51f7)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn extract_chunk(&self, images: &[&Image]) -> Result<Vec<Vec<f64>>> {
        let x = batch_from_images::<f32>(images);
        let mut g = Graph::<f32>::new();
        let vars = g.insert_params(&self.params, false);
        let x = g.constant(x);
        let x = g.adaptive_avg_pool(x, INPUT_SIDE, INPUT_SIDE);
        let x = g.conv2d(x, vars[0], None, 2, 1);
        let x = g.relu(x);
        let x = g.conv2d(x, vars[1], None, 2, 1);
        let x = g.relu(x);
        let x = g.adaptive_avg_pool(x, POOLED, POOLED);
        let x = g.reshape(x, &[images.len(), C2 * POOLED * POOLED]);
        let x = g.linear(x, vars[2], vars[3]);
        let out = g.value(x);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature".into()));
        }
        Ok((0..images.len())
            .map(|n| (0..FEATURE_DIM).map(|j| out[[n, j]] as f64).collect())
            .collect())
    }
}

impl FeatureEmbedding for FeatureExtractor {
    fn dim(&self) -> usize {
        FEATURE_DIM
    }

    fn hash(&self) -> &str {
        &self.hash
    }

    fn extract(&self, images: &[&Image]) -> Result<Array2<f64>> {
        if images.is_empty() {
            return Err(Error::Validation("no images to embed".into()));
        }
        let mut rows = Vec::with_capacity(images.len());
        // Chunked so memory stays flat on large sets; a chunk breaks at 32
        // images or at a size change (batching needs uniform dimensions).
        // Grouping does not affect values: each image's features depend
        // only on that image.
        let mut start = 0;
        while start < images.len() {
            let dims = (images[start].height(), images[start].width());
            let mut end = start + 1;
            while end < images.len()
                && end - start < 32
                && (images[end].height(), images[end].width()) == dims
            {
                end += 1;
            }
            rows.extend(self.extract_chunk(&images[start..end])?);
            start = end;
        }
        let mut out = Array2::zeros((rows.len(), FEATURE_DIM));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }
}

/// sha256 over the seed, architecture constants and full weight payload.
fn content_hash(seed: u64, params: &ParamSet<f32>) -> String {
    let mut h = Sha256::new();
    h.update(b"feature-extractor-v1|");
    h.update(seed.to_le_bytes());
    h.update((INPUT_SIDE as u64).to_le_bytes());
    for t in params.tensors() {
        h.update(t.name.as_bytes());
        for &d in t.value.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for &v in t.value.iter() {
            h.update(v.to_le_bytes());
        }
    }
    format!("{:x}", h.finalize())
}
