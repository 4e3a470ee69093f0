//! In-memory frame pools and deterministic batch index streams.
//!
//! Datasets are decoded once up front (desk-scale sets fit comfortably in
//! memory) so the training loops touch no I/O on the hot path. Reference
//! images repeat across a sensor's frames and are shared, not duplicated.

use crate::data::{make_contact_mask, ContactMask, Dataset, SensorGeometry, DEFAULT_RADIUS_SCALE};
use crate::error::{Error, Result};
use crate::losses::mask_batch;
use ndarray::{Array3, ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::Arc;

/// One decoded sample: images as `(3, H, W)` float arrays plus its labels.
pub(crate) struct LoadedFrame {
    pub reference: Arc<Array3<f32>>,
    pub difference: Array3<f32>,
    pub mask: Option<ContactMask>,
    pub position_mm: [f64; 3],
    pub force_n: Option<[f64; 3]>,
}

pub(crate) struct LoadedDataset {
    pub frames: Vec<LoadedFrame>,
    pub geometry: SensorGeometry,
}

impl LoadedDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }
}

/// Decodes every frame of `ds`; `with_masks` additionally rasterizes the
/// per-frame contact masks (needed only when the region-consistency loss is
/// active, and rejected early here if any contact is degenerate).
pub(crate) fn load_frames(ds: &Dataset, with_masks: bool) -> Result<LoadedDataset> {
    let geometry = ds.geometry().clone();
    let mut references: HashMap<String, Arc<Array3<f32>>> = HashMap::new();
    let mut frames = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let (frame, label) = ds.load_item(i)?;
        let reference = match references.get(&ds.entry(i).reference_path) {
            Some(shared) => Arc::clone(shared),
            None => {
                let shared = Arc::new(frame.reference().data().clone());
                references.insert(ds.entry(i).reference_path.clone(), Arc::clone(&shared));
                shared
            }
        };
        let mask = with_masks
            .then(|| make_contact_mask(&label, &geometry, DEFAULT_RADIUS_SCALE))
            .transpose()?;
        frames.push(LoadedFrame {
            reference,
            difference: frame.difference().data().clone(),
            mask,
            position_mm: label.position_mm,
            force_n: label.force_n,
        });
    }
    Ok(LoadedDataset { frames, geometry })
}

/// Pools several loaded datasets; geometries must agree (labels would
/// otherwise live in different coordinate frames).
pub(crate) fn pool_frames(sets: Vec<LoadedDataset>) -> Result<LoadedDataset> {
    let mut iter = sets.into_iter();
    let mut pooled = iter
        .next()
        .ok_or_else(|| Error::Validation("no datasets given".into()))?;
    for set in iter {
        if set.geometry != pooled.geometry {
            return Err(Error::Validation(
                "cannot pool datasets with different sensor geometries".into(),
            ));
        }
        pooled.frames.extend(set.frames);
    }
    Ok(pooled)
}

fn stack_images<'a>(images: impl Iterator<Item = &'a Array3<f32>> + Clone) -> ArrayD<f32> {
    let count = images.clone().count();
    assert!(count > 0, "empty batch");
    let (c, h, w) = images.clone().next().unwrap().dim();
    let mut out = ArrayD::<f32>::zeros(IxDyn(&[count, c, h, w]));
    for (i, img) in images.enumerate() {
        assert_eq!(img.dim(), (c, h, w), "image {i} size differs within batch");
        out.index_axis_mut(ndarray::Axis(0), i).assign(img);
    }
    out
}

/// `(N, 3, H, W)` batch of the selected difference images.
pub(crate) fn batch_differences(set: &LoadedDataset, idx: &[usize]) -> ArrayD<f32> {
    stack_images(idx.iter().map(|&i| &set.frames[i].difference))
}

/// `(N, 3, H, W)` batch of the selected reference images.
pub(crate) fn batch_references(set: &LoadedDataset, idx: &[usize]) -> ArrayD<f32> {
    stack_images(idx.iter().map(|&i| set.frames[i].reference.as_ref()))
}

/// `(N, 3, H, W)` channel-expanded binary contact masks.
pub(crate) fn batch_masks(set: &LoadedDataset, idx: &[usize]) -> ArrayD<f32> {
    let masks: Vec<&ContactMask> = idx
        .iter()
        .map(|&i| {
            set.frames[i]
                .mask
                .as_ref()
                .expect("masks were not loaded for this dataset")
        })
        .collect();
    mask_batch(&masks)
}

/// `(N, 3)` regression targets divided componentwise by `scale`.
pub(crate) fn batch_targets(
    set: &LoadedDataset,
    idx: &[usize],
    scale: [f64; 3],
    select: impl Fn(&LoadedFrame) -> [f64; 3],
) -> ArrayD<f32> {
    let mut out = ArrayD::<f32>::zeros(IxDyn(&[idx.len(), 3]));
    for (row, &i) in idx.iter().enumerate() {
        let t = select(&set.frames[i]);
        for k in 0..3 {
            out[[row, k]] = (t[k] / scale[k]) as f32;
        }
    }
    out
}

/// Deterministic shuffled index stream over `0..n`, reshuffling at every
/// epoch boundary. The full state (order, cursor, RNG position) can be
/// captured and restored bit-exactly for checkpointing.
pub(crate) struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    pub fn new(n: usize, seed: u64) -> Self {
        assert!(n > 0, "empty index stream");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        BatchStream { order, cursor: 0, rng }
    }

    fn reshuffle_if_exhausted(&mut self) {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
    }

    /// Up to `k` indices, stopping at the epoch boundary (the final batch of
    /// an epoch may be short). Drives the epoch-defining dataset.
    pub fn take_up_to(&mut self, k: usize) -> Vec<usize> {
        self.reshuffle_if_exhausted();
        let end = (self.cursor + k).min(self.order.len());
        let out = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        out
    }

    /// Exactly `k` indices, wrapping across epoch boundaries. Drives the
    /// unpaired companion dataset, which owes nothing to the other's epochs.
    pub fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            self.reshuffle_if_exhausted();
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    pub fn state(&self) -> (u128, Vec<usize>, usize) {
        (self.rng.get_word_pos(), self.order.clone(), self.cursor)
    }

    pub fn restore(&mut self, word_pos: u128, order: Vec<usize>, cursor: usize) -> Result<()> {
        if order.len() != self.order.len() || cursor > order.len() {
            return Err(Error::Format("batch stream state does not fit".into()));
        }
        self.rng.set_word_pos(word_pos);
        self.order = order;
        self.cursor = cursor;
        Ok(())
    }
}
