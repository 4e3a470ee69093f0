//! Replay pool of previously generated images for discriminator updates.
//!
//! The CycleGAN convention: while the pool is filling, every fresh fake is
//! stored and also returned; once full, each fresh fake is returned as-is
//! with probability ½, or swapped against a uniformly chosen stored image
//! (the discriminator then sees the older fake). Feeding discriminators
//! from this pool damps oscillation between the two adversaries.

use ndarray::{ArrayD, Axis, IxDyn};
use rand::Rng;

pub struct ReplayBuffer {
    capacity: usize,
    pool: Vec<ArrayD<f32>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            pool: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    /// Passes a fresh `(N, C, H, W)` batch through the pool image by image
    /// and returns the batch the discriminator should see. RNG consumption
    /// (one `f64` per image at capacity, one index draw per swap) is part of
    /// the checkpoint contract — resumed runs replay it exactly.
    pub fn query<R: Rng>(&mut self, rng: &mut R, fresh: &ArrayD<f32>) -> ArrayD<f32> {
        assert!(fresh.ndim() == 4, "expected (N, C, H, W), got {:?}", fresh.shape());
        let n = fresh.shape()[0];
        let mut out = ArrayD::<f32>::zeros(IxDyn(fresh.shape()));
        for i in 0..n {
            let image = fresh.index_axis(Axis(0), i);
            let mut slot = out.index_axis_mut(Axis(0), i);
            if self.pool.len() < self.capacity {
                self.pool.push(image.to_owned());
                slot.assign(&image);
            } else if self.capacity > 0 && rng.gen::<f64>() < 0.5 {
                let k = rng.gen_range(0..self.capacity);
                slot.assign(&self.pool[k]);
                self.pool[k].assign(&image);
            } else {
                slot.assign(&image);
            }
        }
        out
    }

    /// Stored images, in slot order (checkpoint capture).
    pub(crate) fn images(&self) -> &[ArrayD<f32>] {
        &self.pool
    }

    /// Rebuilds a pool captured by [`ReplayBuffer::images`].
    pub(crate) fn restore(capacity: usize, images: Vec<ArrayD<f32>>) -> Self {
        assert!(images.len() <= capacity, "pool exceeds capacity");
        ReplayBuffer {
            capacity,
            pool: images,
        }
    }
}
