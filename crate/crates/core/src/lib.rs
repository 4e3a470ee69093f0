//! Bidirectional sim-to-real / real-to-sim domain adaptation for optical
//! tactile sensor images.
//!
//! The crate covers the full pipeline:
//!
//! 1. **`data`** — frames, difference images, contact labels and masks,
//!    dataset persistence.
//! 2. **`sim`** — a procedural two-domain renderer that generates labeled
//!    tactile difference images without hardware or a physics engine.
//! 3. **`autograd`** — a small reverse-mode tensor engine (f32/f64) the
//!    networks are built on; single-threaded and bitwise deterministic.
//! 4. **`nets`** — translation generators, patch discriminators, and the
//!    residual contact position/force estimators.
//! 5. **`losses`** — adversarial, cycle, spatial contact consistency and
//!    pixel-wise contact region consistency terms, and their weighted total.
//! 6. **`training`** — estimator pretraining, adversarial training with a
//!    replay buffer, checkpointing and fine-tuning.
//! 7. **`eval`** — position/force RMSE, FID, KID and the experiment drivers
//!    that assemble reports.

pub mod autograd;
pub mod data;
pub mod error;
pub mod eval;
pub mod image;
pub mod losses;
pub mod nets;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
