//! Procedural tactile-image simulator.
//!
//! Stands in for a physics-based renderer: contacts are composited
//! analytically onto per-sensor reference images (see [`render`]), with two
//! parameterized style families (see [`style`]) realizing the sim/real
//! domain gap the adaptation pipeline is trained to close. Every sample is
//! fully labeled with position, synthetic force, and penetration depth.

mod dataset;
mod render;
mod style;

pub use dataset::{generate_dataset, sample_contact, SamplerConfig};
pub(crate) use render::mix_seed;
pub use render::{
    force_model, render_contact, render_contact_with_reference, ContactSpec, DEPTH_MAX_MM,
    K_NORMAL_N_PER_MM, K_TANGENT_N_PER_MM,
};
pub use style::{
    reference_image, BlobProfile, RenderStyle, SensorProfile, MAX_SENSOR_VARIANTS,
    SENSORS_PER_DOMAIN,
};
