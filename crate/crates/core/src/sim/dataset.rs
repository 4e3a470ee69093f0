//! Dataset generation: uniform surface sampling and batch rendering.

use crate::data::{load_dataset, Dataset, DatasetWriter, Indenter, SensorGeometry};
use crate::error::Result;
use crate::sim::render::{
    mix_seed, render_contact_with_reference, ContactSpec, DEPTH_MAX_MM,
};
use crate::sim::style::{reference_image, SensorProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Contact sampling distribution for dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Indentation depth range, mm.
    pub depth_range_mm: (f64, f64),
    /// Lowest sampled contact height; keeps probes off the open bottom rim.
    pub min_z_mm: f64,
    pub indenter: Indenter,
    /// Shear offsets are drawn uniformly from a disk of this radius, mm.
    pub shear_max_mm: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            seed: 0,
            depth_range_mm: (0.2, DEPTH_MAX_MM),
            min_z_mm: 1.0,
            indenter: Indenter::Sphere { radius_mm: 1.5 },
            shear_max_mm: 1.0,
        }
    }
}

/// Draws one contact uniformly over the sensing surface area (cylinder side
/// above `min_z_mm` plus hemispherical cap; the cap uses the Archimedes
/// z-uniform mapping).
pub fn sample_contact<R: Rng>(
    rng: &mut R,
    geom: &SensorGeometry,
    cfg: &SamplerConfig,
) -> ContactSpec {
    let r = geom.shell_radius_mm;
    let h = geom.cylinder_height_mm;
    let cyl_span = (h - cfg.min_z_mm).max(0.0);
    let area_cyl = std::f64::consts::TAU * r * cyl_span;
    let area_hemi = std::f64::consts::TAU * r * r;

    let phi = std::f64::consts::TAU * rng.gen::<f64>();
    let pick: f64 = rng.gen::<f64>() * (area_cyl + area_hemi);
    let position_mm = if pick < area_cyl {
        let z = cfg.min_z_mm + rng.gen::<f64>() * cyl_span;
        [r * phi.cos(), r * phi.sin(), z]
    } else {
        let zh = rng.gen::<f64>() * r;
        let radial = (r * r - zh * zh).max(0.0).sqrt();
        [radial * phi.cos(), radial * phi.sin(), h + zh]
    };

    let (d0, d1) = cfg.depth_range_mm;
    let depth = d0 + rng.gen::<f64>() * (d1 - d0);
    let shear_r = cfg.shear_max_mm * rng.gen::<f64>().sqrt();
    let shear_phi = std::f64::consts::TAU * rng.gen::<f64>();

    ContactSpec {
        position_mm,
        penetration_depth_mm: depth,
        shear_mm: [shear_r * shear_phi.cos(), shear_r * shear_phi.sin()],
        indenter: cfg.indenter.clone(),
    }
}

/// Renders `n` sampled contacts of one sensor into `out_dir` and returns the
/// validated dataset. Per-sample RNG seeds derive from `(cfg.seed, index)`,
/// so the output is reproducible and insensitive to generation order.
pub fn generate_dataset(
    n: usize,
    profile: &SensorProfile,
    geom: &SensorGeometry,
    cfg: &SamplerConfig,
    out_dir: &Path,
) -> Result<Dataset> {
    let reference = reference_image(&profile.style, geom);
    let mut writer = DatasetWriter::create(out_dir, geom.clone())?;
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, i as u64));
        let spec = sample_contact(&mut rng, geom, cfg);
        let (frame, label) = render_contact_with_reference(&spec, profile, geom, &reference)?;
        writer.push(&frame, &label)?;
    }
    let manifest_path = writer.finish()?;
    load_dataset(&manifest_path)
}
