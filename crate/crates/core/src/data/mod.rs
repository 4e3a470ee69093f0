//! Data model: sensor geometry, labels, frames, contact masks and dataset
//! persistence for both real and simulated recordings.

pub mod frame;
pub mod geometry;
pub mod label;
pub mod manifest;
pub mod mask;

pub use frame::{Domain, TactileFrame};
pub use geometry::{project_surface_point, SensorGeometry, SURFACE_TOLERANCE_MM};
pub use label::{ContactLabel, Indenter, FORCE_XY_MAX_N, FORCE_Z_MAX_N};
pub use manifest::{
    load_dataset, save_dataset, Dataset, DatasetManifest, DatasetWriter, ManifestEntry,
    SCHEMA_VERSION,
};
pub use mask::{make_contact_mask, ContactMask, DEFAULT_RADIUS_SCALE};

/// Deterministic grid of points covering the shell surface: `n_axial` rings
/// along the cylinder and hemisphere, `n_azimuth` samples around each ring,
/// plus the apex. Used by tests and by the renderer-consistency oracle.
pub fn sample_surface_grid(
    geom: &SensorGeometry,
    n_axial: usize,
    n_azimuth: usize,
) -> Vec<[f64; 3]> {
    let r = geom.shell_radius_mm;
    let h = geom.cylinder_height_mm;
    let mut pts = Vec::new();
    for i in 0..n_axial {
        // t in (0, 1]: walks up the cylinder then over the hemisphere.
        let t = (i + 1) as f64 / n_axial as f64;
        let cyl_span = h;
        let hemi_span = std::f64::consts::FRAC_PI_2 * r;
        let total = cyl_span + hemi_span;
        let s = t * total;
        let (radial, z) = if s <= cyl_span {
            (r, s)
        } else {
            let phi = (s - cyl_span) / r; // polar arc from the equator
            (r * phi.cos(), h + r * phi.sin())
        };
        if radial < 1e-9 {
            pts.push([0.0, 0.0, z]);
            continue;
        }
        for j in 0..n_azimuth {
            let az = 2.0 * std::f64::consts::PI * j as f64 / n_azimuth as f64;
            pts.push([radial * az.cos(), radial * az.sin(), z]);
        }
    }
    pts.push([0.0, 0.0, geom.apex_height_mm()]);
    pts
}
