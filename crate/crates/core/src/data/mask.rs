//! Binary contact-region masks: zeros inside the contact disk, ones outside.

use crate::data::geometry::{project_surface_point, SensorGeometry};
use crate::data::label::ContactLabel;
use crate::error::{Error, Result};
use ndarray::Array2;

/// Default margin applied to the indenter footprint when building masks.
/// The disk is drawn slightly larger than the footprint so shading spread
/// around the contact stays inside the masked-out region.
pub const DEFAULT_RADIUS_SCALE: f64 = 1.5;

/// Binary image with a zeroed disk over the contact region.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactMask {
    mask: Array2<f32>,
    pub contact_center_px: (f64, f64),
    pub contact_radius_px: f64,
}

impl ContactMask {
    /// The mask plane; every value is exactly 0.0 or 1.0.
    pub fn mask(&self) -> &Array2<f32> {
        &self.mask
    }

    pub fn zero_pixel_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v == 0.0).count()
    }

    pub fn ones_fraction(&self) -> f64 {
        let ones = self.mask.iter().filter(|&&v| v == 1.0).count();
        ones as f64 / self.mask.len() as f64
    }
}

/// Builds the contact mask for a labeled contact.
///
/// The disk is centered at the projected contact position with radius
/// `radius_scale * indenter characteristic radius * local px/mm scale`.
/// A disk that covers no pixel or every pixel is rejected as degenerate.
pub fn make_contact_mask(
    label: &ContactLabel,
    geom: &SensorGeometry,
    radius_scale: f64,
) -> Result<ContactMask> {
    if !(radius_scale > 0.0) {
        return Err(Error::Validation(format!(
            "radius_scale must be > 0, got {radius_scale}"
        )));
    }
    label.validate(geom)?;
    let (cu, cv) = project_surface_point(label.position_mm, geom)?;
    let radius_px =
        radius_scale * label.indenter.characteristic_radius_mm() * geom.px_per_mm_at(label.position_mm);

    let (h, w) = geom.image_size;
    let r2 = radius_px * radius_px;
    let mut zeros = 0usize;
    let mask = Array2::from_shape_fn((h, w), |(v, u)| {
        let du = u as f64 - cu;
        let dv = v as f64 - cv;
        if du * du + dv * dv <= r2 {
            zeros += 1;
            0.0
        } else {
            1.0
        }
    });
    if zeros == 0 {
        return Err(Error::Domain(format!(
            "contact disk (radius {radius_px:.2} px) covers no pixel"
        )));
    }
    if zeros == h * w {
        return Err(Error::Domain(
            "contact disk covers the entire image".into(),
        ));
    }
    Ok(ContactMask {
        mask,
        contact_center_px: (cu, cv),
        contact_radius_px: radius_px,
    })
}
