//! Sensor geometry and the surface-to-pixel projection.
//!
//! The sensing shell is a cylinder of radius `shell_radius` standing on the
//! `z = 0` plane, capped by a hemisphere of the same radius centered at
//! `(0, 0, cylinder_height)`. The internal camera sits at the origin looking
//! up the `+z` axis and is modeled as an equidistant fisheye: the polar angle
//! of a surface point maps linearly to radial pixel distance from the optical
//! center, and azimuth is preserved.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Label positions may sit at most this far (mm) off the ideal shell surface.
pub const SURFACE_TOLERANCE_MM: f64 = 0.5;

/// Shell dimensions plus internal-camera projection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorGeometry {
    /// Radius of the cylinder and of the hemispherical cap, mm.
    pub shell_radius_mm: f64,
    /// Height of the cylindrical section, mm. The cap sits on top of it.
    pub cylinder_height_mm: f64,
    /// Equidistant projection constant, pixels per radian of polar angle.
    pub camera_focal_px_per_rad: f64,
    /// Output raster size `(height, width)` in pixels.
    pub image_size: (usize, usize),
    /// Optical center `(u0, v0)` in pixel coordinates (u = column, v = row).
    pub optical_center_px: (f64, f64),
}

impl SensorGeometry {
    /// Geometry for a given square image size, with the focal length chosen
    /// so the full shell (polar angle up to 90 degrees) fits strictly inside
    /// the raster with a small margin.
    pub fn for_image_size(side: usize) -> Self {
        let center = (side as f64 - 1.0) / 2.0;
        let focal = (center - 2.0) / FRAC_PI_2;
        SensorGeometry {
            shell_radius_mm: 10.0,
            cylinder_height_mm: 12.0,
            camera_focal_px_per_rad: focal,
            image_size: (side, side),
            optical_center_px: (center, center),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shell_radius_mm > 0.0) {
            return Err(Error::Validation(format!(
                "shell_radius_mm must be > 0, got {}",
                self.shell_radius_mm
            )));
        }
        if !(self.cylinder_height_mm >= 0.0) {
            return Err(Error::Validation(format!(
                "cylinder_height_mm must be >= 0, got {}",
                self.cylinder_height_mm
            )));
        }
        let (h, w) = self.image_size;
        if h < 32 || w < 32 {
            return Err(Error::Validation(format!(
                "image_size must be at least 32x32, got {h}x{w}"
            )));
        }
        if !(self.camera_focal_px_per_rad > 0.0) {
            return Err(Error::Validation(
                "camera_focal_px_per_rad must be > 0".into(),
            ));
        }
        let (u0, v0) = self.optical_center_px;
        // The farthest-from-axis surface point is the bottom rim at polar
        // angle pi/2; its projection must land strictly inside the raster.
        let max_radius = self.camera_focal_px_per_rad * FRAC_PI_2;
        let margin = u0
            .min(v0)
            .min(w as f64 - 1.0 - u0)
            .min(h as f64 - 1.0 - v0);
        if max_radius >= margin {
            return Err(Error::Validation(format!(
                "projection exceeds image bounds: max radius {max_radius:.2} px, margin {margin:.2} px"
            )));
        }
        Ok(())
    }

    /// Height of the shell apex above the camera, mm.
    pub fn apex_height_mm(&self) -> f64 {
        self.cylinder_height_mm + self.shell_radius_mm
    }

    /// Distance (mm) from `p` to the nearest point of the shell surface
    /// (cylinder side for `z` within the cylinder span, hemisphere above it).
    pub fn surface_distance_mm(&self, p: [f64; 3]) -> f64 {
        let [x, y, z] = p;
        let radial = x.hypot(y);
        let r = self.shell_radius_mm;
        let h = self.cylinder_height_mm;

        let dz_outside = if z < 0.0 {
            -z
        } else if z > h {
            z - h
        } else {
            0.0
        };
        let d_side = (radial - r).hypot(dz_outside);

        let d_hemi = if z >= h {
            ((z - h).hypot(radial) - r).abs()
        } else {
            f64::INFINITY
        };

        d_side.min(d_hemi)
    }

    pub fn is_on_surface(&self, p: [f64; 3]) -> bool {
        self.surface_distance_mm(p) <= SURFACE_TOLERANCE_MM
    }

    /// Approximate local image scale at a surface point, pixels per mm.
    ///
    /// For an equidistant projection a lateral displacement `ds` at camera
    /// distance `||p||` subtends roughly `ds / ||p||` radians.
    pub fn px_per_mm_at(&self, p: [f64; 3]) -> f64 {
        let dist = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt().max(1e-9);
        self.camera_focal_px_per_rad / dist
    }
}

/// Projects a surface point (mm, sensor frame) to pixel coordinates `(u, v)`.
///
/// Fails with a domain error when `p` lies farther than the surface tolerance
/// from the shell.
pub fn project_surface_point(p: [f64; 3], geom: &SensorGeometry) -> Result<(f64, f64)> {
    let d = geom.surface_distance_mm(p);
    if d > SURFACE_TOLERANCE_MM {
        return Err(Error::Domain(format!(
            "point ({:.2}, {:.2}, {:.2}) is {:.2} mm off the sensor surface (tolerance {} mm)",
            p[0], p[1], p[2], d, SURFACE_TOLERANCE_MM
        )));
    }
    let [x, y, z] = p;
    let radial = x.hypot(y);
    let polar = radial.atan2(z);
    let r_px = geom.camera_focal_px_per_rad * polar;
    let (u0, v0) = geom.optical_center_px;
    if radial == 0.0 {
        return Ok((u0, v0));
    }
    let azimuth = y.atan2(x);
    Ok((u0 + r_px * azimuth.cos(), v0 + r_px * azimuth.sin()))
}
