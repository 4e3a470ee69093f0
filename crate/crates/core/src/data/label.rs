//! Contact labels: position, optional force, and the indenter that made them.

use crate::data::geometry::{SensorGeometry, SURFACE_TOLERANCE_MM};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Normal force upper bound, N.
pub const FORCE_Z_MAX_N: f64 = 12.0;
/// Tangential force magnitude bound, N.
pub const FORCE_XY_MAX_N: f64 = 2.0;

/// Rigid probe pressed into the elastomer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Indenter {
    Sphere { radius_mm: f64 },
    SquarePrism { edge_mm: f64 },
    EllipsePrism { semi_axes_mm: [f64; 2] },
}

impl Indenter {
    /// Radius of the footprint circle used for contact masks, mm.
    pub fn characteristic_radius_mm(&self) -> f64 {
        match *self {
            Indenter::Sphere { radius_mm } => radius_mm,
            Indenter::SquarePrism { edge_mm } => edge_mm / 2.0,
            Indenter::EllipsePrism { semi_axes_mm } => semi_axes_mm[0].max(semi_axes_mm[1]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Indenter::Sphere { radius_mm } => radius_mm > 0.0,
            Indenter::SquarePrism { edge_mm } => edge_mm > 0.0,
            Indenter::EllipsePrism { semi_axes_mm } => {
                semi_axes_mm[0] > 0.0 && semi_axes_mm[1] > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("degenerate indenter: {self:?}")))
        }
    }
}

/// Ground-truth annotation of one tactile frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactLabel {
    /// Contact position on the shell surface, mm, sensor frame.
    pub position_mm: [f64; 3],
    /// Contact force `[f_x, f_y, f_z]`, N. Absent for frames without
    /// force instrumentation.
    #[serde(default)]
    pub force_n: Option<[f64; 3]>,
    pub indenter: Indenter,
    /// Indentation depth, mm. Only simulated frames carry it.
    #[serde(default)]
    pub penetration_depth_mm: Option<f64>,
}

impl ContactLabel {
    /// Checks the label against the geometry: the position must sit within
    /// the surface tolerance and forces within their physical ranges.
    pub fn validate(&self, geom: &SensorGeometry) -> Result<()> {
        self.indenter.validate()?;
        let d = geom.surface_distance_mm(self.position_mm);
        if d > SURFACE_TOLERANCE_MM {
            return Err(Error::Validation(format!(
                "label position {:?} is {:.3} mm off the surface (tolerance {} mm)",
                self.position_mm, d, SURFACE_TOLERANCE_MM
            )));
        }
        if let Some([fx, fy, fz]) = self.force_n {
            if !(0.0..=FORCE_Z_MAX_N).contains(&fz) {
                return Err(Error::Validation(format!(
                    "f_z = {fz} N outside [0, {FORCE_Z_MAX_N}]"
                )));
            }
            for (name, f) in [("f_x", fx), ("f_y", fy)] {
                if f.abs() > FORCE_XY_MAX_N {
                    return Err(Error::Validation(format!(
                        "{name} = {f} N outside [-{FORCE_XY_MAX_N}, {FORCE_XY_MAX_N}]"
                    )));
                }
            }
        }
        if let Some(depth) = self.penetration_depth_mm {
            if !(depth >= 0.0) {
                return Err(Error::Validation(format!(
                    "penetration_depth_mm must be >= 0, got {depth}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere3() -> Indenter {
        Indenter::Sphere { radius_mm: 3.0 }
    }

    #[test]
    fn on_surface_label_validates() {
        let g = SensorGeometry::for_image_size(224);
        let label = ContactLabel {
            position_mm: [0.0, 0.0, g.apex_height_mm()],
            force_n: Some([0.5, -0.5, 6.0]),
            indenter: sphere3(),
            penetration_depth_mm: Some(1.0),
        };
        label.validate(&g).unwrap();
    }

    #[test]
    fn off_surface_label_is_rejected() {
        let g = SensorGeometry::for_image_size(224);
        let label = ContactLabel {
            position_mm: [0.0, 0.0, 4.0],
            force_n: None,
            indenter: sphere3(),
            penetration_depth_mm: None,
        };
        assert!(label.validate(&g).is_err());
    }

    #[test]
    fn out_of_range_forces_are_rejected() {
        let g = SensorGeometry::for_image_size(224);
        let mut label = ContactLabel {
            position_mm: [0.0, 0.0, g.apex_height_mm()],
            force_n: Some([0.0, 0.0, 13.0]),
            indenter: sphere3(),
            penetration_depth_mm: None,
        };
        assert!(label.validate(&g).is_err());
        label.force_n = Some([2.5, 0.0, 1.0]);
        assert!(label.validate(&g).is_err());
        label.force_n = Some([0.0, 0.0, -0.1]);
        assert!(label.validate(&g).is_err());
    }

    #[test]
    fn characteristic_radii() {
        assert_eq!(sphere3().characteristic_radius_mm(), 3.0);
        assert_eq!(
            Indenter::SquarePrism { edge_mm: 6.0 }.characteristic_radius_mm(),
            3.0
        );
        assert_eq!(
            Indenter::EllipsePrism {
                semi_axes_mm: [4.0, 2.0]
            }
            .characteristic_radius_mm(),
            4.0
        );
    }
}
