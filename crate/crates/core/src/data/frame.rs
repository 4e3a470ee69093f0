//! A single tactile capture: raw image, reference image, derived difference.

use crate::error::{Error, Result};
use crate::image::{make_difference, Image};
use serde::{Deserialize, Serialize};

/// Which image distribution a frame belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Real,
    Sim,
}

impl Domain {
    pub fn flipped(self) -> Domain {
        match self {
            Domain::Real => Domain::Sim,
            Domain::Sim => Domain::Real,
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Domain::Real => write!(f, "real"),
            Domain::Sim => write!(f, "sim"),
        }
    }
}

/// One capture. The difference image is always recomputed from
/// `raw - reference` at construction time and never trusted from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileFrame {
    raw: Image,
    reference: Image,
    difference: Image,
    pub domain: Domain,
    pub sensor_id: String,
}

impl TactileFrame {
    pub fn new(raw: Image, reference: Image, domain: Domain, sensor_id: String) -> Result<Self> {
        if !raw.same_dims(&reference) {
            return Err(Error::Shape(format!(
                "raw {}x{} vs reference {}x{}",
                raw.height(),
                raw.width(),
                reference.height(),
                reference.width()
            )));
        }
        let difference = make_difference(&raw, &reference)?;
        Ok(TactileFrame {
            raw,
            reference,
            difference,
            domain,
            sensor_id,
        })
    }

    pub fn raw(&self) -> &Image {
        &self.raw
    }

    pub fn reference(&self) -> &Image {
        &self.reference
    }

    pub fn difference(&self) -> &Image {
        &self.difference
    }

    pub fn height(&self) -> usize {
        self.raw.height()
    }

    pub fn width(&self) -> usize {
        self.raw.width()
    }
}
