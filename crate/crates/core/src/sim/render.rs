//! Analytic contact renderer and the synthetic force model.
//!
//! A contact is composited as a convex blend between the reference image and
//! a per-style "contact color": `raw = ref*(1-m) + color*m` with
//! `m = w(depth) * profile(q)`, where `q` is the normalized distance to the
//! contact footprint. The blend keeps every pixel inside `[0, 1]` by
//! construction, so intensity grows monotonically with depth and never
//! saturates. A directional specular ring and clamped Gaussian sensor noise
//! are added on top for the pseudo-real styles.

use crate::data::{
    project_surface_point, ContactLabel, Indenter, SensorGeometry, TactileFrame,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::sim::style::{reference_image, BlobProfile, SensorProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Elastomer indentation limit, mm.
pub const DEPTH_MAX_MM: f64 = 2.0;
/// Normal stiffness: f_z = K_NORMAL * depth, chosen so the deepest press
/// produces exactly the top of the sensor's force range (12 N at 2 mm).
pub const K_NORMAL_N_PER_MM: f64 = 6.0;
/// Tangential gain: f_xy = K_TANGENT * shear * (depth / DEPTH_MAX).
pub const K_TANGENT_N_PER_MM: f64 = 2.0;

/// One contact to render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSpec {
    /// Contact point on the shell surface, mm, sensor frame.
    pub position_mm: [f64; 3],
    /// Indentation depth, mm, in `(0, DEPTH_MAX_MM]`.
    pub penetration_depth_mm: f64,
    /// Tangential probe offset driving the shear force components, mm.
    #[serde(default)]
    pub shear_mm: [f64; 2],
    pub indenter: Indenter,
}

impl ContactSpec {
    pub fn validate(&self, geom: &SensorGeometry) -> Result<()> {
        self.indenter.validate()?;
        if !(self.penetration_depth_mm > 0.0 && self.penetration_depth_mm <= DEPTH_MAX_MM) {
            return Err(Error::Domain(format!(
                "penetration depth {} mm outside (0, {DEPTH_MAX_MM}]",
                self.penetration_depth_mm
            )));
        }
        if !geom.is_on_surface(self.position_mm) {
            return Err(Error::Domain(format!(
                "contact position {:?} is not on the sensor surface",
                self.position_mm
            )));
        }
        if self.shear_mm.iter().any(|s| !s.is_finite()) {
            return Err(Error::Domain("non-finite shear offset".into()));
        }
        Ok(())
    }
}

/// Synthetic ground-truth force: normal component linear in deformation,
/// tangential components proportional to the shear offset and clipped to the
/// sensor's tangential range.
pub fn force_model(spec: &ContactSpec) -> [f64; 3] {
    let depth = spec.penetration_depth_mm;
    let fz = K_NORMAL_N_PER_MM * depth;
    let scale = depth / DEPTH_MAX_MM;
    let ft = |s: f64| (K_TANGENT_N_PER_MM * s * scale).clamp(-2.0, 2.0);
    [ft(spec.shear_mm[0]), ft(spec.shear_mm[1]), fz]
}

/// splitmix64-style finalizer used to derive independent seeds.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the spec's defining bytes, so each rendered contact gets its
/// own deterministic noise stream.
fn spec_fingerprint(spec: &ContactSpec) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    let mut eat = |v: f64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for &v in &spec.position_mm {
        eat(v);
    }
    eat(spec.penetration_depth_mm);
    eat(spec.shear_mm[0]);
    eat(spec.shear_mm[1]);
    match spec.indenter {
        Indenter::Sphere { radius_mm } => {
            eat(1.0);
            eat(radius_mm);
        }
        Indenter::SquarePrism { edge_mm } => {
            eat(2.0);
            eat(edge_mm);
        }
        Indenter::EllipsePrism { semi_axes_mm } => {
            eat(3.0);
            eat(semi_axes_mm[0]);
            eat(semi_axes_mm[1]);
        }
    }
    h
}

/// Blend weight as a function of depth, in `[0, 1]`.
fn depth_weight(depth: f64) -> f64 {
    (depth / DEPTH_MAX_MM).powf(0.75)
}

/// Footprint radius in mm. Spheres follow the geometric contact circle
/// capped at the indenter radius; prisms have a depth-independent section.
fn footprint_radius_mm(indenter: &Indenter, depth: f64) -> f64 {
    let char_r = indenter.characteristic_radius_mm();
    match indenter {
        Indenter::Sphere { radius_mm } => {
            let a = (depth * (2.0 * radius_mm - depth).max(0.0)).sqrt();
            a.min(*radius_mm)
        }
        _ => char_r,
    }
}

/// Normalized footprint distance of a pixel offset `(dx, dy)` in px.
fn footprint_q(indenter: &Indenter, dx: f64, dy: f64, a_px: f64, px_per_mm: f64) -> f64 {
    match indenter {
        Indenter::Sphere { .. } | Indenter::SquarePrism { .. } => {
            let d = match indenter {
                Indenter::SquarePrism { .. } => dx.abs().max(dy.abs()),
                _ => dx.hypot(dy),
            };
            d / a_px
        }
        Indenter::EllipsePrism { semi_axes_mm } => {
            let ax = semi_axes_mm[0] * px_per_mm;
            let ay = semi_axes_mm[1] * px_per_mm;
            ((dx / ax) * (dx / ax) + (dy / ay) * (dy / ay)).sqrt()
        }
    }
}

/// Profile value at normalized distance `q`; exactly zero for `q >= 3`.
fn profile_value(profile: BlobProfile, q: f64) -> f64 {
    match profile {
        BlobProfile::Gaussian => {
            let tail = (-36.0f64).exp();
            (((-4.0 * q * q).exp() - tail) / (1.0 - tail)).max(0.0)
        }
        BlobProfile::Hertzian => (1.0 - q * q).max(0.0).sqrt(),
    }
}

/// Renders one contact. Deterministic: the same `(spec, profile, geom)`
/// always produces bit-identical frames.
pub fn render_contact(
    spec: &ContactSpec,
    profile: &SensorProfile,
    geom: &SensorGeometry,
) -> Result<(TactileFrame, ContactLabel)> {
    let reference = reference_image(&profile.style, geom);
    render_contact_with_reference(spec, profile, geom, &reference)
}

/// Same as [`render_contact`] but reuses a precomputed reference image
/// (must come from [`reference_image`] for this profile and geometry).
pub fn render_contact_with_reference(
    spec: &ContactSpec,
    profile: &SensorProfile,
    geom: &SensorGeometry,
    reference: &Image,
) -> Result<(TactileFrame, ContactLabel)> {
    let style = &profile.style;
    style.validate()?;
    spec.validate(geom)?;

    let (uc, vc) = project_surface_point(spec.position_mm, geom)?;
    let px_per_mm = geom.px_per_mm_at(spec.position_mm);
    let a_px = footprint_radius_mm(&spec.indenter, spec.penetration_depth_mm) * px_per_mm;
    let w_depth = depth_weight(spec.penetration_depth_mm);

    // Per-style contact color the blob blends toward (dark, tinted).
    let contact_color: [f32; 3] = std::array::from_fn(|c| {
        (0.5 - 0.42 * style.shading_gain * style.color_tint[c]).clamp(0.02, 0.48) as f32
    });
    // Directional specular ring peaking at half the footprint radius.
    let highlight_on = style.highlight_sharpness > 0.0;
    let phi0 = (style.seed % 360) as f64 * std::f64::consts::PI / 180.0;
    let highlight_rgb = [1.0f64, 0.95, 0.85];

    let (h, w) = geom.image_size;
    let mut raw = reference.clone();
    {
        let data = raw.data_mut();
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - uc;
                let dy = y as f64 - vc;
                let q = footprint_q(&spec.indenter, dx, dy, a_px, px_per_mm);
                if q >= 3.0 {
                    continue;
                }
                let m = (w_depth * profile_value(style.blob_profile, q)) as f32;
                if m <= 0.0 {
                    continue;
                }
                let hl = if highlight_on && q < 1.0 {
                    let ring = (4.0 * q * (1.0 - q)).max(0.0).powf(style.highlight_sharpness);
                    let dir = 0.5 + 0.5 * (dy.atan2(dx) - phi0).cos();
                    0.14 * w_depth * ring * dir
                } else {
                    0.0
                };
                for c in 0..3 {
                    let base = data[[c, y, x]];
                    let blended = base * (1.0 - m) + contact_color[c] * m;
                    data[[c, y, x]] = blended + (hl * highlight_rgb[c]) as f32;
                }
            }
        }

        // Sensor noise, clamped so that after quantization no pixel outside
        // the footprint can exceed 3 sigma (locality invariant).
        if style.noise_std > 0.0 {
            let clamp = (3.0 * style.noise_std - 1.0 / 255.0).max(0.0) as f32;
            let normal = Normal::new(0.0f64, style.noise_std).expect("validated noise_std");
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(style.seed, spec_fingerprint(spec)));
            for v in data.iter_mut() {
                let n = (normal.sample(&mut rng) as f32).clamp(-clamp, clamp);
                *v += n;
            }
        }
        for v in data.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    raw.quantize_u8();

    let frame = TactileFrame::new(
        raw,
        reference.clone(),
        profile.domain,
        profile.sensor_id.clone(),
    )?;
    let label = ContactLabel {
        position_mm: spec.position_mm,
        force_n: Some(force_model(spec)),
        indenter: spec.indenter.clone(),
        penetration_depth_mm: Some(spec.penetration_depth_mm),
    };
    label.validate(geom)?;
    Ok((frame, label))
}
