//! In-memory image representation and the difference/compose pipeline.
//!
//! All frame images are 3-channel, stored channel-major `(3, H, W)` in `f32`.
//! Raw and reference captures live in `[0, 1]`; difference images are signed
//! and live in `[-1, 1]`. Persisted rasters are 8-bit PNG, so images that
//! round-trip through disk are quantized to the `k/255` grid. Difference
//! images are never written to disk; they are recomputed from raw minus
//! reference on load.

use crate::error::{Error, Result};
use ndarray::Array3;
use std::path::Path;

/// A 3-channel image, `(3, H, W)`, `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Array3<f32>,
}

impl Image {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        let (c, _, _) = data.dim();
        if c != 3 {
            return Err(Error::Shape(format!("expected 3 channels, got {c}")));
        }
        Ok(Image { data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Image {
            data: Array3::zeros((3, height, width)),
        }
    }

    /// Builds an image from a per-pixel closure `(channel, row, col) -> value`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        Image {
            data: Array3::from_shape_fn((3, height, width), |(c, y, x)| f(c, y, x)),
        }
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f32> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.data.dim() == other.data.dim()
    }

    /// Snaps every value onto the 8-bit grid `round(x * 255) / 255`, clamping
    /// to `[0, 1]` first. Applying this before saving makes PNG round trips
    /// lossless.
    pub fn quantize_u8(&mut self) {
        self.data
            .mapv_inplace(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, &v| m.max(v.abs()))
    }

    pub fn mean_abs(&self) -> f64 {
        let n = self.data.len() as f64;
        self.data.iter().map(|&v| v.abs() as f64).sum::<f64>() / n
    }

    /// Encodes as 8-bit RGB PNG. Values are clamped to `[0, 1]`.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let (_, h, w) = self.data.dim();
        let mut buf = image::RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = [
                    to_u8(self.data[[0, y, x]]),
                    to_u8(self.data[[1, y, x]]),
                    to_u8(self.data[[2, y, x]]),
                ];
                buf.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        buf.save(path)
            .map_err(|e| Error::Format(format!("failed to encode {}: {e}", path.display())))
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("failed to decode {}: {e}", path.display())))?
            .into_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = Array3::from_shape_fn((3, h, w), |(c, y, x)| {
            img.get_pixel(x as u32, y as u32).0[c] as f32 / 255.0
        });
        Ok(Image { data })
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Returns `raw - reference` element-wise. Both inputs must share dimensions
/// and hold values in `[0, 1]`; the result lives in `[-1, 1]`.
pub fn make_difference(raw: &Image, reference: &Image) -> Result<Image> {
    if !raw.same_dims(reference) {
        return Err(Error::Shape(format!(
            "raw {}x{} vs reference {}x{}",
            raw.height(),
            raw.width(),
            reference.height(),
            reference.width()
        )));
    }
    Ok(Image {
        data: raw.data() - reference.data(),
    })
}

/// Returns `clamp(reference + difference, 0, 1)`.
///
/// This is the reintegration step: a generated difference image can be laid
/// over a new sensor's reference image to synthesize a full capture for a
/// sensor that was never trained on.
pub fn compose(difference: &Image, reference: &Image) -> Result<Image> {
    if !difference.same_dims(reference) {
        return Err(Error::Shape(format!(
            "difference {}x{} vs reference {}x{}",
            difference.height(),
            difference.width(),
            reference.height(),
            reference.width()
        )));
    }
    let mut data = reference.data() + difference.data();
    data.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Ok(Image { data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn difference_of_identical_images_is_zero() {
        let raw = Image::from_fn(8, 8, |c, y, x| (c + y + x) as f32 / 20.0);
        let d = make_difference(&raw, &raw).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn difference_of_constants() {
        let raw = Image::from_fn(4, 4, |_, _, _| 1.0);
        let reference = Image::from_fn(4, 4, |_, _, _| 0.25);
        let d = make_difference(&raw, &reference).unwrap();
        for &v in d.data().iter() {
            assert_eq!(v, 0.75);
        }
    }

    #[test]
    fn difference_matches_scalar_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let raw = Image::from_fn(6, 5, |_, _, _| rng.gen::<f32>());
        let reference = Image::from_fn(6, 5, |_, _, _| rng.gen::<f32>());
        let d = make_difference(&raw, &reference).unwrap();
        for c in 0..3 {
            for y in 0..6 {
                for x in 0..5 {
                    let expect = raw.data()[[c, y, x]] - reference.data()[[c, y, x]];
                    assert_eq!(d.data()[[c, y, x]], expect);
                }
            }
        }
    }

    #[test]
    fn compose_inverts_difference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let raw = Image::from_fn(6, 6, |_, _, _| rng.gen::<f32>());
        let reference = Image::from_fn(6, 6, |_, _, _| rng.gen::<f32>());
        let d = make_difference(&raw, &reference).unwrap();
        let back = compose(&d, &reference).unwrap();
        for (a, b) in back.data().iter().zip(raw.data().iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn compose_zero_difference_returns_reference() {
        let reference = Image::from_fn(4, 4, |c, _, _| 0.1 * (c + 1) as f32);
        let zero = Image::zeros(4, 4);
        let out = compose(&zero, &reference).unwrap();
        assert_eq!(out, reference);
    }

    #[test]
    fn compose_clamps_at_one() {
        let reference = Image::from_fn(4, 4, |_, _, _| 0.9);
        let diff = Image::from_fn(4, 4, |_, _, _| 0.3);
        let out = compose(&diff, &reference).unwrap();
        for &v in out.data().iter() {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let a = Image::zeros(4, 4);
        let b = Image::zeros(4, 5);
        assert!(matches!(make_difference(&a, &b), Err(Error::Shape(_))));
        assert!(matches!(compose(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn png_round_trip_is_lossless_after_quantization() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut img = Image::from_fn(10, 12, |_, _, _| rng.gen::<f32>());
        img.quantize_u8();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        img.save_png(&path).unwrap();
        let loaded = Image::load_png(&path).unwrap();
        assert_eq!(img, loaded);
    }
}
