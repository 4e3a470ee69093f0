//! Dataset persistence: `manifest.json` plus an `images/` directory.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! <dir>/
//!   manifest.json          # schema, geometry, entries
//!   images/
//!     000000_raw.png       # 8-bit lossless rasters
//!     000000_ref.png
//!     ...
//! ```
//!
//! Raw and reference captures are stored; difference images are never
//! serialized and are recomputed on every load.

use crate::data::frame::{Domain, TactileFrame};
use crate::data::geometry::SensorGeometry;
use crate::data::label::ContactLabel;
use crate::error::{Error, Result};
use crate::image::Image;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// One dataset record: image file locations plus the ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Path of the raw capture, relative to the manifest directory.
    pub raw_path: String,
    /// Path of the no-contact reference capture, relative to the manifest directory.
    pub reference_path: String,
    pub domain: Domain,
    pub sensor_id: String,
    pub label: ContactLabel,
}

/// The serialized index of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    /// `(height, width)` shared by every image in the dataset.
    pub image_size: (usize, usize),
    /// Geometry the labels are expressed in; makes the dataset self-validating.
    pub geometry: SensorGeometry,
    pub entries: Vec<ManifestEntry>,
}

/// An on-disk dataset: validated manifest plus its root directory.
/// Images are decoded lazily, one entry at a time.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
}

impl Dataset {
    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    pub fn geometry(&self) -> &SensorGeometry {
        &self.manifest.geometry
    }

    pub fn entry(&self, idx: usize) -> &ManifestEntry {
        &self.manifest.entries[idx]
    }

    /// Decodes one entry, recomputing the difference image.
    pub fn load_item(&self, idx: usize) -> Result<(TactileFrame, ContactLabel)> {
        let entry = &self.manifest.entries[idx];
        let raw = Image::load_png(&self.root.join(&entry.raw_path))?;
        let reference = Image::load_png(&self.root.join(&entry.reference_path))?;
        let frame = TactileFrame::new(raw, reference, entry.domain, entry.sensor_id.clone())?;
        Ok((frame, entry.label.clone()))
    }
}

/// Incrementally writes a dataset directory; images go to disk as they are
/// pushed so arbitrarily large datasets never sit in memory at once.
pub struct DatasetWriter {
    root: PathBuf,
    geometry: SensorGeometry,
    image_size: Option<(usize, usize)>,
    entries: Vec<ManifestEntry>,
}

impl DatasetWriter {
    pub fn create(dir: &Path, geometry: SensorGeometry) -> Result<Self> {
        geometry.validate()?;
        fs::create_dir_all(dir.join("images")).map_err(|e| Error::io(dir, e))?;
        Ok(DatasetWriter {
            root: dir.to_path_buf(),
            geometry,
            image_size: None,
            entries: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, frame: &TactileFrame, label: &ContactLabel) -> Result<()> {
        label.validate(&self.geometry)?;
        let dims = (frame.height(), frame.width());
        match self.image_size {
            None => self.image_size = Some(dims),
            Some(expect) if expect != dims => {
                return Err(Error::Shape(format!(
                    "frame {}x{} does not match dataset {}x{}",
                    dims.0, dims.1, expect.0, expect.1
                )))
            }
            _ => {}
        }
        let id = format!("{:06}", self.entries.len());
        let raw_path = format!("images/{id}_raw.png");
        let reference_path = format!("images/{id}_ref.png");
        frame.raw().save_png(&self.root.join(&raw_path))?;
        frame.reference().save_png(&self.root.join(&reference_path))?;
        self.entries.push(ManifestEntry {
            id,
            raw_path,
            reference_path,
            domain: frame.domain,
            sensor_id: frame.sensor_id.clone(),
            label: label.clone(),
        });
        Ok(())
    }

    /// Writes `manifest.json` and returns its path.
    pub fn finish(self) -> Result<PathBuf> {
        let image_size = self.image_size.ok_or_else(|| {
            Error::Validation("cannot finish an empty dataset".into())
        })?;
        let manifest = DatasetManifest {
            schema_version: SCHEMA_VERSION,
            image_size,
            geometry: self.geometry,
            entries: self.entries,
        };
        let path = self.root.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Saves a fully materialized dataset and returns the manifest path.
pub fn save_dataset(
    items: &[(TactileFrame, ContactLabel)],
    geometry: &SensorGeometry,
    dir: &Path,
) -> Result<PathBuf> {
    let mut writer = DatasetWriter::create(dir, geometry.clone())?;
    for (frame, label) in items {
        writer.push(frame, label)?;
    }
    writer.finish()
}

/// Loads and validates a dataset from its manifest path.
///
/// Every referenced file must exist and decode to the declared dimensions,
/// and every label must satisfy the geometry's surface and force invariants.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| {
        Error::Format(format!(
            "bad manifest {}: {e}",
            manifest_path.display()
        ))
    })?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unknown schema_version {} (supported: {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    manifest.geometry.validate()?;
    let root = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    for entry in &manifest.entries {
        entry
            .label
            .validate(&manifest.geometry)
            .map_err(|e| Error::Validation(format!("entry {}: {e}", entry.id)))?;
        for rel in [&entry.raw_path, &entry.reference_path] {
            let path = root.join(rel);
            let img = Image::load_png(&path)
                .map_err(|e| Error::Format(format!("entry {}: {e}", entry.id)))?;
            let dims = (img.height(), img.width());
            if dims != manifest.image_size {
                return Err(Error::Shape(format!(
                    "entry {}: {} is {}x{}, manifest declares {}x{}",
                    entry.id, rel, dims.0, dims.1, manifest.image_size.0, manifest.image_size.1
                )));
            }
        }
    }
    Ok(Dataset { root, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::label::Indenter;
    use crate::image::Image;
    use rand::{Rng, SeedableRng};

    fn synthetic_items(
        geom: &SensorGeometry,
        n: usize,
        seed: u64,
    ) -> Vec<(TactileFrame, ContactLabel)> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = geom.image_size;
        (0..n)
            .map(|i| {
                let mut raw = Image::from_fn(h, w, |_, _, _| rng.gen::<f32>());
                let mut reference = Image::from_fn(h, w, |_, _, _| rng.gen::<f32>());
                raw.quantize_u8();
                reference.quantize_u8();
                let frame =
                    TactileFrame::new(raw, reference, Domain::Sim, format!("s{}", i % 3)).unwrap();
                let label = ContactLabel {
                    position_mm: [0.0, 0.0, geom.apex_height_mm()],
                    force_n: Some([0.0, 0.0, 3.0]),
                    indenter: Indenter::Sphere { radius_mm: 3.0 },
                    penetration_depth_mm: Some(0.5),
                };
                (frame, label)
            })
            .collect()
    }

    #[test]
    fn save_load_round_trip_preserves_manifest_and_images() {
        let geom = SensorGeometry::for_image_size(32);
        let dir = tempfile::tempdir().unwrap();
        let items = synthetic_items(&geom, 10, 3);
        let manifest_path = save_dataset(&items, &geom, dir.path()).unwrap();
        let ds = load_dataset(&manifest_path).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.manifest().image_size, (32, 32));
        for (i, (frame, label)) in items.iter().enumerate() {
            let (loaded_frame, loaded_label) = ds.load_item(i).unwrap();
            assert_eq!(&loaded_frame, frame);
            assert_eq!(&loaded_label, label);
        }
        // Saving the loaded dataset again yields an equal manifest.
        let dir2 = tempfile::tempdir().unwrap();
        let reloaded: Vec<_> = (0..ds.len()).map(|i| ds.load_item(i).unwrap()).collect();
        let manifest_path2 = save_dataset(&reloaded, &geom, dir2.path()).unwrap();
        let ds2 = load_dataset(&manifest_path2).unwrap();
        assert_eq!(ds.manifest(), ds2.manifest());
    }

    #[test]
    fn missing_image_error_names_the_entry() {
        let geom = SensorGeometry::for_image_size(32);
        let dir = tempfile::tempdir().unwrap();
        let items = synthetic_items(&geom, 3, 4);
        let manifest_path = save_dataset(&items, &geom, dir.path()).unwrap();
        fs::remove_file(dir.path().join("images/000001_raw.png")).unwrap();
        let err = load_dataset(&manifest_path).unwrap_err();
        assert!(err.to_string().contains("000001"), "{err}");
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let geom = SensorGeometry::for_image_size(32);
        let dir = tempfile::tempdir().unwrap();
        let items = synthetic_items(&geom, 1, 5);
        let manifest_path = save_dataset(&items, &geom, dir.path()).unwrap();
        let text = fs::read_to_string(&manifest_path).unwrap();
        let text = text.replace("\"schema_version\": 1", "\"schema_version\": 99");
        fs::write(&manifest_path, text).unwrap();
        assert!(matches!(
            load_dataset(&manifest_path),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn invalid_label_is_rejected_on_load() {
        let geom = SensorGeometry::for_image_size(32);
        let dir = tempfile::tempdir().unwrap();
        let items = synthetic_items(&geom, 1, 6);
        let manifest_path = save_dataset(&items, &geom, dir.path()).unwrap();
        let text = fs::read_to_string(&manifest_path).unwrap();
        // Push f_z out of range.
        let text = text.replace("3.0", "99.0");
        fs::write(&manifest_path, text).unwrap();
        assert!(load_dataset(&manifest_path).is_err());
    }

    #[test]
    fn paper_scale_manifest_loads_and_validates() {
        let geom = SensorGeometry::for_image_size(32);
        let dir = tempfile::tempdir().unwrap();
        let mut writer = DatasetWriter::create(dir.path(), geom.clone()).unwrap();
        let items = synthetic_items(&geom, 6, 7);
        for _ in 0..1000 {
            for (frame, label) in &items {
                writer.push(frame, label).unwrap();
            }
        }
        let manifest_path = writer.finish().unwrap();
        let ds = load_dataset(&manifest_path).unwrap();
        assert_eq!(ds.len(), 6000);
    }
}
