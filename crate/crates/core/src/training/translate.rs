//! Applies a trained generator to a whole dataset, producing the
//! translated dataset on disk.

use crate::autograd::Graph;
use crate::data::{load_dataset, Dataset, DatasetWriter, Domain, TactileFrame};
use crate::error::{Error, Result};
use crate::image::{compose, Image};
use crate::nets::{batch_from_images, Generator};
use ndarray::{Axis, Ix3};
use std::path::Path;

/// Runs every frame of `ds` through `net` and writes the result to
/// `out_dir`, preserving entry order. Each output frame keeps its source's
/// reference image, sensor id, and label byte for byte; the raw image is
/// rebuilt by composing the translated difference over the reference, and
/// the domain tag flips to the target domain.
///
/// All entries must belong to `source` — translating a mixed or
/// wrong-domain dataset is refused rather than silently producing frames
/// from the wrong distribution.
pub fn translate_dataset(
    ds: &Dataset,
    net: &Generator<f32>,
    source: Domain,
    out_dir: &Path,
    batch_size: usize,
) -> Result<Dataset> {
    if batch_size == 0 {
        return Err(Error::Validation("batch_size must be at least 1".into()));
    }
    if ds.is_empty() {
        return Err(Error::Validation("cannot translate an empty dataset".into()));
    }
    for i in 0..ds.len() {
        if ds.entry(i).domain != source {
            return Err(Error::Validation(format!(
                "entry {i} is labeled {}, expected {source}",
                ds.entry(i).domain
            )));
        }
    }

    let target = source.flipped();
    let mut writer = DatasetWriter::create(out_dir, ds.geometry().clone())?;
    let mut start = 0;
    while start < ds.len() {
        let end = (start + batch_size).min(ds.len());
        let mut frames = Vec::with_capacity(end - start);
        let mut labels = Vec::with_capacity(end - start);
        for i in start..end {
            let (frame, label) = ds.load_item(i)?;
            frames.push(frame);
            labels.push(label);
        }

        let diffs: Vec<&Image> = frames.iter().map(|f| f.difference()).collect();
        let batch = batch_from_images::<f32>(&diffs);
        let mut g = Graph::new();
        let wired = net.insert(&mut g, false);
        let input = g.constant(batch);
        let out = net.forward(&mut g, &wired, input)?;
        let translated = g.value(out).clone();

        for (j, (frame, label)) in frames.iter().zip(&labels).enumerate() {
            let diff = translated
                .index_axis(Axis(0), j)
                .to_owned()
                .into_dimensionality::<Ix3>()
                .expect("generator output is (N, 3, H, W)");
            let raw = compose(&Image::new(diff)?, frame.reference())?;
            let out_frame = TactileFrame::new(
                raw,
                frame.reference().clone(),
                target,
                frame.sensor_id.clone(),
            )?;
            writer.push(&out_frame, label)?;
        }
        start = end;
    }
    let manifest_path = writer.finish()?;
    load_dataset(&manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::GeneratorConfig;
    use crate::sim::{generate_dataset, SamplerConfig, SensorProfile};
    use crate::data::SensorGeometry;
    use std::fs;

    fn tiny_sim_set(dir: &Path, n: usize) -> Dataset {
        let geom = SensorGeometry::for_image_size(32);
        let cfg = SamplerConfig {
            seed: 11,
            ..SamplerConfig::default()
        };
        generate_dataset(n, &SensorProfile::sim(0), &geom, &cfg, dir).unwrap()
    }

    fn tiny_generator() -> Generator<f32> {
        Generator::new(GeneratorConfig::desk(4, 1), 7)
    }

    #[test]
    fn translation_flips_domain_and_keeps_labels() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = tiny_sim_set(&tmp.path().join("src"), 5);
        let net = tiny_generator();
        let out = translate_dataset(&ds, &net, Domain::Sim, &tmp.path().join("out"), 2).unwrap();

        assert_eq!(out.len(), ds.len());
        for i in 0..ds.len() {
            let src = ds.entry(i);
            let dst = out.entry(i);
            assert_eq!(dst.domain, Domain::Real);
            assert_eq!(dst.sensor_id, src.sensor_id);
            assert_eq!(
                serde_json::to_string(&dst.label).unwrap(),
                serde_json::to_string(&src.label).unwrap()
            );
        }
    }

    #[test]
    fn output_reuses_source_reference_images() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = tiny_sim_set(&tmp.path().join("src"), 3);
        let net = tiny_generator();
        let out = translate_dataset(&ds, &net, Domain::Sim, &tmp.path().join("out"), 4).unwrap();
        for i in 0..ds.len() {
            let (src_frame, _) = ds.load_item(i).unwrap();
            let (out_frame, _) = out.load_item(i).unwrap();
            assert_eq!(out_frame.reference(), src_frame.reference());
        }
    }

    #[test]
    fn batching_does_not_change_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = tiny_sim_set(&tmp.path().join("src"), 5);
        let net = tiny_generator();
        let a = translate_dataset(&ds, &net, Domain::Sim, &tmp.path().join("a"), 2).unwrap();
        let b = translate_dataset(&ds, &net, Domain::Sim, &tmp.path().join("b"), 5).unwrap();
        for i in 0..ds.len() {
            let pa = fs::read(a.root().join(&a.entry(i).raw_path)).unwrap();
            let pb = fs::read(b.root().join(&b.entry(i).raw_path)).unwrap();
            assert_eq!(pa, pb, "raw image {i} differs across batch sizes");
        }
    }

    #[test]
    fn wrong_source_domain_is_refused() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = tiny_sim_set(&tmp.path().join("src"), 2);
        let net = tiny_generator();
        let err = translate_dataset(&ds, &net, Domain::Real, &tmp.path().join("out"), 2);
        assert!(err.is_err());
    }

    #[test]
    fn zero_batch_size_is_refused() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = tiny_sim_set(&tmp.path().join("src"), 2);
        let net = tiny_generator();
        assert!(translate_dataset(&ds, &net, Domain::Sim, &tmp.path().join("out"), 0).is_err());
    }
}
