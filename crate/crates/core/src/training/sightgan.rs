//! The adversarial training loop for the bidirectional translation model.
//!
//! Each step performs the alternating update: both discriminators first
//! (real batches against replay-pooled fakes), then both generators on the
//! combined objective — adversarial terms, cycle consistency, and (when
//! their weights are nonzero) the spatial and region consistency terms
//! through the frozen estimator.
//!
//! The per-step [`LossReport`] history records the quantities the generator
//! update actually minimizes: `gan_g`/`gan_f` are the generator-side
//! adversarial terms, `spatial`/`mask` are unweighted component values, and
//! `total` is the optimized scalar.
//!
//! Graph assembly follows a fixed canonical order (parameter leaves, input
//! constants, translations, adversarial scores, then loss terms). The
//! reference CycleGAN trainer follows the same order independently, which
//! is what makes the two bitwise comparable when the extra losses are
//! disabled.

use super::batches::{
    batch_differences, batch_masks, batch_references, load_frames, BatchStream, LoadedDataset,
};
use super::replay::ReplayBuffer;
use super::state::{
    load_state, save_state, AdamSnapshot, PoolSnapshot, StreamSnapshot, TrainerState,
};
use super::{lr_scale, seed_tags, TrainConfig};
use crate::autograd::{Adam, AdamConfig, Graph, Scalar};
use crate::data::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::losses::{
    cycle_loss, discriminator_loss, extended_mask_terms, generator_adv_loss,
    mask_consistency_loss, spatial_consistency_loss, GanMode, LossReport, LossWeights,
    SpatialImages,
};
use crate::nets::{
    load_weights, save_weights, Discriminator, Estimator, Generator,
};
use crate::sim::mix_seed;
use ndarray::ArrayD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Checkpoint subdirectory of a run directory.
pub const CHECKPOINT_DIR: &str = "ckpt";
/// Per-step loss log in a run directory, one JSON report per line.
pub const HISTORY_FILE: &str = "history.jsonl";

/// The four trained networks of the translation pipeline. `g` maps
/// sim → real, `f` maps real → sim.
pub struct TranslationModel {
    pub g: Generator<f32>,
    pub f: Generator<f32>,
    pub d_s: Discriminator<f32>,
    pub d_r: Discriminator<f32>,
}

/// Trains a fresh translation model on two unpaired datasets. `estimator`
/// is the pretrained f_θ; it is never mutated, and is consulted only while
/// `weights.lambda_spatial > 0`. Checkpoints land under
/// `run_dir/ckpt/<step>/`, the loss log at `run_dir/history.jsonl`.
///
/// A non-finite loss aborts with [`Error::Numeric`]; the checkpoints
/// written so far (including the initial step-0 one) stay on disk.
pub fn train_sightgan(
    sim: &Dataset,
    real: &Dataset,
    estimator: &Estimator<f32>,
    config: &TrainConfig,
    run_dir: &Path,
) -> Result<(TranslationModel, Vec<LossReport>)> {
    let trainer = GanTrainer::new(sim, real, estimator, config, run_dir)?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir.to_path_buf(), e))?;
    let history_path = run_dir.join(HISTORY_FILE);
    fs::write(&history_path, "").map_err(|e| Error::io(history_path, e))?;
    trainer.write_checkpoint()?;
    trainer.run()
}

/// Continues an interrupted run from the checkpoint at `step`, reproducing
/// exactly what the uninterrupted run would have done. The loss log is
/// truncated back to `step` lines and extended from there.
pub fn resume_sightgan(
    sim: &Dataset,
    real: &Dataset,
    estimator: &Estimator<f32>,
    config: &TrainConfig,
    run_dir: &Path,
    step: u64,
) -> Result<(TranslationModel, Vec<LossReport>)> {
    let mut trainer = GanTrainer::new(sim, real, estimator, config, run_dir)?;
    if step > trainer.total_steps {
        return Err(Error::Validation(format!(
            "cannot resume at step {step} of a {}-step schedule",
            trainer.total_steps
        )));
    }
    trainer.load_checkpoint(step)?;

    let history_path = run_dir.join(HISTORY_FILE);
    let text =
        fs::read_to_string(&history_path).map_err(|e| Error::io(history_path.clone(), e))?;
    let mut kept_lines = Vec::with_capacity(step as usize);
    let mut history = Vec::with_capacity(step as usize);
    for line in text.lines().take(step as usize) {
        history.push(
            serde_json::from_str::<LossReport>(line)
                .map_err(|e| Error::Format(format!("loss history line: {e}")))?,
        );
        kept_lines.push(line);
    }
    if history.len() < step as usize {
        return Err(Error::Format(format!(
            "loss history holds {} steps, cannot resume at {step}",
            history.len()
        )));
    }
    let mut truncated = kept_lines.join("\n");
    if !truncated.is_empty() {
        truncated.push('\n');
    }
    fs::write(&history_path, truncated).map_err(|e| Error::io(history_path, e))?;

    trainer.history = history;
    trainer.run()
}

struct GanTrainer<'a> {
    config: TrainConfig,
    run_dir: PathBuf,
    estimator: &'a Estimator<f32>,
    sim: LoadedDataset,
    real: LoadedDataset,
    g: Generator<f32>,
    f: Generator<f32>,
    d_s: Discriminator<f32>,
    d_r: Discriminator<f32>,
    adam_g: Adam<f32>,
    adam_f: Adam<f32>,
    adam_ds: Adam<f32>,
    adam_dr: Adam<f32>,
    sim_stream: BatchStream,
    real_stream: BatchStream,
    pool_fake_real: ReplayBuffer,
    pool_fake_sim: ReplayBuffer,
    rng_pool_r: ChaCha8Rng,
    rng_pool_s: ChaCha8Rng,
    step: u64,
    total_steps: u64,
    history: Vec<LossReport>,
}

fn check_domain(ds: &Dataset, expected: Domain, what: &str) -> Result<()> {
    for i in 0..ds.len() {
        if ds.entry(i).domain != expected {
            return Err(Error::Validation(format!(
                "{what} dataset entry {i} is labeled {}, expected {expected}",
                ds.entry(i).domain
            )));
        }
    }
    Ok(())
}

impl<'a> GanTrainer<'a> {
    fn new(
        sim_ds: &Dataset,
        real_ds: &Dataset,
        estimator: &'a Estimator<f32>,
        config: &TrainConfig,
        run_dir: &Path,
    ) -> Result<Self> {
        config.validate()?;
        for (ds, what) in [(sim_ds, "sim"), (real_ds, "real")] {
            if ds.is_empty() {
                return Err(Error::Validation(format!("{what} dataset is empty")));
            }
            if ds.manifest().image_size != (config.image_size, config.image_size) {
                return Err(Error::Validation(format!(
                    "{what} dataset is rendered at {:?} but the config trains at {}",
                    ds.manifest().image_size,
                    config.image_size
                )));
            }
        }
        check_domain(sim_ds, Domain::Sim, "sim")?;
        check_domain(real_ds, Domain::Real, "real")?;

        let with_masks = config.weights.lambda_mask > 0.0;
        let sim = load_frames(sim_ds, with_masks)?;
        let real = load_frames(real_ds, with_masks)?;

        let seed = config.seed;
        let g = Generator::new(config.generator.clone(), mix_seed(seed, seed_tags::INIT_G));
        let f = Generator::new(config.generator.clone(), mix_seed(seed, seed_tags::INIT_F));
        let d_s = Discriminator::new(
            config.discriminator.clone(),
            mix_seed(seed, seed_tags::INIT_DS),
        );
        let d_r = Discriminator::new(
            config.discriminator.clone(),
            mix_seed(seed, seed_tags::INIT_DR),
        );
        let gen_adam = AdamConfig {
            lr: config.lr_generator,
            ..AdamConfig::default()
        };
        let dis_adam = AdamConfig {
            lr: config.lr_discriminator,
            ..AdamConfig::default()
        };
        let adam_g = Adam::new(g.params(), gen_adam);
        let adam_f = Adam::new(f.params(), gen_adam);
        let adam_ds = Adam::new(d_s.params(), dis_adam);
        let adam_dr = Adam::new(d_r.params(), dis_adam);

        let steps_per_epoch = sim.len().div_ceil(config.batch_size) as u64;
        let total_steps = config.epochs as u64 * steps_per_epoch;

        Ok(GanTrainer {
            sim_stream: BatchStream::new(sim.len(), mix_seed(seed, seed_tags::STREAM_SIM)),
            real_stream: BatchStream::new(real.len(), mix_seed(seed, seed_tags::STREAM_REAL)),
            pool_fake_real: ReplayBuffer::new(config.replay_buffer_size),
            pool_fake_sim: ReplayBuffer::new(config.replay_buffer_size),
            rng_pool_r: ChaCha8Rng::seed_from_u64(mix_seed(seed, seed_tags::POOL_FAKE_REAL)),
            rng_pool_s: ChaCha8Rng::seed_from_u64(mix_seed(seed, seed_tags::POOL_FAKE_SIM)),
            config: config.clone(),
            run_dir: run_dir.to_path_buf(),
            estimator,
            sim,
            real,
            g,
            f,
            d_s,
            d_r,
            adam_g,
            adam_f,
            adam_ds,
            adam_dr,
            step: 0,
            total_steps,
            history: Vec::new(),
        })
    }

    fn checkpoint_dir(&self, step: u64) -> PathBuf {
        self.run_dir.join(CHECKPOINT_DIR).join(step.to_string())
    }

    fn write_checkpoint(&self) -> Result<()> {
        let dir = self.checkpoint_dir(self.step);
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.clone(), e))?;
        save_weights(&self.g, &dir.join("G.bin"))?;
        save_weights(&self.f, &dir.join("F.bin"))?;
        save_weights(&self.d_s, &dir.join("Ds.bin"))?;
        save_weights(&self.d_r, &dir.join("Dr.bin"))?;

        let adam_snap = |a: &Adam<f32>| {
            let (t, m, v) = a.state();
            AdamSnapshot {
                t,
                m: m.to_vec(),
                v: v.to_vec(),
            }
        };
        let stream_snap = |s: &BatchStream| {
            let (word_pos, order, cursor) = s.state();
            StreamSnapshot {
                word_pos,
                order,
                cursor,
            }
        };
        let state = TrainerState {
            step: self.step,
            adams: [
                adam_snap(&self.adam_g),
                adam_snap(&self.adam_f),
                adam_snap(&self.adam_ds),
                adam_snap(&self.adam_dr),
            ],
            streams: [
                stream_snap(&self.sim_stream),
                stream_snap(&self.real_stream),
            ],
            pools: [
                PoolSnapshot {
                    word_pos: self.rng_pool_r.get_word_pos(),
                    images: self.pool_fake_real.images().to_vec(),
                },
                PoolSnapshot {
                    word_pos: self.rng_pool_s.get_word_pos(),
                    images: self.pool_fake_sim.images().to_vec(),
                },
            ],
        };
        save_state(&dir.join("state.bin"), &state)
    }

    fn load_checkpoint(&mut self, step: u64) -> Result<()> {
        let dir = self.checkpoint_dir(step);
        load_weights(&mut self.g, &dir.join("G.bin"))?;
        load_weights(&mut self.f, &dir.join("F.bin"))?;
        load_weights(&mut self.d_s, &dir.join("Ds.bin"))?;
        load_weights(&mut self.d_r, &dir.join("Dr.bin"))?;

        let state = load_state(&dir.join("state.bin"))?;
        if state.step != step {
            return Err(Error::Format(format!(
                "checkpoint directory says step {step} but the state file says {}",
                state.step
            )));
        }
        let [sg, sf, sds, sdr] = state.adams;
        for (snap, adam) in [
            (&sg, &self.adam_g),
            (&sf, &self.adam_f),
            (&sds, &self.adam_ds),
            (&sdr, &self.adam_dr),
        ] {
            let (_, m, _) = adam.state();
            if snap.m.len() != m.len()
                || snap.m.iter().zip(m).any(|(a, b)| a.shape() != b.shape())
            {
                return Err(Error::Format(
                    "checkpoint optimizer state does not fit this architecture".into(),
                ));
            }
        }
        self.adam_g.restore(sg.t, sg.m, sg.v);
        self.adam_f.restore(sf.t, sf.m, sf.v);
        self.adam_ds.restore(sds.t, sds.m, sds.v);
        self.adam_dr.restore(sdr.t, sdr.m, sdr.v);

        let [str_s, str_r] = state.streams;
        self.sim_stream
            .restore(str_s.word_pos, str_s.order, str_s.cursor)?;
        self.real_stream
            .restore(str_r.word_pos, str_r.order, str_r.cursor)?;

        let [pool_r, pool_s] = state.pools;
        for pool in [&pool_r, &pool_s] {
            if pool.images.len() > self.config.replay_buffer_size {
                return Err(Error::Format(
                    "checkpoint replay pool exceeds the configured capacity".into(),
                ));
            }
        }
        self.rng_pool_r.set_word_pos(pool_r.word_pos);
        self.rng_pool_s.set_word_pos(pool_s.word_pos);
        self.pool_fake_real = ReplayBuffer::restore(self.config.replay_buffer_size, pool_r.images);
        self.pool_fake_sim = ReplayBuffer::restore(self.config.replay_buffer_size, pool_s.images);

        self.step = step;
        Ok(())
    }

    fn train_step(&mut self) -> Result<LossReport> {
        let scale = lr_scale(self.step, self.total_steps);
        let weights = self.config.weights;
        let idx_s = self.sim_stream.take_up_to(self.config.batch_size);
        let idx_r = self.real_stream.take(idx_s.len());
        let diff_s = batch_differences(&self.sim, &idx_s);
        let diff_r = batch_differences(&self.real, &idx_r);

        // Discriminators first: fresh fakes from the current generators are
        // run through the replay pools, so each discriminator trains on
        // real images versus a mix of current and older generator output.
        let (fake_r, fake_s) = fresh_fakes(&self.g, &self.f, &diff_s, &diff_r)?;
        let pooled_r = self.pool_fake_real.query(&mut self.rng_pool_r, &fake_r);
        update_discriminator(
            &mut self.d_r,
            &mut self.adam_dr,
            &diff_r,
            &pooled_r,
            weights.gan_mode,
            scale,
        )?;
        let pooled_s = self.pool_fake_sim.query(&mut self.rng_pool_s, &fake_s);
        update_discriminator(
            &mut self.d_s,
            &mut self.adam_ds,
            &diff_s,
            &pooled_s,
            weights.gan_mode,
            scale,
        )?;

        let batches = GenBatches {
            refs: (weights.lambda_spatial > 0.0).then(|| {
                (
                    batch_references(&self.sim, &idx_s),
                    batch_references(&self.real, &idx_r),
                )
            }),
            masks: (weights.lambda_mask > 0.0).then(|| {
                (
                    batch_masks(&self.sim, &idx_s),
                    batch_masks(&self.real, &idx_r),
                )
            }),
            diff_s,
            diff_r,
        };
        update_generators(
            &mut self.g,
            &mut self.f,
            &self.d_r,
            &self.d_s,
            self.estimator,
            &mut self.adam_g,
            &mut self.adam_f,
            &batches,
            &weights,
            self.config.extended_mask_terms,
            scale,
        )
    }

    fn run(mut self) -> Result<(TranslationModel, Vec<LossReport>)> {
        let history_path = self.run_dir.join(HISTORY_FILE);
        let mut sink = fs::OpenOptions::new()
            .append(true)
            .open(&history_path)
            .map_err(|e| Error::io(history_path.clone(), e))?;
        while self.step < self.total_steps {
            let report = self.train_step()?;
            self.step += 1;
            let mut line = serde_json::to_string(&report)
                .map_err(|e| Error::Format(format!("loss report: {e}")))?;
            line.push('\n');
            sink.write_all(line.as_bytes())
                .map_err(|e| Error::io(history_path.clone(), e))?;
            sink.flush().map_err(|e| Error::io(history_path.clone(), e))?;
            self.history.push(report);
            if self.step % self.config.checkpoint_interval == 0 || self.step == self.total_steps {
                self.write_checkpoint()?;
            }
        }
        Ok((
            TranslationModel {
                g: self.g,
                f: self.f,
                d_s: self.d_s,
                d_r: self.d_r,
            },
            self.history,
        ))
    }
}

/// One no-gradient forward pass computing the step's fresh fake batches
/// `G(I_s)` and `F(I_r)`.
fn fresh_fakes(
    g_net: &Generator<f32>,
    f_net: &Generator<f32>,
    diff_s: &ArrayD<f32>,
    diff_r: &ArrayD<f32>,
) -> Result<(ArrayD<f32>, ArrayD<f32>)> {
    let mut g = Graph::new();
    let wg = g_net.insert(&mut g, false);
    let wf = f_net.insert(&mut g, false);
    let i_s = g.constant(diff_s.clone());
    let i_r = g.constant(diff_r.clone());
    let g_is = g_net.forward(&mut g, &wg, i_s)?;
    let f_ir = f_net.forward(&mut g, &wf, i_r)?;
    Ok((g.value(g_is).clone(), g.value(f_ir).clone()))
}

/// One discriminator update on a real batch versus a pooled fake batch.
fn update_discriminator(
    d: &mut Discriminator<f32>,
    adam: &mut Adam<f32>,
    real: &ArrayD<f32>,
    fake: &ArrayD<f32>,
    mode: GanMode,
    scale: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let wired = d.insert(&mut g, true);
    let real_in = g.constant(real.clone());
    let fake_in = g.constant(fake.clone());
    let mut s_real = d.forward(&mut g, &wired, real_in)?;
    let mut s_fake = d.forward(&mut g, &wired, fake_in)?;
    if mode == GanMode::Log {
        s_real = g.sigmoid(s_real);
        s_fake = g.sigmoid(s_fake);
    }
    let loss = discriminator_loss(&mut g, s_real, s_fake, mode)?;
    let value = g.scalar_value(loss).to_f64();
    if !value.is_finite() {
        return Err(Error::Numeric("non-finite discriminator loss".into()));
    }
    let mut grads = g.backward(loss);
    let arrays = grads.for_vars(&wired.vars, &d.params().shapes());
    adam.step(d.params_mut(), &arrays, scale);
    Ok(value)
}

struct GenBatches {
    diff_s: ArrayD<f32>,
    diff_r: ArrayD<f32>,
    /// (sim, real) reference batches; present while the spatial term is on.
    refs: Option<(ArrayD<f32>, ArrayD<f32>)>,
    /// (sim, real) contact-mask batches; present while the mask term is on.
    masks: Option<(ArrayD<f32>, ArrayD<f32>)>,
}

/// One simultaneous update of both generators on the combined objective.
/// Loss branches with a zero weight are skipped entirely — with both extra
/// terms at zero this builds exactly the reference CycleGAN generator graph.
#[allow(clippy::too_many_arguments)]
fn update_generators(
    g_net: &mut Generator<f32>,
    f_net: &mut Generator<f32>,
    d_r: &Discriminator<f32>,
    d_s: &Discriminator<f32>,
    estimator: &Estimator<f32>,
    adam_g: &mut Adam<f32>,
    adam_f: &mut Adam<f32>,
    batches: &GenBatches,
    weights: &LossWeights,
    extended: bool,
    scale: f64,
) -> Result<LossReport> {
    let mode = weights.gan_mode;
    let mut g = Graph::new();
    let wg = g_net.insert(&mut g, true);
    let wf = f_net.insert(&mut g, true);
    let wdr = d_r.insert(&mut g, false);
    let wds = d_s.insert(&mut g, false);
    let west = (weights.lambda_spatial > 0.0).then(|| estimator.insert(&mut g, false));

    let i_s = g.constant(batches.diff_s.clone());
    let i_r = g.constant(batches.diff_r.clone());

    let g_is = g_net.forward(&mut g, &wg, i_s)?;
    let fg_is = f_net.forward(&mut g, &wf, g_is)?;
    let f_ir = f_net.forward(&mut g, &wf, i_r)?;
    let gf_ir = g_net.forward(&mut g, &wg, f_ir)?;

    let mut dr_fake = d_r.forward(&mut g, &wdr, g_is)?;
    if mode == GanMode::Log {
        dr_fake = g.sigmoid(dr_fake);
    }
    let adv_g = generator_adv_loss(&mut g, dr_fake, mode)?;
    let mut ds_fake = d_s.forward(&mut g, &wds, f_ir)?;
    if mode == GanMode::Log {
        ds_fake = g.sigmoid(ds_fake);
    }
    let adv_f = generator_adv_loss(&mut g, ds_fake, mode)?;

    let cycle = cycle_loss(&mut g, i_r, gf_ir, i_s, fg_is)?;
    let weighted_cycle = g.scale(cycle, weights.lambda_cycle as f32);
    let mut total = g.add(adv_g, adv_f);
    total = g.add(total, weighted_cycle);

    let mut spatial_value = 0.0;
    if weights.lambda_spatial > 0.0 {
        let (ref_s_arr, ref_r_arr) = batches.refs.as_ref().expect("refs batched when spatial on");
        let ref_s = g.constant(ref_s_arr.clone());
        let ref_r = g.constant(ref_r_arr.clone());
        let spatial = spatial_consistency_loss(
            &mut g,
            estimator,
            west.as_ref().expect("estimator wired when spatial on"),
            &SpatialImages {
                ref_s,
                i_s,
                g_i_s: g_is,
                fg_i_s: fg_is,
                ref_r,
                i_r,
                f_i_r: f_ir,
                gf_i_r: gf_ir,
            },
        )?;
        spatial_value = g.scalar_value(spatial).to_f64();
        let weighted = g.scale(spatial, weights.lambda_spatial as f32);
        total = g.add(total, weighted);
    }

    let mut mask_value = 0.0;
    if weights.lambda_mask > 0.0 {
        let (mask_s_arr, mask_r_arr) = batches.masks.as_ref().expect("masks batched when mask on");
        let mask_s = g.constant(mask_s_arr.clone());
        let mask_r = g.constant(mask_r_arr.clone());
        let mut mask = mask_consistency_loss(&mut g, i_s, mask_s, g_is, i_r, mask_r, f_ir)?;
        if extended {
            let ext = extended_mask_terms(&mut g, i_s, mask_s, fg_is, i_r, mask_r, gf_ir)?;
            mask = g.add(mask, ext);
        }
        mask_value = g.scalar_value(mask).to_f64();
        let weighted = g.scale(mask, weights.lambda_mask as f32);
        total = g.add(total, weighted);
    }

    let report = LossReport {
        gan_g: g.scalar_value(adv_g).to_f64(),
        gan_f: g.scalar_value(adv_f).to_f64(),
        cycle: g.scalar_value(cycle).to_f64(),
        spatial: spatial_value,
        mask: mask_value,
        total: g.scalar_value(total).to_f64(),
    };
    if [
        report.gan_g,
        report.gan_f,
        report.cycle,
        report.spatial,
        report.mask,
        report.total,
    ]
    .iter()
    .any(|v| !v.is_finite())
    {
        return Err(Error::Numeric(format!(
            "non-finite generator loss: {report:?}"
        )));
    }

    let mut grads = g.backward(total);
    let grads_g = grads.for_vars(&wg.vars, &g_net.params().shapes());
    let grads_f = grads.for_vars(&wf.vars, &f_net.params().shapes());
    adam_g.step(g_net.params_mut(), &grads_g, scale);
    adam_f.step(f_net.params_mut(), &grads_f, scale);
    Ok(report)
}
