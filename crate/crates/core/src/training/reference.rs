//! Plain CycleGAN training, kept as a self-contained baseline.
//!
//! This is both the ablation baseline for evaluation runs and the oracle
//! for the reduction property of the full trainer: with the spatial and
//! mask weights at zero, [`train_sightgan`](super::train_sightgan) must
//! produce bitwise-identical parameters to [`train_cyclegan`]. To keep
//! that comparison meaningful the step logic here is written out on its
//! own rather than delegating to the full trainer — the two share only the
//! data pipeline, the network forwards, and the loss primitives. Both
//! assemble their graphs in the same canonical order, which is what makes
//! f32 accumulation match bit for bit.

use super::batches::{batch_differences, load_frames, BatchStream};
use super::replay::ReplayBuffer;
use super::{lr_scale, seed_tags, TrainConfig};
use crate::autograd::{Adam, AdamConfig, Graph, Scalar};
use crate::data::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::losses::{cycle_loss, discriminator_loss, generator_adv_loss, GanMode, LossReport};
use crate::nets::{Discriminator, Generator};
use crate::sim::mix_seed;
use crate::training::TranslationModel;
use ndarray::ArrayD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Trains an unmodified CycleGAN on two unpaired datasets, entirely in
/// memory (no checkpoints or log files). `config.weights.lambda_spatial`
/// and `lambda_mask` are ignored; the objective is the adversarial terms
/// plus `lambda_cycle` times the cycle term.
pub fn train_cyclegan(
    sim_ds: &Dataset,
    real_ds: &Dataset,
    config: &TrainConfig,
) -> Result<(TranslationModel, Vec<LossReport>)> {
    config.validate()?;
    for (ds, what, domain) in [
        (sim_ds, "sim", Domain::Sim),
        (real_ds, "real", Domain::Real),
    ] {
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
        for i in 0..ds.len() {
            if ds.entry(i).domain != domain {
                return Err(Error::Validation(format!(
                    "{what} dataset entry {i} is labeled {}, expected {domain}",
                    ds.entry(i).domain
                )));
            }
        }
    }
    let sim = load_frames(sim_ds, false)?;
    let real = load_frames(real_ds, false)?;

    let seed = config.seed;
    let mut g_net = Generator::new(config.generator.clone(), mix_seed(seed, seed_tags::INIT_G));
    let mut f_net = Generator::new(config.generator.clone(), mix_seed(seed, seed_tags::INIT_F));
    let mut d_s = Discriminator::new(
        config.discriminator.clone(),
        mix_seed(seed, seed_tags::INIT_DS),
    );
    let mut d_r = Discriminator::new(
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
    let mut adam_g = Adam::new(g_net.params(), gen_adam);
    let mut adam_f = Adam::new(f_net.params(), gen_adam);
    let mut adam_ds = Adam::new(d_s.params(), dis_adam);
    let mut adam_dr = Adam::new(d_r.params(), dis_adam);

    let mut sim_stream = BatchStream::new(sim.len(), mix_seed(seed, seed_tags::STREAM_SIM));
    let mut real_stream = BatchStream::new(real.len(), mix_seed(seed, seed_tags::STREAM_REAL));
    let mut pool_fake_real = ReplayBuffer::new(config.replay_buffer_size);
    let mut pool_fake_sim = ReplayBuffer::new(config.replay_buffer_size);
    let mut rng_pool_r = ChaCha8Rng::seed_from_u64(mix_seed(seed, seed_tags::POOL_FAKE_REAL));
    let mut rng_pool_s = ChaCha8Rng::seed_from_u64(mix_seed(seed, seed_tags::POOL_FAKE_SIM));

    let mode = config.weights.gan_mode;
    let lambda_cycle = config.weights.lambda_cycle;
    let steps_per_epoch = sim.len().div_ceil(config.batch_size) as u64;
    let total_steps = config.epochs as u64 * steps_per_epoch;
    let mut history = Vec::with_capacity(total_steps as usize);

    for step in 0..total_steps {
        let scale = lr_scale(step, total_steps);
        let idx_s = sim_stream.take_up_to(config.batch_size);
        let idx_r = real_stream.take(idx_s.len());
        let diff_s = batch_differences(&sim, &idx_s);
        let diff_r = batch_differences(&real, &idx_r);

        // Fresh fakes without gradients, then discriminators on real
        // batches versus replay-pooled fakes.
        let (fake_r, fake_s) = {
            let mut g = Graph::new();
            let wg = g_net.insert(&mut g, false);
            let wf = f_net.insert(&mut g, false);
            let i_s = g.constant(diff_s.clone());
            let i_r = g.constant(diff_r.clone());
            let g_is = g_net.forward(&mut g, &wg, i_s)?;
            let f_ir = f_net.forward(&mut g, &wf, i_r)?;
            (g.value(g_is).clone(), g.value(f_ir).clone())
        };
        let pooled_r = pool_fake_real.query(&mut rng_pool_r, &fake_r);
        step_discriminator(&mut d_r, &mut adam_dr, &diff_r, &pooled_r, mode, scale)?;
        let pooled_s = pool_fake_sim.query(&mut rng_pool_s, &fake_s);
        step_discriminator(&mut d_s, &mut adam_ds, &diff_s, &pooled_s, mode, scale)?;

        // Both generators together on adversarial plus cycle terms.
        let mut g = Graph::new();
        let wg = g_net.insert(&mut g, true);
        let wf = f_net.insert(&mut g, true);
        let wdr = d_r.insert(&mut g, false);
        let wds = d_s.insert(&mut g, false);
        let i_s = g.constant(diff_s.clone());
        let i_r = g.constant(diff_r.clone());
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
        let weighted_cycle = g.scale(cycle, lambda_cycle as f32);
        let mut total = g.add(adv_g, adv_f);
        total = g.add(total, weighted_cycle);

        let report = LossReport {
            gan_g: g.scalar_value(adv_g).to_f64(),
            gan_f: g.scalar_value(adv_f).to_f64(),
            cycle: g.scalar_value(cycle).to_f64(),
            spatial: 0.0,
            mask: 0.0,
            total: g.scalar_value(total).to_f64(),
        };
        if !report.total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite generator loss at step {step}: {report:?}"
            )));
        }
        let mut grads = g.backward(total);
        let grads_g = grads.for_vars(&wg.vars, &g_net.params().shapes());
        let grads_f = grads.for_vars(&wf.vars, &f_net.params().shapes());
        adam_g.step(g_net.params_mut(), &grads_g, scale);
        adam_f.step(f_net.params_mut(), &grads_f, scale);
        history.push(report);
    }

    Ok((
        TranslationModel {
            g: g_net,
            f: f_net,
            d_s,
            d_r,
        },
        history,
    ))
}

fn step_discriminator(
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
        return Err(Error::Numeric(format!("non-finite discriminator loss {value}")));
    }
    let mut grads = g.backward(loss);
    let arrays = grads.for_vars(&wired.vars, &d.params().shapes());
    adam.step(d.params_mut(), &arrays, scale);
    Ok(value)
}
