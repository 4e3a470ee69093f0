//! SightGAN loss terms as pure differentiable graph functions.
//!
//! Conventions fixed here once: `‖·‖₁` is the mean absolute error over
//! batch, channels and pixels; the squared norm of the spatial pair loss is
//! the squared Euclidean distance over the 3 position coordinates, averaged
//! over the batch; adversarial expectations are means over the batch and the
//! patch score grid. Means (rather than sums) keep the λ weights
//! resolution-independent.
//!
//! The estimator f_θ enters the spatial terms frozen: its parameters are
//! never trainable leaves here, but gradients flow through it into the
//! generated images.

use crate::autograd::{Graph, Scalar, Var};
use crate::data::ContactMask;
use crate::error::{Error, Result};
use crate::nets::{Discriminator, Estimator, Generator, WiredParams};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

/// Adversarial objective family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanMode {
    /// The log form: discriminators emit probabilities in (0, 1).
    Log,
    /// Least-squares surrogate over raw scores (the training default).
    LeastSquares,
}

/// Loss weights of the full objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_cycle: f64,
    pub lambda_spatial: f64,
    pub lambda_mask: f64,
    pub gan_mode: GanMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cycle: 10.0,
            lambda_spatial: 0.1,
            lambda_mask: 30.0,
            gan_mode: GanMode::LeastSquares,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_cycle", self.lambda_cycle),
            ("lambda_spatial", self.lambda_spatial),
            ("lambda_mask", self.lambda_mask),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-term values of one full objective evaluation. Serializes to one line
/// of structured training-log output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub gan_g: f64,
    pub gan_f: f64,
    pub cycle: f64,
    pub spatial: f64,
    pub mask: f64,
    pub total: f64,
}

fn check_same_shape<T: Scalar>(g: &Graph<T>, a: Var, b: Var, what: &str) -> Result<()> {
    if g.value(a).shape() != g.value(b).shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            g.value(a).shape(),
            g.value(b).shape()
        )));
    }
    Ok(())
}

// ---- adversarial terms ----

fn check_probabilities<T: Scalar>(g: &Graph<T>, scores: Var, what: &str) -> Result<()> {
    for &v in g.value(scores).iter() {
        let v = v.to_f64();
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!(
                "{what}: log-mode score {v} outside (0, 1)"
            )));
        }
    }
    Ok(())
}

/// The adversarial objective of one discriminator (the quantity D
/// maximizes). Log mode is the reference form
/// `E[log D(real)] + E[log(1 - D(fake))]` over probability scores; least
/// squares is `-(E[(D(real)-1)^2] + E[D(fake)^2]) / 2` over raw scores.
pub fn gan_loss<T: Scalar>(
    g: &mut Graph<T>,
    real_scores: Var,
    fake_scores: Var,
    mode: GanMode,
) -> Result<Var> {
    Ok(match mode {
        GanMode::Log => {
            check_probabilities(g, real_scores, "real")?;
            check_probabilities(g, fake_scores, "fake")?;
            let log_real = g.log(real_scores);
            let e_real = g.mean_all(log_real);
            let neg_fake = g.scale(fake_scores, -T::one());
            let one_minus = g.add_scalar(neg_fake, T::one());
            let log_fake = g.log(one_minus);
            let e_fake = g.mean_all(log_fake);
            g.add(e_real, e_fake)
        }
        GanMode::LeastSquares => {
            let real_m1 = g.add_scalar(real_scores, -T::one());
            let sq_real = g.mul(real_m1, real_m1);
            let e_real = g.mean_all(sq_real);
            let sq_fake = g.mul(fake_scores, fake_scores);
            let e_fake = g.mean_all(sq_fake);
            let s = g.add(e_real, e_fake);
            g.scale(s, T::from_f64(-0.5))
        }
    })
}

/// What the discriminator minimizes: the negation of [`gan_loss`].
pub fn discriminator_loss<T: Scalar>(
    g: &mut Graph<T>,
    real_scores: Var,
    fake_scores: Var,
    mode: GanMode,
) -> Result<Var> {
    let adv = gan_loss(g, real_scores, fake_scores, mode)?;
    Ok(g.scale(adv, -T::one()))
}

/// What a generator minimizes through its discriminator's fake scores:
/// non-saturating `-E[log D(fake)]` in log mode, `E[(D(fake)-1)^2]/2` in
/// least-squares mode.
pub fn generator_adv_loss<T: Scalar>(
    g: &mut Graph<T>,
    fake_scores: Var,
    mode: GanMode,
) -> Result<Var> {
    Ok(match mode {
        GanMode::Log => {
            check_probabilities(g, fake_scores, "fake")?;
            let lg = g.log(fake_scores);
            let m = g.mean_all(lg);
            g.scale(m, -T::one())
        }
        GanMode::LeastSquares => {
            let m1 = g.add_scalar(fake_scores, -T::one());
            let sq = g.mul(m1, m1);
            let m = g.mean_all(sq);
            g.scale(m, T::from_f64(0.5))
        }
    })
}

// ---- cycle consistency ----

/// Eq. 2: `E‖G(F(I_r)) - I_r‖₁ + E‖F(G(I_s)) - I_s‖₁`.
pub fn cycle_loss<T: Scalar>(
    g: &mut Graph<T>,
    i_r: Var,
    gf_i_r: Var,
    i_s: Var,
    fg_i_s: Var,
) -> Result<Var> {
    check_same_shape(g, i_r, gf_i_r, "cycle_loss real side")?;
    check_same_shape(g, i_s, fg_i_s, "cycle_loss sim side")?;
    let real_side = g.l1_mean(gf_i_r, i_r);
    let sim_side = g.l1_mean(fg_i_s, i_s);
    Ok(g.add(real_side, sim_side))
}

// ---- spatial contact consistency ----

/// Batch-mean squared Euclidean distance between two (N, 3) predictions.
pub fn position_sq_distance<T: Scalar>(g: &mut Graph<T>, p: Var, q: Var) -> Result<Var> {
    check_same_shape(g, p, q, "position_sq_distance")?;
    let shape = g.value(p).shape().to_vec();
    if shape.len() != 2 || shape[1] != 3 {
        return Err(Error::Shape(format!(
            "position batches must be (N, 3), got {shape:?}"
        )));
    }
    let d = g.sub(p, q);
    let sq = g.mul(d, d);
    // mean_all averages over N*3; the convention is sum over the 3
    // coordinates, mean over the batch.
    let m = g.mean_all(sq);
    Ok(g.scale(m, T::from_f64(3.0)))
}

fn check_finite_output<T: Scalar>(g: &Graph<T>, v: Var, what: &str) -> Result<()> {
    if g.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite {what}")))
    }
}

/// Eq. 4: `‖f_θ(I) - f_θ(J)‖²` on two difference images sharing one
/// reference. The estimator is frozen; `est_wired` must have been inserted
/// with `trainable = false`.
pub fn spatial_pair_loss<T: Scalar>(
    g: &mut Graph<T>,
    est: &Estimator<T>,
    est_wired: &WiredParams,
    reference: Var,
    i: Var,
    j: Var,
) -> Result<Var> {
    let p_i = est.forward(g, est_wired, reference, i)?;
    let p_j = est.forward(g, est_wired, reference, j)?;
    check_finite_output(g, p_i, "estimator output")?;
    check_finite_output(g, p_j, "estimator output")?;
    position_sq_distance(g, p_i, p_j)
}

/// The six images entering Eq. 5, each as an `(N, 3, H, W)` graph node, plus
/// the per-domain reference batches the estimator consumes.
pub struct SpatialImages {
    pub ref_s: Var,
    pub i_s: Var,
    pub g_i_s: Var,
    pub fg_i_s: Var,
    pub ref_r: Var,
    pub i_r: Var,
    pub f_i_r: Var,
    pub gf_i_r: Var,
}

/// Eq. 5: six pair terms with coefficients (1, ½, ½, 1, ½, ½); the halved
/// terms involve the cycled images, which appear in two comparisons each.
/// Estimates are computed once per image (six forwards, not twelve).
pub fn spatial_consistency_loss<T: Scalar>(
    g: &mut Graph<T>,
    est: &Estimator<T>,
    est_wired: &WiredParams,
    images: &SpatialImages,
) -> Result<Var> {
    let p_i_s = est.forward(g, est_wired, images.ref_s, images.i_s)?;
    let p_g_i_s = est.forward(g, est_wired, images.ref_s, images.g_i_s)?;
    let p_fg_i_s = est.forward(g, est_wired, images.ref_s, images.fg_i_s)?;
    let p_i_r = est.forward(g, est_wired, images.ref_r, images.i_r)?;
    let p_f_i_r = est.forward(g, est_wired, images.ref_r, images.f_i_r)?;
    let p_gf_i_r = est.forward(g, est_wired, images.ref_r, images.gf_i_r)?;
    for (what, v) in [
        ("f(I_s)", p_i_s),
        ("f(G(I_s))", p_g_i_s),
        ("f(F(G(I_s)))", p_fg_i_s),
        ("f(I_r)", p_i_r),
        ("f(F(I_r))", p_f_i_r),
        ("f(G(F(I_r)))", p_gf_i_r),
    ] {
        check_finite_output(g, v, what)?;
    }

    let half = T::from_f64(0.5);
    let t1 = position_sq_distance(g, p_i_s, p_g_i_s)?;
    let t2 = position_sq_distance(g, p_i_s, p_fg_i_s)?;
    let t2 = g.scale(t2, half);
    let t3 = position_sq_distance(g, p_g_i_s, p_fg_i_s)?;
    let t3 = g.scale(t3, half);
    let t4 = position_sq_distance(g, p_i_r, p_f_i_r)?;
    let t5 = position_sq_distance(g, p_i_r, p_gf_i_r)?;
    let t5 = g.scale(t5, half);
    let t6 = position_sq_distance(g, p_f_i_r, p_gf_i_r)?;
    let t6 = g.scale(t6, half);

    let mut total = g.add(t1, t2);
    for t in [t3, t4, t5, t6] {
        total = g.add(total, t);
    }
    Ok(total)
}

// ---- pixel-wise contact region consistency ----

/// Expands per-frame contact masks to an `(N, 3, H, W)` batch array
/// (channel-broadcast of each 2-d binary mask).
pub fn mask_batch<T: Scalar>(masks: &[&ContactMask]) -> ArrayD<T> {
    assert!(!masks.is_empty(), "empty mask batch");
    let (h, w) = masks[0].mask().dim();
    let mut out = ArrayD::<T>::zeros(IxDyn(&[masks.len(), 3, h, w]));
    for (i, m) in masks.iter().enumerate() {
        assert_eq!(m.mask().dim(), (h, w), "mask {i} size differs within batch");
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    out[[i, c, y, x]] = T::from_f64(m.mask()[[y, x]] as f64);
                }
            }
        }
    }
    out
}

/// Eq. 6: `‖I⊙B - H(I)⊙B‖₁`, mean over all pixels (masked-out zeros
/// included — this normalization convention is fixed here). `B` must be
/// binary and already channel-expanded to the image shape.
pub fn masked_region_loss<T: Scalar>(
    g: &mut Graph<T>,
    i: Var,
    b: Var,
    h_of_i: Var,
) -> Result<Var> {
    check_same_shape(g, i, h_of_i, "masked_region_loss image")?;
    check_same_shape(g, i, b, "masked_region_loss mask")?;
    for &v in g.value(b).iter() {
        if !(v == T::zero() || v == T::one()) {
            return Err(Error::Validation(format!(
                "contact mask must be binary, found {v}"
            )));
        }
    }
    let d = g.sub(i, h_of_i);
    let masked = g.mul(d, b);
    let a = g.abs(masked);
    Ok(g.mean_all(a))
}

/// Eq. 7: `L_m(I_s, B_s, G) + L_m(I_r, B_r, F)`. Exactly two terms; extra
/// cycled-image terms did not help in the source analysis and live behind
/// [`extended_mask_terms`] for experimentation.
#[allow(clippy::too_many_arguments)]
pub fn mask_consistency_loss<T: Scalar>(
    g: &mut Graph<T>,
    i_s: Var,
    b_s: Var,
    g_i_s: Var,
    i_r: Var,
    b_r: Var,
    f_i_r: Var,
) -> Result<Var> {
    let sim_side = masked_region_loss(g, i_s, b_s, g_i_s)?;
    let real_side = masked_region_loss(g, i_r, b_r, f_i_r)?;
    Ok(g.add(sim_side, real_side))
}

/// Optional experimental extension of Eq. 7 to the cycled images:
/// `L_m(I_s, B_s, F∘G) + L_m(I_r, B_r, G∘F)`. Off by default.
#[allow(clippy::too_many_arguments)]
pub fn extended_mask_terms<T: Scalar>(
    g: &mut Graph<T>,
    i_s: Var,
    b_s: Var,
    fg_i_s: Var,
    i_r: Var,
    b_r: Var,
    gf_i_r: Var,
) -> Result<Var> {
    let sim_side = masked_region_loss(g, i_s, b_s, fg_i_s)?;
    let real_side = masked_region_loss(g, i_r, b_r, gf_i_r)?;
    Ok(g.add(sim_side, real_side))
}

// ---- full objective ----

/// Input batches of one objective evaluation: difference images, their
/// references, and channel-expanded binary contact masks, per domain.
pub struct SightGanInputs<T> {
    pub ref_s: ArrayD<T>,
    pub diff_s: ArrayD<T>,
    pub mask_s: ArrayD<T>,
    pub ref_r: ArrayD<T>,
    pub diff_r: ArrayD<T>,
    pub mask_r: ArrayD<T>,
}

/// The five models entering the objective.
pub struct SightGanNets<'a, T: Scalar> {
    pub g: &'a Generator<T>,
    pub f: &'a Generator<T>,
    pub d_s: &'a Discriminator<T>,
    pub d_r: &'a Discriminator<T>,
    pub estimator: &'a Estimator<T>,
}

/// Graph handles produced by [`total_loss`], for gradient retrieval.
pub struct SightGanWired {
    pub g: WiredParams,
    pub f: WiredParams,
    pub d_s: WiredParams,
    pub d_r: WiredParams,
}

/// Evaluation of the complete objective.
pub struct TotalLoss {
    /// The Eq. 9 scalar as a graph node (differentiable).
    pub total: Var,
    pub report: LossReport,
    pub wired: SightGanWired,
}

/// Eq. 9, the complete objective:
/// `gan_G + gan_F + λ_cycle·cycle + λ_spatial·spatial + λ_mask·mask`.
///
/// This is the reference evaluator: every component is always computed and
/// reported unweighted in the [`LossReport`]; the training steps use their
/// own phase-split losses. Generators and discriminators are inserted as
/// trainable leaves per the two flags; the estimator is always frozen.
pub fn total_loss<T: Scalar>(
    graph: &mut Graph<T>,
    nets: &SightGanNets<'_, T>,
    inputs: &SightGanInputs<T>,
    weights: &LossWeights,
    train_generators: bool,
    train_discriminators: bool,
) -> Result<TotalLoss> {
    weights.validate()?;
    let g = graph;

    let wired = SightGanWired {
        g: nets.g.insert(g, train_generators),
        f: nets.f.insert(g, train_generators),
        d_s: nets.d_s.insert(g, train_discriminators),
        d_r: nets.d_r.insert(g, train_discriminators),
    };
    let est_wired = nets.estimator.insert(g, false);

    let ref_s = g.constant(inputs.ref_s.clone());
    let i_s = g.constant(inputs.diff_s.clone());
    let mask_s = g.constant(inputs.mask_s.clone());
    let ref_r = g.constant(inputs.ref_r.clone());
    let i_r = g.constant(inputs.diff_r.clone());
    let mask_r = g.constant(inputs.mask_r.clone());

    // Translations and cycles.
    let g_i_s = nets.g.forward(g, &wired.g, i_s)?;
    let fg_i_s = nets.f.forward(g, &wired.f, g_i_s)?;
    let f_i_r = nets.f.forward(g, &wired.f, i_r)?;
    let gf_i_r = nets.g.forward(g, &wired.g, f_i_r)?;

    // Adversarial terms; in log mode the raw patch scores pass through a
    // sigmoid to become probabilities.
    let score = |g: &mut Graph<T>, d: &Discriminator<T>, w: &WiredParams, x: Var| {
        let s = d.forward(g, w, x)?;
        Ok::<Var, Error>(match weights.gan_mode {
            GanMode::Log => g.sigmoid(s),
            GanMode::LeastSquares => s,
        })
    };
    let dr_real = score(g, nets.d_r, &wired.d_r, i_r)?;
    let dr_fake = score(g, nets.d_r, &wired.d_r, g_i_s)?;
    let ds_real = score(g, nets.d_s, &wired.d_s, i_s)?;
    let ds_fake = score(g, nets.d_s, &wired.d_s, f_i_r)?;
    let gan_g = gan_loss(g, dr_real, dr_fake, weights.gan_mode)?;
    let gan_f = gan_loss(g, ds_real, ds_fake, weights.gan_mode)?;

    let cycle = cycle_loss(g, i_r, gf_i_r, i_s, fg_i_s)?;

    let spatial = spatial_consistency_loss(
        g,
        nets.estimator,
        &est_wired,
        &SpatialImages {
            ref_s,
            i_s,
            g_i_s,
            fg_i_s,
            ref_r,
            i_r,
            f_i_r,
            gf_i_r,
        },
    )?;

    let mask = mask_consistency_loss(g, i_s, mask_s, g_i_s, i_r, mask_r, f_i_r)?;

    let weighted_cycle = g.scale(cycle, T::from_f64(weights.lambda_cycle));
    let weighted_spatial = g.scale(spatial, T::from_f64(weights.lambda_spatial));
    let weighted_mask = g.scale(mask, T::from_f64(weights.lambda_mask));
    let mut total = g.add(gan_g, gan_f);
    total = g.add(total, weighted_cycle);
    total = g.add(total, weighted_spatial);
    total = g.add(total, weighted_mask);

    let report = LossReport {
        gan_g: g.scalar_value(gan_g).to_f64(),
        gan_f: g.scalar_value(gan_f).to_f64(),
        cycle: g.scalar_value(cycle).to_f64(),
        spatial: g.scalar_value(spatial).to_f64(),
        mask: g.scalar_value(mask).to_f64(),
        total: g.scalar_value(total).to_f64(),
    };
    if !report.total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite objective: {report:?}"
        )));
    }

    Ok(TotalLoss {
        total,
        report,
        wired,
    })
}
