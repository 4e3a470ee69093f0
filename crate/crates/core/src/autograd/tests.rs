//! Finite-difference validation of every backward rule, in double precision.
//!
//! Each op's analytic gradient is compared against central differences on
//! randomized inputs. Nonsmooth ops (relu, abs, leaky_relu) are sampled
//! away from their kinks.

use super::*;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Build = dyn Fn(&mut Graph<f64>, &[Var]) -> Var;

fn eval(inputs: &[ArrayD<f64>], build: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.leaf(x.clone(), true)).collect();
    let loss = build(&mut g, &vars);
    g.scalar_value(loss)
}

/// Checks analytic gradients of `build` (a scalar-valued graph over the
/// given leaves) against central finite differences.
fn grad_check(inputs: &[ArrayD<f64>], build: &Build, tol: f64) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.leaf(x.clone(), true)).collect();
    let loss = build(&mut g, &vars);
    let mut grads = g.backward(loss);
    let shapes: Vec<&[usize]> = inputs.iter().map(|x| x.shape()).collect();
    let analytic = grads.for_vars(&vars, &shapes);

    let h = 1e-5;
    for (i, x) in inputs.iter().enumerate() {
        let mut probe: Vec<ArrayD<f64>> = inputs.to_vec();
        for j in 0..x.len() {
            let base = *x.as_slice().unwrap().get(j).unwrap();
            probe[i].as_slice_mut().unwrap()[j] = base + h;
            let up = eval(&probe, build);
            probe[i].as_slice_mut().unwrap()[j] = base - h;
            let down = eval(&probe, build);
            probe[i].as_slice_mut().unwrap()[j] = base;

            let fd = (up - down) / (2.0 * h);
            let an = analytic[i].as_slice().unwrap()[j];
            let denom = 1.0f64.max(fd.abs()).max(an.abs());
            assert!(
                (fd - an).abs() / denom <= tol,
                "input {i} element {j}: finite diff {fd} vs analytic {an}"
            );
        }
    }
}

fn rand_arr(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-1.0..1.0))
}

/// Uniform samples with |x| >= margin, for kinked ops.
fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], margin: f64) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let v: f64 = rng.gen_range(margin..1.0);
        if rng.gen::<bool>() {
            v
        } else {
            -v
        }
    })
}

#[test]
fn arithmetic_chain_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let a = rand_arr(&mut rng, &[2, 3]);
    let b = rand_arr(&mut rng, &[2, 3]);
    grad_check(
        &[a, b],
        &|g, v| {
            let s = g.add(v[0], v[1]);
            let d = g.sub(v[0], v[1]);
            let p = g.mul(s, d);
            g.mean_all(p)
        },
        1e-7,
    );
}

#[test]
fn scale_and_add_scalar_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let a = rand_arr(&mut rng, &[4]);
    grad_check(
        &[a],
        &|g, v| {
            let x = g.scale(v[0], 1.7);
            let x = g.add_scalar(x, 0.3);
            let x = g.mul(x, x);
            g.mean_all(x)
        },
        1e-7,
    );
}

#[test]
fn relu_and_leaky_relu_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let a = rand_away_from_zero(&mut rng, &[3, 3], 0.2);
    grad_check(
        &[a.clone()],
        &|g, v| {
            let x = g.relu(v[0]);
            g.mean_all(x)
        },
        1e-7,
    );
    grad_check(
        &[a],
        &|g, v| {
            let x = g.leaky_relu(v[0], 0.2);
            g.mean_all(x)
        },
        1e-7,
    );
}

#[test]
fn smooth_nonlinearity_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let a = rand_arr(&mut rng, &[2, 5]);
    grad_check(
        &[a.clone()],
        &|g, v| {
            let x = g.tanh(v[0]);
            g.mean_all(x)
        },
        1e-7,
    );
    grad_check(
        &[a.clone()],
        &|g, v| {
            let x = g.sigmoid(v[0]);
            g.mean_all(x)
        },
        1e-7,
    );
    let pos = a.mapv(|v| 0.5 + 0.4 * v.abs());
    grad_check(
        &[pos],
        &|g, v| {
            let x = g.log(v[0]);
            g.mean_all(x)
        },
        1e-7,
    );
}

#[test]
fn abs_gradients_away_from_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let a = rand_away_from_zero(&mut rng, &[6], 0.1);
    grad_check(
        &[a],
        &|g, v| {
            let x = g.abs(v[0]);
            g.mean_all(x)
        },
        1e-7,
    );
}

#[test]
fn abs_gradient_at_zero_is_zero() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(ArrayD::zeros(IxDyn(&[3])), true);
    let a = g.abs(x);
    let loss = g.mean_all(a);
    let mut grads = g.backward(loss);
    let gx = grads.take(x).unwrap();
    assert!(gx.iter().all(|&v| v == 0.0));
}

#[test]
fn reshape_and_concat_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let a = rand_arr(&mut rng, &[1, 2, 2, 3]);
    let b = rand_arr(&mut rng, &[1, 1, 2, 3]);
    grad_check(
        &[a, b],
        &|g, v| {
            let c = g.concat_channels(v[0], v[1]);
            let flat = g.reshape(c, &[1, 18]);
            let sq = g.mul(flat, flat);
            g.mean_all(sq)
        },
        1e-7,
    );
}

#[test]
fn conv2d_gradients_stride_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let x = rand_arr(&mut rng, &[2, 3, 5, 4]);
    let w = rand_arr(&mut rng, &[2, 3, 3, 3]);
    let b = rand_arr(&mut rng, &[2]);
    grad_check(
        &[x, w, b],
        &|g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 1, 1);
            let sq = g.mul(y, y);
            g.mean_all(sq)
        },
        1e-6,
    );
}

#[test]
fn conv2d_gradients_stride_two_no_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let x = rand_arr(&mut rng, &[1, 2, 6, 7]);
    let w = rand_arr(&mut rng, &[3, 2, 3, 3]);
    grad_check(
        &[x, w],
        &|g, v| {
            let y = g.conv2d(v[0], v[1], None, 2, 1);
            let sq = g.mul(y, y);
            g.mean_all(sq)
        },
        1e-6,
    );
}

#[test]
fn conv2d_gradients_one_by_one_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let x = rand_arr(&mut rng, &[1, 4, 3, 3]);
    let w = rand_arr(&mut rng, &[2, 4, 1, 1]);
    let b = rand_arr(&mut rng, &[2]);
    grad_check(
        &[x, w, b],
        &|g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 1, 0);
            let sq = g.mul(y, y);
            g.mean_all(sq)
        },
        1e-6,
    );
}

#[test]
fn conv2d_matches_direct_convolution() {
    // Cross-check im2col against a naive quadruple loop on one case.
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let x = rand_arr(&mut rng, &[1, 2, 4, 5]);
    let w = rand_arr(&mut rng, &[3, 2, 3, 3]);
    let (stride, pad) = (1usize, 1usize);

    let mut g = Graph::<f64>::new();
    let xv = g.leaf(x.clone(), false);
    let wv = g.leaf(w.clone(), false);
    let y = g.conv2d(xv, wv, None, stride, pad);
    let got = g.value(y).clone();

    let (ho, wo) = (4usize, 5usize);
    for co in 0..3 {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for ci in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = oy as isize + ky as isize - pad as isize;
                            let ix = ox as isize + kx as isize - pad as isize;
                            if iy >= 0 && iy < 4 && ix >= 0 && ix < 5 {
                                acc += x[[0, ci, iy as usize, ix as usize]]
                                    * w[[co, ci, ky, kx]];
                            }
                        }
                    }
                }
                let diff = (got[[0, co, oy, ox]] - acc).abs();
                assert!(diff < 1e-12, "mismatch at ({co},{oy},{ox}): {diff}");
            }
        }
    }
}

#[test]
fn linear_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let x = rand_arr(&mut rng, &[3, 4]);
    let w = rand_arr(&mut rng, &[2, 4]);
    let b = rand_arr(&mut rng, &[2]);
    grad_check(
        &[x, w, b],
        &|g, v| {
            let y = g.linear(v[0], v[1], v[2]);
            let sq = g.mul(y, y);
            g.mean_all(sq)
        },
        1e-7,
    );
}

#[test]
fn instance_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let x = rand_arr(&mut rng, &[2, 3, 4, 3]);
    let gamma = rand_arr(&mut rng, &[3]).mapv(|v| 1.0 + 0.3 * v);
    let beta = rand_arr(&mut rng, &[3]);
    grad_check(
        &[x, gamma, beta],
        &|g, v| {
            let y = g.instance_norm(v[0], v[1], v[2], 1e-5);
            let t = g.tanh(y);
            g.mean_all(t)
        },
        1e-5,
    );
}

#[test]
fn instance_norm_output_is_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let x = rand_arr(&mut rng, &[1, 2, 8, 8]).mapv(|v| 3.0 * v + 1.0);
    let mut g = Graph::<f64>::new();
    let xv = g.leaf(x, false);
    let gamma = g.leaf(ArrayD::from_elem(IxDyn(&[2]), 1.0), false);
    let beta = g.leaf(ArrayD::zeros(IxDyn(&[2])), false);
    let y = g.instance_norm(xv, gamma, beta, 1e-9);
    let yv = g.value(y);
    for c in 0..2 {
        let ch = yv.slice(ndarray::s![0, c, .., ..]);
        let mean: f64 = ch.sum() / 64.0;
        let var: f64 = ch.mapv(|v| (v - mean) * (v - mean)).sum() / 64.0;
        assert!(mean.abs() < 1e-10, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-6, "var {var}");
    }
}

#[test]
fn upsample_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(113);
    let x = rand_arr(&mut rng, &[1, 2, 3, 2]);
    grad_check(
        &[x],
        &|g, v| {
            let y = g.upsample_nearest2(v[0]);
            let sq = g.mul(y, y);
            g.mean_all(sq)
        },
        1e-7,
    );
}

#[test]
fn adaptive_avg_pool_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(114);
    // 5 -> 3 produces overlapping windows; 4 -> 2 is a clean 2x2 pool.
    for (hw, out) in [((5, 5), (3, 3)), ((4, 6), (2, 3)), ((3, 3), (3, 3))] {
        let x = rand_arr(&mut rng, &[1, 2, hw.0, hw.1]);
        grad_check(
            &[x],
            &move |g, v| {
                let y = g.adaptive_avg_pool(v[0], out.0, out.1);
                let sq = g.mul(y, y);
                g.mean_all(sq)
            },
            1e-7,
        );
    }
}

#[test]
fn adaptive_avg_pool_global_is_channel_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(115);
    let x = rand_arr(&mut rng, &[1, 3, 4, 4]);
    let mut g = Graph::<f64>::new();
    let xv = g.leaf(x.clone(), false);
    let y = g.adaptive_avg_pool(xv, 1, 1);
    let yv = g.value(y);
    for c in 0..3 {
        let want = x.slice(ndarray::s![0, c, .., ..]).sum() / 16.0;
        assert!((yv[[0, c, 0, 0]] - want).abs() < 1e-12);
    }
}

#[test]
fn composite_loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(116);
    let a = rand_arr(&mut rng, &[2, 4]);
    let mut b = rand_arr(&mut rng, &[2, 4]);
    // Keep |a - b| away from the L1 kink.
    ndarray::Zip::from(&mut b).and(&a).for_each(|bv, &av| {
        if (*bv - av).abs() < 0.1 {
            *bv += 0.3;
        }
    });
    grad_check(&[a.clone(), b.clone()], &|g, v| g.l1_mean(v[0], v[1]), 1e-7);
    grad_check(&[a, b], &|g, v| g.mse_mean(v[0], v[1]), 1e-7);
}

#[test]
fn gradient_accumulates_across_reuse() {
    // loss = mean(x * x) has gradient 2x/len through two uses of x.
    let mut g = Graph::<f64>::new();
    let x = g.leaf(ArrayD::from_shape_vec(IxDyn(&[3]), vec![1.0, -2.0, 0.5]).unwrap(), true);
    let p = g.mul(x, x);
    let loss = g.mean_all(p);
    let mut grads = g.backward(loss);
    let gx = grads.take(x).unwrap();
    for (j, want) in [2.0 / 3.0, -4.0 / 3.0, 1.0 / 3.0].iter().enumerate() {
        assert!((gx[[j]] - want).abs() < 1e-12);
    }
}

#[test]
fn constants_receive_no_gradients() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(ArrayD::from_elem(IxDyn(&[2]), 1.0), true);
    let c = g.constant(ArrayD::from_elem(IxDyn(&[2]), 3.0));
    let p = g.mul(x, c);
    let loss = g.mean_all(p);
    let mut grads = g.backward(loss);
    assert!(grads.get(c).is_none());
    let gx = grads.take(x).unwrap();
    assert!((gx[[0]] - 1.5).abs() < 1e-12);
}

#[test]
fn backward_is_bitwise_deterministic() {
    let run = || -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(117);
        let x = rand_arr(&mut rng, &[1, 2, 6, 6]).mapv(|v| v as f32 as f64);
        let w = rand_arr(&mut rng, &[2, 2, 3, 3]);
        let mut g = Graph::<f64>::new();
        let xv = g.leaf(x, true);
        let wv = g.leaf(w, true);
        let y = g.conv2d(xv, wv, None, 1, 1);
        let t = g.tanh(y);
        let loss = g.mean_all(t);
        let mut grads = g.backward(loss);
        grads
            .take(wv)
            .unwrap()
            .iter()
            .map(|v| v.to_bits())
            .collect()
    };
    assert_eq!(run(), run());
}
