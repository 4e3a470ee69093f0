//! Forward evaluation and backward rules for every tape operation.

use super::graph::{BackOp, Graph, Var};
use super::Scalar;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayD, ArrayView2, ArrayViewMut2, Axis, Ix1, Ix2, Ix4, IxDyn};

fn same_shape<T: Scalar>(g: &Graph<T>, a: Var, b: Var, what: &str) {
    assert_eq!(
        g.value(a).shape(),
        g.value(b).shape(),
        "{what}: operand shapes differ"
    );
}

// ---- elementwise arithmetic ----

struct AddOp;
impl<T: Scalar> BackOp<T> for AddOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        vec![
            needs[0].then(|| grad.clone()),
            needs[1].then(|| grad.clone()),
        ]
    }
}

pub(crate) fn add<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Var {
    same_shape(g, a, b, "add");
    let value = g.value(a) + g.value(b);
    g.push(value, vec![a, b], Box::new(AddOp))
}

struct SubOp;
impl<T: Scalar> BackOp<T> for SubOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        vec![
            needs[0].then(|| grad.clone()),
            needs[1].then(|| grad.mapv(|v| -v)),
        ]
    }
}

pub(crate) fn sub<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Var {
    same_shape(g, a, b, "sub");
    let value = g.value(a) - g.value(b);
    g.push(value, vec![a, b], Box::new(SubOp))
}

struct MulOp;
impl<T: Scalar> BackOp<T> for MulOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        vec![
            needs[0].then(|| grad * inputs[1]),
            needs[1].then(|| grad * inputs[0]),
        ]
    }
}

pub(crate) fn mul<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Var {
    same_shape(g, a, b, "mul");
    let value = g.value(a) * g.value(b);
    g.push(value, vec![a, b], Box::new(MulOp))
}

struct ScaleOp<T>(T);
impl<T: Scalar> BackOp<T> for ScaleOp<T> {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        vec![Some(grad.mapv(|v| v * self.0))]
    }
}

pub(crate) fn scale<T: Scalar>(g: &mut Graph<T>, a: Var, c: T) -> Var {
    let value = g.value(a).mapv(|v| v * c);
    g.push(value, vec![a], Box::new(ScaleOp(c)))
}

struct AddScalarOp;
impl<T: Scalar> BackOp<T> for AddScalarOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        vec![Some(grad.clone())]
    }
}

pub(crate) fn add_scalar<T: Scalar>(g: &mut Graph<T>, a: Var, c: T) -> Var {
    let value = g.value(a).mapv(|v| v + c);
    g.push(value, vec![a], Box::new(AddScalarOp))
}

// ---- elementwise nonlinearities ----

struct ReluOp;
impl<T: Scalar> BackOp<T> for ReluOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let mut gx = grad.clone();
        gx.zip_mut_with(inputs[0], |gv, &x| {
            if x <= T::zero() {
                *gv = T::zero();
            }
        });
        vec![Some(gx)]
    }
}

pub(crate) fn relu<T: Scalar>(g: &mut Graph<T>, a: Var) -> Var {
    let value = g.value(a).mapv(|v| if v > T::zero() { v } else { T::zero() });
    g.push(value, vec![a], Box::new(ReluOp))
}

struct LeakyReluOp<T>(T);
impl<T: Scalar> BackOp<T> for LeakyReluOp<T> {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let slope = self.0;
        let mut gx = grad.clone();
        gx.zip_mut_with(inputs[0], |gv, &x| {
            if x <= T::zero() {
                *gv = *gv * slope;
            }
        });
        vec![Some(gx)]
    }
}

pub(crate) fn leaky_relu<T: Scalar>(g: &mut Graph<T>, a: Var, slope: T) -> Var {
    let value = g
        .value(a)
        .mapv(|v| if v > T::zero() { v } else { v * slope });
    g.push(value, vec![a], Box::new(LeakyReluOp(slope)))
}

struct TanhOp;
impl<T: Scalar> BackOp<T> for TanhOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _inputs: &[&ArrayD<T>],
        output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let mut gx = grad.clone();
        gx.zip_mut_with(output, |gv, &y| *gv = *gv * (T::one() - y * y));
        vec![Some(gx)]
    }
}

pub(crate) fn tanh<T: Scalar>(g: &mut Graph<T>, a: Var) -> Var {
    let value = g.value(a).mapv(|v| v.tanh());
    g.push(value, vec![a], Box::new(TanhOp))
}

struct SigmoidOp;
impl<T: Scalar> BackOp<T> for SigmoidOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _inputs: &[&ArrayD<T>],
        output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let mut gx = grad.clone();
        gx.zip_mut_with(output, |gv, &y| *gv = *gv * y * (T::one() - y));
        vec![Some(gx)]
    }
}

pub(crate) fn sigmoid<T: Scalar>(g: &mut Graph<T>, a: Var) -> Var {
    let one = T::one();
    let value = g.value(a).mapv(|v| one / (one + (-v).exp()));
    g.push(value, vec![a], Box::new(SigmoidOp))
}

struct LogOp;
impl<T: Scalar> BackOp<T> for LogOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        vec![Some(grad / inputs[0])]
    }
}

pub(crate) fn log<T: Scalar>(g: &mut Graph<T>, a: Var) -> Var {
    let value = g.value(a).mapv(|v| v.ln());
    g.push(value, vec![a], Box::new(LogOp))
}

struct AbsOp;
impl<T: Scalar> BackOp<T> for AbsOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let mut gx = grad.clone();
        gx.zip_mut_with(inputs[0], |gv, &x| {
            *gv = if x > T::zero() {
                *gv
            } else if x < T::zero() {
                -*gv
            } else {
                T::zero()
            };
        });
        vec![Some(gx)]
    }
}

pub(crate) fn abs<T: Scalar>(g: &mut Graph<T>, a: Var) -> Var {
    let value = g.value(a).mapv(|v| v.abs());
    g.push(value, vec![a], Box::new(AbsOp))
}

// ---- reductions and shape ----

struct MeanAllOp {
    len: usize,
    shape: Vec<usize>,
}
impl<T: Scalar> BackOp<T> for MeanAllOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let g = *grad.iter().next().unwrap() / T::from_f64(self.len as f64);
        vec![Some(ArrayD::from_elem(IxDyn(&self.shape), g))]
    }
}

pub(crate) fn mean_all<T: Scalar>(g: &mut Graph<T>, a: Var) -> Var {
    let v = g.value(a);
    let len = v.len();
    assert!(len > 0, "mean_all of an empty tensor");
    let mean = v.sum() / T::from_f64(len as f64);
    let shape = v.shape().to_vec();
    let value = ArrayD::from_elem(IxDyn(&[]), mean);
    g.push(value, vec![a], Box::new(MeanAllOp { len, shape }))
}

struct ReshapeOp {
    in_shape: Vec<usize>,
}
impl<T: Scalar> BackOp<T> for ReshapeOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        vec![Some(to_shape(grad, &self.in_shape))]
    }
}

fn to_shape<T: Scalar>(a: &ArrayD<T>, shape: &[usize]) -> ArrayD<T> {
    let flat: Vec<T> = a.iter().copied().collect();
    ArrayD::from_shape_vec(IxDyn(shape), flat).expect("element count mismatch in reshape")
}

pub(crate) fn reshape<T: Scalar>(g: &mut Graph<T>, a: Var, shape: &[usize]) -> Var {
    let v = g.value(a);
    assert_eq!(
        v.len(),
        shape.iter().product::<usize>(),
        "reshape cannot change the element count"
    );
    let in_shape = v.shape().to_vec();
    let value = to_shape(v, shape);
    g.push(value, vec![a], Box::new(ReshapeOp { in_shape }))
}

struct ConcatChannelsOp {
    c_a: usize,
}
impl<T: Scalar> BackOp<T> for ConcatChannelsOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        _inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let g4 = grad.view().into_dimensionality::<Ix4>().unwrap();
        let ga = needs[0].then(|| {
            g4.slice(ndarray::s![.., ..self.c_a, .., ..])
                .to_owned()
                .into_dyn()
        });
        let gb = needs[1].then(|| {
            g4.slice(ndarray::s![.., self.c_a.., .., ..])
                .to_owned()
                .into_dyn()
        });
        vec![ga, gb]
    }
}

pub(crate) fn concat_channels<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Var {
    let va = g.value(a).view().into_dimensionality::<Ix4>().unwrap();
    let vb = g.value(b).view().into_dimensionality::<Ix4>().unwrap();
    let (n, c_a, h, w) = va.dim();
    let (nb, _, hb, wb) = vb.dim();
    assert_eq!((n, h, w), (nb, hb, wb), "concat_channels: batch/size differ");
    let value = ndarray::concatenate(Axis(1), &[va, vb])
        .unwrap()
        .as_standard_layout()
        .to_owned()
        .into_dyn();
    g.push(value, vec![a, b], Box::new(ConcatChannelsOp { c_a }))
}

// ---- convolution ----

/// Output spatial size of a convolution along one axis.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

struct Conv2dOp {
    stride: usize,
    pad: usize,
    has_bias: bool,
}

/// Valid output-column range `[lo, hi)` such that `ox*s + k - p` stays inside
/// `[0, input)`.
fn valid_range(input: usize, out: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let last_in = input as isize - 1 - k as isize + pad as isize;
    if last_in < 0 {
        return (0, 0);
    }
    let hi = (last_in as usize / stride + 1).min(out);
    (lo.min(hi), hi)
}

fn im2col<T: Scalar>(
    x: &[T],
    (cin, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    (ho, wo): (usize, usize),
    stride: usize,
    pad: usize,
    col: &mut Array2<T>,
) {
    let howo = ho * wo;
    let col_slice = col.as_slice_mut().expect("col is standard layout");
    col_slice.fill(T::zero());
    for ci in 0..cin {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let dst = &mut col_slice[row * howo..(row + 1) * howo];
                let (lo_y, hi_y) = valid_range(h, ho, ky, stride, pad);
                let (lo_x, hi_x) = valid_range(w, wo, kx, stride, pad);
                for oy in lo_y..hi_y {
                    let iy = oy * stride + ky - pad;
                    let src_base = ci * h * w + iy * w;
                    let dst_base = oy * wo;
                    for ox in lo_x..hi_x {
                        let ix = ox * stride + kx - pad;
                        dst[dst_base + ox] = x[src_base + ix];
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(
    col: &Array2<T>,
    (cin, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    (ho, wo): (usize, usize),
    stride: usize,
    pad: usize,
    dx: &mut [T],
) {
    let howo = ho * wo;
    let col_slice = col.as_slice().expect("col is standard layout");
    for ci in 0..cin {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let src = &col_slice[row * howo..(row + 1) * howo];
                let (lo_y, hi_y) = valid_range(h, ho, ky, stride, pad);
                let (lo_x, hi_x) = valid_range(w, wo, kx, stride, pad);
                for oy in lo_y..hi_y {
                    let iy = oy * stride + ky - pad;
                    let dst_base = ci * h * w + iy * w;
                    let src_base = oy * wo;
                    for ox in lo_x..hi_x {
                        let ix = ox * stride + kx - pad;
                        dx[dst_base + ix] = dx[dst_base + ix] + src[src_base + ox];
                    }
                }
            }
        }
    }
}

impl<T: Scalar> BackOp<T> for Conv2dOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let x = inputs[0].view().into_dimensionality::<Ix4>().unwrap();
        let w = inputs[1].view().into_dimensionality::<Ix4>().unwrap();
        let dy = grad.view().into_dimensionality::<Ix4>().unwrap();
        let (n, cin, h, win) = x.dim();
        let (cout, _, kh, kw) = w.dim();
        let (_, _, ho, wo) = dy.dim();
        let cols_len = cin * kh * kw;
        let howo = ho * wo;

        let w_std = w.as_standard_layout();
        let w_mat: ArrayView2<T> = w_std
            .view()
            .into_shape_with_order((cout, cols_len))
            .unwrap();

        let mut col = Array2::<T>::zeros((cols_len, howo));
        let mut dw_mat = needs[1].then(|| Array2::<T>::zeros((cout, cols_len)));
        let mut dx = needs[0].then(|| ArrayD::<T>::zeros(IxDyn(&[n, cin, h, win])));

        for i in 0..n {
            let dy_flat = dy.index_axis(Axis(0), i);
            let dy_std = dy_flat.as_standard_layout();
            let dy_mat: ArrayView2<T> =
                dy_std.view().into_shape_with_order((cout, howo)).unwrap();

            if needs[0] {
                // dX = col2im(W^T . dY)
                let mut dcol = Array2::<T>::zeros((cols_len, howo));
                general_mat_mul(T::one(), &w_mat.t(), &dy_mat, T::zero(), &mut dcol);
                let dx_arr = dx.as_mut().unwrap();
                let dx_slice = dx_arr.as_slice_mut().unwrap();
                let base = i * cin * h * win;
                col2im_add(
                    &dcol,
                    (cin, h, win),
                    (kh, kw),
                    (ho, wo),
                    self.stride,
                    self.pad,
                    &mut dx_slice[base..base + cin * h * win],
                );
            }
            if needs[1] {
                // dW += dY . col^T
                let x_i = x.index_axis(Axis(0), i);
                let x_std = x_i.as_standard_layout();
                im2col(
                    x_std.as_slice().unwrap(),
                    (cin, h, win),
                    (kh, kw),
                    (ho, wo),
                    self.stride,
                    self.pad,
                    &mut col,
                );
                general_mat_mul(
                    T::one(),
                    &dy_mat,
                    &col.t(),
                    T::one(),
                    dw_mat.as_mut().unwrap(),
                );
            }
        }

        let dw = dw_mat.map(|m| to_shape(&m.into_dyn(), &[cout, cin, kh, kw]));
        let mut out = vec![dx, dw];
        if self.has_bias {
            let db = needs[2].then(|| {
                let mut db = Array1::<T>::zeros(cout);
                for i in 0..n {
                    for co in 0..cout {
                        db[co] = db[co] + dy.index_axis(Axis(0), i).index_axis(Axis(0), co).sum();
                    }
                }
                db.into_dyn()
            });
            out.push(db);
        }
        out
    }
}

pub(crate) fn conv2d<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    stride: usize,
    pad: usize,
) -> Var {
    assert!(stride >= 1, "conv2d stride must be >= 1");
    let xv = g.value(x).view().into_dimensionality::<Ix4>().unwrap();
    let wv = g.value(w).view().into_dimensionality::<Ix4>().unwrap();
    let (n, cin, h, win) = xv.dim();
    let (cout, cin_w, kh, kw) = wv.dim();
    assert_eq!(cin, cin_w, "conv2d: input/kernel channel mismatch");
    assert!(
        h + 2 * pad >= kh && win + 2 * pad >= kw,
        "conv2d: kernel larger than padded input"
    );
    let ho = conv_out_size(h, kh, stride, pad);
    let wo = conv_out_size(win, kw, stride, pad);
    let cols_len = cin * kh * kw;
    let howo = ho * wo;

    let w_std = wv.as_standard_layout();
    let w_mat: ArrayView2<T> = w_std
        .view()
        .into_shape_with_order((cout, cols_len))
        .unwrap();
    let bias = b.map(|bv| {
        let arr = g.value(bv).view().into_dimensionality::<Ix1>().unwrap();
        assert_eq!(arr.len(), cout, "conv2d: bias length mismatch");
        arr.to_owned()
    });

    let mut out = ArrayD::<T>::zeros(IxDyn(&[n, cout, ho, wo]));
    let mut col = Array2::<T>::zeros((cols_len, howo));
    {
        let out_slice = out.as_slice_mut().unwrap();
        let x_std = xv.as_standard_layout();
        let x_slice = x_std.as_slice().unwrap();
        for i in 0..n {
            im2col(
                &x_slice[i * cin * h * win..(i + 1) * cin * h * win],
                (cin, h, win),
                (kh, kw),
                (ho, wo),
                stride,
                pad,
                &mut col,
            );
            let dst = &mut out_slice[i * cout * howo..(i + 1) * cout * howo];
            let mut y_mat: ArrayViewMut2<T> =
                ArrayViewMut2::from_shape((cout, howo), dst).unwrap();
            general_mat_mul(T::one(), &w_mat, &col.view(), T::zero(), &mut y_mat);
            if let Some(bias) = &bias {
                for co in 0..cout {
                    let bval = bias[co];
                    for v in &mut dst[co * howo..(co + 1) * howo] {
                        *v = *v + bval;
                    }
                }
            }
        }
    }

    let mut parents = vec![x, w];
    if let Some(bv) = b {
        parents.push(bv);
    }
    g.push(
        out,
        parents,
        Box::new(Conv2dOp {
            stride,
            pad,
            has_bias: b.is_some(),
        }),
    )
}

// ---- linear ----

struct LinearOp;
impl<T: Scalar> BackOp<T> for LinearOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let x = inputs[0].view().into_dimensionality::<Ix2>().unwrap();
        let w = inputs[1].view().into_dimensionality::<Ix2>().unwrap();
        let dy = grad.view().into_dimensionality::<Ix2>().unwrap();
        let dx = needs[0].then(|| dy.dot(&w).into_dyn());
        let dw = needs[1].then(|| dy.t().dot(&x).as_standard_layout().to_owned().into_dyn());
        let db = needs[2].then(|| dy.sum_axis(Axis(0)).into_dyn());
        vec![dx, dw, db]
    }
}

pub(crate) fn linear<T: Scalar>(g: &mut Graph<T>, x: Var, w: Var, b: Var) -> Var {
    let xv = g.value(x).view().into_dimensionality::<Ix2>().unwrap();
    let wv = g.value(w).view().into_dimensionality::<Ix2>().unwrap();
    let bv = g.value(b).view().into_dimensionality::<Ix1>().unwrap();
    let (_, f) = xv.dim();
    let (o, fw) = wv.dim();
    assert_eq!(f, fw, "linear: feature dimension mismatch");
    assert_eq!(bv.len(), o, "linear: bias length mismatch");
    let mut y = xv.dot(&wv.t());
    for mut row in y.rows_mut() {
        row += &bv;
    }
    g.push(y.into_dyn(), vec![x, w, b], Box::new(LinearOp))
}

// ---- instance normalization ----

struct InstanceNormOp<T> {
    eps: T,
}

impl<T: Scalar> BackOp<T> for InstanceNormOp<T> {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let x = inputs[0].view().into_dimensionality::<Ix4>().unwrap();
        let gamma = inputs[1].view().into_dimensionality::<Ix1>().unwrap();
        let dy = grad.view().into_dimensionality::<Ix4>().unwrap();
        let (n, c, h, w) = x.dim();
        let k = T::from_f64((h * w) as f64);

        let mut dx = needs[0].then(|| ArrayD::<T>::zeros(IxDyn(&[n, c, h, w])));
        let mut dgamma = needs[1].then(|| Array1::<T>::zeros(c));
        let mut dbeta = needs[2].then(|| Array1::<T>::zeros(c));

        for i in 0..n {
            for ci in 0..c {
                let xs = x.index_axis(Axis(0), i);
                let xs = xs.index_axis(Axis(0), ci);
                let dys = dy.index_axis(Axis(0), i);
                let dys = dys.index_axis(Axis(0), ci);
                let mean = xs.sum() / k;
                let var = xs.fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / k;
                let inv_std = T::one() / (var + self.eps).sqrt();

                if let Some(dbeta) = dbeta.as_mut() {
                    dbeta[ci] = dbeta[ci] + dys.sum();
                }
                if let Some(dgamma) = dgamma.as_mut() {
                    let mut acc = T::zero();
                    ndarray::Zip::from(&xs).and(&dys).for_each(|&xv, &gv| {
                        acc = acc + gv * (xv - mean) * inv_std;
                    });
                    dgamma[ci] = dgamma[ci] + acc;
                }
                if let Some(dx) = dx.as_mut() {
                    let gm = gamma[ci];
                    // dxhat = dy * gamma; dx = inv_std * (dxhat - mean(dxhat)
                    //        - xhat * mean(dxhat * xhat))
                    let mut sum_dxhat = T::zero();
                    let mut sum_dxhat_xhat = T::zero();
                    ndarray::Zip::from(&xs).and(&dys).for_each(|&xv, &gv| {
                        let xhat = (xv - mean) * inv_std;
                        let dxhat = gv * gm;
                        sum_dxhat = sum_dxhat + dxhat;
                        sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
                    });
                    let m1 = sum_dxhat / k;
                    let m2 = sum_dxhat_xhat / k;
                    let mut dx4 = dx.view_mut().into_dimensionality::<Ix4>().unwrap();
                    let mut dxs = dx4.index_axis_mut(Axis(0), i);
                    let mut dxs = dxs.index_axis_mut(Axis(0), ci);
                    ndarray::Zip::from(&mut dxs)
                        .and(&xs)
                        .and(&dys)
                        .for_each(|dv, &xv, &gv| {
                            let xhat = (xv - mean) * inv_std;
                            *dv = inv_std * (gv * gm - m1 - xhat * m2);
                        });
                }
            }
        }

        vec![
            dx,
            dgamma.map(|a| a.into_dyn()),
            dbeta.map(|a| a.into_dyn()),
        ]
    }
}

pub(crate) fn instance_norm<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    eps: T,
) -> Var {
    let xv = g.value(x).view().into_dimensionality::<Ix4>().unwrap();
    let gv = g.value(gamma).view().into_dimensionality::<Ix1>().unwrap();
    let bv = g.value(beta).view().into_dimensionality::<Ix1>().unwrap();
    let (n, c, h, w) = xv.dim();
    assert_eq!(gv.len(), c, "instance_norm: gamma length mismatch");
    assert_eq!(bv.len(), c, "instance_norm: beta length mismatch");
    let k = T::from_f64((h * w) as f64);

    let mut out = ArrayD::<T>::zeros(IxDyn(&[n, c, h, w]));
    {
        let mut o4 = out.view_mut().into_dimensionality::<Ix4>().unwrap();
        for i in 0..n {
            for ci in 0..c {
                let xs = xv.index_axis(Axis(0), i);
                let xs = xs.index_axis(Axis(0), ci);
                let mean = xs.sum() / k;
                let var = xs.fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / k;
                let inv_std = T::one() / (var + eps).sqrt();
                let (gm, bt) = (gv[ci], bv[ci]);
                let mut os = o4.index_axis_mut(Axis(0), i);
                let mut os = os.index_axis_mut(Axis(0), ci);
                ndarray::Zip::from(&mut os).and(&xs).for_each(|ov, &xv| {
                    *ov = gm * (xv - mean) * inv_std + bt;
                });
            }
        }
    }
    g.push(out, vec![x, gamma, beta], Box::new(InstanceNormOp { eps }))
}

// ---- resampling ----

struct UpsampleNearest2Op;
impl<T: Scalar> BackOp<T> for UpsampleNearest2Op {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let (n, c, h, w) = inputs[0].view().into_dimensionality::<Ix4>().unwrap().dim();
        let dy = grad.view().into_dimensionality::<Ix4>().unwrap();
        let mut dx = ndarray::Array4::<T>::zeros((n, c, h, w));
        for i in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let s = dy[[i, ci, 2 * y, 2 * x]]
                            + dy[[i, ci, 2 * y, 2 * x + 1]]
                            + dy[[i, ci, 2 * y + 1, 2 * x]]
                            + dy[[i, ci, 2 * y + 1, 2 * x + 1]];
                        dx[[i, ci, y, x]] = s;
                    }
                }
            }
        }
        vec![Some(dx.into_dyn())]
    }
}

pub(crate) fn upsample_nearest2<T: Scalar>(g: &mut Graph<T>, x: Var) -> Var {
    let xv = g.value(x).view().into_dimensionality::<Ix4>().unwrap();
    let (n, c, h, w) = xv.dim();
    let mut out = ndarray::Array4::<T>::zeros((n, c, 2 * h, 2 * w));
    for i in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let v = xv[[i, ci, y, xx]];
                    out[[i, ci, 2 * y, 2 * xx]] = v;
                    out[[i, ci, 2 * y, 2 * xx + 1]] = v;
                    out[[i, ci, 2 * y + 1, 2 * xx]] = v;
                    out[[i, ci, 2 * y + 1, 2 * xx + 1]] = v;
                }
            }
        }
    }
    g.push(out.into_dyn(), vec![x], Box::new(UpsampleNearest2Op))
}

/// Window `[lo, hi)` of adaptive pooling for output index `i` over `input`
/// cells mapped to `out` bins.
fn pool_window(i: usize, input: usize, out: usize) -> (usize, usize) {
    let lo = (i * input) / out;
    let hi = ((i + 1) * input).div_ceil(out);
    (lo, hi)
}

struct AdaptiveAvgPoolOp {
    out_h: usize,
    out_w: usize,
}
impl<T: Scalar> BackOp<T> for AdaptiveAvgPoolOp {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        _output: &ArrayD<T>,
        _needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>> {
        let (n, c, h, w) = inputs[0].view().into_dimensionality::<Ix4>().unwrap().dim();
        let dy = grad.view().into_dimensionality::<Ix4>().unwrap();
        let mut dx = ndarray::Array4::<T>::zeros((n, c, h, w));
        for oy in 0..self.out_h {
            let (y0, y1) = pool_window(oy, h, self.out_h);
            for ox in 0..self.out_w {
                let (x0, x1) = pool_window(ox, w, self.out_w);
                let inv = T::from_f64(1.0 / ((y1 - y0) * (x1 - x0)) as f64);
                for i in 0..n {
                    for ci in 0..c {
                        let gv = dy[[i, ci, oy, ox]] * inv;
                        for y in y0..y1 {
                            for x in x0..x1 {
                                dx[[i, ci, y, x]] = dx[[i, ci, y, x]] + gv;
                            }
                        }
                    }
                }
            }
        }
        vec![Some(dx.into_dyn())]
    }
}

pub(crate) fn adaptive_avg_pool<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    out_h: usize,
    out_w: usize,
) -> Var {
    assert!(out_h >= 1 && out_w >= 1, "adaptive_avg_pool: empty output");
    let xv = g.value(x).view().into_dimensionality::<Ix4>().unwrap();
    let (n, c, h, w) = xv.dim();
    if (h, w) == (out_h, out_w) {
        // Identity resize; still record a pass-through op for gradients.
        let value = xv.to_owned().into_dyn();
        return g.push(value, vec![x], Box::new(AddScalarOp));
    }
    let mut out = ndarray::Array4::<T>::zeros((n, c, out_h, out_w));
    for oy in 0..out_h {
        let (y0, y1) = pool_window(oy, h, out_h);
        for ox in 0..out_w {
            let (x0, x1) = pool_window(ox, w, out_w);
            let inv = T::from_f64(1.0 / ((y1 - y0) * (x1 - x0)) as f64);
            for i in 0..n {
                for ci in 0..c {
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        for xx in x0..x1 {
                            acc = acc + xv[[i, ci, y, xx]];
                        }
                    }
                    out[[i, ci, oy, ox]] = acc * inv;
                }
            }
        }
    }
    g.push(
        out.into_dyn(),
        vec![x],
        Box::new(AdaptiveAvgPoolOp { out_h, out_w }),
    )
}
