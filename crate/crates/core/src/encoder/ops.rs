//! Dense building blocks with explicit backward passes. Matrices are
//! row-major `(rows, features)`; weights are `(in, out)`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::params::LayerNormParams;

pub(crate) fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub(crate) fn linear_backward(
    x: &Array2<f64>,
    dy: &Array2<f64>,
    w: &Array2<f64>,
    gw: &mut Array2<f64>,
    gb: &mut Array1<f64>,
) -> Array2<f64> {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), dy, 1.0, gw);
    *gb += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

pub(crate) struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(
    x: &Array2<f64>,
    p: &LayerNormParams,
    eps: f64,
) -> (Array2<f64>, LayerNormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, istd) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *istd = 1.0 / (var + eps).sqrt();
        row *= *istd;
    }
    let mut y = &xhat * &p.gamma;
    y += &p.beta;
    (y, LayerNormCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LayerNormCache,
    p: &LayerNormParams,
    grad: &mut LayerNormParams,
) -> Array2<f64> {
    grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    grad.beta += &dy.sum_axis(Axis(0));
    let n = dy.ncols() as f64;
    let mut dx = dy * &p.gamma;
    for ((mut row, xhat), &istd) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / n;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
        Zip::from(&mut row).and(&xhat).for_each(|d, &xh| {
            *d = istd * (*d - mean_d - xh * mean_dx);
        });
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub(crate) fn gelu(u: &Array2<f64>) -> Array2<f64> {
    u.mapv(|x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()))
}

pub(crate) fn gelu_backward(u: &Array2<f64>, dg: &Array2<f64>) -> Array2<f64> {
    let mut du = dg.clone();
    Zip::from(&mut du).and(u).for_each(|d, &x| {
        let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
        *d *= 0.5 * (1.0 + t) + 0.5 * x * dt;
    });
    du
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Multi-head self-attention over packed rows. Sample `b` occupies rows
/// `offsets[b]..offsets[b + 1]` and attends only within itself.
pub(crate) fn attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    offsets: &[usize],
    heads: usize,
) -> (Array2<f64>, Vec<Array2<f64>>) {
    let width = q.ncols();
    let dh = width / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array2::zeros(q.raw_dim());
    let mut probs = Vec::with_capacity((offsets.len() - 1) * heads);
    for w in offsets.windows(2) {
        let (r0, r1) = (w[0], w[1]);
        for h in 0..heads {
            let (c0, c1) = (h * dh, (h + 1) * dh);
            let qh = q.slice(s![r0..r1, c0..c1]);
            let kh = k.slice(s![r0..r1, c0..c1]);
            let vh = v.slice(s![r0..r1, c0..c1]);
            let mut p = qh.dot(&kh.t());
            p *= scale;
            softmax_rows(&mut p);
            out.slice_mut(s![r0..r1, c0..c1]).assign(&p.dot(&vh));
            probs.push(p);
        }
    }
    (out, probs)
}

pub(crate) struct AttentionGrads {
    pub dq: Array2<f64>,
    pub dk: Array2<f64>,
    pub dv: Array2<f64>,
}

pub(crate) fn attention_backward(
    dout: &Array2<f64>,
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    probs: &[Array2<f64>],
    offsets: &[usize],
    heads: usize,
) -> AttentionGrads {
    let width = q.ncols();
    let dh = width / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros(q.raw_dim());
    let mut dk = Array2::zeros(k.raw_dim());
    let mut dv = Array2::zeros(v.raw_dim());
    let mut p_iter = probs.iter();
    for w in offsets.windows(2) {
        let (r0, r1) = (w[0], w[1]);
        for h in 0..heads {
            let (c0, c1) = (h * dh, (h + 1) * dh);
            let p = p_iter.next().expect("one probability matrix per sample and head");
            let d_o: ArrayView2<f64> = dout.slice(s![r0..r1, c0..c1]);
            let qh = q.slice(s![r0..r1, c0..c1]);
            let kh = k.slice(s![r0..r1, c0..c1]);
            let vh = v.slice(s![r0..r1, c0..c1]);
            dv.slice_mut(s![r0..r1, c0..c1]).assign(&p.t().dot(&d_o));
            let dp = d_o.dot(&vh.t());
            // softmax Jacobian: ds = p * (dp - rowsum(dp * p))
            let mut ds = &dp * p;
            let row_dot = ds.sum_axis(Axis(1));
            for ((mut row, pr), r) in ds.rows_mut().into_iter().zip(p.rows()).zip(row_dot.iter()) {
                Zip::from(&mut row).and(&pr).for_each(|d, &pv| *d -= pv * r);
            }
            ds *= scale;
            dq.slice_mut(s![r0..r1, c0..c1]).assign(&ds.dot(&kh));
            dk.slice_mut(s![r0..r1, c0..c1]).assign(&ds.t().dot(&qh));
        }
    }
    AttentionGrads { dq, dk, dv }
}
