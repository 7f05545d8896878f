//! Fully connected layers over a flat parameter vector.
//!
//! Each layer occupies `outputs × inputs` row-major weights followed by
//! `outputs` biases. Networks are a list of layer shapes; parameters and
//! gradients share the same flat layout, so optimizers and finite-difference
//! checks can treat them as plain slices.

use serde::{Deserialize, Serialize};

use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseShape {
    pub inputs: usize,
    pub outputs: usize,
}

impl DenseShape {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs }
    }

    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.outputs
    }
}

/// Offsets of each layer inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub shapes: Vec<DenseShape>,
    pub offsets: Vec<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(shapes: Vec<DenseShape>) -> Self {
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut total = 0;
        for s in &shapes {
            offsets.push(total);
            total += s.param_len();
        }
        Self {
            shapes,
            offsets,
            total,
        }
    }

    pub fn split<'a>(&self, params: &'a [f64], layer: usize) -> (&'a [f64], &'a [f64]) {
        let s = self.shapes[layer];
        let start = self.offsets[layer];
        let (w, rest) = params[start..start + s.param_len()].split_at(s.weight_len());
        (w, rest)
    }

    pub fn split_mut<'a>(
        &self,
        params: &'a mut [f64],
        layer: usize,
    ) -> (&'a mut [f64], &'a mut [f64]) {
        let s = self.shapes[layer];
        let start = self.offsets[layer];
        params[start..start + s.param_len()].split_at_mut(s.weight_len())
    }

    /// Gaussian init with std `sqrt(gain / fan_in)`; biases zero.
    pub fn init(&self, rng: &mut Rng, gains: &[f64]) -> Vec<f64> {
        let mut params = vec![0.0; self.total];
        for (layer, s) in self.shapes.iter().enumerate() {
            let std = (gains[layer] / s.inputs as f64).sqrt();
            let (w, _) = self.split_mut(&mut params, layer);
            for v in w.iter_mut() {
                *v = std * rng::standard_normal(rng);
            }
        }
        params
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row-major activations of a batch: one vector per example.
pub(crate) type Batch = Vec<Vec<f64>>;

/// `out_e = W x_e + b` for every example. Each weight row is read once per
/// batch.
pub(crate) fn forward(shape: DenseShape, w: &[f64], b: &[f64], xs: &[Vec<f64>]) -> Batch {
    let mut out: Batch = (0..xs.len()).map(|_| Vec::with_capacity(shape.outputs)).collect();
    for (row, bias) in w.chunks_exact(shape.inputs).zip(b) {
        for (o, x) in out.iter_mut().zip(xs) {
            debug_assert_eq!(x.len(), shape.inputs);
            o.push(bias + dot(row, x));
        }
    }
    out
}

/// Accumulates `∂L/∂W`, `∂L/∂b` over the batch for upstream gradients `dys`
/// and optionally returns `∂L/∂x_e`.
pub(crate) fn backward(
    shape: DenseShape,
    w: &[f64],
    xs: &[Vec<f64>],
    dys: &[Vec<f64>],
    gw: &mut [f64],
    gb: &mut [f64],
    want_dx: bool,
) -> Option<Batch> {
    let mut dx = want_dx.then(|| vec![vec![0.0; shape.inputs]; xs.len()]);
    for o in 0..shape.outputs {
        let row = o * shape.inputs..(o + 1) * shape.inputs;
        for (e, x) in xs.iter().enumerate() {
            let d = dys[e][o];
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            axpy(d, x, &mut gw[row.clone()]);
            if let Some(dx) = dx.as_mut() {
                axpy(d, &w[row.clone()], &mut dx[e]);
            }
        }
    }
    dx
}

pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries where the activation was clipped.
pub(crate) fn relu_backward(activated: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Stack of dense layers with ReLU between them; the last layer is linear
/// unless `relu_last`. Returns every layer input plus the final output,
/// indexed `[layer][example]`.
pub(crate) fn mlp_forward(
    layout: &Layout,
    layers: std::ops::Range<usize>,
    params: &[f64],
    xs: &[Vec<f64>],
    relu_last: bool,
) -> Vec<Batch> {
    let last = if relu_last { usize::MAX } else { layers.end - 1 };
    let mut acts = vec![xs.to_vec()];
    for l in layers {
        let (w, b) = layout.split(params, l);
        let mut y = forward(layout.shapes[l], w, b, acts.last().unwrap());
        if l != last {
            y.iter_mut().for_each(|v| relu_in_place(v));
        }
        acts.push(y);
    }
    acts
}

/// Backward pass through [`mlp_forward`]. `acts` is its return value and
/// `dout` the gradient at the final output (already masked by the last ReLU
/// when one was applied). Returns the input gradients when requested.
pub(crate) fn mlp_backward(
    layout: &Layout,
    layers: std::ops::Range<usize>,
    params: &[f64],
    acts: &[Batch],
    dout: Batch,
    grads: &mut [f64],
    want_dx: bool,
) -> Option<Batch> {
    let first = layers.start;
    let mut d = dout;
    for (k, l) in layers.clone().enumerate().rev() {
        let (w, _) = layout.split(params, l);
        let (gw, gb) = layout.split_mut(grads, l);
        let need_dx = l != first || want_dx;
        let dx = backward(layout.shapes[l], w, &acts[k], &d, gw, gb, need_dx);
        match dx {
            Some(mut dx) if l != first => {
                for (g, a) in dx.iter_mut().zip(&acts[k]) {
                    relu_backward(a, g);
                }
                d = dx;
            }
            other => return other,
        }
    }
    None
}
