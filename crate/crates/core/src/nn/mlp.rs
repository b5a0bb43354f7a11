use rand::Rng;
use serde::{Deserialize, Serialize};

use super::real::{matmul, Mat, Real};
use super::NnError;
use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Relu,
    Elu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Elu => "elu",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Activation::Sigmoid, Activation::Relu, Activation::Elu]
            .into_iter()
            .find(|a| a.name() == s)
    }

    #[inline]
    fn apply<T: Real>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => T::one() / (T::one() + (-y).exp()),
            Activation::Relu => y.max(T::zero()),
            Activation::Elu => {
                if y > T::zero() {
                    y
                } else {
                    y.exp_m1()
                }
            }
        }
    }

    /// Derivative given the pre-activation `y` and the output `a`.
    #[inline]
    fn derivative<T: Real>(self, y: T, a: T) -> T {
        match self {
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Elu => {
                if y > T::zero() {
                    T::one()
                } else {
                    a + T::one()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slots {
    inputs: usize,
    outputs: usize,
    w: usize,
    b: usize,
    /// Offsets of the batch-norm scale and shift; hidden layers only.
    gamma: usize,
    beta: usize,
}

fn layout(sizes: &[usize]) -> (Vec<Slots>, usize) {
    let layers = sizes.len() - 1;
    let mut at = 0;
    let mut slots = Vec::with_capacity(layers);
    for l in 0..layers {
        let (inputs, outputs) = (sizes[l], sizes[l + 1]);
        let w = at;
        let b = w + inputs * outputs;
        at = b + outputs;
        let (gamma, beta) = if l + 1 < layers {
            at += 2 * outputs;
            (b + outputs, b + 2 * outputs)
        } else {
            (at, at)
        };
        slots.push(Slots {
            inputs,
            outputs,
            w,
            b,
            gamma,
            beta,
        });
    }
    (slots, at)
}

/// Fully connected network. Hidden layers apply affine, batch normalization
/// and the activation in that order; the output layer is affine only.
///
/// All trainable parameters live in one flat vector. Per layer it holds the
/// weights (`inputs x outputs`, row-major), the biases and, for hidden
/// layers, the batch-norm scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<T>,
    running_mean: Vec<Vec<T>>,
    running_var: Vec<Vec<T>>,
    bn_eps: f64,
    bn_momentum: f64,
    slots: Vec<Slots>,
}

/// Intermediate values of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub batch: usize,
    xhat: Vec<Vec<T>>,
    inv_std: Vec<Vec<T>>,
    mean: Vec<Vec<T>>,
    var: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    act: Vec<Vec<T>>,
    pub output: Vec<T>,
}

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;

fn column_sums<T: Real>(m: &[T], cols: usize) -> Vec<T> {
    let mut s = vec![T::zero(); cols];
    for row in m.chunks_exact(cols) {
        for (acc, v) in s.iter_mut().zip(row) {
            *acc = *acc + *v;
        }
    }
    s
}

impl<T: Real> Mlp<T> {
    fn with_params(sizes: &[usize], activation: Activation, params: Vec<T>) -> Self {
        let (slots, _) = layout(sizes);
        let hidden = &sizes[1..sizes.len() - 1];
        Self {
            sizes: sizes.to_vec(),
            activation,
            params,
            running_mean: hidden.iter().map(|n| vec![T::zero(); *n]).collect(),
            running_var: hidden.iter().map(|n| vec![T::one(); *n]).collect(),
            bn_eps: DEFAULT_BN_EPS,
            bn_momentum: DEFAULT_BN_MOMENTUM,
            slots,
        }
    }

    fn check_sizes(sizes: &[usize]) -> Result<(), NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::InvalidArchitecture);
        }
        Ok(())
    }

    /// All weights, biases and batch-norm shifts zero; batch-norm scales one.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self, NnError> {
        Self::check_sizes(sizes)?;
        let (slots, n) = layout(sizes);
        let mut params = vec![T::zero(); n];
        for s in &slots[..slots.len() - 1] {
            params[s.gamma..s.gamma + s.outputs].fill(T::one());
        }
        Ok(Self::with_params(sizes, activation, params))
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self, NnError> {
        let mut m = Self::zeros(sizes, activation)?;
        for l in 0..m.slots.len() {
            let s = m.slots[l];
            let limit = (6.0 / (s.inputs + s.outputs) as f64).sqrt();
            for w in &mut m.params[s.w..s.b] {
                *w = T::of(rng.random_range(-limit..limit));
            }
        }
        Ok(m)
    }

    /// Rebuild from stored parts, checking every length and value.
    pub fn from_parts(
        sizes: &[usize],
        activation: Activation,
        params: Vec<T>,
        running_mean: Vec<Vec<T>>,
        running_var: Vec<Vec<T>>,
        bn_eps: f64,
        bn_momentum: f64,
    ) -> Result<Self, NnError> {
        Self::check_sizes(sizes)?;
        let (_, n) = layout(sizes);
        let hidden = &sizes[1..sizes.len() - 1];
        let shape_ok = params.len() == n
            && running_mean.len() == hidden.len()
            && running_var.len() == hidden.len()
            && hidden
                .iter()
                .zip(running_mean.iter().zip(&running_var))
                .all(|(h, (m, v))| m.len() == *h && v.len() == *h);
        if !shape_ok {
            return Err(NnError::InvalidArchitecture);
        }
        let finite = params.iter().chain(running_mean.iter().flatten()).all(|v| v.is_finite());
        let var_ok = running_var.iter().flatten().all(|v| v.is_finite() && *v > T::zero());
        if !finite || !var_ok || !(bn_eps > 0.0) || !(0.0..1.0).contains(&bn_momentum) {
            return Err(NnError::InvalidParameters);
        }
        let mut m = Self::with_params(sizes, activation, params);
        m.running_mean = running_mean;
        m.running_var = running_var;
        m.bn_eps = bn_eps;
        m.bn_momentum = bn_momentum;
        Ok(m)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn layers(&self) -> usize {
        self.slots.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn running_mean(&self) -> &[Vec<T>] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[Vec<T>] {
        &self.running_var
    }

    pub fn bn_eps(&self) -> f64 {
        self.bn_eps
    }

    pub fn bn_momentum(&self) -> f64 {
        self.bn_momentum
    }

    pub fn set_bn_momentum(&mut self, m: f64) {
        self.bn_momentum = m;
    }

    pub fn weights(&self, layer: usize) -> &[T] {
        let s = self.slots[layer];
        &self.params[s.w..s.b]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [T] {
        let s = self.slots[layer];
        &mut self.params[s.w..s.b]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [T] {
        let s = self.slots[layer];
        &mut self.params[s.b..s.b + s.outputs]
    }

    /// Batch-norm scale and shift of a hidden layer.
    pub fn norm_mut(&mut self, layer: usize) -> (&mut [T], &mut [T]) {
        assert!(layer + 1 < self.slots.len(), "output layer has no batch norm");
        let s = self.slots[layer];
        let (g, rest) = self.params[s.gamma..s.beta + s.outputs].split_at_mut(s.outputs);
        (g, rest)
    }

    pub fn running_stats_mut(&mut self, layer: usize) -> (&mut [T], &mut [T]) {
        (&mut self.running_mean[layer], &mut self.running_var[layer])
    }

    /// Index ranges of the weight matrices inside the flat parameter vector.
    pub fn weight_ranges(&self) -> impl Iterator<Item = core::ops::Range<usize>> + '_ {
        self.slots.iter().map(|s| s.w..s.b)
    }

    /// Sum of absolute weights (biases and batch-norm parameters excluded).
    pub fn weight_l1(&self) -> f64 {
        self.weight_ranges()
            .flat_map(|r| self.params[r].iter())
            .map(|w| w.abs().as_f64())
            .sum()
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        Mlp {
            sizes: self.sizes.clone(),
            activation: self.activation,
            params: conv(&self.params),
            running_mean: self.running_mean.iter().map(|v| conv(v)).collect(),
            running_var: self.running_var.iter().map(|v| conv(v)).collect(),
            bn_eps: self.bn_eps,
            bn_momentum: self.bn_momentum,
            slots: self.slots.clone(),
        }
    }

    fn check_input(&self, x: &[T], rows: usize) -> Result<(), NnError> {
        let n = self.inputs();
        if x.len() != rows * n {
            return Err(NnError::ShapeMismatch {
                expected: rows * n,
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteFeature { row: i / n, index: i % n });
        }
        Ok(())
    }

    /// Training-mode forward pass using the batch statistics.
    pub fn forward_train(&self, x: &[T], batch: usize) -> Result<ForwardCache<T>, NnError> {
        if batch < 2 {
            return Err(NnError::BatchTooSmall(batch));
        }
        self.check_input(x, batch)?;
        let layers = self.slots.len();
        let inv_n = T::of(1.0 / batch as f64);
        let eps = T::of(self.bn_eps);
        let mut cache = ForwardCache {
            batch,
            xhat: Vec::with_capacity(layers - 1),
            inv_std: Vec::with_capacity(layers - 1),
            mean: Vec::with_capacity(layers - 1),
            var: Vec::with_capacity(layers - 1),
            pre: Vec::with_capacity(layers - 1),
            act: Vec::with_capacity(layers - 1),
            output: Vec::new(),
        };
        for (l, s) in self.slots.iter().enumerate() {
            let h = if l == 0 { x } else { &cache.act[l - 1] };
            let mut z = vec![T::zero(); batch * s.outputs];
            let w = &self.params[s.w..s.b];
            matmul(Mat::new(h, batch, s.inputs), Mat::new(w, s.inputs, s.outputs), T::zero(), &mut z);
            let bias = &self.params[s.b..s.b + s.outputs];
            for row in z.chunks_exact_mut(s.outputs) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v = *v + *b;
                }
            }
            if l + 1 == layers {
                cache.output = z;
                break;
            }
            let mean: Vec<T> = column_sums(&z, s.outputs).into_iter().map(|v| v * inv_n).collect();
            let mut var = vec![T::zero(); s.outputs];
            for row in z.chunks_exact(s.outputs) {
                for j in 0..s.outputs {
                    let d = row[j] - mean[j];
                    var[j] = var[j] + d * d;
                }
            }
            for v in &mut var {
                *v = *v * inv_n;
            }
            let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
            let gamma = &self.params[s.gamma..s.gamma + s.outputs];
            let beta = &self.params[s.beta..s.beta + s.outputs];
            let mut xhat = z;
            let mut pre = vec![T::zero(); batch * s.outputs];
            let mut act = vec![T::zero(); batch * s.outputs];
            for r in 0..batch {
                for j in 0..s.outputs {
                    let k = r * s.outputs + j;
                    xhat[k] = (xhat[k] - mean[j]) * inv_std[j];
                    pre[k] = gamma[j] * xhat[k] + beta[j];
                    act[k] = self.activation.apply(pre[k]);
                }
            }
            cache.xhat.push(xhat);
            cache.inv_std.push(inv_std);
            cache.mean.push(mean);
            cache.var.push(var);
            cache.pre.push(pre);
            cache.act.push(act);
        }
        Ok(cache)
    }

    /// Gradient of a loss with respect to every parameter, given the
    /// derivative of that loss with respect to the network output.
    pub fn backward(&self, x: &[T], cache: &ForwardCache<T>, d_out: &[T]) -> Vec<T> {
        let n = cache.batch;
        let layers = self.slots.len();
        let mut grad = vec![T::zero(); self.params.len()];
        let mut dh: Vec<T> = d_out.to_vec();
        let n_t = T::of(n as f64);
        let inv_n = T::of(1.0 / n as f64);
        for l in (0..layers).rev() {
            let s = self.slots[l];
            let dz = if l + 1 == layers {
                dh
            } else {
                let (xhat, pre, act) = (&cache.xhat[l], &cache.pre[l], &cache.act[l]);
                let mut dy = dh;
                for k in 0..dy.len() {
                    dy[k] = dy[k] * self.activation.derivative(pre[k], act[k]);
                }
                let mut dgamma = vec![T::zero(); s.outputs];
                let mut dbeta = vec![T::zero(); s.outputs];
                for r in 0..n {
                    for j in 0..s.outputs {
                        let k = r * s.outputs + j;
                        dgamma[j] = dgamma[j] + dy[k] * xhat[k];
                        dbeta[j] = dbeta[j] + dy[k];
                    }
                }
                let gamma = &self.params[s.gamma..s.gamma + s.outputs];
                let inv_std = &cache.inv_std[l];
                // with dxhat = dy * gamma: sum(dxhat) = gamma * dbeta and
                // sum(dxhat * xhat) = gamma * dgamma
                let mut dz = dy;
                for r in 0..n {
                    for j in 0..s.outputs {
                        let k = r * s.outputs + j;
                        let dxhat = dz[k] * gamma[j];
                        dz[k] = inv_std[j]
                            * inv_n
                            * (n_t * dxhat - gamma[j] * dbeta[j] - xhat[k] * gamma[j] * dgamma[j]);
                    }
                }
                grad[s.gamma..s.gamma + s.outputs].copy_from_slice(&dgamma);
                grad[s.beta..s.beta + s.outputs].copy_from_slice(&dbeta);
                dz
            };
            let h = if l == 0 { x } else { &cache.act[l - 1] };
            matmul(
                Mat::new(h, n, s.inputs).t(),
                Mat::new(&dz, n, s.outputs),
                T::zero(),
                &mut grad[s.w..s.b],
            );
            let db = column_sums(&dz, s.outputs);
            grad[s.b..s.b + s.outputs].copy_from_slice(&db);
            dh = if l > 0 {
                let mut d = vec![T::zero(); n * s.inputs];
                let w = &self.params[s.w..s.b];
                matmul(Mat::new(&dz, n, s.outputs), Mat::new(w, s.inputs, s.outputs).t(), T::zero(), &mut d);
                d
            } else {
                Vec::new()
            };
        }
        grad
    }

    /// Fold the batch statistics of a training pass into the running ones.
    /// The running variance uses the unbiased batch variance.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>) {
        let m = T::of(self.bn_momentum);
        let keep = T::one() - m;
        let unbias = T::of(cache.batch as f64 / (cache.batch as f64 - 1.0));
        for l in 0..self.running_mean.len() {
            for j in 0..self.running_mean[l].len() {
                self.running_mean[l][j] = m * self.running_mean[l][j] + keep * cache.mean[l][j];
                self.running_var[l][j] = m * self.running_var[l][j] + keep * cache.var[l][j] * unbias;
            }
        }
    }

    /// Mean squared error plus `l1` times the summed absolute weights, and
    /// its gradient. Training-mode statistics; running stats are untouched.
    pub fn loss_and_gradient(&self, x: &[T], y: &[T], batch: usize, l1: f64) -> Result<(f64, Vec<T>), NnError> {
        let cache = self.forward_train(x, batch)?;
        let (data_loss, d_out) = mse(&cache.output, y)?;
        let mut grad = self.backward(x, &cache, &d_out);
        let l1_t = T::of(l1);
        let mut penalty = 0.0;
        for r in self.weight_ranges().collect::<Vec<_>>() {
            for k in r {
                let w = self.params[k];
                penalty += w.abs().as_f64();
                grad[k] = grad[k] + l1_t * sign(w);
            }
        }
        Ok((data_loss + l1 * penalty, grad))
    }

    /// Inference with the running statistics. Each output row depends only
    /// on its own input row, with the same arithmetic for any batch.
    pub fn predict(&self, x: &[T], rows: usize) -> Result<Vec<T>, NnError> {
        self.check_input(x, rows)?;
        let layers = self.slots.len();
        // per hidden layer: y = scale * z + shift
        let folded: Vec<(Vec<T>, Vec<T>)> = (0..layers - 1)
            .map(|l| {
                let s = self.slots[l];
                let eps = T::of(self.bn_eps);
                let gamma = &self.params[s.gamma..s.gamma + s.outputs];
                let beta = &self.params[s.beta..s.beta + s.outputs];
                let scale: Vec<T> = (0..s.outputs)
                    .map(|j| gamma[j] / (self.running_var[l][j] + eps).sqrt())
                    .collect();
                let shift = (0..s.outputs).map(|j| beta[j] - scale[j] * self.running_mean[l][j]).collect();
                (scale, shift)
            })
            .collect();
        const BLOCK: usize = 8;
        let n_in = self.inputs();
        let n_out = self.outputs();
        let mut out = vec![T::zero(); rows * n_out];
        let mut h = Vec::new();
        let mut z = Vec::new();
        for (bi, xb) in x.chunks(BLOCK * n_in).enumerate() {
            let br = xb.len() / n_in;
            h.clear();
            h.extend_from_slice(xb);
            for (l, s) in self.slots.iter().enumerate() {
                let w = &self.params[s.w..s.b];
                let bias = &self.params[s.b..s.b + s.outputs];
                z.clear();
                for _ in 0..br {
                    z.extend_from_slice(bias);
                }
                for i in 0..s.inputs {
                    let wrow = &w[i * s.outputs..(i + 1) * s.outputs];
                    for r in 0..br {
                        let hv = h[r * s.inputs + i];
                        let zr = &mut z[r * s.outputs..(r + 1) * s.outputs];
                        for (acc, wv) in zr.iter_mut().zip(wrow) {
                            *acc = *acc + hv * *wv;
                        }
                    }
                }
                if l + 1 < layers {
                    let (scale, shift) = &folded[l];
                    for row in z.chunks_exact_mut(s.outputs) {
                        for j in 0..s.outputs {
                            row[j] = self.activation.apply(scale[j] * row[j] + shift[j]);
                        }
                    }
                    core::mem::swap(&mut h, &mut z);
                }
            }
            out[bi * BLOCK * n_out..(bi * BLOCK + br) * n_out].copy_from_slice(&z);
        }
        Ok(out)
    }
}

#[inline]
pub(super) fn sign<T: Real>(w: T) -> T {
    if w > T::zero() {
        T::one()
    } else if w < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Mean over all elements of the squared difference, and its gradient.
pub fn mse<T: Real>(out: &[T], target: &[T]) -> Result<(f64, Vec<T>), NnError> {
    if out.len() != target.len() || out.is_empty() {
        return Err(NnError::ShapeMismatch {
            expected: out.len(),
            got: target.len(),
        });
    }
    let inv = 1.0 / out.len() as f64;
    let two_inv = T::of(2.0 * inv);
    let mut loss = 0.0;
    let grad = out
        .iter()
        .zip(target)
        .map(|(o, t)| {
            let d = *o - *t;
            loss += d.as_f64() * d.as_f64();
            two_inv * d
        })
        .collect();
    Ok((loss * inv, grad))
}
