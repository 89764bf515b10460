//! Fully connected ReLU network `S(x, c) = W_L σ(... σ(W_1 [x; c]))` with
//! a scalar output and no bias terms.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major `rows x cols` weight matrix mapping `cols` inputs to `rows`
/// outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<T>,
}

impl<T: Real> Layer<T> {
    pub fn new(rows: usize, cols: usize, weights: Vec<T>) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, actual: weights.len() });
        }
        Ok(Layer { rows, cols, weights })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer { rows, cols, weights: vec![T::zero(); rows * cols] }
    }

    fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let std = (2.0 / cols as f64).sqrt();
        let weights = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::of(z * std)
            })
            .collect();
        Layer { rows, cols, weights }
    }

    pub(crate) fn dot_row(&self, row: usize, input: &[T]) -> T {
        self.weights[row * self.cols..(row + 1) * self.cols].iter().zip(input).fold(T::zero(), |acc, (&w, &x)| acc + w * x)
    }

    fn apply(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.cols).map(|row| {
            row.iter().zip(input).fold(T::zero(), |acc, (&w, &x)| acc + w * x)
        }));
    }

    /// Largest singular value by power iteration on `W^T W`.
    pub fn spectral_norm(&self, iterations: usize, tolerance: f64) -> T {
        if self.weights.is_empty() {
            return T::zero();
        }
        let mut v: Vec<f64> = (0..self.cols).map(|i| 1.0 + 1e-3 * i as f64).collect();
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let n0 = norm(&v);
        v.iter_mut().for_each(|a| *a /= n0);
        let w: Vec<f64> = self.weights.iter().map(|x| x.f64()).collect();
        let mut sigma = 0.0;
        let mut wv = vec![0.0; self.rows];
        for _ in 0..iterations {
            for (r, out) in wv.iter_mut().enumerate() {
                *out = (0..self.cols).map(|c| w[r * self.cols + c] * v[c]).sum();
            }
            let next_sigma = norm(&wv);
            let mut u = vec![0.0; self.cols];
            for (r, &y) in wv.iter().enumerate() {
                for (c, acc) in u.iter_mut().enumerate() {
                    *acc += w[r * self.cols + c] * y;
                }
            }
            let nu = norm(&u);
            if nu == 0.0 {
                return T::zero();
            }
            u.iter_mut().for_each(|a| *a /= nu);
            v = u;
            let done = (next_sigma - sigma).abs() <= tolerance * next_sigma.max(1.0);
            sigma = next_sigma;
            if done {
                break;
            }
        }
        T::of(sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardNet<T> {
    layers: Vec<Layer<T>>,
}

/// Activations kept from a forward pass for backpropagation.
struct Trace<T> {
    /// `inputs[l]` is the input of layer `l`.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Vec<T>>,
    output: T,
}

impl<T: Real> RewardNet<T> {
    /// Gaussian-initialized network `input_dim -> hidden... -> 1`.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(1);
        let layers = dims.windows(2).map(|w| Layer::gaussian(w[1], w[0], rng)).collect();
        RewardNet { layers }
    }

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        RewardNet { layers: dims.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect() }
    }

    /// Assembles a network from explicit layers; shapes must chain and the
    /// last layer must have a single output.
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        };
        if last.rows != 1 {
            return Err(Error::DimensionMismatch { expected: 1, actual: last.rows });
        }
        for w in layers.windows(2) {
            if w[1].cols != w[0].rows {
                return Err(Error::DimensionMismatch { expected: w[0].rows, actual: w[1].cols });
            }
        }
        Ok(RewardNet { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Input width, including the capacity scalar.
    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    /// Parameters flattened layer by layer, row-major within each layer.
    pub fn params(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.weights.iter().copied()).collect()
    }

    pub fn set_params(&mut self, theta: &[T]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), actual: theta.len() });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&theta[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Offset of layer `i`'s first parameter in the flattened vector.
    pub fn layer_offset(&self, i: usize) -> usize {
        self.layers[..i].iter().map(|l| l.weights.len()).sum()
    }

    pub fn squared_norm(&self) -> T {
        self.layers.iter().flat_map(|l| l.weights.iter()).map(|&w| w * w).sum()
    }

    fn assemble(&self, context: &[T], capacity: T) -> Result<Vec<T>> {
        let expected = self.input_dim() - 1;
        if context.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: context.len() });
        }
        let mut x = Vec::with_capacity(context.len() + 1);
        x.extend_from_slice(context);
        x.push(capacity);
        Ok(x)
    }

    fn trace(&self, input: Vec<T>) -> Trace<T> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut cur = input;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.rows);
            layer.apply(&cur, &mut z);
            inputs.push(cur);
            if i == last {
                return Trace { inputs, pre, output: z[0] };
            }
            cur = z.iter().map(|&v| v.max(T::zero())).collect();
            pre.push(z);
        }
        unreachable!("network has at least one layer")
    }

    /// `S(x, c)` where `capacity` is already on the network's input scale.
    pub fn forward(&self, context: &[T], capacity: T) -> Result<T> {
        Ok(self.trace(self.assemble(context, capacity)?).output)
    }

    /// Input of the output layer, i.e. the last hidden activations.
    pub fn last_layer_input(&self, context: &[T], capacity: T) -> Result<Vec<T>> {
        let mut t = self.trace(self.assemble(context, capacity)?);
        Ok(t.inputs.pop().expect("network has at least one layer"))
    }

    pub(crate) fn last_layer_mut(&mut self) -> &mut Layer<T> {
        self.layers.last_mut().expect("network has at least one layer")
    }

    /// `∇_θ S(x, c)` in the order of [`params`](Self::params).
    pub fn gradient(&self, context: &[T], capacity: T) -> Result<Vec<T>> {
        Ok(self.value_and_gradient(context, capacity)?.1)
    }

    pub fn value_and_gradient(&self, context: &[T], capacity: T) -> Result<(T, Vec<T>)> {
        let t = self.trace(self.assemble(context, capacity)?);
        let mut grad = vec![T::zero(); self.param_count()];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.weights.len();
        }

        // delta holds dS/dz for the current layer's outputs
        let mut delta = vec![T::one()];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &t.inputs[l];
            let g = &mut grad[offsets[l]..offsets[l] + layer.weights.len()];
            for (r, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                for (c, &x) in input.iter().enumerate() {
                    g[r * layer.cols + c] = d * x;
                }
            }
            if l == 0 {
                break;
            }
            let z = &t.pre[l - 1];
            let mut next = vec![T::zero(); layer.cols];
            for (r, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                for (acc, &w) in next.iter_mut().zip(row) {
                    *acc = *acc + w * d;
                }
            }
            for (acc, &zi) in next.iter_mut().zip(z) {
                if zi <= T::zero() {
                    *acc = T::zero();
                }
            }
            delta = next;
        }
        Ok((t.output, grad))
    }

    /// Maximum spectral norm over layers.
    pub fn max_singular_value(&self) -> T {
        self.layers
            .iter()
            .map(|l| l.spectral_norm(50, 1e-9))
            .fold(T::zero(), |a, b| a.max(b))
    }
}
