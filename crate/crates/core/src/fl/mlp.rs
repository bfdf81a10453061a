//! Fully connected ReLU network with a softmax cross-entropy head.
//!
//! Parameters are one flat vector; each layer stores its weight matrix
//! (`inputs x outputs`, row-major) followed by its bias.

use num_traits::Float;
use rand::Rng;

use super::FlError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    dims: Vec<usize>,
}

impl Mlp {
    /// `dims` lists the input width, any hidden widths, and the class count.
    pub fn new(dims: Vec<usize>) -> Result<Self, FlError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(FlError::Architecture(format!("layer widths must be positive and at least two, got {dims:?}")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.dims.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.param_count());
        for w in self.dims.windows(2) {
            let bound = 1.0 / (w[0] as f32).sqrt();
            out.extend((0..w[0] * w[1]).map(|_| rng.random_range(-bound..=bound)));
            out.extend(std::iter::repeat_n(0.0, w[1]));
        }
        out
    }

    /// Activations of every layer for one input; the last entry holds logits.
    fn forward_all<T: Float>(&self, params: &[T], x: &[T]) -> Vec<Vec<T>> {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let last = self.dims.len() - 2;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let input = &acts[l];
            let mut z = bias.to_vec();
            for (i, &xi) in input.iter().enumerate() {
                if xi == T::zero() {
                    continue;
                }
                let row = &weights[i * n_out..(i + 1) * n_out];
                for (zo, &wo) in z.iter_mut().zip(row) {
                    *zo = *zo + xi * wo;
                }
            }
            if l < last {
                for v in z.iter_mut() {
                    *v = v.max(T::zero());
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits<T: Float>(&self, params: &[T], x: &[T]) -> Vec<T> {
        self.forward_all(params, x).pop().expect("output layer")
    }

    /// Mean cross-entropy over the batch and its gradient. `xs` is row-major
    /// with one input per row.
    pub fn loss_and_grad<T: Float>(&self, params: &[T], xs: &[T], ys: &[usize]) -> (T, Vec<T>) {
        let n_in = self.input_dim();
        let batch = ys.len();
        let scale = T::one() / T::from(batch).expect("batch size fits");
        let mut grad = vec![T::zero(); params.len()];
        let mut loss = T::zero();
        let offsets: Vec<usize> = self
            .dims
            .windows(2)
            .scan(0, |off, w| {
                let start = *off;
                *off += w[0] * w[1] + w[1];
                Some(start)
            })
            .collect();
        for (s, &y) in ys.iter().enumerate() {
            let acts = self.forward_all(params, &xs[s * n_in..(s + 1) * n_in]);
            let logits = acts.last().expect("output layer");
            let (lse, probs) = log_softmax_parts(logits);
            loss = loss + (lse - logits[y]) * scale;
            // dL/dz for the output layer
            let mut delta: Vec<T> = probs.iter().map(|&p| p * scale).collect();
            delta[y] = delta[y] - scale;
            for l in (0..self.dims.len() - 1).rev() {
                let (n_i, n_o) = (self.dims[l], self.dims[l + 1]);
                let off = offsets[l];
                let input = &acts[l];
                for (i, &xi) in input.iter().enumerate() {
                    if xi == T::zero() {
                        continue;
                    }
                    let g = &mut grad[off + i * n_o..off + (i + 1) * n_o];
                    for (gv, &d) in g.iter_mut().zip(&delta) {
                        *gv = *gv + xi * d;
                    }
                }
                let gb = &mut grad[off + n_i * n_o..off + n_i * n_o + n_o];
                for (gv, &d) in gb.iter_mut().zip(&delta) {
                    *gv = *gv + d;
                }
                if l == 0 {
                    break;
                }
                let weights = &params[off..off + n_i * n_o];
                delta = (0..n_i)
                    .map(|i| {
                        if input[i] <= T::zero() {
                            // ReLU gate; hidden activations are never negative
                            return T::zero();
                        }
                        let row = &weights[i * n_o..(i + 1) * n_o];
                        row.iter().zip(&delta).fold(T::zero(), |acc, (&w, &d)| acc + w * d)
                    })
                    .collect();
            }
        }
        (loss, grad)
    }
}

/// Returns log-sum-exp and the softmax probabilities.
fn log_softmax_parts<T: Float>(logits: &[T]) -> (T, Vec<T>) {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    (max + sum.ln(), exps.into_iter().map(|e| e / sum).collect())
}

/// Cross-entropy of one sample.
pub fn cross_entropy<T: Float>(logits: &[T], y: usize) -> T {
    log_softmax_parts(logits).0 - logits[y]
}
