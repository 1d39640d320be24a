use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{dot, norm, EmbeddingMatrix, NORM_EPS};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x` and the activation value `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected network whose output is L2-normalized.
///
/// The activation follows every layer except the last. Parameters are stored
/// in one flat vector, layer by layer: the `out × in` weight matrix (row-major)
/// followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEncoder {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input to each layer; `inputs[0]` is the raw input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    /// L2-normalized output.
    pub output: Vec<f64>,
    /// Norm of the raw output before normalization.
    pub raw_norm: f64,
    /// Set when the raw output had (near-)zero norm and was not normalized.
    pub degenerate: bool,
}

fn param_count_for(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl QueryEncoder {
    /// Uniform fan-in init `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        if sizes.contains(&0) {
            return Err(Error::BadDimension(format!("layer sizes must be >= 1, got {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count_for(&sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1] + w[1]).map(|_| rng.random_range(-bound..=bound)));
        }
        Ok(Self { sizes, activation, params })
    }

    pub fn from_params(sizes: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::BadDimension(format!("invalid layer sizes {sizes:?}")));
        }
        check_len(param_count_for(&sizes), params.len())?;
        Ok(Self { sizes, activation, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn checksum(&self) -> u64 {
        crate::embed::checksum_f64(&self.params)
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.sizes.windows(2).scan(0, |off, w| {
            let start = *off;
            *off += w[0] * w[1] + w[1];
            Some((start, w[0], w[1]))
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        check_len(self.input_dim(), x.len())?;
        let layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut current = x.to_vec();
        for (l, (off, n_in, n_out)) in self.layer_offsets().enumerate() {
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let z: Vec<f64> = (0..n_out).map(|o| dot(&w[o * n_in..(o + 1) * n_in], &current) + b[o]).collect();
            let next = if l + 1 < layers { z.iter().map(|&v| self.activation.apply(v)).collect() } else { z.clone() };
            inputs.push(std::mem::replace(&mut current, next));
            pre.push(z);
        }
        let raw_norm = norm(&current);
        let degenerate = raw_norm < NORM_EPS;
        let output = if degenerate { current } else { current.iter().map(|v| v / raw_norm).collect() };
        Ok(ForwardPass { inputs, pre, output, raw_norm, degenerate })
    }

    /// Normalized embedding of `x`.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.output)
    }

    /// Embeds every row; rows with a degenerate output are rejected.
    pub fn embed_matrix(&self, raw: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        check_len(self.input_dim(), raw.dim())?;
        let rows = crate::parallel::map_indexed(raw.rows(), |i| self.forward(raw.row(i)));
        let mut data = Vec::with_capacity(raw.rows() * self.output_dim());
        for (i, pass) in rows.into_iter().enumerate() {
            let pass = pass?;
            if pass.degenerate {
                return Err(Error::DegenerateRow(i));
            }
            data.extend(pass.output);
        }
        EmbeddingMatrix::new_normalized(raw.rows(), self.output_dim(), data)
    }

    /// Accumulates `d loss / d params` into `grad_params`, given `d loss / d output`
    /// for the normalized output of `pass`.
    pub fn backward(&self, pass: &ForwardPass, grad_output: &[f64], grad_params: &mut [f64]) {
        debug_assert_eq!(grad_params.len(), self.params.len());
        if pass.degenerate {
            return;
        }
        let radial = dot(&pass.output, grad_output);
        let mut delta: Vec<f64> =
            pass.output.iter().zip(grad_output).map(|(y, g)| (g - y * radial) / pass.raw_norm).collect();
        let offsets: Vec<_> = self.layer_offsets().collect();
        let layers = offsets.len();
        for l in (0..layers).rev() {
            let (off, n_in, n_out) = offsets[l];
            if l + 1 < layers {
                // delta arrives as d/d(activation output); move it to the pre-activation
                let y = &pass.inputs[l + 1];
                for ((d, &z), &a) in delta.iter_mut().zip(&pass.pre[l]).zip(y) {
                    *d *= self.activation.derivative(z, a);
                }
            }
            let input = &pass.inputs[l];
            let (gw, gb) = grad_params[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                gb[o] += d;
                for (g, x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wv;
                    }
                }
                delta = prev;
            }
        }
    }
}
