use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully-connected network with ReLU hidden layers and a linear output.
///
/// Parameters are stored flat, layer by layer: the `[out x in]` weight
/// matrix in row-major order followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Fan-in uniform weights `U(-1/sqrt(in), 1/sqrt(in))`, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub(crate) fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && params.len() == param_count(&sizes)).then_some(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Set the final layer's weights and biases to zero.
    pub fn zero_output_layer(&mut self) {
        let n = self.sizes.len();
        let (fan_in, fan_out) = (self.sizes[n - 2], self.sizes[n - 1]);
        let len = self.params.len();
        self.params[len - (fan_in * fan_out + fan_out)..].fill(0.0);
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.activations(input).pop().unwrap()
    }

    /// Layer outputs, starting with the input itself.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(input.len(), self.sizes[0]);
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let x = &acts[l];
            let mut out = biases.to_vec();
            for (o, row) in out.iter_mut().zip(weights.chunks_exact(fan_in)) {
                *o += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            }
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
            offset += fan_in * fan_out + fan_out;
        }
        acts
    }

    /// Add `d(grad_out . f(input)) / d params` into `grads`.
    pub fn accumulate_grad(&self, input: &[f64], grad_out: &[f64], grads: &mut [f64]) {
        let acts = self.activations(input);
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &acts[l];
            {
                let (gw, gb) = grads[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, xi) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[off..off + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * w;
                }
            }
            // ReLU gate on the previous layer's output
            for (p, a) in prev.iter_mut().zip(x) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}
