//! Fully connected ReLU networks with a hand-written reverse pass.
//!
//! Weights of layer `l` are stored row-major as `fan_in x fan_out`, so a
//! batch forward pass is one GEMM `X * W` per layer.

use crate::real::Real;
use crate::rng::SimRng;

use super::NetError;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub fan_in: usize,
    pub fan_out: usize,
    /// `fan_in x fan_out`, row-major.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Layer<T> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { fan_in, fan_out, weights: vec![T::zero(); fan_in * fan_out], bias: vec![T::zero(); fan_out] }
    }
}

/// How the last layer is initialized; hidden layers always use
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutputInit {
    FanIn,
    /// `U(-bound, bound)` for weights and biases.
    Uniform(f64),
}

/// Multilayer perceptron: ReLU on every hidden layer, linear output.
#[derive(Clone, Debug)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    /// Bumped on every parameter mutation so stale caches can be detected.
    generation: u64,
}

/// Activations retained by [`Mlp::forward`] for the reverse pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    batch: usize,
    generation: u64,
    shapes: Vec<(usize, usize)>,
    /// `activations[0]` is the input, the last entry the output.
    activations: Vec<Vec<T>>,
}

impl<T: Real> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network output, `batch x output_dim`.
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("non-empty cache")
    }

    pub fn input(&self) -> &[T] {
        &self.activations[0]
    }
}

/// Parameter gradients, shaped like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> MlpGrads<T> {
    /// Flat views in declaration order (`w0, b0, w1, b1, ...`).
    pub fn slices(&self) -> impl Iterator<Item = &[T]> {
        self.layers.iter().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|x| *x = *x * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Result of a reverse pass.
#[derive(Clone, Debug)]
pub struct Backward<T> {
    pub grads: Option<MlpGrads<T>>,
    /// Gradient with respect to the input, `batch x input_dim`.
    pub input_grad: Option<Vec<T>>,
}

impl<T: PartialEq> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl<T: Real> Mlp<T> {
    /// All-zero network with layer widths `sizes` (input first, output last).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and an output width");
        assert!(sizes.iter().all(|&s| s > 0), "layer widths must be positive");
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self { layers, generation: 0 }
    }

    pub fn init(sizes: &[usize], output: OutputInit, rng: &mut SimRng) -> Self {
        let mut net = Self::zeros(sizes);
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let bound = match (i == last, output) {
                (true, OutputInit::Uniform(b)) => b,
                _ => 1.0 / (layer.fan_in as f64).sqrt(),
            };
            for x in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *x = T::lit(rng.uniform_range(-bound, bound));
            }
        }
        net
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Shape("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.fan_in * l.fan_out || l.bias.len() != l.fan_out {
                return Err(NetError::Shape(format!("layer {i} buffers do not match {}x{}", l.fan_in, l.fan_out)));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out != pair[1].fan_in {
                return Err(NetError::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].fan_out,
                    i + 1,
                    pair[1].fan_in
                )));
            }
        }
        Ok(Self { layers, generation: 0 })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.fan_in, l.fan_out)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// Flat views in declaration order (`w0, b0, w1, b1, ...`).
    pub fn slices(&self) -> impl Iterator<Item = &[T]> {
        self.layers.iter().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    /// Mutable flat views; invalidates existing caches.
    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.generation += 1;
        self.layers.iter_mut().flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    /// Forward pass on `batch` rows of `input` (row-major).
    pub fn forward(&self, input: &[T], batch: usize) -> Result<ForwardCache<T>, NetError> {
        if batch == 0 {
            return Err(NetError::EmptyBatch);
        }
        let in_dim = self.input_dim();
        if input.len() != batch * in_dim {
            return Err(NetError::Shape(format!(
                "input has {} values, expected {batch} x {in_dim}",
                input.len()
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = activations.last().expect("input pushed");
            let (k, n) = (layer.fan_in, layer.fan_out);
            let mut z = Vec::with_capacity(batch * n);
            for _ in 0..batch {
                z.extend_from_slice(&layer.bias);
            }
            T::gemm(batch, k, n, T::one(), x, (k as isize, 1), &layer.weights, (n as isize, 1), T::one(), &mut z, (n as isize, 1));
            if i != last {
                z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            activations.push(z);
        }
        Ok(ForwardCache { batch, generation: self.generation, shapes: self.shapes(), activations })
    }

    /// Convenience forward pass returning only the output.
    pub fn predict(&self, input: &[T], batch: usize) -> Result<Vec<T>, NetError> {
        Ok(self.forward(input, batch)?.activations.pop().expect("output"))
    }

    /// Reverse pass for a scalar loss whose gradient with respect to the
    /// output is `grad_out` (`batch x output_dim`).
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_out: &[T],
        want_params: bool,
        want_input: bool,
    ) -> Result<Backward<T>, NetError> {
        if cache.generation != self.generation || cache.shapes != self.shapes() {
            return Err(NetError::StaleCache);
        }
        let batch = cache.batch;
        if grad_out.len() != batch * self.output_dim() {
            return Err(NetError::Shape(format!(
                "output gradient has {} values, expected {batch} x {}",
                grad_out.len(),
                self.output_dim()
            )));
        }
        let mut grads = want_params.then(|| MlpGrads {
            layers: self.layers.iter().map(|l| Layer::zeros(l.fan_in, l.fan_out)).collect(),
        });
        let mut g = grad_out.to_vec();
        let mut input_grad = None;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.activations[i];
            let (k, n) = (layer.fan_in, layer.fan_out);
            if let Some(grads) = grads.as_mut() {
                let gl = &mut grads.layers[i];
                // dW = X^T * G
                T::gemm(k, batch, n, T::one(), x, (1, k as isize), &g, (n as isize, 1), T::zero(), &mut gl.weights, (n as isize, 1));
                for row in g.chunks_exact(n) {
                    for (b, v) in gl.bias.iter_mut().zip(row) {
                        *b = *b + *v;
                    }
                }
            }
            if i == 0 && !want_input {
                break;
            }
            // dX = G * W^T
            let mut dx = vec![T::zero(); batch * k];
            T::gemm(batch, n, k, T::one(), &g, (n as isize, 1), &layer.weights, (1, n as isize), T::zero(), &mut dx, (k as isize, 1));
            if i == 0 {
                input_grad = Some(dx);
                break;
            }
            // Hidden activations are post-ReLU, so x > 0 marks the active units.
            for (d, a) in dx.iter_mut().zip(x) {
                if *a <= T::zero() {
                    *d = T::zero();
                }
            }
            g = dx;
        }
        Ok(Backward { grads, input_grad })
    }

    /// `self <- (1 - tau) * self + tau * online`.
    pub fn polyak_update(&mut self, online: &Mlp<T>, tau: T) -> Result<(), NetError> {
        if self.shapes() != online.shapes() {
            return Err(NetError::Shape("target and online networks differ in shape".into()));
        }
        let keep = T::one() - tau;
        for (dst, src) in self.slices_mut().zip(online.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = keep * *d + tau * *s;
            }
        }
        Ok(())
    }

    pub fn copy_from(&mut self, other: &Mlp<T>) -> Result<(), NetError> {
        self.polyak_update(other, T::one())
    }
}
