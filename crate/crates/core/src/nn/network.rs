use rand::Rng;

use super::layer::Cache;
use super::{Layer, LayerSpec, Scalar};
use crate::dataset::Shape;
use crate::error::{Error, Result};

/// Sequential stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input: Shape,
    layers: Vec<Layer<T>>,
}

/// Activations kept by [`Network::forward_train`] for the backward pass.
#[derive(Debug)]
pub struct Trace<T> {
    caches: Vec<Cache<T>>,
    batch: usize,
    pub output: Vec<T>,
}

/// Parameter gradients, one weight/bias buffer per layer (empty for
/// parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weight: Vec<Vec<T>>,
    pub bias: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn scale(&mut self, by: T) {
        for g in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            for v in g.iter_mut() {
                *v *= by;
            }
        }
    }
}

const INFER_CHUNK: usize = 256;

impl<T: Scalar> Network<T> {
    pub fn new<R: Rng>(input: Shape, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        for &spec in specs {
            let layer = Layer::new(spec, shape, rng)?;
            shape = layer.output;
            layers.push(layer);
        }
        Ok(Self { input, layers })
    }

    pub fn from_layers(input: Shape, layers: Vec<Layer<T>>) -> Result<Self> {
        let mut shape = input;
        for l in &layers {
            if l.input != shape {
                return Err(Error::shape(shape, l.input));
            }
            shape = l.output;
        }
        Ok(Self { input, layers })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().map_or(self.input, |l| l.output)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| &l.weight)
            .map(|w| w.as_f64() * w.as_f64())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[T], batch: usize) -> Result<()> {
        if x.len() != batch * self.input.len() {
            return Err(Error::shape(
                format!("{batch} x {}", self.input),
                format!("{} values", x.len()),
            ));
        }
        Ok(())
    }

    /// Inference over `batch` samples, processed in fixed-size chunks.
    pub fn forward(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(x, batch)?;
        let d_in = self.input.len();
        let mut out = Vec::with_capacity(batch * self.output_shape().len());
        for start in (0..batch).step_by(INFER_CHUNK) {
            let n = INFER_CHUNK.min(batch - start);
            let mut h = x[start * d_in..(start + n) * d_in].to_vec();
            for layer in &self.layers {
                h = layer.forward(&h, n, false).0;
            }
            out.extend_from_slice(&h);
        }
        Ok(out)
    }

    pub fn forward_train(&self, x: &[T], batch: usize) -> Result<Trace<T>> {
        self.check_input(x, batch)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let (out, cache) = layer.forward(&h, batch, true);
            caches.push(cache);
            h = out;
        }
        Ok(Trace {
            caches,
            batch,
            output: h,
        })
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients {
            weight: self.layers.iter().map(|l| vec![T::zero(); l.weight.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![T::zero(); l.bias.len()]).collect(),
        }
    }

    /// Backpropagate `dout` (gradient w.r.t. the network output). Returns the
    /// parameter gradients and, if requested, the gradient w.r.t. the input.
    pub fn backward(&self, trace: &Trace<T>, dout: &[T], need_input_grad: bool) -> (Gradients<T>, Option<Vec<T>>) {
        let mut grads = self.zero_grads();
        let mut d = dout.to_vec();
        let n = self.layers.len();
        for i in (0..n).rev() {
            let need = i > 0 || need_input_grad;
            let (gw, gb) = (&mut grads.weight[i], &mut grads.bias[i]);
            match self.layers[i].backward(&d, &trace.caches[i], trace.batch, gw, gb, need) {
                Some(dx) => d = dx,
                None => return (grads, None),
            }
        }
        (grads, need_input_grad.then_some(d))
    }

    /// All parameters flattened in declaration order (weights then bias per layer).
    pub fn params_flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = it.next().unwrap();
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input: self.input,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec,
                    input: l.input,
                    output: l.output,
                    weight: l.weight.iter().map(|v| U::of(v.as_f64())).collect(),
                    bias: l.bias.iter().map(|v| U::of(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

impl<T: Scalar> Gradients<T> {
    pub fn flat(&self) -> Vec<T> {
        self.weight
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn shapes_propagate() {
        let mut rng = crate::rng::stream(0);
        let net: Network<f32> = Network::new(
            Shape::new(28, 28, 1),
            &[
                LayerSpec::Conv2d { filters: 4, kernel: 3 },
                LayerSpec::Activation(Activation::Relu),
                LayerSpec::MaxPool2d,
                LayerSpec::Conv2d { filters: 2, kernel: 3 },
                LayerSpec::MaxPool2d,
                LayerSpec::Dense { outputs: 3 },
            ],
            &mut rng,
        )
        .unwrap();
        assert_eq!(net.output_shape(), Shape::new(1, 1, 3));
        assert_eq!(net.param_count(), 9 * 4 + 4 + 9 * 4 * 2 + 2 + 7 * 7 * 2 * 3 + 3);
        let x = vec![0.5f32; 3 * 784];
        let y = net.forward(&x, 3).unwrap();
        assert_eq!(y.len(), 9);
        assert!(net.forward(&x[1..], 3).is_err());
        let t = net.forward_train(&x, 3).unwrap();
        assert_eq!(t.output, y);
    }

    #[test]
    fn chunked_inference_matches_single_pass() {
        let mut rng = crate::rng::stream(1);
        let net: Network<f64> = Network::new(
            Shape::new(1, 1, 3),
            &[LayerSpec::Dense { outputs: 2 }, LayerSpec::Activation(Activation::Sigmoid)],
            &mut rng,
        )
        .unwrap();
        let n = INFER_CHUNK * 2 + 7;
        let x: Vec<f64> = (0..n * 3).map(|i| (i as f64).cos()).collect();
        let all = net.forward(&x, n).unwrap();
        let one = net.forward(&x[3 * 300..3 * 301], 1).unwrap();
        assert_eq!(&all[600..602], &one[..]);
    }

    #[test]
    fn flat_param_roundtrip() {
        let mut rng = crate::rng::stream(2);
        let mut net: Network<f64> =
            Network::new(Shape::new(1, 1, 3), &[LayerSpec::Dense { outputs: 2 }], &mut rng).unwrap();
        let p: Vec<f64> = (0..8).map(|i| i as f64).collect();
        net.set_params_flat(&p);
        assert_eq!(net.params_flat(), p);
        assert_eq!(net.weight_sq_norm(), (0..6).map(|i| (i * i) as f64).sum::<f64>());
    }
}
