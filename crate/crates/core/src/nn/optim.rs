use super::{Gradients, Network, Scalar};

/// Parameter update rule. L2 weight decay is applied to weights (not
/// biases) as `grad += decay * w`, i.e. it is part of the loss.
pub trait Optimizer<T: Scalar> {
    fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>);
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    t: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) {
        if self.m.is_empty() {
            for l in net.layers() {
                for n in [l.weight.len(), l.bias.len()] {
                    self.m.push(vec![T::zero(); n]);
                    self.v.push(vec![T::zero(); n]);
                }
            }
        }
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        // fold both bias corrections into the step size
        let step = T::of(self.learning_rate * c2.sqrt() / c1);
        let eps = T::of(self.epsilon * c2.sqrt());
        let decay = T::of(self.weight_decay);
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            let params: [(&mut Vec<T>, &Vec<T>, T); 2] = [
                (&mut layer.weight, &grads.weight[li], decay),
                (&mut layer.bias, &grads.bias[li], T::zero()),
            ];
            for (k, (p, g, wd)) in params.into_iter().enumerate() {
                let m = &mut self.m[2 * li + k];
                let v = &mut self.v[2 * li + k];
                for i in 0..p.len() {
                    let gi = g[i] + wd * p[i];
                    m[i] = b1 * m[i] + (T::one() - b1) * gi;
                    v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                    p[i] -= step * m[i] / (v[i].sqrt() + eps);
                }
            }
        }
    }
}

/// Plain (optionally momentum) stochastic gradient descent.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }
}

impl<T: Scalar> Optimizer<T> for Sgd<T> {
    fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) {
        if self.velocity.is_empty() {
            for l in net.layers() {
                self.velocity.push(vec![T::zero(); l.weight.len()]);
                self.velocity.push(vec![T::zero(); l.bias.len()]);
            }
        }
        let lr = T::of(self.learning_rate);
        let mu = T::of(self.momentum);
        let decay = T::of(self.weight_decay);
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            let params: [(&mut Vec<T>, &Vec<T>, T); 2] = [
                (&mut layer.weight, &grads.weight[li], decay),
                (&mut layer.bias, &grads.bias[li], T::zero()),
            ];
            for (k, (p, g, wd)) in params.into_iter().enumerate() {
                let vel = &mut self.velocity[2 * li + k];
                for i in 0..p.len() {
                    let gi = g[i] + wd * p[i];
                    vel[i] = mu * vel[i] + gi;
                    p[i] -= lr * vel[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Shape;
    use crate::nn::LayerSpec;

    fn one_weight(w: f64) -> Network<f64> {
        let mut rng = crate::rng::stream(0);
        let mut net = Network::new(Shape::new(1, 1, 1), &[LayerSpec::Dense { outputs: 1 }], &mut rng).unwrap();
        net.set_params_flat(&[w, 0.0]);
        net
    }

    #[test]
    fn adam_first_step_is_learning_rate_sized() {
        let mut net = one_weight(1.0);
        let mut g = net.zero_grads();
        g.weight[0][0] = 0.3;
        let mut opt = Adam::new(0.01, 0.0);
        opt.step(&mut net, &g);
        // bias-corrected first step moves by ~lr against the gradient sign
        assert!((net.params_flat()[0] - 0.99).abs() < 1e-6);
    }

    #[test]
    fn sgd_weight_decay_only_touches_weights() {
        let mut net = one_weight(2.0);
        net.set_params_flat(&[2.0, 5.0]);
        let g = net.zero_grads();
        let mut opt = Sgd::new(0.1, 0.0, 0.5);
        opt.step(&mut net, &g);
        assert_eq!(net.params_flat(), vec![2.0 - 0.1 * 0.5 * 2.0, 5.0]);
    }
}
