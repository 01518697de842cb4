use rand::Rng;

use super::Scalar;
use crate::dataset::Shape;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub(crate) fn tag(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub(crate) fn from_tag(t: u32) -> Result<Self> {
        match t {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Sigmoid),
            _ => Err(Error::Format(format!("unknown activation tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Fully connected over the flattened input.
    Dense { outputs: usize },
    /// Stride-1 convolution with zero "same" padding; `kernel` must be odd.
    Conv2d { filters: usize, kernel: usize },
    /// 2x2 window, stride 2, floor on odd sizes.
    MaxPool2d,
    /// Nearest-neighbour resize to an explicit spatial size.
    Upsample2d { height: usize, width: usize },
    /// Reinterpret the (channels-last) buffer with a new shape of equal size.
    Reshape { height: usize, width: usize, channels: usize },
    Activation(Activation),
}

impl LayerSpec {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Dense { outputs } if outputs > 0 => Ok(Shape::new(1, 1, outputs)),
            LayerSpec::Conv2d { filters, kernel } if filters > 0 && kernel % 2 == 1 => {
                Ok(Shape::new(input.height, input.width, filters))
            }
            LayerSpec::MaxPool2d if input.height >= 2 && input.width >= 2 => {
                Ok(Shape::new(input.height / 2, input.width / 2, input.channels))
            }
            LayerSpec::Upsample2d { height, width } if height >= input.height && width >= input.width => {
                Ok(Shape::new(height, width, input.channels))
            }
            LayerSpec::Reshape { height, width, channels } if height * width * channels == input.len() => {
                Ok(Shape::new(height, width, channels))
            }
            LayerSpec::Activation(_) => Ok(input),
            spec => Err(Error::invalid(format!("layer {spec:?} cannot follow input {input}"))),
        }
    }

    /// (weight count, bias count)
    pub fn param_counts(&self, input: Shape) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { outputs } => (input.len() * outputs, outputs),
            LayerSpec::Conv2d { filters, kernel } => (kernel * kernel * input.channels * filters, filters),
            _ => (0, 0),
        }
    }

    fn fan_in(&self, input: Shape) -> usize {
        match *self {
            LayerSpec::Dense { .. } => input.len(),
            LayerSpec::Conv2d { kernel, .. } => kernel * kernel * input.channels,
            _ => 0,
        }
    }
}

/// One layer with its parameters. Dense weights are `inputs × outputs`,
/// convolution weights `(ky, kx, c_in) × filters`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Per-layer state kept by a training forward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache<T> {
    Input(Vec<T>),
    Cols(Vec<T>),
    Argmax(Vec<u32>),
    Output(Vec<T>),
    None,
}

impl<T: Scalar> Layer<T> {
    /// Uniform in `±sqrt(6 / fan_in)`, zero biases.
    pub fn new<R: Rng>(spec: LayerSpec, input: Shape, rng: &mut R) -> Result<Self> {
        let output = spec.output_shape(input)?;
        let (nw, nb) = spec.param_counts(input);
        let bound = if nw > 0 { (6.0 / spec.fan_in(input) as f64).sqrt() } else { 0.0 };
        let weight = (0..nw)
            .map(|_| T::of((rng.random::<f64>() * 2.0 - 1.0) * bound))
            .collect();
        Ok(Self {
            spec,
            input,
            output,
            weight,
            bias: vec![T::zero(); nb],
        })
    }

    pub fn with_params(spec: LayerSpec, input: Shape, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        let output = spec.output_shape(input)?;
        let (nw, nb) = spec.param_counts(input);
        if weight.len() != nw || bias.len() != nb {
            return Err(Error::shape(format!("{nw}+{nb} parameters"), format!("{}+{}", weight.len(), bias.len())));
        }
        Ok(Self {
            spec,
            input,
            output,
            weight,
            bias,
        })
    }

    pub fn has_params(&self) -> bool {
        !self.weight.is_empty()
    }

    pub(crate) fn forward(&self, x: &[T], batch: usize, keep: bool) -> (Vec<T>, Cache<T>) {
        match self.spec {
            LayerSpec::Dense { outputs } => {
                let n_in = self.input.len();
                let mut out = Vec::with_capacity(batch * outputs);
                for _ in 0..batch {
                    out.extend_from_slice(&self.bias);
                }
                T::gemm(batch, n_in, outputs, x, false, &self.weight, false, &mut out, true);
                (out, if keep { Cache::Input(x.to_vec()) } else { Cache::None })
            }
            LayerSpec::Conv2d { filters, kernel } => {
                let positions = self.input.height * self.input.width;
                let kkc = kernel * kernel * self.input.channels;
                let mut cols = vec![T::zero(); batch * positions * kkc];
                im2col(x, batch, self.input, kernel, &mut cols);
                let mut out = Vec::with_capacity(batch * positions * filters);
                for _ in 0..batch * positions {
                    out.extend_from_slice(&self.bias);
                }
                T::gemm(batch * positions, kkc, filters, &cols, false, &self.weight, false, &mut out, true);
                (out, if keep { Cache::Cols(cols) } else { Cache::None })
            }
            LayerSpec::MaxPool2d => {
                let (out, arg) = maxpool(x, batch, self.input, self.output);
                (out, if keep { Cache::Argmax(arg) } else { Cache::None })
            }
            LayerSpec::Upsample2d { .. } => (upsample(x, batch, self.input, self.output), Cache::None),
            LayerSpec::Reshape { .. } => (x.to_vec(), Cache::None),
            LayerSpec::Activation(act) => {
                let out: Vec<T> = match act {
                    Activation::Identity => x.to_vec(),
                    Activation::Relu => x.iter().map(|&v| v.max(T::zero())).collect(),
                    Activation::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
                };
                let cache = if keep { Cache::Output(out.clone()) } else { Cache::None };
                (out, cache)
            }
        }
    }

    /// Accumulates parameter gradients into `gw`/`gb` and returns the input
    /// gradient when `need_input_grad`.
    pub(crate) fn backward(
        &self,
        dout: &[T],
        cache: &Cache<T>,
        batch: usize,
        gw: &mut [T],
        gb: &mut [T],
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        match (self.spec, cache) {
            (LayerSpec::Dense { outputs }, Cache::Input(x)) => {
                let n_in = self.input.len();
                T::gemm(n_in, batch, outputs, x, true, dout, false, gw, true);
                for row in dout.chunks_exact(outputs) {
                    for (g, &d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
                need_input_grad.then(|| {
                    let mut dx = vec![T::zero(); batch * n_in];
                    T::gemm(batch, outputs, n_in, dout, false, &self.weight, true, &mut dx, false);
                    dx
                })
            }
            (LayerSpec::Conv2d { filters, kernel }, Cache::Cols(cols)) => {
                let rows = batch * self.input.height * self.input.width;
                let kkc = kernel * kernel * self.input.channels;
                T::gemm(kkc, rows, filters, cols, true, dout, false, gw, true);
                for row in dout.chunks_exact(filters) {
                    for (g, &d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
                need_input_grad.then(|| {
                    let mut dcols = vec![T::zero(); rows * kkc];
                    T::gemm(rows, filters, kkc, dout, false, &self.weight, true, &mut dcols, false);
                    let mut dx = vec![T::zero(); batch * self.input.len()];
                    col2im(&dcols, batch, self.input, kernel, &mut dx);
                    dx
                })
            }
            (LayerSpec::MaxPool2d, Cache::Argmax(arg)) => need_input_grad.then(|| {
                let mut dx = vec![T::zero(); batch * self.input.len()];
                for (&d, &a) in dout.iter().zip(arg) {
                    dx[a as usize] += d;
                }
                dx
            }),
            (LayerSpec::Upsample2d { .. }, _) => need_input_grad.then(|| upsample_backward(dout, batch, self.input, self.output)),
            (LayerSpec::Reshape { .. }, _) => need_input_grad.then(|| dout.to_vec()),
            (LayerSpec::Activation(act), Cache::Output(y)) => need_input_grad.then(|| match act {
                Activation::Identity => dout.to_vec(),
                Activation::Relu => dout
                    .iter()
                    .zip(y)
                    .map(|(&d, &o)| if o > T::zero() { d } else { T::zero() })
                    .collect(),
                Activation::Sigmoid => dout.iter().zip(y).map(|(&d, &o)| d * o * (T::one() - o)).collect(),
            }),
            (spec, _) => panic!("backward through {spec:?} without its forward cache"),
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn im2col<T: Scalar>(x: &[T], batch: usize, s: Shape, k: usize, cols: &mut [T]) {
    let pad = (k / 2) as isize;
    let c = s.channels;
    let kkc = k * k * c;
    let (h, w) = (s.height as isize, s.width as isize);
    let mut row_start = 0;
    for b in 0..batch {
        let img = &x[b * s.len()..(b + 1) * s.len()];
        for y in 0..h {
            for xx in 0..w {
                let row = &mut cols[row_start..row_start + kkc];
                for ky in 0..k as isize {
                    let iy = y + ky - pad;
                    for kx in 0..k as isize {
                        let ix = xx + kx - pad;
                        let dst = &mut row[((ky as usize) * k + kx as usize) * c..][..c];
                        if iy >= 0 && iy < h && ix >= 0 && ix < w {
                            let src = ((iy * w + ix) as usize) * c;
                            dst.copy_from_slice(&img[src..src + c]);
                        }
                    }
                }
                row_start += kkc;
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], batch: usize, s: Shape, k: usize, dx: &mut [T]) {
    let pad = (k / 2) as isize;
    let c = s.channels;
    let kkc = k * k * c;
    let (h, w) = (s.height as isize, s.width as isize);
    let mut row_start = 0;
    for b in 0..batch {
        let img = &mut dx[b * s.len()..(b + 1) * s.len()];
        for y in 0..h {
            for xx in 0..w {
                let row = &cols[row_start..row_start + kkc];
                for ky in 0..k as isize {
                    let iy = y + ky - pad;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    for kx in 0..k as isize {
                        let ix = xx + kx - pad;
                        if ix < 0 || ix >= w {
                            continue;
                        }
                        let src = &row[((ky as usize) * k + kx as usize) * c..][..c];
                        let dst = &mut img[((iy * w + ix) as usize) * c..][..c];
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
                row_start += kkc;
            }
        }
    }
}

fn maxpool<T: Scalar>(x: &[T], batch: usize, i: Shape, o: Shape) -> (Vec<T>, Vec<u32>) {
    let c = i.channels;
    let mut out = Vec::with_capacity(batch * o.len());
    let mut arg = Vec::with_capacity(batch * o.len());
    for b in 0..batch {
        let base = b * i.len();
        for oy in 0..o.height {
            for ox in 0..o.width {
                for ch in 0..c {
                    let mut best = base + ((2 * oy) * i.width + 2 * ox) * c + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + ((2 * oy + dy) * i.width + 2 * ox + dx) * c + ch;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    arg.push(best as u32);
                }
            }
        }
    }
    (out, arg)
}

fn upsample<T: Scalar>(x: &[T], batch: usize, i: Shape, o: Shape) -> Vec<T> {
    let c = i.channels;
    let mut out = Vec::with_capacity(batch * o.len());
    for b in 0..batch {
        let img = &x[b * i.len()..(b + 1) * i.len()];
        for y in 0..o.height {
            let sy = y * i.height / o.height;
            for xx in 0..o.width {
                let sx = xx * i.width / o.width;
                out.extend_from_slice(&img[(sy * i.width + sx) * c..][..c]);
            }
        }
    }
    out
}

fn upsample_backward<T: Scalar>(dout: &[T], batch: usize, i: Shape, o: Shape) -> Vec<T> {
    let c = i.channels;
    let mut dx = vec![T::zero(); batch * i.len()];
    for b in 0..batch {
        let src = &dout[b * o.len()..(b + 1) * o.len()];
        let dst = &mut dx[b * i.len()..(b + 1) * i.len()];
        for y in 0..o.height {
            let sy = y * i.height / o.height;
            for xx in 0..o.width {
                let sx = xx * i.width / o.width;
                let g = &src[(y * o.width + xx) * c..][..c];
                for (d, &v) in dst[(sy * i.width + sx) * c..][..c].iter_mut().zip(g) {
                    *d += v;
                }
            }
        }
    }
    dx
}
