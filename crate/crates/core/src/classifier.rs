//! Final binary classifier trained on the labeled positives against the
//! mined negatives.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::dataset::{ImageSet, Shape};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Gradients, LayerSpec, Network, Optimizer, Sgd};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierArch {
    /// Conv 3x3 + ReLU + 2x2 max-pool per entry, then the dense head.
    Conv { filters: Vec<usize>, hidden: usize },
    /// Dense + ReLU per entry, then a single output.
    Dense { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierTraining {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Stop once the best epoch loss has not improved by `min_delta` for
    /// this many epochs.
    pub patience: usize,
    pub min_delta: f64,
}

/// Network producing one logit per input; probabilities come from a
/// sigmoid evaluated in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryClassifier {
    pub network: Network<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassifierReport {
    /// Mean binary cross-entropy per epoch.
    pub losses: Vec<f64>,
    pub stopped_early: bool,
    pub seconds: f64,
}

pub fn classifier_layers(arch: &ClassifierArch) -> Vec<LayerSpec> {
    let mut l = Vec::new();
    match arch {
        ClassifierArch::Conv { filters, hidden } => {
            for &f in filters {
                l.push(LayerSpec::Conv2d { filters: f, kernel: 3 });
                l.push(LayerSpec::Activation(Activation::Relu));
                l.push(LayerSpec::MaxPool2d);
            }
            l.push(LayerSpec::Dense { outputs: *hidden });
            l.push(LayerSpec::Activation(Activation::Relu));
        }
        ClassifierArch::Dense { hidden } => {
            for &h in hidden {
                l.push(LayerSpec::Dense { outputs: h });
                l.push(LayerSpec::Activation(Activation::Relu));
            }
        }
    }
    l.push(LayerSpec::Dense { outputs: 1 });
    l
}

impl BinaryClassifier {
    pub fn new(arch: &ClassifierArch, input: Shape, seed: u64) -> Result<Self> {
        let mut r = rng::labeled(seed, "classifier-init");
        Ok(Self {
            network: Network::new(input, &classifier_layers(arch), &mut r)?,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.network.input_shape()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        nn::write_networks(path, &[&self.network])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut nets = nn::read_networks(path)?;
        if nets.len() != 1 || nets[0].output_shape().len() != 1 {
            return Err(Error::Format("not a classifier checkpoint".into()));
        }
        Ok(Self {
            network: nets.pop().unwrap(),
        })
    }
}

/// Sigmoid kept strictly inside (0, 1).
pub fn probability(logit: f64) -> f64 {
    let p = if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    };
    p.clamp(1e-15, 1.0 - 1e-15)
}

/// Mean binary cross-entropy from logits and its parameter gradients.
pub fn bce_loss_and_grads<T: nn::Scalar>(net: &Network<T>, x: &[T], y: &[f64]) -> Result<(f64, Gradients<T>)> {
    let batch = y.len();
    let trace = net.forward_train(x, batch)?;
    let mut loss = 0.0;
    let dout: Vec<T> = trace
        .output
        .iter()
        .zip(y)
        .map(|(&z, &t)| {
            let z = z.as_f64();
            loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
            let s = if z >= 0.0 {
                1.0 / (1.0 + (-z).exp())
            } else {
                let e = z.exp();
                e / (1.0 + e)
            };
            T::of((s - t) / batch as f64)
        })
        .collect();
    let (g, _) = net.backward(&trace, &dout, false);
    Ok((loss / batch as f64, g))
}

/// Index lists of one balanced epoch: minibatches with equal per-class
/// counts. The smaller class is used in full; the larger class contributes a
/// fresh random subset of the same size.
pub fn balanced_epoch<R: rand::Rng>(n_pos: usize, n_neg: usize, batch_size: usize, r: &mut R) -> Vec<(Vec<usize>, Vec<usize>)> {
    let m = n_pos.min(n_neg);
    let mut take = |n: usize| -> Vec<usize> {
        let mut v = rand::seq::index::sample(r, n, m).into_vec();
        v.shuffle(r);
        v
    };
    let pos = take(n_pos);
    let neg = take(n_neg);
    let half = (batch_size / 2).max(1);
    pos.chunks(half).zip(neg.chunks(half)).map(|(p, n)| (p.to_vec(), n.to_vec())).collect()
}

pub fn train_classifier(
    positives: &ImageSet,
    negatives: &ImageSet,
    arch: &ClassifierArch,
    hyper: &ClassifierTraining,
    seed: u64,
) -> Result<(BinaryClassifier, ClassifierReport)> {
    if positives.is_empty() {
        return Err(Error::Empty("classifier positives"));
    }
    if negatives.is_empty() {
        return Err(Error::Empty("classifier negatives"));
    }
    if positives.shape() != negatives.shape() {
        return Err(Error::shape(positives.shape(), negatives.shape()));
    }
    if hyper.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let started = Instant::now();
    let mut model = BinaryClassifier::new(arch, positives.shape(), seed)?;
    let mut opt = Sgd::new(hyper.learning_rate, hyper.momentum, hyper.weight_decay);
    let mut r = rng::labeled(seed, "classifier-batches");
    let d = positives.shape().len();
    let mut report = ClassifierReport::default();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    for epoch in 0..hyper.max_epochs {
        let (mut sum, mut count) = (0.0, 0usize);
        for (bi, (p, n)) in balanced_epoch(positives.len(), negatives.len(), hyper.batch_size, &mut r)
            .into_iter()
            .enumerate()
        {
            let mut x = Vec::with_capacity((p.len() + n.len()) * d);
            let mut y = Vec::with_capacity(p.len() + n.len());
            for &i in &p {
                x.extend_from_slice(positives.image(i));
                y.push(1.0);
            }
            for &i in &n {
                x.extend_from_slice(negatives.image(i));
                y.push(0.0);
            }
            let (loss, g) = bce_loss_and_grads(&model.network, &x, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            opt.step(&mut model.network, &g);
            if !model.network.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            sum += loss * y.len() as f64;
            count += y.len();
        }
        let loss = sum / count as f64;
        log::debug!("classifier epoch {epoch}: loss {loss:.6}");
        report.losses.push(loss);
        if loss < best - hyper.min_delta {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    report.seconds = started.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Positive-class probability per sample.
pub fn predict(model: &BinaryClassifier, images: &ImageSet) -> Result<Vec<f64>> {
    if images.shape() != model.input_shape() {
        return Err(Error::shape(model.input_shape(), images.shape()));
    }
    let logits = model.network.forward(images.data(), images.len())?;
    Ok(logits.iter().map(|&z| probability(z as f64)).collect())
}

pub fn labels_from(probabilities: &[f64]) -> Vec<u8> {
    probabilities.iter().map(|&p| u8::from(p >= 0.5)).collect()
}

pub fn predictions_csv(probabilities: &[f64]) -> String {
    let mut s = String::from("sample_id,probability,label\n");
    for (i, &p) in probabilities.iter().enumerate() {
        s.push_str(&format!("{i},{p},{}\n", u8::from(p >= 0.5)));
    }
    s
}

pub fn parse_predictions_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next() != Some("sample_id,probability,label") {
        return Err(Error::Format("predictions header missing".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Format(format!("bad prediction line {}: `{line}`", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 || f[0].parse::<usize>().ok() != Some(i) {
                return Err(bad());
            }
            f[1].parse().map_err(|_| bad())
        })
        .collect()
}
