//! Autoencoder trained on the positive-labeled images only. Its encoder
//! supplies the latent encodings every later stage works on.
//!
//! Two architectures share one interface: a convolutional one
//! (conv/ReLU/max-pool down, conv/ReLU/upsample back up) for images, and a
//! dense one for the two-dimensional toys. The decoder mirrors the encoder
//! and ends in a sigmoid, so reconstructions land in `[0, 1]`.
//!
//! Training minimises `MSE + λ/2 (‖W‖² + ‖W′‖²)` with Adam over shuffled
//! minibatches.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::dataset::{ImageSet, Shape};
use crate::error::{Error, Result};
use crate::matrix::EncodingMatrix;
use crate::nn::{self, Activation, Adam, LayerSpec, Network, Optimizer, Scalar};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    /// One 3x3 convolution per entry; a 2x2 max-pool sits between
    /// consecutive convolutions.
    Conv { filters: Vec<usize> },
    /// Hidden widths of the encoder; the decoder reverses them.
    Dense { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderSpec {
    pub architecture: Architecture,
    /// Width of the encoding. For the convolutional model, `None` (or a value
    /// equal to the flattened feature map) means no dense bottleneck.
    pub latent_dim: Option<usize>,
    pub latent_activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel<T = f32> {
    pub encoder: Network<T>,
    pub decoder: Network<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub reconstruction: f64,
    pub regularization: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,total,reconstruction,regularization\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{}\n", e.epoch, e.total, e.reconstruction, e.regularization));
        }
        s
    }
}

fn build_specs(spec: &AutoencoderSpec, input: Shape) -> Result<(Vec<LayerSpec>, Vec<LayerSpec>)> {
    let mut enc = Vec::new();
    let mut dec = Vec::new();
    match &spec.architecture {
        Architecture::Conv { filters } => {
            if filters.is_empty() {
                return Err(Error::invalid("convolutional autoencoder needs at least one filter count"));
            }
            let mut stage_shapes = vec![input];
            let mut s = input;
            for (i, &f) in filters.iter().enumerate() {
                if i > 0 {
                    enc.push(LayerSpec::MaxPool2d);
                    s = LayerSpec::MaxPool2d.output_shape(s)?;
                    stage_shapes.push(s);
                }
                enc.push(LayerSpec::Conv2d { filters: f, kernel: 3 });
                enc.push(LayerSpec::Activation(Activation::Relu));
            }
            let map = Shape::new(s.height, s.width, *filters.last().unwrap());
            let bottleneck = spec.latent_dim.filter(|&d| d != map.len());
            if let Some(d) = bottleneck {
                enc.push(LayerSpec::Dense { outputs: d });
                enc.push(LayerSpec::Activation(spec.latent_activation));
                dec.push(LayerSpec::Dense { outputs: map.len() });
                dec.push(LayerSpec::Activation(Activation::Relu));
                dec.push(LayerSpec::Reshape {
                    height: map.height,
                    width: map.width,
                    channels: map.channels,
                });
            } else if spec.latent_activation != Activation::Relu {
                // the last conv's activation is the latent activation
                enc.pop();
                enc.push(LayerSpec::Activation(spec.latent_activation));
            }
            // mirror: conv back through the earlier filter counts, upsampling
            // to each earlier stage's size, then out to the input channels
            for i in (0..filters.len()).rev() {
                let out_channels = if i == 0 { input.channels } else { filters[i - 1] };
                dec.push(LayerSpec::Conv2d {
                    filters: out_channels,
                    kernel: 3,
                });
                if i == 0 {
                    dec.push(LayerSpec::Activation(Activation::Sigmoid));
                } else {
                    dec.push(LayerSpec::Activation(Activation::Relu));
                    let target = stage_shapes[i - 1];
                    dec.push(LayerSpec::Upsample2d {
                        height: target.height,
                        width: target.width,
                    });
                }
            }
        }
        Architecture::Dense { hidden } => {
            let latent = spec
                .latent_dim
                .ok_or_else(|| Error::invalid("dense autoencoder needs a latent dimension"))?;
            for &h in hidden {
                enc.push(LayerSpec::Dense { outputs: h });
                enc.push(LayerSpec::Activation(Activation::Relu));
            }
            enc.push(LayerSpec::Dense { outputs: latent });
            enc.push(LayerSpec::Activation(spec.latent_activation));
            for &h in hidden.iter().rev() {
                dec.push(LayerSpec::Dense { outputs: h });
                dec.push(LayerSpec::Activation(Activation::Relu));
            }
            dec.push(LayerSpec::Dense { outputs: input.len() });
            if input.height > 1 || input.width > 1 {
                dec.push(LayerSpec::Reshape {
                    height: input.height,
                    width: input.width,
                    channels: input.channels,
                });
            }
            dec.push(LayerSpec::Activation(Activation::Sigmoid));
        }
    }
    Ok((enc, dec))
}

impl<T: Scalar> AutoencoderModel<T> {
    pub fn new(spec: &AutoencoderSpec, input: Shape, seed: u64) -> Result<Self> {
        let (enc, dec) = build_specs(spec, input)?;
        let mut rng = rng::labeled(seed, "cae-init");
        let encoder = Network::new(input, &enc, &mut rng)?;
        let decoder = Network::new(encoder.output_shape(), &dec, &mut rng)?;
        debug_assert_eq!(decoder.output_shape().len(), input.len());
        Ok(Self { encoder, decoder })
    }

    pub fn input_shape(&self) -> Shape {
        self.encoder.input_shape()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_shape().len()
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.encoder.weight_sq_norm() + self.decoder.weight_sq_norm()
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.all_finite() && self.decoder.all_finite()
    }

    fn check(&self, images: &ImageSet) -> Result<()> {
        if images.shape() != self.input_shape() {
            return Err(Error::shape(self.input_shape(), images.shape()));
        }
        Ok(())
    }

    /// Minibatch loss pieces and parameter gradients (encoder, decoder) for
    /// the flattened batch `x`.
    pub fn loss_and_grads(
        &self,
        x: &[T],
        batch: usize,
        weight_decay: f64,
    ) -> Result<(f64, f64, nn::Gradients<T>, nn::Gradients<T>)> {
        let enc = self.encoder.forward_train(x, batch)?;
        let dec = self.decoder.forward_train(&enc.output, batch)?;
        let n = x.len() as f64;
        let scale = T::of(2.0 / n);
        let mut sq = 0.0f64;
        let dout: Vec<T> = dec
            .output
            .iter()
            .zip(x)
            .map(|(&y, &t)| {
                let d = y - t;
                sq += d.as_f64() * d.as_f64();
                d * scale
            })
            .collect();
        let reconstruction = sq / n;
        let regularization = 0.5 * weight_decay * self.weight_sq_norm();
        let (g_dec, dz) = self.decoder.backward(&dec, &dout, true);
        let (g_enc, _) = self.encoder.backward(&enc, &dz.expect("requested"), false);
        Ok((reconstruction, regularization, g_enc, g_dec))
    }

    pub fn encode(&self, images: &ImageSet) -> Result<EncodingMatrix> {
        self.check(images)?;
        let x: Vec<T> = images.data().iter().map(|&v| T::of(v as f64)).collect();
        let z = self.encoder.forward(&x, images.len())?;
        EncodingMatrix::new(images.len(), self.latent_dim(), z.iter().map(|v| v.as_f64() as f32).collect())
    }

    pub fn reconstruct(&self, images: &ImageSet) -> Result<ImageSet> {
        self.check(images)?;
        let x: Vec<T> = images.data().iter().map(|&v| T::of(v as f64)).collect();
        let z = self.encoder.forward(&x, images.len())?;
        let y = self.decoder.forward(&z, images.len())?;
        let data = y
            .iter()
            .map(|v| {
                let f = v.as_f64() as f32;
                if f.is_nan() {
                    0.0
                } else {
                    f.clamp(0.0, 1.0)
                }
            })
            .collect();
        ImageSet::new(images.shape(), data, images.labels().map(<[u8]>::to_vec))
    }
}

impl AutoencoderModel<f32> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        nn::write_networks(path, &[&self.encoder, &self.decoder])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut nets = nn::read_networks(path)?;
        if nets.len() != 2 {
            return Err(Error::Format(format!("autoencoder checkpoint holds {} networks", nets.len())));
        }
        let decoder = nets.pop().unwrap();
        let encoder = nets.pop().unwrap();
        if encoder.output_shape().len() != decoder.input_shape().len() {
            return Err(Error::Format("encoder/decoder shapes disagree".into()));
        }
        Ok(Self { encoder, decoder })
    }
}

/// Train an autoencoder on `images`. Deterministic in `seed`.
pub fn train_cae<T: Scalar>(
    images: &ImageSet,
    spec: &AutoencoderSpec,
    hyper: &TrainingSpec,
    seed: u64,
) -> Result<(AutoencoderModel<T>, TrainReport)> {
    if images.is_empty() {
        return Err(Error::Empty("autoencoder training set"));
    }
    if hyper.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut model = AutoencoderModel::<T>::new(spec, images.shape(), seed)?;
    let mut opt_enc = Adam::new(hyper.learning_rate, hyper.weight_decay);
    let mut opt_dec = Adam::new(hyper.learning_rate, hyper.weight_decay);
    let mut shuffle = rng::labeled(seed, "cae-shuffle");
    let d = images.shape().len();
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 0..hyper.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle);
        let (mut rec_sum, mut reg_sum, mut total_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (bi, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let mut x = Vec::with_capacity(chunk.len() * d);
            for &i in chunk {
                x.extend(images.image(i).iter().map(|&v| T::of(v as f64)));
            }
            let (rec, reg, g_enc, g_dec) = model.loss_and_grads(&x, chunk.len(), hyper.weight_decay)?;
            if !(rec + reg).is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            rec_sum += rec;
            reg_sum += reg;
            total_sum += rec + reg;
            batches += 1;
            opt_enc.step(&mut model.encoder, &g_enc);
            opt_dec.step(&mut model.decoder, &g_dec);
            if !model.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
        }
        let b = batches as f64;
        let e = EpochLoss {
            epoch,
            total: total_sum / b,
            reconstruction: rec_sum / b,
            regularization: reg_sum / b,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::debug!("cae epoch {epoch}: total {:.6} rec {:.6} reg {:.6}", e.total, e.reconstruction, e.regularization);
        report.epochs.push(e);
    }
    Ok((model, report))
}

/// Peak signal-to-noise ratio with peak 1: `10 log10(1 / MSE)`.
/// Identical inputs give `+inf`.
pub fn psnr(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(a.len(), b.len()));
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Decibel value for reports; the infinite sentinel prints as `inf`.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_spec(latent: usize) -> AutoencoderSpec {
        AutoencoderSpec {
            architecture: Architecture::Dense { hidden: vec![] },
            latent_dim: Some(latent),
            latent_activation: Activation::Relu,
        }
    }

    fn conv_spec(filters: Vec<usize>, latent: Option<usize>) -> AutoencoderSpec {
        AutoencoderSpec {
            architecture: Architecture::Conv { filters },
            latent_dim: latent,
            latent_activation: Activation::Relu,
        }
    }

    #[test]
    fn large_scale_conv_shapes() {
        // 32x32x3 with 64/32/8 filters and two pools gives an 8x8x8 = 512 encoding
        let m = AutoencoderModel::<f32>::new(&conv_spec(vec![64, 32, 8], None), Shape::new(32, 32, 3), 0).unwrap();
        assert_eq!(m.latent_dim(), 512);
        assert_eq!(m.decoder.output_shape(), Shape::new(32, 32, 3));
        let convs: Vec<usize> = m
            .encoder
            .specs()
            .iter()
            .chain(m.decoder.specs().iter())
            .filter_map(|s| match s {
                LayerSpec::Conv2d { filters, .. } => Some(*filters),
                _ => None,
            })
            .collect();
        assert_eq!(convs, vec![64, 32, 8, 32, 64, 3]);
    }

    #[test]
    fn desk_conv_with_bottleneck_handles_odd_sizes() {
        let m = AutoencoderModel::<f32>::new(&conv_spec(vec![8, 4, 4], Some(16)), Shape::new(28, 28, 1), 0).unwrap();
        assert_eq!(m.latent_dim(), 16);
        assert_eq!(m.decoder.output_shape().len(), 28 * 28);
        let imgs = ImageSet::new(Shape::new(28, 28, 1), vec![0.3; 2 * 784], None).unwrap();
        let z = m.encode(&imgs).unwrap();
        assert_eq!((z.rows(), z.cols()), (2, 16));
        let r = m.reconstruct(&imgs).unwrap();
        assert_eq!(r.shape(), imgs.shape());
        assert!(r.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let mut m = AutoencoderModel::<f32>::new(&dense_spec(3), Shape::new(1, 1, 4), 1).unwrap();
        let n = m.encoder.param_count();
        m.encoder.set_params_flat(&vec![0.0; n]);
        let imgs = ImageSet::new(Shape::new(1, 1, 4), vec![0.1, 0.9, 0.5, 0.2, 1.0, 0.0, 0.3, 0.3], None).unwrap();
        let z = m.encode(&imgs).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(m.encode(&imgs).unwrap(), z);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = AutoencoderModel::<f32>::new(&dense_spec(2), Shape::new(1, 1, 4), 1).unwrap();
        let imgs = ImageSet::new(Shape::new(1, 1, 2), vec![0.1, 0.2], None).unwrap();
        assert!(m.encode(&imgs).is_err());
        assert!(m.reconstruct(&imgs).is_err());
    }

    #[test]
    fn constant_image_is_learned() {
        let imgs = ImageSet::new(Shape::new(4, 4, 1), vec![0.7; 16], None).unwrap();
        let hyper = TrainingSpec {
            epochs: 200,
            batch_size: 1,
            learning_rate: 1e-3,
            weight_decay: 0.0,
        };
        let (model, report) = train_cae::<f32>(&imgs, &conv_spec(vec![4, 2], None), &hyper, 5).unwrap();
        assert!(report.epochs.last().unwrap().reconstruction < 1e-3);
        assert!(model.all_finite());
        // smoothed loss never increases
        let totals: Vec<f64> = report.epochs.iter().map(|e| e.total).collect();
        let smooth: Vec<f64> = totals.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
        for w in smooth.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn loss_decomposes_every_epoch() {
        let data: Vec<f32> = (0..6 * 8).map(|i| ((i * 7) % 11) as f32 / 10.0).collect();
        let imgs = ImageSet::new(Shape::new(2, 2, 2), data, None).unwrap();
        let hyper = TrainingSpec {
            epochs: 10,
            batch_size: 4,
            learning_rate: 1e-2,
            weight_decay: 1e-3,
        };
        let (_, report) = train_cae::<f32>(&imgs, &dense_spec(3), &hyper, 2).unwrap();
        assert_eq!(report.epochs.len(), 10);
        for e in &report.epochs {
            let sum = e.reconstruction + e.regularization;
            assert!((e.total - sum).abs() <= 1e-5 * e.total.abs());
            assert!(e.regularization > 0.0);
        }
        assert!(report.epochs.last().unwrap().total < report.epochs[0].total);
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<f32> = (0..5 * 4).map(|i| (i % 7) as f32 / 7.0).collect();
        let imgs = ImageSet::new(Shape::new(1, 1, 4), data, None).unwrap();
        let hyper = TrainingSpec {
            epochs: 3,
            batch_size: 2,
            learning_rate: 1e-2,
            weight_decay: 1e-3,
        };
        let a = train_cae::<f32>(&imgs, &dense_spec(2), &hyper, 9).unwrap();
        let b = train_cae::<f32>(&imgs, &dense_spec(2), &hyper, 9).unwrap();
        assert_eq!(a.0, b.0);
        assert!(train_cae::<f32>(&ImageSet::empty(Shape::new(1, 1, 4)), &dense_spec(2), &hyper, 9).is_err());
    }

    #[test]
    fn diverging_training_reports_epoch_and_batch() {
        let data: Vec<f32> = (0..8 * 4).map(|i| (i % 5) as f32 / 5.0).collect();
        let imgs = ImageSet::new(Shape::new(1, 1, 4), data, None).unwrap();
        let hyper = TrainingSpec {
            epochs: 5,
            batch_size: 4,
            learning_rate: 1e30,
            weight_decay: 1e30,
        };
        let err = train_cae::<f32>(&imgs, &dense_spec(2), &hyper, 1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    }

    #[test]
    fn psnr_values() {
        let a = vec![0.0f32; 10];
        let b = vec![1.0f32; 10];
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);
        let c = vec![0.1f32; 10];
        // MSE = 0.01 -> 20 dB (0.1 is not exact in f32)
        assert!((psnr(&a, &c).unwrap() - 20.0).abs() < 1e-5);
        assert_eq!(psnr(&b, &c).unwrap(), psnr(&c, &b).unwrap());
        assert!(psnr(&a, &b[..3]).is_err());
        assert_eq!(format_db(f64::INFINITY), "inf");
        assert!(f64::INFINITY > psnr(&a, &c).unwrap());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = AutoencoderModel::<f32>::new(&conv_spec(vec![2, 2], Some(3)), Shape::new(4, 4, 1), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cae.ckpt");
        m.save(&p).unwrap();
        assert_eq!(AutoencoderModel::load(&p).unwrap(), m);
    }
}
