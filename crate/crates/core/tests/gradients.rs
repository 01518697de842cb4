//! Analytic gradients against central finite differences, in f64.

mod common;

use common::*;
use denspu::dataset::Shape;
use denspu::nn::{Activation, LayerSpec};

fn check_many(input: Shape, specs: &[LayerSpec], batch: usize) {
    for seed in 0..20 {
        let e = check_network(input, specs, batch, seed);
        assert!(e < TOL, "seed {seed}: relative error {e} for {specs:?}");
    }
}

#[test]
fn dense_with_every_activation() {
    check_many(
        Shape::new(1, 1, 3),
        &[
            LayerSpec::Dense { outputs: 4 },
            LayerSpec::Activation(Activation::Relu),
            LayerSpec::Dense { outputs: 3 },
            LayerSpec::Activation(Activation::Sigmoid),
            LayerSpec::Dense { outputs: 2 },
            LayerSpec::Activation(Activation::Identity),
        ],
        3,
    );
}

#[test]
fn convolution() {
    check_many(
        Shape::new(4, 5, 2),
        &[
            LayerSpec::Conv2d { filters: 2, kernel: 3 },
            LayerSpec::Activation(Activation::Sigmoid),
        ],
        2,
    );
}

#[test]
fn pooling_and_upsampling() {
    check_many(
        Shape::new(5, 5, 1),
        &[
            LayerSpec::Conv2d { filters: 2, kernel: 3 },
            LayerSpec::MaxPool2d,
            LayerSpec::Upsample2d { height: 5, width: 5 },
            LayerSpec::Conv2d { filters: 1, kernel: 3 },
        ],
        2,
    );
}

#[test]
fn reshape_between_dense_and_conv() {
    check_many(
        Shape::new(1, 1, 2),
        &[
            LayerSpec::Dense { outputs: 8 },
            LayerSpec::Reshape {
                height: 2,
                width: 2,
                channels: 2,
            },
            LayerSpec::Conv2d { filters: 1, kernel: 3 },
        ],
        2,
    );
}

#[test]
fn two_layer_dense_autoencoder_reconstruction_loss() {
    for seed in 0..20 {
        let e = dense_autoencoder_error(seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn dense_classifier_cross_entropy() {
    for seed in 0..20 {
        let e = dense_classifier_error(seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn conv_classifier_cross_entropy() {
    for seed in 0..20 {
        let e = conv_classifier_error(seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}
