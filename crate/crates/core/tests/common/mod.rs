//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use denspu::autoencoder::{Architecture, AutoencoderModel, AutoencoderSpec};
use denspu::classifier::{bce_loss_and_grads, classifier_layers, ClassifierArch};
use denspu::dataset::Shape;
use denspu::nn::{Activation, LayerSpec, Network};
use denspu::rng;
use rand::Rng;

/// c(n) written out independently of the library.
pub fn c(n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        let n = n as f64;
        2.0 * ((n - 1.0).ln() + 0.5772156649) - 2.0 * (n - 1.0) / n
    }
}

/// Replays the tree construction directly on point lists: the subsample
/// decides the splits, every query point is routed along, and each query
/// gets its depth plus c(size) on reaching a leaf. No tree is materialised.
pub fn simulate(
    points: &[Vec<f32>],
    sample: Vec<usize>,
    queries: Vec<usize>,
    depth: usize,
    limit: usize,
    r: &mut impl Rng,
    out: &mut [f64],
) {
    let leaf = |out: &mut [f64], q: &[usize]| {
        for &i in q {
            out[i] = depth as f64 + c(sample.len());
        }
    };
    if sample.len() <= 1 || depth >= limit {
        return leaf(out, &queries);
    }
    let d = points[0].len();
    let mut found = None;
    for _ in 0..d {
        let f = r.random_range(0..d);
        let vals: Vec<f32> = sample.iter().map(|&i| points[i][f]).collect();
        let lo = vals.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        if lo < hi {
            found = Some((f, lo, hi));
            break;
        }
    }
    let Some((f, lo, hi)) = found else {
        return leaf(out, &queries);
    };
    let u: f64 = r.random();
    let mut p = (lo as f64 + u * (hi as f64 - lo as f64)) as f32;
    if p >= hi {
        p = lo;
    }
    let go_left = |i: &usize| points[*i][f] <= p;
    let (sl, sr): (Vec<usize>, Vec<usize>) = sample.iter().partition(|i| go_left(i));
    let (ql, qr): (Vec<usize>, Vec<usize>) = queries.iter().partition(|i| go_left(i));
    simulate(points, sl, ql, depth + 1, limit, r, out);
    simulate(points, sr, qr, depth + 1, limit, r, out);
}

pub fn oracle_paths(points: &[Vec<f32>], psi: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    let sample = rand::seq::index::sample(&mut r, points.len(), psi).into_vec();
    let limit = (psi as f64).log2().ceil() as usize;
    let mut out = vec![f64::NAN; points.len()];
    simulate(points, sample, (0..points.len()).collect(), 0, limit, &mut r, &mut out);
    out
}

pub const STEP: f64 = 1e-4;
pub const TOL: f64 = 1e-3;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

/// Loss is the fixed linear functional `sum(r * out)`, so `dout = r`.
pub fn check_network(input: Shape, specs: &[LayerSpec], batch: usize, seed: u64) -> f64 {
    let mut r = rng::stream(seed);
    let mut net: Network<f64> = Network::new(input, specs, &mut r).unwrap();
    assert!(net.param_count() <= 50, "{} params", net.param_count());
    let x: Vec<f64> = (0..batch * input.len()).map(|_| r.random::<f64>()).collect();
    let out_len = batch * net.output_shape().len();
    let w: Vec<f64> = (0..out_len).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    let loss = |net: &Network<f64>, x: &[f64]| -> f64 {
        let y = net.forward_train(x, batch).unwrap().output;
        y.iter().zip(&w).map(|(a, b)| a * b).sum()
    };
    let trace = net.forward_train(&x, batch).unwrap();
    let (g, dx) = net.backward(&trace, &w, true);
    let analytic = g.flat();
    let params = net.params_flat();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += STEP;
        net.set_params_flat(&p);
        let up = loss(&net, &x);
        p[i] -= 2.0 * STEP;
        net.set_params_flat(&p);
        let down = loss(&net, &x);
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * STEP)));
    }
    net.set_params_flat(&params);
    let dx = dx.unwrap();
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += STEP;
        let up = loss(&net, &xp);
        xp[i] -= 2.0 * STEP;
        let down = loss(&net, &xp);
        worst = worst.max(rel_err(dx[i], (up - down) / (2.0 * STEP)));
    }
    worst
}

/// Central-difference check of `loss(params)` against `analytic`.
fn worst_param_error(analytic: &[f64], params: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.to_vec();
        p[i] += STEP;
        let up = loss(&p);
        p[i] -= 2.0 * STEP;
        let down = loss(&p);
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * STEP)));
    }
    worst
}

/// Dense autoencoder 5 -> 1 -> 5 (ten weights plus six biases) under the
/// reconstruction loss.
pub fn dense_autoencoder_error(seed: u64) -> f64 {
    let spec = AutoencoderSpec {
        architecture: Architecture::Dense { hidden: vec![] },
        latent_dim: Some(1),
        latent_activation: Activation::Identity,
    };
    let mut model = AutoencoderModel::<f64>::new(&spec, Shape::new(1, 1, 5), seed).unwrap();
    assert_eq!(model.encoder.layers()[0].weight.len() + model.decoder.layers()[0].weight.len(), 10);
    let mut r = rng::stream(seed + 100);
    let batch = 4;
    let x: Vec<f64> = (0..batch * 5).map(|_| r.random::<f64>()).collect();
    let (_, _, ge, gd) = model.loss_and_grads(&x, batch, 0.0).unwrap();
    let analytic: Vec<f64> = ge.flat().into_iter().chain(gd.flat()).collect();
    let n_enc = model.encoder.param_count();
    let all: Vec<f64> = model.encoder.params_flat().into_iter().chain(model.decoder.params_flat()).collect();
    worst_param_error(&analytic, &all, |p| {
        model.encoder.set_params_flat(&p[..n_enc]);
        model.decoder.set_params_flat(&p[n_enc..]);
        model.loss_and_grads(&x, batch, 0.0).unwrap().0
    })
}

/// Binary cross-entropy gradients of a classifier network on random data.
pub fn classifier_error(arch: &ClassifierArch, input: Shape, seed: u64) -> f64 {
    let mut r = rng::stream(seed);
    let mut net: Network<f64> = Network::new(input, &classifier_layers(arch), &mut r).unwrap();
    assert!(net.param_count() <= 50, "{}", net.param_count());
    let batch = 6;
    let x: Vec<f64> = (0..batch * input.len()).map(|_| r.random::<f64>()).collect();
    let y: Vec<f64> = (0..batch).map(|i| (i % 2) as f64).collect();
    let (_, g) = bce_loss_and_grads(&net, &x, &y).unwrap();
    let params = net.params_flat();
    worst_param_error(&g.flat(), &params, |p| {
        net.set_params_flat(p);
        bce_loss_and_grads(&net, &x, &y).unwrap().0
    })
}

/// The micro-networks used for the autoencoder and classifier checks.
pub fn dense_classifier_error(seed: u64) -> f64 {
    classifier_error(&ClassifierArch::Dense { hidden: vec![4] }, Shape::new(1, 1, 2), 500 + seed)
}

pub fn conv_classifier_error(seed: u64) -> f64 {
    classifier_error(
        &ClassifierArch::Conv {
            filters: vec![2],
            hidden: 2,
        },
        Shape::new(4, 4, 1),
        900 + seed,
    )
}

pub fn brute_auc(truth: &[u8], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &ti) in truth.iter().enumerate() {
        for (j, &tj) in truth.iter().enumerate() {
            if ti == 1 && tj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// U by direct pair counting.
pub fn u_stat(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for &x in a {
        for &y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Two-sided permutation p-value: every split of the pooled values into
/// groups of the original sizes, equally likely.
pub fn exhaustive_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (na, n) = (a.len(), pooled.len());
    let mu = (a.len() * b.len()) as f64 / 2.0;
    let observed = (u_stat(a, b) - mu).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let (ga, gb): (Vec<f64>, Vec<f64>) = {
            let mut ga = Vec::new();
            let mut gb = Vec::new();
            for (k, &v) in pooled.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    ga.push(v);
                } else {
                    gb.push(v);
                }
            }
            (ga, gb)
        };
        total += 1;
        if (u_stat(&ga, &gb) - mu).abs() >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}


/// Distance from `x` to the line through `a` and `b`, and the position of
/// the foot point along `a -> b` (0 at `a`, 1 at `b`).
pub fn line_residual(x: &[f32], a: &[f32], b: &[f32]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(&p, &q)| q as f64 - p as f64).collect();
    let v: Vec<f64> = x.iter().zip(a).map(|(&p, &q)| p as f64 - q as f64).collect();
    let dd: f64 = d.iter().map(|t| t * t).sum();
    let t = if dd > 0.0 { v.iter().zip(&d).map(|(p, q)| p * q).sum::<f64>() / dd } else { 0.0 };
    let resid = v.iter().zip(&d).map(|(p, q)| (p - t * q).powi(2)).sum::<f64>().sqrt();
    (resid, t)
}
