use denspu::augmentation::{densify, draw_lambda, AugmentMode, AugmentationSpec};
use denspu::rng;
use denspu::EncodingMatrix;
use rand::Rng;
use statrs::distribution::{Beta, ContinuousCDF};

fn random_encodings(n: usize, d: usize, seed: u64) -> EncodingMatrix {
    let mut r = rng::stream(seed);
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..d).map(|_| r.random_range(-3.0f32..3.0)).collect())
        .collect();
    EncodingMatrix::from_rows(&rows).unwrap()
}

fn spec(mode: AugmentMode, n_pairs: usize, s: usize, seed: u64) -> AugmentationSpec {
    AugmentationSpec {
        mode,
        k: 0.2,
        n_pairs,
        samples_per_pair: s,
        mixup_alpha: 0.4,
        seed,
    }
}

#[test]
fn lambda_moments_at_k_0_2() {
    let mut r = rng::stream(2024);
    let draws: Vec<f64> = (0..100_000).map(|_| draw_lambda(0.2, &mut r).unwrap()).collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - 0.5).abs() <= 0.005, "mean {mean}");
    assert!((sd - 0.1).abs() <= 0.005, "sd {sd}");
    assert!(draws.iter().all(|&l| l > 0.0 && l < 1.0));
}

#[test]
fn mixup_lambdas_follow_beta() {
    let z = random_encodings(200, 3, 1);
    let e = densify(&z, &spec(AugmentMode::Mixup, 10_000, 10, 5)).unwrap();
    let mut l: Vec<f64> = e.provenance.iter().map(|p| p.lambda).collect();
    assert_eq!(l.len(), 100_000);
    l.sort_by(f64::total_cmp);
    let beta = Beta::new(0.4, 0.4).unwrap();
    let n = l.len() as f64;
    let d = l
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = beta.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // two-sided Kolmogorov-Smirnov critical value at significance 0.01
    let critical = 1.6276 / n.sqrt();
    assert!(d < critical, "D = {d}, critical {critical}");
}

#[test]
fn dens_rows_are_collinear_with_their_pair() {
    let z = random_encodings(100, 16, 9);
    let e = densify(&z, &spec(AugmentMode::Dens, 2000, 11, 4)).unwrap();
    assert_eq!(e.embeddings.rows(), 2000 * 11);
    for (row, p) in e.embeddings.iter_rows().zip(&e.provenance) {
        assert!(p.lambda > 0.0 && p.lambda < 1.0);
        let (zi, zj) = (z.row(p.i), z.row(p.j));
        let resid = row
            .iter()
            .zip(zi.iter().zip(zj))
            .map(|(&x, (&a, &b))| {
                let r = (x as f64 - b as f64) - p.lambda * (a as f64 - b as f64);
                r * r
            })
            .sum::<f64>()
            .sqrt();
        assert!(resid <= 1e-5, "residual {resid}");
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull by the monotone chain.
fn hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[test]
fn dens_points_stay_inside_the_hull_in_2d() {
    for seed in 0..5 {
        let z = random_encodings(40, 2, seed);
        let pts: Vec<[f64; 2]> = z.iter_rows().map(|r| [r[0] as f64, r[1] as f64]).collect();
        let h = hull(pts);
        let e = densify(&z, &spec(AugmentMode::Dens, 300, 5, seed)).unwrap();
        for row in e.embeddings.iter_rows() {
            let p = [row[0] as f64, row[1] as f64];
            for k in 0..h.len() {
                let c = cross(h[k], h[(k + 1) % h.len()], p);
                assert!(c >= -1e-5, "point {p:?} outside hull edge {k}: {c}");
            }
        }
    }
}

#[test]
fn pair_budget_from_the_reference_configuration() {
    let z = random_encodings(1000, 4, 3);
    let e = densify(&z, &spec(AugmentMode::Dens, 16_000, 11, 1)).unwrap();
    assert_eq!(e.embeddings.rows(), 176_000);
    assert_eq!(e.embeddings.cols(), 4);
}
