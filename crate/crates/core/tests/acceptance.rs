//! Acceptance suite. Each test prints one `PASS`/`FAIL` line per criterion
//! straight to stdout (visible without `--nocapture`) and then asserts it.
//!
//! The Fashion-MNIST criteria read the IDX files from `data/fashion-mnist`
//! at the workspace root, or from `$DENSPU_FMNIST_DIR`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::*;
use denspu::anomaly::{average_path_length, build_forest, contamination, normalized_score, tree_seed};
use denspu::augmentation::{densify, draw_lambda, AugmentMode, AugmentationSpec};
use denspu::config::{DataSource, PipelineConfig, Profile};
use denspu::dataset::Shape;
use denspu::metrics::{auc, mann_whitney_u, mean_std};
use denspu::nn::{Activation, LayerSpec};
use denspu::pipeline::{
    prepare_seed, psnr_experiment_on, run_pipeline, run_stage, run_sweep_on, AblationRow, Stage, Sweep,
};
use denspu::rng;
use denspu::EncodingMatrix;
use rand::Rng;

fn verdict(id: u32, pass: bool, what: &str, detail: &str) -> bool {
    let line = format!("{} criterion {id:>2}: {what} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    pass
}

fn blobs(out: &Path, seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::defaults(Profile::Desk, DataSource::Blobs);
    c.run.out = out.to_path_buf();
    c.run.seed = seed;
    c
}

#[test]
fn c01_synthetic_end_to_end() {
    let cfg = blobs(Path::new(""), 0);
    let spec = denspu::dataset::SyntheticSpec::blobs(100, 1000, 1000);
    let gap = {
        let [a, b] = spec.centers;
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() / spec.noise
    };
    assert_eq!((cfg.data.n_labeled, cfg.data.synthetic_unlabeled), (100, 1000));
    assert_eq!(cfg.data.synthetic_positive_fraction, 0.5);
    let (mut f1, mut purity, mut slowest) = (Vec::new(), Vec::new(), 0.0f64);
    for seed in [0, 1, 2] {
        let dir = tempfile::tempdir().unwrap();
        let started = Instant::now();
        let r = run_pipeline(&blobs(dir.path(), seed)).unwrap();
        slowest = slowest.max(started.elapsed().as_secs_f64());
        f1.push(r.metrics.f1);
        purity.push(r.negative_purity.unwrap());
    }
    let (f1, purity) = (mean_std(&f1).mean, mean_std(&purity).mean);
    let pass = gap >= 3.0 && f1 >= 0.95 && purity >= 0.95 && slowest < 60.0;
    assert!(verdict(
        1,
        pass,
        "blobs toy, 3 seeds",
        &format!("separation {gap:.1} sigma, mean F1 {f1:.4} (>= 0.95), mean purity {purity:.4} (>= 0.95), slowest seed {slowest:.1}s (< 60s)"),
    ));
}

fn fmnist_dir() -> PathBuf {
    std::env::var_os("DENSPU_FMNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fashion-mnist"))
}

fn mean_f1(rows: &[AblationRow]) -> BTreeMap<String, f64> {
    let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by.entry(r.variant.clone()).or_default().push(r.record.f1);
    }
    by.into_iter().map(|(k, v)| (k, mean_std(&v).mean)).collect()
}

/// Criteria 2, 3, 4 and 10 share the per-seed autoencoders.
#[test]
fn c02_c03_c04_c10_fashion_mnist() {
    let dir = fmnist_dir();
    if !dir.join("train-images-idx3-ubyte").exists() {
        for (id, what) in [(2, "desk F-MNIST"), (3, "ablation ordering"), (4, "population ordering"), (10, "PSNR experiment")] {
            verdict(id, false, what, &format!("Fashion-MNIST not found in {}", dir.display()));
        }
        panic!("Fashion-MNIST data missing");
    }
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-fmnist");
    let _ = fs::remove_dir_all(&out);
    let mut cfg = PipelineConfig::defaults(Profile::Desk, DataSource::Fmnist);
    cfg.data.path = dir;
    assert_eq!(cfg.data.positive_classes.iter().copied().collect::<Vec<_>>(), vec![0, 2, 4, 6]);
    assert_eq!((cfg.data.n_labeled, cfg.data.max_unlabeled), (1000, 6000));

    // criterion 2: one full pipeline run with every artifact persisted
    cfg.run.out = out.join("pipeline");
    cfg.run.seed = 0;
    let started = Instant::now();
    let report = run_pipeline(&cfg).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let c2 = verdict(
        2,
        report.metrics.f1 >= 0.85 && secs < 1800.0,
        "desk F-MNIST pipeline",
        &format!("F1 {:.4} (>= 0.85), runtime {secs:.0}s (< 1800s), |U| {}", report.metrics.f1, report.n_unlabeled),
    );

    let mut variants = Vec::new();
    let mut populations = Vec::new();
    let mut psnr = None;
    for seed in [0, 1, 2] {
        let mut ctx = prepare_seed(&cfg, seed).unwrap();
        if seed == 0 {
            psnr = Some(psnr_experiment_on(&ctx.model, &ctx.split).unwrap());
        }
        variants.extend(run_sweep_on(&mut ctx, &cfg, &Sweep::Variant).unwrap());
        populations.extend(run_sweep_on(&mut ctx, &cfg, &Sweep::Population).unwrap());
    }
    for (name, rows) in [("variants.csv", &variants), ("populations.csv", &populations)] {
        let mut s = String::from("variant,seed,f1,negative_purity,n_negatives\n");
        for r in rows.iter() {
            s.push_str(&format!("{},{},{},{:?},{}\n", r.variant, r.seed, r.record.f1, r.negative_purity, r.n_negatives));
        }
        fs::write(out.join(name), s).unwrap();
    }

    let v = mean_f1(&variants);
    let (v1, v3, v7) = (v["v1-naive"], v["v3-none-rank"], v["v7-dens-rank"]);
    let table: Vec<String> = v.iter().map(|(k, f)| format!("{k} {f:.4}")).collect();
    let c3 = verdict(
        3,
        v7 - v1 >= 0.05 && v7 - v3 >= 0.02,
        "ablation ordering, 3 seeds",
        &format!(
            "v7-v1 {:+.4} (>= 0.05), v7-v3 {:+.4} (>= 0.02); means: {}",
            v7 - v1,
            v7 - v3,
            table.join(", ")
        ),
    );

    let p = mean_f1(&populations);
    let (mp, al, rc) = (p["match_positives"], p["all_leftovers"], p["random_count"]);
    let c4 = verdict(
        4,
        mp >= al && al >= rc,
        "population ordering, 3 seeds",
        &format!("match_positives {mp:.4} >= all_leftovers {al:.4} >= random_count {rc:.4}"),
    );

    let psnr = psnr.unwrap();
    fs::write(out.join("psnr_histogram.csv"), psnr.histogram_csv(50)).unwrap();
    let c10 = verdict(
        10,
        psnr.p_value < 0.01 && psnr.best_accuracy < 0.75,
        "PSNR overlap",
        &format!(
            "Mann-Whitney p {:.3e} (< 0.01), best threshold accuracy {:.4} (< 0.75), mean PSNR pos {:.2} dB / neg {:.2} dB",
            psnr.p_value, psnr.best_accuracy, psnr.mean_positive, psnr.mean_negative
        ),
    );
    assert!(c2 && c3 && c4 && c10, "see the FAIL lines above");
}

#[test]
fn c05_contamination_formula() {
    let got = contamination(1000, 16000, 11).unwrap();
    let expect = 1.0 / 176.0; // 0.005681818...
    let pass = (got - expect).abs() <= 1e-9 && (got - 0.005681818181818).abs() <= 1e-9;
    assert!(verdict(5, pass, "contamination(1000, 16000, 11)", &format!("{got:.12} vs 0.005681818182")));
}

#[test]
fn c06_isolation_forest_oracle() {
    let (mut checked, mut mismatches) = (0usize, 0usize);
    for seed in 0..100u64 {
        let mut r = rng::stream(77_000 + seed);
        for dims in 1..=2 {
            for n in 2..=8 {
                let points: Vec<Vec<f32>> = (0..n)
                    .map(|_| (0..dims).map(|_| r.random_range(0..6) as f32 * 0.25).collect())
                    .collect();
                let m = EncodingMatrix::from_rows(&points).unwrap();
                let psi = r.random_range(2..=n);
                let forest = build_forest(&m, 2, psi, seed).unwrap();
                let used = forest.subsample_size;
                for t in 0..forest.trees.len() {
                    let expect = oracle_paths(&points, used, tree_seed(seed, t));
                    for (i, p) in points.iter().enumerate() {
                        checked += 1;
                        if forest.trees[t].path_length(p) != expect[i] {
                            mismatches += 1;
                        }
                    }
                }
            }
        }
    }
    let worst_norm = [2usize, 3, 8, 64, 256, 1000]
        .iter()
        .map(|&psi| (normalized_score(c(psi), psi) - 0.5).abs().max((average_path_length(psi) - c(psi)).abs() / c(psi)))
        .fold(0.0f64, f64::max);
    let pass = mismatches == 0 && worst_norm <= 1e-12;
    assert!(verdict(
        6,
        pass,
        "isolation forest vs brute-force simulator",
        &format!("{checked} path lengths, {mismatches} mismatches; max |s(c(psi)) - 0.5| {worst_norm:.1e} (<= 1e-12)"),
    ));
}

#[test]
fn c07_gradient_checks() {
    let nets: Vec<(Shape, Vec<LayerSpec>, usize)> = vec![
        (
            Shape::new(1, 1, 3),
            vec![
                LayerSpec::Dense { outputs: 4 },
                LayerSpec::Activation(Activation::Relu),
                LayerSpec::Dense { outputs: 3 },
                LayerSpec::Activation(Activation::Sigmoid),
                LayerSpec::Dense { outputs: 2 },
            ],
            3,
        ),
        (
            Shape::new(5, 5, 1),
            vec![
                LayerSpec::Conv2d { filters: 2, kernel: 3 },
                LayerSpec::Activation(Activation::Relu),
                LayerSpec::MaxPool2d,
                LayerSpec::Upsample2d { height: 5, width: 5 },
                LayerSpec::Conv2d { filters: 1, kernel: 3 },
                LayerSpec::Activation(Activation::Sigmoid),
            ],
            2,
        ),
    ];
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        for (shape, specs, batch) in &nets {
            worst = worst.max(check_network(*shape, specs, *batch, seed));
        }
        worst = worst.max(dense_autoencoder_error(seed));
        worst = worst.max(dense_classifier_error(seed));
        worst = worst.max(conv_classifier_error(seed));
    }
    assert!(verdict(
        7,
        worst < TOL,
        "finite-difference gradients, 20 seeds",
        &format!("max relative error {worst:.2e} (< 1e-3) over layer stacks, dense autoencoder, dense and conv classifiers"),
    ));
}

#[test]
fn c08_metric_oracles() {
    let mut r = rng::stream(8_008);
    let (mut auc_mismatch, mut done) = (0, 0);
    while done < 1000 {
        let n = r.random_range(2..=100);
        let truth: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
        if !truth.contains(&0) || !truth.contains(&1) {
            continue;
        }
        let levels = r.random_range(2..30);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
        if auc(&truth, &scores).unwrap() != brute_auc(&truth, &scores) {
            auc_mismatch += 1;
        }
        done += 1;
    }
    let mut worst: f64 = 0.0;
    for na in 1..=8 {
        for nb in 1..=8 {
            for trial in 0..3 {
                let draw = |r: &mut rng::StreamRng| -> f64 {
                    if trial == 0 {
                        r.random::<f64>()
                    } else {
                        r.random_range(0..3) as f64
                    }
                };
                let a: Vec<f64> = (0..na).map(|_| draw(&mut r) + 0.3 * trial as f64).collect();
                let b: Vec<f64> = (0..nb).map(|_| draw(&mut r)).collect();
                worst = worst.max((mann_whitney_u(&a, &b).unwrap().p - exhaustive_p(&a, &b)).abs());
            }
        }
    }
    let pass = auc_mismatch == 0 && worst <= 0.02;
    assert!(verdict(
        8,
        pass,
        "AUC and Mann-Whitney oracles",
        &format!("AUC mismatches {auc_mismatch}/1000 (exact); max |p - permutation p| {worst:.4} (<= 0.02)"),
    ));
}

#[test]
fn c09_lambda_sampler() {
    let mut r = rng::stream(99);
    let draws: Vec<f64> = (0..100_000).map(|_| draw_lambda(0.2, &mut r).unwrap()).collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let outside = draws.iter().filter(|&&l| !(l > 0.0 && l < 1.0)).count();

    let mut rr = rng::stream(7);
    let rows: Vec<Vec<f32>> = (0..1000).map(|_| (0..64).map(|_| rr.random_range(0.0f32..4.0)).collect()).collect();
    let z = EncodingMatrix::from_rows(&rows).unwrap();
    let spec = AugmentationSpec {
        mode: AugmentMode::Dens,
        k: 0.2,
        n_pairs: 16_000,
        samples_per_pair: 11,
        mixup_alpha: 0.4,
        seed: 3,
    };
    let set = densify(&z, &spec).unwrap();
    let (mut worst, mut off_segment) = (0.0f64, 0usize);
    for (x, p) in set.embeddings.iter_rows().zip(&set.provenance) {
        let (resid, t) = line_residual(x, z.row(p.i), z.row(p.j));
        worst = worst.max(resid);
        if !(0.0..=1.0).contains(&t) {
            off_segment += 1;
        }
    }
    let pass = (mean - 0.5).abs() <= 0.005 && (sd - 0.1).abs() <= 0.005 && outside == 0 && worst <= 1e-5 && off_segment == 0;
    assert!(verdict(
        9,
        pass,
        "lambda sampler and collinearity",
        &format!(
            "mean {mean:.5}, std {sd:.5}, {outside} draws outside (0,1); {} embeddings, max off-line distance {worst:.2e} (<= 1e-5)",
            set.len()
        ),
    ));
}

fn run_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for sub in [dir.to_path_buf(), dir.join("data")] {
        for e in fs::read_dir(&sub).unwrap() {
            let p = e.unwrap().path();
            let name = p.strip_prefix(dir).unwrap().display().to_string();
            if p.is_file() && name != "timings.json" && name != "config.txt" {
                out.insert(name, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn c11_determinism() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&blobs(a.path(), 5)).unwrap();
    run_pipeline(&blobs(b.path(), 5)).unwrap();
    for stage in Stage::ALL {
        run_stage(&blobs(c.path(), 5), stage).unwrap();
    }
    let metrics_same = fs::read(a.path().join("metrics.csv")).unwrap() == fs::read(b.path().join("metrics.csv")).unwrap();
    let (fa, fb, fc) = (run_files(a.path()), run_files(b.path()), run_files(c.path()));
    let differ = |x: &BTreeMap<String, Vec<u8>>| -> Vec<String> {
        fa.keys()
            .chain(x.keys())
            .filter(|k| fa.get(*k) != x.get(*k))
            .cloned()
            .collect()
    };
    let (db, dc) = (differ(&fb), differ(&fc));
    let pass = metrics_same && db.is_empty() && dc.is_empty();
    assert!(verdict(
        11,
        pass,
        "determinism",
        &format!(
            "metrics.csv identical: {metrics_same}; {} artifacts compared; rerun differs in {db:?}, stage-by-stage differs in {dc:?}",
            fa.len()
        ),
    ));
}
