//! Reconstruction-quality experiment: does PSNR alone separate positives
//! from negatives in U?

use std::fmt::Write as _;
use std::fs;

use serde::Serialize;

use super::{fit_autoencoder, prepare_split};
use crate::autoencoder::{psnr, AutoencoderModel};
use crate::config::PipelineConfig;
use crate::dataset::PUSplit;
use crate::error::{Error, Result};
use crate::metrics::{mann_whitney_u, MannWhitney};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsnrReport {
    #[serde(skip)]
    pub positive: Vec<f64>,
    #[serde(skip)]
    pub negative: Vec<f64>,
    pub n_positive: usize,
    pub n_negative: usize,
    pub mean_positive: f64,
    pub mean_negative: f64,
    pub u: f64,
    pub p_value: f64,
    /// Best single-threshold accuracy over U.
    pub best_accuracy: f64,
    pub best_threshold: f64,
    /// Whether the best rule calls samples above the threshold positive.
    pub positive_above: bool,
}

/// Best accuracy of a rule `value > t ⇒ positive` (or its reverse) over all
/// thresholds. Returns `(threshold, accuracy, positive_above)`.
pub fn best_threshold_accuracy(positive: &[f64], negative: &[f64]) -> Result<(f64, f64, bool)> {
    let n = positive.len() + negative.len();
    if n == 0 {
        return Err(Error::Empty("threshold sample"));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&v| (v, true))
        .chain(negative.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // t = -inf: everything above, so every positive is right
    let mut correct_up = positive.len();
    let eval = |correct_up: usize, t: f64, best: &mut (f64, f64, bool)| {
        let up = correct_up as f64 / n as f64;
        if up > best.1 {
            *best = (t, up, true);
        }
        if 1.0 - up > best.1 {
            *best = (t, 1.0 - up, false);
        }
    };
    let mut best = (f64::NEG_INFINITY, -1.0, true);
    eval(correct_up, f64::NEG_INFINITY, &mut best);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                correct_up -= 1;
            } else {
                correct_up += 1;
            }
            i += 1;
        }
        eval(correct_up, t, &mut best);
    }
    Ok(best)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// PSNR of every unlabeled sample against its reconstruction, grouped by
/// hidden truth.
pub fn psnr_experiment_on(model: &AutoencoderModel, split: &PUSplit) -> Result<PsnrReport> {
    let truth = split.unlabeled_truth_for_evaluation();
    let rec = model.reconstruct(&split.unlabeled)?;
    let (mut positive, mut negative) = (Vec::new(), Vec::new());
    for (i, &t) in truth.iter().enumerate() {
        let v = psnr(split.unlabeled.image(i), rec.image(i))?;
        if t == 1 {
            positive.push(v);
        } else {
            negative.push(v);
        }
    }
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::Empty("one class of the unlabeled pool"));
    }
    let MannWhitney { u, p, .. } = mann_whitney_u(&positive, &negative)?;
    let (best_threshold, best_accuracy, positive_above) = best_threshold_accuracy(&positive, &negative)?;
    Ok(PsnrReport {
        n_positive: positive.len(),
        n_negative: negative.len(),
        mean_positive: mean(&positive),
        mean_negative: mean(&negative),
        u,
        p_value: p,
        best_accuracy,
        best_threshold,
        positive_above,
        positive,
        negative,
    })
}

impl PsnrReport {
    /// Counts per PSNR bin for both groups; infinite values land in the
    /// last bin.
    pub fn histogram_csv(&self, bins: usize) -> String {
        let finite = self.positive.iter().chain(&self.negative).filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let bins = bins.max(1);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let bin_of = |v: f64| -> usize {
            if !v.is_finite() {
                return bins - 1;
            }
            (((v - lo) / width) as usize).min(bins - 1)
        };
        let mut counts = vec![(0usize, 0usize); bins];
        for &v in &self.positive {
            counts[bin_of(v)].0 += 1;
        }
        for &v in &self.negative {
            counts[bin_of(v)].1 += 1;
        }
        let mut s = String::from("bin_lo,bin_hi,positive,negative\n");
        for (b, (p, n)) in counts.iter().enumerate() {
            let a = lo + b as f64 * width;
            let _ = writeln!(s, "{a},{},{p},{n}", a + width);
        }
        s
    }

    pub fn samples_csv(&self) -> String {
        let mut s = String::from("psnr_db,truth\n");
        for (vals, t) in [(&self.positive, 1), (&self.negative, 0)] {
            for v in vals.iter() {
                let _ = writeln!(s, "{},{t}", crate::autoencoder::format_db(*v));
            }
        }
        s
    }
}

/// Train the autoencoder on P_L for `cfg.run.seed`, run the experiment on
/// U and write `psnr_histogram.csv`, `psnr_samples.csv` and
/// `psnr_test.json` to `cfg.run.out`.
pub fn run_psnr_experiment(cfg: &PipelineConfig) -> Result<PsnrReport> {
    let split = prepare_split(cfg, cfg.run.seed)?;
    let (model, _) = fit_autoencoder(cfg, &split, cfg.run.seed)?;
    let report = psnr_experiment_on(&model, &split)?;
    let dir = &cfg.run.out;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("psnr_histogram.csv", report.histogram_csv(50)),
        ("psnr_samples.csv", report.samples_csv()),
        ("psnr_test.json", serde_json::to_string_pretty(&report)?),
    ];
    for (name, text) in files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(report)
}
