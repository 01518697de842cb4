//! Sweeps over pipeline variants that share the split, autoencoder and
//! encodings of a seed.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::str::FromStr;

use serde::Serialize;

use super::{
    augment, choose_negatives, classifier_data, detect, evaluate_model, fit_autoencoder, fit_classifier, prepare_split,
    purity_of, ClassifierData,
};
use crate::anomaly::AnomalyPartition;
use crate::augmentation::{AugmentMode, EmbeddingSet};
use crate::autoencoder::AutoencoderModel;
use crate::config::{ClassifierInput, DataSource, PipelineConfig, SelectStrategy};
use crate::dataset::PUSplit;
use crate::error::{Error, Result};
use crate::matrix::EncodingMatrix;
use crate::metrics::{self, MetricsRecord, MetricsRow, MetricsSummary};
use crate::selection::SelectionMode;

/// The seven rows of the variant sweep: label, augmentation, strategy.
pub const VARIANTS: [(&str, Option<AugmentMode>, SelectStrategy); 7] = [
    ("v1-naive", None, SelectStrategy::Naive),
    ("v2-none-random", None, SelectStrategy::Random),
    ("v3-none-rank", None, SelectStrategy::Rank),
    ("v4-mixup-random", Some(AugmentMode::Mixup), SelectStrategy::Random),
    ("v5-mixup-rank", Some(AugmentMode::Mixup), SelectStrategy::Rank),
    ("v6-dens-random", Some(AugmentMode::Dens), SelectStrategy::Random),
    ("v7-dens-rank", Some(AugmentMode::Dens), SelectStrategy::Rank),
];

pub const DEFAULT_FRACTIONS: [f64; 6] = [0.01, 0.05, 0.10, 0.25, 0.30, 0.50];

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Variant,
    Population,
    /// Fractions of the training positives used as P_L.
    LabeledFraction(Vec<f64>),
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::Variant => "variant",
            Sweep::Population => "population",
            Sweep::LabeledFraction(_) => "labeled_fraction",
        }
    }
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variant" => Ok(Sweep::Variant),
            "population" => Ok(Sweep::Population),
            "labeled_fraction" => Ok(Sweep::LabeledFraction(DEFAULT_FRACTIONS.to_vec())),
            _ => Err(Error::invalid(format!("unknown sweep `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub sweep: String,
    pub variant: String,
    pub seed: u64,
    pub record: MetricsRecord,
    pub n_unlabeled: usize,
    pub n_inliers: usize,
    pub n_leftovers: usize,
    pub n_negatives: usize,
    pub negative_purity: Option<f64>,
}

type Detection = (Option<EmbeddingSet>, AnomalyPartition);

/// Per-seed state shared by every variant of a sweep.
pub struct SeedContext {
    pub seed: u64,
    pub split: PUSplit,
    pub model: AutoencoderModel,
    pub z_l: EncodingMatrix,
    pub z_u: EncodingMatrix,
    pub z_test: Option<EncodingMatrix>,
    detections: HashMap<String, Detection>,
    rows: HashMap<String, AblationRow>,
}

/// Split, autoencoder and encodings for `seed`.
pub fn prepare_seed(cfg: &PipelineConfig, seed: u64) -> Result<SeedContext> {
    let split = prepare_split(cfg, seed)?;
    let (model, _) = fit_autoencoder(cfg, &split, seed)?;
    let z_l = model.encode(&split.positive_labeled)?;
    let z_u = model.encode(&split.unlabeled)?;
    let z_test = match cfg.classifier.input {
        ClassifierInput::Encodings => Some(model.encode(&split.test)?),
        ClassifierInput::Images => None,
    };
    Ok(SeedContext {
        seed,
        split,
        model,
        z_l,
        z_u,
        z_test,
        detections: HashMap::new(),
        rows: HashMap::new(),
    })
}

impl SeedContext {
    fn classifier_data(&self, cfg: &PipelineConfig) -> Result<ClassifierData> {
        match &self.z_test {
            Some(z_t) => classifier_data(cfg, &self.split, Some((&self.z_l, &self.z_u, z_t))),
            None => classifier_data(cfg, &self.split, None),
        }
    }

    /// One full downstream run (augmentation to evaluation) under `cfg`,
    /// reusing cached detections and identical earlier runs.
    pub fn run(&mut self, cfg: &PipelineConfig, sweep: &str, label: &str) -> Result<AblationRow> {
        let mut cfg = cfg.clone();
        cfg.run.seed = self.seed;
        let key = cfg.hash();
        if let Some(row) = self.rows.get(&key) {
            return Ok(AblationRow {
                sweep: sweep.into(),
                variant: label.into(),
                ..row.clone()
            });
        }
        let seed = self.seed;
        let partition = if cfg.select.strategy == SelectStrategy::Naive {
            None
        } else {
            let det_key = format!("{:?}|{:?}", cfg.augment, cfg.forest);
            if !self.detections.contains_key(&det_key) {
                let z_nu = augment(&cfg, &self.z_l, seed)?;
                let (_, partition) = detect(&cfg, &self.z_l, z_nu.as_ref().map(|s| &s.embeddings), &self.z_u, seed)?;
                self.detections.insert(det_key.clone(), (z_nu, partition));
            }
            Some(det_key)
        };
        let detection = partition.as_ref().map(|k| &self.detections[k]);
        let (_, chosen) = choose_negatives(
            &cfg,
            detection.map(|d| &d.1),
            &self.z_u,
            &self.z_l,
            detection.and_then(|d| d.0.as_ref().map(|s| &s.embeddings)),
            seed,
        )?;
        let data = self.classifier_data(&cfg)?;
        let (model, _) = fit_classifier(&cfg, &data, &chosen, seed)?;
        let (_, record) = evaluate_model(&model, &data.test, self.split.test_labels())?;
        let n_u = self.split.unlabeled.len();
        let (n_inliers, n_leftovers) = match detection {
            Some((_, p)) => (p.inlier_ids.len(), p.leftover_ids.len()),
            None => (0, n_u),
        };
        let row = AblationRow {
            sweep: sweep.into(),
            variant: label.into(),
            seed,
            record,
            n_unlabeled: n_u,
            n_inliers,
            n_leftovers,
            n_negatives: chosen.len(),
            negative_purity: purity_of(&self.split, &chosen),
        };
        log::info!(
            "{sweep}/{label} seed {seed}: f1 {:.4}, purity {:?}, |N| {}",
            row.record.f1,
            row.negative_purity,
            row.n_negatives
        );
        self.rows.insert(key, row.clone());
        Ok(row)
    }
}

/// Rows of a variant or population sweep for one prepared seed.
pub fn run_sweep_on(ctx: &mut SeedContext, cfg: &PipelineConfig, sweep: &Sweep) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    match sweep {
        Sweep::Variant => {
            for (label, mode, strategy) in VARIANTS {
                let mut c = cfg.clone();
                c.augment.mode = mode;
                c.select.strategy = strategy;
                rows.push(ctx.run(&c, sweep.name(), label)?);
            }
        }
        Sweep::Population => {
            for mode in [SelectionMode::MatchPositives, SelectionMode::AllLeftovers, SelectionMode::RandomCount] {
                let mut c = cfg.clone();
                c.select.population = mode;
                rows.push(ctx.run(&c, sweep.name(), mode.name())?);
            }
        }
        Sweep::LabeledFraction(_) => {
            return Err(Error::invalid("the labeled-fraction sweep changes the split; use run_ablation"));
        }
    }
    Ok(rows)
}

fn training_positives(cfg: &PipelineConfig) -> Result<usize> {
    let d = &cfg.data;
    let train = match d.source {
        DataSource::Blobs | DataSource::Rings => {
            let in_u = (d.synthetic_unlabeled as f64 * d.synthetic_positive_fraction).round() as usize;
            return Ok(d.n_labeled + in_u);
        }
        DataSource::Fmnist => super::load_fmnist(&d.path)?.0,
        DataSource::Cifar10 => super::load_cifar(&d.path)?.0,
    };
    let labels = train.labels().unwrap_or(&[]);
    Ok(labels.iter().filter(|l| d.positive_classes.contains(l)).count())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub sweep: String,
    pub rows: Vec<AblationRow>,
    pub summary: Vec<MetricsSummary>,
}

impl AblationReport {
    fn new(sweep: &Sweep, rows: Vec<AblationRow>) -> Self {
        let summary = metrics::summarize(&Self::metric_rows_of(&rows, "_"));
        Self {
            sweep: sweep.name().into(),
            rows,
            summary,
        }
    }

    fn metric_rows_of(rows: &[AblationRow], dataset: &str) -> Vec<MetricsRow> {
        rows.iter()
            .map(|r| MetricsRow {
                dataset: dataset.into(),
                variant: r.variant.clone(),
                seed: r.seed,
                record: r.record,
            })
            .collect()
    }

    pub fn metric_rows(&self, dataset: &str) -> Vec<MetricsRow> {
        Self::metric_rows_of(&self.rows, dataset)
    }

    /// Mean F1 of a variant over its seeds.
    pub fn mean_f1(&self, variant: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.variant == variant).map(|s| s.f1.mean)
    }

    pub fn counts_csv(&self) -> String {
        let mut s = String::from("sweep,variant,seed,n_unlabeled,n_inliers,n_leftovers,n_negatives,negative_purity,f1\n");
        for r in &self.rows {
            let purity = r.negative_purity.map_or_else(String::new, |p| p.to_string());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.sweep, r.variant, r.seed, r.n_unlabeled, r.n_inliers, r.n_leftovers, r.n_negatives, purity, r.record.f1
            );
        }
        s
    }

    /// `metrics.csv`, `metrics.json` and `ablation.csv` under `dir`.
    pub fn write(&self, dir: &std::path::Path, dataset: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rows = self.metric_rows(dataset);
        let files = [
            ("metrics.csv", metrics::metrics_csv(&rows)),
            ("metrics.json", metrics::metrics_json(&rows)?),
            ("ablation.csv", self.counts_csv()),
        ];
        for (name, text) in files {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Run `sweep` over every seed of `cfg.run.seeds` and write the tables to
/// `cfg.run.out`.
pub fn run_ablation(cfg: &PipelineConfig, sweep: &Sweep) -> Result<AblationReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    match sweep {
        Sweep::Variant | Sweep::Population => {
            for &seed in &cfg.run.seeds {
                let mut ctx = prepare_seed(cfg, seed)?;
                rows.extend(run_sweep_on(&mut ctx, cfg, sweep)?);
            }
        }
        Sweep::LabeledFraction(fractions) => {
            if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                return Err(Error::invalid("labeled fractions must lie in (0, 1]"));
            }
            let total = training_positives(cfg)?;
            for &frac in fractions {
                let mut c = cfg.clone();
                c.data.n_labeled = ((frac * total as f64).round() as usize).max(2);
                let label = format!("{}%", frac * 100.0);
                for &seed in &cfg.run.seeds {
                    let mut ctx = prepare_seed(&c, seed)?;
                    rows.push(ctx.run(&c, sweep.name(), &label)?);
                }
            }
        }
    }
    let report = AblationReport::new(sweep, rows);
    report.write(&cfg.run.out, cfg.data.source.name())?;
    Ok(report)
}
