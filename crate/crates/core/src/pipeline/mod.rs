//! End-to-end orchestration. Every stage reads its inputs from the run
//! directory and writes its outputs there, so running the stages one by one
//! gives exactly what [`run_pipeline`] gives.

mod ablation;
mod artifacts;
mod psnr;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use ablation::{prepare_seed, run_ablation, run_sweep_on, AblationReport, AblationRow, SeedContext, Sweep, VARIANTS};
pub use artifacts::RunPaths;
pub use psnr::{best_threshold_accuracy, psnr_experiment_on, run_psnr_experiment, PsnrReport};

use crate::anomaly::{self, AnomalyPartition, IsolationForest};
use crate::augmentation::{densify, AugmentationSpec, EmbeddingSet};
use crate::autoencoder::{train_cae, AutoencoderModel, TrainReport};
use crate::classifier::{self, BinaryClassifier, ClassifierReport};
use crate::config::{ClassifierInput, DataSource, PipelineConfig, SelectStrategy};
use crate::dataset::{self, ImageSet, PUSplit, Shape, SyntheticSpec};
use crate::error::{Error, Result};
use crate::matrix::EncodingMatrix;
use crate::metrics::{self, MetricsRecord, MetricsRow};
use crate::rng;
use crate::selection::{self, RankMode, RankedLeftovers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    PrepareData,
    TrainCae,
    Encode,
    Densify,
    Detect,
    SelectNegatives,
    TrainClassifier,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::PrepareData,
        Stage::TrainCae,
        Stage::Encode,
        Stage::Densify,
        Stage::Detect,
        Stage::SelectNegatives,
        Stage::TrainClassifier,
        Stage::Evaluate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::PrepareData => "prepare-data",
            Stage::TrainCae => "train-cae",
            Stage::Encode => "encode",
            Stage::Densify => "densify",
            Stage::Detect => "detect",
            Stage::SelectNegatives => "select-negatives",
            Stage::TrainClassifier => "train-classifier",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

/// Outcome of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub config_hash: String,
    pub metrics: MetricsRecord,
    pub n_unlabeled: usize,
    /// |Z̃_PUL|: unlabeled samples the detector called inliers.
    pub n_inliers: usize,
    pub n_leftovers: usize,
    pub n_negatives: usize,
    pub negative_purity: Option<f64>,
    pub contamination: Option<f64>,
    pub threshold: Option<f64>,
    /// Wall-clock seconds per stage. Written to `timings.json`, not to the
    /// report, so reports of identical runs are byte-identical.
    #[serde(skip)]
    pub durations: Vec<(String, f64)>,
}

/// Short variant label: augmentation, strategy and (when not the default)
/// population mode.
pub fn variant_label(cfg: &PipelineConfig) -> String {
    if cfg.select.strategy == SelectStrategy::Naive {
        return "naive".into();
    }
    let aug = cfg.augment.mode.map_or("none", |m| m.name());
    let mut s = format!("{aug}-{}", cfg.select.strategy.name());
    if cfg.select.strategy == SelectStrategy::Rank && cfg.select.rank_mode != RankMode::ForestScore {
        s.push('-');
        s.push_str(cfg.select.rank_mode.name());
    }
    if cfg.select.population != selection::SelectionMode::MatchPositives {
        s.push('-');
        s.push_str(cfg.select.population.name());
    }
    s
}

pub(crate) fn stage_seed(seed: u64, stage: &str) -> u64 {
    rng::derive(seed, stage)
}

fn stage_err(stage: Stage) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage {
        stage: stage.name(),
        source: Box::new(e),
    }
}

fn load_images(cfg: &PipelineConfig, seed: u64) -> Result<PUSplit> {
    let d = &cfg.data;
    let split_seed = stage_seed(seed, "split");
    match d.source {
        DataSource::Blobs | DataSource::Rings => {
            let mut spec = if d.source == DataSource::Blobs {
                SyntheticSpec::blobs(d.n_labeled, d.synthetic_unlabeled, d.synthetic_test)
            } else {
                SyntheticSpec::rings(d.n_labeled, d.synthetic_unlabeled, d.synthetic_test)
            };
            spec.positive_fraction = d.synthetic_positive_fraction;
            Ok(dataset::gen_synthetic(&spec, split_seed)?.0)
        }
        DataSource::Fmnist => {
            let (train, test) = load_fmnist(&d.path)?;
            dataset::make_pu_split(&train, &d.positive_classes, d.n_labeled, &test, split_seed)
        }
        DataSource::Cifar10 => {
            let (train, test) = load_cifar(&d.path)?;
            dataset::make_pu_split(&train, &d.positive_classes, d.n_labeled, &test, split_seed)
        }
    }
}

pub(crate) fn load_fmnist(dir: &Path) -> Result<(ImageSet, ImageSet)> {
    let train = dataset::load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let test = dataset::load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
    Ok((train, test))
}

pub(crate) fn load_cifar(dir: &Path) -> Result<(ImageSet, ImageSet)> {
    let batches: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
    let train = dataset::load_cifar10(&batches)?;
    let test = dataset::load_cifar10(&[dir.join("test_batch.bin")])?;
    Ok((train, test))
}

/// Load or generate the data, split it and apply the size caps and
/// preprocessing of the config.
pub fn prepare_split(cfg: &PipelineConfig, seed: u64) -> Result<PUSplit> {
    let mut split = load_images(cfg, seed)?;
    if cfg.data.max_unlabeled > 0 {
        split = dataset::subsample_unlabeled(&split, cfg.data.max_unlabeled, stage_seed(seed, "subsample"));
    }
    if cfg.data.max_test > 0 && split.test.len() > cfg.data.max_test {
        let mut keep = rand::seq::index::sample(
            &mut rng::labeled(seed, "test-subsample"),
            split.test.len(),
            cfg.data.max_test,
        )
        .into_vec();
        keep.sort_unstable();
        split.test = split.test.select(&keep);
    }
    if let Some(shape) = cfg.data.image_shape {
        split.positive_labeled = dataset::preprocess(&split.positive_labeled, shape)?;
        split.unlabeled = dataset::preprocess(&split.unlabeled, shape)?;
        split.test = dataset::preprocess(&split.test, shape)?;
    }
    Ok(split)
}

pub fn fit_autoencoder(cfg: &PipelineConfig, split: &PUSplit, seed: u64) -> Result<(AutoencoderModel, TrainReport)> {
    train_cae::<f32>(
        &split.positive_labeled,
        &cfg.autoencoder_spec(),
        &cfg.cae_training(),
        stage_seed(seed, "cae"),
    )
}

/// Z_ν, or `None` when augmentation is off or the detector is bypassed.
pub fn augment(cfg: &PipelineConfig, z_l: &EncodingMatrix, seed: u64) -> Result<Option<EmbeddingSet>> {
    let Some(mode) = cfg.augment.mode else {
        return Ok(None);
    };
    if cfg.select.strategy == SelectStrategy::Naive {
        return Ok(None);
    }
    let spec = AugmentationSpec {
        mode,
        k: cfg.augment.k,
        n_pairs: cfg.pair_budget(z_l.rows()),
        samples_per_pair: cfg.augment.samples_per_pair,
        mixup_alpha: cfg.augment.mixup_alpha,
        seed: stage_seed(seed, "augment"),
    };
    densify(z_l, &spec).map(Some)
}

/// Contamination used for the threshold: the override, or |P_L| over the
/// number of embeddings the pair budget produces.
pub fn contamination_for(cfg: &PipelineConfig, n_labeled: usize) -> Result<f64> {
    match cfg.forest.contamination {
        Some(c) => Ok(c),
        None => anomaly::contamination(n_labeled, cfg.pair_budget(n_labeled).max(1), cfg.augment.samples_per_pair),
    }
}

/// Fit the forest on Z_ν ∪ Z_L (Z_L alone without augmentation), set its
/// threshold and split U.
pub fn detect(
    cfg: &PipelineConfig,
    z_l: &EncodingMatrix,
    z_nu: Option<&EncodingMatrix>,
    z_u: &EncodingMatrix,
    seed: u64,
) -> Result<(IsolationForest, AnomalyPartition)> {
    let fitting = match z_nu {
        Some(z) => z.vstack(z_l)?,
        None => z_l.clone(),
    };
    let forest = anomaly::build_forest(&fitting, cfg.forest.trees, cfg.forest.subsample, stage_seed(seed, "forest"))?;
    let c = contamination_for(cfg, z_l.rows())?;
    let forest = anomaly::fit_threshold(forest, &fitting, c)?;
    let partition = anomaly::partition_unlabeled(&forest, z_u)?;
    Ok((forest, partition))
}

fn random_order(candidates: &[usize], seed: u64) -> RankedLeftovers {
    let mut r = rng::labeled(seed, "random-order");
    let mut entries: Vec<(usize, f64)> = candidates.iter().map(|&i| (i, r.random::<f64>())).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    RankedLeftovers {
        mode: RankMode::ForestScore,
        entries,
    }
}

/// Order the candidates and pick Ñ. `partition` is required unless the
/// strategy is naive; `z_nu` is only read for min-distance ranking.
pub fn choose_negatives(
    cfg: &PipelineConfig,
    partition: Option<&AnomalyPartition>,
    z_u: &EncodingMatrix,
    z_l: &EncodingMatrix,
    z_nu: Option<&EncodingMatrix>,
    seed: u64,
) -> Result<(RankedLeftovers, Vec<usize>)> {
    let select_seed = stage_seed(seed, "select");
    let need = || partition.ok_or(Error::Empty("anomaly partition"));
    let ranked = match cfg.select.strategy {
        SelectStrategy::Naive => random_order(&(0..z_u.rows()).collect::<Vec<_>>(), select_seed),
        SelectStrategy::Random => {
            let p = need()?;
            if p.leftover_ids.is_empty() {
                return Err(Error::Empty("anomaly leftovers"));
            }
            random_order(&p.leftover_ids, select_seed)
        }
        SelectStrategy::Rank => {
            let positives = match (cfg.select.rank_mode, z_nu) {
                (RankMode::MinDistance, Some(z)) => z_l.vstack(z)?,
                _ => z_l.clone(),
            };
            selection::rank_leftovers(need()?, z_u, &positives, cfg.select.rank_mode)?
        }
    };
    let chosen = selection::select_negatives(&ranked, cfg.select.population, z_l.rows(), select_seed)?;
    Ok((ranked, chosen))
}

/// Column-wise min-max scaling fitted on the training encodings, used when
/// the classifier consumes encodings instead of images.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingScaler {
    lo: Vec<f32>,
    hi: Vec<f32>,
}

impl EncodingScaler {
    pub fn fit(parts: &[&EncodingMatrix]) -> Self {
        let d = parts.first().map_or(0, |m| m.cols());
        let mut lo = vec![f32::INFINITY; d];
        let mut hi = vec![f32::NEG_INFINITY; d];
        for m in parts {
            for row in m.iter_rows() {
                for (c, &v) in row.iter().enumerate() {
                    lo[c] = lo[c].min(v);
                    hi[c] = hi[c].max(v);
                }
            }
        }
        Self { lo, hi }
    }

    pub fn apply(&self, m: &EncodingMatrix) -> Result<ImageSet> {
        let mut data = Vec::with_capacity(m.as_slice().len());
        for row in m.iter_rows() {
            for (c, &v) in row.iter().enumerate() {
                let span = self.hi[c] - self.lo[c];
                let x = if span > 0.0 { (v - self.lo[c]) / span } else { 0.0 };
                data.push(if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) });
            }
        }
        ImageSet::new(Shape::new(1, 1, m.cols()), data, None)
    }
}

/// Classifier inputs for (P_L, U, test) as configured.
pub struct ClassifierData {
    pub positives: ImageSet,
    pub unlabeled: ImageSet,
    pub test: ImageSet,
}

pub fn classifier_data(
    cfg: &PipelineConfig,
    split: &PUSplit,
    encodings: Option<(&EncodingMatrix, &EncodingMatrix, &EncodingMatrix)>,
) -> Result<ClassifierData> {
    match cfg.classifier.input {
        ClassifierInput::Images => Ok(ClassifierData {
            positives: split.positive_labeled.clone(),
            unlabeled: split.unlabeled.clone(),
            test: split.test.clone(),
        }),
        ClassifierInput::Encodings => {
            let (z_l, z_u, z_t) = encodings.ok_or(Error::Empty("encodings for the classifier"))?;
            let scaler = EncodingScaler::fit(&[z_l, z_u]);
            Ok(ClassifierData {
                positives: scaler.apply(z_l)?,
                unlabeled: scaler.apply(z_u)?,
                test: scaler.apply(z_t)?,
            })
        }
    }
}

pub fn fit_classifier(
    cfg: &PipelineConfig,
    data: &ClassifierData,
    negatives: &[usize],
    seed: u64,
) -> Result<(BinaryClassifier, ClassifierReport)> {
    let neg = data.unlabeled.select(negatives);
    classifier::train_classifier(
        &data.positives,
        &neg,
        &cfg.classifier_arch(),
        &cfg.classifier_training(),
        stage_seed(seed, "classifier"),
    )
}

/// Test-set probabilities and metrics (AUC included when both classes occur).
pub fn evaluate_model(model: &BinaryClassifier, test: &ImageSet, truth: &[u8]) -> Result<(Vec<f64>, MetricsRecord)> {
    let probs = classifier::predict(model, test)?;
    let mut record = metrics::classification_metrics(truth, &classifier::labels_from(&probs))?;
    record.auc = metrics::auc(truth, &probs).ok();
    Ok((probs, record))
}

pub(crate) fn purity_of(split: &PUSplit, negatives: &[usize]) -> Option<f64> {
    let truth = split.unlabeled_truth_for_evaluation();
    if negatives.is_empty() || truth.len() != split.unlabeled.len() {
        return None;
    }
    metrics::negative_purity(negatives, truth).ok()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn detector_used(cfg: &PipelineConfig) -> bool {
    cfg.select.strategy != SelectStrategy::Naive
}

fn needs_encodings_for_classifier(cfg: &PipelineConfig) -> bool {
    cfg.classifier.input == ClassifierInput::Encodings
}

/// Run a single stage against the run directory `cfg.run.out`. The
/// evaluate stage returns the run report.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<Option<PipelineReport>> {
    let paths = RunPaths::new(&cfg.run.out);
    paths.create().map_err(stage_err(stage))?;
    stage_body(cfg, stage, &paths).map_err(stage_err(stage))
}

fn stage_body(cfg: &PipelineConfig, stage: Stage, paths: &RunPaths) -> Result<Option<PipelineReport>> {
    let seed = cfg.run.seed;
    match stage {
        Stage::PrepareData => {
            let split = prepare_split(cfg, seed)?;
            artifacts::save_split(&split, paths)
        }
        Stage::TrainCae => {
            let split = artifacts::load_split(paths)?;
            let (model, report) = fit_autoencoder(cfg, &split, seed)?;
            model.save(paths.cae())?;
            write(&paths.cae_train(), &report.to_csv())
        }
        Stage::Encode => {
            let split = artifacts::load_split(paths)?;
            let model = AutoencoderModel::load(paths.cae())?;
            model.encode(&split.positive_labeled)?.save(paths.z_l())?;
            model.encode(&split.unlabeled)?.save(paths.z_u())?;
            if needs_encodings_for_classifier(cfg) {
                model.encode(&split.test)?.save(paths.z_test())?;
            }
            Ok(())
        }
        Stage::Densify => {
            let z_l = EncodingMatrix::load(paths.z_l())?;
            if let Some(set) = augment(cfg, &z_l, seed)? {
                set.save(&paths.z_nu(), &paths.z_nu_provenance())?;
                write(&paths.lambda_samples(), &artifacts::lambda_csv(&set))?;
            }
            Ok(())
        }
        Stage::Detect => {
            if !detector_used(cfg) {
                return Ok(None);
            }
            let z_l = EncodingMatrix::load(paths.z_l())?;
            let z_u = EncodingMatrix::load(paths.z_u())?;
            let z_nu = load_z_nu(cfg, paths)?;
            let (forest, partition) = detect(cfg, &z_l, z_nu.as_ref(), &z_u, seed)?;
            forest.save(paths.forest())?;
            write(&paths.scores_u(), &partition.scores_csv())
        }
        Stage::SelectNegatives => {
            let z_l = EncodingMatrix::load(paths.z_l())?;
            let z_u = EncodingMatrix::load(paths.z_u())?;
            let partition = load_partition(cfg, paths)?;
            let z_nu = if cfg.select.rank_mode == RankMode::MinDistance {
                load_z_nu(cfg, paths)?
            } else {
                None
            };
            let (ranked, chosen) = choose_negatives(cfg, partition.as_ref(), &z_u, &z_l, z_nu.as_ref(), seed)?;
            write(&paths.negatives(), &selection::negatives_csv(&ranked, &chosen))
        }
        Stage::TrainClassifier => {
            let split = artifacts::load_split(paths)?;
            let negatives = selection::parse_negatives_csv(&read(&paths.negatives())?)?;
            let data = load_classifier_data(cfg, &split, paths)?;
            let (model, report) = fit_classifier(cfg, &data, &negatives, seed)?;
            model.save(paths.classifier())?;
            write(&paths.classifier_train(), &artifacts::losses_csv(&report.losses))
        }
        Stage::Evaluate => {
            let split = artifacts::load_split(paths)?;
            let data = load_classifier_data(cfg, &split, paths)?;
            let model = BinaryClassifier::load(paths.classifier())?;
            let (probs, record) = evaluate_model(&model, &data.test, split.test_labels())?;
            let negatives = selection::parse_negatives_csv(&read(&paths.negatives())?)?;
            let partition = load_partition(cfg, paths)?;
            let forest = if detector_used(cfg) {
                Some(IsolationForest::load(paths.forest())?)
            } else {
                None
            };
            let report = build_report(cfg, &split, record, partition.as_ref(), forest.as_ref(), &negatives);
            write(&paths.predictions(), &classifier::predictions_csv(&probs))?;
            if let Ok(points) = metrics::roc_points(split.test_labels(), &probs) {
                write(&paths.roc(), &metrics::roc_csv(&points))?;
            }
            let row = MetricsRow {
                dataset: report.dataset.clone(),
                variant: report.variant.clone(),
                seed: report.seed,
                record,
            };
            write(&paths.metrics_csv(), &metrics::metrics_csv(std::slice::from_ref(&row)))?;
            write(&paths.metrics_json(), &metrics::metrics_json(std::slice::from_ref(&row))?)?;
            write(&paths.report(), &serde_json::to_string_pretty(&report)?)?;
            return Ok(Some(report));
        }
    }
    .map(|()| None)
}

fn load_z_nu(cfg: &PipelineConfig, paths: &RunPaths) -> Result<Option<EncodingMatrix>> {
    if cfg.augment.mode.is_some() && detector_used(cfg) {
        Ok(Some(EncodingMatrix::load(paths.z_nu())?))
    } else {
        Ok(None)
    }
}

fn load_partition(cfg: &PipelineConfig, paths: &RunPaths) -> Result<Option<AnomalyPartition>> {
    if detector_used(cfg) {
        Ok(Some(AnomalyPartition::parse_scores_csv(&read(&paths.scores_u())?)?))
    } else {
        Ok(None)
    }
}

fn load_classifier_data(cfg: &PipelineConfig, split: &PUSplit, paths: &RunPaths) -> Result<ClassifierData> {
    if needs_encodings_for_classifier(cfg) {
        let z_l = EncodingMatrix::load(paths.z_l())?;
        let z_u = EncodingMatrix::load(paths.z_u())?;
        let z_t = EncodingMatrix::load(paths.z_test())?;
        classifier_data(cfg, split, Some((&z_l, &z_u, &z_t)))
    } else {
        classifier_data(cfg, split, None)
    }
}

pub(crate) fn build_report(
    cfg: &PipelineConfig,
    split: &PUSplit,
    metrics: MetricsRecord,
    partition: Option<&AnomalyPartition>,
    forest: Option<&IsolationForest>,
    negatives: &[usize],
) -> PipelineReport {
    let n_u = split.unlabeled.len();
    let (n_inliers, n_leftovers) = match partition {
        Some(p) => (p.inlier_ids.len(), p.leftover_ids.len()),
        None => (0, n_u),
    };
    PipelineReport {
        dataset: cfg.data.source.name().into(),
        variant: variant_label(cfg),
        seed: cfg.run.seed,
        config_hash: cfg.hash(),
        metrics,
        n_unlabeled: n_u,
        n_inliers,
        n_leftovers,
        n_negatives: negatives.len(),
        negative_purity: purity_of(split, negatives),
        contamination: forest.and_then(|f| f.contamination),
        threshold: forest.and_then(|f| f.threshold).filter(|t| t.is_finite()),
        durations: Vec::new(),
    }
}

/// Run every stage in order in `cfg.run.out`, persisting all artifacts.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let paths = RunPaths::new(&cfg.run.out);
    paths.create()?;
    write(&paths.config(), &cfg.to_flat())?;
    let mut durations = Vec::new();
    let mut report = None;
    for stage in Stage::ALL {
        let started = Instant::now();
        log::info!("stage {stage}");
        report = run_stage(cfg, stage)?;
        durations.push((stage.name().to_string(), started.elapsed().as_secs_f64()));
    }
    let timings: serde_json::Map<String, serde_json::Value> =
        durations.iter().map(|(k, v)| (k.clone(), serde_json::Value::from(*v))).collect();
    write(&paths.timings(), &serde_json::to_string_pretty(&timings)?)?;
    let mut report = report.ok_or(Error::Empty("pipeline report"))?;
    report.durations = durations;
    Ok(report)
}
