//! File layout of a run directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augmentation::EmbeddingSet;
use crate::dataset::{ImageSet, PUSplit, Shape};
use crate::error::{Error, Result};
use crate::matrix::EncodingMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    root: PathBuf,
}

macro_rules! artifact {
    ($($name:ident => $file:literal),+ $(,)?) => {
        $(pub fn $name(&self) -> PathBuf { self.root.join($file) })+
    };
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self) -> Result<()> {
        let data = self.root.join("data");
        fs::create_dir_all(&data).map_err(|e| Error::io(&data, e))
    }

    artifact! {
        config => "config.txt",
        pl => "data/pl.dpu",
        u => "data/u.dpu",
        test => "data/test.dpu",
        split => "data/split.json",
        cae => "cae.ckpt",
        cae_train => "cae_train.csv",
        z_l => "z_l.dpu",
        z_u => "z_u.dpu",
        z_test => "z_test.dpu",
        z_nu => "z_nu.dpu",
        z_nu_provenance => "z_nu_provenance.csv",
        lambda_samples => "lambda_samples.csv",
        forest => "forest.bin",
        scores_u => "scores_u.csv",
        negatives => "negatives.csv",
        classifier => "classifier.ckpt",
        classifier_train => "classifier_train.csv",
        predictions => "predictions.csv",
        roc => "roc.csv",
        metrics_csv => "metrics.csv",
        metrics_json => "metrics.json",
        report => "report.json",
        timings => "timings.json",
    }
}

#[derive(Serialize, Deserialize)]
struct SplitMeta {
    shape: String,
    positive_classes: BTreeSet<u8>,
    labeled_indices: Vec<usize>,
    unlabeled_indices: Vec<usize>,
    unlabeled_truth: Vec<u8>,
    test_labels: Vec<u8>,
}

pub(crate) fn save_split(split: &PUSplit, paths: &RunPaths) -> Result<()> {
    split.positive_labeled.to_matrix().save(paths.pl())?;
    split.unlabeled.to_matrix().save(paths.u())?;
    split.test.to_matrix().save(paths.test())?;
    let meta = SplitMeta {
        shape: split.positive_labeled.shape().to_string(),
        positive_classes: split.positive_class_ids.clone(),
        labeled_indices: split.labeled_indices.clone(),
        unlabeled_indices: split.unlabeled_indices.clone(),
        unlabeled_truth: split.unlabeled_truth_for_evaluation().to_vec(),
        test_labels: split.test_labels().to_vec(),
    };
    let path = paths.split();
    fs::write(&path, serde_json::to_string(&meta)?).map_err(|e| Error::io(&path, e))
}

pub(crate) fn load_split(paths: &RunPaths) -> Result<PUSplit> {
    let path = paths.split();
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: SplitMeta = serde_json::from_str(&text)?;
    let shape: Shape = meta.shape.parse()?;
    let images = |p: PathBuf| ImageSet::from_matrix(&EncodingMatrix::load(p)?, shape);
    let n_l = meta.labeled_indices.len();
    let positive_labeled = images(paths.pl())?.with_labels(Some(vec![1; n_l]))?;
    let unlabeled = images(paths.u())?;
    let test = images(paths.test())?.with_labels(Some(meta.test_labels))?;
    PUSplit::from_parts(
        positive_labeled,
        unlabeled,
        test,
        meta.positive_classes,
        meta.labeled_indices,
        meta.unlabeled_indices,
        meta.unlabeled_truth,
    )
}

/// λ draws, one per line; nothing for modes without a scalar λ.
pub(crate) fn lambda_csv(set: &EmbeddingSet) -> String {
    let mut s = String::from("lambda\n");
    for p in set.provenance.iter().filter(|p| p.lambda.is_finite()) {
        s.push_str(&format!("{}\n", p.lambda));
    }
    s
}

pub(crate) fn losses_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        s.push_str(&format!("{e},{l}\n"));
    }
    s
}
