use std::collections::BTreeSet;

use rand::seq::index;

use super::ImageSet;
use crate::error::{Error, Result};
use crate::rng;

/// Positive-labeled set, unlabeled pool and test set.
///
/// The unlabeled pool carries no labels; its binary ground truth is kept
/// aside and only reachable through [`PUSplit::unlabeled_truth_for_evaluation`].
#[derive(Debug, Clone, PartialEq)]
pub struct PUSplit {
    pub positive_labeled: ImageSet,
    pub unlabeled: ImageSet,
    /// Binary labels (1 = positive class).
    pub test: ImageSet,
    pub positive_class_ids: BTreeSet<u8>,
    /// Provenance: indices into the source training set.
    pub labeled_indices: Vec<usize>,
    pub unlabeled_indices: Vec<usize>,
    unlabeled_truth: Vec<u8>,
}

impl PUSplit {
    pub(crate) fn from_parts(
        positive_labeled: ImageSet,
        unlabeled: ImageSet,
        test: ImageSet,
        positive_class_ids: BTreeSet<u8>,
        labeled_indices: Vec<usize>,
        unlabeled_indices: Vec<usize>,
        unlabeled_truth: Vec<u8>,
    ) -> Result<Self> {
        if unlabeled_truth.len() != unlabeled.len() || unlabeled_indices.len() != unlabeled.len() {
            return Err(Error::shape(unlabeled.len(), unlabeled_truth.len()));
        }
        if labeled_indices.len() != positive_labeled.len() {
            return Err(Error::shape(positive_labeled.len(), labeled_indices.len()));
        }
        Ok(Self {
            positive_labeled,
            unlabeled,
            test,
            positive_class_ids,
            labeled_indices,
            unlabeled_indices,
            unlabeled_truth,
        })
    }

    /// Hidden binary ground truth of the unlabeled pool. Evaluation only.
    pub fn unlabeled_truth_for_evaluation(&self) -> &[u8] {
        &self.unlabeled_truth
    }

    pub fn test_labels(&self) -> &[u8] {
        self.test.labels().unwrap_or(&[])
    }
}

pub(crate) fn binarize(labels: &[u8], positive: &BTreeSet<u8>) -> Vec<u8> {
    labels.iter().map(|l| positive.contains(l) as u8).collect()
}

/// Draw `n_labeled` positives uniformly without replacement from the
/// merged positive classes; everything else in `images` becomes unlabeled.
pub fn make_pu_split(
    images: &ImageSet,
    positive_class_ids: &BTreeSet<u8>,
    n_labeled: usize,
    test: &ImageSet,
    seed: u64,
) -> Result<PUSplit> {
    let labels = images
        .labels()
        .ok_or_else(|| Error::invalid("training images carry no labels"))?;
    let test_labels = test
        .labels()
        .ok_or_else(|| Error::invalid("test images carry no labels"))?;
    if test.shape() != images.shape() && !test.is_empty() {
        return Err(Error::shape(images.shape(), test.shape()));
    }
    let positives: Vec<usize> = (0..labels.len())
        .filter(|&i| positive_class_ids.contains(&labels[i]))
        .collect();
    if positives.is_empty() {
        return Err(Error::invalid(format!(
            "positive classes {positive_class_ids:?} do not occur in the training labels"
        )));
    }
    if n_labeled > positives.len() {
        return Err(Error::invalid(format!(
            "n_labeled = {n_labeled} exceeds the {} available positives",
            positives.len()
        )));
    }
    let mut rng = rng::stream(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, positives.len(), n_labeled)
        .into_iter()
        .map(|k| positives[k])
        .collect();
    picked.sort_unstable();

    let mut is_labeled = vec![false; labels.len()];
    for &i in &picked {
        is_labeled[i] = true;
    }
    let unlabeled_indices: Vec<usize> = (0..labels.len()).filter(|&i| !is_labeled[i]).collect();
    let unlabeled_truth = binarize(
        &unlabeled_indices.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
        positive_class_ids,
    );

    let positive_labeled = images.select(&picked).with_labels(Some(vec![1; picked.len()]))?;
    let unlabeled = images.select(&unlabeled_indices).with_labels(None)?;
    let test = test.clone().with_labels(Some(binarize(test_labels, positive_class_ids)))?;
    PUSplit::from_parts(
        positive_labeled,
        unlabeled,
        test,
        positive_class_ids.clone(),
        picked,
        unlabeled_indices,
        unlabeled_truth,
    )
}

/// Keep at most `max` unlabeled samples, drawn uniformly without replacement
/// (original order preserved).
pub fn subsample_unlabeled(split: &PUSplit, max: usize, seed: u64) -> PUSplit {
    let n = split.unlabeled.len();
    if n <= max {
        return split.clone();
    }
    let mut keep = index::sample(&mut rng::stream(seed), n, max).into_vec();
    keep.sort_unstable();
    let mut out = split.clone();
    out.unlabeled = split.unlabeled.select(&keep);
    out.unlabeled_indices = keep.iter().map(|&k| split.unlabeled_indices[k]).collect();
    out.unlabeled_truth = keep.iter().map(|&k| split.unlabeled_truth[k]).collect();
    out
}
