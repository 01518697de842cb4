//! Classification metrics, AUC, the Mann-Whitney U test and negative-set
//! purity, plus the metrics report files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn check_binary(v: &[u8], what: &str) -> Result<()> {
    match v.iter().find(|&&l| l > 1) {
        Some(l) => Err(Error::invalid(format!("{what} label {l} is not 0 or 1"))),
        None => Ok(()),
    }
}

/// Confusion-matrix metrics. Precision is 0 when nothing is predicted
/// positive, recall is 0 when there are no positives.
pub fn classification_metrics(truth: &[u8], predicted: &[u8]) -> Result<MetricsRecord> {
    if truth.len() != predicted.len() {
        return Err(Error::shape(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("metric labels"));
    }
    check_binary(truth, "truth")?;
    check_binary(predicted, "predicted")?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (0, 0) => tn += 1,
            _ => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsRecord {
        accuracy: ratio(tp + tn, truth.len()),
        precision,
        recall,
        f1,
        auc: None,
        tp,
        fp,
        tn,
        fn_,
    })
}

fn split_scores(truth: &[u8], scores: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if truth.len() != scores.len() {
        return Err(Error::shape(truth.len(), scores.len()));
    }
    check_binary(truth, "truth")?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos: Vec<f64> = truth.iter().zip(scores).filter(|(&t, _)| t == 1).map(|(_, &s)| s).collect();
    let neg: Vec<f64> = truth.iter().zip(scores).filter(|(&t, _)| t == 0).map(|(_, &s)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("AUC needs both classes present"));
    }
    Ok((pos, neg))
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half.
pub fn auc(truth: &[u8], scores: &[f64]) -> Result<f64> {
    let (pos, mut neg) = split_scores(truth, scores)?;
    neg.sort_by(f64::total_cmp);
    // twice the win count, so ties stay integral
    let twice: u64 = pos
        .iter()
        .map(|&p| {
            let below = neg.partition_point(|&n| n < p) as u64;
            let at_or_below = neg.partition_point(|&n| n <= p) as u64;
            2 * below + (at_or_below - below)
        })
        .sum();
    Ok(twice as f64 / (2.0 * pos.len() as f64 * neg.len() as f64))
}

/// ROC curve points `(threshold, fpr, tpr)`, one per distinct score from
/// the highest down, starting at (inf, 0, 0).
pub fn roc_points(truth: &[u8], scores: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let (pos, neg) = split_scores(truth, scores)?;
    let mut all: Vec<(f64, u8)> = scores.iter().copied().zip(truth.iter().copied()).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut out = vec![(f64::INFINITY, 0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < all.len() {
        let s = all[k].0;
        while k < all.len() && all[k].0 == s {
            if all[k].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        out.push((s, fp as f64 / nn, tp as f64 / np));
    }
    Ok(out)
}

pub fn roc_csv(points: &[(f64, f64, f64)]) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for &(t, f, p) in points {
        s.push_str(&format!("{t},{f},{p}\n"));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// Rank-sum statistic of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Largest per-sample size for which the exact permutation distribution is
/// used instead of the normal approximation.
pub const EXACT_MAX: usize = 8;

/// Midranks (1-based) of the pooled values, doubled so they are integers.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let mut e = k;
        while e + 1 < order.len() && pooled[order[e + 1]] == pooled[order[k]] {
            e += 1;
        }
        // ranks k+1..=e+1, doubled midrank = k+1 + e+1
        for &i in &order[k..=e] {
            ranks[i] = (k + e + 2) as u64;
        }
        ties.push(e - k + 1);
        k = e + 1;
    }
    (ranks, ties)
}

/// Permutation distribution of the doubled rank sum of `n_a` items drawn
/// from `ranks`: `counts[s]` ways to reach doubled sum `s`.
fn rank_sum_distribution(ranks: &[u64], n_a: usize) -> Vec<Vec<f64>> {
    let max: usize = ranks.iter().map(|&r| r as usize).sum();
    // ways[j][s]: subsets of size j with doubled sum s
    let mut ways = vec![vec![0.0f64; max + 1]; n_a + 1];
    ways[0][0] = 1.0;
    for &r in ranks {
        let r = r as usize;
        for j in (1..=n_a).rev() {
            for s in (r..=max).rev() {
                let add = ways[j - 1][s - r];
                if add != 0.0 {
                    ways[j][s] += add;
                }
            }
        }
    }
    ways
}

/// Mann-Whitney U with midranks. Exact permutation p-value when both
/// samples have at most [`EXACT_MAX`] values; otherwise the normal
/// approximation with tie-corrected variance and continuity correction.
/// The two-sided p-value is the probability of a statistic at least as far
/// from its mean as the observed one.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("Mann-Whitney sample"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN in Mann-Whitney sample"));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);
    let twice_ra: u64 = ranks[..na].iter().sum();
    let offset = (na * (na + 1)) as f64 / 2.0;
    let u = twice_ra as f64 / 2.0 - offset;
    let mu = (na * nb) as f64 / 2.0;

    if na <= EXACT_MAX && nb <= EXACT_MAX {
        let ways = rank_sum_distribution(&ranks, na);
        let dist = &ways[na];
        let total: f64 = dist.iter().sum();
        let observed = (u - mu).abs();
        let mut extreme = 0.0;
        for (s, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let us = s as f64 / 2.0 - offset;
            // tolerance covers the half-integer grid only
            if (us - mu).abs() >= observed - 1e-9 {
                extreme += w;
            }
        }
        return Ok(MannWhitney {
            u,
            p: (extreme / total).min(1.0),
            exact: true,
        });
    }

    let n = (na + nb) as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return Ok(MannWhitney { u, p: 1.0, exact: false });
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    Ok(MannWhitney {
        u,
        p: (2.0 * normal.sf(z)).min(1.0),
        exact: false,
    })
}

/// Fraction of `selected` whose hidden label is negative.
pub fn negative_purity(selected: &[usize], hidden_truth: &[u8]) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::Empty("selected negatives"));
    }
    let mut neg = 0usize;
    for &i in selected {
        match hidden_truth.get(i) {
            Some(0) => neg += 1,
            Some(_) => {}
            None => return Err(Error::invalid(format!("index {i} out of range for {} labels", hidden_truth.len()))),
        }
    }
    Ok(neg as f64 / selected.len() as f64)
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub record: MetricsRecord,
}

pub const METRICS_HEADER: &str = "dataset,variant,seed,acc,prec,rec,f1,auc";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        let m = &r.record;
        let auc = m.auc.map_or_else(String::new, |a| a.to_string());
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.dataset, r.variant, r.seed, m.accuracy, m.precision, m.recall, m.f1, auc
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    if values.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub dataset: String,
    pub variant: String,
    pub seeds: Vec<u64>,
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub auc: Option<MeanStd>,
}

/// Mean and standard deviation over seeds for each (dataset, variant), in
/// first-appearance order.
pub fn summarize(rows: &[MetricsRow]) -> Vec<MetricsSummary> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.dataset.clone(), r.variant.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let col = |f: fn(&MetricsRecord) -> f64| mean_std(&g.iter().map(|r| f(&r.record)).collect::<Vec<_>>());
            let aucs: Option<Vec<f64>> = g.iter().map(|r| r.record.auc).collect();
            MetricsSummary {
                dataset: key.0.clone(),
                variant: key.1.clone(),
                seeds: g.iter().map(|r| r.seed).collect(),
                accuracy: col(|m| m.accuracy),
                precision: col(|m| m.precision),
                recall: col(|m| m.recall),
                f1: col(|m| m.f1),
                auc: aucs.map(|a| mean_std(&a)),
            }
        })
        .collect()
}

pub fn metrics_json(rows: &[MetricsRow]) -> Result<String> {
    #[derive(Serialize)]
    struct Report<'a> {
        runs: &'a [MetricsRow],
        summary: Vec<MetricsSummary>,
    }
    Ok(serde_json::to_string_pretty(&Report {
        runs: rows,
        summary: summarize(rows),
    })?)
}
