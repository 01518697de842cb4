//! Isolation forest, contamination fraction and score thresholding.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::EncodingMatrix;
use crate::rng;

const EULER_GAMMA: f64 = 0.5772156649;

/// `n_outliers / (n_pairs · s)`: the share of real encodings in the fitting
/// set relative to the generated embeddings.
pub fn contamination(n_outliers: usize, n_pairs: usize, samples_per_pair: usize) -> Result<f64> {
    let denom = n_pairs as f64 * samples_per_pair as f64;
    if denom == 0.0 {
        return Err(Error::invalid("contamination needs a positive number of generated embeddings"));
    }
    Ok(n_outliers as f64 / denom)
}

fn harmonic(i: f64) -> f64 {
    i.ln() + EULER_GAMMA
}

/// Average path length of an unsuccessful search in a binary search tree of
/// `n` points; the normaliser of the isolation score.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let n = n as f64;
    2.0 * harmonic(n - 1.0) - 2.0 * (n - 1.0) / n
}

/// `2^(−E[h] / c(ψ))`.
pub fn normalized_score(mean_path: f64, psi: usize) -> f64 {
    2f64.powf(-mean_path / average_path_length(psi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Internal { feature: u32, split: f32, left: u32, right: u32 },
    External { size: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    /// Preorder; the root is node 0.
    pub nodes: Vec<Node>,
}

impl IsolationTree {
    /// Depth of the external node `x` falls into, plus `c(size)` credit.
    pub fn path_length(&self, x: &[f32]) -> f64 {
        let mut at = 0usize;
        let mut depth = 0usize;
        loop {
            match self.nodes[at] {
                Node::Internal {
                    feature,
                    split,
                    left,
                    right,
                } => {
                    at = if x[feature as usize] <= split { left } else { right } as usize;
                    depth += 1;
                }
                Node::External { size } => return depth as f64 + average_path_length(size as usize),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Internal { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
                Node::External { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    pub trees: Vec<IsolationTree>,
    /// Subsample size actually used (after clamping to the data size).
    pub subsample_size: usize,
    pub dims: usize,
    /// Scores strictly above the threshold are flagged as outliers.
    pub threshold: Option<f64>,
    pub contamination: Option<f64>,
}

struct Builder<'a, R> {
    data: &'a EncodingMatrix,
    rng: R,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, idx: &[usize], depth: usize) -> u32 {
        let at = self.nodes.len() as u32;
        self.nodes.push(Node::External { size: idx.len() as u32 });
        if idx.len() <= 1 || depth >= self.max_depth {
            return at;
        }
        let d = self.data.cols();
        let mut chosen = None;
        for _ in 0..d {
            let f = self.rng.random_range(0..d);
            let (lo, hi) = idx.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.data.row(i)[f];
                (lo.min(v), hi.max(v))
            });
            if hi > lo {
                chosen = Some((f, lo, hi));
                break;
            }
        }
        let Some((f, lo, hi)) = chosen else {
            return at;
        };
        let u: f64 = self.rng.random();
        let mut split = (lo as f64 + u * (hi as f64 - lo as f64)) as f32;
        if split >= hi {
            split = lo;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.data.row(i)[f] <= split);
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[at as usize] = Node::Internal {
            feature: f as u32,
            split,
            left,
            right,
        };
        at
    }
}

/// Height limit `ceil(log2 ψ)`.
pub fn max_depth(psi: usize) -> usize {
    (psi.max(1) as f64).log2().ceil() as usize
}

/// Build one tree from its own random stream: subsample without
/// replacement, then split recursively.
pub fn build_tree(data: &EncodingMatrix, psi: usize, seed: u64) -> IsolationTree {
    let mut r = rng::stream(seed);
    let sample = rand::seq::index::sample(&mut r, data.rows(), psi).into_vec();
    let mut b = Builder {
        data,
        rng: r,
        max_depth: max_depth(psi),
        nodes: Vec::with_capacity(2 * psi),
    };
    b.build(&sample, 0);
    IsolationTree { nodes: b.nodes }
}

/// Seed of tree `t` in a forest seeded with `seed`.
pub fn tree_seed(seed: u64, t: usize) -> u64 {
    rng::derive_indexed(seed, t as u64)
}

pub fn build_forest(data: &EncodingMatrix, n_trees: usize, psi: usize, seed: u64) -> Result<IsolationForest> {
    if data.is_empty() {
        return Err(Error::Empty("isolation forest training data"));
    }
    if psi < 2 {
        return Err(Error::invalid(format!("subsample size must be at least 2, got {psi}")));
    }
    if n_trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    let mut psi = psi;
    if psi > data.rows() {
        log::warn!("subsample size {psi} exceeds {} rows; clamping", data.rows());
        psi = data.rows();
    }
    if psi < 2 {
        return Err(Error::invalid("isolation forest needs at least two rows"));
    }
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| build_tree(data, psi, tree_seed(seed, t)))
        .collect();
    Ok(IsolationForest {
        trees,
        subsample_size: psi,
        dims: data.cols(),
        threshold: None,
        contamination: None,
    })
}

impl IsolationForest {
    fn check_dims(&self, d: usize) -> Result<()> {
        if d != self.dims {
            return Err(Error::shape(self.dims, d));
        }
        Ok(())
    }

    pub fn path_lengths(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.check_dims(x.len())?;
        Ok(self.trees.iter().map(|t| t.path_length(x)).collect())
    }

    pub fn mean_path_length(&self, x: &[f32]) -> Result<f64> {
        self.check_dims(x.len())?;
        let sum: f64 = self.trees.iter().map(|t| t.path_length(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Higher means more anomalous.
    pub fn score(&self, x: &[f32]) -> Result<f64> {
        Ok(normalized_score(self.mean_path_length(x)?, self.subsample_size))
    }

    pub fn score_all(&self, data: &EncodingMatrix) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Ok(Vec::new());
        }
        self.check_dims(data.cols())?;
        Ok((0..data.rows())
            .into_par_iter()
            .map(|i| {
                let sum: f64 = self.trees.iter().map(|t| t.path_length(data.row(i))).sum();
                normalized_score(sum / self.trees.len() as f64, self.subsample_size)
            })
            .collect())
    }

    pub fn is_outlier(&self, score: f64) -> Result<bool> {
        let t = self
            .threshold
            .ok_or_else(|| Error::invalid("forest has no fitted threshold"))?;
        Ok(score > t)
    }
}

pub fn anomaly_score(forest: &IsolationForest, x: &[f32]) -> Result<f64> {
    forest.score(x)
}

/// Threshold such that the `round(C · n)` highest scores lie strictly above
/// it. Ties at the cut flag fewer points.
pub fn threshold_for(scores: &[f64], c: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("threshold fitting scores"));
    }
    if !(0.0..1.0).contains(&c) {
        return Err(Error::invalid(format!("contamination must lie in [0, 1), got {c}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = (c * sorted.len() as f64).round() as usize;
    Ok(if k == 0 {
        sorted[0]
    } else if k >= sorted.len() {
        f64::NEG_INFINITY
    } else {
        sorted[k]
    })
}

pub fn fit_threshold(mut forest: IsolationForest, fitting: &EncodingMatrix, c: f64) -> Result<IsolationForest> {
    if fitting.is_empty() {
        return Err(Error::Empty("threshold fitting data"));
    }
    let scores = forest.score_all(fitting)?;
    forest.threshold = Some(threshold_for(&scores, c)?);
    forest.contamination = Some(c);
    Ok(forest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyPartition {
    pub inlier_ids: Vec<usize>,
    pub leftover_ids: Vec<usize>,
    /// One score per scored row, indexed by row id.
    pub scores: Vec<f64>,
}

impl AnomalyPartition {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Rebuild from scores and a threshold (`score > threshold` is a leftover).
    pub fn from_scores(scores: Vec<f64>, threshold: f64) -> Self {
        let (mut inlier_ids, mut leftover_ids) = (Vec::new(), Vec::new());
        for (i, &s) in scores.iter().enumerate() {
            if s > threshold {
                leftover_ids.push(i);
            } else {
                inlier_ids.push(i);
            }
        }
        Self {
            inlier_ids,
            leftover_ids,
            scores,
        }
    }

    pub fn scores_csv(&self) -> String {
        let mut flagged = vec![false; self.scores.len()];
        for &i in &self.leftover_ids {
            flagged[i] = true;
        }
        let mut s = String::from("sample_id,score,flagged\n");
        for (i, (score, f)) in self.scores.iter().zip(flagged).enumerate() {
            s.push_str(&format!("{i},{score},{}\n", u8::from(f)));
        }
        s
    }

    pub fn parse_scores_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("sample_id,score,flagged") {
            return Err(Error::Format("score table header missing".into()));
        }
        let mut out = Self {
            inlier_ids: Vec::new(),
            leftover_ids: Vec::new(),
            scores: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let bad = || Error::Format(format!("bad score line {}: `{line}`", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 || f[0].parse::<usize>().ok() != Some(i) {
                return Err(bad());
            }
            out.scores.push(f[1].parse().map_err(|_| bad())?);
            match f[2] {
                "1" => out.leftover_ids.push(i),
                "0" => out.inlier_ids.push(i),
                _ => return Err(bad()),
            }
        }
        Ok(out)
    }
}

/// Score every row of `encodings_u`; rows at or below the threshold are
/// inliers (predicted positives), the rest are leftovers.
pub fn partition_unlabeled(forest: &IsolationForest, encodings_u: &EncodingMatrix) -> Result<AnomalyPartition> {
    let threshold = forest
        .threshold
        .ok_or_else(|| Error::invalid("forest has no fitted threshold"))?;
    Ok(AnomalyPartition::from_scores(forest.score_all(encodings_u)?, threshold))
}

/// Plug-in estimate of `C · P(outlier not flagged) + (1 − C) · P(inlier flagged)`.
pub fn expected_loss(scores_in: &[f64], scores_out: &[f64], threshold: f64, c: f64) -> Result<f64> {
    if scores_in.is_empty() || scores_out.is_empty() {
        return Err(Error::Empty("expected loss scores"));
    }
    let missed = scores_out.iter().filter(|&&s| s <= threshold).count() as f64 / scores_out.len() as f64;
    let false_alarm = scores_in.iter().filter(|&&s| s > threshold).count() as f64 / scores_in.len() as f64;
    Ok(c * missed + (1.0 - c) * false_alarm)
}

const MAGIC: &[u8; 4] = b"DPUF";
const VERSION: u32 = 1;

impl IsolationForest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let put = |v: u32, out: &mut Vec<u8>| out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(MAGIC);
        put(VERSION, &mut out);
        put(self.dims as u32, &mut out);
        put(self.subsample_size as u32, &mut out);
        put(self.trees.len() as u32, &mut out);
        out.extend_from_slice(&self.threshold.unwrap_or(f64::NAN).to_le_bytes());
        out.extend_from_slice(&self.contamination.unwrap_or(f64::NAN).to_le_bytes());
        for t in &self.trees {
            put(t.nodes.len() as u32, &mut out);
            for n in &t.nodes {
                let words = match *n {
                    Node::Internal {
                        feature,
                        split,
                        left,
                        right,
                    } => [0, feature, split.to_bits(), left, right],
                    Node::External { size } => [1, size, 0, 0, 0],
                };
                for w in words {
                    put(w, &mut out);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rd32 = |b: &[u8], at: &mut usize| -> Result<u32> {
            let s = b
                .get(*at..*at + 4)
                .ok_or_else(|| Error::Format("truncated forest checkpoint".into()))?;
            *at += 4;
            Ok(u32::from_le_bytes(s.try_into().unwrap()))
        };
        let rd64 = |b: &[u8], at: &mut usize| -> Result<f64> {
            let s = b
                .get(*at..*at + 8)
                .ok_or_else(|| Error::Format("truncated forest checkpoint".into()))?;
            *at += 8;
            Ok(f64::from_le_bytes(s.try_into().unwrap()))
        };
        if bytes.get(..4) != Some(&MAGIC[..]) {
            return Err(Error::Format("not a forest checkpoint".into()));
        }
        let mut at = 4usize;
        let version = rd32(bytes, &mut at)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported forest version {version}")));
        }
        let dims = rd32(bytes, &mut at)? as usize;
        let subsample_size = rd32(bytes, &mut at)? as usize;
        let n_trees = rd32(bytes, &mut at)? as usize;
        let threshold = Some(rd64(bytes, &mut at)?).filter(|v| !v.is_nan());
        let contamination = Some(rd64(bytes, &mut at)?).filter(|v| !v.is_nan());
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n = rd32(bytes, &mut at)? as usize;
            let mut nodes = Vec::with_capacity(n);
            for _ in 0..n {
                let w = [
                    rd32(bytes, &mut at)?,
                    rd32(bytes, &mut at)?,
                    rd32(bytes, &mut at)?,
                    rd32(bytes, &mut at)?,
                    rd32(bytes, &mut at)?,
                ];
                nodes.push(match w[0] {
                    0 => {
                        if w[1] as usize >= dims || w[3] as usize >= n || w[4] as usize >= n {
                            return Err(Error::Format("forest node out of range".into()));
                        }
                        Node::Internal {
                            feature: w[1],
                            split: f32::from_bits(w[2]),
                            left: w[3],
                            right: w[4],
                        }
                    }
                    1 => Node::External { size: w[1] },
                    t => return Err(Error::Format(format!("unknown forest node tag {t}"))),
                });
            }
            trees.push(IsolationTree { nodes });
        }
        if at != bytes.len() {
            return Err(Error::Format("trailing bytes after forest checkpoint".into()));
        }
        Ok(Self {
            trees,
            subsample_size,
            dims,
            threshold,
            contamination,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
