//! Ranking of anomaly leftovers and selection of the negative set.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::anomaly::AnomalyPartition;
use crate::error::{Error, Result};
use crate::matrix::EncodingMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    /// Isolation-forest score.
    ForestScore,
    /// Smallest Euclidean distance to any positive encoding.
    MinDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// The `|P_L|` most anomalous leftovers.
    MatchPositives,
    AllLeftovers,
    /// A uniformly random count, then a uniformly random subset of that size.
    RandomCount,
}

macro_rules! named_enum {
    ($t:ty, $($v:path => $s:literal),+) => {
        impl $t {
            pub fn name(&self) -> &'static str {
                match self { $($v => $s),+ }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($v),)+
                    _ => Err(Error::invalid(format!("unknown mode `{s}`"))),
                }
            }
        }
    };
}

named_enum!(RankMode, RankMode::ForestScore => "forest_score", RankMode::MinDistance => "min_distance");
named_enum!(
    SelectionMode,
    SelectionMode::MatchPositives => "match_positives",
    SelectionMode::AllLeftovers => "all_leftovers",
    SelectionMode::RandomCount => "random_count"
);

/// Leftovers ordered most anomalous first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedLeftovers {
    pub mode: RankMode,
    /// `(sample_id, rank_value)`, rank values non-increasing.
    pub entries: Vec<(usize, f64)>,
}

impl RankedLeftovers {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }
}

fn min_distance(x: &[f32], positives: &EncodingMatrix) -> f64 {
    positives
        .iter_rows()
        .map(|p| {
            x.iter()
                .zip(p)
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Rank the leftovers of `partition`. `encodings_u` holds the rows the
/// partition was scored on; `positives` is only read in
/// [`RankMode::MinDistance`].
pub fn rank_leftovers(
    partition: &AnomalyPartition,
    encodings_u: &EncodingMatrix,
    positives: &EncodingMatrix,
    mode: RankMode,
) -> Result<RankedLeftovers> {
    if partition.leftover_ids.is_empty() {
        return Err(Error::Empty("anomaly leftovers"));
    }
    let mut entries: Vec<(usize, f64)> = match mode {
        RankMode::ForestScore => partition
            .leftover_ids
            .iter()
            .map(|&i| (i, partition.scores[i]))
            .collect(),
        RankMode::MinDistance => {
            if positives.is_empty() {
                return Err(Error::Empty("positive encodings"));
            }
            if positives.cols() != encodings_u.cols() {
                return Err(Error::shape(encodings_u.cols(), positives.cols()));
            }
            if encodings_u.rows() != partition.len() {
                return Err(Error::shape(partition.len(), encodings_u.rows()));
            }
            partition
                .leftover_ids
                .par_iter()
                .map(|&i| (i, min_distance(encodings_u.row(i), positives)))
                .collect()
        }
    };
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(RankedLeftovers { mode, entries })
}

/// Pick the negative set Ñ from the ranked leftovers.
pub fn select_negatives(ranked: &RankedLeftovers, mode: SelectionMode, n_positives: usize, seed: u64) -> Result<Vec<usize>> {
    if ranked.is_empty() {
        return Err(Error::Empty("ranked leftovers"));
    }
    Ok(match mode {
        SelectionMode::MatchPositives => ranked.ids().take(n_positives).collect(),
        SelectionMode::AllLeftovers => ranked.ids().collect(),
        SelectionMode::RandomCount => {
            let mut r = rng::labeled(seed, "random-count");
            let count = r.random_range(1..=ranked.len());
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut r, ranked.len(), count)
                .into_iter()
                .map(|k| ranked.entries[k].0)
                .collect();
            picked.sort_unstable();
            picked
        }
    })
}

/// One row per leftover in rank order: `sample_id,rank_value,selected_flag`.
pub fn negatives_csv(ranked: &RankedLeftovers, selected: &[usize]) -> String {
    let chosen: std::collections::HashSet<usize> = selected.iter().copied().collect();
    let mut s = String::from("sample_id,rank_value,selected_flag\n");
    for &(id, v) in &ranked.entries {
        s.push_str(&format!("{id},{v},{}\n", u8::from(chosen.contains(&id))));
    }
    s
}

/// Selected ids from a table written by [`negatives_csv`], in file order.
pub fn parse_negatives_csv(text: &str) -> Result<Vec<usize>> {
    let mut lines = text.lines();
    if lines.next() != Some("sample_id,rank_value,selected_flag") {
        return Err(Error::Format("negatives table header missing".into()));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = || Error::Format(format!("bad negatives line {}: `{line}`", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let id: usize = f[0].parse().map_err(|_| bad())?;
        match f[2] {
            "1" => out.push(id),
            "0" => {}
            _ => return Err(bad()),
        }
    }
    Ok(out)
}
