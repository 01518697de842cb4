//! Densification of the positive latent distribution by interpolating pairs
//! of positive encodings.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::EncodingMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    /// Scalar λ ~ N(0.5, (k/2)²) truncated to (0, 1).
    Dens,
    /// λ ~ Beta(α, α).
    Mixup,
    /// Isotropic Gaussian around the segment midpoint, variance
    /// e^k (‖z_j − z_i‖ / 2)². Points leave the segment.
    DensLatent,
}

impl AugmentMode {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentMode::Dens => "dens",
            AugmentMode::Mixup => "mixup",
            AugmentMode::DensLatent => "dens-latent",
        }
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dens" => Ok(AugmentMode::Dens),
            "mixup" => Ok(AugmentMode::Mixup),
            "dens-latent" => Ok(AugmentMode::DensLatent),
            _ => Err(Error::invalid(format!("unknown augmentation mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    pub mode: AugmentMode,
    pub k: f64,
    pub n_pairs: usize,
    pub samples_per_pair: usize,
    pub mixup_alpha: f64,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        if self.samples_per_pair == 0 {
            return Err(Error::invalid("samples per pair must be at least 1"));
        }
        if self.mode == AugmentMode::Mixup && !(self.mixup_alpha > 0.0 && self.mixup_alpha.is_finite()) {
            return Err(Error::invalid(format!("mixup alpha must be positive, got {}", self.mixup_alpha)));
        }
        Ok(())
    }
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("spread k must lie in (0, 1), got {k}")))
    }
}

/// Source pair and coefficient of one generated row. `lambda` is NaN in
/// dens-latent mode, which has no interpolation coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub i: usize,
    pub j: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub embeddings: EncodingMatrix,
    pub provenance: Vec<Provenance>,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn provenance_csv(&self) -> String {
        let mut s = String::with_capacity(32 * self.len() + 32);
        s.push_str("row_id,i,j,lambda\n");
        for (r, p) in self.provenance.iter().enumerate() {
            s.push_str(&format!("{r},{},{},{}\n", p.i, p.j, p.lambda));
        }
        s
    }

    pub fn parse_provenance_csv(text: &str) -> Result<Vec<Provenance>> {
        let mut lines = text.lines();
        if lines.next() != Some("row_id,i,j,lambda") {
            return Err(Error::Format("provenance header missing".into()));
        }
        lines
            .enumerate()
            .map(|(r, line)| {
                let f: Vec<&str> = line.split(',').collect();
                let bad = || Error::Format(format!("bad provenance line {}: `{line}`", r + 2));
                if f.len() != 4 || f[0].parse::<usize>().ok() != Some(r) {
                    return Err(bad());
                }
                Ok(Provenance {
                    i: f[1].parse().map_err(|_| bad())?,
                    j: f[2].parse().map_err(|_| bad())?,
                    lambda: f[3].parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }

    /// Writes the matrix to `matrix_path` and the provenance table next to it.
    pub fn save(&self, matrix_path: &Path, provenance_path: &Path) -> Result<()> {
        self.embeddings.save(matrix_path)?;
        fs::write(provenance_path, self.provenance_csv()).map_err(|e| Error::io(provenance_path, e))
    }

    pub fn load(matrix_path: &Path, provenance_path: &Path) -> Result<Self> {
        let embeddings = EncodingMatrix::load(matrix_path)?;
        let text = fs::read_to_string(provenance_path).map_err(|e| Error::io(provenance_path, e))?;
        let provenance = Self::parse_provenance_csv(&text)?;
        if provenance.len() != embeddings.rows() {
            return Err(Error::shape(embeddings.rows(), provenance.len()));
        }
        Ok(Self { embeddings, provenance })
    }
}

fn pair_count(n: usize) -> usize {
    n.saturating_mul(n.saturating_sub(1)) / 2
}

/// Index of the first pair `(i, i+1)` in row-major order over `i < j`.
fn row_start(i: usize, n: usize) -> usize {
    i * n - i * (i + 1) / 2
}

fn unrank_pair(p: usize, n: usize) -> (usize, usize) {
    // largest i with row_start(i) <= p
    let (mut lo, mut hi) = (0usize, n - 2);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if row_start(mid, n) <= p {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    (lo, lo + 1 + (p - row_start(lo, n)))
}

/// `n_pairs` distinct unordered pairs `(i, j)`, `i < j < n_items`, drawn
/// uniformly without replacement.
pub fn sample_pairs(n_items: usize, n_pairs: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let total = pair_count(n_items);
    if n_pairs > total {
        return Err(Error::invalid(format!(
            "{n_pairs} pairs requested but only {total} distinct pairs exist among {n_items} items"
        )));
    }
    let mut r = rng::stream(seed);
    Ok(rand::seq::index::sample(&mut r, total, n_pairs)
        .into_iter()
        .map(|p| unrank_pair(p, n_items))
        .collect())
}

/// One λ from N(0.5, (k/2)²), redrawn until it falls strictly inside (0, 1).
pub fn draw_lambda<R: Rng + ?Sized>(k: f64, rng: &mut R) -> Result<f64> {
    check_k(k)?;
    let normal = Normal::new(0.5, k / 2.0).map_err(|e| Error::invalid(e.to_string()))?;
    loop {
        let l = normal.sample(rng);
        if l > 0.0 && l < 1.0 {
            return Ok(l);
        }
    }
}

/// `λ z_i + (1 − λ) z_j` for each λ.
pub fn interpolate_pair(zi: &[f32], zj: &[f32], lambdas: &[f64]) -> Result<Vec<Vec<f32>>> {
    if zi.len() != zj.len() {
        return Err(Error::shape(zi.len(), zj.len()));
    }
    lambdas
        .iter()
        .map(|&l| {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::invalid(format!("interpolation coefficient {l} outside [0, 1]")));
            }
            Ok(zi
                .iter()
                .zip(zj)
                .map(|(&a, &b)| (l * a as f64 + (1.0 - l) * b as f64) as f32)
                .collect())
        })
        .collect()
}

fn generate_for_pair(
    z: &EncodingMatrix,
    (i, j): (usize, usize),
    spec: &AugmentationSpec,
    seed: u64,
) -> Result<(Vec<f32>, Vec<Provenance>)> {
    let mut r = rng::stream(seed);
    let (zi, zj) = (z.row(i), z.row(j));
    let s = spec.samples_per_pair;
    let mut out = Vec::with_capacity(s * zi.len());
    let mut prov = Vec::with_capacity(s);
    match spec.mode {
        AugmentMode::Dens | AugmentMode::Mixup => {
            let lambdas: Vec<f64> = if spec.mode == AugmentMode::Dens {
                (0..s).map(|_| draw_lambda(spec.k, &mut r)).collect::<Result<_>>()?
            } else {
                let beta =
                    Beta::new(spec.mixup_alpha, spec.mixup_alpha).map_err(|e| Error::invalid(e.to_string()))?;
                (0..s).map(|_| beta.sample(&mut r)).collect()
            };
            for (row, &lambda) in interpolate_pair(zi, zj, &lambdas)?.into_iter().zip(&lambdas) {
                out.extend(row);
                prov.push(Provenance { i, j, lambda });
            }
        }
        AugmentMode::DensLatent => {
            let half = zi
                .iter()
                .zip(zj)
                .map(|(&a, &b)| (b as f64 - a as f64).powi(2))
                .sum::<f64>()
                .sqrt()
                / 2.0;
            let sd = spec.k.exp().sqrt() * half;
            for _ in 0..s {
                for (&a, &b) in zi.iter().zip(zj) {
                    let mid = (a as f64 + b as f64) / 2.0;
                    let noise: f64 = r.sample(rand_distr::StandardNormal);
                    out.push((mid + sd * noise) as f32);
                }
                prov.push(Provenance { i, j, lambda: f64::NAN });
            }
        }
    }
    Ok((out, prov))
}

/// Generate `n_pairs · s` embeddings from the rows of `encodings`.
/// Each pair gets its own random stream, so the output does not depend on
/// how the work is scheduled.
pub fn densify(encodings: &EncodingMatrix, spec: &AugmentationSpec) -> Result<EmbeddingSet> {
    spec.validate()?;
    if encodings.rows() < 2 {
        return Err(Error::invalid("densification needs at least two encodings"));
    }
    let pairs = sample_pairs(encodings.rows(), spec.n_pairs, rng::derive(spec.seed, "pairs"))?;
    let draws = rng::derive(spec.seed, "draws");
    let parts: Vec<(Vec<f32>, Vec<Provenance>)> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &pair)| generate_for_pair(encodings, pair, spec, rng::derive_indexed(draws, p as u64)))
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(pairs.len() * spec.samples_per_pair * encodings.cols());
    let mut provenance = Vec::with_capacity(pairs.len() * spec.samples_per_pair);
    for (d, p) in parts {
        data.extend(d);
        provenance.extend(p);
    }
    let embeddings = EncodingMatrix::new(provenance.len(), encodings.cols(), data)?;
    Ok(EmbeddingSet { embeddings, provenance })
}
