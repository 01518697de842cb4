//! Two-dimensional toy PU problems, wrapped as `1x1x2` images so the whole
//! pipeline runs on them unchanged.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ImageSet, PUSplit, Shape};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Two isotropic Gaussian clusters.
    Blobs,
    /// Two concentric noisy annuli.
    Rings,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(Self::Blobs),
            "rings" => Ok(Self::Rings),
            other => Err(Error::invalid(format!("unknown synthetic generator `{other}`"))),
        }
    }
}

impl SyntheticKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Blobs => "blobs",
            Self::Rings => "rings",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    /// Fraction of the unlabeled pool (and test set) drawn from the positive class.
    pub positive_fraction: f64,
    /// Cluster standard deviation (blobs) or radial noise (rings).
    pub noise: f64,
    /// Blob centres, positive first.
    pub centers: [[f64; 2]; 2],
    /// Ring radii, positive first.
    pub radii: [f64; 2],
}

impl SyntheticSpec {
    pub fn blobs(n_labeled: usize, n_unlabeled: usize, n_test: usize) -> Self {
        Self {
            kind: SyntheticKind::Blobs,
            n_labeled,
            n_unlabeled,
            n_test,
            positive_fraction: 0.5,
            noise: 0.5,
            centers: [[0.0, 0.0], [4.0, 4.0]],
            radii: [1.0, 3.0],
        }
    }

    pub fn rings(n_labeled: usize, n_unlabeled: usize, n_test: usize) -> Self {
        Self {
            kind: SyntheticKind::Rings,
            noise: 0.1,
            ..Self::blobs(n_labeled, n_unlabeled, n_test)
        }
    }
}

/// Affine map from raw toy coordinates into the unit square:
/// `pixel = (raw - offset) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticFrame {
    pub offset: [f64; 2],
    pub scale: f64,
}

impl SyntheticFrame {
    pub fn to_raw(&self, px: &[f32]) -> [f64; 2] {
        [
            px[0] as f64 / self.scale + self.offset[0],
            px[1] as f64 / self.scale + self.offset[1],
        ]
    }
}

fn draw_point<R: Rng>(spec: &SyntheticSpec, positive: bool, rng: &mut R) -> [f64; 2] {
    let which = if positive { 0 } else { 1 };
    let unit = Normal::new(0.0, 1.0).unwrap();
    match spec.kind {
        SyntheticKind::Blobs => {
            let c = spec.centers[which];
            [
                c[0] + spec.noise * unit.sample(rng),
                c[1] + spec.noise * unit.sample(rng),
            ]
        }
        SyntheticKind::Rings => {
            let theta = rng.random::<f64>() * 2.0 * PI;
            let r = spec.radii[which] + spec.noise * unit.sample(rng);
            [r * theta.cos(), r * theta.sin()]
        }
    }
}

/// Generate a toy split. Class id 1 is the positive cluster, 0 the negative.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(PUSplit, SyntheticFrame)> {
    if spec.n_labeled == 0 || spec.n_unlabeled == 0 || spec.n_test == 0 {
        return Err(Error::invalid("synthetic set sizes must be positive"));
    }
    if !(spec.noise > 0.0) || !(0.0..=1.0).contains(&spec.positive_fraction) {
        return Err(Error::invalid("synthetic noise must be positive and the positive fraction in [0, 1]"));
    }
    let mut rng = rng::labeled(seed, "synthetic");
    let n_u_pos = (spec.n_unlabeled as f64 * spec.positive_fraction).round() as usize;
    let n_t_pos = (spec.n_test as f64 * spec.positive_fraction).round() as usize;

    let mut train_pts = Vec::new();
    let mut train_cls = Vec::new();
    for _ in 0..spec.n_labeled + n_u_pos {
        train_pts.push(draw_point(spec, true, &mut rng));
        train_cls.push(1u8);
    }
    for _ in n_u_pos..spec.n_unlabeled {
        train_pts.push(draw_point(spec, false, &mut rng));
        train_cls.push(0u8);
    }
    let mut test_pts = Vec::new();
    let mut test_cls = Vec::new();
    for k in 0..spec.n_test {
        let positive = k < n_t_pos;
        test_pts.push(draw_point(spec, positive, &mut rng));
        test_cls.push(positive as u8);
    }

    let (lo, hi) = train_pts.iter().chain(&test_pts).fold(
        ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
        |(lo, hi), p| ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])]),
    );
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let margin = 0.05 * span;
    let frame = SyntheticFrame {
        offset: [lo[0] - margin, lo[1] - margin],
        scale: 1.0 / (span + 2.0 * margin),
    };
    let pack = |pts: &[[f64; 2]]| -> Vec<f32> {
        pts.iter()
            .flat_map(|p| {
                [
                    (((p[0] - frame.offset[0]) * frame.scale) as f32).clamp(0.0, 1.0),
                    (((p[1] - frame.offset[1]) * frame.scale) as f32).clamp(0.0, 1.0),
                ]
            })
            .collect()
    };
    let shape = Shape::new(1, 1, 2);
    let train = ImageSet::new(shape, pack(&train_pts), Some(train_cls))?;
    let test = ImageSet::new(shape, pack(&test_pts), Some(test_cls))?;

    let labeled: Vec<usize> = (0..spec.n_labeled).collect();
    let unlabeled: Vec<usize> = (spec.n_labeled..train.len()).collect();
    let truth: Vec<u8> = unlabeled.iter().map(|&i| train.labels().unwrap()[i]).collect();
    let split = PUSplit::from_parts(
        train.select(&labeled),
        train.select(&unlabeled).with_labels(None)?,
        test,
        BTreeSet::from([1u8]),
        labeled,
        unlabeled,
        truth,
    )?;
    Ok((split, frame))
}
