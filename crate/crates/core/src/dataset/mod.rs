//! Image containers, benchmark loaders, PU splits and synthetic toys.

mod cifar;
mod idx;
mod split;
mod synthetic;

pub use cifar::load_cifar10;
pub use idx::{load_idx, write_idx};
pub use split::{make_pu_split, subsample_unlabeled, PUSplit};
pub use synthetic::{gen_synthetic, SyntheticFrame, SyntheticKind, SyntheticSpec};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::EncodingMatrix;

/// Spatial shape of one image, channels last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("bad shape `{s}`, expected HxWxC")))?;
        match parts.as_slice() {
            [h, w, c] if *h > 0 && *w > 0 && *c > 0 => Ok(Shape::new(*h, *w, *c)),
            [h, w] if *h > 0 && *w > 0 => Ok(Shape::new(*h, *w, 1)),
            _ => Err(Error::invalid(format!("bad shape `{s}`, expected HxWxC"))),
        }
    }
}

/// Dense batch of images stored as `(n, height, width, channels)` with
/// pixel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    shape: Shape,
    data: Vec<f32>,
    labels: Option<Vec<u8>>,
}

impl ImageSet {
    pub fn new(shape: Shape, data: Vec<f32>, labels: Option<Vec<u8>>) -> Result<Self> {
        if shape.is_empty() || data.len() % shape.len() != 0 {
            return Err(Error::shape(
                format!("a multiple of {}", shape.len()),
                format!("{} values", data.len()),
            ));
        }
        let n = data.len() / shape.len();
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::shape(format!("{n} labels"), format!("{} labels", l.len())));
            }
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            shape,
            data,
            labels,
        })
    }

    pub fn empty(shape: Shape) -> Self {
        Self {
            shape,
            data: Vec::new(),
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let d = self.shape.len();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Option<Vec<u8>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.len() {
                return Err(Error::shape(format!("{} labels", self.len()), format!("{} labels", l.len())));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let d = self.shape.len();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Self {
            shape: self.shape,
            data,
            labels,
        }
    }

    /// Append `other` (same shape). Labels survive only if both sides carry them.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(self.shape, other.shape));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(Self {
            shape: self.shape,
            data,
            labels,
        })
    }

    /// One row per image, flattened in HWC order.
    pub fn to_matrix(&self) -> EncodingMatrix {
        EncodingMatrix::new(self.len(), self.shape.len(), self.data.clone())
            .expect("image buffer is a whole number of images")
    }

    pub fn from_matrix(m: &EncodingMatrix, shape: Shape) -> Result<Self> {
        if m.cols() != shape.len() {
            return Err(Error::shape(format!("{} columns for {shape}", shape.len()), m.cols()));
        }
        Self::new(shape, m.as_slice().to_vec(), None)
    }
}

/// Nearest-neighbour upscale to `target`, replicating a single grey channel
/// when three channels are requested.
pub fn preprocess(images: &ImageSet, target: Shape) -> Result<ImageSet> {
    let src = images.shape();
    if target.height < src.height || target.width < src.width {
        return Err(Error::invalid(format!("cannot downscale {src} to {target}")));
    }
    if !(target.channels == src.channels || src.channels == 1) {
        return Err(Error::invalid(format!("cannot map {} channels onto {}", src.channels, target.channels)));
    }
    if src == target {
        return Ok(images.clone());
    }
    let ys: Vec<usize> = (0..target.height).map(|y| y * src.height / target.height).collect();
    let xs: Vec<usize> = (0..target.width).map(|x| x * src.width / target.width).collect();
    let mut data = Vec::with_capacity(images.len() * target.len());
    for i in 0..images.len() {
        let img = images.image(i);
        for &sy in &ys {
            for &sx in &xs {
                let base = (sy * src.width + sx) * src.channels;
                for c in 0..target.channels {
                    let sc = if src.channels == 1 { 0 } else { c };
                    data.push(img[base + sc]);
                }
            }
        }
    }
    Ok(ImageSet {
        shape: target,
        data,
        labels: images.labels.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(shape: Shape) -> ImageSet {
        let n = shape.len();
        let data = (0..n).map(|i| i as f32 / n as f32).collect();
        ImageSet::new(shape, data, Some(vec![3])).unwrap()
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(ImageSet::new(Shape::new(1, 1, 1), vec![1.5], None).is_err());
        assert!(ImageSet::new(Shape::new(1, 1, 1), vec![0.5], Some(vec![0, 1])).is_err());
    }

    #[test]
    fn grey_to_rgb_replicates_channels() {
        let img = gradient_image(Shape::new(28, 28, 1));
        let out = preprocess(&img, Shape::new(32, 32, 3)).unwrap();
        assert_eq!(out.shape(), Shape::new(32, 32, 3));
        for px in out.image(0).chunks_exact(3) {
            assert_eq!(px[0], px[1]);
            assert_eq!(px[1], px[2]);
        }
        // corners come from the source corners
        assert_eq!(out.image(0)[0], img.image(0)[0]);
        let last = out.image(0).len() - 1;
        assert_eq!(out.image(0)[last], img.image(0)[28 * 28 - 1]);
        assert_eq!(out.labels(), Some(&[3u8][..]));
    }

    #[test]
    fn identity_preprocess_is_bitwise_equal() {
        let img = gradient_image(Shape::new(5, 4, 2));
        assert_eq!(preprocess(&img, img.shape()).unwrap(), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImageSet::new(Shape::new(7, 7, 1), vec![0.25; 49], None).unwrap();
        let out = preprocess(&img, Shape::new(9, 11, 3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.25));
        assert_eq!(out.data().len(), 9 * 11 * 3);
    }

    #[test]
    fn downscale_is_an_error() {
        let img = gradient_image(Shape::new(8, 8, 1));
        assert!(preprocess(&img, Shape::new(4, 8, 1)).is_err());
    }

    #[test]
    fn matrix_roundtrip_is_lossless() {
        let img = gradient_image(Shape::new(3, 3, 2));
        let m = img.to_matrix();
        let bytes = m.to_bytes();
        let back = ImageSet::from_matrix(&EncodingMatrix::from_bytes(&bytes).unwrap(), img.shape()).unwrap();
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn shape_parsing() {
        assert_eq!("32x32x3".parse::<Shape>().unwrap(), Shape::new(32, 32, 3));
        assert_eq!("28x28".parse::<Shape>().unwrap(), Shape::new(28, 28, 1));
        assert!("0x2x1".parse::<Shape>().is_err());
    }
}
