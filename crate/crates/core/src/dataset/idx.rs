use std::fs;
use std::path::Path;

use super::{ImageSet, Shape};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("truncated {what} header")))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_images(bytes: &[u8]) -> Result<(Shape, &[u8])> {
    let magic = be_u32(bytes, 0, "image")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("bad IDX image magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "image")? as usize;
    let rows = be_u32(bytes, 8, "image")? as usize;
    let cols = be_u32(bytes, 12, "image")? as usize;
    let body = &bytes[16..];
    let need = n * rows * cols;
    if body.len() < need {
        return Err(Error::Format(format!("truncated IDX image body: {} of {need} bytes", body.len())));
    }
    Ok((Shape::new(rows, cols, 1), &body[..need]))
}

fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "label")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("bad IDX label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "label")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Format(format!("truncated IDX label body: {} of {n} bytes", body.len())));
    }
    Ok(&body[..n])
}

/// Load an IDX image file and its label file (MNIST / Fashion-MNIST layout).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<ImageSet> {
    let img_bytes = read(images_path.as_ref())?;
    let lbl_bytes = read(labels_path.as_ref())?;
    let (shape, pixels) = parse_images(&img_bytes)?;
    let labels = parse_labels(&lbl_bytes)?;
    let n = pixels.len() / shape.len().max(1);
    if labels.len() != n {
        return Err(Error::Format(format!("{n} images but {} labels", labels.len())));
    }
    let data = pixels.iter().map(|&b| b as f32 / 255.0).collect();
    ImageSet::new(shape, data, Some(labels.to_vec()))
}

/// Write single-channel images (and labels, if any) back out as IDX files.
/// Pixels are quantised to bytes.
pub fn write_idx(images: &ImageSet, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let shape = images.shape();
    if shape.channels != 1 {
        return Err(Error::invalid("IDX images must be single-channel"));
    }
    let mut out = Vec::with_capacity(16 + images.data().len());
    for v in [IMAGES_MAGIC, images.len() as u32, shape.height as u32, shape.width as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.data().iter().map(|&v| (v * 255.0).round() as u8));
    let p = images_path.as_ref();
    fs::write(p, out).map_err(|e| Error::io(p, e))?;

    let labels = images.labels().unwrap_or(&[]);
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    let p = labels_path.as_ref();
    fs::write(p, out).map_err(|e| Error::io(p, e))
}
