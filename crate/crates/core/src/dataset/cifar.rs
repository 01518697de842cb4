use std::fs;
use std::path::Path;

use super::{ImageSet, Shape};
use crate::error::{Error, Result};

const PLANE: usize = 32 * 32;
const RECORD: usize = 1 + 3 * PLANE;

/// Load CIFAR-10 binary batches. Each 3073-byte record is a label byte
/// followed by the R, G and B planes (row-major); output is channels-last.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<ImageSet> {
    let shape = Shape::new(32, 32, 3);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for p in batch_paths {
        let p = p.as_ref();
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        if bytes.len() % RECORD != 0 {
            return Err(Error::Format(format!(
                "{}: length {} is not a multiple of {RECORD}",
                p.display(),
                bytes.len()
            )));
        }
        data.reserve(bytes.len() / RECORD * shape.len());
        for rec in bytes.chunks_exact(RECORD) {
            labels.push(rec[0]);
            let planes = &rec[1..];
            for px in 0..PLANE {
                for c in 0..3 {
                    data.push(planes[c * PLANE + px] as f32 / 255.0);
                }
            }
        }
    }
    ImageSet::new(shape, data, Some(labels))
}
