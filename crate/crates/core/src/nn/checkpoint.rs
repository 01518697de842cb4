//! Network checkpoint format, little-endian throughout:
//!
//! ```text
//! b"DPUN" | version u32 | network count u32
//! per network: input h,w,c (u32 x3) | layer count u32 | per layer: tag, a, b, c (u32 x4)
//! then, per network and layer in declaration order: weights f32..., biases f32...
//! ```

use std::fs;
use std::path::Path;

use super::{Activation, Layer, LayerSpec, Network};
use crate::dataset::Shape;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DPUN";
const VERSION: u32 = 1;

fn spec_words(spec: LayerSpec) -> [u32; 4] {
    match spec {
        LayerSpec::Dense { outputs } => [0, outputs as u32, 0, 0],
        LayerSpec::Conv2d { filters, kernel } => [1, filters as u32, kernel as u32, 0],
        LayerSpec::MaxPool2d => [2, 0, 0, 0],
        LayerSpec::Upsample2d { height, width } => [3, height as u32, width as u32, 0],
        LayerSpec::Activation(a) => [4, a.tag(), 0, 0],
        LayerSpec::Reshape {
            height,
            width,
            channels,
        } => [5, height as u32, width as u32, channels as u32],
    }
}

fn spec_from_words(w: [u32; 4]) -> Result<LayerSpec> {
    Ok(match w[0] {
        0 => LayerSpec::Dense { outputs: w[1] as usize },
        1 => LayerSpec::Conv2d {
            filters: w[1] as usize,
            kernel: w[2] as usize,
        },
        2 => LayerSpec::MaxPool2d,
        3 => LayerSpec::Upsample2d {
            height: w[1] as usize,
            width: w[2] as usize,
        },
        4 => LayerSpec::Activation(Activation::from_tag(w[1])?),
        5 => LayerSpec::Reshape {
            height: w[1] as usize,
            width: w[2] as usize,
            channels: w[3] as usize,
        },
        t => return Err(Error::Format(format!("unknown layer tag {t}"))),
    })
}

pub fn encode_networks(nets: &[&Network<f32>]) -> Vec<u8> {
    let mut out = Vec::new();
    let put = |v: u32, out: &mut Vec<u8>| out.extend_from_slice(&v.to_le_bytes());
    out.extend_from_slice(MAGIC);
    put(VERSION, &mut out);
    put(nets.len() as u32, &mut out);
    for net in nets {
        let s = net.input_shape();
        for v in [s.height, s.width, s.channels, net.layers().len()] {
            put(v as u32, &mut out);
        }
        for l in net.layers() {
            for w in spec_words(l.spec) {
                put(w, &mut out);
            }
        }
    }
    for net in nets {
        for l in net.layers() {
            for v in l.weight.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_networks(bytes: &[u8]) -> Result<Vec<Network<f32>>> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()? as usize;
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let shape = Shape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let n_layers = r.u32()? as usize;
        let mut specs = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            specs.push(spec_from_words([r.u32()?, r.u32()?, r.u32()?, r.u32()?])?);
        }
        headers.push((shape, specs));
    }
    let mut nets = Vec::with_capacity(count);
    for (input, specs) in headers {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        for spec in specs {
            let (nw, nb) = spec.param_counts(shape);
            let weight = r.f32s(nw)?;
            let bias = r.f32s(nb)?;
            let layer = Layer::with_params(spec, shape, weight, bias)?;
            shape = layer.output;
            layers.push(layer);
        }
        nets.push(Network::from_layers(input, layers)?);
    }
    if r.at != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(nets)
}

pub fn write_networks(path: impl AsRef<Path>, nets: &[&Network<f32>]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_networks(nets)).map_err(|e| Error::io(path, e))
}

pub fn read_networks(path: impl AsRef<Path>) -> Result<Vec<Network<f32>>> {
    let path = path.as_ref();
    decode_networks(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
