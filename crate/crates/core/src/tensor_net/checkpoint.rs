//! `VLHN` network checkpoints.
//!
//! ```text
//! magic "VLHN" | version u16 | seed u64 | layer count u32
//! per layer:  kind u8 | input u32 | output u32 | experts u32 | hidden count u32 | hidden u32..
//! per param:  rows u32 | cols u32 | values f64..
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use super::{LayerSpec, Network, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VLHN";
const VERSION: u16 = 1;

pub fn network_to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&net.seed().to_le_bytes());
    put_u32(&mut out, net.layers().len());
    for spec in net.layers() {
        let (kind, input, output, experts, hidden): (u8, usize, usize, usize, &[usize]) = match spec {
            LayerSpec::Dense { input, output } => (0, *input, *output, 0, &[]),
            LayerSpec::Relu { width } => (1, *width, *width, 0, &[]),
            LayerSpec::SoftmaxGateMixture {
                input,
                output,
                experts,
                hidden,
            } => (2, *input, *output, *experts, hidden),
        };
        out.push(kind);
        for v in [input, output, experts, hidden.len()] {
            put_u32(&mut out, v);
        }
        for &h in hidden {
            put_u32(&mut out, h);
        }
    }
    for t in net.params().iter().flatten() {
        put_u32(&mut out, t.rows());
        put_u32(&mut out, t.cols());
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Format(format!("checkpoint truncated at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a VLHN checkpoint".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let seed = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let count = r.u32()?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let kind = r.take(1)?[0];
        let (input, output, experts, nh) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
        let hidden = (0..nh).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        layers.push(match kind {
            0 => LayerSpec::Dense { input, output },
            1 => LayerSpec::Relu { width: input },
            2 => LayerSpec::SoftmaxGateMixture {
                input,
                output,
                experts,
                hidden,
            },
            k => return Err(Error::Format(format!("unknown layer kind {k}"))),
        });
    }
    let mut params = Vec::with_capacity(layers.len());
    for spec in &layers {
        spec.validate().map_err(|e| Error::Format(format!("invalid layer in checkpoint: {e}")))?;
        let mut group = Vec::new();
        for _ in spec.param_shapes() {
            let (rows, cols) = (r.u32()?, r.u32()?);
            let raw = r.take(rows.saturating_mul(cols).saturating_mul(8))?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            group.push(Tensor::matrix(rows, cols, values).map_err(|e| Error::Format(e.to_string()))?);
        }
        params.push(group);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
    }
    Network::from_params(layers, params, seed).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, network_to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: &Path) -> Result<Network> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    network_from_bytes(&bytes)
}
