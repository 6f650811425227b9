//! `VLHB` dataset files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        b"VLHB"
//! version      u16
//! modulus, digit_range, canvas_height, canvas_width, glyph_scale,
//! glyph_set_version                                   u32 x 6
//! max_translation, rotation_range, scale_min, scale_max,
//! stroke_jitter, noise_sigma                          f32 x 6
//! enabled flags (bit 0 translate .. bit 4 noise)      u8
//! seed         u64
//! count        u64
//! count records:
//!   a u16, b u16, label u16, noise_seed u64,
//!   draw f32 x 6 (dx, dy, rotation, scale, jitter_rate, noise_sigma),
//!   pixels f32 x (canvas_height * canvas_width), row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{semantic_label, BundleSpec, LabeledDataset, NuisanceConfig, NuisanceDraw, Observation};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VLHB";
pub const FORMAT_VERSION: u16 = 1;

pub fn write_dataset<W: Write>(dataset: &LabeledDataset, mut out: W) -> std::io::Result<()> {
    let spec = &dataset.spec;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [
        spec.modulus,
        spec.digit_range,
        spec.canvas_height,
        spec.canvas_width,
        spec.glyph_scale,
        spec.glyph_set_version,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    let n = &spec.nuisance;
    for v in [
        n.max_translation,
        n.rotation_range,
        n.scale_range.0,
        n.scale_range.1,
        n.stroke_jitter,
        n.noise_sigma,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    let flags = [n.translate, n.rotate, n.scale, n.jitter, n.noise]
        .iter()
        .enumerate()
        .fold(0u8, |acc, (bit, &on)| acc | (u8::from(on) << bit));
    out.write_all(&[flags])?;
    out.write_all(&dataset.seed.to_le_bytes())?;
    out.write_all(&(dataset.items.len() as u64).to_le_bytes())?;
    for item in &dataset.items {
        out.write_all(&(item.a as u16).to_le_bytes())?;
        out.write_all(&(item.b as u16).to_le_bytes())?;
        out.write_all(&(item.label.value() as u16).to_le_bytes())?;
        out.write_all(&item.nuisance.noise_seed.to_le_bytes())?;
        for v in item.nuisance.to_f32s() {
            out.write_all(&v.to_le_bytes())?;
        }
        for p in &item.pixels {
            out.write_all(&p.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(dataset: &LabeledDataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated dataset at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice has length N"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<LabeledDataset> {
    let mut cur = Cursor { bytes, pos: 0 };
    if &cur.take::<4>()? != MAGIC {
        return Err(Error::Format("missing VLHB magic".into()));
    }
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let mut ints = [0u32; 6];
    for v in ints.iter_mut() {
        *v = cur.u32()?;
    }
    let mut floats = [0f32; 6];
    for v in floats.iter_mut() {
        *v = cur.f32()?;
    }
    let flags = cur.u8()?;
    let bit = |i: u8| flags >> i & 1 == 1;
    let nuisance = NuisanceConfig {
        max_translation: floats[0],
        rotation_range: floats[1],
        scale_range: (floats[2], floats[3]),
        stroke_jitter: floats[4],
        noise_sigma: floats[5],
        translate: bit(0),
        rotate: bit(1),
        scale: bit(2),
        jitter: bit(3),
        noise: bit(4),
    };
    let spec = BundleSpec::with_options(ints[0], ints[1], ints[2], ints[3], ints[4], nuisance, ints[5])?;
    let seed = cur.u64()?;
    let count = cur.u64()? as usize;
    let pixels = spec.pixel_count();
    let record_len = 6 + 8 + 24 + 4 * pixels;
    if bytes.len() - cur.pos != count * record_len {
        return Err(Error::Format(format!(
            "expected {count} records of {record_len} bytes, found {} bytes",
            bytes.len() - cur.pos
        )));
    }
    let mut items = Vec::with_capacity(count);
    for _ in 0..count {
        let a = cur.u16()?;
        let b = cur.u16()?;
        let label = cur.u16()?;
        let noise_seed = cur.u64()?;
        let mut draw = [0f32; 6];
        for v in draw.iter_mut() {
            *v = cur.f32()?;
        }
        let mut px = Vec::with_capacity(pixels);
        for _ in 0..pixels {
            px.push(cur.f32()?);
        }
        let obs = Observation {
            pixels: px,
            height: spec.canvas_height,
            width: spec.canvas_width,
            label: semantic_label(i64::from(a), i64::from(b), i64::from(spec.modulus))?,
            a: u32::from(a),
            b: u32::from(b),
            nuisance: NuisanceDraw::from_f32s(draw, noise_seed),
        };
        if u32::from(label) != obs.label.value() {
            return Err(Error::Format(format!("record label {label} disagrees with ({a} + {b}) mod n")));
        }
        obs.check_against(&spec)?;
        items.push(obs);
    }
    Ok(LabeledDataset { spec, items, seed })
}

pub fn save(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset(dataset, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<LabeledDataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
