//! Fixed-point rasterizer for expression images.
//!
//! The geometric part of a nuisance draw is applied by inverse mapping each
//! canvas pixel into the glyph template in Q16 integer arithmetic with
//! nearest-neighbour lookup, so the ink mask is bit-identical on every
//! platform. The forward transform is scale, then rotate, then translate, all
//! about the canvas centre.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::glyphs::Template;
use super::NuisanceDraw;
use crate::rng::SplitMix64;

const FRAC_BITS: u32 = 16;
const ONE: i64 = 1 << FRAC_BITS;
const HALF: i64 = ONE / 2;

/// sin and cos by Taylor series using only IEEE basic operations, so the
/// result does not depend on the platform libm. Valid for |theta| <= pi.
pub(crate) fn taylor_sin_cos(theta: f64) -> (f64, f64) {
    let x2 = theta * theta;
    let mut sin = 0.0;
    let mut cos = 0.0;
    let mut s_term = theta;
    let mut c_term = 1.0;
    for k in 0..14 {
        sin += s_term;
        cos += c_term;
        let n = (2 * k + 2) as f64;
        c_term = -c_term * x2 / (n * (n - 1.0));
        s_term = -s_term * x2 / ((n + 1.0) * n);
    }
    (sin, cos)
}

#[inline]
fn to_fixed(v: f64) -> i64 {
    (v * ONE as f64).round() as i64
}

/// Rasterize `template` onto an `height x width` canvas under the geometric
/// part of `draw`. Returns the binary ink mask in row-major order.
pub(crate) fn warp_template(template: &Template, height: usize, width: usize, draw: &NuisanceDraw) -> Vec<bool> {
    let (sin, cos) = taylor_sin_cos(f64::from(draw.rotation));
    let cs = to_fixed(cos);
    let sn = to_fixed(sin);
    let inv_scale = to_fixed(1.0 / f64::from(draw.scale));
    let tx = to_fixed(f64::from(draw.dx));
    let ty = to_fixed(f64::from(draw.dy));
    let t_cx = template.width as i64 * HALF;
    let t_cy = template.height as i64 * HALF;
    let (w, h) = (width as i64, height as i64);

    let mut mask = vec![false; height * width];
    for r in 0..h {
        let v = (2 * r + 1 - h) * HALF - ty;
        for c in 0..w {
            let u = (2 * c + 1 - w) * HALF - tx;
            let ur = (cs * u + sn * v) >> FRAC_BITS;
            let vr = (cs * v - sn * u) >> FRAC_BITS;
            let px = ((ur * inv_scale) >> FRAC_BITS) + t_cx;
            let py = ((vr * inv_scale) >> FRAC_BITS) + t_cy;
            if px < 0 || py < 0 {
                continue;
            }
            let (col, row) = ((px >> FRAC_BITS) as usize, (py >> FRAC_BITS) as usize);
            if col < template.width && row < template.height && template.at(row, col) {
                mask[(r * w + c) as usize] = true;
            }
        }
    }
    mask
}

/// Stroke jitter then additive Gaussian noise then clamping, driven by the
/// draw's noise seed. Ink pixels are visited in row-major order.
pub(crate) fn shade(mask: &[bool], draw: &NuisanceDraw) -> Vec<f32> {
    let mut rng = SplitMix64::new(draw.noise_seed);
    let mut values: Vec<f64> = mask.iter().map(|&on| if on { 1.0 } else { 0.0 }).collect();
    if draw.jitter_rate > 0.0 {
        let rate = f64::from(draw.jitter_rate);
        for v in values.iter_mut().filter(|v| **v > 0.0) {
            if rng.random::<f64>() < rate {
                *v = 0.0;
            }
        }
    }
    if draw.noise_sigma > 0.0 {
        // sigma was validated finite and positive
        let normal = Normal::new(0.0, f64::from(draw.noise_sigma)).expect("valid sigma");
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    values.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect()
}
