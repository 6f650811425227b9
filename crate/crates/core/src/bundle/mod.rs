//! The constructed fiber bundle: images of `A+B` expressions whose semantic
//! label is `(A+B) mod n`.
//!
//! An [`Observation`] is one point of the total space. Its latents `(a, b)`
//! pick the orbit, its [`NuisanceDraw`] picks the point within the orbit, and
//! [`semantic_label`] is the projection onto the base.

pub mod glyphs;
pub mod io;
mod render;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, SplitMix64};

/// A point of the base space `Z_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SemanticLabel(u32);

impl SemanticLabel {
    pub fn value(self) -> u32 {
        self.0
    }
}

/// `(a + b) mod n`.
pub fn semantic_label(a: i64, b: i64, n: i64) -> Result<SemanticLabel> {
    if n < 2 {
        return Err(Error::Domain(format!("modulus must be >= 2, got {n}")));
    }
    if a < 0 || b < 0 {
        return Err(Error::Domain(format!("latents must be nonnegative, got ({a}, {b})")));
    }
    let n = n as i128;
    let c = (a as i128 + b as i128) % n;
    Ok(SemanticLabel(c as u32))
}

/// Parameterization of the nuisance group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NuisanceConfig {
    /// Maximum absolute shift per axis, pixels.
    pub max_translation: f32,
    /// Maximum absolute rotation, radians.
    pub rotation_range: f32,
    pub scale_range: (f32, f32),
    /// Upper bound of the per-image stroke dropout rate.
    pub stroke_jitter: f32,
    pub noise_sigma: f32,
    pub translate: bool,
    pub rotate: bool,
    pub scale: bool,
    pub jitter: bool,
    pub noise: bool,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            max_translation: 3.0,
            rotation_range: 0.15,
            scale_range: (0.9, 1.1),
            stroke_jitter: 0.0,
            noise_sigma: 0.05,
            translate: true,
            rotate: true,
            scale: true,
            jitter: false,
            noise: true,
        }
    }
}

impl NuisanceConfig {
    /// Every transform disabled: the fiber collapses to a single image.
    pub fn none() -> Self {
        Self {
            translate: false,
            rotate: false,
            scale: false,
            jitter: false,
            noise: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.max_translation,
            self.rotation_range,
            self.scale_range.0,
            self.scale_range.1,
            self.stroke_jitter,
            self.noise_sigma,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("nuisance parameters must be finite".into()));
        }
        if self.max_translation < 0.0 || self.rotation_range < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::Domain("nuisance ranges must be nonnegative".into()));
        }
        if self.rotation_range > std::f32::consts::PI {
            return Err(Error::Domain("rotation_range must not exceed pi".into()));
        }
        let (lo, hi) = self.scale_range;
        if lo <= 0.0 || lo > hi {
            return Err(Error::Domain(format!("scale_range must satisfy 0 < min <= max, got ({lo}, {hi})")));
        }
        if !(0.0..=1.0).contains(&self.stroke_jitter) {
            return Err(Error::Domain("stroke_jitter must be a probability".into()));
        }
        Ok(())
    }

    /// Largest scale factor any draw can produce.
    pub fn max_scale(&self) -> f32 {
        if self.scale {
            self.scale_range.1
        } else {
            1.0
        }
    }

    /// Draw one group element. All six values are always consumed from `rng`
    /// in a fixed order so that toggling a transform does not shift the stream.
    pub fn sample(&self, rng: &mut SplitMix64) -> NuisanceDraw {
        let t = self.max_translation;
        let dx = symmetric(rng, t);
        let dy = symmetric(rng, t);
        let rotation = symmetric(rng, self.rotation_range);
        let (lo, hi) = self.scale_range;
        let scale = lo + (hi - lo) * rng.random::<f32>();
        let jitter_rate = self.stroke_jitter * rng.random::<f32>();
        let noise_seed = rng.next_u64();
        NuisanceDraw {
            dx: if self.translate { dx } else { 0.0 },
            dy: if self.translate { dy } else { 0.0 },
            rotation: if self.rotate { rotation } else { 0.0 },
            scale: if self.scale { scale.clamp(lo, hi) } else { 1.0 },
            jitter_rate: if self.jitter { jitter_rate } else { 0.0 },
            noise_sigma: if self.noise { self.noise_sigma } else { 0.0 },
            noise_seed,
        }
    }
}

fn symmetric(rng: &mut SplitMix64, range: f32) -> f32 {
    if range == 0.0 {
        let _ = rng.random::<f32>();
        0.0
    } else {
        (range * (2.0 * rng.random::<f32>() - 1.0)).clamp(-range, range)
    }
}

/// Concrete nuisance values for one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceDraw {
    pub dx: f32,
    pub dy: f32,
    pub rotation: f32,
    pub scale: f32,
    pub jitter_rate: f32,
    pub noise_sigma: f32,
    pub noise_seed: u64,
}

impl NuisanceDraw {
    pub fn identity() -> Self {
        Self {
            dx: 0.0,
            dy: 0.0,
            rotation: 0.0,
            scale: 1.0,
            jitter_rate: 0.0,
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }

    /// The float components in file order.
    pub fn to_f32s(&self) -> [f32; 6] {
        [self.dx, self.dy, self.rotation, self.scale, self.jitter_rate, self.noise_sigma]
    }

    pub fn from_f32s(v: [f32; 6], noise_seed: u64) -> Self {
        Self {
            dx: v[0],
            dy: v[1],
            rotation: v[2],
            scale: v[3],
            jitter_rate: v[4],
            noise_sigma: v[5],
            noise_seed,
        }
    }

    /// Check the draw lies inside `config`. Disabled transforms must be at identity.
    pub fn check_within(&self, config: &NuisanceConfig) -> Result<()> {
        let out = |what: &str| Err(Error::Domain(format!("nuisance draw {what} outside configured range")));
        if self.to_f32s().iter().any(|v| !v.is_finite()) {
            return out("value");
        }
        let t = if config.translate { config.max_translation } else { 0.0 };
        if self.dx.abs() > t || self.dy.abs() > t {
            return out("translation");
        }
        let r = if config.rotate { config.rotation_range } else { 0.0 };
        if self.rotation.abs() > r {
            return out("rotation");
        }
        let (lo, hi) = if config.scale { config.scale_range } else { (1.0, 1.0) };
        if self.scale < lo || self.scale > hi {
            return out("scale");
        }
        let j = if config.jitter { config.stroke_jitter } else { 0.0 };
        if !(0.0..=j).contains(&self.jitter_rate) {
            return out("stroke jitter");
        }
        let s = if config.noise { config.noise_sigma } else { 0.0 };
        if !(0.0..=s).contains(&self.noise_sigma) {
            return out("noise sigma");
        }
        Ok(())
    }
}

/// Generative parameters of the bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleSpec {
    modulus: u32,
    digit_range: u32,
    canvas_height: u32,
    canvas_width: u32,
    glyph_scale: u32,
    nuisance: NuisanceConfig,
    glyph_set_version: u32,
}

impl BundleSpec {
    pub const DEFAULT_GLYPH_SCALE: u32 = 2;

    pub fn new(
        modulus: u32,
        digit_range: u32,
        canvas_height: u32,
        canvas_width: u32,
        nuisance: NuisanceConfig,
    ) -> Result<Self> {
        Self::with_options(
            modulus,
            digit_range,
            canvas_height,
            canvas_width,
            Self::DEFAULT_GLYPH_SCALE,
            nuisance,
            glyphs::GLYPH_SET_V1,
        )
    }

    pub fn with_options(
        modulus: u32,
        digit_range: u32,
        canvas_height: u32,
        canvas_width: u32,
        glyph_scale: u32,
        nuisance: NuisanceConfig,
        glyph_set_version: u32,
    ) -> Result<Self> {
        if modulus < 2 {
            return Err(Error::Domain(format!("modulus must be >= 2, got {modulus}")));
        }
        if digit_range < 1 || digit_range < modulus - 1 {
            return Err(Error::Domain(format!(
                "digit_range must be >= max(1, n-1) = {}, got {digit_range}",
                (modulus - 1).max(1)
            )));
        }
        if digit_range > u32::from(u16::MAX) {
            return Err(Error::Domain("digit_range must fit in 16 bits".into()));
        }
        if glyph_set_version != glyphs::GLYPH_SET_V1 {
            return Err(Error::Domain(format!("unknown glyph set version {glyph_set_version}")));
        }
        if glyph_scale == 0 || canvas_height == 0 || canvas_width == 0 {
            return Err(Error::Domain("canvas and glyph scale must be positive".into()));
        }
        nuisance.validate()?;
        let spec = Self {
            modulus,
            digit_range,
            canvas_height,
            canvas_width,
            glyph_scale,
            nuisance,
            glyph_set_version,
        };
        let (tw, th) = spec.longest_template_size();
        let s = f64::from(nuisance.max_scale());
        let (need_w, need_h) = ((tw as f64 * s).ceil(), (th as f64 * s).ceil());
        if need_w > f64::from(canvas_width) || need_h > f64::from(canvas_height) {
            return Err(Error::Domain(format!(
                "canvas {canvas_height}x{canvas_width} cannot hold the longest expression ({need_h}x{need_w} at scale {s})"
            )));
        }
        Ok(spec)
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }
    pub fn digit_range(&self) -> u32 {
        self.digit_range
    }
    pub fn canvas_height(&self) -> u32 {
        self.canvas_height
    }
    pub fn canvas_width(&self) -> u32 {
        self.canvas_width
    }
    pub fn glyph_scale(&self) -> u32 {
        self.glyph_scale
    }
    pub fn nuisance(&self) -> &NuisanceConfig {
        &self.nuisance
    }
    pub fn glyph_set_version(&self) -> u32 {
        self.glyph_set_version
    }
    pub fn pixel_count(&self) -> usize {
        self.canvas_height as usize * self.canvas_width as usize
    }
    /// Number of distinct `(a, b)` pairs.
    pub fn orbit_count(&self) -> usize {
        let r = self.digit_range as usize + 1;
        r * r
    }
    /// Dense index of the orbit of `(a, b)`.
    pub fn orbit_index(&self, a: u32, b: u32) -> usize {
        a as usize * (self.digit_range as usize + 1) + b as usize
    }

    fn longest_template_size(&self) -> (usize, usize) {
        let digits = self.digit_range.to_string().len();
        let w = glyphs::text_width(2 * digits + 1) * self.glyph_scale as usize;
        let h = glyphs::GLYPH_HEIGHT * self.glyph_scale as usize;
        (w, h)
    }

    fn check_latents(&self, a: i64, b: i64) -> Result<()> {
        let r = i64::from(self.digit_range);
        if !(0..=r).contains(&a) || !(0..=r).contains(&b) {
            return Err(Error::Domain(format!("latents ({a}, {b}) outside [0, {r}]")));
        }
        Ok(())
    }
}

/// One rendered image with its semantics and the nuisance that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pixels: Vec<f32>,
    pub height: u32,
    pub width: u32,
    pub label: SemanticLabel,
    pub a: u32,
    pub b: u32,
    pub nuisance: NuisanceDraw,
}

impl Observation {
    /// Sum of squared pixel differences, square-rooted.
    pub fn l2_distance(&self, other: &Observation) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&x, &y)| {
                let d = f64::from(x) - f64::from(y);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check_against(&self, spec: &BundleSpec) -> Result<()> {
        if self.height != spec.canvas_height
            || self.width != spec.canvas_width
            || self.pixels.len() != spec.pixel_count()
        {
            return Err(Error::Format("observation dimensions do not match spec".into()));
        }
        if self.pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Format("pixel intensity outside [0, 1]".into()));
        }
        let expected = semantic_label(i64::from(self.a), i64::from(self.b), i64::from(spec.modulus))?;
        if expected != self.label {
            return Err(Error::Format(format!(
                "label {} does not match ({} + {}) mod {}",
                self.label.0, self.a, self.b, spec.modulus
            )));
        }
        Ok(())
    }
}

/// Render `"a+b"` under `draw`.
pub fn render_expression(a: i64, b: i64, draw: &NuisanceDraw, spec: &BundleSpec) -> Result<Observation> {
    spec.check_latents(a, b)?;
    draw.check_within(&spec.nuisance)?;
    let text = format!("{a}+{b}");
    let template = glyphs::rasterize(&text, spec.glyph_scale as usize)
        .ok_or_else(|| Error::Render(format!("no glyph for `{text}`")))?;
    let (h, w) = (spec.canvas_height as usize, spec.canvas_width as usize);
    let s = f64::from(draw.scale);
    if (template.width as f64 * s).ceil() > w as f64 || (template.height as f64 * s).ceil() > h as f64 {
        return Err(Error::Render(format!("`{text}` at scale {s} overflows a {h}x{w} canvas")));
    }
    let mask = render::warp_template(&template, h, w, draw);
    let pixels = render::shade(&mask, draw);
    Ok(Observation {
        pixels,
        height: spec.canvas_height,
        width: spec.canvas_width,
        label: semantic_label(a, b, i64::from(spec.modulus))?,
        a: a as u32,
        b: b as u32,
        nuisance: *draw,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub spec: BundleSpec,
    pub items: Vec<Observation>,
    pub seed: u64,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Pixels as an `items x pixels` row-major matrix in `f64`.
    pub fn pixel_matrix(&self) -> Vec<f64> {
        self.items
            .iter()
            .flat_map(|o| o.pixels.iter().map(|&p| f64::from(p)))
            .collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|o| o.label.value() as usize).collect()
    }

    pub fn orbit_ids(&self) -> Vec<usize> {
        self.items.iter().map(|o| self.spec.orbit_index(o.a, o.b)).collect()
    }
}

fn sample_item(spec: &BundleSpec, seed: u64, index: u64) -> Result<Observation> {
    let mut rng = SplitMix64::for_item(seed, stream::DATASET_ITEM, index);
    let a = rng.random_range(0..=spec.digit_range);
    let b = rng.random_range(0..=spec.digit_range);
    let draw = spec.nuisance.sample(&mut rng);
    render_expression(i64::from(a), i64::from(b), &draw, spec)
}

/// `count` observations with latents uniform over `[0, digit_range]^2`.
/// Item `i` depends only on `(spec, seed, i)`.
pub fn sample_dataset(spec: &BundleSpec, count: usize, seed: u64) -> Result<LabeledDataset> {
    if count == 0 {
        return Err(Error::Domain("dataset count must be >= 1".into()));
    }
    let items = (0..count as u64)
        .map(|i| sample_item(spec, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset {
        spec: spec.clone(),
        items,
        seed,
    })
}

/// `k` renderings of the same `(a, b)` with independent nuisance draws.
pub fn orbit_batch(a: i64, b: i64, spec: &BundleSpec, k: usize, seed: u64) -> Result<Vec<Observation>> {
    if k == 0 {
        return Err(Error::Domain("orbit size must be >= 1".into()));
    }
    spec.check_latents(a, b)?;
    (0..k as u64)
        .map(|i| {
            let mut rng = SplitMix64::for_item(seed, stream::ORBIT_ITEM, i);
            let draw = spec.nuisance.sample(&mut rng);
            render_expression(a, b, &draw, spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_spec(n: u32) -> BundleSpec {
        BundleSpec::new(n, 9, 16, 48, NuisanceConfig::default()).unwrap()
    }

    fn clean_spec(n: u32) -> BundleSpec {
        BundleSpec::new(n, 9, 16, 48, NuisanceConfig::none()).unwrap()
    }

    #[test]
    fn label_examples() {
        assert_eq!(semantic_label(2, 4, 5).unwrap().value(), 1);
        assert_eq!(semantic_label(0, 0, 7).unwrap().value(), 0);
        assert_eq!(semantic_label(9, 8, 10).unwrap().value(), 7);
    }

    #[test]
    fn label_domain_errors() {
        assert!(matches!(semantic_label(1, 1, 1), Err(Error::Domain(_))));
        assert!(matches!(semantic_label(-1, 1, 5), Err(Error::Domain(_))));
        assert!(matches!(semantic_label(1, -3, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn spec_rejects_small_canvas() {
        assert!(matches!(
            BundleSpec::new(5, 9, 10, 48, NuisanceConfig::default()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            BundleSpec::new(5, 99, 16, 48, NuisanceConfig::default()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            BundleSpec::new(5, 3, 16, 48, NuisanceConfig::default()),
            Err(Error::Domain(_))
        ));
        assert!(BundleSpec::new(1, 9, 16, 48, NuisanceConfig::default()).is_err());
    }

    #[test]
    fn nuisance_config_validation() {
        let bad_scale = NuisanceConfig {
            scale_range: (1.2, 1.1),
            ..NuisanceConfig::default()
        };
        assert!(bad_scale.validate().is_err());
        let bad_p = NuisanceConfig {
            stroke_jitter: 1.5,
            ..NuisanceConfig::default()
        };
        assert!(bad_p.validate().is_err());
        let bad_sigma = NuisanceConfig {
            noise_sigma: -0.1,
            ..NuisanceConfig::default()
        };
        assert!(bad_sigma.validate().is_err());
    }

    #[test]
    fn identity_render_is_deterministic() {
        let spec = clean_spec(5);
        let x = render_expression(1, 2, &NuisanceDraw::identity(), &spec).unwrap();
        let y = render_expression(1, 2, &NuisanceDraw::identity(), &spec).unwrap();
        assert_eq!(x.pixels.len(), 16 * 48);
        assert!(x.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        let xb: Vec<u32> = x.pixels.iter().map(|p| p.to_bits()).collect();
        let yb: Vec<u32> = y.pixels.iter().map(|p| p.to_bits()).collect();
        assert_eq!(xb, yb);
        assert_eq!(x.label.value(), 3);
    }

    #[test]
    fn different_draws_same_label() {
        let spec = default_spec(5);
        let mut rng = SplitMix64::new(11);
        let d1 = spec.nuisance().sample(&mut rng);
        let d2 = spec.nuisance().sample(&mut rng);
        let x1 = render_expression(3, 4, &d1, &spec).unwrap();
        let x2 = render_expression(3, 4, &d2, &spec).unwrap();
        assert_ne!(x1.pixels, x2.pixels);
        assert_eq!(x1.label, x2.label);
    }

    #[test]
    fn commuted_expression_collapses_under_projection() {
        for n in 2..=8 {
            let spec = clean_spec(n);
            let d = NuisanceDraw::identity();
            let x = render_expression(3, 4, &d, &spec).unwrap();
            let y = render_expression(4, 3, &d, &spec).unwrap();
            assert_ne!(x.pixels, y.pixels);
            assert_eq!(x.label, y.label);
        }
    }

    #[test]
    fn render_rejects_bad_inputs() {
        let spec = default_spec(5);
        let d = NuisanceDraw::identity();
        assert!(matches!(render_expression(10, 0, &d, &spec), Err(Error::Domain(_))));
        assert!(matches!(render_expression(-1, 0, &d, &spec), Err(Error::Domain(_))));
        let wild = NuisanceDraw { dx: 50.0, ..d };
        assert!(matches!(render_expression(1, 1, &wild, &spec), Err(Error::Domain(_))));
        let clean = clean_spec(5);
        let noisy = NuisanceDraw { noise_sigma: 0.1, ..d };
        assert!(matches!(render_expression(1, 1, &noisy, &clean), Err(Error::Domain(_))));
    }

    #[test]
    fn tight_canvas_boundary() {
        // "9+9" at glyph scale 2 is 34 px wide and 14 px tall
        let fits = BundleSpec::with_options(5, 9, 14, 34, 2, NuisanceConfig::none(), 1).unwrap();
        let obs = render_expression(9, 9, &NuisanceDraw::identity(), &fits).unwrap();
        assert!(obs.pixels.iter().any(|&p| p > 0.0));
        assert!(BundleSpec::with_options(5, 9, 14, 33, 2, NuisanceConfig::none(), 1).is_err());
        assert!(BundleSpec::with_options(5, 9, 13, 34, 2, NuisanceConfig::none(), 1).is_err());
    }

    #[test]
    fn dataset_is_reproducible() {
        let spec = default_spec(5);
        let a = sample_dataset(&spec, 100, 7).unwrap();
        let b = sample_dataset(&spec, 100, 7).unwrap();
        assert_eq!(io::to_bytes(&a), io::to_bytes(&b));
        let c = sample_dataset(&spec, 100, 8).unwrap();
        assert_ne!(io::to_bytes(&a), io::to_bytes(&c));
    }

    #[test]
    fn dataset_covers_all_labels() {
        let spec = default_spec(5);
        let d = sample_dataset(&spec, 500, 7).unwrap();
        let mut counts = [0usize; 5];
        for o in &d.items {
            counts[o.label.value() as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    }

    #[test]
    fn dataset_count_zero_is_error() {
        assert!(matches!(sample_dataset(&default_spec(5), 0, 7), Err(Error::Domain(_))));
    }

    #[test]
    fn orbit_batch_shares_label() {
        let spec = default_spec(5);
        let orbit = orbit_batch(2, 3, &spec, 8, 1).unwrap();
        assert_eq!(orbit.len(), 8);
        assert!(orbit.iter().all(|o| o.label.value() == 0 && o.a == 2 && o.b == 3));
        for i in 0..8 {
            for j in i + 1..8 {
                assert!(orbit[i].l2_distance(&orbit[j]) > 0.0);
            }
        }
        assert!(orbit_batch(2, 3, &spec, 0, 1).is_err());
    }

    #[test]
    fn singleton_orbit_without_nuisance_equals_render() {
        let spec = clean_spec(5);
        let orbit = orbit_batch(2, 3, &spec, 1, 99).unwrap();
        let direct = render_expression(2, 3, &NuisanceDraw::identity(), &spec).unwrap();
        assert_eq!(orbit[0].pixels, direct.pixels);
        assert_eq!(orbit[0].label, direct.label);
    }

    #[test]
    fn sampled_draws_lie_in_range() {
        let cfg = NuisanceConfig {
            jitter: true,
            stroke_jitter: 0.3,
            ..NuisanceConfig::default()
        };
        let mut rng = SplitMix64::new(3);
        for _ in 0..2000 {
            cfg.sample(&mut rng).check_within(&cfg).unwrap();
        }
    }
}
