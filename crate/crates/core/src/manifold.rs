//! Point clouds sampled from spaces whose topology is known in advance.
//!
//! Betti-number checks are only meaningful while the noise stays inside a
//! tubular neighbourhood of the circle; [`MAX_RELIABLE_NOISE_FRACTION`]
//! documents the bound used by the acceptance tests.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{stream, SplitMix64};

/// Noise above `0.1 * radius` may create or destroy loops at the readout scale.
pub const MAX_RELIABLE_NOISE_FRACTION: f64 = 0.1;

/// A finite sample of points in `R^dim`, optionally tagged.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    orbit_id: Option<Vec<usize>>,
    semantic_id: Option<Vec<usize>>,
}

impl PointCloud {
    /// Build from a flat row-major coordinate buffer.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("point dimension must be positive".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        Ok(Self {
            dim,
            coords,
            orbit_id: None,
            semantic_id: None,
        })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Shape("point cloud needs at least one point".into()))?;
        if let Some(bad) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::Shape(format!(
                "point {bad} has dimension {} but point 0 has {dim}",
                points[bad].len()
            )));
        }
        Self::new(dim, points.concat())
    }

    pub fn with_orbit_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        self.check_tag_len(ids.len(), "orbit_id")?;
        self.orbit_id = Some(ids);
        Ok(self)
    }

    pub fn with_semantic_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        self.check_tag_len(ids.len(), "semantic_id")?;
        self.semantic_id = Some(ids);
        Ok(self)
    }

    fn check_tag_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.len() {
            return Err(Error::Shape(format!("{what} has {len} entries for {} points", self.len())));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn orbit_ids(&self) -> Option<&[usize]> {
        self.orbit_id.as_deref()
    }

    pub fn semantic_ids(&self) -> Option<&[usize]> {
        self.semantic_id.as_deref()
    }

    /// Same tags, new coordinates of possibly different dimension.
    pub fn map_coords(&self, dim: usize, coords: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(dim, coords)?;
        if out.len() != self.len() {
            return Err(Error::Shape("mapped cloud changed the number of points".into()));
        }
        out.orbit_id = self.orbit_id.clone();
        out.semantic_id = self.semantic_id.clone();
        Ok(out)
    }

    /// The points at `indices`, in that order, with their tags.
    pub fn select(&self, indices: &[usize]) -> Self {
        let coords = indices.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        let pick = |tags: &Option<Vec<usize>>| tags.as_ref().map(|t| indices.iter().map(|&i| t[i]).collect());
        Self {
            dim: self.dim,
            coords,
            orbit_id: pick(&self.orbit_id),
            semantic_id: pick(&self.semantic_id),
        }
    }

    /// Uniform subsample without replacement to at most `max_points`, keeping
    /// the original relative order.
    pub fn subsample(&self, max_points: usize, seed: u64) -> Self {
        if self.len() <= max_points {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = SplitMix64::for_item(seed, stream::TOPO_SUBSAMPLE, 0);
        crate::rng::shuffle(&mut idx, &mut rng);
        idx.truncate(max_points);
        idx.sort_unstable();
        self.select(&idx)
    }

    /// CSV with columns `x0..x{dim-1}` followed by `orbit_id` and
    /// `semantic_id` when present. Coordinates use 9 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim).map(|d| format!("x{d}")).collect();
        if self.orbit_id.is_some() {
            header.push("orbit_id".into());
        }
        if self.semantic_id.is_some() {
            header.push("semantic_id".into());
        }
        w.write_record(&header).map_err(csv_err)?;
        for (i, p) in self.points().enumerate() {
            let mut row: Vec<String> = p.iter().map(|v| format!("{v:.8e}")).collect();
            if let Some(t) = &self.orbit_id {
                row.push(t[i].to_string());
            }
            if let Some(t) = &self.semantic_id {
                row.push(t[i].to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        let mut dim = 0;
        let mut orbit_col = None;
        let mut semantic_col = None;
        for (i, name) in header.iter().enumerate() {
            match name {
                "orbit_id" => orbit_col = Some(i),
                "semantic_id" => semantic_col = Some(i),
                n if n == format!("x{dim}") && orbit_col.is_none() && semantic_col.is_none() => dim += 1,
                other => return Err(Error::Format(format!("unexpected point-cloud column `{other}`"))),
            }
        }
        let mut coords = Vec::new();
        let mut orbit = Vec::new();
        let mut semantic = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            for d in 0..dim {
                let v: f64 = field(d)
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: bad coordinate `{}`", line + 1, field(d))))?;
                coords.push(v);
            }
            let tag = |col: usize| -> Result<usize> {
                field(col)
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: bad tag `{}`", line + 1, field(col))))
            };
            if let Some(c) = orbit_col {
                orbit.push(tag(c)?);
            }
            if let Some(c) = semantic_col {
                semantic.push(tag(c)?);
            }
        }
        let mut cloud = Self::new(dim, coords).map_err(|e| Error::Format(e.to_string()))?;
        if orbit_col.is_some() {
            cloud = cloud.with_orbit_ids(orbit)?;
        }
        if semantic_col.is_some() {
            cloud = cloud.with_semantic_ids(semantic)?;
        }
        Ok(cloud)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn circle_points(
    rng: &mut SplitMix64,
    count: usize,
    radius: f64,
    center_x: f64,
    noise: Option<&Normal<f64>>,
    coords: &mut Vec<f64>,
) {
    for _ in 0..count {
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        let (mut x, mut y) = (center_x + radius * theta.cos(), radius * theta.sin());
        if let Some(n) = noise {
            x += n.sample(rng);
            y += n.sample(rng);
        }
        coords.push(x);
        coords.push(y);
    }
}

fn noise_dist(sigma: f64) -> Result<Option<Normal<f64>>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    Ok((sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma checked")))
}

/// `count` points of radius `radius` around the origin plus isotropic noise.
pub fn sample_circle(count: usize, radius: f64, noise_sigma: f64, seed: u64) -> Result<PointCloud> {
    if count < 3 {
        return Err(Error::Domain(format!("a circle sample needs >= 3 points, got {count}")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    let noise = noise_dist(noise_sigma)?;
    let mut rng = SplitMix64::for_item(seed, stream::MANIFOLD, 0);
    let mut coords = Vec::with_capacity(2 * count);
    circle_points(&mut rng, count, radius, 0.0, noise.as_ref(), &mut coords);
    PointCloud::new(2, coords)
}

/// `k` unit circles centred `separation` apart on the x-axis; `orbit_id` is
/// the circle index.
pub fn sample_disjoint_circles(
    k: usize,
    count_per: usize,
    separation: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<PointCloud> {
    const RADIUS: f64 = 1.0;
    if k == 0 || count_per < 3 {
        return Err(Error::Domain("need k >= 1 circles of >= 3 points".into()));
    }
    if !(separation > 2.0 * RADIUS) || !separation.is_finite() {
        return Err(Error::Domain(format!(
            "separation {separation} does not keep unit circles disjoint (needs > 2)"
        )));
    }
    let noise = noise_dist(noise_sigma)?;
    let mut coords = Vec::with_capacity(2 * k * count_per);
    let mut ids = Vec::with_capacity(k * count_per);
    for c in 0..k {
        let mut rng = SplitMix64::for_item(seed, stream::MANIFOLD, c as u64);
        circle_points(&mut rng, count_per, RADIUS, c as f64 * separation, noise.as_ref(), &mut coords);
        ids.extend(std::iter::repeat(c).take(count_per));
    }
    PointCloud::new(2, coords)?.with_orbit_ids(ids)
}

/// Rotate a planar cloud about the origin.
pub fn apply_rotation(cloud: &PointCloud, angle: f64) -> Result<PointCloud> {
    if cloud.dim() != 2 {
        return Err(Error::Domain(format!("rotation needs a 2-D cloud, got dimension {}", cloud.dim())));
    }
    if !angle.is_finite() {
        return Err(Error::Domain("rotation angle must be finite".into()));
    }
    let (s, c) = angle.sin_cos();
    let coords = cloud
        .points()
        .flat_map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
        .collect();
    cloud.map_coords(2, coords)
}
