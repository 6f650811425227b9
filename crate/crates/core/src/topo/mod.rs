//! Vietoris-Rips persistent homology in dimensions 0 and 1 over Z/2.
//!
//! Simplices up to dimension 2 enter the filtration at the largest pairwise
//! distance among their vertices. Zero-persistence pairs are dropped. A class
//! still alive at `max_scale` is reported with an infinite death; every such
//! bar except the single essential component is flagged `truncated`, because
//! its true death lies beyond the computed range.

mod filtration;
mod reduction;

use std::io::Write;

pub use filtration::{Filtration, Simplex};

use crate::error::{Error, Result};
use crate::manifold::PointCloud;

/// Largest cloud accepted for H1 computation; the triangle count grows as N^3.
pub const MAX_POINTS: usize = 600;

/// Condensed symmetric distance matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl DistanceMatrix {
    /// From the row-major strict upper triangle `d(0,1), d(0,2), .., d(n-2,n-1)`.
    pub fn from_condensed(n: usize, upper: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("distance matrix needs at least one point".into()));
        }
        if upper.len() != n * (n - 1) / 2 {
            return Err(Error::Shape(format!(
                "{} entries do not form the upper triangle of a {n}x{n} matrix",
                upper.len()
            )));
        }
        if let Some(bad) = upper.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::Numeric(format!("distance {bad} is not finite and nonnegative")));
        }
        Ok(Self { n, upper })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.upper[i * (2 * self.n - i - 1) / 2 + (j - i - 1)]
    }

    pub fn max_distance(&self) -> f64 {
        self.upper.iter().copied().fold(0.0, f64::max)
    }
}

/// Euclidean distances between all pairs of points.
pub fn pairwise_distances(cloud: &PointCloud) -> Result<DistanceMatrix> {
    let n = cloud.len();
    if n == 0 {
        return Err(Error::Domain("distance matrix needs at least one point".into()));
    }
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let p = cloud.point(i);
        for j in i + 1..n {
            let q = cloud.point(j);
            let sq: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            upper.push(sq.sqrt());
        }
    }
    DistanceMatrix::from_condensed(n, upper)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub birth: f64,
    /// `f64::INFINITY` when the class survives to `max_scale`.
    pub death: f64,
    /// Set when the class outlived `max_scale` and is not the essential
    /// component of H0.
    pub truncated: bool,
}

impl Bar {
    pub fn is_infinite(&self) -> bool {
        self.death.is_infinite()
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    #[inline]
    fn alive_at(&self, scale: f64) -> bool {
        self.birth <= scale && scale < self.death
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDiagram {
    pub h0: Vec<Bar>,
    pub h1: Vec<Bar>,
    pub max_scale: f64,
    pub num_points: usize,
}

impl PersistenceDiagram {
    pub fn empty() -> Self {
        Self {
            h0: Vec::new(),
            h1: Vec::new(),
            max_scale: 0.0,
            num_points: 0,
        }
    }

    pub fn bars(&self, dim: usize) -> &[Bar] {
        match dim {
            0 => &self.h0,
            1 => &self.h1,
            _ => &[],
        }
    }

    /// CSV with columns `dim,birth,death`; infinite deaths are written `inf`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "dim,birth,death")?;
        for (dim, bars) in [(0, &self.h0), (1, &self.h1)] {
            for bar in bars.iter() {
                if bar.is_infinite() {
                    writeln!(out, "{dim},{},inf", bar.birth)?;
                } else {
                    writeln!(out, "{dim},{},{}", bar.birth, bar.death)?;
                }
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Number of simplices (vertices, edges, triangles) in the Rips complex at
/// `scale`, without building it.
pub fn rips_size(dmat: &DistanceMatrix, scale: f64) -> usize {
    let n = dmat.len();
    let mut forward: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut adjacent = vec![false; n * n];
    let mut count = n;
    for i in 0..n {
        for j in i + 1..n {
            if dmat.get(i, j) <= scale {
                forward[i].push(j);
                adjacent[i * n + j] = true;
                count += 1;
            }
        }
    }
    for nbrs in &forward {
        for (a, &j) in nbrs.iter().enumerate() {
            count += nbrs[a + 1..].iter().filter(|&&k| adjacent[j * n + k]).count();
        }
    }
    count
}

/// Largest scale `<= max_scale` whose Rips complex has at most
/// `max_simplices` simplices, found by bisection to a relative `1e-3`.
pub fn scale_within_budget(dmat: &DistanceMatrix, max_scale: f64, max_simplices: usize) -> f64 {
    if rips_size(dmat, max_scale) <= max_simplices {
        return max_scale;
    }
    let (mut lo, mut hi) = (0.0, max_scale);
    while hi - lo > 1e-3 * max_scale {
        let mid = 0.5 * (lo + hi);
        if rips_size(dmat, mid) <= max_simplices {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Persistence of the Rips filtration of `dmat` up to `max_scale`.
pub fn rips_persistence(dmat: &DistanceMatrix, max_scale: f64) -> Result<PersistenceDiagram> {
    if !(max_scale > 0.0) || !max_scale.is_finite() {
        return Err(Error::Domain(format!("max_scale must be positive and finite, got {max_scale}")));
    }
    if dmat.len() > MAX_POINTS {
        return Err(Error::Domain(format!(
            "{} points exceed the {MAX_POINTS}-point limit for H1; subsample first",
            dmat.len()
        )));
    }
    let filtration = Filtration::rips(dmat, max_scale);
    let reduction = reduction::reduce(&filtration);
    let simplices = &filtration.simplices;

    let mut h0 = Vec::new();
    let mut h1 = Vec::new();
    for &(birth, death) in &reduction.pairs {
        let (b, d) = (&simplices[birth as usize], &simplices[death as usize]);
        if d.value <= b.value {
            continue;
        }
        let bar = Bar {
            birth: b.value,
            death: d.value,
            truncated: false,
        };
        match b.dim {
            0 => h0.push(bar),
            1 => h1.push(bar),
            _ => {}
        }
    }
    let mut essential_seen = false;
    for &p in &reduction.unpaired {
        let s = &simplices[p as usize];
        let truncated = match s.dim {
            0 => std::mem::replace(&mut essential_seen, true),
            1 => true,
            _ => continue,
        };
        let bar = Bar {
            birth: s.value,
            death: f64::INFINITY,
            truncated,
        };
        if s.dim == 0 {
            h0.push(bar);
        } else {
            h1.push(bar);
        }
    }
    Ok(PersistenceDiagram {
        h0,
        h1,
        max_scale,
        num_points: dmat.len(),
    })
}

/// Number of H0 and H1 bars alive at `scale` (birth <= scale < death).
pub fn betti_at(diagram: &PersistenceDiagram, scale: f64) -> (usize, usize) {
    let count = |bars: &[Bar]| bars.iter().filter(|b| b.alive_at(scale)).count();
    (count(&diagram.h0), count(&diagram.h1))
}

/// Heuristic readout scale: the midpoint of the widest gap between
/// consecutive critical values. The values are 0 (component births), the
/// finite H0 deaths, the H1 births and finite deaths, and `max_scale` for
/// every truncated bar.
pub fn dominant_scale(diagram: &PersistenceDiagram) -> Result<f64> {
    let mut values = Vec::new();
    if !diagram.h0.is_empty() {
        values.push(0.0);
    }
    for bar in &diagram.h0 {
        if !bar.is_infinite() {
            values.push(bar.death);
        } else if bar.truncated {
            values.push(diagram.max_scale);
        }
    }
    for bar in &diagram.h1 {
        values.push(bar.birth);
        values.push(if bar.is_infinite() { diagram.max_scale } else { bar.death });
    }
    values.sort_by(f64::total_cmp);
    if values.len() < 2 {
        if diagram.num_points > 1 {
            return Err(Error::Degenerate(
                "every bar has zero persistence; no readout scale exists".into(),
            ));
        }
        return Ok(0.0);
    }
    let (lo, hi) = values
        .windows(2)
        .map(|w| (w[0], w[1]))
        .fold((0.0, 0.0), |best, (a, b)| if b - a > best.1 - best.0 { (a, b) } else { best });
    if hi <= lo {
        return Err(Error::Degenerate("all critical values coincide".into()));
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f64; 2]]) -> PointCloud {
        PointCloud::new(2, points.iter().flatten().copied().collect()).unwrap()
    }

    fn diagram(points: &[[f64; 2]], max_scale: f64) -> PersistenceDiagram {
        rips_persistence(&pairwise_distances(&cloud(points)).unwrap(), max_scale).unwrap()
    }

    #[test]
    fn pythagorean_distance() {
        let d = pairwise_distances(&cloud(&[[0.0, 0.0], [3.0, 4.0]])).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn single_point() {
        let dg = diagram(&[[1.0, 2.0]], 1.0);
        assert_eq!(dg.h0.len(), 1);
        assert!(dg.h0[0].is_infinite() && !dg.h0[0].truncated);
        assert!(dg.h1.is_empty());
        assert_eq!(dominant_scale(&dg).unwrap(), 0.0);
        assert_eq!(betti_at(&dg, 0.0), (1, 0));
    }

    #[test]
    fn unit_square_has_one_loop() {
        let dg = diagram(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], 2.0);
        assert_eq!(dg.h1.len(), 1);
        assert_eq!(dg.h1[0].birth, 1.0);
        assert!((dg.h1[0].death - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(betti_at(&dg, 1.2), (1, 1));
        assert_eq!(betti_at(&dg, 0.5), (4, 0));
        assert_eq!(betti_at(&dg, 1.5), (1, 0));
    }

    #[test]
    fn equilateral_triangle_has_no_loop() {
        let h = 3f64.sqrt() / 2.0;
        let dg = diagram(&[[0.0, 0.0], [1.0, 0.0], [0.5, h]], 2.0);
        assert!(dg.h1.is_empty());
        assert_eq!(dg.h0.len(), 3);
    }

    #[test]
    fn empty_diagram_has_no_betti() {
        assert_eq!(betti_at(&PersistenceDiagram::empty(), 1.0), (0, 0));
    }

    #[test]
    fn truncation_flags_surviving_classes() {
        let dg = diagram(&[[0.0, 0.0], [10.0, 0.0]], 1.0);
        assert_eq!(dg.h0.len(), 2);
        assert_eq!(dg.h0.iter().filter(|b| b.is_infinite()).count(), 2);
        assert_eq!(dg.h0.iter().filter(|b| b.truncated).count(), 1);
        assert_eq!(betti_at(&dg, 5.0), (2, 0));
    }

    #[test]
    fn two_clusters_read_two_components() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [10.0, 0.0], [11.0, 0.0], [10.0, 1.0]];
        let dg = diagram(&pts, 20.0);
        let s = dominant_scale(&dg).unwrap();
        assert!(s > 1.5 && s < 9.0, "scale {s}");
        assert_eq!(betti_at(&dg, s).0, 2);
    }

    #[test]
    fn duplicate_points_are_degenerate() {
        let dg = diagram(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]], 1.0);
        assert!(matches!(dominant_scale(&dg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = pairwise_distances(&cloud(&[[0.0, 0.0], [1.0, 0.0]])).unwrap();
        assert!(rips_persistence(&d, 0.0).is_err());
        assert!(rips_persistence(&d, f64::NAN).is_err());
        assert!(matches!(
            DistanceMatrix::from_condensed(2, vec![f64::NAN]),
            Err(Error::Numeric(_))
        ));
        let big = PointCloud::new(1, (0..601).map(f64::from).collect()).unwrap();
        assert!(rips_persistence(&pairwise_distances(&big).unwrap(), 1.0).is_err());
    }

    #[test]
    fn csv_export() {
        let dg = diagram(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], 2.0);
        let text = dg.to_csv_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "dim,birth,death");
        assert!(lines.contains(&"0,0,inf"));
        assert!(lines.contains(&"1,1,1.4142135623730951"));
        assert_eq!(lines.len(), 1 + 4 + 1);
    }

    #[test]
    fn size_count_matches_filtration() {
        let pts: Vec<[f64; 2]> = (0..25).map(|i| [(i as f64 * 0.7).sin() * 2.0, (i as f64 * 1.3).cos()]).collect();
        let d = pairwise_distances(&cloud(&pts)).unwrap();
        for scale in [0.1, 0.5, 1.0, 2.0, 5.0] {
            assert_eq!(rips_size(&d, scale), Filtration::rips(&d, scale).len());
        }
        let s = scale_within_budget(&d, 5.0, 400);
        assert!(s < 5.0 && rips_size(&d, s) <= 400);
    }
}
