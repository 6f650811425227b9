//! Quotient-level diagnostics on latent embeddings.
//!
//! Ties in any argmax go to the lowest class index.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::manifold::PointCloud;
use crate::rng::{shuffle, stream, SplitMix64};
use crate::tensor_net::{argmax, ReadoutHead, Tensor};

pub const PROBE_EPOCHS: usize = 500;
pub const PROBE_LR: f64 = 0.5;
pub const PCA_ITERATIONS: usize = 200;

/// Embeddings tagged with an orbit id and a semantic class per point.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSet {
    cloud: PointCloud,
}

impl LatentSet {
    pub fn new(cloud: PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::Shape("latent set needs at least one point".into()));
        }
        if cloud.orbit_ids().is_none() || cloud.semantic_ids().is_none() {
            return Err(Error::Shape("latent set needs orbit_id and semantic_id tags".into()));
        }
        Ok(Self { cloud })
    }

    pub fn from_parts(dim: usize, coords: Vec<f64>, orbit_ids: Vec<usize>, semantic_ids: Vec<usize>) -> Result<Self> {
        Self::new(
            PointCloud::new(dim, coords)?
                .with_orbit_ids(orbit_ids)?
                .with_semantic_ids(semantic_ids)?,
        )
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn into_cloud(self) -> PointCloud {
        self.cloud
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.cloud.dim()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.cloud.point(i)
    }

    pub fn orbit_ids(&self) -> &[usize] {
        self.cloud.orbit_ids().expect("checked at construction")
    }

    pub fn semantic_ids(&self) -> &[usize] {
        self.cloud.semantic_ids().expect("checked at construction")
    }

    /// One more than the largest semantic id.
    pub fn class_count(&self) -> usize {
        self.semantic_ids().iter().max().map_or(0, |m| m + 1)
    }

    fn ids(&self, by: GroupBy) -> &[usize] {
        match by {
            GroupBy::Orbit => self.orbit_ids(),
            GroupBy::Semantic => self.semantic_ids(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Orbit,
    Semantic,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean within-group squared distance to the group centroid over the mean
/// squared distance of group centroids to the global centroid.
pub fn orbit_collapse_ratio(latents: &LatentSet, by: GroupBy) -> Result<f64> {
    let ids = latents.ids(by);
    let d = latents.dim();
    let groups = ids.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; groups];
    let mut sums = vec![0.0; groups * d];
    let mut global = vec![0.0; d];
    for (i, &g) in ids.iter().enumerate() {
        counts[g] += 1;
        for (k, x) in latents.point(i).iter().enumerate() {
            sums[g * d + k] += x;
            global[k] += x;
        }
    }
    let present: Vec<usize> = (0..groups).filter(|&g| counts[g] > 0).collect();
    if present.len() < 2 {
        return Err(Error::Degenerate(format!("{by:?} grouping has {} group(s); need 2", present.len())));
    }
    if let Some(&g) = present.iter().find(|&&g| counts[g] < 2) {
        return Err(Error::Degenerate(format!("{by:?} group {g} has a single member")));
    }
    let n = latents.len() as f64;
    global.iter_mut().for_each(|v| *v /= n);
    for &g in &present {
        let c = counts[g] as f64;
        sums[g * d..(g + 1) * d].iter_mut().for_each(|v| *v /= c);
    }
    let within = ids
        .iter()
        .enumerate()
        .map(|(i, &g)| sq_dist(latents.point(i), &sums[g * d..(g + 1) * d]))
        .sum::<f64>()
        / n;
    let between = present
        .iter()
        .map(|&g| sq_dist(&sums[g * d..(g + 1) * d], &global))
        .sum::<f64>()
        / present.len() as f64;
    if between <= 0.0 {
        return Err(Error::Degenerate(format!("{by:?} group centroids coincide")));
    }
    Ok(within / between)
}

/// Held-out accuracy of a probe and the trained head.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub head: ReadoutHead,
}

pub fn linear_probe(latents: &LatentSet, epochs: usize, lr: f64, seed: u64) -> Result<f64> {
    train_probe(latents, epochs, lr, seed).map(|r| r.accuracy)
}

/// Multinomial logistic regression on an 80/20 seeded split.
///
/// Features are standardized with training-split statistics during
/// optimization; the returned head acts on raw latents.
pub fn train_probe(latents: &LatentSet, epochs: usize, lr: f64, seed: u64) -> Result<ProbeResult> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::Domain(format!("probe learning rate must be positive, got {lr}")));
    }
    let classes = latents.class_count();
    let labels = latents.semantic_ids();
    let distinct = {
        let mut seen = vec![false; classes];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::Degenerate("linear probe needs at least 2 classes".into()));
    }
    let mut order: Vec<usize> = (0..latents.len()).collect();
    shuffle(&mut order, &mut SplitMix64::for_item(seed, stream::PROBE_SPLIT, 0));
    let cut = latents.len() * 4 / 5;
    let (train, test) = order.split_at(cut);
    if test.is_empty() {
        return Err(Error::Degenerate(format!("{} points leave an empty test split", latents.len())));
    }
    let mut in_train = vec![false; classes];
    train.iter().for_each(|&i| in_train[labels[i]] = true);
    let mut seen = vec![false; classes];
    labels.iter().for_each(|&l| seen[l] = true);
    if let Some(c) = (0..classes).find(|&c| seen[c] && !in_train[c]) {
        return Err(Error::Degenerate(format!("class {c} is absent from the training split")));
    }

    let d = latents.dim();
    let m = train.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in train {
        mean.iter_mut().zip(latents.point(i)).for_each(|(a, x)| *a += x);
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut scale = vec![0.0; d];
    for &i in train {
        for (k, x) in latents.point(i).iter().enumerate() {
            scale[k] += (x - mean[k]).powi(2);
        }
    }
    for s in scale.iter_mut() {
        let sd = (*s / m).sqrt();
        *s = if sd > 1e-12 { sd } else { 1.0 };
    }
    let x: Vec<Vec<f64>> = train
        .iter()
        .map(|&i| latents.point(i).iter().zip(&mean).zip(&scale).map(|((v, mu), s)| (v - mu) / s).collect())
        .collect();

    let mut w = vec![0.0; d * classes];
    let mut b = vec![0.0; classes];
    let mut logits = vec![0.0; classes];
    for _ in 0..epochs {
        let mut gw = vec![0.0; d * classes];
        let mut gb = vec![0.0; classes];
        for (row, &i) in x.iter().zip(train) {
            logits.copy_from_slice(&b);
            for (k, v) in row.iter().enumerate() {
                for (l, wk) in logits.iter_mut().zip(&w[k * classes..(k + 1) * classes]) {
                    *l += v * wk;
                }
            }
            crate::tensor_net::softmax_in_place(&mut logits);
            logits[labels[i]] -= 1.0;
            for (k, v) in row.iter().enumerate() {
                for (g, p) in gw[k * classes..(k + 1) * classes].iter_mut().zip(&logits) {
                    *g += v * p;
                }
            }
            gb.iter_mut().zip(&logits).for_each(|(g, p)| *g += p);
        }
        w.iter_mut().zip(&gw).for_each(|(w, g)| *w -= lr * g / m);
        b.iter_mut().zip(&gb).for_each(|(b, g)| *b -= lr * g / m);
    }

    // fold the standardization into the affine map
    let mut raw_w = vec![0.0; d * classes];
    let mut raw_b = b.clone();
    for k in 0..d {
        for c in 0..classes {
            let wk = w[k * classes + c] / scale[k];
            raw_w[k * classes + c] = wk;
            raw_b[c] -= mean[k] * wk;
        }
    }
    let head = ReadoutHead::new(Tensor::matrix(d, classes, raw_w)?, raw_b)?;
    let correct = test.iter().filter(|&&i| head.predict(latents.point(i)) == labels[i]).count();
    Ok(ProbeResult {
        accuracy: correct as f64 / test.len() as f64,
        head,
    })
}

/// Anything that assigns class scores to a latent vector.
pub trait LogitScorer {
    fn logits(&self, z: &[f64]) -> Vec<f64>;
}

impl LogitScorer for ReadoutHead {
    fn logits(&self, z: &[f64]) -> Vec<f64> {
        ReadoutHead::logits(self, z)
    }
}

/// Fraction of seeded same-class pairs whose midpoint leaves the class.
///
/// A midpoint whose class logit ties the maximum (within a relative
/// `1e-9`) still counts as inside.
pub fn convexity_violation_rate<S: LogitScorer + ?Sized>(
    scorer: &S,
    latents: &LatentSet,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    if pairs == 0 {
        return Err(Error::Domain("convexity check needs at least one pair".into()));
    }
    let predicted: Vec<usize> = (0..latents.len()).map(|i| argmax(&scorer.logits(latents.point(i)))).collect();
    let classes = predicted.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in predicted.iter().enumerate() {
        members[c].push(i);
    }
    let eligible: Vec<usize> = (0..latents.len()).filter(|&i| members[predicted[i]].len() >= 2).collect();
    if eligible.is_empty() {
        return Ok(0.0);
    }
    let mut rng = SplitMix64::for_item(seed, stream::CONVEXITY_PAIRS, 0);
    let mut mid = vec![0.0; latents.dim()];
    let mut violations = 0usize;
    for _ in 0..pairs {
        let i = eligible[rng.random_range(0..eligible.len())];
        let c = predicted[i];
        let pool = &members[c];
        let mut j = pool[rng.random_range(0..pool.len() - 1)];
        if j == i {
            j = pool[pool.len() - 1];
        }
        for ((m, a), b) in mid.iter_mut().zip(latents.point(i)).zip(latents.point(j)) {
            *m = 0.5 * (a + b);
        }
        let logits = scorer.logits(&mid);
        let best = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * (1.0 + logits.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        if logits[c] < best - tol {
            violations += 1;
        }
    }
    Ok(violations as f64 / pairs as f64)
}

/// Per-snapshot geometry of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub epochs: Vec<usize>,
    /// Mean pairwise distance over all points.
    pub expansion: Vec<f64>,
    /// Mean pairwise distance between points of the same orbit.
    pub within_orbit: Vec<f64>,
    /// Mean pairwise distance between points of the same class.
    pub within_class: Vec<f64>,
    /// Mean pairwise distance between points of different classes.
    pub between_class: Vec<f64>,
    pub probe_accuracy: Vec<Option<f64>>,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.epochs.len();
        let lens = [
            self.expansion.len(),
            self.within_orbit.len(),
            self.within_class.len(),
            self.between_class.len(),
            self.probe_accuracy.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Shape(format!("series lengths {lens:?} differ from {n} epochs")));
        }
        if self.epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("epochs must be strictly increasing".into()));
        }
        Ok(())
    }

    /// `within_class / expansion` per epoch; small values mean snapped classes.
    pub fn snap_ratio(&self) -> Vec<f64> {
        self.within_class.iter().zip(&self.expansion).map(|(w, e)| w / e).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,expansion,within_orbit,within_class,between_class,probe_accuracy")?;
        for i in 0..self.len() {
            let probe = self.probe_accuracy[i].map_or(String::new(), |p| format!("{p:.6}"));
            writeln!(
                out,
                "{},{:.9e},{:.9e},{:.9e},{:.9e},{}",
                self.epochs[i], self.expansion[i], self.within_orbit[i], self.within_class[i], self.between_class[i], probe
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Mean pairwise distances `(all, same orbit, same class, different class)`.
/// Empty categories yield 0.
pub fn distance_profile(latents: &LatentSet) -> (f64, f64, f64, f64) {
    let (orbits, classes) = (latents.orbit_ids(), latents.semantic_ids());
    let mut sum = [0.0; 4];
    let mut count = [0usize; 4];
    for i in 0..latents.len() {
        for j in i + 1..latents.len() {
            let d = sq_dist(latents.point(i), latents.point(j)).sqrt();
            sum[0] += d;
            count[0] += 1;
            if orbits[i] == orbits[j] {
                sum[1] += d;
                count[1] += 1;
            }
            let k = if classes[i] == classes[j] { 2 } else { 3 };
            sum[k] += d;
            count[k] += 1;
        }
    }
    let mean = |k: usize| if count[k] == 0 { 0.0 } else { sum[k] / count[k] as f64 };
    (mean(0), mean(1), mean(2), mean(3))
}

/// Geometry series over `(epoch, snapshot)` pairs. Probe accuracies are left
/// empty.
pub fn expansion_trace(snapshots: &[(usize, LatentSet)]) -> Result<MetricSeries> {
    let Some((_, first)) = snapshots.first() else {
        return Err(Error::Domain("expansion trace needs at least one snapshot".into()));
    };
    let mut series = MetricSeries {
        epochs: Vec::new(),
        expansion: Vec::new(),
        within_orbit: Vec::new(),
        within_class: Vec::new(),
        between_class: Vec::new(),
        probe_accuracy: Vec::new(),
    };
    for (epoch, snap) in snapshots {
        if snap.len() != first.len() || snap.orbit_ids() != first.orbit_ids() || snap.semantic_ids() != first.semantic_ids() {
            return Err(Error::Shape(format!("snapshot at epoch {epoch} is tagged differently from the first")));
        }
        let (all, orbit, within, between) = distance_profile(snap);
        series.epochs.push(*epoch);
        series.expansion.push(all);
        series.within_orbit.push(orbit);
        series.within_class.push(within);
        series.between_class.push(between);
        series.probe_accuracy.push(None);
    }
    series.validate()?;
    Ok(series)
}

/// Project onto the top `k` principal directions found by orthogonalized
/// power iteration. Tags are kept.
pub fn pca_project(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let (n, d) = (cloud.len(), cloud.dim());
    if k == 0 || k > d {
        return Err(Error::Domain(format!("cannot keep {k} of {d} dimensions")));
    }
    if n <= k {
        return Err(Error::Domain(format!("{n} points are too few for {k} components")));
    }
    let mut mean = vec![0.0; d];
    for p in cloud.points() {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for p in cloud.points() {
        let c: Vec<f64> = p.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += c[a] * c[b];
            }
        }
    }
    let trace: f64 = (0..d).map(|a| cov[a * d + a]).sum();
    if trace <= 1e-300 {
        return Err(Error::Degenerate("point cloud has zero variance".into()));
    }
    cov.iter_mut().for_each(|v| *v /= trace);

    let mut rng = SplitMix64::for_item(0, stream::PCA_START, 0);
    let mut basis: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    orthonormalize(&mut basis);
    for _ in 0..PCA_ITERATIONS {
        basis = basis
            .iter()
            .map(|v| (0..d).map(|a| (0..d).map(|b| cov[a * d + b] * v[b]).sum()).collect())
            .collect();
        orthonormalize(&mut basis);
    }
    for v in basis.iter_mut() {
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let mut coords = Vec::with_capacity(n * k);
    for p in cloud.points() {
        for v in &basis {
            coords.push(p.iter().zip(&mean).zip(v).map(|((x, m), w)| (x - m) * w).sum());
        }
    }
    cloud.map_coords(k, coords)
}

/// Modified Gram-Schmidt. A vector that collapses is replaced by the first
/// unit axis orthogonal enough to the earlier ones.
fn orthonormalize(basis: &mut [Vec<f64>]) {
    let d = basis.first().map_or(0, Vec::len);
    for i in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(i);
        let v = &mut rest[0];
        let mut axis = 0;
        loop {
            for u in done.iter() {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 || axis >= d {
                v.iter_mut().for_each(|x| *x /= norm.max(1e-300));
                break;
            }
            *v = (0..d).map(|a| if a == axis { 1.0 } else { 0.0 }).collect();
            axis += 1;
        }
    }
}
