use bundlelab::metrics::*;
use bundlelab::rng::SplitMix64;
use bundlelab::tensor_net::{ReadoutHead, Tensor};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn cloud(n: usize, d: usize, classes: usize, seed: u64) -> LatentSet {
    let mut rng = SplitMix64::new(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let coords = labels
        .iter()
        .flat_map(|&l| (0..d).map(|k| normal.sample(&mut rng) + if k == l % d { 2.0 } else { 0.0 }).collect::<Vec<_>>())
        .collect();
    LatentSet::from_parts(d, coords, (0..n).map(|i| i % (2 * classes)).collect(), labels).unwrap()
}

fn random_head(d: usize, c: usize, seed: u64) -> ReadoutHead {
    let mut rng = SplitMix64::new(seed);
    let w = (0..d * c).map(|_| rng.random_range(-2.0..2.0)).collect();
    let b = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
    ReadoutHead::new(Tensor::matrix(d, c, w).unwrap(), b).unwrap()
}

/// One-nearest-neighbour scorer over labelled prototypes. Its decision
/// regions follow the data and need not be convex.
struct NearestPrototype {
    prototypes: Vec<(Vec<f64>, usize)>,
    classes: usize,
}

impl LogitScorer for NearestPrototype {
    fn logits(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![f64::NEG_INFINITY; self.classes];
        for (p, c) in &self.prototypes {
            let d: f64 = p.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            out[*c] = out[*c].max(-d);
        }
        out
    }
}

fn two_moons(n: usize) -> LatentSet {
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let t = std::f64::consts::PI * i as f64 / (n - 1) as f64;
        coords.extend([t.cos(), t.sin()]);
        labels.push(0);
        coords.extend([1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    LatentSet::from_parts(2, coords, (0..2 * n).collect(), labels).unwrap()
}

#[test]
fn nonlinear_scorer_on_moons_violates_convexity() {
    let moons = two_moons(60);
    let scorer = NearestPrototype {
        prototypes: (0..moons.len())
            .map(|i| (moons.point(i).to_vec(), moons.semantic_ids()[i]))
            .collect(),
        classes: 2,
    };
    let rate = convexity_violation_rate(&scorer, &moons, 10_000, 4).unwrap();
    assert!(rate > 0.0, "{rate}");
}

#[test]
fn probe_is_deterministic() {
    let set = cloud(300, 4, 3, 5);
    let a = train_probe(&set, 200, PROBE_LR, 7).unwrap();
    let b = train_probe(&set, 200, PROBE_LR, 7).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn affine_heads_never_violate(seed in 0u64..10_000) {
        let set = cloud(80, 3, 4, seed);
        let head = random_head(3, 4, seed + 1);
        prop_assert_eq!(convexity_violation_rate(&head, &set, 10_000, seed).unwrap(), 0.0);
    }

    #[test]
    fn positive_scaling_keeps_decisions(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let set = cloud(60, 3, 3, seed);
        let head = random_head(3, 3, seed + 2);
        let scaled = head.scaled(c).unwrap();
        for i in 0..set.len() {
            prop_assert_eq!(head.predict(set.point(i)), scaled.predict(set.point(i)));
        }
        prop_assert_eq!(
            convexity_violation_rate(&head, &set, 500, seed).unwrap(),
            convexity_violation_rate(&scaled, &set, 500, seed).unwrap()
        );
    }

    #[test]
    fn collapse_ratio_ignores_rigid_motion_and_scale(seed in 0u64..10_000, angle in 0.0f64..6.28, s in 0.1f64..10.0) {
        let set = cloud(50, 2, 3, seed);
        let (sin, cos) = angle.sin_cos();
        let coords: Vec<f64> = set
            .cloud()
            .points()
            .flat_map(|p| [s * (cos * p[0] - sin * p[1]) + 3.0, s * (sin * p[0] + cos * p[1]) - 1.0])
            .collect();
        let moved = LatentSet::new(set.cloud().map_coords(2, coords).unwrap()).unwrap();
        for by in [GroupBy::Orbit, GroupBy::Semantic] {
            let a = orbit_collapse_ratio(&set, by).unwrap();
            let b = orbit_collapse_ratio(&moved, by).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
