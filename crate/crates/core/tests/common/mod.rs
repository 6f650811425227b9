//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use bundlelab::rng::SplitMix64;
use bundlelab::tensor_net::{LayerSpec, LossKind, Network, Tensor};
use rand::{Rng, SeedableRng};

pub mod oracle {
    //! Betti numbers of the Rips complex at a fixed scale, computed by building
    //! the boundary matrices explicitly and taking GF(2) ranks. Shares no code
    //! with the library's filtration or reduction.

    pub fn dist(points: &[Vec<f64>], i: usize, j: usize) -> f64 {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn rank_gf2(mut rows: Vec<Vec<u64>>) -> usize {
        let words = rows.first().map_or(0, Vec::len);
        let mut rank = 0;
        for bit in 0..words * 64 {
            let (w, mask) = (bit / 64, 1u64 << (bit % 64));
            let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][w] & mask != 0) else {
                continue;
            };
            rows.swap(rank, pivot);
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row[w] & mask != 0 {
                    for (x, y) in row.iter_mut().zip(&pivot_row) {
                        *x ^= y;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// (b0, b1) of the Rips complex whose simplices have diameter <= scale.
    pub fn betti(points: &[Vec<f64>], scale: f64) -> (usize, usize) {
        let n = points.len();
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| dist(points, i, j) <= scale)
            .collect();
        let mut triangles = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    if dist(points, i, j) <= scale && dist(points, i, k) <= scale && dist(points, j, k) <= scale {
                        triangles.push((i, j, k));
                    }
                }
            }
        }
        let words = |len: usize| len.div_ceil(64).max(1);
        // d1: one row per edge over vertex columns
        let d1: Vec<Vec<u64>> = edges
            .iter()
            .map(|&(i, j)| {
                let mut row = vec![0u64; words(n)];
                row[i / 64] ^= 1 << (i % 64);
                row[j / 64] ^= 1 << (j % 64);
                row
            })
            .collect();
        let edge_index = |a: usize, b: usize| edges.iter().position(|&e| e == (a, b)).unwrap();
        let d2: Vec<Vec<u64>> = triangles
            .iter()
            .map(|&(i, j, k)| {
                let mut row = vec![0u64; words(edges.len())];
                for e in [edge_index(i, j), edge_index(i, k), edge_index(j, k)] {
                    row[e / 64] ^= 1 << (e % 64);
                }
                row
            })
            .collect();
        let r1 = rank_gf2(d1);
        let r2 = rank_gf2(d2);
        (n - r1, edges.len() - r1 - r2)
    }
}

pub fn random_cloud(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Every scale at which the oracle complex can change, plus midpoints and
/// a point below the first.
pub fn probe_scales(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut crit: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| oracle::dist(points, i, j))
        .collect();
    crit.sort_by(f64::total_cmp);
    let mut scales = vec![0.0];
    for w in crit.windows(2) {
        scales.push(w[0]);
        scales.push(0.5 * (w[0] + w[1]));
    }
    if let Some(&last) = crit.last() {
        scales.push(last);
        scales.push(last + 1.0);
    }
    scales
}

pub fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Initialized network with random (rather than zero) biases, so no output
/// row is exactly zero.
pub fn network(stack: Vec<LayerSpec>, seed: u64) -> Network {
    let init = Network::new(stack.clone(), seed).unwrap();
    let mut params = init.params().to_vec();
    for (l, group) in params.iter_mut().enumerate() {
        for (s, t) in group.iter_mut().enumerate() {
            if t.rows() == 1 {
                *t = random(1, t.cols(), seed * 1000 + (l * 100 + s) as u64);
            }
        }
    }
    Network::from_params(stack, params, seed).unwrap()
}

pub fn layer_stacks() -> Vec<(&'static str, Vec<LayerSpec>)> {
    vec![
        ("dense", vec![LayerSpec::Dense { input: 4, output: 3 }]),
        (
            "relu",
            vec![
                LayerSpec::Dense { input: 4, output: 6 },
                LayerSpec::Relu { width: 6 },
                LayerSpec::Dense { input: 6, output: 3 },
            ],
        ),
        (
            "softmax_gate_mixture",
            vec![
                LayerSpec::SoftmaxGateMixture {
                    input: 4,
                    output: 5,
                    experts: 3,
                    hidden: vec![5],
                },
                LayerSpec::Dense { input: 5, output: 3 },
            ],
        ),
    ]
}

pub fn losses(seed: u64) -> Vec<(&'static str, LossKind)> {
    let labels: Vec<usize> = (0..6).map(|i| (i + seed as usize) % 3).collect();
    vec![
        ("reconstruction", LossKind::Reconstruction { target: random(6, 3, seed + 500) }),
        ("contrastive", LossKind::Contrastive { temperature: 0.5 }),
        ("classification", LossKind::Classification { labels: labels.clone() }),
        (
            "alignment",
            LossKind::Alignment {
                table: random(3, 3, seed + 900),
                labels,
                temperature: 0.5,
            },
        ),
    ]
}
