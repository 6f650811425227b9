use std::cmp::Ordering;

use super::DistanceMatrix;

/// A vertex, edge or triangle. Unused vertex slots are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simplex {
    pub vertices: [u32; 3],
    pub dim: u8,
    pub value: f64,
}

impl Simplex {
    fn order(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.dim.cmp(&other.dim))
            .then(self.vertices.cmp(&other.vertices))
    }
}

/// Rips filtration truncated at dimension 2, sorted by
/// `(value, dimension, vertices)` so every face precedes its cofaces.
#[derive(Debug, Clone)]
pub struct Filtration {
    pub simplices: Vec<Simplex>,
    pub num_points: usize,
    pub max_scale: f64,
}

impl Filtration {
    pub fn rips(dmat: &DistanceMatrix, max_scale: f64) -> Self {
        let n = dmat.len();
        let mut simplices: Vec<Simplex> = (0..n as u32)
            .map(|v| Simplex {
                vertices: [v, 0, 0],
                dim: 0,
                value: 0.0,
            })
            .collect();

        // forward adjacency: neighbours with a larger index
        let mut forward: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut adjacent = vec![false; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = dmat.get(i, j);
                if d <= max_scale {
                    forward[i].push(j as u32);
                    adjacent[i * n + j] = true;
                    simplices.push(Simplex {
                        vertices: [i as u32, j as u32, 0],
                        dim: 1,
                        value: d,
                    });
                }
            }
        }
        for i in 0..n {
            for (a, &j) in forward[i].iter().enumerate() {
                let dij = dmat.get(i, j as usize);
                for &k in &forward[i][a + 1..] {
                    if adjacent[j as usize * n + k as usize] {
                        let value = dij.max(dmat.get(i, k as usize)).max(dmat.get(j as usize, k as usize));
                        simplices.push(Simplex {
                            vertices: [i as u32, j, k],
                            dim: 2,
                            value,
                        });
                    }
                }
            }
        }
        simplices.sort_unstable_by(Simplex::order);
        Self {
            simplices,
            num_points: n,
            max_scale,
        }
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    /// Boundary of every simplex as sorted positions into `simplices`.
    pub(crate) fn boundaries(&self) -> Vec<Boundary> {
        let n = self.num_points;
        let mut vertex_pos = vec![0u32; n];
        let mut edge_pos = vec![u32::MAX; n * n];
        let mut out = Vec::with_capacity(self.simplices.len());
        for (p, s) in self.simplices.iter().enumerate() {
            let p = p as u32;
            let [a, b, c] = s.vertices.map(|v| v as usize);
            match s.dim {
                0 => {
                    vertex_pos[a] = p;
                    out.push(Boundary::Empty);
                }
                1 => {
                    edge_pos[a * n + b] = p;
                    let mut f = [vertex_pos[a], vertex_pos[b]];
                    f.sort_unstable();
                    out.push(Boundary::Edge(f));
                }
                _ => {
                    let mut f = [edge_pos[a * n + b], edge_pos[a * n + c], edge_pos[b * n + c]];
                    debug_assert!(f.iter().all(|&x| x < p), "face after coface");
                    f.sort_unstable();
                    out.push(Boundary::Triangle(f));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Boundary {
    Empty,
    Edge([u32; 2]),
    Triangle([u32; 3]),
}

impl Boundary {
    pub(crate) fn as_slice(&self) -> &[u32] {
        match self {
            Boundary::Empty => &[],
            Boundary::Edge(f) => f,
            Boundary::Triangle(f) => f,
        }
    }
}
