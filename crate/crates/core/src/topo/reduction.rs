//! Standard Z/2 column reduction of the filtered boundary matrix.

use super::filtration::{Boundary, Filtration};

const NONE: u32 = u32::MAX;

/// Result of reducing the boundary matrix.
#[derive(Debug, Clone)]
pub(crate) struct Reduction {
    /// `(birth position, death position)` for every persistence pair, in
    /// order of the killing column.
    pub pairs: Vec<(u32, u32)>,
    /// Positions of positive simplices that are never killed.
    pub unpaired: Vec<u32>,
}

/// Symmetric difference of two sorted index lists.
fn add_columns(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

/// Reduce columns left to right; a column is added to whenever its lowest
/// entry is already the pivot of an earlier column.
pub(crate) fn reduce(filtration: &Filtration) -> Reduction {
    let boundaries = filtration.boundaries();
    let m = boundaries.len();
    // pivot_of[row] = column whose reduced lowest entry is `row`
    let mut pivot_of = vec![NONE; m];
    let mut reduced: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut pairs = Vec::new();
    let mut scratch = Vec::new();

    for (col, boundary) in boundaries.iter().enumerate() {
        if matches!(boundary, Boundary::Empty) {
            continue;
        }
        let mut column = boundary.as_slice().to_vec();
        while let Some(&low) = column.last() {
            let other = pivot_of[low as usize];
            if other == NONE {
                break;
            }
            add_columns(&column, &reduced[other as usize], &mut scratch);
            std::mem::swap(&mut column, &mut scratch);
        }
        if let Some(&low) = column.last() {
            pivot_of[low as usize] = col as u32;
            pairs.push((low, col as u32));
            reduced[col] = column;
        }
    }

    let unpaired = (0..m as u32)
        .filter(|&p| pivot_of[p as usize] == NONE && reduced[p as usize].is_empty())
        .collect();
    Reduction { pairs, unpaired }
}
