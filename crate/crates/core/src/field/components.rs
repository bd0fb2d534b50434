use std::collections::VecDeque;

use super::{CoefficientField, Grid};

/// Connected-component labeling result.
#[derive(Clone, Debug, PartialEq)]
pub struct Components {
    pub count: usize,
    pub largest: usize,
    /// Per-cell label in `0..count`, `u32::MAX` for cells outside the labelled set.
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

pub const UNLABELLED: u32 = u32::MAX;

/// Label the cells selected by `member` under face adjacency with periodic wrap.
pub fn label_components(grid: &Grid, member: impl Fn(usize) -> bool) -> Components {
    let mut labels = vec![UNLABELLED; grid.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..grid.len() {
        if labels[seed] != UNLABELLED || !member(seed) {
            continue;
        }
        let label = sizes.len() as u32;
        labels[seed] = label;
        queue.push_back(seed);
        let mut size = 0;
        while let Some(c) = queue.pop_front() {
            size += 1;
            for k in 0..grid.dimension {
                for nb in [grid.forward(c, k), grid.backward(c, k)] {
                    if labels[nb] == UNLABELLED && member(nb) {
                        labels[nb] = label;
                        queue.push_back(nb);
                    }
                }
            }
        }
        sizes.push(size);
    }
    Components {
        count: sizes.len(),
        largest: sizes.iter().copied().max().unwrap_or(0),
        labels,
        sizes,
    }
}

pub fn matrix_components(field: &CoefficientField) -> Components {
    label_components(&field.grid, |c| field.matrix_mask[c])
}

pub fn hole_components(field: &CoefficientField) -> Components {
    label_components(&field.grid, |c| !field.matrix_mask[c])
}
