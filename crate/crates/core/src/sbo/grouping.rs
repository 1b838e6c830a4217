use std::ops::Range;

use super::Assignment;
use crate::linalg::{MatRef, Matrix};

/// Indices (increasing) of the `w` signals with the largest residual;
/// among equal residuals the lower signal index is preferred.
pub fn worst_set(assignments: &[Assignment], w: usize) -> Vec<usize> {
    let m = assignments.len();
    if w >= m {
        return (0..m).collect();
    }
    if w == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    let cmp = |a: &usize, b: &usize| {
        assignments[*b]
            .residual_sq
            .total_cmp(&assignments[*a].residual_sq)
            .then(a.cmp(b))
    };
    order.select_nth_unstable_by(w - 1, cmp);
    order.truncate(w);
    order.sort_unstable();
    order
}

/// Signals reordered so that each block's users are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// `y.col(k)` is original column `perm[k]`.
    pub y: Matrix,
    /// Column range of each block in `y`; empty for idle blocks.
    pub ranges: Vec<Range<usize>>,
    pub perm: Vec<usize>,
}

impl Grouping {
    pub fn block(&self, j: usize) -> MatRef<'_> {
        self.y.columns(self.ranges[j].clone())
    }

    /// Undoes the permutation on a matrix laid out like `self.y`.
    pub fn unpermute(&self, grouped: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(grouped.rows(), grouped.cols());
        for (k, &j) in self.perm.iter().enumerate() {
            out.col_mut(j).copy_from_slice(grouped.col(k));
        }
        out
    }
}

/// Stable counting sort of signals by assigned block.
pub fn group_by_block(y: MatRef<'_>, assignments: &[Assignment], blocks: usize) -> Grouping {
    assert_eq!(y.cols(), assignments.len());
    let mut counts = vec![0usize; blocks];
    for a in assignments {
        counts[a.block] += 1;
    }
    let mut ranges = Vec::with_capacity(blocks);
    let mut start = 0;
    for &c in &counts {
        ranges.push(start..start + c);
        start += c;
    }
    let mut next: Vec<usize> = ranges.iter().map(|r| r.start).collect();
    let mut perm = vec![0; assignments.len()];
    for (s, a) in assignments.iter().enumerate() {
        perm[next[a.block]] = s;
        next[a.block] += 1;
    }
    let mut data = Vec::with_capacity(y.rows() * y.cols());
    for &s in &perm {
        data.extend_from_slice(y.col(s));
    }
    let y = Matrix::from_col_major(y.rows(), perm.len(), data).expect("sizes agree");
    Grouping { y, ranges, perm }
}
