//! Exact k-nearest-neighbour search by linear scan.
//!
//! Neighbours are ordered by ascending squared Euclidean distance; equal
//! distances are ordered by ascending point index. A point is never its own
//! neighbour, even when other points share its coordinates.

use std::cmp::Ordering;

use crate::Matrix;

/// Squared Euclidean distance between rows `i` and `j`.
pub fn squared_distance(points: &Matrix, i: usize, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..points.ncols() {
        let d = points[(i, c)] - points[(j, c)];
        acc += d * d;
    }
    acc
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest rows to row `i`, excluding `i`. Returns fewer than `k`
/// indices only if the matrix has fewer than `k + 1` rows.
pub fn nearest_neighbors(points: &Matrix, i: usize, k: usize) -> Vec<usize> {
    let n = points.nrows();
    let mut cand: Vec<(f64, usize)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| (squared_distance(points, i, j), j))
        .collect();
    let k = k.min(cand.len());
    if k == 0 {
        return Vec::new();
    }
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by_distance_then_index);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Neighbour lists for every row.
pub fn knn_all(points: &Matrix, k: usize) -> Vec<Vec<usize>> {
    (0..points.nrows())
        .map(|i| nearest_neighbors(points, i, k))
        .collect()
}
