use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{relabel_contiguous, ClusterAssignment, MethodParams};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    /// k × d, rows in the order of the relabeled clusters.
    pub centroids: Matrix,
    /// Inertia after each Lloyd iteration.
    pub inertia_trace: Vec<f64>,
    pub converged: bool,
}

impl KMeansFit {
    pub fn inertia(&self) -> f64 {
        self.inertia_trace.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist_to(x: &Matrix, i: usize, c: &Matrix, k: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..x.ncols() {
        let d = x[(i, j)] - c[(k, j)];
        acc += d * d;
    }
    acc
}

fn plus_plus_init(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| crate::knn::squared_distance(x, i, chosen[0])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // rounding can leave target past the last positive weight
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // every point coincides with a chosen centre
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(crate::knn::squared_distance(x, i, next));
        }
    }
    Matrix::from_fn(k, x.ncols(), |r, c| x[(chosen[r], c)])
}

fn nearest_centroid(x: &Matrix, i: usize, c: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for k in 0..c.nrows() {
        let d = sq_dist_to(x, i, c, k);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn update_centroids(x: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let mut c = Matrix::zeros(k, x.ncols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..x.ncols() {
            c[(l, j)] += x[(i, j)];
        }
    }
    for (l, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            for j in 0..x.ncols() {
                c[(l, j)] /= cnt as f64;
            }
        }
    }
    c
}

/// Moves the farthest member of the largest cluster into each empty cluster.
fn repair_empty(x: &Matrix, labels: &mut [usize], centroids: &Matrix, k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let largest = (0..k).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
        let mut far = (usize::MAX, -1.0);
        for (i, &l) in labels.iter().enumerate() {
            if l == largest {
                let d = sq_dist_to(x, i, centroids, largest);
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        labels[far.0] = empty;
    }
}

fn inertia(x: &Matrix, labels: &[usize], c: &Matrix) -> f64 {
    labels.iter().enumerate().map(|(i, &l)| sq_dist_to(x, i, c, l)).sum()
}

/// k-means with k-means++ seeding and Lloyd iterations. Stops when the
/// assignment no longer changes or after `max_iter` iterations.
pub fn kmeans_fit(x: &Matrix, n_clusters: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    let n = x.nrows();
    if n_clusters == 0 {
        return Err(Error::invalid("n_clusters must be positive"));
    }
    if n_clusters > n {
        return Err(Error::invalid(format!("n_clusters = {n_clusters} exceeds {n} points")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be positive"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in clustering input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(x, n_clusters, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let mut next: Vec<usize> = (0..n).map(|i| nearest_centroid(x, i, &centroids).0).collect();
        repair_empty(x, &mut next, &centroids, n_clusters);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        centroids = update_centroids(x, &labels, n_clusters);
        trace.push(inertia(x, &labels, &centroids));
    }

    let relabeled = relabel_contiguous(&labels);
    let mut order = vec![0; n_clusters];
    for (&old, &new) in labels.iter().zip(&relabeled) {
        order[new] = old;
    }
    let centroids = Matrix::from_fn(n_clusters, x.ncols(), |r, c| centroids[(order[r], c)]);
    Ok(KMeansFit {
        assignment: ClusterAssignment {
            labels: relabeled,
            params: MethodParams::KMeans { n_clusters, max_iter },
            seed,
        },
        centroids,
        inertia_trace: trace,
        converged,
    })
}

pub fn kmeans(x: &Matrix, n_clusters: usize, seed: u64, max_iter: usize) -> Result<ClusterAssignment> {
    Ok(kmeans_fit(x, n_clusters, seed, max_iter)?.assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Matrix, Vec<usize>) {
        let offsets = [(-0.1, 0.0), (0.1, 0.05), (0.0, -0.1), (0.05, 0.1)];
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (b, centre) in [(0.0, 0.0), (100.0, 100.0)].iter().enumerate() {
            for o in offsets {
                rows.extend([centre.0 + o.0, centre.1 + o.1]);
                truth.push(b);
            }
        }
        (Matrix::from_row_slice(8, 2, &rows), truth)
    }

    #[test]
    fn separable_blobs_recovered() {
        let (x, truth) = blobs();
        for seed in 0..10 {
            let a = kmeans(&x, 2, seed, 100).unwrap();
            assert_eq!(relabel_contiguous(&a.labels), relabel_contiguous(&truth));
        }
    }

    #[test]
    fn one_cluster_per_point() {
        let (x, _) = blobs();
        let fit = kmeans_fit(&x, 8, 1, 100).unwrap();
        let mut l = fit.assignment.labels.clone();
        l.sort();
        assert_eq!(l, (0..8).collect::<Vec<_>>());
        assert_eq!(fit.inertia(), 0.0);
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let x = Matrix::from_element(5, 2, 1.0);
        let a = kmeans(&x, 3, 4, 50).unwrap();
        assert_eq!(a.n_labels(), 3);
    }

    #[test]
    fn deterministic_and_validated() {
        let x = Matrix::from_fn(40, 3, |i, j| ((i * 31 + j * 17) % 23) as f64);
        assert_eq!(kmeans(&x, 4, 9, 100).unwrap(), kmeans(&x, 4, 9, 100).unwrap());
        assert!(kmeans(&x, 41, 0, 10).is_err());
        assert!(kmeans(&x, 0, 0, 10).is_err());
    }

    #[test]
    fn inertia_non_increasing() {
        let x = Matrix::from_fn(60, 2, |i, j| (((i * 7 + j * 13) % 29) as f64).sin() * 10.0 + i as f64 * 0.1);
        let fit = kmeans_fit(&x, 5, 3, 100).unwrap();
        for w in fit.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", fit.inertia_trace);
        }
    }
}
