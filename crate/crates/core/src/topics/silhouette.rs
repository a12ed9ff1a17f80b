//! Silhouette score on Euclidean distances.

use super::kmeans::euclidean;

/// Mean silhouette over all points.
///
/// `a(i)` is the mean distance to the other members of `i`'s cluster and
/// `b(i)` the smallest mean distance to any other cluster. Points in
/// singleton clusters contribute 0. Returns 0 for fewer than two points or a
/// single cluster.
pub fn silhouette_score(points: &[Vec<f64>], assignment: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n < 2 || k < 2 {
        return 0.0;
    }
    let mut cluster_sizes = vec![0usize; k];
    for &c in assignment {
        cluster_sizes[c] += 1;
    }
    if cluster_sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return 0.0;
    }

    let mut total = 0.0;
    // Per point: accumulate distance sums towards every cluster in one pass.
    let mut sums = vec![0.0f64; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[assignment[j]] += euclidean(&points[i], &points[j]);
            }
        }
        let own = assignment[i];
        if cluster_sizes[own] <= 1 {
            continue; // singleton contributes s(i) = 0
        }
        let a = sums[own] / (cluster_sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c != own && cluster_sizes[c] > 0 {
                b = b.min(sums[c] / cluster_sizes[c] as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}
