//! Negative-class subclass discovery with Lloyd's K-Means.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;

/// Partition of the negative samples into `k` non-empty clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct SubclassAssignment {
    k: usize,
    assignment: Vec<usize>,
    centroids: DMatrix<f64>,
    sizes: Vec<usize>,
}

impl SubclassAssignment {
    /// Builds an assignment from known cluster labels, computing centroids.
    pub fn from_labels(x: &DMatrix<f64>, assignment: Vec<usize>, k: usize) -> Result<Self> {
        if assignment.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: assignment.len(),
            });
        }
        if k == 0 {
            return Err(Error::invalid("need at least one subclass"));
        }
        if let Some(&bad) = assignment.iter().find(|&&a| a >= k) {
            return Err(Error::invalid(format!("cluster index {bad} out of range for k = {k}")));
        }
        let (centroids, sizes) = centroids_of(x, &assignment, k);
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("cluster {empty} is empty")));
        }
        Ok(SubclassAssignment {
            k,
            assignment,
            centroids,
            sizes,
        })
    }

    /// Every sample its own cluster.
    pub fn singletons(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        SubclassAssignment {
            k: n,
            assignment: (0..n).collect(),
            centroids: x.clone(),
            sizes: vec![1; n],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `k x D`, one centroid per row.
    pub fn centroids(&self) -> &DMatrix<f64> {
        &self.centroids
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

fn centroids_of(x: &DMatrix<f64>, assignment: &[usize], k: usize) -> (DMatrix<f64>, Vec<usize>) {
    let mut c = DMatrix::zeros(k, x.ncols());
    let mut sizes = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        let mut row = c.row_mut(a);
        row += x.row(i);
        sizes[a] += 1;
    }
    for (j, &s) in sizes.iter().enumerate() {
        if s > 0 {
            c.row_mut(j).scale_mut(1.0 / s as f64);
        }
    }
    (c, sizes)
}

fn row_sq_dist(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(c.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// `sum_k sum_{i in k} ||x_i - c_k||^2`.
pub fn within_cluster_sse(x: &DMatrix<f64>, a: &SubclassAssignment) -> f64 {
    a.assignment
        .iter()
        .enumerate()
        .map(|(i, &k)| row_sq_dist(x, i, &a.centroids, k))
        .sum()
}

/// Result of a K-Means run with its per-iteration SSE trace.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub assignment: SubclassAssignment,
    /// SSE after each centroid update.
    pub sse_trace: Vec<f64>,
    pub iterations: usize,
}

/// K-Means with k-means++ seeding. See [`kmeans_traced`].
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64, max_iter: usize) -> Result<SubclassAssignment> {
    Ok(kmeans_traced(x, k, seed, max_iter)?.assignment)
}

/// Lloyd iterations until the assignment stops changing or `max_iter`
/// updates have run. Ties go to the lowest cluster index; a cluster that
/// empties out takes over the point farthest from its own centroid.
pub fn kmeans_traced(x: &DMatrix<f64>, k: usize, seed: u64, max_iter: usize) -> Result<KMeansRun> {
    let n = x.nrows();
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the {n} samples")));
    }
    if k == n {
        let a = SubclassAssignment::singletons(x);
        return Ok(KMeansRun {
            assignment: a,
            sse_trace: vec![0.0],
            iterations: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(x, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut sizes = vec![0usize; k];
    let mut trace = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter.max(1) {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for j in 0..k {
                let d = row_sq_dist(x, i, &centroids, j);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed && iterations > 0 {
            break;
        }
        repair_empty(x, &mut assignment, &centroids, k);
        let (c, s) = centroids_of(x, &assignment, k);
        centroids = c;
        sizes = s;
        iterations += 1;
        trace.push(
            (0..n)
                .map(|i| row_sq_dist(x, i, &centroids, assignment[i]))
                .sum(),
        );
    }

    Ok(KMeansRun {
        assignment: SubclassAssignment {
            k,
            assignment,
            centroids,
            sizes,
        },
        sse_trace: trace,
        iterations,
    })
}

fn plus_plus_seeds(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = (0..n).map(|i| row_sq_dist(x, i, x, chosen[0])).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // every point coincides with a seed; any unused index will do
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(row_sq_dist(x, i, x, pick));
        }
    }
    x.select_rows(&chosen)
}

fn repair_empty(x: &DMatrix<f64>, assignment: &mut [usize], centroids: &DMatrix<f64>, k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let far = (0..assignment.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&a, &b| {
                row_sq_dist(x, a, centroids, assignment[a])
                    .total_cmp(&row_sq_dist(x, b, centroids, assignment[b]))
                    .then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with more than one point");
        assignment[far] = empty;
    }
}

/// Number of distinct rows (exact comparison).
pub fn distinct_rows(x: &DMatrix<f64>) -> usize {
    let mut rows: Vec<Vec<u64>> = (0..x.nrows())
        .map(|i| x.row(i).iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}
