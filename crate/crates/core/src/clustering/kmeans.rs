//! One-dimensional K-means with k-means++ seeding.

use rand::Rng;

/// Lloyd iterations stop when no centroid moves more than this.
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// Hard cap on Lloyd iterations.
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeans1d {
    pub centroids: Vec<f64>,
    pub assignment: Vec<usize>,
    /// Objective after every assignment step, first entry is the seeding.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

/// Index of the nearest centroid, ties to the lowest index.
pub fn nearest(centroids: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, &c) in centroids.iter().enumerate() {
        let d = (x - c) * (x - c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn assign(points: &[f64], centroids: &[f64], assignment: &mut [usize]) -> f64 {
    let mut objective = 0.0;
    for (a, &x) in assignment.iter_mut().zip(points) {
        *a = nearest(centroids, x);
        let d = x - centroids[*a];
        objective += d * d;
    }
    objective
}

fn seed_plus_plus<R: Rng>(points: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut dist: Vec<f64> = points.iter().map(|&x| (x - centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        centroids.push(c);
        for (d, &x) in dist.iter_mut().zip(points) {
            *d = d.min((x - c).powi(2));
        }
    }
    centroids
}

/// Clusters `points` into `k` groups. `k` must not exceed `points.len()`.
///
/// An empty cluster is reseeded to the point farthest from its nearest
/// centroid (lowest index on ties).
pub fn kmeans_1d<R: Rng>(points: &[f64], k: usize, rng: &mut R) -> KMeans1d {
    assert!(k >= 1 && k <= points.len(), "k = {k} with {} points", points.len());
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assignment = vec![0usize; points.len()];
    let mut history = vec![assign(points, &centroids, &mut assignment)];
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![0.0f64; k];
        let mut counts = vec![0usize; k];
        for (&a, &x) in assignment.iter().zip(points) {
            sums[a] += x;
            counts[a] += 1;
        }
        let mut updated: Vec<f64> =
            (0..k).map(|j| if counts[j] > 0 { sums[j] / counts[j] as f64 } else { f64::NAN }).collect();
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let placed: Vec<f64> = updated.iter().copied().filter(|c| !c.is_nan()).collect();
            let mut far = 0;
            let mut far_d = -1.0;
            for (i, &x) in points.iter().enumerate() {
                let d = if placed.is_empty() { 0.0 } else { (x - placed[nearest(&placed, x)]).powi(2) };
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            updated[j] = points[far];
        }
        let shift = centroids.iter().zip(&updated).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        centroids = updated;
        history.push(assign(points, &centroids, &mut assignment));
        if shift < CONVERGENCE_TOL {
            break;
        }
    }

    KMeans1d { centroids, assignment, objective_history: history, iterations }
}
