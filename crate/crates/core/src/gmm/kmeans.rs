use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linalg::squared_distance;
use super::GmmError;
use crate::embedding::PhaseSpace;

const MAX_LLOYD_ITER: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    /// Final inertia of every restart, in the order they ran.
    pub restart_inertias: Vec<f64>,
}

/// Lloyd's algorithm with k-means++ seeding, restarted `n_init` times from
/// one seeded stream. Keeps the restart with the lowest inertia (first one
/// on ties).
pub fn kmeans(
    points: &PhaseSpace,
    k: usize,
    n_init: usize,
    seed: u64,
) -> Result<KMeansResult, GmmError> {
    let n = points.n_points();
    if k == 0 || n < k {
        return Err(GmmError::InsufficientPoints {
            points: n,
            required: k.max(1),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    let mut restart_inertias = Vec::with_capacity(n_init.max(1));
    for _ in 0..n_init.max(1) {
        let init = plus_plus(points, k, &mut rng);
        let run = lloyd(points, init);
        restart_inertias.push(run.inertia);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.restart_inertias = restart_inertias;
    Ok(best)
}

fn plus_plus(points: &PhaseSpace, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.n_points();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points.point(rng.random_range(0..n)).to_vec());
    let mut nearest: Vec<f64> = points
        .rows()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let idx = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points.point(idx).to_vec();
        for (d, p) in nearest.iter_mut().zip(points.rows()) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(
    points: &PhaseSpace,
    centroids: &[Vec<f64>],
    out: &mut [usize],
    dist: &mut [f64],
) -> bool {
    let mut changed = false;
    for (i, p) in points.rows().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centroids.iter().enumerate() {
            let d = squared_distance(p, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        if out[i] != best {
            out[i] = best;
            changed = true;
        }
        dist[i] = best_d;
    }
    changed
}

fn lloyd(points: &PhaseSpace, mut centroids: Vec<Vec<f64>>) -> KMeansResult {
    let n = points.n_points();
    let dim = points.point_dim();
    let k = centroids.len();
    let mut assignments = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    assign(points, &centroids, &mut assignments, &mut dist);
    for _ in 0..MAX_LLOYD_ITER {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.rows().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // move an empty centroid onto the worst-served point
                let far = (0..n)
                    .filter(|&i| counts[assignments[i]] > 1)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    counts[assignments[i]] -= 1;
                    for (s, x) in sums[assignments[i]].iter_mut().zip(points.point(i)) {
                        *s -= x;
                    }
                    assignments[i] = j;
                    dist[i] = 0.0;
                    counts[j] = 1;
                    sums[j] = points.point(i).to_vec();
                }
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }
        if !assign(points, &centroids, &mut assignments, &mut dist) {
            break;
        }
    }
    KMeansResult {
        centroids,
        assignments,
        inertia: dist.iter().sum(),
        restart_inertias: Vec::new(),
    }
}
