//! Lloyd's k-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{squared_distance, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;

pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    /// `k × dim` centroid matrix.
    pub centroids: EmbeddingMatrix,
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub objective: f64,
    pub iterations_run: usize,
    /// Objective after seeding, after each Lloyd iteration, then after each refinement sweep.
    pub objective_trace: Vec<f64>,
}

/// Index of the nearest centroid (lowest index on ties) and its squared distance.
pub fn nearest_centroid(centroids: &[f64], dim: usize, point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let dist = squared_distance(point, centroid);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn assign(points: &EmbeddingMatrix, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let dim = points.dim();
    map_indexed(points.rows(), |i| nearest_centroid(centroids, dim, points.row(i))).into_iter().unzip()
}

fn kmeans_plus_plus(points: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.rows();
    let dim = points.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(points.row(rng.random_range(0..n)));
    let mut closest: Vec<f64> = points.iter_rows().map(|p| squared_distance(p, &centroids[..dim])).collect();

    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in closest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`; fall back to the last positive weight.
            chosen.unwrap_or_else(|| closest.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            // fewer distinct points than k
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(points.row(pick));
        let new = &centroids[start..];
        for (i, p) in points.iter_rows().enumerate() {
            let d = squared_distance(p, new);
            if d < closest[i] {
                closest[i] = d;
            }
        }
    }
    centroids
}

/// Recomputes centroids as cluster means. Empty clusters take the point that is
/// currently farthest from its own centroid; each point is used at most once.
fn update_centroids(points: &EmbeddingMatrix, k: usize, assignments: &[usize], centroids: &mut [f64]) {
    let dim = points.dim();
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter_rows().zip(assignments) {
        counts[c] += 1;
        for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = counts[c] as f64;
            for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..]) {
                *dst = s / inv;
            }
        }
    }
    if counts.iter().all(|&c| c > 0) {
        return;
    }
    let mut dist: Vec<f64> = points
        .iter_rows()
        .zip(assignments)
        .map(|(p, &c)| squared_distance(p, &centroids[c * dim..(c + 1) * dim]))
        .collect();
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let (far, far_dist) =
            dist.iter().enumerate().fold((0, -1.0), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        if far_dist <= 0.0 {
            break;
        }
        centroids[c * dim..(c + 1) * dim].copy_from_slice(points.row(far));
        dist[far] = 0.0;
    }
}

/// One sweep of single-point moves: a point leaves its cluster whenever the
/// exact change in objective, `n_b/(n_b+1)·|x-c_b|² - n_a/(n_a-1)·|x-c_a|²`,
/// is negative. Centroids are updated incrementally. Returns the number of moves.
fn hartigan_pass(
    points: &EmbeddingMatrix,
    k: usize,
    assignments: &mut [usize],
    centroids: &mut [f64],
    scale: f64,
) -> usize {
    let dim = points.dim();
    let mut counts = vec![0usize; k];
    for &c in assignments.iter() {
        counts[c] += 1;
    }
    let mut moves = 0;
    for (i, x) in points.iter_rows().enumerate() {
        let a = assignments[i];
        let na = counts[a] as f64;
        if counts[a] < 2 {
            continue;
        }
        let leave = na / (na - 1.0) * squared_distance(x, &centroids[a * dim..(a + 1) * dim]);
        let mut best = (a, 0.0);
        for b in (0..k).filter(|&b| b != a) {
            let nb = counts[b] as f64;
            let delta = nb / (nb + 1.0) * squared_distance(x, &centroids[b * dim..(b + 1) * dim]) - leave;
            if delta < best.1 {
                best = (b, delta);
            }
        }
        let (b, delta) = best;
        if b == a || delta >= -1e-12 * scale {
            continue;
        }
        let nb = counts[b] as f64;
        for j in 0..dim {
            let ca = &mut centroids[a * dim + j];
            *ca = (na * *ca - x[j]) / (na - 1.0);
            let cb = &mut centroids[b * dim + j];
            *cb = (nb * *cb + x[j]) / (nb + 1.0);
        }
        counts[a] -= 1;
        counts[b] += 1;
        assignments[i] = b;
        moves += 1;
    }
    moves
}

/// Clusters `points` into `k` groups.
///
/// Seeding is k-means++ driven by a ChaCha8 stream seeded from `seed`. Lloyd
/// iterations stop after `max_iters` or once the relative objective decrease
/// falls below `rel_tol`. The result is then polished with single-point moves,
/// which only fire at local minima where no Lloyd step helps.
pub fn kmeans_fit(
    points: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
    rel_tol: f64,
) -> Result<KMeansResult> {
    if points.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::BadConfig("k-means needs k >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let (mut assignments, dists) = assign(points, &centroids);
    let mut objective: f64 = dists.iter().sum();
    let mut trace = vec![objective];
    let mut iterations_run = 0;

    while iterations_run < max_iters && objective > 0.0 {
        update_centroids(points, k, &assignments, &mut centroids);
        let (next_assign, dists) = assign(points, &centroids);
        let next: f64 = dists.iter().sum();
        iterations_run += 1;
        trace.push(next);
        let decrease = (objective - next) / objective;
        let converged = next_assign == assignments;
        assignments = next_assign;
        objective = next;
        if converged || decrease < rel_tol {
            break;
        }
    }

    for _ in 0..max_iters {
        if objective <= 0.0 {
            break;
        }
        // the incremental move rule needs centroids that are means of the current partition
        update_centroids(points, k, &assignments, &mut centroids);
        let moves = hartigan_pass(points, k, &mut assignments, &mut centroids, objective);
        let (next_assign, dists) = assign(points, &centroids);
        let next: f64 = dists.iter().sum();
        let changed = next_assign != assignments || next < objective;
        assignments = next_assign;
        if changed {
            objective = next;
            trace.push(objective);
        }
        if moves == 0 {
            break;
        }
    }

    Ok(KMeansResult {
        centroids: EmbeddingMatrix::new(k, points.dim(), centroids)?,
        assignments,
        objective,
        iterations_run,
        objective_trace: trace,
    })
}

/// Runs [`kmeans_fit`] once per seed and keeps the lowest objective (first wins on ties).
pub fn kmeans_best_of(
    points: &EmbeddingMatrix,
    k: usize,
    seeds: impl IntoIterator<Item = u64>,
    max_iters: usize,
    rel_tol: f64,
) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for seed in seeds {
        let r = kmeans_fit(points, k, seed, max_iters, rel_tol)?;
        if best.as_ref().is_none_or(|b| r.objective < b.objective) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::BadConfig("no seeds given".into()))
}

/// Sum of squared distances from each point to its nearest centroid.
pub fn quantization_error(points: &EmbeddingMatrix, centroids: &EmbeddingMatrix) -> f64 {
    points.iter_rows().map(|p| nearest_centroid(centroids.data(), centroids.dim(), p).1).sum()
}
