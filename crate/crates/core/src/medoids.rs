//! K-Medoids (PAM) prototype extraction over projected samples.
//!
//! The clustering cost is the sum of *unsquared* Euclidean distances from
//! every sample to its medoid. BUILD picks medoids greedily; SWAP then applies
//! the best single (medoid, non-medoid) exchange until no exchange lowers the
//! cost by more than [`SWAP_TOLERANCE`].

use serde::{Deserialize, Serialize};

use crate::error::{MpaError, Result};
use crate::numerics::{sq_dist, Matrix};

pub const DEFAULT_MAX_SWAP_ROUNDS: usize = 100;
pub const SWAP_TOLERANCE: f64 = 1e-12;
/// Largest number of subsets [`brute_force_medoids`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedoidSet {
    pub medoid_indices: Vec<usize>,
    pub medoid_points: Matrix,
    pub assignments: Vec<usize>,
    pub total_cost: f64,
}

impl MedoidSet {
    pub fn k(&self) -> usize {
        self.medoid_indices.len()
    }

    fn from_indices(z: &Matrix, dist: &Matrix, medoids: Vec<usize>) -> MedoidSet {
        let mut assignments = vec![0; z.rows()];
        let mut total_cost = 0.0;
        for (j, a) in assignments.iter_mut().enumerate() {
            let (best, d) = nearest(dist, &medoids, j);
            *a = best;
            total_cost += d;
        }
        for (k, &m) in medoids.iter().enumerate() {
            assignments[m] = k;
        }
        MedoidSet {
            medoid_points: z.select_rows(&medoids),
            medoid_indices: medoids,
            assignments,
            total_cost,
        }
    }
}

/// Position in `medoids` of the closest medoid to sample `j` (ties → lowest).
fn nearest(dist: &Matrix, medoids: &[usize], j: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, &m) in medoids.iter().enumerate() {
        let d = dist[(m, j)];
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn distance_matrix(z: &Matrix) -> Matrix {
    let n = z.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(z.row(i), z.row(j)).sqrt();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

fn validate(z: &Matrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(MpaError::Size("K must be at least 1".into()));
    }
    if k > z.rows() {
        return Err(MpaError::Size(format!(
            "K = {k} exceeds the {} available samples",
            z.rows()
        )));
    }
    if !z.is_finite() {
        return Err(MpaError::InvalidData(
            "non-finite value in clustering input".into(),
        ));
    }
    Ok(())
}

/// Partitioning Around Medoids: BUILD followed by best-improvement SWAP.
pub fn kmedoids_fit(z: &Matrix, k: usize, max_swap_rounds: usize) -> Result<MedoidSet> {
    validate(z, k)?;
    let n = z.rows();
    let dist = distance_matrix(z);

    // BUILD
    let mut medoids = Vec::with_capacity(k);
    let mut is_medoid = vec![false; n];
    let mut near = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !is_medoid[i]) {
            let cost: f64 = (0..n).map(|j| near[j].min(dist[(i, j)])).sum();
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((i, cost));
            }
        }
        let (chosen, _) = best.expect("K <= n leaves a candidate");
        medoids.push(chosen);
        is_medoid[chosen] = true;
        for (j, nj) in near.iter_mut().enumerate() {
            *nj = nj.min(dist[(chosen, j)]);
        }
    }

    // SWAP
    let mut nearest_pos = vec![0usize; n];
    let mut d_near = vec![0.0; n];
    let mut d_second = vec![0.0; n];
    for _ in 0..max_swap_rounds {
        for j in 0..n {
            let mut first = (0usize, f64::INFINITY);
            let mut second = f64::INFINITY;
            for (pos, &m) in medoids.iter().enumerate() {
                let d = dist[(m, j)];
                if d < first.1 {
                    second = first.1;
                    first = (pos, d);
                } else if d < second {
                    second = d;
                }
            }
            nearest_pos[j] = first.0;
            d_near[j] = first.1;
            d_second[j] = second;
        }

        // (delta, medoid position, candidate) minimized lexicographically
        let mut best: Option<(f64, usize, usize)> = None;
        for (pos, _) in medoids.iter().enumerate() {
            for h in (0..n).filter(|&h| !is_medoid[h]) {
                let mut delta = 0.0;
                for j in 0..n {
                    let dhj = dist[(h, j)];
                    if nearest_pos[j] == pos {
                        delta += dhj.min(d_second[j]) - d_near[j];
                    } else if dhj < d_near[j] {
                        delta += dhj - d_near[j];
                    }
                }
                if best.is_none_or(|(b, _, _)| delta < b) {
                    best = Some((delta, pos, h));
                }
            }
        }
        match best {
            Some((delta, pos, h)) if delta < -SWAP_TOLERANCE => {
                is_medoid[medoids[pos]] = false;
                is_medoid[h] = true;
                medoids[pos] = h;
            }
            _ => break,
        }
    }

    Ok(MedoidSet::from_indices(z, &dist, medoids))
}

/// Nearest-medoid assignment for arbitrary rows (ties → lowest medoid index).
pub fn kmedoids_assign(z: &Matrix, medoid_points: &Matrix) -> Result<Vec<usize>> {
    if medoid_points.rows() == 0 {
        return Err(MpaError::Size("empty medoid set".into()));
    }
    if z.cols() != medoid_points.cols() {
        return Err(MpaError::Shape(format!(
            "samples have {} columns, medoids {}",
            z.cols(),
            medoid_points.cols()
        )));
    }
    Ok(z.row_iter()
        .map(|r| {
            let mut best = (0, f64::INFINITY);
            for (k, m) in medoid_points.row_iter().enumerate() {
                let d = sq_dist(r, m);
                if d < best.1 {
                    best = (k, d);
                }
            }
            best.0
        })
        .collect())
}

/// Sum of unsquared distances from every row to its nearest medoid.
pub fn clustering_cost(z: &Matrix, medoid_indices: &[usize]) -> f64 {
    z.row_iter()
        .map(|r| {
            medoid_indices
                .iter()
                .map(|&m| sq_dist(r, z.row(m)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Globally optimal medoids by exhaustive enumeration of all K-subsets.
/// Intended as a verification oracle for small instances.
pub fn brute_force_medoids(z: &Matrix, k: usize) -> Result<MedoidSet> {
    validate(z, k)?;
    let n = z.rows();
    let combos = binomial(n, k);
    if combos > BRUTE_FORCE_LIMIT {
        return Err(MpaError::Size(format!(
            "C({n}, {k}) = {combos} subsets exceeds {BRUTE_FORCE_LIMIT}"
        )));
    }
    let dist = distance_matrix(z);
    let mut subset: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let cost: f64 = (0..n).map(|j| nearest(&dist, &subset, j).1).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, subset.clone()));
        }
        // next lexicographic combination
        let mut i = k;
        while i > 0 && subset[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        subset[i - 1] += 1;
        for t in i..k {
            subset[t] = subset[t - 1] + 1;
        }
    }
    let (_, medoids) = best.expect("at least one subset");
    Ok(MedoidSet::from_indices(z, &dist, medoids))
}
