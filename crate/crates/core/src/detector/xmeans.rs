//! X-means reference groups: k-means with BIC-accepted 2-means splits.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::{sq_dist, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct XMeansParams {
    pub max_clusters: usize,
    /// Cap used for a second attempt when the first yields undersized groups.
    pub fallback_max_clusters: usize,
    pub min_group_size: usize,
    /// Number of 2-means restarts per split attempt.
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for XMeansParams {
    fn default() -> Self {
        Self {
            max_clusters: 10,
            fallback_max_clusters: 5,
            min_group_size: 10,
            restarts: 10,
            max_iter: 100,
        }
    }
}

/// Row-major points of a fixed dimension.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Points<'a, T> {
    pub data: &'a [T],
    pub dim: usize,
}

impl<'a, T: Scalar> Points<'a, T> {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn get(&self, i: usize) -> &'a [T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Index of the closest centroid; the lowest index wins ties.
pub(crate) fn nearest<T: Scalar>(point: &[T], centroids: &[Vec<T>]) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn mean_of<T: Scalar>(points: Points<'_, T>, members: &[usize]) -> Vec<T> {
    let mut m = vec![T::zero(); points.dim];
    for &i in members {
        for (acc, &v) in m.iter_mut().zip(points.get(i)) {
            *acc = *acc + v;
        }
    }
    let n = T::from_count(members.len().max(1));
    m.iter_mut().for_each(|v| *v = *v / n);
    m
}

/// Lloyd iterations over `members`, starting from `centers`. Returns the
/// final centers and each member's cluster (parallel to `members`).
fn lloyd<T: Scalar>(
    points: Points<'_, T>,
    members: &[usize],
    mut centers: Vec<Vec<T>>,
    max_iter: usize,
) -> (Vec<Vec<T>>, Vec<usize>) {
    let k = centers.len();
    let mut assign = vec![usize::MAX; members.len()];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (slot, &i) in assign.iter_mut().zip(members) {
            let c = nearest(points.get(i), &centers);
            if *slot != c {
                *slot = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![T::zero(); points.dim]; k];
        let mut counts = vec![0usize; k];
        for (&c, &i) in assign.iter().zip(members) {
            counts[c] += 1;
            for (acc, &v) in sums[c].iter_mut().zip(points.get(i)) {
                *acc = *acc + v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = T::from_count(counts[c]);
                centers[c] = sums[c].iter().map(|&s| s / n).collect();
            }
        }
    }
    (centers, assign)
}

fn inertia<T: Scalar>(
    points: Points<'_, T>,
    members: &[usize],
    centers: &[Vec<T>],
    assign: &[usize],
) -> T {
    members
        .iter()
        .zip(assign)
        .map(|(&i, &c)| sq_dist(points.get(i), &centers[c]))
        .sum()
}

/// k-means++ seeding restricted to `members`.
fn kmeans_pp<T: Scalar>(
    points: Points<'_, T>,
    members: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<T>> {
    let first = members[rng.gen_range(0..members.len())];
    let mut centers = vec![points.get(first).to_vec()];
    let mut d2: Vec<f64> = members
        .iter()
        .map(|&i| sq_dist(points.get(i), &centers[0]).as_f64())
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = members.len() - 1;
            for (j, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = j;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..members.len())
        };
        let c = points.get(members[pick]).to_vec();
        for (slot, &i) in d2.iter_mut().zip(members) {
            *slot = slot.min(sq_dist(points.get(i), &c).as_f64());
        }
        centers.push(c);
    }
    centers
}

/// Bayesian information criterion of a spherical Gaussian mixture with one
/// shared per-dimension variance.
fn bic<T: Scalar>(
    points: Points<'_, T>,
    members: &[usize],
    centers: &[Vec<T>],
    assign: &[usize],
) -> f64 {
    let r = members.len() as f64;
    let k = centers.len() as f64;
    let m = points.dim as f64;
    if r <= k {
        return f64::NEG_INFINITY;
    }
    let sse = inertia(points, members, centers, assign).as_f64();
    let variance = sse / (m * (r - k));
    if variance <= f64::MIN_POSITIVE {
        return f64::NEG_INFINITY;
    }
    let mut sizes = vec![0usize; centers.len()];
    for &c in assign {
        sizes[c] += 1;
    }
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let log_likelihood: f64 = sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let rn = s as f64;
            rn * rn.ln() - rn * r.ln() - rn / 2.0 * ln_2pi - rn * m / 2.0 * variance.ln()
                - (rn - k) / 2.0
        })
        .sum();
    let params = (k - 1.0) + m * k + 1.0;
    log_likelihood - params / 2.0 * r.ln()
}

/// Best-of-`restarts` 2-means on a cluster's members.
fn split_in_two<T: Scalar>(
    points: Points<'_, T>,
    members: &[usize],
    params: &XMeansParams,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<Vec<T>>, Vec<usize>)> {
    let mut best: Option<(T, Vec<Vec<T>>, Vec<usize>)> = None;
    for _ in 0..params.restarts.max(1) {
        let init = kmeans_pp(points, members, 2, rng);
        let (centers, assign) = lloyd(points, members, init, params.max_iter);
        if !assign.contains(&0) || !assign.contains(&1) {
            continue;
        }
        let cost = inertia(points, members, &centers, &assign);
        if best.as_ref().map_or(true, |(b, _, _)| cost < *b) {
            best = Some((cost, centers, assign));
        }
    }
    best.map(|(_, c, a)| (c, a))
}

/// Runs X-means with the given cap and returns centroids and the
/// nearest-centroid assignment of every point.
pub(crate) fn xmeans<T: Scalar>(
    points: Points<'_, T>,
    max_clusters: usize,
    params: &XMeansParams,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<T>>, Vec<usize>) {
    let all: Vec<usize> = (0..points.len()).collect();
    let mut centers = vec![mean_of(points, &all)];
    loop {
        let (refined, assign) = lloyd(points, &all, centers, params.max_iter);
        centers = refined;
        if centers.len() >= max_clusters {
            break;
        }
        let mut proposals: Vec<(f64, usize, Vec<Vec<T>>)> = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            let members: Vec<usize> = all.iter().copied().filter(|&i| assign[i] == c).collect();
            if members.len() < 4 {
                continue;
            }
            let parent = bic(points, &members, std::slice::from_ref(center), &vec![0; members.len()]);
            if !parent.is_finite() {
                continue;
            }
            if let Some((children, child_assign)) = split_in_two(points, &members, params, rng) {
                let child = bic(points, &members, &children, &child_assign);
                if child > parent {
                    proposals.push((child - parent, c, children));
                }
            }
        }
        if proposals.is_empty() {
            break;
        }
        proposals.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut replaced = vec![None; centers.len()];
        let mut count = centers.len();
        for (_, c, children) in proposals {
            if count >= max_clusters {
                break;
            }
            replaced[c] = Some(children);
            count += 1;
        }
        let mut next = Vec::with_capacity(count);
        for (c, center) in centers.into_iter().enumerate() {
            match replaced[c].take() {
                Some(children) => next.extend(children),
                None => next.push(center),
            }
        }
        centers = next;
    }
    finalize(points, centers)
}

/// Drops empty centroids and assigns each point to its nearest centroid.
fn finalize<T: Scalar>(points: Points<'_, T>, centers: Vec<Vec<T>>) -> (Vec<Vec<T>>, Vec<usize>) {
    let assign: Vec<usize> = (0..points.len()).map(|i| nearest(points.get(i), &centers)).collect();
    let mut used = vec![false; centers.len()];
    assign.iter().for_each(|&c| used[c] = true);
    if used.iter().all(|&u| u) {
        return (centers, assign);
    }
    let kept: Vec<Vec<T>> = centers
        .into_iter()
        .zip(&used)
        .filter_map(|(c, &u)| u.then_some(c))
        .collect();
    let assign = (0..points.len()).map(|i| nearest(points.get(i), &kept)).collect();
    (kept, assign)
}

/// Removes the smallest undersized group and reassigns to the nearest
/// remaining centroid until every group is large enough or one remains.
pub(crate) fn merge_small_groups<T: Scalar>(
    points: Points<'_, T>,
    mut centers: Vec<Vec<T>>,
    mut assign: Vec<usize>,
    min_group_size: usize,
) -> (Vec<Vec<T>>, Vec<usize>) {
    loop {
        let mut sizes = vec![0usize; centers.len()];
        assign.iter().for_each(|&c| sizes[c] += 1);
        if centers.len() <= 1 {
            return (centers, assign);
        }
        let (smallest, &size) = sizes
            .iter()
            .enumerate()
            .min_by_key(|&(c, &s)| (s, c))
            .expect("at least one group");
        if size >= min_group_size {
            return (centers, assign);
        }
        centers.remove(smallest);
        let (c, a) = finalize(points, centers);
        centers = c;
        assign = a;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut out = Vec::new();
        for c in centers {
            for _ in 0..per {
                out.push(c[0] + noise.sample(&mut rng));
                out.push(c[1] + noise.sample(&mut rng));
            }
        }
        out
    }

    /// Oracle: plain k-means++/Lloyd for each k, keeping the k with the
    /// highest BIC over the whole data set.
    fn brute_force_best_k(points: Points<'_, f64>, kmax: usize, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<usize> = (0..points.len()).collect();
        let mut best = (f64::NEG_INFINITY, 0);
        for k in 1..=kmax {
            let mut best_run: Option<(f64, Vec<Vec<f64>>, Vec<usize>)> = None;
            for _ in 0..5 {
                let init = kmeans_pp(points, &all, k, &mut rng);
                let (c, a) = lloyd(points, &all, init, 100);
                let cost = inertia(points, &all, &c, &a);
                if best_run.as_ref().map_or(true, |b| cost < b.0) {
                    best_run = Some((cost, c, a));
                }
            }
            let (_, c, a) = best_run.unwrap();
            let score = bic(points, &all, &c, &a);
            if score > best.0 {
                best = (score, k);
            }
        }
        best.1
    }

    #[test]
    fn two_separated_blobs_give_two_groups() {
        let data = blobs(&[[0.0, 0.0], [10.0, 0.0]], 200, 0.1, 1);
        let points = Points { data: &data, dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (centers, assign) = xmeans(points, 10, &XMeansParams::default(), &mut rng);
        assert_eq!(centers.len(), 2);
        assert_eq!(brute_force_best_k(points, 10, 3), 2);
        assert!(assign[..200].iter().all(|&a| a == assign[0]));
        assert!(assign[200..].iter().all(|&a| a == assign[200]));
        assert_ne!(assign[0], assign[200]);
    }

    #[test]
    fn identical_points_stay_one_group() {
        let data = vec![3.0f64; 2 * 50];
        let points = Points { data: &data, dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (centers, _) = xmeans(points, 10, &XMeansParams::default(), &mut rng);
        assert_eq!(centers.len(), 1);
    }

    #[test]
    fn cap_is_respected() {
        let grid = [[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [30.0, 0.0], [40.0, 0.0], [50.0, 0.0]];
        let data = blobs(&grid, 60, 0.2, 4);
        let points = Points { data: &data, dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (centers, _) = xmeans(points, 5, &XMeansParams::default(), &mut rng);
        assert!(centers.len() <= 5 && centers.len() >= 2);
        let (six, _) = xmeans(points, 10, &XMeansParams::default(), &mut rng);
        assert_eq!(six.len(), 6);
    }

    #[test]
    fn merge_leaves_no_small_groups_and_nearest_assignment() {
        let mut data = blobs(&[[0.0, 0.0], [10.0, 0.0]], 100, 0.3, 6);
        data.extend_from_slice(&[30.0, 30.0, 30.5, 30.0, 30.0, 30.5]);
        let points = Points { data: &data, dim: 2 };
        let centers = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![30.0, 30.0]];
        let (centers, assign) = finalize(points, centers);
        let (centers, assign) = merge_small_groups(points, centers, assign, 10);
        assert_eq!(centers.len(), 2);
        let mut sizes = vec![0; 2];
        assign.iter().for_each(|&c| sizes[c] += 1);
        assert!(sizes.iter().all(|&s| s >= 10));
        for (i, &a) in assign.iter().enumerate() {
            assert_eq!(a, nearest(points.get(i), &centers));
        }
    }
}
