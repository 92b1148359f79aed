//! Lloyd's k-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vector::{self, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vector>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

/// k-means settings. `n_init` independent seedings are run and the lowest
/// inertia kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeans {
    pub k: usize,
    pub seed: u64,
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeans {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            n_init: 10,
            max_iter: 100,
            tol: 1e-6,
        }
    }

    pub fn fit<V: AsRef<[f64]>>(&self, points: &[V]) -> Result<Clustering> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if points.len() < self.k {
            return Err(Error::FewerPointsThanK {
                points: points.len(),
                clusters: self.k,
            });
        }
        let d = points[0].as_ref().len();
        for p in points {
            vector::check_dim(p.as_ref(), d)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut best: Option<Clustering> = None;
        for _ in 0..self.n_init.max(1) {
            let run = self.lloyd(points, &mut rng);
            if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
                best = Some(run);
            }
        }
        Ok(best.expect("at least one run"))
    }

    fn lloyd<V: AsRef<[f64]>>(&self, points: &[V], rng: &mut ChaCha8Rng) -> Clustering {
        let mut centroids = plus_plus(points, self.k, rng);
        let mut assignments = assign(points, &centroids);
        for _ in 0..self.max_iter {
            reseed_empty(points, &centroids, &mut assignments, self.k);
            let next = recompute(points, &assignments, self.k, points[0].as_ref().len());
            let shift = centroids
                .iter()
                .zip(&next)
                .map(|(a, b)| sq_dist(a, b))
                .fold(0.0, f64::max)
                .sqrt();
            centroids = next;
            assignments = assign(points, &centroids);
            if shift <= self.tol {
                break;
            }
        }
        reseed_empty(points, &centroids, &mut assignments, self.k);
        let centroids = recompute(points, &assignments, self.k, points[0].as_ref().len());
        let inertia = points
            .iter()
            .zip(&assignments)
            .map(|(p, &c)| sq_dist(p.as_ref(), &centroids[c]))
            .sum();
        Clustering {
            assignments,
            centroids,
            inertia,
        }
    }
}

/// [`KMeans::new`] with default settings.
///
/// ```
/// let pts = [vec![0.0, 0.0], vec![0.0, 0.1], vec![10.0, 10.0]];
/// let c = token_guard::global::kmeans(&pts, 2, 7).unwrap();
/// assert_eq!(c.assignments[0], c.assignments[1]);
/// assert_ne!(c.assignments[0], c.assignments[2]);
/// ```
pub fn kmeans<V: AsRef<[f64]>>(points: &[V], k: usize, seed: u64) -> Result<Clustering> {
    KMeans::new(k, seed).fit(points)
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy k-means++: each new centre is the best of `2 + ln k` draws.
fn plus_plus<V: AsRef<[f64]>>(points: &[V], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = vec![points[rng.random_range(0..points.len())].as_ref().to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p.as_ref(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = d2.len() - 1;
                for (i, w) in d2.iter().enumerate() {
                    if *w > 0.0 && target < *w {
                        chosen = i;
                        break;
                    }
                    target -= w;
                }
                chosen
            } else {
                rng.random_range(0..points.len())
            };
            let c = points[pick].as_ref();
            let next: Vec<f64> = d2
                .iter()
                .zip(points)
                .map(|(slot, p)| slot.min(sq_dist(p.as_ref(), c)))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, pick, next));
            }
        }
        let (_, pick, next) = best.expect("at least one trial");
        d2 = next;
        centroids.push(points[pick].as_ref().to_vec());
    }
    centroids
}

fn assign<V: AsRef<[f64]>>(points: &[V], centroids: &[Vector]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = sq_dist(p.as_ref(), c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// Moves the point farthest from its centroid into each empty cluster.
fn reseed_empty<V: AsRef<[f64]>>(
    points: &[V],
    centroids: &[Vector],
    assignments: &mut [usize],
    k: usize,
) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let far = (0..points.len())
            .filter(|&i| sizes[assignments[i]] > 1)
            .max_by(|&i, &j| {
                let di = sq_dist(points[i].as_ref(), &centroids[assignments[i]]);
                let dj = sq_dist(points[j].as_ref(), &centroids[assignments[j]]);
                di.total_cmp(&dj).then(j.cmp(&i))
            })
            .expect("points >= k leaves a cluster with two members");
        assignments[far] = empty;
    }
}

fn recompute<V: AsRef<[f64]>>(points: &[V], assignments: &[usize], k: usize, d: usize) -> Vec<Vector> {
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p.as_ref()) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let pts = [vec![1.0], vec![5.0], vec![-3.0], vec![2.5]];
        let c = kmeans(&pts, 4, 1).unwrap();
        assert_eq!(c.inertia, 0.0);
        let mut a = c.assignments.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let pts = vec![vec![1.0, 1.0]; 4];
        let c = kmeans(&pts, 3, 9).unwrap();
        for j in 0..3 {
            assert!(c.assignments.contains(&j));
        }
    }

    #[test]
    fn errors() {
        assert_eq!(
            kmeans(&[vec![1.0]], 2, 0),
            Err(Error::FewerPointsThanK {
                points: 1,
                clusters: 2
            })
        );
        assert!(kmeans(&[vec![1.0], vec![1.0, 2.0]], 1, 0).is_err());
    }

    #[test]
    fn deterministic() {
        let pts: Vec<Vector> = (0..20).map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64]).collect();
        assert_eq!(kmeans(&pts, 3, 42), kmeans(&pts, 3, 42));
    }
}
