//! k-means used to initialize the mixture fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Squared Euclidean distance, mean centroids.
    Euclidean,
    /// Cosine dissimilarity `1 - x^T c`, unit-normalized centroids.
    Spherical,
}

#[derive(Debug, Clone)]
pub struct Clustering {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, l)| **l == cluster)
            .map(|(i, _)| i)
    }
}

impl Geometry {
    fn cost(self, x: &[f64], c: &[f64]) -> f64 {
        match self {
            Geometry::Euclidean => lane_sum(x, c, |a, b| (a - b) * (a - b)),
            Geometry::Spherical => 1.0 - lane_sum(x, c, |a, b| a * b),
        }
    }

    fn finish(self, centroid: &mut [f64], count: usize) -> bool {
        match self {
            Geometry::Euclidean => {
                centroid.iter_mut().for_each(|c| *c /= count as f64);
                true
            }
            Geometry::Spherical => {
                let norm = centroid.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm > 0.0 {
                    centroid.iter_mut().for_each(|c| *c /= norm);
                    true
                } else {
                    false
                }
            }
        }
    }
}

/// `sum_j f(x_j, c_j)` with four independent accumulators, which lets the
/// compiler vectorize the loop.
#[inline]
fn lane_sum(x: &[f64], c: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = [0.0f64; 4];
    let xs = x.chunks_exact(4);
    let cs = c.chunks_exact(4);
    let tail: f64 = xs
        .remainder()
        .iter()
        .zip(cs.remainder())
        .map(|(a, b)| f(*a, *b))
        .sum();
    for (xa, ca) in xs.zip(cs) {
        for l in 0..4 {
            acc[l] += f(xa[l], ca[l]);
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn nearest(geometry: Geometry, x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = geometry.cost(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding.
fn seed_centroids(
    geometry: Geometry,
    data: &[Vec<f64>],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut centroids = vec![data[rng.random_range(0..data.len())].clone()];
    let mut dist: Vec<f64> = data
        .iter()
        .map(|x| geometry.cost(x, &centroids[0]).max(0.0))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = data.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..data.len())
        };
        let c = data[pick].clone();
        dist.par_iter_mut()
            .zip(data.par_iter())
            .for_each(|(d, x)| *d = d.min(geometry.cost(x, &c).max(0.0)));
        centroids.push(c);
    }
    centroids
}

fn lloyd(geometry: Geometry, data: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> Clustering {
    let k = centroids.len();
    let dim = data[0].len();
    let mut labels = vec![usize::MAX; data.len()];
    let mut assigned: Vec<(usize, f64)> = Vec::new();
    for _ in 0..MAX_ITER {
        assigned = data
            .par_iter()
            .map(|x| nearest(geometry, x, &centroids))
            .collect();
        let changed = assigned.iter().zip(&labels).any(|(a, l)| a.0 != *l);
        labels.iter_mut().zip(&assigned).for_each(|(l, a)| *l = a.0);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.iter().zip(&labels) {
            sums[l].iter_mut().zip(x).for_each(|(s, v)| *s += v);
            counts[l] += 1;
        }
        for i in 0..k {
            if counts[i] == 0 || !geometry.finish(&mut sums[i], counts[i]) {
                // Empty cluster: move it to the worst-fitted point.
                let worst = assigned
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                    .map(|(n, _)| n)
                    .unwrap_or(0);
                sums[i] = data[worst].clone();
                assigned[worst].1 = 0.0;
            }
        }
        centroids = sums;
    }
    let inertia = assigned.iter().map(|a| a.1).sum();
    Clustering {
        centroids,
        labels,
        inertia,
    }
}

/// Restarts on corpora larger than this (or `100 k`) run on a random subsample
/// of that size; the winning centroids then seed one run on the full data.
const RESTART_SAMPLE: usize = 20_000;

/// Best-of-`restarts` k-means with k-means++ seeding.
pub fn kmeans(
    geometry: Geometry,
    data: &[Vec<f64>],
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Clustering> {
    if k == 0 || data.len() < k {
        return Err(Error::TooFewSamples {
            need: k.max(1),
            have: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_size = RESTART_SAMPLE.max(100 * k);
    let subsample: Option<Vec<Vec<f64>>> = (data.len() > sample_size).then(|| {
        let mut picks = rand::seq::index::sample(&mut rng, data.len(), sample_size).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| data[i].clone()).collect()
    });
    let pool = subsample.as_deref().unwrap_or(data);
    let mut best: Option<Clustering> = None;
    for _ in 0..restarts.max(1) {
        let start = seed_centroids(geometry, pool, k, &mut rng);
        let run = lloyd(geometry, pool, start);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(match subsample {
        Some(_) => lloyd(geometry, data, best.centroids),
        None => best,
    })
}

/// `k` distinct samples chosen uniformly, as centroids, with nearest labels.
pub fn random_points(
    geometry: Geometry,
    data: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<Clustering> {
    if k == 0 || data.len() < k {
        return Err(Error::TooFewSamples {
            need: k.max(1),
            have: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, data.len(), k);
    let centroids: Vec<Vec<f64>> = picks.iter().map(|i| data[i].clone()).collect();
    let assigned: Vec<(usize, f64)> = data
        .par_iter()
        .map(|x| nearest(geometry, x, &centroids))
        .collect();
    Ok(Clustering {
        centroids,
        labels: assigned.iter().map(|a| a.0).collect(),
        inertia: assigned.iter().map(|a| a.1).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_obvious_clusters() {
        let mut data = Vec::new();
        for i in 0..50 {
            let t = i as f64 * 0.001;
            data.push(vec![t, 0.0]);
            data.push(vec![10.0 + t, 10.0]);
        }
        let c = kmeans(Geometry::Euclidean, &data, 2, 3, 1).unwrap();
        assert!(c.inertia < 0.05, "{}", c.inertia);
        assert_ne!(c.labels[0], c.labels[1]);
        assert!(c.labels.iter().step_by(2).all(|l| *l == c.labels[0]));
    }

    #[test]
    fn spherical_centroids_are_unit() {
        let data: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let a = i as f64 * 0.01 + if i % 2 == 0 { 0.0 } else { 1.5 };
                vec![a.cos(), a.sin(), 0.0]
            })
            .collect();
        let c = kmeans(Geometry::Spherical, &data, 2, 2, 7).unwrap();
        for cen in &c.centroids {
            assert!((cen.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(c.members(c.labels[0]).count(), 20);
    }

    #[test]
    fn too_few_points() {
        assert!(kmeans(Geometry::Euclidean, &[vec![1.0]], 2, 1, 0).is_err());
        assert!(random_points(Geometry::Euclidean, &[vec![1.0]], 2, 0).is_err());
    }
}
