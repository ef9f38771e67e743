//! Least-squares gradient descent where only stored shards contribute.
//!
//! The `K` datasets are shards of a synthetic regression problem. Each
//! iteration sums the per-shard gradients of the shards some available VM
//! stores, always in shard order, and averages over the covered points. With
//! every shard covered the trajectory is bit-for-bit the centralized one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::exec;
use crate::model::ExplicitStorage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyntheticSpec {
    pub seed: u64,
    pub dim: usize,
    pub points_per_shard: usize,
    pub noise: f64,
    pub learning_rate: f64,
    pub iterations: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 2024,
            dim: 4,
            points_per_shard: 16,
            noise: 0.05,
            learning_rate: 0.1,
            iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub shards: Vec<Vec<Point>>,
    pub truth: Vec<f64>,
}

impl SyntheticData {
    pub fn generate(shards: usize, spec: &SyntheticSpec) -> Result<Self, SimError> {
        if spec.dim == 0 || spec.points_per_shard == 0 {
            return Err(SimError::Config(
                "dim and pointsPerShard must be positive".into(),
            ));
        }
        if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
            return Err(SimError::Config(
                "noise must be a finite non-negative number".into(),
            ));
        }
        if !(spec.learning_rate > 0.0 && spec.learning_rate.is_finite()) {
            return Err(SimError::Config("learningRate must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let truth: Vec<f64> = (0..spec.dim).map(|_| normal.sample(&mut rng)).collect();
        let shards = (0..shards)
            .map(|_| {
                (0..spec.points_per_shard)
                    .map(|_| {
                        let x: Vec<f64> = (0..spec.dim).map(|_| normal.sample(&mut rng)).collect();
                        let y = dot(&x, &truth) + spec.noise * normal.sample(&mut rng);
                        Point { x, y }
                    })
                    .collect()
            })
            .collect();
        Ok(SyntheticData { shards, truth })
    }

    /// Half mean squared residual over every point.
    pub fn loss(&self, w: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for shard in &self.shards {
            for p in shard {
                let r = dot(&p.x, w) - p.y;
                total += 0.5 * r * r;
                count += 1;
            }
        }
        total / count as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_p x_p (x_p . w - y_p)` over one shard.
pub fn shard_gradient(shard: &[Point], w: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for p in shard {
        let r = dot(&p.x, w) - p.y;
        for (gi, xi) in g.iter_mut().zip(&p.x) {
            *gi += xi * r;
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Loss before the first step and after each step.
    pub losses: Vec<f64>,
    pub params: Vec<f64>,
}

/// Plain full-data descent, the reference for full coverage.
pub fn centralized_descent(data: &SyntheticData, spec: &SyntheticSpec) -> Trajectory {
    let mut w = vec![0.0; spec.dim];
    let points: usize = data.shards.iter().map(Vec::len).sum();
    let mut losses = vec![data.loss(&w)];
    for _ in 0..spec.iterations {
        let mut g = vec![0.0; spec.dim];
        for shard in &data.shards {
            for (gi, si) in g.iter_mut().zip(shard_gradient(shard, &w)) {
                *gi += si;
            }
        }
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= spec.learning_rate * (gi / points as f64);
        }
        losses.push(data.loss(&w));
    }
    Trajectory { losses, params: w }
}

/// Which shards at least one VM stores.
pub fn covered_shards(storage: &ExplicitStorage) -> Vec<bool> {
    let mut covered = vec![false; storage.k as usize];
    for z in &storage.per_vm {
        for &i in z {
            covered[i as usize] = true;
        }
    }
    covered
}

/// Descent where iteration `i` sees the shards in `coverage[i % len]`; one
/// entry per elastic step.
pub fn descent_with_coverage(
    data: &SyntheticData,
    coverage: &[Vec<bool>],
    spec: &SyntheticSpec,
) -> Result<Trajectory, SimError> {
    if coverage.is_empty() || coverage.iter().any(|c| c.len() != data.shards.len()) {
        return Err(SimError::Config(
            "coverage must list every shard for at least one step".into(),
        ));
    }
    let mut w = vec![0.0; spec.dim];
    let mut losses = vec![data.loss(&w)];
    for it in 0..spec.iterations {
        let covered = &coverage[it % coverage.len()];
        let ids: Vec<usize> = (0..covered.len()).filter(|&i| covered[i]).collect();
        let points: usize = ids.iter().map(|&i| data.shards[i].len()).sum();
        let parts = exec::map(&ids, |&i| shard_gradient(&data.shards[i], &w));
        let mut g = vec![0.0; spec.dim];
        for part in parts {
            for (gi, si) in g.iter_mut().zip(part) {
                *gi += si;
            }
        }
        if points > 0 {
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= spec.learning_rate * (gi / points as f64);
            }
        }
        losses.push(data.loss(&w));
    }
    Ok(Trajectory { losses, params: w })
}

/// Descent over the shards stored by `storage`.
pub fn gradient_demo(
    storage: &ExplicitStorage,
    spec: &SyntheticSpec,
) -> Result<Trajectory, SimError> {
    storage.check()?;
    let data = SyntheticData::generate(storage.k as usize, spec)?;
    descent_with_coverage(&data, &[covered_shards(storage)], spec)
}
