//! k-means codebooks and nearest-centroid tokenization.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cuenet_autograd::Tensor;

use crate::error::{CueError, Result};
use crate::features::FrameFeatures;

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub omega: usize,
    pub dim: usize,
    pub seed: u64,
    /// Row-major `[omega, dim]`.
    pub centroids: Vec<f64>,
}

impl Codebook {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Index of the closest centroid; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for c in 0..self.omega {
            let d = sq_dist(x, self.centroid(c));
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cb: Codebook = serde_json::from_slice(&std::fs::read(path)?)?;
        if cb.centroids.len() != cb.omega * cb.dim {
            return Err(CueError::Checkpoint(format!(
                "codebook holds {} values, expected {} x {}",
                cb.centroids.len(),
                cb.omega,
                cb.dim
            )));
        }
        Ok(cb)
    }
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from k-means++ seeding over the rows of `points` (`[P, D]`).
pub fn fit_kmeans(points: &Tensor, omega: usize, seed: u64) -> Result<KMeansFit> {
    if points.rank() != 2 {
        return Err(CueError::ShapeMismatch(format!("points must be [P, D], got {:?}", points.shape())));
    }
    let (n, dim) = (points.dim(0), points.dim(1));
    if omega == 0 {
        return Err(CueError::InvalidArgument("cluster count must be positive".into()));
    }
    if n < omega {
        return Err(CueError::TooFewPoints {
            points: n,
            clusters: omega,
        });
    }
    let row = |i: usize| &points.data()[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<f64> = Vec::with_capacity(omega * dim);
    centroids.extend_from_slice(row(rng.gen_range(0..n)));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[..dim])).collect();
    for _ in 1..omega {
        let next = match WeightedIndex::new(&closest) {
            Ok(w) => w.sample(&mut rng),
            // every point already sits on a centroid
            Err(_) => rng.gen_range(0..n),
        };
        let start = centroids.len();
        centroids.extend_from_slice(row(next));
        for (i, c) in closest.iter_mut().enumerate() {
            *c = c.min(sq_dist(row(i), &centroids[start..start + dim]));
        }
    }

    let mut cb = Codebook {
        omega,
        dim,
        seed,
        centroids,
    };
    let mut assign = vec![0usize; n];
    let mut trace = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut inertia = 0.0;
        for (i, a) in assign.iter_mut().enumerate() {
            *a = cb.nearest(row(i));
            inertia += sq_dist(row(i), cb.centroid(*a));
        }
        let converged = trace
            .last()
            .is_some_and(|&prev: &f64| (prev - inertia).abs() <= TOLERANCE * prev.max(f64::MIN_POSITIVE));
        trace.push(inertia);
        if converged {
            break;
        }

        let mut sums = vec![0.0; omega * dim];
        let mut counts = vec![0usize; omega];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        for c in 0..omega {
            if counts[c] > 0 {
                for d in 0..dim {
                    cb.centroids[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            }
        }
        // Empty clusters take over the point farthest from its own centroid.
        for c in 0..omega {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&i, &j| {
                        let di = sq_dist(row(i), cb.centroid(assign[i]));
                        let dj = sq_dist(row(j), cb.centroid(assign[j]));
                        di.total_cmp(&dj).then(j.cmp(&i))
                    })
                    .expect("at least one point");
                cb.centroids[c * dim..(c + 1) * dim].copy_from_slice(row(far));
                assign[far] = c;
                counts[c] = 1;
            }
        }
    }
    Ok(KMeansFit {
        codebook: cb,
        inertia: trace,
    })
}

/// Nearest-centroid token per feature column.
pub fn tokenize(features: &FrameFeatures, codebook: &Codebook) -> Result<Vec<usize>> {
    if features.dim() != codebook.dim {
        return Err(CueError::DimensionMismatch {
            features: features.dim(),
            codebook: codebook.dim,
        });
    }
    Ok((0..features.num_frames())
        .map(|t| codebook.nearest(&features.column(t)))
        .collect())
}

/// Stacks the columns of several feature matrices into a `[P, D]` point set.
pub fn pool_columns(features: &[FrameFeatures]) -> Result<Tensor> {
    let dim = features.first().map_or(0, FrameFeatures::dim);
    let mut data = Vec::new();
    let mut rows = 0;
    for f in features {
        if f.dim() != dim {
            return Err(CueError::DimensionMismatch {
                features: f.dim(),
                codebook: dim,
            });
        }
        for t in 0..f.num_frames() {
            data.extend(f.column(t));
            rows += 1;
        }
    }
    Ok(Tensor::new(vec![rows, dim], data))
}
