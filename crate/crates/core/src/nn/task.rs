//! Seeded synthetic classification tasks: Gaussian mixtures with class means
//! on a sphere, plus shifted variants that stand in for a downstream task
//! related to (but distinct from) the pretraining distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{norm2, DenseMatrix, RngStream};

const STREAM_MEANS: u64 = 0xD1;
const STREAM_SHIFT: u64 = 0xD2;
const STREAM_TRAIN: u64 = 0xD3;
const STREAM_TEST: u64 = 0xD4;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Targets {
    Labels(Vec<usize>),
    Values(DenseMatrix),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: DenseMatrix,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Result<&[usize]> {
        match &self.targets {
            Targets::Labels(l) => Ok(l),
            Targets::Values(_) => Err(Error::invalid("dataset has value targets, not labels")),
        }
    }
}

/// A seeded Gaussian-mixture classification task. Train and test splits are
/// drawn from the same distribution using disjoint seeded streams, so the
/// task regenerates identical data on every call.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub input_dim: usize,
    pub classes: usize,
    pub class_means: DenseMatrix,
    pub noise_sigma: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl SyntheticTask {
    /// Class means drawn uniformly on the sphere of the given radius.
    pub fn gaussian_mixture(
        input_dim: usize,
        classes: usize,
        mean_radius: f64,
        noise_sigma: f64,
        train_size: usize,
        test_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || classes < 2 {
            return Err(Error::invalid(
                "gaussian mixture needs input_dim >= 1 and classes >= 2",
            ));
        }
        let mut rng = RngStream::new(seed, STREAM_MEANS);
        let mut means = DenseMatrix::zeros(classes, input_dim);
        for c in 0..classes {
            let mut v = vec![0.0; input_dim];
            rng.fill_normal(&mut v);
            let scale = mean_radius / norm2(&v);
            for (j, x) in v.iter().enumerate() {
                means.set(c, j, x * scale);
            }
        }
        Ok(Self {
            input_dim,
            classes,
            class_means: means,
            noise_sigma,
            train_size,
            test_size,
            seed,
        })
    }

    /// A two-class task with well-separated means; a sanity target that any
    /// small network fits to high accuracy.
    pub fn linearly_separable(input_dim: usize, train_size: usize, test_size: usize, seed: u64) -> Result<Self> {
        Self::gaussian_mixture(input_dim, 2, 4.0, 0.3, train_size, test_size, seed)
    }

    /// Derives a related task by shifting every class mean along a seeded
    /// unit direction. Sample streams are re-keyed so the two tasks draw
    /// disjoint data.
    pub fn shifted_variant(&self, shift_scale: f64, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, STREAM_SHIFT);
        let mut means = self.class_means.clone();
        for c in 0..self.classes {
            let mut dir = vec![0.0; self.input_dim];
            rng.fill_normal(&mut dir);
            let scale = shift_scale / norm2(&dir);
            for j in 0..self.input_dim {
                means.set(c, j, means.get(c, j) + dir[j] * scale);
            }
        }
        Self {
            class_means: means,
            seed,
            ..self.clone()
        }
    }

    fn sample(&self, size: usize, stream: u64) -> Dataset {
        let mut rng = RngStream::new(self.seed, stream);
        let mut inputs = DenseMatrix::zeros(size, self.input_dim);
        let mut labels = Vec::with_capacity(size);
        for s in 0..size {
            let y = rng.below(self.classes);
            labels.push(y);
            for j in 0..self.input_dim {
                inputs.set(s, j, self.class_means.get(y, j) + self.noise_sigma * rng.normal());
            }
        }
        Dataset {
            inputs,
            targets: Targets::Labels(labels),
        }
    }

    pub fn train_set(&self) -> Dataset {
        self.sample(self.train_size, STREAM_TRAIN)
    }

    pub fn test_set(&self) -> Dataset {
        self.sample(self.test_size, STREAM_TEST)
    }
}
