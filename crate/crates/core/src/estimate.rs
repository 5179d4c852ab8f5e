//! Monte Carlo estimates with standard errors.

use serde::Serialize;

use crate::expr::Shape;

/// A Monte Carlo value with entrywise standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    #[serde(skip)]
    pub shape: Shape,
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
}

impl Estimate {
    pub fn scalar(value: f64, stderr: f64, n_samples: usize) -> Self {
        Estimate {
            shape: Shape::Scalar,
            value: vec![value],
            stderr: vec![stderr],
            n_samples,
        }
    }

    /// An exactly known value.
    pub fn exact(shape: Shape, value: Vec<f64>) -> Self {
        let stderr = vec![0.0; value.len()];
        Estimate {
            shape,
            value,
            stderr,
            n_samples: 0,
        }
    }

    pub fn get(&self) -> f64 {
        self.value[0]
    }

    pub fn err(&self) -> f64 {
        self.stderr[0]
    }

    /// Whether `target` lies within `k` standard errors entrywise.
    pub fn covers(&self, target: &[f64], k: f64) -> bool {
        self.value
            .iter()
            .zip(&self.stderr)
            .zip(target)
            .all(|((v, s), t)| (v - t).abs() <= k * s)
    }
}

/// Batch-means accumulator for correlated samples of a vector observable.
///
/// Samples are grouped into consecutive batches of fixed size; the spread of
/// the batch means gives a standard error that accounts for autocorrelation
/// shorter than a batch.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    dim: usize,
    batch_size: usize,
    current: Vec<f64>,
    filled: usize,
    batches: Vec<Vec<f64>>,
}

impl BatchMeans {
    pub fn new(dim: usize, batch_size: usize) -> Self {
        assert!(batch_size > 0);
        BatchMeans {
            dim,
            batch_size,
            current: vec![0.0; dim],
            filled: 0,
            batches: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: &[f64]) {
        debug_assert_eq!(sample.len(), self.dim);
        for (c, s) in self.current.iter_mut().zip(sample) {
            *c += s;
        }
        self.filled += 1;
        if self.filled == self.batch_size {
            let inv = 1.0 / self.batch_size as f64;
            self.batches.push(self.current.iter().map(|c| c * inv).collect());
            self.current.iter_mut().for_each(|c| *c = 0.0);
            self.filled = 0;
        }
    }

    /// Completed batch means.
    pub fn batches(&self) -> &[Vec<f64>] {
        &self.batches
    }

    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    /// Mean and standard error over completed batches.
    pub fn finish(&self, shape: Shape) -> Estimate {
        let b = self.batches.len();
        assert!(b >= 2, "need at least two completed batches");
        let mut mean = vec![0.0; self.dim];
        for batch in &self.batches {
            for (m, v) in mean.iter_mut().zip(batch) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= b as f64);
        let mut var = vec![0.0; self.dim];
        for batch in &self.batches {
            for ((s, v), m) in var.iter_mut().zip(batch).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let stderr = var
            .iter()
            .map(|s| (s / (b as f64 - 1.0) / b as f64).sqrt())
            .collect();
        Estimate {
            shape,
            value: mean,
            stderr,
            n_samples: b * self.batch_size,
        }
    }
}

/// Sample mean and standard error of independent scalar samples.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
