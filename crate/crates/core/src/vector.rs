//! Dense vector helpers shared by every scoring stage.
//!
//! Hidden states and embeddings are plain `Vec<f64>`; the helpers here keep
//! the arithmetic in one place so that the engine and the synthetic backend
//! compute running means bit-for-bit identically.

use crate::error::{Error, Result};

pub type Vector = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, or `None` when either vector has zero norm.
///
/// The result is clamped to `[-1, 1]` to absorb rounding.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn unit(a: &[f64]) -> Option<Vector> {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some(a.iter().map(|x| x / n).collect())
}

pub fn check_dim(v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: v.len(),
        });
    }
    Ok(())
}

/// Componentwise arithmetic mean of equally sized vectors.
pub fn mean<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vector> {
    let first = vectors.first().ok_or(Error::EmptyContext)?.as_ref();
    let d = first.len();
    let mut acc = RunningMean::new(d);
    for v in vectors {
        acc.push(v.as_ref())?;
    }
    Ok(acc.mean().to_vec())
}

/// `Σ w_i · v_i`.
pub fn weighted_sum<V: AsRef<[f64]>>(vectors: &[V], weights: &[f64]) -> Result<Vector> {
    if vectors.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: vectors.len(),
            got: weights.len(),
        });
    }
    let d = vectors.first().ok_or(Error::EmptyContext)?.as_ref().len();
    let mut out = vec![0.0; d];
    for (v, &w) in vectors.iter().zip(weights) {
        let v = v.as_ref();
        check_dim(v, d)?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Numerically stable softmax of `values / temperature`.
pub fn softmax(values: &[f64], temperature: f64) -> Vector {
    if values.is_empty() {
        return Vec::new();
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values
        .iter()
        .map(|v| ((v - max) / temperature).exp())
        .collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Incrementally maintained arithmetic mean of a stream of vectors.
///
/// Supports removal so that a spliced window can be swapped out without
/// replaying the whole stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMean {
    mean: Vector,
    count: usize,
}

impl RunningMean {
    pub fn new(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Current mean; all zeros while empty.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn push(&mut self, v: &[f64]) -> Result<()> {
        check_dim(v, self.dim())?;
        self.count += 1;
        let n = self.count as f64;
        for (m, x) in self.mean.iter_mut().zip(v) {
            *m += (x - *m) / n;
        }
        Ok(())
    }

    /// Removes a previously pushed vector. Removing from an empty mean is an error.
    pub fn remove(&mut self, v: &[f64]) -> Result<()> {
        check_dim(v, self.dim())?;
        if self.count == 0 {
            return Err(Error::InvalidArgument(
                "cannot remove from an empty running mean".into(),
            ));
        }
        if self.count == 1 {
            self.count = 0;
            self.mean.iter_mut().for_each(|m| *m = 0.0);
            return Ok(());
        }
        let n = self.count as f64;
        self.count -= 1;
        let k = self.count as f64;
        for (m, x) in self.mean.iter_mut().zip(v) {
            *m = (*m * n - x) / k;
        }
        Ok(())
    }
}
