//! Minimal neural-network kernel with hand-derived backward passes.
//!
//! Activations are batched row-major matrices, `[batch x features]`. Every
//! trainable container implements [`Params`], which exposes its tensors in a
//! fixed order; gradients, optimizer moments and target networks are values
//! of the same type, so shape mirroring holds by construction.

mod activation;
mod adam;
mod dense;
mod gradcheck;
mod lstm;
mod mlp;

pub use activation::Activation;
pub use adam::{AdamConfig, AdamState};
pub use dense::Dense;
pub use gradcheck::{grad_check, GradCheckReport};
pub use lstm::{Gate, LstmCache, LstmCell};
pub use mlp::{Mlp, MlpCache};

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type Mat = Array2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("gradient blow-up: non-finite value in tensor {tensor}")]
    GradientBlowUp { tensor: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

pub(crate) fn check_shape(op: &'static str, left: &Mat, right: (usize, usize)) -> Result<(), NnError> {
    if left.dim() == right {
        Ok(())
    } else {
        Err(NnError::Shape {
            op,
            left: left.dim(),
            right,
        })
    }
}

/// A container of trainable tensors visited in a fixed order.
pub trait Params {
    fn tensors(&self) -> Vec<&Mat>;
    fn tensors_mut(&mut self) -> Vec<&mut Mat>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|t| t.dim()).collect()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) -> Result<(), NnError>
    where
        Self: Sized,
    {
        mirror_check("accumulate", self, other)?;
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b;
        }
        Ok(())
    }

    fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.mapv_inplace(|v| v * k);
        }
    }

    fn sum_sq(&self) -> f64 {
        self.tensors().iter().map(|t| t.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    /// Copies every value into one flat vector.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend(t.iter().copied());
        }
        out
    }

    /// Overwrites every value from a flat slice produced by [`Params::flatten`].
    fn assign_flat(&mut self, values: &[f64]) -> Result<(), NnError> {
        let n = self.num_params();
        if values.len() != n {
            return Err(NnError::Shape {
                op: "assign_flat",
                left: (n, 1),
                right: (values.len(), 1),
            });
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let len = t.len();
            for (dst, src) in t.iter_mut().zip(&values[off..off + len]) {
                *dst = *src;
            }
            off += len;
        }
        Ok(())
    }
}

/// A zeroed container with the same shapes as `p`.
pub fn zeros_like<P: Params + Clone>(p: &P) -> P {
    let mut z = p.clone();
    z.fill(0.0);
    z
}

fn mirror_check<P: Params>(op: &'static str, a: &P, b: &P) -> Result<(), NnError> {
    let (sa, sb) = (a.shapes(), b.shapes());
    if sa.len() != sb.len() {
        return Err(NnError::Shape {
            op,
            left: (sa.len(), 0),
            right: (sb.len(), 0),
        });
    }
    for (x, y) in sa.into_iter().zip(sb) {
        if x != y {
            return Err(NnError::Shape { op, left: x, right: y });
        }
    }
    Ok(())
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn soft_update<P: Params>(online: &P, target: &mut P, tau: f64) -> Result<(), NnError> {
    mirror_check("soft_update", online, target)?;
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
    Ok(())
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<P: Params>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.sum_sq().sqrt();
    if norm > max_norm && norm.is_finite() {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Glorot-uniform matrix, deterministic for a given rng state.
pub fn init_xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

pub fn init_uniform(rows: usize, cols: usize, limit: f64, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn hcat(parts: &[&Mat]) -> Result<Mat, NnError> {
    let rows = parts.first().map(|m| m.nrows()).unwrap_or(0);
    for p in parts {
        if p.nrows() != rows {
            return Err(NnError::Shape {
                op: "hcat",
                left: (rows, 0),
                right: p.dim(),
            });
        }
    }
    let views: Vec<_> = parts.iter().map(|m| m.view()).collect();
    Ok(ndarray::concatenate(Axis(1), &views).expect("row counts checked"))
}

/// Column sums as a `[1 x cols]` matrix.
pub(crate) fn col_sums(m: &Mat) -> Mat {
    m.sum_axis(Axis(0)).insert_axis(Axis(0))
}
