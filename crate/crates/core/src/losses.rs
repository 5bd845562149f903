//! Classification, invariance and composite losses.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub value: f64,
    /// The true-class probability fell below [`PROB_FLOOR`].
    pub clamped: bool,
}

/// `-ln p[y]`, the one-hot cross-entropy.
pub fn cross_entropy<F: Float>(probs: &[F], y: usize) -> Result<CrossEntropy> {
    let p = probs
        .get(y)
        .ok_or_else(|| Error::Internal(format!("label {y} outside {} classes", probs.len())))?
        .to_f64()
        .unwrap_or(f64::NAN);
    let clamped = !(p >= PROB_FLOOR);
    let p = if clamped { PROB_FLOOR } else { p };
    Ok(CrossEntropy {
        value: -p.ln(),
        clamped,
    })
}

/// Argmax with ties going to the lowest index.
pub fn predict<F: PartialOrd + Copy>(probs: &[F]) -> usize {
    let mut best = 0;
    for (j, p) in probs.iter().enumerate().skip(1) {
        if *p > probs[best] {
            best = j;
        }
    }
    best
}

/// Squared Euclidean distance `sum_k (r_k - r'_k)^2`.
pub fn reg_loss<F: Float>(r: &[F], r_prime: &[F]) -> Result<f64> {
    if r.len() != r_prime.len() {
        return Err(Error::Internal(format!(
            "representation sizes differ: {} vs {}",
            r.len(),
            r_prime.len()
        )));
    }
    Ok(r.iter()
        .zip(r_prime)
        .map(|(a, b)| {
            let d = (*a - *b).to_f64().unwrap_or(f64::NAN);
            d * d
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub l_cls: f64,
    pub l_reg: f64,
    pub l_total: f64,
    pub lambda: f64,
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda {lambda} outside [0,1]")));
    }
    Ok(())
}

/// `l_total = l_cls + lambda * l_reg`.
pub fn total_loss(l_cls: f64, l_reg: f64, lambda: f64) -> Result<LossBundle> {
    check_lambda(lambda)?;
    Ok(LossBundle {
        l_cls,
        l_reg,
        l_total: l_cls + lambda * l_reg,
        lambda,
    })
}
