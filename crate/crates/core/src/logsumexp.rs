//! Max-shifted log-sum-exp with optional nonnegative weights.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `log Σ_i w_i e^{a_i}`, skipping entries whose weight is zero.
///
/// Without weights every entry has unit weight.
pub fn weighted_logsumexp<T: Real>(values: &[T], weights: Option<&[T]>) -> Result<T> {
    Ok(logsumexp_parts(values, weights)?.0)
}

/// Normalized weights `w_i e^{a_i} / Σ_j w_j e^{a_j}`; these are the gradient
/// of [`weighted_logsumexp`] with respect to `values`.
pub fn softmax_weights<T: Real>(values: &[T], weights: Option<&[T]>) -> Result<(T, Vec<T>)> {
    let (lse, shifted, amax) = logsumexp_parts(values, weights)?;
    let total = (lse - amax).exp();
    Ok((lse, shifted.into_iter().map(|e| e / total).collect()))
}

/// Returns `(lse, w_i e^{a_i - amax}, amax)`.
fn logsumexp_parts<T: Real>(values: &[T], weights: Option<&[T]>) -> Result<(T, Vec<T>, T)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "log-sum-exp of an empty list".into(),
        ));
    }
    if let Some(w) = weights {
        if w.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "log-sum-exp weights",
                left: values.len(),
                right: w.len(),
            });
        }
        if w.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "log-sum-exp weights must be finite and nonnegative".into(),
            ));
        }
        if w.iter().all(|&x| x == T::zero()) {
            return Err(Error::ZeroWeights);
        }
    }
    let active = |i: usize| weights.map_or(true, |w| w[i] > T::zero());

    let mut amax = T::neg_infinity();
    for (i, &a) in values.iter().enumerate() {
        if active(i) && a > amax {
            amax = a;
        }
    }
    if !amax.is_finite() {
        amax = T::zero();
    }

    let shifted: Vec<T> = values
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if !active(i) {
                return T::zero();
            }
            let e = (a - amax).exp();
            weights.map_or(e, |w| e * w[i])
        })
        .collect();
    let sum: T = shifted.iter().copied().sum();
    Ok((sum.ln() + amax, shifted, amax))
}
