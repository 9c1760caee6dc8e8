//! Autoencoder losses in nats.
//!
//! The loss values clamp probabilities to [`PROB_CLAMP`]; the fused output
//! gradients are taken with respect to the logits of the softmax/sigmoid
//! output layer.

use ndarray::{Array2, ArrayView2, Zip};

use crate::{Error, Result, Scalar};

pub const PROB_CLAMP: f64 = 1e-12;

fn check<T>(u: &ArrayView2<T>, s: &ArrayView2<T>) -> Result<()> {
    if u.dim() != s.dim() {
        return Err(Error::LengthMismatch {
            what: "target/prediction shape",
            expected: u.len(),
            actual: s.len(),
        });
    }
    if u.nrows() == 0 {
        return Err(Error::EmptyInput("loss batch"));
    }
    Ok(())
}

fn clamped_ln<T: Scalar>(p: T) -> T {
    let lo = T::of(PROB_CLAMP);
    p.max(lo).min(T::one()).ln()
}

/// `-sum_i u_i log s_i` per sample.
pub fn per_sample_categorical_ce<T: Scalar>(u: ArrayView2<T>, s: ArrayView2<T>) -> Result<Vec<T>> {
    check(&u, &s)?;
    Ok(u.rows()
        .into_iter()
        .zip(s.rows())
        .map(|(ur, sr)| {
            ur.iter()
                .zip(sr.iter())
                .filter(|(&ui, _)| ui != T::zero())
                .map(|(&ui, &si)| -ui * clamped_ln(si))
                .sum()
        })
        .collect())
}

/// Batch mean of the categorical cross-entropy.
pub fn categorical_ce<T: Scalar>(u: ArrayView2<T>, s: ArrayView2<T>) -> Result<T> {
    let v = per_sample_categorical_ce(u, s)?;
    Ok(v.iter().copied().sum::<T>() / T::of_usize(v.len()))
}

/// `-(1/m) sum_i [u_i log s_i + (1-u_i) log(1-s_i)]` per sample.
pub fn per_sample_binary_ce<T: Scalar>(u: ArrayView2<T>, s: ArrayView2<T>) -> Result<Vec<T>> {
    check(&u, &s)?;
    let m = T::of_usize(u.ncols());
    Ok(u.rows()
        .into_iter()
        .zip(s.rows())
        .map(|(ur, sr)| {
            let sum: T = ur
                .iter()
                .zip(sr.iter())
                .map(|(&ui, &si)| ui * clamped_ln(si) + (T::one() - ui) * clamped_ln(T::one() - si))
                .sum();
            -sum / m
        })
        .collect())
}

pub fn binary_ce<T: Scalar>(u: ArrayView2<T>, s: ArrayView2<T>) -> Result<T> {
    let v = per_sample_binary_ce(u, s)?;
    Ok(v.iter().copied().sum::<T>() / T::of_usize(v.len()))
}

/// Gradient of [`categorical_ce`] with respect to the softmax logits.
pub fn categorical_ce_grad<T: Scalar>(u: ArrayView2<T>, s: ArrayView2<T>) -> Result<Array2<T>> {
    check(&u, &s)?;
    let b = T::of_usize(u.nrows());
    let mut g = s.to_owned();
    Zip::from(&mut g).and(&u).for_each(|g, &ui| *g = (*g - ui) / b);
    Ok(g)
}

/// Gradient of [`binary_ce`] with respect to the sigmoid logits.
pub fn binary_ce_grad<T: Scalar>(u: ArrayView2<T>, s: ArrayView2<T>) -> Result<Array2<T>> {
    check(&u, &s)?;
    let scale = T::of_usize(u.nrows() * u.ncols());
    let mut g = s.to_owned();
    Zip::from(&mut g).and(&u).for_each(|g, &ui| *g = (*g - ui) / scale);
    Ok(g)
}
