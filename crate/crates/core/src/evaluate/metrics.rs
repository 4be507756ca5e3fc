//! Regression metrics.

use crate::error::{Error, Result};
use crate::scalar::{mean, Scalar};

fn check_lengths<T>(actual: &[T], predicted: &[T]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::Data(format!(
            "{} actual values but {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Data("metrics need at least one value".into()));
    }
    Ok(())
}

/// Coefficient of determination `1 - SS_res / SS_tot`, with `SS_tot` taken
/// about the mean of `actual`. Constant `actual` is an error.
pub fn r_squared<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<T> {
    check_lengths(actual, predicted)?;
    if actual.len() < 2 {
        return Err(Error::Data("R-squared needs at least 2 values".into()));
    }
    let m = mean(actual);
    let ss_tot: T = actual.iter().map(|&a| (a - m) * (a - m)).sum();
    if ss_tot <= T::zero() {
        return Err(Error::ConstantActual);
    }
    let ss_res: T = actual
        .iter()
        .zip(predicted)
        .map(|(&a, &p)| (a - p) * (a - p))
        .sum();
    Ok(T::one() - ss_res / ss_tot)
}

/// Root mean squared error.
pub fn rmse<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<T> {
    check_lengths(actual, predicted)?;
    let sse: T = actual
        .iter()
        .zip(predicted)
        .map(|(&a, &p)| (a - p) * (a - p))
        .sum();
    Ok((sse / T::of_usize(actual.len())).sqrt())
}
