//! Bivariate statistics.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::AnalysisError;

pub(crate) fn check_length<T>(v: &[T]) -> Result<(), AnalysisError> {
    if v.len() < 2 {
        return Err(AnalysisError::TooShort(v.len()));
    }
    Ok(())
}

pub(crate) fn check_pair<T>(x: &[T], y: &[T]) -> Result<(), AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    check_length(x)
}

pub(crate) fn cast<T: Float>(n: usize) -> T {
    T::from(n).expect("sample counts are representable")
}

pub fn mean<T: Float>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, &x| s + x) / cast(v.len())
}

/// Sum of squared deviations from the mean.
fn sum_squares<T: Float>(v: &[T], m: T) -> T {
    v.iter().fold(T::zero(), |s, &x| s + (x - m) * (x - m))
}

/// Population standard deviation.
pub fn population_std<T: Float>(v: &[T]) -> T {
    (sum_squares(v, mean(v)) / cast(v.len())).sqrt()
}

/// Product-moment correlation coefficient, clamped to `[-1, 1]`.
pub fn pearson<T: Float>(x: &[T], y: &[T]) -> Result<T, AnalysisError> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let sxx = sum_squares(x, mx);
    let syy = sum_squares(y, my);
    if sxx == T::zero() || syy == T::zero() {
        return Err(AnalysisError::ConstantInput);
    }
    let sxy = x.iter().zip(y).fold(T::zero(), |s, (&a, &b)| s + (a - mx) * (b - my));
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Rescales `v` to mean 0 and population standard deviation 1.
pub fn standardize<T: Float>(v: &[T]) -> Result<Vec<T>, AnalysisError> {
    check_length(v)?;
    let m = mean(v);
    let s = population_std(v);
    if s == T::zero() {
        return Err(AnalysisError::ConstantInput);
    }
    Ok(v.iter().map(|&x| (x - m) / s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression<T> {
    pub slope: T,
    pub intercept: T,
}

/// Ordinary least squares fit of `y` on `x`.
pub fn ols<T: Float>(x: &[T], y: &[T]) -> Result<Regression<T>, AnalysisError> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let sxx = sum_squares(x, mx);
    if sxx == T::zero() {
        return Err(AnalysisError::ConstantInput);
    }
    let sxy = x.iter().zip(y).fold(T::zero(), |s, (&a, &b)| s + (a - mx) * (b - my));
    let slope = sxy / sxx;
    Ok(Regression { slope, intercept: my - slope * mx })
}

/// Gas per byte of memory growth, fitted on the samples with `M >= 0`.
pub fn gas_per_byte_regression<T: Float>(mem: &[T], gas: &[T]) -> Result<Regression<T>, AnalysisError> {
    if mem.len() != gas.len() {
        return Err(AnalysisError::LengthMismatch(mem.len(), gas.len()));
    }
    let (m, g): (Vec<T>, Vec<T>) = mem.iter().zip(gas).filter(|(m, _)| **m >= T::zero()).map(|(&m, &g)| (m, g)).unzip();
    ols(&m, &g)
}
