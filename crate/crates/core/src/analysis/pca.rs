//! Leading principal component by power iteration.

use num_traits::Float;

use super::stats::{cast, check_length};
use super::AnalysisError;

/// Iteration cap per start vector.
pub const MAX_ITERATIONS: usize = 10_000;

/// Convergence tolerance on the eigenvector, floored near machine
/// precision for narrow float types.
pub fn tolerance<T: Float>() -> T {
    let requested = T::from(1e-10).expect("representable");
    requested.max(T::epsilon() * cast(16))
}

/// Top eigenvector and eigenvalue of the column covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAxis<T> {
    /// Unit vector whose components sum to a non-negative value.
    pub direction: Vec<T>,
    pub eigenvalue: T,
}

fn check_columns<T>(columns: &[Vec<T>]) -> Result<usize, AnalysisError> {
    let first = columns.first().ok_or(AnalysisError::EmptySelection)?;
    let n = first.len();
    check_length(first)?;
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(AnalysisError::LengthMismatch(n, c.len()));
    }
    Ok(n)
}

/// `C = X^T X / n` for the column-major matrix `X`.
pub fn covariance<T: Float>(columns: &[Vec<T>]) -> Result<Vec<Vec<T>>, AnalysisError> {
    let n = check_columns(columns)?;
    let mut c = vec![vec![T::zero(); columns.len()]; columns.len()];
    for i in 0..columns.len() {
        for j in i..columns.len() {
            let s = columns[i].iter().zip(&columns[j]).fold(T::zero(), |s, (&a, &b)| s + a * b) / cast(n);
            c[i][j] = s;
            c[j][i] = s;
        }
    }
    Ok(c)
}

fn norm<T: Float>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
}

fn mat_vec<T: Float>(c: &[Vec<T>], v: &[T]) -> Vec<T> {
    c.iter().map(|row| row.iter().zip(v).fold(T::zero(), |s, (&a, &b)| s + a * b)).collect()
}

/// Sums within this of zero are treated as zero by the sign rule.
pub fn sign_tolerance<T: Float>() -> T {
    T::from(1e-8).expect("representable").max(T::epsilon().sqrt())
}

/// Flips `v` so its components sum to a non-negative value; a sum within
/// [`sign_tolerance`] of zero is resolved by making the first component
/// larger than that tolerance positive.
fn fix_sign<T: Float>(v: &mut [T]) {
    let sum = v.iter().fold(T::zero(), |s, &x| s + x);
    let flip = if sum.abs() > sign_tolerance() {
        sum < T::zero()
    } else {
        v.iter().find(|x| x.abs() > sign_tolerance()).is_some_and(|x| *x < T::zero())
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Deterministic start vectors: an uneven perturbation of all ones, then
/// all ones, then each basis vector. An exact eigenvector of a smaller
/// eigenvalue traps any single start, but not all of them.
fn start_vectors<T: Float>(m: usize) -> Vec<Vec<T>> {
    let perturbed = (0..m)
        .map(|i| {
            let step = T::from(0.1 * (i + 1) as f64).expect("representable");
            if i % 2 == 0 {
                T::one() + step
            } else {
                T::one() - step * cast(2)
            }
        })
        .collect();
    let basis = (0..m).map(|k| (0..m).map(|i| if i == k { T::one() } else { T::zero() }).collect());
    [perturbed, vec![T::one(); m]].into_iter().chain(basis).collect()
}

fn iterate<T: Float>(c: &[Vec<T>], start: Vec<T>) -> Option<PrincipalAxis<T>> {
    let tol = tolerance::<T>();
    let mut v = start;
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x = *x / n0);
    for _ in 0..MAX_ITERATIONS {
        let mut w = mat_vec(c, &v);
        let len = norm(&w);
        if len == T::zero() || !len.is_finite() {
            return None;
        }
        w.iter_mut().for_each(|x| *x = *x / len);
        let delta = v.iter().zip(&w).fold(T::zero(), |s, (&a, &b)| s.max((a - b).abs()));
        v = w;
        if delta <= tol {
            fix_sign(&mut v);
            let eigenvalue = v.iter().zip(mat_vec(c, &v)).fold(T::zero(), |s, (&a, b)| s + a * b);
            return Some(PrincipalAxis { direction: v, eigenvalue });
        }
    }
    None
}

/// Leading eigenpair of the covariance of `columns`.
pub fn principal_axis<T: Float>(columns: &[Vec<T>]) -> Result<PrincipalAxis<T>, AnalysisError> {
    let c = covariance(columns)?;
    start_vectors(columns.len())
        .into_iter()
        .filter_map(|v| iterate(&c, v))
        .reduce(|best, axis| if axis.eigenvalue > best.eigenvalue { axis } else { best })
        .ok_or(AnalysisError::NoConvergence)
}

/// Projection of every row of the standardized matrix onto its leading
/// principal axis.
pub fn first_principal_component<T: Float>(columns: &[Vec<T>]) -> Result<Vec<T>, AnalysisError> {
    let axis = principal_axis(columns)?;
    let n = columns[0].len();
    Ok((0..n).map(|r| columns.iter().zip(&axis.direction).fold(T::zero(), |s, (col, &d)| s + col[r] * d)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{pearson, standardize};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The sign rule applied to an oracle eigenvector.
    fn canonical(e: &mut [f64]) {
        let sum: f64 = e.iter().sum();
        let negative =
            if sum.abs() > 1e-8 { sum < 0.0 } else { e.iter().find(|x| x.abs() > 1e-8).is_some_and(|x| *x < 0.0) };
        if negative {
            e.iter_mut().for_each(|x| *x = -*x);
        }
    }

    #[test]
    fn single_column_is_identity() {
        let z = standardize(&[3.0, 1.0, 4.0, 1.0, 5.0]).unwrap();
        let p = first_principal_component(std::slice::from_ref(&z)).unwrap();
        for (a, b) in p.iter().zip(&z) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_columns_are_collinear() {
        let z = standardize(&[2.0, 7.0, 1.0, 8.0, 2.0, 8.0]).unwrap();
        let p = first_principal_component(&[z.clone(), z.clone()]).unwrap();
        assert_abs_diff_eq!(pearson(&p, &z).unwrap().abs(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn two_by_two_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let n = rng.random_range(3..40);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let k: f64 = rng.random_range(-2.0..2.0);
            let y: Vec<f64> = x.iter().map(|v| k * v + rng.random_range(-3.0..3.0)).collect();
            let cols = [standardize(&x).unwrap(), standardize(&y).unwrap()];
            let c = covariance(&cols).unwrap();
            let (a, b, d) = (c[0][0], c[0][1], c[1][1]);
            // Largest root of the characteristic polynomial and its eigenvector.
            let lambda = (a + d) / 2.0 + (((a - d) / 2.0).powi(2) + b * b).sqrt();
            let (ex, ey) = if b.abs() > 1e-300 {
                (b, lambda - a)
            } else if a >= d {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            };
            let len = ex.hypot(ey);
            let mut e = [ex / len, ey / len];
            canonical(&mut e);
            let axis = principal_axis(&cols).unwrap();
            assert_abs_diff_eq!(axis.eigenvalue, lambda, epsilon = 1e-8);
            assert_abs_diff_eq!(axis.direction[0], e[0], epsilon = 1e-8);
            assert_abs_diff_eq!(axis.direction[1], e[1], epsilon = 1e-8);
        }
    }

    #[test]
    fn matches_symmetric_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut checked = 0;
        while checked < 100 {
            let m = rng.random_range(1..=4);
            let n = rng.random_range(5..50);
            let mixing: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let latent: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cols: Vec<Vec<f64>> = mixing
                .iter()
                .map(|w| latent.iter().map(|l| w * l + rng.random_range(-0.5..0.5)).collect())
                .map(|c: Vec<f64>| standardize(&c).unwrap())
                .collect();
            let c = covariance(&cols).unwrap();
            let eig = SymmetricEigen::new(DMatrix::from_fn(m, m, |i, j| c[i][j]));
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
            // Power iteration converges slowly on near-degenerate spectra.
            if m > 1 && eig.eigenvalues[order[1]] / eig.eigenvalues[order[0]] > 0.9 {
                continue;
            }
            let top = order[0];
            let mut e: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
            canonical(&mut e);
            let axis = principal_axis(&cols).unwrap();
            assert_abs_diff_eq!(axis.eigenvalue, eig.eigenvalues[top], epsilon = 1e-8);
            for (a, b) in axis.direction.iter().zip(&e) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
            let proj = first_principal_component(&cols).unwrap();
            for (r, p) in proj.iter().enumerate() {
                let expect: f64 = (0..m).map(|k| cols[k][r] * e[k]).sum();
                assert_abs_diff_eq!(*p, expect, epsilon = 1e-8);
            }
            checked += 1;
        }
    }

    #[test]
    fn anticorrelated_columns_restart() {
        let x = standardize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let axis = principal_axis(&[x, y]).unwrap();
        let h = 0.5f64.sqrt();
        assert_abs_diff_eq!(axis.direction[0], h, epsilon = 1e-10);
        assert_abs_diff_eq!(axis.direction[1], -h, epsilon = 1e-10);
        assert_abs_diff_eq!(axis.eigenvalue, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_matrix_does_not_converge() {
        let z = vec![0.0; 4];
        assert!(matches!(principal_axis(&[z.clone(), z]), Err(AnalysisError::NoConvergence)));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(principal_axis::<f64>(&[]), Err(AnalysisError::EmptySelection)));
        assert!(matches!(principal_axis(&[vec![1.0, 2.0], vec![1.0]]), Err(AnalysisError::LengthMismatch(2, 1))));
    }

    #[test]
    fn works_in_single_precision() {
        let x = standardize(&[1.0f32, 3.0, 2.0, 5.0, 4.0]).unwrap();
        let y = standardize(&[2.0f32, 5.0, 3.0, 9.0, 8.0]).unwrap();
        let axis = principal_axis(&[x, y]).unwrap();
        assert!((axis.direction[0] - axis.direction[1]).abs() < 1e-5);
    }
}
