//! Small dense linear algebra on row-major `f64` slices.
//!
//! The matrices here are n-by-n with n at most a few hundred, so plain
//! O(n^3) routines with partial pivoting are entirely adequate and keep the
//! crate free of heavyweight dependencies.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// y = A x for a row-major n-by-n matrix.
pub fn matvec(n: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(x.len(), n);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * x[j];
        }
        y[i] = acc;
    }
    y
}

/// Solves A x = b by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot degenerates (matrix numerically singular).
pub fn solve(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[col * n + col].abs();
        for row in col + 1..n {
            let v = m[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if pivot != col {
            for k in col..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let d = m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
    }
    Some(x)
}

/// Inverse via column-by-column solves. `None` when singular.
pub fn invert(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = solve(n, a, &e)?;
        e[j] = 0.0;
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Some(inv)
}

/// Lower Cholesky factor of a symmetric matrix, or `None` when the matrix
/// is not positive definite. Doubles as the PD certificate used by the
/// construction-time checks.
pub fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[i * n + j];
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if acc <= 0.0 || !acc.is_finite() {
                    return None;
                }
                l[i * n + i] = math::sqrt(acc);
            } else {
                l[i * n + j] = acc / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// True when the symmetric matrix admits a Cholesky factorization.
pub fn is_positive_definite(n: usize, a: &[f64]) -> bool {
    cholesky(n, a).is_some()
}

/// Largest eigenvalue of a symmetric tridiagonal matrix by Sturm-sequence
/// bisection. `diag` has length n, `off` length n-1. Robust for clustered
/// spectra where power iteration crawls.
pub fn max_tridiagonal_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    debug_assert_eq!(off.len(), n - 1);
    // Count of eigenvalues strictly below x, from the signs of the
    // shifted LDL^T pivots.
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut q = diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            if q == 0.0 {
                q = 1e-300;
            }
            q = diag[i] - x - off[i - 1] * off[i - 1] / q;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    // Gershgorin enclosure.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += off[i - 1].abs();
        }
        if i + 1 < n {
            r += off[i].abs();
        }
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    hi += 1e-12 * hi.abs().max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) >= n {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Largest eigenvalue of a symmetric matrix by power iteration with a
/// deterministic start vector. Accurate to about 1e-13 relative for the
/// well-separated spectra that occur here.
pub fn max_symmetric_eigenvalue(n: usize, a: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) / (n as f64 + 1.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = matvec(n, a, &v);
        let norm = math::sqrt(w.iter().map(|x| x * x).sum::<f64>());
        if norm == 0.0 {
            return 0.0;
        }
        let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let rayleigh: f64 = next
            .iter()
            .zip(matvec(n, a, &next).iter())
            .map(|(x, y)| x * y)
            .sum();
        if (rayleigh - lambda).abs() <= 1e-14 * rayleigh.abs().max(1.0) {
            return rayleigh;
        }
        lambda = rayleigh;
        v = next;
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_invert_roundtrip() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let b = [1.0, -2.0, 0.5];
        let x = solve(3, &a, &b).unwrap();
        let back = matvec(3, &a, &x);
        for i in 0..3 {
            assert!((back[i] - b[i]).abs() < 1e-12);
        }
        let inv = invert(3, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += a[i * 3 + k] * inv[k * 3 + j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((acc - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(solve(2, &a, &[1.0, 1.0]).is_none());
        assert!(invert(2, &a).is_none());
    }

    #[test]
    fn cholesky_requires_positive_definite() {
        let pd = [2.0, -1.0, -1.0, 2.0];
        let l = cholesky(2, &pd).unwrap();
        // L L^T == A
        let a00 = l[0] * l[0];
        let a10 = l[2] * l[0];
        let a11 = l[2] * l[2] + l[3] * l[3];
        assert!((a00 - 2.0).abs() < 1e-15);
        assert!((a10 + 1.0).abs() < 1e-15);
        assert!((a11 - 2.0).abs() < 1e-15);
        let indef = [1.0, 2.0, 2.0, 1.0];
        assert!(!is_positive_definite(2, &indef));
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        // Tridiagonal (2,-1) matrix of size 4: eigenvalues 2 - 2 cos(k pi / 5).
        let n = 4;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 2.0;
            if i + 1 < n {
                a[i * n + i + 1] = -1.0;
                a[(i + 1) * n + i] = -1.0;
            }
        }
        let want = 2.0 - 2.0 * (4.0 * core::f64::consts::PI / 5.0).cos();
        let got = max_symmetric_eigenvalue(n, &a);
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }
}
