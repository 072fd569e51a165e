//! Small dense complex-matrix helpers used throughout the crate.
//!
//! Site networks are small (tens of sites), so everything here is plain
//! O(N^3) dense arithmetic on `ndarray` arrays.

use ndarray::Array2;
use num_complex::Complex64 as C64;

/// Conjugate transpose.
pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// [a, b] = ab - ba.
pub fn commutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    a.dot(b) - b.dot(a)
}

pub fn trace(m: &Array2<C64>) -> C64 {
    m.diag().sum()
}

/// Largest elementwise deviation from Hermiticity, max |m - m^dag|.
pub fn hermiticity_defect(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Replace m by (m + m^dag)/2.
pub fn hermitize(m: &mut Array2<C64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
    }
}

pub fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let mut worst = 0.0_f64;
    for (x, y) in a.iter().zip(b.iter()) {
        worst = worst.max((x - y).norm());
    }
    worst
}

pub fn max_abs_diff_real(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for (x, y) in a.iter().zip(b.iter()) {
        worst = worst.max((x - y).abs());
    }
    worst
}

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// Uses the real-symmetric embedding [[X, -Y], [Y, X]] of m = X + iY and a
/// cyclic Jacobi sweep; each eigenvalue of m appears twice in the embedding,
/// so we take every second value of the sorted 2N-vector. Intended for the
/// small matrices this crate works with.
pub fn eigvals_hermitian(m: &Array2<C64>) -> Vec<f64> {
    let n = m.nrows();
    let mut s = ndarray::Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            s[(i, j)] = z.re;
            s[(i + n, j + n)] = z.re;
            s[(i + n, j)] = z.im;
            s[(i, j + n)] = -z.im;
        }
    }
    let mut ev = jacobi_eigvals_symmetric(&mut s);
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev.into_iter().step_by(2).collect()
}

pub fn min_eigval_hermitian(m: &Array2<C64>) -> f64 {
    eigvals_hermitian(m)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Cyclic Jacobi eigenvalue iteration for a real symmetric matrix.
/// Destroys its argument; returns unsorted eigenvalues.
fn jacobi_eigvals_symmetric(a: &mut Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    if n == 1 {
        return vec![a[(0, 0)]];
    }
    let scale = a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())).max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}
