//! Independent numerical oracles for the integration tests. Nothing here
//! shares code with the implementation paths it checks.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// descending. Intended for the small dimensions used in the tests.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let scale = a.amax().max(1e-300);
    for _sweep in 0..200 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        if off < 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
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
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eig
}

/// Central finite difference of a matrix-valued function of coordinates.
pub fn fd_matrix(
    f: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    x: &DVector<f64>,
    direction: usize,
    step: f64,
) -> DMatrix<f64> {
    let mut xp = x.clone();
    let mut xm = x.clone();
    xp[direction] += step;
    xm[direction] -= step;
    (f(&xp) - f(&xm)) / (2.0 * step)
}

/// Central finite difference of a vector-valued function of coordinates.
pub fn fd_vector(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    direction: usize,
    step: f64,
) -> DVector<f64> {
    let mut xp = x.clone();
    let mut xm = x.clone();
    xp[direction] += step;
    xm[direction] -= step;
    (f(&xp) - f(&xm)) / (2.0 * step)
}
