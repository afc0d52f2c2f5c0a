//! Small dense helpers shared by the mesh and learning code.

use ndarray::{Array1, Array2, ArrayView1};

/// Relative pivot threshold below which a Cholesky factorization is treated
/// as singular.
const PIVOT_EPS: f64 = 1e-12;

/// Solve `A x = b` for a symmetric positive definite `A` via Cholesky.
///
/// Returns `None` when a pivot falls below `PIVOT_EPS` times the largest
/// diagonal entry.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.len(), n);
    let scale = a.diag().iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }

    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= PIVOT_EPS * scale {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }

    // forward: L y = b
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    // backward: L^T x = y
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

pub fn mean(x: ArrayView1<f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.sum() / x.len() as f64
}

/// Population variance (divides by `n`).
pub fn variance(x: ArrayView1<f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Population mean and standard deviation of a slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}
