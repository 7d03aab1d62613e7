//! Small dense helpers on row-major `f64` slices.

use crate::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `Σ_r row_r row_rᵀ` for a row-major `rows × d` matrix, accumulated in row order.
pub fn gram(data: &[f64], d: usize) -> Vec<f64> {
    let mut g = vec![0.0; d * d];
    for row in data.chunks_exact(d) {
        add_outer(&mut g, 1.0, row);
    }
    g
}

/// `g += w * x xᵀ` (full square, row-major).
#[inline]
pub fn add_outer(g: &mut [f64], w: f64, x: &[f64]) {
    let d = x.len();
    for i in 0..d {
        let wi = w * x[i];
        let row = &mut g[i * d..(i + 1) * d];
        for (gij, xj) in row.iter_mut().zip(x) {
            *gij += wi * xj;
        }
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` (row-major `d × d`).
/// `a` is overwritten with its Cholesky factor and `b` with the solution.
pub fn cholesky_solve(a: &mut [f64], b: &mut [f64], d: usize) -> Result<()> {
    debug_assert_eq!(a.len(), d * d);
    debug_assert_eq!(b.len(), d);
    for j in 0..d {
        let mut diag = a[j * d + j];
        for p in 0..j {
            diag -= a[j * d + p] * a[j * d + p];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::numerical(format!(
                "matrix not positive definite at pivot {j} ({diag})"
            )));
        }
        let l = diag.sqrt();
        a[j * d + j] = l;
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for p in 0..j {
                s -= a[i * d + p] * a[j * d + p];
            }
            a[i * d + j] = s / l;
        }
    }
    for i in 0..d {
        let mut s = b[i];
        for p in 0..i {
            s -= a[i * d + p] * b[p];
        }
        b[i] = s / a[i * d + i];
    }
    for i in (0..d).rev() {
        let mut s = b[i];
        for p in (i + 1)..d {
            s -= a[p * d + i] * b[p];
        }
        b[i] = s / a[i * d + i];
    }
    Ok(())
}
