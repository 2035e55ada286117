//! Dense linear algebra and randomness shared by every other module.
//!
//! All arithmetic is `f64`. Operations are pure over their inputs; only
//! [`Rng`] carries mutable state.

mod eig;
mod lstsq;
mod matrix;
mod rng;

pub use eig::{sym_eig, SymEig, MAX_QL_ITERATIONS, SYMMETRY_TOL};
pub use lstsq::{lstsq, lstsq_transposed};
pub use matrix::Matrix;
pub use rng::{derive_seed, Rng};

/// Dot product summed in four interleaved lanes. The summation order is
/// fixed, so results are reproducible, and the lanes let the loop vectorize.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    lanes(a, b, |x, y| x * y)
}

/// `‖a − b‖²` with the same lane layout as [`dot`].
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    lanes(a, b, |x, y| (x - y) * (x - y))
}

#[inline(always)]
fn lanes(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += f(x[l], y[l]);
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += f(*x, *y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += s·x`.
pub(crate) fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Natural log of the determinant of a symmetric positive-definite matrix via
/// Cholesky. `None` when the matrix is not numerically positive definite.
pub fn log_det_spd(a: &Matrix) -> Option<f64> {
    let n = a.rows();
    if n == 0 {
        return Some(0.0);
    }
    let mut l = vec![0.0; n * n];
    let mut log_det = 0.0;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        log_det += 2.0 * d.ln();
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(log_det)
}

/// Determinant by LU with partial pivoting.
pub fn det(a: &Matrix) -> f64 {
    assert!(a.is_square());
    let n = a.rows();
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let mut p = k;
        for i in (k + 1)..n {
            if m[(i, k)].abs() > m[(p, k)].abs() {
                p = i;
            }
        }
        if m[(p, k)] == 0.0 {
            return 0.0;
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            det = -det;
        }
        let pivot = m[(k, k)];
        det *= pivot;
        for i in (k + 1)..n {
            let f = m[(i, k)] / pivot;
            if f != 0.0 {
                for j in k..n {
                    m[(i, j)] -= f * m[(k, j)];
                }
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_det_matches_lu() {
        let a = Matrix::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]);
        let ld = log_det_spd(&a).unwrap();
        assert!((ld - det(&a).ln()).abs() < 1e-12);
        assert!(log_det_spd(&Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]])).is_none());
    }
}
