//! Symmetric eigendecomposition: Householder reduction to tridiagonal form
//! followed by the implicit QL algorithm with Wilkinson-style shifts
//! (the EISPACK `tred2`/`tql2` pair).

use crate::numerics::Matrix;
use crate::{Error, Result};

/// Per-entry tolerance on `|a_ij - a_ji|` accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// QL sweeps allowed per eigenvalue before giving up.
pub const MAX_QL_ITERATIONS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: Matrix,
}

impl SymEig {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvector `k` as an owned vector.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.col(k)
    }

    /// `Q diag(λ) Qᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.len();
        let q = &self.eigenvectors;
        let scaled = Matrix::from_fn(n, n, |i, k| q[(i, k)] * self.eigenvalues[k]);
        scaled.matmul_t(q)
    }
}

/// Decomposes a symmetric matrix.
///
/// Fails with [`Error::Precondition`] for non-square or asymmetric input and
/// with [`Error::Numeric`] if an eigenvalue needs more than
/// [`MAX_QL_ITERATIONS`] QL sweeps.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    if !a.is_square() || a.rows() == 0 {
        return Err(Error::pre(format!(
            "sym_eig needs a non-empty square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::pre("sym_eig input has non-finite entries"));
    }
    let asym = a.asymmetry().unwrap_or(0.0);
    if asym > SYMMETRY_TOL {
        return Err(Error::pre(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {asym:e})"
        )));
    }

    let n = a.rows();
    // Work on the symmetrized copy so tiny asymmetries do not leak into the result.
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (a[(i, j)] + a[(j, i)])).collect())
        .collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let eigenvalues = order.iter().map(|&k| d[k]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |i, k| v[i][order[k]]);
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

fn tred2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d.copy_from_slice(&v[n - 1]);

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in (j + 1)..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate the transformations.
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for row in v.iter_mut().take(i + 1) {
            row[i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

fn tql2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::Numeric(format!(
                        "QL iteration did not converge for eigenvalue {l} after {MAX_QL_ITERATIONS} sweeps"
                    )));
                }

                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        let h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        let b = Matrix::from_fn(n, n, |_, _| rng.normal());
        b.add(&b.transpose()).scale(0.5)
    }

    fn orthonormality_defect(q: &Matrix) -> f64 {
        q.t_matmul(q).sub(&Matrix::identity(q.cols())).max_abs()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let eig = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 1.0, 1.0]);
        assert!(orthonormality_defect(&eig.eigenvectors) < 1e-12);
    }

    #[test]
    fn diagonal_gives_axis_vectors() {
        let eig = sym_eig(&Matrix::from_diag(&[2.0, 5.0])).unwrap();
        assert_eq!(eig.eigenvalues, vec![2.0, 5.0]);
        assert!((eig.eigenvectors[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((eig.eigenvectors[(1, 1)].abs() - 1.0).abs() < 1e-14);
        assert!(eig.eigenvectors[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        for seed in 0..20 {
            let a = random_symmetric(6, seed);
            let eig = sym_eig(&a).unwrap();
            assert!(orthonormality_defect(&eig.eigenvectors) <= 1e-8);
            let resid = eig.reconstruct().sub(&a).max_abs();
            assert!(resid <= 1e-6 * a.max_abs(), "seed {seed}: {resid:e}");
            assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            let tr: f64 = eig.eigenvalues.iter().sum();
            assert!((tr - a.trace()).abs() <= 1e-8 * a.trace().abs().max(1.0));
        }
    }

    #[test]
    fn handles_repeated_and_larger_spectra() {
        let a = random_symmetric(120, 7);
        let eig = sym_eig(&a).unwrap();
        assert!(orthonormality_defect(&eig.eigenvectors) <= 1e-8);
        assert!(eig.reconstruct().sub(&a).max_abs() <= 1e-6 * a.max_abs());

        let ones = Matrix::filled(5, 5, 1.0);
        let eig = sym_eig(&ones).unwrap();
        assert!((eig.eigenvalues[4] - 5.0).abs() < 1e-12);
        assert!(eig.eigenvalues[..4].iter().all(|l| l.abs() < 1e-12));
    }

    #[test]
    fn one_by_one() {
        let eig = sym_eig(&Matrix::from_rows(&[[3.5]])).unwrap();
        assert_eq!(eig.eigenvalues, vec![3.5]);
        assert_eq!(eig.eigenvectors[(0, 0)].abs(), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            sym_eig(&Matrix::zeros(2, 3)),
            Err(Error::Precondition(_))
        ));
        let asym = Matrix::from_rows(&[[1.0, 2.0], [2.1, 1.0]]);
        assert!(matches!(sym_eig(&asym), Err(Error::Precondition(_))));
    }
}
