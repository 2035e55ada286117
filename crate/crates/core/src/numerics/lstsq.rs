//! Least squares via Householder QR with column pivoting.
//!
//! Rank-deficient problems are finished with a complete orthogonal
//! decomposition so the returned solution has minimum Frobenius norm. A
//! positive ridge is handled by stacking `sqrt(ridge)·I` under the design,
//! which makes the system full rank.

use crate::numerics::{axpy, dot, Matrix};
use crate::{Error, Result};

/// Solves `min ‖A X − B‖_F² + ridge·‖X‖_F²` and returns `X` (n×p).
pub fn lstsq(a: &Matrix, b: &Matrix, ridge: f64) -> Result<Matrix> {
    let cols = (0..a.cols()).map(|j| a.col(j)).collect();
    let rhs = (0..b.cols()).map(|j| b.col(j)).collect();
    solve(cols, rhs, a.rows(), b.rows(), ridge)
}

/// As [`lstsq`] with both operands given transposed (`Aᵀ` is n×m, `Bᵀ` is
/// p×m), which avoids a transpose when the columns of `A` are stored as rows.
pub fn lstsq_transposed(at: &Matrix, bt: &Matrix, ridge: f64) -> Result<Matrix> {
    let cols = at.row_iter().map(<[f64]>::to_vec).collect();
    let rhs = bt.row_iter().map(<[f64]>::to_vec).collect();
    solve(cols, rhs, at.cols(), bt.cols(), ridge)
}

fn solve(mut cols: Vec<Vec<f64>>, mut rhs: Vec<Vec<f64>>, m: usize, b_rows: usize, ridge: f64) -> Result<Matrix> {
    let n = cols.len();
    if m == 0 || n == 0 {
        return Err(Error::pre(format!("lstsq needs a non-empty design, got {m}x{n}")));
    }
    if b_rows != m {
        return Err(Error::pre(format!(
            "lstsq right-hand side has {b_rows} rows, design has {m}"
        )));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::pre(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    let p = rhs.len();

    // Columns are the working copies, augmented with sqrt(ridge)·I when ridge > 0.
    let rows = if ridge > 0.0 { m + n } else { m };
    let root = ridge.sqrt();
    if ridge > 0.0 {
        for (j, c) in cols.iter_mut().enumerate() {
            c.extend((0..n).map(|i| if i == j { root } else { 0.0 }));
        }
        for c in rhs.iter_mut() {
            c.resize(rows, 0.0);
        }
    }

    let qr = PivotedQr::factor(&mut cols, rows);
    for r in rhs.iter_mut() {
        qr.apply_qt(&cols, r);
    }
    let rank = qr.rank();

    let mut x = Matrix::zeros(n, p);
    if rank == 0 {
        return Ok(x);
    }

    // Upper-trapezoidal R (rank × n) in row-major for the right-side reflectors.
    let mut r: Vec<Vec<f64>> = (0..rank)
        .map(|i| (0..n).map(|j| if j >= i { cols[j][i] } else { 0.0 }).collect())
        .collect();
    let z_reflectors = if rank < n {
        annihilate_trailing(&mut r, rank, n)
    } else {
        Vec::new()
    };

    for (j, c) in rhs.iter().enumerate() {
        // Back substitution with the leading rank×rank triangle.
        let mut z = vec![0.0; n];
        for i in (0..rank).rev() {
            let mut s = c[i];
            for k in (i + 1)..rank {
                s -= r[i][k] * z[k];
            }
            z[i] = s / r[i][i];
        }
        // x_perm = H_{r-1} ... H_0 z; reflectors were recorded from H_{r-1} down to H_0.
        for (k, (v, tau)) in z_reflectors.iter().enumerate().rev() {
            apply_trailing_reflector(&mut z, *tau, v, rank - 1 - k, rank);
        }
        for (k, &orig) in qr.perm.iter().enumerate() {
            x[(orig, j)] = z[k];
        }
    }
    if !x.is_finite() {
        return Err(Error::Numeric("lstsq produced non-finite coefficients".into()));
    }
    Ok(x)
}

struct PivotedQr {
    /// Column permutation: position k holds original column `perm[k]`.
    perm: Vec<usize>,
    /// Householder scalars; reflector k is stored below the diagonal of column k.
    taus: Vec<f64>,
    /// Diagonal value of R for each step (the reflector overwrites column k).
    diag: Vec<f64>,
    rows: usize,
}

impl PivotedQr {
    fn factor(cols: &mut [Vec<f64>], rows: usize) -> Self {
        let n = cols.len();
        let steps = rows.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
        let mut ref_norms = norms.clone();
        let mut taus = Vec::with_capacity(steps);
        let mut diag = Vec::with_capacity(steps);

        for k in 0..steps {
            // Pivot: largest remaining column norm, ties to the lowest position.
            let mut best = k;
            for j in (k + 1)..n {
                if norms[j] > norms[best] {
                    best = j;
                }
            }
            if best != k {
                cols.swap(k, best);
                perm.swap(k, best);
                norms.swap(k, best);
                ref_norms.swap(k, best);
            }

            let (head, tail) = cols.split_at_mut(k + 1);
            let col = &mut head[k];
            let x_norm = norm(&col[k..rows]);
            let (tau, beta) = if x_norm == 0.0 {
                (0.0, 0.0)
            } else {
                let alpha = col[k];
                let beta = if alpha >= 0.0 { -x_norm } else { x_norm };
                let v0 = alpha - beta;
                for v in col[k + 1..rows].iter_mut() {
                    *v /= v0;
                }
                col[k] = 1.0;
                ((beta - alpha) / beta, beta)
            };
            if tau != 0.0 {
                for other in tail.iter_mut() {
                    reflect(&col[k..rows], tau, &mut other[k..rows]);
                }
            }
            col[k] = beta;
            taus.push(tau);
            diag.push(beta);

            // Downdate trailing norms, recomputing when cancellation bites.
            for (j, other) in tail.iter().enumerate() {
                let jj = k + 1 + j;
                if norms[jj] == 0.0 {
                    continue;
                }
                let t = (other[k] / norms[jj]).abs();
                let t = (1.0 - t * t).max(0.0);
                let ratio = norms[jj] / ref_norms[jj];
                if t * ratio * ratio <= f64::EPSILON.sqrt() {
                    let fresh = norm(&other[k + 1..rows]);
                    norms[jj] = fresh;
                    ref_norms[jj] = fresh;
                } else {
                    norms[jj] *= t.sqrt();
                }
            }
        }
        PivotedQr {
            perm,
            taus,
            diag,
            rows,
        }
    }

    fn apply_qt(&self, cols: &[Vec<f64>], b: &mut [f64]) {
        for (k, &tau) in self.taus.iter().enumerate() {
            if tau == 0.0 {
                continue;
            }
            // Reflector vector is (1, cols[k][k+1..]).
            reflect(&cols[k][k..self.rows], tau, &mut b[k..self.rows]);
        }
    }

    fn rank(&self) -> usize {
        let Some(&first) = self.diag.first() else {
            return 0;
        };
        let lead = first.abs();
        if lead == 0.0 {
            return 0;
        }
        let tol = f64::EPSILON * (self.rows.max(self.perm.len()) as f64) * lead;
        self.diag.iter().take_while(|d| d.abs() > tol).count()
    }
}

/// `y ← (I − τ v vᵀ) y` where `v[0]` is taken as 1.
fn reflect(v: &[f64], tau: f64, y: &mut [f64]) {
    let s = tau * (y[0] + dot(&v[1..], &y[1..]));
    y[0] -= s;
    axpy(-s, &v[1..], &mut y[1..]);
}

/// Right-multiplies the rank×n trapezoid by reflectors H_{r−1}, …, H_0 so that
/// columns `rank..n` vanish. Reflector i acts on coordinates `{i} ∪ rank..n`;
/// returned in the order they were applied, each as (tail vector, τ) with the
/// head component fixed at 1.
fn annihilate_trailing(r: &mut [Vec<f64>], rank: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::with_capacity(rank);
    for i in (0..rank).rev() {
        let tail_norm = norm(&r[i][rank..n]);
        if tail_norm == 0.0 {
            out.push((vec![0.0; n - rank], 0.0));
            continue;
        }
        let alpha = r[i][i];
        let full = alpha.hypot(tail_norm);
        let beta = if alpha >= 0.0 { -full } else { full };
        let v0 = alpha - beta;
        let v: Vec<f64> = r[i][rank..n].iter().map(|x| x / v0).collect();
        let tau = (beta - alpha) / beta;
        for row in r.iter_mut().take(i + 1) {
            let mut s = row[i];
            for (vk, yk) in v.iter().zip(&row[rank..n]) {
                s += vk * yk;
            }
            s *= tau;
            row[i] -= s;
            for (vk, yk) in v.iter().zip(row[rank..n].iter_mut()) {
                *yk -= s * vk;
            }
        }
        r[i][i] = beta;
        for x in r[i][rank..n].iter_mut() {
            *x = 0.0;
        }
        out.push((v, tau));
    }
    out
}

fn apply_trailing_reflector(z: &mut [f64], tau: f64, v: &[f64], head: usize, rank: usize) {
    if tau == 0.0 {
        return;
    }
    let mut s = z[head];
    for (vk, zk) in v.iter().zip(&z[rank..]) {
        s += vk * zk;
    }
    s *= tau;
    z[head] -= s;
    for (vk, zk) in v.iter().zip(z[rank..].iter_mut()) {
        *zk -= s * vk;
    }
}

fn norm(x: &[f64]) -> f64 {
    let plain = dot(x, x);
    if plain.is_finite() && plain > f64::MIN_POSITIVE / f64::EPSILON {
        return plain.sqrt();
    }
    // Rescaled path for sums that overflow or sit near the subnormal range.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}
