//! Reference computations for the integration and acceptance tests. Nothing
//! here calls the library's linear algebra, so agreement is a real check.
#![allow(dead_code)]

use std::path::PathBuf;

use divnet::{Matrix, Rng};

/// Workspace `data/` directory.
pub fn data_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Workspace `presets/` directory.
pub fn presets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m = a.to_vec();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        if m[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        d *= m[c][c];
        for r in (c + 1)..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    d
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(p, c);
        let piv = m[c][c];
        assert!(piv != 0.0, "singular matrix in oracle");
        for v in m[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    a.iter()
        .map(|r| (0..b[0].len()).map(|j| (0..inner).map(|k| r[k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn principal(a: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| idx.iter().map(|&j| a[i][j]).collect()).collect()
}

/// Random symmetric positive-definite matrix `s·BBᵀ/n + δI` with `s` and
/// `δ` drawn per kernel so that expected sizes vary.
pub fn random_pd(n: usize, rng: &mut Rng) -> Matrix {
    let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
    let s = 0.3 + 2.0 * rng.uniform();
    let delta = 0.05 + 0.3 * rng.uniform();
    Matrix::from_fn(n, n, |i, j| {
        let dot: f64 = (0..n).map(|k| b[i][k] * b[j][k]).sum();
        s * dot / n as f64 + if i == j { delta } else { 0.0 }
    })
}

/// Indices of the set bits of `mask`.
pub fn members(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

pub fn mask_of(idx: &[usize]) -> usize {
    idx.iter().fold(0, |m, &i| m | 1 << i)
}

/// `P(Y) = det(L_Y) / det(L + I)` for every subset, indexed by bitmask.
pub fn dpp_probabilities(l: &Matrix) -> Vec<f64> {
    let n = l.rows();
    let rows = to_rows(l);
    let mut lpi = rows.clone();
    for (i, r) in lpi.iter_mut().enumerate() {
        r[i] += 1.0;
    }
    let z = det(&lpi);
    (0..1usize << n)
        .map(|mask| {
            let idx = members(mask, n);
            if idx.is_empty() {
                1.0 / z
            } else {
                det(&principal(&rows, &idx)) / z
            }
        })
        .collect()
}

/// k-DPP probabilities: `det(L_Y)` normalised over subsets of size `k`;
/// other masks get zero.
pub fn kdpp_probabilities(l: &Matrix, k: usize) -> Vec<f64> {
    let n = l.rows();
    let rows = to_rows(l);
    let mut p: Vec<f64> = (0..1usize << n)
        .map(|mask| {
            if (mask as u64).count_ones() as usize == k {
                det(&principal(&rows, &members(mask, n)))
            } else {
                0.0
            }
        })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

pub fn total_variation(p: &[f64], counts: &[usize], draws: usize) -> f64 {
    0.5 * p
        .iter()
        .zip(counts)
        .map(|(p, &c)| (p - c as f64 / draws as f64).abs())
        .sum::<f64>()
}
