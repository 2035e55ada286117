//! Determinantal point processes over the neurons of one layer.
//!
//! A [`DppKernel`] stores the unscaled matrix `L' + εI` together with its
//! eigendecomposition and a scale `γ`; the effective kernel is
//! `L = γ (L' + εI)`. Rescaling therefore never refactorizes.
//!
//! Samplers:
//! - [`sample_dpp`]: the spectral sampler (eigenvector selection by
//!   Bernoulli trials, then sequential projection).
//! - [`sample_kdpp`]: fixed-size variant; eigenvectors are chosen with
//!   elementary symmetric polynomials evaluated in log space.
//! - [`sample_best_of_m`], [`greedy_map`]: highest-likelihood and greedy mode
//!   approximations.
//! - [`enumerate_dpp`]: exhaustive probabilities for small ground sets, used
//!   as a test oracle.

use std::fmt::Write as _;


use crate::mlp::ActivationMatrix;
use crate::numerics::{det, log_det_spd, sym_eig, Matrix, Rng, SymEig, SYMMETRY_TOL};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.01;

/// Largest ground set [`enumerate_dpp`] accepts.
pub const MAX_ENUMERATION: usize = 16;

/// Column norms below this trigger a second Gram-Schmidt pass.
const REORTH_TOL: f64 = 1e-10;

/// RBF bandwidth: either fixed or `10 / instance_count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, instance_count: usize) -> f64 {
        match self {
            Bandwidth::Auto => 10.0 / instance_count as f64,
            Bandwidth::Fixed(b) => b,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DppKernel {
    base: Matrix,
    beta: Option<f64>,
    epsilon: f64,
    gamma: f64,
    eig: SymEig,
}

impl DppKernel {
    /// Wraps an arbitrary symmetric PSD matrix as a kernel with `γ = 1`.
    pub fn from_matrix(base: Matrix) -> Result<Self> {
        Self::assemble(base, None, 0.0, 1.0)
    }

    fn assemble(base: Matrix, beta: Option<f64>, epsilon: f64, gamma: f64) -> Result<Self> {
        if !base.is_square() || base.rows() == 0 {
            return Err(Error::pre("kernel must be a non-empty square matrix"));
        }
        if !base.is_finite() {
            return Err(Error::pre("kernel has non-finite entries"));
        }
        match base.asymmetry() {
            Some(a) if a <= SYMMETRY_TOL => {}
            _ => return Err(Error::pre("kernel is not symmetric")),
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::pre(format!("gamma must be > 0, got {gamma}")));
        }
        let eig = sym_eig(&base)?;
        if eig.eigenvalues[0] < -1e-9 {
            return Err(Error::pre(format!(
                "kernel is not positive semidefinite (min eigenvalue {:e})",
                eig.eigenvalues[0]
            )));
        }
        Ok(Self {
            base,
            beta,
            epsilon,
            gamma,
            eig,
        })
    }

    pub fn n(&self) -> usize {
        self.base.rows()
    }

    /// `L' + εI` before γ-scaling.
    pub fn base(&self) -> &Matrix {
        &self.base
    }

    /// Effective kernel `γ (L' + εI)`.
    pub fn matrix(&self) -> Matrix {
        self.base.scale(self.gamma)
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Eigenvalues of the effective kernel, ascending, clamped at 0.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eig
            .eigenvalues
            .iter()
            .map(|&l| (self.gamma * l).max(0.0))
            .collect()
    }

    pub fn base_eig(&self) -> &SymEig {
        &self.eig
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::pre(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(Self {
            gamma,
            ..self.clone()
        })
    }

    /// `log det(L_Y)` for the effective kernel; `-inf` if `L_Y` is singular.
    pub fn log_det(&self, subset: &[usize]) -> f64 {
        let sub = self.base.principal(subset);
        match log_det_spd(&sub) {
            Some(ld) => ld + subset.len() as f64 * self.gamma.ln(),
            None => f64::NEG_INFINITY,
        }
    }

    fn subset(&self, mut indices: Vec<usize>) -> NeuronSubset {
        indices.sort_unstable();
        let log_det = self.log_det(&indices);
        NeuronSubset { indices, log_det }
    }
}

/// Sorted neuron indices together with `log det(L_Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronSubset {
    pub indices: Vec<usize>,
    pub log_det: f64,
}

impl NeuronSubset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// RBF kernel over activation vectors: `L'_ij = exp(−β‖v_i − v_j‖²)`, plus `εI`.
pub fn build_kernel(acts: &ActivationMatrix, beta: Bandwidth, epsilon: f64) -> Result<DppKernel> {
    let v = &acts.values;
    let (n, t) = v.shape();
    if n == 0 || t == 0 {
        return Err(Error::pre("activation matrix must have at least one neuron and one instance"));
    }
    if !v.is_finite() {
        return Err(Error::pre("activation matrix has non-finite entries"));
    }
    let beta = beta.resolve(t);
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::pre(format!("beta must be > 0, got {beta}")));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::pre(format!("epsilon must be >= 0, got {epsilon}")));
    }

    // ‖v_i − v_j‖² = g_ii + g_jj − 2 g_ij from one Gram product, clamped at
    // zero against rounding; the diagonal is set exactly.
    let gram = v.matmul_t(v);
    let mut base = Matrix::from_fn(n, n, |i, j| {
        let d2 = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0);
        (-beta * d2).exp()
    });
    for i in 0..n {
        base[(i, i)] = 1.0 + epsilon;
    }
    // The Gram product is symmetric only up to rounding.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = base[(i, j)];
            base[(j, i)] = m;
        }
    }
    DppKernel::assemble(base, Some(beta), epsilon, 1.0)
}

/// `E|Y| = Σ λ/(1+λ)` over the effective kernel's eigenvalues.
pub fn expected_size(k: &DppKernel) -> f64 {
    k.eigenvalues().iter().map(|&l| l / (1.0 + l)).sum()
}

fn expected_size_at(base_eigs: &[f64], gamma: f64) -> f64 {
    base_eigs
        .iter()
        .map(|&l| {
            let l = (gamma * l).max(0.0);
            l / (1.0 + l)
        })
        .sum()
}

/// How γ is chosen to steer the expected sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescaleMode {
    /// Closed form `γ = (k/(n−k))·((n−k')/k')` with `k'` the unscaled expected
    /// size. Exact only for flat spectra.
    ClosedForm,
    /// Bisection on `γ ∈ [1e−12, 1e12]` until the expected size is within
    /// `1e−10` of the target.
    Exact,
}

/// Returns a copy of `k` with γ chosen so the expected DPP size is `target`.
/// γ is always computed relative to the unscaled kernel.
pub fn rescale_to_k(k: &DppKernel, target: f64, mode: RescaleMode) -> Result<DppKernel> {
    let n = k.n() as f64;
    if !(target > 0.0 && target < n) {
        return Err(Error::pre(format!("rescale target {target} must lie in (0, {n})")));
    }
    let base_eigs = &k.eig.eigenvalues;
    match mode {
        RescaleMode::ClosedForm => {
            let k0 = expected_size_at(base_eigs, 1.0);
            if !(k0 > 0.0 && k0 < n) {
                return Err(Error::Numeric(format!(
                    "unscaled expected size {k0} is outside (0, {n})"
                )));
            }
            let gamma = if target == k0 {
                1.0
            } else {
                (target / (n - target)) * ((n - k0) / k0)
            };
            k.with_gamma(gamma)
        }
        RescaleMode::Exact => {
            let (mut lo, mut hi) = (1e-12f64.ln(), 1e12f64.ln());
            let f = |lg: f64| expected_size_at(base_eigs, lg.exp()) - target;
            if f(lo) > 0.0 || f(hi) < 0.0 {
                return Err(Error::Numeric(format!(
                    "target size {target} is not bracketed by gamma in [1e-12, 1e12]"
                )));
            }
            for _ in 0..500 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm.abs() < 1e-10 {
                    return k.with_gamma(mid.exp());
                }
                if fm < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Err(Error::Numeric("gamma bisection did not converge".into()))
        }
    }
}

/// Draws from the DPP with kernel `L`: `P(Y) = det(L_Y) / det(L + I)`.
pub fn sample_dpp(k: &DppKernel, rng: &mut Rng) -> NeuronSubset {
    let eigs = k.eigenvalues();
    let chosen: Vec<usize> = eigs
        .iter()
        .enumerate()
        .filter_map(|(i, &l)| (rng.uniform() < l / (1.0 + l)).then_some(i))
        .collect();
    let items = project_sample(&k.eig.eigenvectors, &chosen, rng);
    k.subset(items)
}

/// Draws exactly `size` items with `P(Y) ∝ det(L_Y)`.
pub fn sample_kdpp(k: &DppKernel, size: usize, rng: &mut Rng) -> Result<NeuronSubset> {
    let n = k.n();
    if size == 0 || size > n {
        return Err(Error::pre(format!("k-DPP size {size} must lie in 1..={n}")));
    }
    let eigs = k.eigenvalues();
    let log_e = log_elementary_symmetric(&eigs, size);
    if log_e[size][n] == f64::NEG_INFINITY {
        return Err(Error::Numeric(format!(
            "k-DPP size {size} exceeds the kernel's numerical rank"
        )));
    }
    let mut remaining = size;
    let mut chosen = Vec::with_capacity(size);
    for m in (1..=n).rev() {
        if remaining == 0 {
            break;
        }
        let ll = log_lambda(eigs[m - 1]);
        let p = (ll + log_e[remaining - 1][m - 1] - log_e[remaining][m]).exp();
        if rng.uniform() < p {
            chosen.push(m - 1);
            remaining -= 1;
        }
    }
    debug_assert_eq!(remaining, 0);
    let items = project_sample(&k.eig.eigenvectors, &chosen, rng);
    Ok(k.subset(items))
}

fn log_lambda(l: f64) -> f64 {
    if l > 0.0 {
        l.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `table[l][m] = ln e_l(λ_1, …, λ_m)` for `l ≤ k`, `m ≤ n`, via the recurrence
/// `e_l(m) = e_l(m−1) + λ_m e_{l−1}(m−1)`.
pub fn log_elementary_symmetric(eigs: &[f64], k: usize) -> Vec<Vec<f64>> {
    let n = eigs.len();
    let mut table = vec![vec![f64::NEG_INFINITY; n + 1]; k + 1];
    table[0].iter_mut().for_each(|v| *v = 0.0);
    for l in 1..=k {
        for m in 1..=n {
            table[l][m] = log_add_exp(table[l][m - 1], log_lambda(eigs[m - 1]) + table[l - 1][m - 1]);
        }
    }
    table
}

/// Second phase of the spectral sampler: picks one item per selected
/// eigenvector, projecting the basis away from each chosen item.
fn project_sample(vectors: &Matrix, chosen: &[usize], rng: &mut Rng) -> Vec<usize> {
    let n = vectors.rows();
    let mut basis: Vec<Vec<f64>> = chosen.iter().map(|&c| vectors.col(c)).collect();
    let mut items = Vec::with_capacity(chosen.len());
    while !basis.is_empty() {
        let weights: Vec<f64> = (0..n)
            .map(|i| basis.iter().map(|v| v[i] * v[i]).sum::<f64>())
            .collect();
        let item = rng.weighted(&weights);
        items.push(item);

        // Eliminate the item's coordinate using the column with the largest
        // entry there, then drop that column.
        let pivot = (0..basis.len())
            .max_by(|&a, &b| basis[a][item].abs().total_cmp(&basis[b][item].abs()))
            .unwrap();
        let pv = basis.swap_remove(pivot);
        let denom = pv[item];
        if denom != 0.0 {
            for v in basis.iter_mut() {
                let f = v[item] / denom;
                if f != 0.0 {
                    for (x, p) in v.iter_mut().zip(&pv) {
                        *x -= f * p;
                    }
                }
                v[item] = 0.0;
            }
        }
        orthonormalize(&mut basis);
    }
    items
}

/// Modified Gram-Schmidt, with a second pass for columns whose norm
/// collapses (below [`REORTH_TOL`] or under 70% of its pre-projection norm).
fn orthonormalize(basis: &mut [Vec<f64>]) {
    for j in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(j);
        let v = &mut rest[0];
        let before = dot(v, v).sqrt();
        for q in done.iter() {
            let c = dot(q, v);
            axpy(v, -c, q);
        }
        let mut norm = dot(v, v).sqrt();
        if norm < REORTH_TOL || norm < 0.7 * before {
            for q in done.iter() {
                let c = dot(q, v);
                axpy(v, -c, q);
            }
            norm = dot(v, v).sqrt();
        }
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Draws `m` k-DPP samples and keeps the one with the largest `log det(L_Y)`;
/// ties go to the earliest draw.
pub fn sample_best_of_m(k: &DppKernel, size: usize, m: usize, rng: &mut Rng) -> Result<NeuronSubset> {
    if m == 0 {
        return Err(Error::pre("best-of-m needs m >= 1"));
    }
    let mut best = sample_kdpp(k, size, rng)?;
    for _ in 1..m {
        let cand = sample_kdpp(k, size, rng)?;
        if cand.log_det > best.log_det {
            best = cand;
        }
    }
    Ok(best)
}

/// Greedy mode approximation: repeatedly adds the item that maximizes
/// `det(L_{Y ∪ {i}})`, ties to the lowest index. Uses incremental Cholesky,
/// where `d_i²` is the Schur complement of candidate `i`.
pub fn greedy_map(k: &DppKernel, size: usize) -> Result<NeuronSubset> {
    let n = k.n();
    if size == 0 || size > n {
        return Err(Error::pre(format!("greedy size {size} must lie in 1..={n}")));
    }
    let l = k.matrix();
    let mut d2: Vec<f64> = (0..n).map(|i| l[(i, i)]).collect();
    let mut chol: Vec<Vec<f64>> = vec![Vec::with_capacity(size); n];
    let mut selected = vec![false; n];
    let mut picks = Vec::with_capacity(size);
    for _ in 0..size {
        let mut best = usize::MAX;
        for i in 0..n {
            if !selected[i] && (best == usize::MAX || d2[i] > d2[best]) {
                best = i;
            }
        }
        selected[best] = true;
        picks.push(best);
        let dj = d2[best].max(0.0).sqrt();
        let cj = chol[best].clone();
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let e = if dj > 0.0 {
                (l[(best, i)] - dot(&cj, &chol[i])) / dj
            } else {
                0.0
            };
            chol[i].push(e);
            d2[i] -= e * e;
        }
    }
    Ok(k.subset(picks))
}

/// One subset with its exact probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Enumerated {
    pub indices: Vec<usize>,
    pub probability: f64,
}

/// Exact probabilities of every subset (or every subset of `size`), computed
/// from principal-minor determinants by LU. Subsets are listed by increasing
/// bitmask over the ground set.
pub fn enumerate_dpp(k: &DppKernel, size: Option<usize>) -> Result<Vec<Enumerated>> {
    let n = k.n();
    if n > MAX_ENUMERATION {
        return Err(Error::pre(format!(
            "enumeration refused for n = {n} > {MAX_ENUMERATION}"
        )));
    }
    if let Some(s) = size {
        if s > n {
            return Err(Error::pre(format!("size {s} exceeds ground set {n}")));
        }
    }
    let l = k.matrix();
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << n) {
        if let Some(s) = size {
            if mask.count_ones() as usize != s {
                continue;
            }
        }
        let idx: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let d = if idx.is_empty() { 1.0 } else { det(&l.principal(&idx)) };
        out.push(Enumerated {
            indices: idx,
            probability: d.max(0.0),
        });
    }
    let z = match size {
        None => det(&l.add(&Matrix::identity(n))),
        Some(_) => out.iter().map(|e| e.probability).sum(),
    };
    if !(z > 0.0) {
        return Err(Error::Numeric("enumeration normalizer is not positive".into()));
    }
    out.iter_mut().for_each(|e| e.probability /= z);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Kernel container

pub const KERNEL_HEADER: &str = "divnet-kernel v1";

/// Text container: a header line, `n`, `beta` (or `none`), `epsilon`, `gamma`,
/// then `n` rows of the unscaled matrix `L' + εI`, whitespace separated, in
/// shortest round-trip decimal form.
pub fn export_kernel(k: &DppKernel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{KERNEL_HEADER}");
    let _ = writeln!(s, "n {}", k.n());
    match k.beta {
        Some(b) => {
            let _ = writeln!(s, "beta {b:?}");
        }
        None => {
            let _ = writeln!(s, "beta none");
        }
    }
    let _ = writeln!(s, "epsilon {:?}", k.epsilon);
    let _ = writeln!(s, "gamma {:?}", k.gamma);
    for row in k.base.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn import_kernel(text: &str) -> Result<DppKernel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .ok_or_else(|| Error::line(0, format!("missing {what}")))
    };
    let (ln, header) = next("header")?;
    if header != KERNEL_HEADER {
        return Err(Error::line(ln, format!("expected header {KERNEL_HEADER:?}")));
    }
    fn field<'a>(ln: usize, line: &'a str, key: &str) -> Result<&'a str> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::trim)
            .ok_or_else(|| Error::line(ln, format!("expected `{key} <value>`")))
    }
    fn num(ln: usize, tok: &str) -> Result<f64> {
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::line(ln, format!("invalid number {tok:?}")))
    }
    let (ln, l) = next("n")?;
    let n: usize = field(ln, l, "n")?
        .parse()
        .map_err(|_| Error::line(ln, "invalid n"))?;
    if n == 0 || n > 100_000 {
        return Err(Error::line(ln, format!("implausible n = {n}")));
    }
    let (ln, l) = next("beta")?;
    let beta = match field(ln, l, "beta")? {
        "none" => None,
        t => Some(num(ln, t)?),
    };
    let (ln, l) = next("epsilon")?;
    let epsilon = num(ln, field(ln, l, "epsilon")?)?;
    let (ln, l) = next("gamma")?;
    let gamma = num(ln, field(ln, l, "gamma")?)?;
    let mut data = Vec::with_capacity(n.saturating_mul(n).min(1 << 24));
    for r in 0..n {
        let (ln, l) = next(&format!("matrix row {r}"))?;
        let before = data.len();
        for tok in l.split_whitespace() {
            data.push(num(ln, tok)?);
        }
        if data.len() - before != n {
            return Err(Error::line(ln, format!("row {r} has {} values, expected {n}", data.len() - before)));
        }
    }
    let base = Matrix::from_vec(n, n, data)?;
    DppKernel::assemble(base, beta, epsilon, gamma)
}
