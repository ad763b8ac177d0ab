//! Resolving the component order of an EM estimate.
//!
//! EM returns the `2^K` mixture means in arbitrary order. The zero mean is
//! the one of smallest magnitude; of the remaining `2^K - 1` means, the K
//! singletons `h_1 .. h_K` are identified by how the others decompose into
//! subset sums of them. Four formulations are provided:
//!
//! * constrained least squares: `h` drawn from the estimates themselves,
//!   every other mean matched to a subset sum by an optimal assignment;
//! * unconstrained least squares: for every assignment of means to subset
//!   rows, `h` is the linear least-squares fit;
//! * two `K = 4` subset searches using identities that only the true
//!   singletons satisfy.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use itertools::Itertools;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};

/// Relative tolerance below which two magnitudes count as equal.
pub const MAGNITUDE_TOL: f64 = 1e-12;

/// Largest K handled by the assignment-based least-squares search.
pub const MAX_LS_CONSTRAINED_K: usize = 4;
/// Largest K handled by exhaustive permutation search.
pub const MAX_LS_UNCONSTRAINED_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReorderMethod {
    #[default]
    LsConstrained,
    LsUnconstrained,
    /// `K = 4`: four means plus a fifth whose difference vanishes.
    SubsetK4,
    /// `K = 4`: ordered five-subset with the smallest element negated.
    SubsetK4Literal,
    /// `K = 4`: seven times the four-subset sum against the other eleven.
    WeightedK4,
}

impl std::fmt::Display for ReorderMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::LsConstrained => "ls-constrained",
            Self::LsUnconstrained => "ls-unconstrained",
            Self::SubsetK4 => "subset-k4",
            Self::SubsetK4Literal => "subset-k4-literal",
            Self::WeightedK4 => "weighted-k4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReorderResult {
    /// Singleton means ordered by decreasing magnitude.
    pub h: Vec<Complex64>,
    pub residual: f64,
    pub method: ReorderMethod,
    /// Set when the requested method had no feasible solution and the
    /// constrained least-squares search was used instead.
    pub fell_back: bool,
}

fn phase(z: Complex64) -> f64 {
    let a = z.arg();
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Orders by decreasing magnitude; magnitudes within [`MAGNITUDE_TOL`]
/// (relative) are ordered by increasing phase in `[0, 2pi)`.
pub fn magnitude_order(a: &Complex64, b: &Complex64) -> Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    if (ma - mb).abs() > MAGNITUDE_TOL * ma.max(mb) {
        mb.partial_cmp(&ma).unwrap_or(Ordering::Equal)
    } else {
        phase(*a).partial_cmp(&phase(*b)).unwrap_or(Ordering::Equal)
    }
}

fn sorted_by_magnitude(mut v: Vec<Complex64>) -> Vec<Complex64> {
    v.sort_by(magnitude_order);
    v
}

fn strictly_ordered(v: &[Complex64]) -> bool {
    v.windows(2)
        .all(|w| w[0].norm() - w[1].norm() > MAGNITUDE_TOL * w[0].norm())
}

/// Binary subset-membership matrix: all nonzero K-bit rows, ordered by
/// number of ones, then lexicographically by the positions of the ones
/// (`e1, e2, .., eK, e1+e2, e1+e3, .., e1+..+eK`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureMatrix {
    pub k: usize,
    pub rows: Vec<Vec<u8>>,
}

impl StructureMatrix {
    pub fn new(k: usize) -> Self {
        let mut rows = Vec::with_capacity((1 << k) - 1);
        for weight in 1..=k {
            for ones in (0..k).combinations(weight) {
                let mut row = vec![0u8; k];
                for i in ones {
                    row[i] = 1;
                }
                rows.push(row);
            }
        }
        Self { k, rows }
    }

    /// `A x` for a complex vector `x` of length K.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .zip(x)
                    .filter(|(&b, _)| b == 1)
                    .map(|(_, v)| *v)
                    .sum()
            })
            .collect()
    }

    /// `A^T A`, row-major `K x K`.
    pub fn gram(&self) -> Vec<f64> {
        let k = self.k;
        let mut g = vec![0.0; k * k];
        for r in &self.rows {
            for i in 0..k {
                for j in 0..k {
                    g[i * k + j] += (r[i] * r[j]) as f64;
                }
            }
        }
        g
    }

    /// `(A^T A)^{-1} A^T`, row-major `K x (2^K - 1)`.
    pub fn pseudo_inverse(&self) -> Vec<f64> {
        let k = self.k;
        let inv = invert(&self.gram(), k);
        let m = self.rows.len();
        let mut out = vec![0.0; k * m];
        for i in 0..k {
            for (c, row) in self.rows.iter().enumerate() {
                out[i * m + c] = (0..k).map(|j| inv[i * k + j] * row[j] as f64).sum();
            }
        }
        out
    }
}

/// Gauss-Jordan inverse of a small well-conditioned matrix.
fn invert(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv: Vec<f64> = (0..n * n)
        .map(|i| if i / n == i % n { 1.0 } else { 0.0 })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        for j in 0..n {
            m.swap(col * n + j, pivot * n + j);
            inv.swap(col * n + j, pivot * n + j);
        }
        let d = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = m[i * n + col];
                for j in 0..n {
                    m[i * n + j] -= f * m[col * n + j];
                    inv[i * n + j] -= f * inv[col * n + j];
                }
            }
        }
    }
    inv
}

/// Index of the estimate closest to zero (lowest index on ties).
pub fn find_zero_mode(eta: &[Complex64]) -> Result<usize> {
    if eta.is_empty() {
        return Err(Error::Shape("empty mean vector".into()));
    }
    let mut best = 0;
    for (i, z) in eta.iter().enumerate().skip(1) {
        if z.norm() < eta[best].norm() {
            best = i;
        }
    }
    Ok(best)
}

fn check_candidates(eta_i: &[Complex64], k: usize) -> Result<()> {
    if k == 0 || eta_i.len() != (1 << k) - 1 {
        return Err(Error::Shape(format!(
            "expected {} nonzero means for K={k}, got {}",
            (1usize << k).saturating_sub(1),
            eta_i.len()
        )));
    }
    Ok(())
}

fn require_k4(eta_i: &[Complex64]) -> Result<()> {
    check_candidates(eta_i, 4)
}

/// Least squares with the singletons restricted to the candidate set.
///
/// Minimizes `|| P A phi - eta_i ||` over ordered K-subsets `phi` of the
/// candidates and all permutations `P`. For each `phi` the best `P` is an
/// assignment problem with cost `|(A phi)_r - eta_j|^2`.
pub fn reorder_ls_constrained(eta_i: &[Complex64], k: usize) -> Result<ReorderResult> {
    check_candidates(eta_i, k)?;
    if k > MAX_LS_CONSTRAINED_K {
        return Err(Error::Capability(format!(
            "constrained least squares supports K <= {MAX_LS_CONSTRAINED_K}; use a subset method"
        )));
    }
    let a = StructureMatrix::new(k);
    let n = eta_i.len();
    let mut cost = vec![0.0; n * n];
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    for subset in (0..n).combinations(k) {
        let phi = sorted_by_magnitude(subset.iter().map(|&i| eta_i[i]).collect());
        let fitted = a.apply(&phi);
        for (r, f) in fitted.iter().enumerate() {
            for (j, e) in eta_i.iter().enumerate() {
                cost[r * n + j] = (f - e).norm_sqr();
            }
        }
        let (total, _) = min_cost_assignment(&cost, n);
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, phi));
        }
    }
    let (total, h) = best.expect("at least one subset");
    Ok(ReorderResult {
        h,
        residual: total.max(0.0).sqrt(),
        method: ReorderMethod::LsConstrained,
        fell_back: false,
    })
}

/// Least squares with free singletons: every permutation gets the closed
/// form fit `phi = (A^T A)^{-1} A^T P^T eta_i`; the permutation with the
/// smallest residual among fits with strictly decreasing magnitudes wins.
pub fn reorder_ls_unconstrained(eta_i: &[Complex64], k: usize) -> Result<ReorderResult> {
    check_candidates(eta_i, k)?;
    if k > MAX_LS_UNCONSTRAINED_K {
        return Err(Error::Capability(format!(
            "unconstrained least squares enumerates all permutations and supports K <= {MAX_LS_UNCONSTRAINED_K}"
        )));
    }
    let a = StructureMatrix::new(k);
    let pinv = a.pseudo_inverse();
    let n = eta_i.len();
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    let mut phi = vec![Complex64::new(0.0, 0.0); k];
    for perm in (0..n).permutations(n) {
        for (r, &j) in perm.iter().enumerate() {
            v[r] = eta_i[j];
        }
        for (i, p) in phi.iter_mut().enumerate() {
            *p = pinv[i * n..(i + 1) * n]
                .iter()
                .zip(&v)
                .map(|(w, x)| x * *w)
                .sum();
        }
        if !strictly_ordered(&phi) {
            continue;
        }
        let resid2: f64 = a
            .apply(&phi)
            .iter()
            .zip(&v)
            .map(|(f, x)| (f - x).norm_sqr())
            .sum();
        if best.as_ref().is_none_or(|(b, _)| resid2 < *b) {
            best = Some((resid2, phi.clone()));
        }
    }
    match best {
        Some((resid2, h)) => Ok(ReorderResult {
            h,
            residual: resid2.sqrt(),
            method: ReorderMethod::LsUnconstrained,
            fell_back: false,
        }),
        None => {
            let mut r = reorder_ls_constrained(eta_i, k)?;
            r.method = ReorderMethod::LsUnconstrained;
            r.fell_back = true;
            Ok(r)
        }
    }
}

/// `K = 4`: the four singletons are the unique four candidates whose sum
/// equals another candidate (the all-drones mean).
pub fn reorder_subset_k4(eta_i: &[Complex64]) -> Result<ReorderResult> {
    require_k4(eta_i)?;
    let n = eta_i.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in (0..n).combinations(4) {
        let sum: Complex64 = subset.iter().map(|&i| eta_i[i]).sum();
        for c in (0..n).filter(|c| !subset.contains(c)) {
            let cost = (sum - eta_i[c]).norm();
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, subset.clone()));
            }
        }
    }
    let (cost, subset) = best.expect("nonempty search");
    Ok(ReorderResult {
        h: sorted_by_magnitude(subset.iter().map(|&i| eta_i[i]).collect()),
        residual: cost,
        method: ReorderMethod::SubsetK4,
        fell_back: false,
    })
}

/// `K = 4`, taken literally: over magnitude-ordered five-subsets minimize
/// `|phi_1 + phi_2 + phi_3 + phi_4 - phi_5|`.
pub fn reorder_subset_k4_literal(eta_i: &[Complex64]) -> Result<ReorderResult> {
    require_k4(eta_i)?;
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    for subset in (0..eta_i.len()).combinations(5) {
        let phi = sorted_by_magnitude(subset.iter().map(|&i| eta_i[i]).collect());
        let cost = (phi[0] + phi[1] + phi[2] + phi[3] - phi[4]).norm();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, phi));
        }
    }
    let (cost, mut phi) = best.expect("nonempty search");
    phi.truncate(4);
    Ok(ReorderResult {
        h: phi,
        residual: cost,
        method: ReorderMethod::SubsetK4Literal,
        fell_back: false,
    })
}

/// `K = 4`: each drone appears in 7 of the 11 non-singleton means, so the
/// singletons satisfy `7 sum(phi) = sum(rest)`.
pub fn reorder_weighted_k4(eta_i: &[Complex64]) -> Result<ReorderResult> {
    require_k4(eta_i)?;
    let total: Complex64 = eta_i.iter().sum();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in (0..eta_i.len()).combinations(4) {
        let sum: Complex64 = subset.iter().map(|&i| eta_i[i]).sum();
        let cost = (sum * 7.0 - (total - sum)).norm();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, subset));
        }
    }
    let (cost, subset) = best.expect("nonempty search");
    Ok(ReorderResult {
        h: sorted_by_magnitude(subset.iter().map(|&i| eta_i[i]).collect()),
        residual: cost,
        method: ReorderMethod::WeightedK4,
        fell_back: false,
    })
}

/// Removes the zero mean from a full `2^K` estimate and recovers the K
/// singleton means with `method`.
pub fn reorder(eta_hat: &[Complex64], k: usize, method: ReorderMethod) -> Result<ReorderResult> {
    if k == 0 || eta_hat.len() != 1 << k {
        return Err(Error::Shape(format!(
            "expected {} means for K={k}, got {}",
            1usize << k.min(63),
            eta_hat.len()
        )));
    }
    let zero = find_zero_mode(eta_hat)?;
    let eta_i: Vec<Complex64> = eta_hat
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != zero)
        .map(|(_, z)| *z)
        .collect();
    match method {
        ReorderMethod::LsConstrained => reorder_ls_constrained(&eta_i, k),
        ReorderMethod::LsUnconstrained => reorder_ls_unconstrained(&eta_i, k),
        ReorderMethod::SubsetK4 => reorder_subset_k4(&eta_i),
        ReorderMethod::SubsetK4Literal => reorder_subset_k4_literal(&eta_i),
        ReorderMethod::WeightedK4 => reorder_weighted_k4(&eta_i),
    }
}
