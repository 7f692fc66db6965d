//! Progressive decomposition of a DTT+ through a Cauchy transition kernel.
//!
//! For `L~ = beta * L + alpha * e_i e_i^T` with `L = U diag(lambda) U^T`, the
//! updated basis satisfies `U~^T = diag(a) C diag(z) U^T` where
//! `C_kj = 1 / (lambda~_k - beta * lambda_j)`, `z = U^T e_i` and `a` normalizes
//! rows. The transition kernel `K = diag(a) C diag(z)` therefore maps base-DTT
//! coefficients to DTT+ coefficients.
//!
//! The updated spectrum `lambda~` comes from a full eigendecomposition of `L~`
//! rather than a secular-equation solver. Each kernel row is sign-aligned with
//! the directly computed `U~`, so both construction paths are comparable entry
//! by entry.

use nalgebra::{DMatrix, DVector};

use crate::base_transforms::{sorted_symmetric_eigen, EigenSystem};
use crate::graph_model::{to_zero_based, GeneralizedLaplacian};
use crate::{Error, Result};

/// `|z_j|` at or below this means eigenvector `j` ignores the self-loop node.
const DECOUPLED_Z: f64 = 1e-10;
/// Cauchy denominators closer to zero than this are not trusted.
const MIN_GAP: f64 = 1e-10;
/// Tolerance of the interleaving chain.
pub const INTERLEAVING_TOL: f64 = 1e-10;

/// How a kernel row was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSource {
    /// Normalized Cauchy row.
    Cauchy,
    /// Eigenvector orthogonal to `e_i`: unchanged by the update, identity row.
    Decoupled,
    /// Near-coincident eigenvalues: row copied from the direct eigendecomposition.
    Direct,
}

#[derive(Clone, Debug)]
pub struct TransitionKernel {
    /// `K`, rows indexed by DTT+ coefficient, columns by base-DTT coefficient.
    pub k_matrix: DMatrix<f64>,
    /// Row normalizers (signed). Zero on rows that are not Cauchy rows.
    pub a: DVector<f64>,
    /// `U^T e_i`.
    pub z: DVector<f64>,
    /// Base spectrum scaled by `beta`.
    pub base_eigs: DVector<f64>,
    /// Spectrum of the updated Laplacian.
    pub updated_eigs: DVector<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// 1-based self-loop node.
    pub index: usize,
    pub row_sources: Vec<RowSource>,
    /// Base basis `U`.
    pub base: EigenSystem,
    /// Directly computed basis of the updated Laplacian.
    pub updated: EigenSystem,
}

impl TransitionKernel {
    pub fn n(&self) -> usize {
        self.k_matrix.nrows()
    }

    /// True when every row is either an exact Cauchy row or a decoupled identity row.
    pub fn is_cauchy_exact(&self) -> bool {
        !self.row_sources.contains(&RowSource::Direct)
    }

    /// `K U^T`: the DTT+ analysis matrix rebuilt through the base DTT.
    pub fn composite(&self) -> DMatrix<f64> {
        &self.k_matrix * self.base.basis.transpose()
    }

    /// Mean of `|K_ij|` over each band `|i - j| = b`, for `b = 0..n`.
    pub fn band_means(&self) -> Vec<f64> {
        band_means(&self.k_matrix)
    }

    /// Cauchy entry `a_k z_j / (lambda~_k - beta lambda_j)`, when defined.
    pub fn cauchy_entry(&self, k: usize, j: usize) -> Option<f64> {
        let den = self.updated_eigs[k] - self.base_eigs[j];
        (self.row_sources[k] == RowSource::Cauchy && den.abs() > 1e-12)
            .then(|| self.a[k] * self.z[j] / den)
    }
}

pub fn band_means(k: &DMatrix<f64>) -> Vec<f64> {
    let n = k.nrows();
    (0..n)
        .map(|b| {
            let mut sum = 0.0;
            for r in 0..n - b {
                sum += k[(r, r + b)].abs() + k[(r + b, r)].abs();
            }
            let count = if b == 0 { n } else { 2 * (n - b) };
            if b == 0 {
                sum / 2.0 / count as f64
            } else {
                sum / count as f64
            }
        })
        .collect()
}

/// Transition kernel from `base` to `beta * base + alpha * e_i e_i^T`.
pub fn transition_kernel(
    base: &GeneralizedLaplacian,
    base_eig: &EigenSystem,
    alpha: f64,
    beta: f64,
    i: usize,
) -> Result<TransitionKernel> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    build(base, base_eig, alpha, beta, i)
}

/// Like [`transition_kernel`] but also accepts a negative `alpha` (a self-loop
/// downdate), provided the updated matrix is still a generalized Laplacian.
///
/// Used when the learned graph is reached from the DST-7 graph by removing
/// part of its unit self-loop.
pub fn transition_kernel_signed(
    base: &GeneralizedLaplacian,
    base_eig: &EigenSystem,
    alpha: f64,
    beta: f64,
    i: usize,
) -> Result<TransitionKernel> {
    if !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be finite, got {alpha}")));
    }
    build(base, base_eig, alpha, beta, i)
}

fn build(
    base: &GeneralizedLaplacian,
    base_eig: &EigenSystem,
    alpha: f64,
    beta: f64,
    i: usize,
) -> Result<TransitionKernel> {
    let n = base.n();
    if base_eig.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: base_eig.n() });
    }
    let node = to_zero_based(i, n)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
    }

    let u = &base_eig.basis;
    let z = DVector::from_fn(n, |j, _| u[(node, j)]);
    let base_eigs = &base_eig.eigenvalues * beta;

    if alpha == 0.0 {
        return Ok(TransitionKernel {
            k_matrix: DMatrix::identity(n, n),
            a: DVector::from_element(n, 1.0),
            z,
            updated_eigs: base_eigs.clone(),
            base_eigs,
            alpha,
            beta,
            index: i,
            row_sources: vec![RowSource::Decoupled; n],
            base: base_eig.clone(),
            updated: EigenSystem { basis: base_eig.basis.clone(), eigenvalues: &base_eig.eigenvalues * beta },
        });
    }

    let mut updated_l = base.matrix() * beta;
    updated_l[(node, node)] += alpha;
    if alpha < 0.0 {
        GeneralizedLaplacian::from_matrix(updated_l.clone())?;
    }
    let updated = sorted_symmetric_eigen(&updated_l)?;
    let lt = &updated.eigenvalues;
    let direct = updated.basis.tr_mul(u);

    let scale = base_eigs.amax().max(lt.amax()).max(1.0);
    let decoupled: Vec<bool> = z.iter().map(|v| v.abs() <= DECOUPLED_Z).collect();
    let mut claimed = vec![false; n];
    let mut k_matrix = DMatrix::zeros(n, n);
    let mut a = DVector::zeros(n);
    let mut row_sources = Vec::with_capacity(n);

    for k in 0..n {
        // An eigenpair untouched by the update maps to an identity row.
        let partner = (0..n).filter(|&j| decoupled[j] && !claimed[j]).min_by(|&x, &y| {
            (lt[k] - base_eigs[x]).abs().total_cmp(&(lt[k] - base_eigs[y]).abs())
        });
        if let Some(j) = partner {
            if (lt[k] - base_eigs[j]).abs() <= 1e-8 * scale && direct[(k, j)].abs() > 0.5 {
                claimed[j] = true;
                k_matrix[(k, j)] = direct[(k, j)].signum();
                row_sources.push(RowSource::Decoupled);
                continue;
            }
        }

        let near_pole = (0..n).any(|j| !decoupled[j] && (lt[k] - base_eigs[j]).abs() < MIN_GAP);
        if near_pole {
            k_matrix.row_mut(k).copy_from(&direct.row(k));
            row_sources.push(RowSource::Direct);
            continue;
        }

        let mut row = DVector::zeros(n);
        for j in 0..n {
            if !decoupled[j] {
                row[j] = z[j] / (lt[k] - base_eigs[j]);
            }
        }
        let norm = row.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Eigen(format!("degenerate Cauchy row {k} (norm {norm:e})")));
        }
        let mut ak = 1.0 / norm;
        if row.dot(&direct.row(k).transpose()) < 0.0 {
            ak = -ak;
        }
        a[k] = ak;
        for j in 0..n {
            k_matrix[(k, j)] = ak * row[j];
        }
        row_sources.push(RowSource::Cauchy);
    }

    Ok(TransitionKernel {
        k_matrix,
        a,
        z,
        base_eigs,
        updated_eigs: updated.eigenvalues.clone(),
        alpha,
        beta,
        index: i,
        row_sources,
        base: base_eig.clone(),
        updated,
    })
}

/// Outcome of the eigenvalue interleaving check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interleaving {
    pub holds: bool,
    /// Largest amount by which the chain decreases (0 when it holds exactly).
    pub max_violation: f64,
}

/// Checks `beta l_1 <= l~_1 <= beta l_2 <= ... <= beta l_n <= l~_n`.
///
/// `base_eigs` are the unscaled base eigenvalues; both spectra ascending.
pub fn check_interleaving(base_eigs: &[f64], updated_eigs: &[f64], beta: f64) -> Interleaving {
    let scaled: Vec<f64> = base_eigs.iter().map(|v| v * beta).collect();
    interleaving_chain(&scaled, updated_eigs)
}

/// Generic chain check `lower_1 <= upper_1 <= lower_2 <= ... <= upper_n`.
///
/// A downdate (negative `alpha`) satisfies the chain with the roles swapped.
pub fn interleaving_chain(lower: &[f64], upper: &[f64]) -> Interleaving {
    let n = lower.len().min(upper.len());
    let mut chain = Vec::with_capacity(2 * n);
    for k in 0..n {
        chain.push(lower[k]);
        chain.push(upper[k]);
    }
    let max_violation = chain.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max);
    let holds = lower.len() == upper.len() && max_violation <= INTERLEAVING_TOL;
    Interleaving { holds, max_violation }
}

/// `y -> K y`.
pub fn apply_transition(coeffs: &[f64], kernel: &TransitionKernel) -> Result<Vec<f64>> {
    let n = kernel.n();
    if coeffs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: coeffs.len() });
    }
    Ok((0..n)
        .map(|r| (0..n).map(|c| kernel.k_matrix[(r, c)] * coeffs[c]).sum())
        .collect())
}

/// Maximum entry difference between two matrices after flipping rows of `b`
/// to best match the sign of the corresponding rows of `a`.
pub fn max_abs_diff_up_to_row_sign(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut worst = 0.0f64;
    for r in 0..a.nrows() {
        let plus = (a.row(r) - b.row(r)).amax();
        let minus = (a.row(r) + b.row(r)).amax();
        worst = worst.max(plus.min(minus));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_transforms::{closed_form_dst7, gft};
    use crate::graph_model::{path_laplacian, path_with_self_loop_laplacian};

    fn orthogonality(k: &DMatrix<f64>) -> f64 {
        (k.tr_mul(k) - DMatrix::identity(k.nrows(), k.nrows())).amax()
    }

    #[test]
    fn no_update_is_identity() {
        let l = path_laplacian(8).unwrap();
        let e = gft(&l).unwrap();
        let k = transition_kernel(&l, &e, 0.0, 1.0, 3).unwrap();
        assert_eq!(k.k_matrix, DMatrix::identity(8, 8));
        let il = check_interleaving(e.eigenvalues.as_slice(), k.updated_eigs.as_slice(), 1.0);
        assert!(il.holds && il.max_violation == 0.0);
    }

    #[test]
    fn dct2_to_dst7() {
        let l = path_laplacian(8).unwrap();
        let e = gft(&l).unwrap();
        let k = transition_kernel(&l, &e, 1.0, 1.0, 1).unwrap();
        assert!(k.is_cauchy_exact());
        let dst7 = closed_form_dst7(8).unwrap();
        assert!(max_abs_diff_up_to_row_sign(&k.composite(), &dst7.analysis()) < 1e-9);
        assert!(orthogonality(&k.k_matrix) < 1e-10);
        for r in 0..8 {
            for c in 0..8 {
                let entry = k.cauchy_entry(r, c).unwrap();
                assert!((entry - k.k_matrix[(r, c)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn interleaving_path4_to_dst7() {
        let base = gft(&path_laplacian(4).unwrap()).unwrap();
        let upd = gft(&path_with_self_loop_laplacian(4).unwrap()).unwrap();
        let il = check_interleaving(base.eigenvalues.as_slice(), upd.eigenvalues.as_slice(), 1.0);
        assert!(il.holds, "{il:?}");
        let bad = check_interleaving(upd.eigenvalues.as_slice(), base.eigenvalues.as_slice(), 1.0);
        assert!(!bad.holds && bad.max_violation > 0.1);
    }

    #[test]
    fn decoupled_modes_at_center_node() {
        // Odd-length path, middle node: antisymmetric modes vanish there.
        let l = path_laplacian(7).unwrap();
        let e = gft(&l).unwrap();
        let k = transition_kernel(&l, &e, 0.8, 1.2, 4).unwrap();
        assert!(k.row_sources.contains(&RowSource::Decoupled));
        assert!(k.is_cauchy_exact());
        assert!(orthogonality(&k.k_matrix) < 1e-10);
        assert!(max_abs_diff_up_to_row_sign(&k.composite(), &k.updated.analysis()) < 1e-9);
    }

    #[test]
    fn downdate_from_dst7() {
        let base = path_with_self_loop_laplacian(8).unwrap();
        let e = gft(&base).unwrap();
        assert!(transition_kernel(&base, &e, -0.3, 1.0, 1).is_err());
        let k = transition_kernel_signed(&base, &e, -0.3, 1.0, 1).unwrap();
        assert!(max_abs_diff_up_to_row_sign(&k.composite(), &k.updated.analysis()) < 1e-9);
        assert!(interleaving_chain(k.updated_eigs.as_slice(), k.base_eigs.as_slice()).holds);
        assert!(transition_kernel_signed(&base, &e, -1.5, 1.0, 1).is_err());
    }

    #[test]
    fn apply_transition_cases() {
        let l = path_laplacian(4).unwrap();
        let e = gft(&l).unwrap();
        let id = transition_kernel(&l, &e, 0.0, 1.0, 1).unwrap();
        assert_eq!(apply_transition(&[1.0, 0.0, 0.0, 0.0], &id).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let k = transition_kernel(&l, &e, 2.0, 0.5, 2).unwrap();
        assert_eq!(apply_transition(&[0.0; 4], &k).unwrap(), vec![0.0; 4]);
        assert!(apply_transition(&[0.0; 3], &k).is_err());
    }

    #[test]
    fn band_means_of_identity() {
        let m = band_means(&DMatrix::identity(4, 4));
        assert_eq!(m, vec![1.0, 0.0, 0.0, 0.0]);
    }
}
