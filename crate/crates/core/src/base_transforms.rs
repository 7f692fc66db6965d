//! Graph Fourier transforms and their quantized integer kernels.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::graph_model::GeneralizedLaplacian;
use crate::{Error, Result};

/// Entries at or below this magnitude never decide an eigenvector's sign.
pub const SIGN_EPS: f64 = 1e-12;

/// Orthonormal eigenbasis with ascending eigenvalues.
///
/// Columns of `basis` are eigenvectors. Each column has its first entry of
/// magnitude above [`SIGN_EPS`] positive.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem {
    pub basis: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

impl EigenSystem {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Forward analysis matrix `U^T` (rows are basis vectors).
    pub fn analysis(&self) -> DMatrix<f64> {
        self.basis.transpose()
    }

    pub fn identity(n: usize) -> Self {
        Self { basis: DMatrix::identity(n, n), eigenvalues: DVector::zeros(n) }
    }
}

/// Flip columns so that their first significant entry is positive.
pub(crate) fn fix_signs(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        if let Some(first) = col.iter().copied().find(|v| v.abs() > SIGN_EPS) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Symmetric eigendecomposition sorted ascending, ties kept in solver order.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> Result<EigenSystem> {
    let n = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen(format!("non-finite input to {n}x{n} eigensolver")));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen(format!("symmetric QR did not converge on {n}x{n} matrix")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut basis = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_signs(&mut basis);
    if basis.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("eigensolver produced non-finite eigenvectors".into()));
    }
    Ok(EigenSystem { basis, eigenvalues })
}

/// Graph Fourier transform of a generalized Laplacian.
pub fn gft(l: &GeneralizedLaplacian) -> Result<EigenSystem> {
    sorted_symmetric_eigen(l.matrix())
}

/// Orthonormal DCT-2 basis, the GFT of the unweighted path.
pub fn closed_form_dct2(n: usize) -> Result<EigenSystem> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("DCT-2 needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let basis = DMatrix::from_fn(n, n, |j, k| {
        let c = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        c * (PI * k as f64 * (j as f64 + 0.5) / nf).cos()
    });
    let eigenvalues = DVector::from_fn(n, |k, _| 2.0 - 2.0 * (PI * k as f64 / nf).cos());
    Ok(EigenSystem { basis, eigenvalues })
}

/// Orthonormal DST-7 basis, the GFT of the path with a unit self-loop on node 1.
pub fn closed_form_dst7(n: usize) -> Result<EigenSystem> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("DST-7 needs n >= 2, got {n}")));
    }
    let m = 2.0 * n as f64 + 1.0;
    let c = 2.0 / m.sqrt();
    let basis = DMatrix::from_fn(n, n, |j, k| {
        c * (PI * (2 * k + 1) as f64 * (j + 1) as f64 / m).sin()
    });
    let eigenvalues = DVector::from_fn(n, |k, _| 2.0 - 2.0 * (PI * (2 * k + 1) as f64 / m).cos());
    Ok(EigenSystem { basis, eigenvalues })
}

/// Separable transform of a block: `U_c^T * block * U_r`.
///
/// Columns of the block (length `n_c`) are transformed by the column basis and
/// rows (length `n_r`) by the row basis. In column-major vectorized form this
/// equals `(U_r ⊗ U_c)^T vec(block)`.
pub fn apply_separable(
    block: &DMatrix<f64>,
    rows: &EigenSystem,
    cols: &EigenSystem,
) -> Result<DMatrix<f64>> {
    if block.nrows() != cols.n() {
        return Err(Error::DimensionMismatch { expected: cols.n(), found: block.nrows() });
    }
    if block.ncols() != rows.n() {
        return Err(Error::DimensionMismatch { expected: rows.n(), found: block.ncols() });
    }
    Ok(cols.basis.tr_mul(block) * &rows.basis)
}

/// A fixed-point matrix whose float value is `matrix / 2^shift`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerKernel {
    pub rows: usize,
    pub cols: usize,
    /// Row-major integer entries.
    pub matrix: Vec<i32>,
    pub shift: u32,
    pub bit_depth: u32,
}

impl IntegerKernel {
    /// Quantizes `m` with the largest shift that keeps every entry inside
    /// `bit_depth` signed bits.
    pub fn quantize(m: &DMatrix<f64>, bit_depth: u32) -> Result<Self> {
        if !(2..=16).contains(&bit_depth) {
            return Err(Error::InvalidParameter(format!("bit depth {bit_depth} outside 2..=16")));
        }
        let max_int = (1i64 << (bit_depth - 1)) - 1;
        let amax = m.amax();
        if !amax.is_finite() {
            return Err(Error::InvalidParameter("non-finite kernel entry".into()));
        }
        let mut shift = 0u32;
        while shift < 24 && (amax * (1u64 << (shift + 1)) as f64).round() as i64 <= max_int {
            shift += 1;
        }
        let scale = (1u64 << shift) as f64;
        let min_int = -max_int - 1;
        let matrix = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| ((m[(r, c)] * scale).round() as i64).clamp(min_int, max_int) as i32)
            .collect();
        Ok(Self { rows: m.nrows(), cols: m.ncols(), matrix, shift, bit_depth })
    }

    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.matrix[r * self.cols + c]
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        let scale = (1u64 << self.shift) as f64;
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c) as f64 / scale)
    }

    /// `max |T T^T - I|` of the dequantized kernel, rows taken as basis vectors.
    pub fn orthogonality(&self) -> f64 {
        let t = self.to_f64();
        let g = &t * t.transpose();
        (g - DMatrix::identity(self.rows, self.rows)).amax()
    }
}
