//! Generalized graph Laplacians `L = D - W + V` for path-based DTT graphs.
//!
//! Matrices are stored dense: block sizes never exceed 32 nodes per axis, and
//! the Kronecker sum of two such graphs stays at most 1024 nodes.
//!
//! Node indices in the public API are 1-based (`i` in `e_i`), matching the
//! usual way the self-loop position is reported.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_REL_TOL: f64 = 1e-10;

/// A validated generalized graph Laplacian.
///
/// Symmetric, non-positive off-diagonal, non-negative row sums (self-loop
/// mass) and positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedLaplacian {
    matrix: DMatrix<f64>,
}

impl GeneralizedLaplacian {
    /// Validates `matrix` and wraps it.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::InvalidSize(format!(
                "Laplacian must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotLaplacian("non-finite entry".into()));
        }
        let scale = matrix.amax().max(1.0);
        for r in 0..n {
            let mut row_sum = 0.0;
            for c in 0..n {
                let v = matrix[(r, c)];
                row_sum += v;
                if (v - matrix[(c, r)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotLaplacian(format!("asymmetric at ({r}, {c})")));
                }
                if r != c && v > 0.0 {
                    return Err(Error::NotLaplacian(format!(
                        "positive off-diagonal weight at ({r}, {c})"
                    )));
                }
            }
            if row_sum < -SYMMETRY_TOL * scale * n as f64 {
                return Err(Error::NotLaplacian(format!("negative row sum in row {r}")));
            }
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min < -PSD_REL_TOL * max.abs().max(1.0) {
            return Err(Error::NotLaplacian(format!(
                "not positive semidefinite (smallest eigenvalue {min:e})"
            )));
        }
        Ok(Self { matrix })
    }

    /// The `n x n` all-zero Laplacian (a graph without edges or self-loops).
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("Laplacian needs at least one node".into()));
        }
        Ok(Self { matrix: DMatrix::zeros(n, n) })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Self-loop weight at 1-based node `i`: the row sum of `L`.
    pub fn self_loop(&self, i: usize) -> Result<f64> {
        let k = to_zero_based(i, self.n())?;
        Ok(self.matrix.row(k).sum())
    }
}

/// Which DTT a base graph induces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseGraphKind {
    /// Unweighted path; its GFT is the DCT-2.
    PathGraph,
    /// Path with a unit self-loop on the first node; its GFT is the DST-7.
    PathWithUnitSelfLoop,
}

impl BaseGraphKind {
    pub fn laplacian(self, n: usize) -> Result<GeneralizedLaplacian> {
        match self {
            BaseGraphKind::PathGraph => path_laplacian(n),
            BaseGraphKind::PathWithUnitSelfLoop => path_with_self_loop_laplacian(n),
        }
    }

    /// Self-loop weight carried by the first node of the base graph.
    pub fn first_node_self_loop(self) -> f64 {
        match self {
            BaseGraphKind::PathGraph => 0.0,
            BaseGraphKind::PathWithUnitSelfLoop => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseGraphKind::PathGraph => "dct2",
            BaseGraphKind::PathWithUnitSelfLoop => "dst7",
        }
    }
}

/// Parameters of a separable DTT+ in model space.
///
/// `alpha_*` is the self-loop weight and `beta_*` the edge scale of each
/// axis graph `beta * L + alpha * e_i e_i^T`. These are the squared values of
/// the unconstrained variables used during learning. `i_r` and `i_c` are
/// 1-based node indices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DttPlusParams {
    pub alpha_r: f64,
    pub beta_r: f64,
    pub i_r: usize,
    pub alpha_c: f64,
    pub beta_c: f64,
    pub i_c: usize,
}

impl DttPlusParams {
    pub fn validate(&self, n_r: usize, n_c: usize) -> Result<()> {
        for (name, a) in [("alpha_r", self.alpha_r), ("alpha_c", self.alpha_c)] {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {a}")));
            }
        }
        for (name, b) in [("beta_r", self.beta_r), ("beta_c", self.beta_c)] {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {b}")));
            }
        }
        to_zero_based(self.i_r, n_r)?;
        to_zero_based(self.i_c, n_c)?;
        Ok(())
    }

    /// Self-loop weight relative to the edge scale of the row graph.
    pub fn normalized_self_loop_r(&self) -> f64 {
        self.alpha_r / self.beta_r
    }

    pub fn normalized_self_loop_c(&self) -> f64 {
        self.alpha_c / self.beta_c
    }
}

pub(crate) fn to_zero_based(i: usize, n: usize) -> Result<usize> {
    if i == 0 || i > n {
        Err(Error::IndexOutOfRange { index: i, n })
    } else {
        Ok(i - 1)
    }
}

/// Laplacian of the unweighted path on `n` nodes.
pub fn path_laplacian(n: usize) -> Result<GeneralizedLaplacian> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("path graph needs n >= 2, got {n}")));
    }
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n - 1 {
        m[(k, k + 1)] = -1.0;
        m[(k + 1, k)] = -1.0;
        m[(k, k)] += 1.0;
        m[(k + 1, k + 1)] += 1.0;
    }
    Ok(GeneralizedLaplacian { matrix: m })
}

/// Path Laplacian with a unit self-loop on node 1.
pub fn path_with_self_loop_laplacian(n: usize) -> Result<GeneralizedLaplacian> {
    let mut l = path_laplacian(n)?;
    l.matrix[(0, 0)] += 1.0;
    Ok(l)
}

/// `beta * L + alpha * e_i e_i^T`.
pub fn rank_one_update(
    base: &GeneralizedLaplacian,
    alpha: f64,
    beta: f64,
    i: usize,
) -> Result<GeneralizedLaplacian> {
    let k = to_zero_based(i, base.n())?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
    }
    let mut m = &base.matrix * beta;
    m[(k, k)] += alpha;
    Ok(GeneralizedLaplacian { matrix: m })
}

/// Kronecker sum `L_r ⊗ I + I ⊗ L_c` (Cartesian product graph).
///
/// With column-major vectorization of an `n_c x n_r` block, the column graph
/// acts along each column and the row graph across columns.
pub fn cartesian_product(
    rows: &GeneralizedLaplacian,
    cols: &GeneralizedLaplacian,
) -> GeneralizedLaplacian {
    let (nr, nc) = (rows.n(), cols.n());
    let eye_r = DMatrix::<f64>::identity(nr, nr);
    let eye_c = DMatrix::<f64>::identity(nc, nc);
    let matrix = rows.matrix.kronecker(&eye_c) + eye_r.kronecker(&cols.matrix);
    GeneralizedLaplacian { matrix }
}
