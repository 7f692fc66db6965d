//! Maximum-likelihood learning of separable DTT+ block models.
//!
//! The block precision model is the Kronecker sum
//! `L_g = (b_r² L_r + a_r² e_ir e_irᵀ) ⊗ I + I ⊗ (b_c² L_c + a_c² e_ic e_icᵀ)`
//! and the fitted objective is `-log det L_g + tr(L_g S)`. The unconstrained
//! variables `(a_r, b_r, a_c, b_c)` enter squared, so every iterate is a valid
//! Laplacian; reported [`DttPlusParams`] carry the squared values.
//!
//! Both axis Laplacians are diagonalized at every evaluation. The spectrum of
//! `L_g` is `{mu_r,p + mu_c,q}`, so the log-determinant and every trace of
//! `L_g^-1` needed by the gradient reduce to `O(n^3)` work on `n x n` factors.
//! The Hessian is a central difference of the analytic gradient.
//!
//! Vectorization of blocks is column-major throughout: the column graph acts
//! along each column of a block and the row graph across columns.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph_model::{
    cartesian_product, rank_one_update, to_zero_based, BaseGraphKind, DttPlusParams,
    GeneralizedLaplacian,
};
use crate::{Error, Result};

/// Stationarity tolerance on the reparametrized gradient.
pub const STATIONARITY_TOL: f64 = 1e-8;
/// Eigenvalue sums of `L_g` are floored here inside the optimizer.
const EIG_FLOOR: f64 = 1e-12;
const MAX_NEWTON_ITERS: usize = 200;
const MAX_HALVINGS: usize = 30;
/// Default ridge is `RIDGE_FACTOR * tr(S) / N`.
pub const RIDGE_FACTOR: f64 = 1e-8;

/// `S = (1/n_e) Σ vec(x_i) vec(x_i)^T` of mean-removed blocks.
///
/// The mean block over all examples is subtracted from each block first.
/// Blocks are vectorized column-major.
pub fn sample_covariance(blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = blocks.first().ok_or(Error::Empty("no blocks for covariance"))?;
    let shape = first.shape();
    if let Some(b) = blocks.iter().find(|b| b.shape() != shape) {
        return Err(Error::DimensionMismatch {
            expected: shape.0 * shape.1,
            found: b.nrows() * b.ncols(),
        });
    }
    let dim = shape.0 * shape.1;
    let count = blocks.len() as f64;
    let mut mean = DVector::<f64>::zeros(dim);
    for b in blocks {
        mean += DVector::from_column_slice(b.as_slice());
    }
    mean /= count;
    let mut data = DMatrix::<f64>::zeros(dim, blocks.len());
    for (k, b) in blocks.iter().enumerate() {
        let v = DVector::from_column_slice(b.as_slice()) - &mean;
        data.set_column(k, &v);
    }
    let mut s = &data * data.transpose();
    s /= count;
    Ok(s.symmetrize())
}

trait Symmetrize {
    fn symmetrize(self) -> Self;
}

impl Symmetrize for DMatrix<f64> {
    fn symmetrize(self) -> Self {
        let t = self.transpose();
        (self + t) * 0.5
    }
}

/// One axis of the block model.
#[derive(Clone, Debug)]
pub struct AxisBase {
    pub kind: BaseGraphKind,
    pub laplacian: GeneralizedLaplacian,
}

impl AxisBase {
    pub fn new(kind: BaseGraphKind, n: usize) -> Result<Self> {
        Ok(Self { kind, laplacian: kind.laplacian(n)? })
    }

    /// Arbitrary base graph; `kind` is only a label here.
    pub fn custom(kind: BaseGraphKind, laplacian: GeneralizedLaplacian) -> Self {
        Self { kind, laplacian }
    }

    pub fn n(&self) -> usize {
        self.laplacian.n()
    }
}

/// Sample covariance plus the base graphs the update is learned on.
#[derive(Clone, Debug)]
pub struct LearningProblem {
    s: DMatrix<f64>,
    s_rows: DMatrix<f64>,
    s_cols: DMatrix<f64>,
    base_r: AxisBase,
    base_c: AxisBase,
    ridge: f64,
}

impl LearningProblem {
    /// Builds a problem with the default ridge `1e-8 * tr(S) / N`.
    pub fn new(s: DMatrix<f64>, base_r: AxisBase, base_c: AxisBase) -> Result<Self> {
        let dim = s.nrows();
        let ridge = if dim == 0 { 0.0 } else { RIDGE_FACTOR * s.trace() / dim as f64 };
        Self::with_ridge(s, base_r, base_c, ridge)
    }

    pub fn with_ridge(
        s: DMatrix<f64>,
        base_r: AxisBase,
        base_c: AxisBase,
        ridge: f64,
    ) -> Result<Self> {
        let dim = base_r.n() * base_c.n();
        if s.nrows() != dim || s.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: s.nrows() });
        }
        let scale = s.amax().max(1.0);
        if (&s - s.transpose()).amax() > 1e-9 * scale {
            return Err(Error::InvalidParameter("sample covariance is not symmetric".into()));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
        }
        let mut s = s.symmetrize();
        for k in 0..dim {
            s[(k, k)] += ridge;
        }
        if Cholesky::new(s.clone()).is_none() {
            return Err(Error::InvalidParameter(
                "sample covariance plus ridge is not positive definite".into(),
            ));
        }
        let (nr, nc) = (base_r.n(), base_c.n());
        let s_rows = DMatrix::from_fn(nr, nr, |j, jp| {
            (0..nc).map(|i| s[(j * nc + i, jp * nc + i)]).sum()
        });
        let s_cols = DMatrix::from_fn(nc, nc, |i, ip| {
            (0..nr).map(|j| s[(j * nc + i, j * nc + ip)]).sum()
        });
        Ok(Self { s, s_rows, s_cols, base_r, base_c, ridge })
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn base_r(&self) -> &AxisBase {
        &self.base_r
    }

    pub fn base_c(&self) -> &AxisBase {
        &self.base_c
    }

    /// Row-graph partial trace of `S`.
    pub fn row_covariance(&self) -> &DMatrix<f64> {
        &self.s_rows
    }

    /// Column-graph partial trace of `S`.
    pub fn col_covariance(&self) -> &DMatrix<f64> {
        &self.s_cols
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningSolution {
    pub params: DttPlusParams,
    pub cost: f64,
    /// Infinity norm of the reparametrized gradient at `params`.
    pub grad_norm: f64,
    pub newton_iters: usize,
    pub converged: bool,
}

/// Unconstrained variables `(a_r, b_r, a_c, b_c)`.
pub type Reparam = [f64; 4];

pub fn to_reparam(p: &DttPlusParams) -> Reparam {
    [p.alpha_r.sqrt(), p.beta_r.sqrt(), p.alpha_c.sqrt(), p.beta_c.sqrt()]
}

fn from_reparam(x: &Reparam, i_r: usize, i_c: usize) -> DttPlusParams {
    DttPlusParams {
        alpha_r: x[0] * x[0],
        beta_r: x[1] * x[1],
        i_r,
        alpha_c: x[2] * x[2],
        beta_c: x[3] * x[3],
        i_c,
    }
}

/// Dense block Laplacian `L_g(phi)`.
pub fn block_laplacian(
    params: &DttPlusParams,
    base_r: &GeneralizedLaplacian,
    base_c: &GeneralizedLaplacian,
) -> Result<GeneralizedLaplacian> {
    let lr = rank_one_update(base_r, params.alpha_r, params.beta_r, params.i_r)?;
    let lc = rank_one_update(base_c, params.alpha_c, params.beta_c, params.i_c)?;
    Ok(cartesian_product(&lr, &lc))
}

struct AxisEig {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

fn axis_eig(base: &GeneralizedLaplacian, a: f64, b: f64, node: usize) -> AxisEig {
    let mut m = base.matrix() * (b * b);
    m[(node, node)] += a * a;
    let e = SymmetricEigen::new(m);
    AxisEig { values: e.eigenvalues.iter().copied().collect(), vectors: e.eigenvectors }
}

struct Evaluation {
    cost: f64,
    /// Gradient with respect to `(alpha_r, beta_r, alpha_c, beta_c)` in model space.
    model_grad: [f64; 4],
    min_sum: f64,
}

fn evaluate(problem: &LearningProblem, x: &Reparam, nr_node: usize, nc_node: usize, grad: bool) -> Evaluation {
    let lr = &problem.base_r.laplacian;
    let lc = &problem.base_c.laplacian;
    let er = axis_eig(lr, x[0], x[1], nr_node);
    let ec = axis_eig(lc, x[2], x[3], nc_node);
    let (nr, nc) = (er.values.len(), ec.values.len());

    let mut log_det = 0.0;
    let mut min_sum = f64::INFINITY;
    let mut h_r = vec![0.0; nr];
    let mut h_c = vec![0.0; nc];
    for p in 0..nr {
        for q in 0..nc {
            let raw = er.values[p] + ec.values[q];
            min_sum = min_sum.min(raw);
            let s = raw.max(EIG_FLOOR);
            log_det += s.ln();
            let inv = 1.0 / s;
            h_r[p] += inv;
            h_c[q] += inv;
        }
    }
    let s_r = &problem.s_rows;
    let s_c = &problem.s_cols;
    let tr_lr = lr.matrix().component_mul(s_r).sum();
    let tr_lc = lc.matrix().component_mul(s_c).sum();
    let (a_r2, b_r2, a_c2, b_c2) = (x[0] * x[0], x[1] * x[1], x[2] * x[2], x[3] * x[3]);
    let trace = b_r2 * tr_lr + a_r2 * s_r[(nr_node, nr_node)] + b_c2 * tr_lc + a_c2 * s_c[(nc_node, nc_node)];
    let cost = -log_det + trace;

    let mut model_grad = [0.0; 4];
    if grad {
        let quad = |v: &DMatrix<f64>, l: &DMatrix<f64>, p: usize| {
            let col = v.column(p);
            (l * col).dot(&col)
        };
        let mut g_ar = s_r[(nr_node, nr_node)];
        let mut g_br = tr_lr;
        for p in 0..nr {
            let vi = er.vectors[(nr_node, p)];
            g_ar -= vi * vi * h_r[p];
            g_br -= quad(&er.vectors, lr.matrix(), p) * h_r[p];
        }
        let mut g_ac = s_c[(nc_node, nc_node)];
        let mut g_bc = tr_lc;
        for q in 0..nc {
            let vi = ec.vectors[(nc_node, q)];
            g_ac -= vi * vi * h_c[q];
            g_bc -= quad(&ec.vectors, lc.matrix(), q) * h_c[q];
        }
        model_grad = [g_ar, g_br, g_ac, g_bc];
    }
    Evaluation { cost, model_grad, min_sum }
}

fn reparam_grad(e: &Evaluation, x: &Reparam) -> [f64; 4] {
    let mut g = [0.0; 4];
    for k in 0..4 {
        g[k] = 2.0 * x[k] * e.model_grad[k];
    }
    g
}

fn inf_norm(g: &[f64; 4]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn check_indices(problem: &LearningProblem, i_r: usize, i_c: usize) -> Result<(usize, usize)> {
    Ok((to_zero_based(i_r, problem.base_r.n())?, to_zero_based(i_c, problem.base_c.n())?))
}

/// `-log det L_g(phi) + tr(L_g(phi) S)` with `phi` in model space.
///
/// Returns `f64::INFINITY` when `L_g(phi)` is singular.
pub fn cost(phi: &DttPlusParams, problem: &LearningProblem) -> Result<f64> {
    phi.validate(problem.base_r.n(), problem.base_c.n())?;
    let (r, c) = check_indices(problem, phi.i_r, phi.i_c)?;
    let e = evaluate(problem, &to_reparam(phi), r, c, false);
    if e.min_sum <= EIG_FLOOR {
        return Ok(f64::INFINITY);
    }
    Ok(e.cost)
}

/// Gradient of the objective with respect to `(a_r, b_r, a_c, b_c)`.
///
/// Component `k` equals `-2 x_k tr((L_g^-1 - S) dL_g/d(x_k²))`, i.e. the
/// stationarity conditions with the chain-rule factor of the squared
/// reparametrization. All four vanish at an interior optimum.
pub fn stationarity_residual(phi: &DttPlusParams, problem: &LearningProblem) -> Result<[f64; 4]> {
    phi.validate(problem.base_r.n(), problem.base_c.n())?;
    let (r, c) = check_indices(problem, phi.i_r, phi.i_c)?;
    let x = to_reparam(phi);
    let e = evaluate(problem, &x, r, c, true);
    if e.min_sum <= EIG_FLOOR {
        return Err(Error::Singular("block Laplacian has a zero eigenvalue".into()));
    }
    Ok(reparam_grad(&e, &x))
}

/// Gradient in model space, `d cost / d(alpha_r, beta_r, alpha_c, beta_c)`.
pub fn model_gradient(phi: &DttPlusParams, problem: &LearningProblem) -> Result<[f64; 4]> {
    phi.validate(problem.base_r.n(), problem.base_c.n())?;
    let (r, c) = check_indices(problem, phi.i_r, phi.i_c)?;
    let e = evaluate(problem, &to_reparam(phi), r, c, true);
    if e.min_sum <= EIG_FLOOR {
        return Err(Error::Singular("block Laplacian has a zero eigenvalue".into()));
    }
    Ok(e.model_grad)
}

/// Default starting point: self-loop 0.5 and unit edge scale on both axes,
/// with a common scale fitted in closed form to `tr(S)`.
pub fn default_init(problem: &LearningProblem, i_r: usize, i_c: usize) -> Result<DttPlusParams> {
    let shape = DttPlusParams { alpha_r: 0.5, beta_r: 1.0, i_r, alpha_c: 0.5, beta_c: 1.0, i_c };
    let (r, c) = check_indices(problem, i_r, i_c)?;
    let e = evaluate(problem, &to_reparam(&shape), r, c, false);
    let trace = e.cost + e_log_det(problem, &shape, r, c);
    // Minimizer of -N log t - log det M + t tr(M S) over the scale t.
    let dim = (problem.base_r.n() * problem.base_c.n()) as f64;
    let t = if trace > 0.0 { dim / trace } else { 1.0 };
    Ok(DttPlusParams {
        alpha_r: 0.5 * t,
        beta_r: t,
        alpha_c: 0.5 * t,
        beta_c: t,
        ..shape
    })
}

fn e_log_det(problem: &LearningProblem, p: &DttPlusParams, r: usize, c: usize) -> f64 {
    let er = axis_eig(&problem.base_r.laplacian, p.alpha_r.sqrt(), p.beta_r.sqrt(), r);
    let ec = axis_eig(&problem.base_c.laplacian, p.alpha_c.sqrt(), p.beta_c.sqrt(), c);
    let mut ld = 0.0;
    for a in &er.values {
        for b in &ec.values {
            ld += (a + b).max(EIG_FLOOR).ln();
        }
    }
    ld
}

fn fd_hessian(problem: &LearningProblem, x: &Reparam, r: usize, c: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(4, 4);
    for k in 0..4 {
        let step = 1e-5 * x[k].abs().max(1e-3);
        let mut xp = *x;
        let mut xm = *x;
        xp[k] += step;
        xm[k] -= step;
        let gp = reparam_grad(&evaluate(problem, &xp, r, c, true), &xp);
        let gm = reparam_grad(&evaluate(problem, &xm, r, c, true), &xm);
        for j in 0..4 {
            h[(j, k)] = (gp[j] - gm[j]) / (2.0 * step);
        }
    }
    h.symmetrize()
}

fn newton_direction(h: &DMatrix<f64>, g: &[f64; 4]) -> DVector<f64> {
    let rhs = -DVector::from_column_slice(g);
    let diag_scale = h.diagonal().amax().max(1e-12);
    let mut shift = 0.0;
    for _ in 0..40 {
        let mut m = h.clone();
        for k in 0..4 {
            m[(k, k)] += shift;
        }
        if let Some(ch) = Cholesky::new(m) {
            return ch.solve(&rhs);
        }
        shift = if shift == 0.0 { 1e-10 * diag_scale } else { shift * 10.0 };
    }
    // Gradient descent as a last resort.
    rhs / diag_scale
}

/// Damped Newton on the reparametrized problem for a fixed `(i_r, i_c)`.
///
/// Steps are halved until the objective decreases (up to 30 times). Near the
/// optimum, where objective differences drop below rounding, a step is also
/// accepted if it does not raise the objective beyond rounding and it shrinks
/// the gradient.
pub fn solve_inner(
    i_r: usize,
    i_c: usize,
    problem: &LearningProblem,
    init: Option<DttPlusParams>,
) -> Result<LearningSolution> {
    let (r, c) = check_indices(problem, i_r, i_c)?;
    let start = match init {
        Some(p) => DttPlusParams { i_r, i_c, ..p },
        None => default_init(problem, i_r, i_c)?,
    };
    let mut x = to_reparam(&start);
    let mut current = evaluate(problem, &x, r, c, true);
    if !current.cost.is_finite() {
        return Err(Error::LearningFailed(format!("non-finite cost at start for ({i_r}, {i_c})")));
    }
    let mut g = reparam_grad(&current, &x);
    let mut iters = 0;
    while iters < MAX_NEWTON_ITERS && inf_norm(&g) > STATIONARITY_TOL {
        let h = fd_hessian(problem, &x, r, c);
        let d = newton_direction(&h, &g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut xn = x;
            for k in 0..4 {
                xn[k] += t * d[k];
            }
            let e = evaluate(problem, &xn, r, c, true);
            if e.cost.is_finite() && e.min_sum > EIG_FLOOR {
                let gn = reparam_grad(&e, &xn);
                let slack = 1e-13 * current.cost.abs().max(1.0);
                if e.cost < current.cost
                    || (e.cost <= current.cost + slack && inf_norm(&gn) < inf_norm(&g))
                {
                    accepted = Some((xn, e, gn));
                    break;
                }
            }
            t *= 0.5;
        }
        iters += 1;
        match accepted {
            Some((xn, e, gn)) => {
                x = xn;
                current = e;
                g = gn;
            }
            None => break,
        }
    }
    let grad_norm = inf_norm(&g);
    let x_abs = [x[0].abs(), x[1].abs(), x[2].abs(), x[3].abs()];
    Ok(LearningSolution {
        params: from_reparam(&x_abs, i_r, i_c),
        cost: current.cost,
        grad_norm,
        newton_iters: iters,
        converged: grad_norm <= STATIONARITY_TOL,
    })
}

/// Solves every `(i_r, i_c)` pair and keeps the lowest objective.
///
/// Converged solutions are preferred. Equal objectives (within `1e-12`
/// relative) resolve to the lexicographically smallest `(i_r, i_c)`.
pub fn solve(problem: &LearningProblem) -> Result<LearningSolution> {
    let (nr, nc) = (problem.base_r.n(), problem.base_c.n());
    let pairs: Vec<(usize, usize)> = (1..=nr).flat_map(|r| (1..=nc).map(move |c| (r, c))).collect();
    let results: Vec<Result<LearningSolution>> =
        pairs.par_iter().map(|&(r, c)| solve_inner(r, c, problem, None)).collect();

    let mut best: Option<LearningSolution> = None;
    let mut errors = Vec::new();
    for res in results {
        match res {
            Ok(sol) if sol.cost.is_finite() => {
                let better = match &best {
                    None => true,
                    Some(b) if sol.converged != b.converged => sol.converged,
                    Some(b) => sol.cost < b.cost - 1e-12 * b.cost.abs().max(1.0),
                };
                if better {
                    best = Some(sol);
                }
            }
            Ok(sol) => errors.push(format!("({}, {}): non-finite cost", sol.params.i_r, sol.params.i_c)),
            Err(e) => errors.push(e.to_string()),
        }
    }
    best.ok_or_else(|| {
        Error::LearningFailed(format!("all {} inner solves failed: {}", pairs.len(), errors.join("; ")))
    })
}
