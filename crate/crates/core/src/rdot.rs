//! Rate-distortion machinery and the Lloyd-type transform design loop.
//!
//! Blocks are square `n x n` and stored row-major. A [`SeparableTransform`]
//! holds the two analysis matrices; the forward transform is
//! `Y = A_c X A_r^T` and the inverse is always the transpose,
//! `X^ = A_c^T Y A_r`, also for the slightly non-orthogonal integer kernels.
//!
//! The RD cost of coding block `x` with transform `T` is
//! `||x - x^||² + lambda * (Σ|levels| + log2(n_t))`: the ℓ1 norm of the
//! quantized levels is the rate proxy and `log2(n_t)` bits signal the chosen
//! transform.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_transforms::{gft, EigenSystem};
use crate::graph_learning::{sample_covariance, solve, AxisBase, LearningProblem, LearningSolution};
use crate::graph_model::{rank_one_update, BaseGraphKind, DttPlusParams};
use crate::{Error, Result};

/// HEVC intra rounding offset.
pub const DEFAULT_DEADZONE_OFFSET: f64 = 1.0 / 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub step: f64,
    pub deadzone_offset: f64,
}

impl QuantizerSpec {
    pub fn new(step: f64) -> Result<Self> {
        let spec = Self { step, deadzone_offset: DEFAULT_DEADZONE_OFFSET };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!("quantizer step must be > 0, got {}", self.step)));
        }
        if !(0.0..=0.5).contains(&self.deadzone_offset) {
            return Err(Error::InvalidParameter(format!(
                "deadzone offset must be in [0, 0.5], got {}",
                self.deadzone_offset
            )));
        }
        Ok(())
    }
}

/// `level = sign(c) floor(|c| / step + offset)`, `recon = level * step`.
pub fn deadzone_quantize(coeffs: &[f64], spec: &QuantizerSpec) -> (Vec<i32>, Vec<f64>) {
    let levels: Vec<i32> = coeffs.iter().map(|&c| quantize_one(c, spec)).collect();
    let recon = levels.iter().map(|&l| l as f64 * spec.step).collect();
    (levels, recon)
}

#[inline]
fn quantize_one(c: f64, spec: &QuantizerSpec) -> i32 {
    let mag = (c.abs() / spec.step + spec.deadzone_offset).floor() as i32;
    if c < 0.0 {
        -mag
    } else {
        mag
    }
}

/// ℓ1 rate proxy: `Σ |level|`.
pub fn rate_proxy(levels: &[i32]) -> f64 {
    levels.iter().map(|l| l.unsigned_abs() as f64).sum()
}

/// Empirical zero-order entropy coder model.
///
/// Levels are split into a significance flag and, for nonzero levels, the
/// signed value. Total bits are `N H(sig) + N_nz H(level | nz)`, which equals
/// `N H(level)`; the split only mirrors how a coder would signal them.
/// Each context keeps its own statistics.
#[derive(Clone, Debug, Default)]
pub struct EntropyEstimator {
    contexts: Vec<std::collections::BTreeMap<i32, u64>>,
}

impl EntropyEstimator {
    pub fn new(contexts: usize) -> Self {
        Self { contexts: vec![Default::default(); contexts] }
    }

    pub fn add(&mut self, context: usize, level: i32) {
        *self.contexts[context].entry(level).or_insert(0) += 1;
    }

    /// Adds a block of levels, one context per coefficient position.
    pub fn add_block(&mut self, levels: &[i32]) {
        for (k, &l) in levels.iter().enumerate() {
            self.add(k, l);
        }
    }

    pub fn total_bits(&self) -> f64 {
        self.contexts.iter().map(context_bits).sum()
    }
}

fn context_bits(hist: &std::collections::BTreeMap<i32, u64>) -> f64 {
    let total: u64 = hist.values().sum();
    if total == 0 {
        return 0.0;
    }
    let zeros = hist.get(&0).copied().unwrap_or(0);
    let nz = total - zeros;
    let h = |count: u64, of: u64| {
        if count == 0 {
            0.0
        } else {
            let p = count as f64 / of as f64;
            -(count as f64) * p.log2()
        }
    };
    let sig_bits = h(zeros, total) + h(nz, total);
    let level_bits: f64 = hist.iter().filter(|(l, _)| **l != 0).map(|(_, &c)| h(c, nz)).sum();
    sig_bits + level_bits
}

/// Bits of `levels` under a single-context empirical entropy model.
pub fn entropy_bits(levels: &[i32]) -> f64 {
    let mut e = EntropyEstimator::new(1);
    for &l in levels {
        e.add(0, l);
    }
    e.total_bits()
}

/// A separable block transform given by its row and column analysis matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableTransform {
    pub name: String,
    n: usize,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

impl SeparableTransform {
    /// `rows` and `cols` are analysis matrices (basis vectors as rows).
    pub fn new(name: impl Into<String>, rows: &DMatrix<f64>, cols: &DMatrix<f64>) -> Result<Self> {
        let n = rows.nrows();
        for m in [rows, cols] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: m.nrows().max(m.ncols()) });
            }
        }
        let flat = |m: &DMatrix<f64>| (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| m[(r, c)]).collect();
        Ok(Self { name: name.into(), n, rows: flat(rows), cols: flat(cols) })
    }

    pub fn from_bases(name: impl Into<String>, rows: &EigenSystem, cols: &EigenSystem) -> Result<Self> {
        Self::new(name, &rows.analysis(), &cols.analysis())
    }

    pub fn identity(n: usize) -> Self {
        let id = DMatrix::identity(n, n);
        Self::new("identity", &id, &id).expect("square identity")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row_analysis(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.rows)
    }

    pub fn col_analysis(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.cols)
    }

    /// `Y = A_c X A_r^T` on a row-major block.
    pub fn forward(&self, block: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut tmp = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.cols[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    tmp[i * n + j] += a * block[k * n + j];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += tmp[i * n + k] * self.rows[j * n + k];
                }
                out[i * n + j] = s;
            }
        }
    }

    /// `X^ = A_c^T Y A_r`.
    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut tmp = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                let a = self.cols[k * n + i];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    tmp[i * n + j] += a * coeffs[k * n + j];
                }
            }
        }
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for i in 0..n {
            for k in 0..n {
                let t = tmp[i * n + k];
                if t == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += t * self.rows[k * n + j];
                }
            }
        }
    }
}

/// Result of coding one block with one transform.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedBlock {
    pub levels: Vec<i32>,
    /// Squared error in the pixel domain.
    pub distortion: f64,
    pub l1: f64,
}

pub fn encode_block(block: &[f64], transform: &SeparableTransform, spec: &QuantizerSpec) -> EncodedBlock {
    let n2 = block.len();
    let mut coeffs = vec![0.0; n2];
    transform.forward(block, &mut coeffs);
    let mut levels = Vec::with_capacity(n2);
    for c in coeffs.iter_mut() {
        let l = quantize_one(*c, spec);
        levels.push(l);
        *c = l as f64 * spec.step;
    }
    let mut recon = vec![0.0; n2];
    transform.inverse(&coeffs, &mut recon);
    let distortion = block.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum();
    let l1 = rate_proxy(&levels);
    EncodedBlock { levels, distortion, l1 }
}

/// Signaling cost of a transform index among `n_t` candidates.
pub fn signaling_bits(n_t: usize) -> f64 {
    if n_t <= 1 {
        0.0
    } else {
        (n_t as f64).log2()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdChoice {
    pub index: usize,
    pub cost: f64,
}

/// RD cost of coding `block` with `transform` in a set of `n_t` candidates.
pub fn rd_cost(block: &[f64], transform: &SeparableTransform, spec: &QuantizerSpec, lagrangian: f64, n_t: usize) -> f64 {
    let e = encode_block(block, transform, spec);
    e.distortion + lagrangian * (e.l1 + signaling_bits(n_t))
}

/// Transform with the lowest RD cost; ties go to the lowest index.
pub fn rd_select(
    block: &[f64],
    transforms: &[SeparableTransform],
    spec: &QuantizerSpec,
    lagrangian: f64,
) -> Result<RdChoice> {
    if transforms.is_empty() {
        return Err(Error::Empty("no candidate transforms"));
    }
    if !(lagrangian >= 0.0) {
        return Err(Error::InvalidParameter(format!("lagrangian must be >= 0, got {lagrangian}")));
    }
    let n_t = transforms.len();
    let mut best = RdChoice { index: 0, cost: f64::INFINITY };
    for (k, t) in transforms.iter().enumerate() {
        if t.n() * t.n() != block.len() {
            return Err(Error::DimensionMismatch { expected: t.n() * t.n(), found: block.len() });
        }
        let c = rd_cost(block, t, spec, lagrangian, n_t);
        if c < best.cost {
            best = RdChoice { index: k, cost: c };
        }
    }
    Ok(best)
}

/// Separable DTT+ analysis transform for learned parameters on the given bases.
pub fn dtt_plus_transform(
    name: impl Into<String>,
    params: &DttPlusParams,
    base_r: BaseGraphKind,
    base_c: BaseGraphKind,
    n: usize,
) -> Result<SeparableTransform> {
    let (er, ec) = dtt_plus_bases(params, base_r, base_c, n)?;
    SeparableTransform::from_bases(name, &er, &ec)
}

/// Row and column GFTs of the learned axis graphs.
pub fn dtt_plus_bases(
    params: &DttPlusParams,
    base_r: BaseGraphKind,
    base_c: BaseGraphKind,
    n: usize,
) -> Result<(EigenSystem, EigenSystem)> {
    let lr = rank_one_update(&base_r.laplacian(n)?, params.alpha_r, params.beta_r, params.i_r)?;
    let lc = rank_one_update(&base_c.laplacian(n)?, params.alpha_c, params.beta_c, params.i_c)?;
    Ok((gft(&lr)?, gft(&lc)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdotConfig {
    pub n_learned: usize,
    pub lagrangian: f64,
    pub quantizer: QuantizerSpec,
    /// Stop once the relative RD-cost decrease of an iteration falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Base graph the updates are learned on.
    pub learning_base: BaseGraphKind,
}

impl Default for RdotConfig {
    fn default() -> Self {
        Self {
            n_learned: 1,
            lagrangian: 0.0,
            quantizer: QuantizerSpec { step: 8.0, deadzone_offset: DEFAULT_DEADZONE_OFFSET },
            tol: 0.01,
            max_iters: 50,
            seed: 0,
            learning_base: BaseGraphKind::PathGraph,
        }
    }
}

/// Serializable state of an RDOT run.
///
/// Candidate indices put the fixed transforms first and the learned ones
/// after them: learned cluster `j` is candidate `fixed_names.len() + j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdotState {
    pub format_version: u32,
    pub fixed_names: Vec<String>,
    pub learned_params: Vec<Option<DttPlusParams>>,
    pub learned_solutions: Vec<Option<LearningSolution>>,
    pub assignments: Vec<usize>,
    pub lagrangian: f64,
    /// Cost of the initial partition followed by the cost after each reassignment.
    pub cost_trace: Vec<f64>,
    /// `(before, after)` cost of every reassignment step.
    pub assignment_steps: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

impl RdotState {
    pub fn n_fixed(&self) -> usize {
        self.fixed_names.len()
    }

    /// Members of candidate `index`.
    pub fn members(&self, index: usize) -> Vec<usize> {
        self.assignments.iter().enumerate().filter(|(_, &a)| a == index).map(|(k, _)| k).collect()
    }
}

pub struct RdotOutcome {
    pub state: RdotState,
    /// One transform per learned cluster, in cluster order.
    pub learned: Vec<SeparableTransform>,
}

fn learn_cluster(blocks: &[Vec<f64>], members: &[usize], n: usize, base: BaseGraphKind) -> Result<LearningSolution> {
    let mats: Vec<DMatrix<f64>> = members.iter().map(|&k| DMatrix::from_row_slice(n, n, &blocks[k])).collect();
    let s = sample_covariance(&mats)?;
    let axis = AxisBase::new(base, n)?;
    let problem = LearningProblem::new(s, axis.clone(), axis)?;
    solve(&problem)
}

/// Splits the largest learned cluster at the median of a random projection.
fn split_largest(
    blocks: &[Vec<f64>],
    assignments: &mut [usize],
    learned_range: std::ops::Range<usize>,
    empty: usize,
    rng: &mut ChaCha8Rng,
) {
    let largest = learned_range
        .clone()
        .max_by_key(|&c| (assignments.iter().filter(|&&a| a == c).count(), std::cmp::Reverse(c)))
        .expect("at least one learned cluster");
    let members: Vec<usize> = (0..assignments.len()).filter(|&k| assignments[k] == largest).collect();
    if members.len() < 2 {
        return;
    }
    let dim = blocks[0].len();
    let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let mut proj: Vec<(f64, usize)> = members
        .iter()
        .map(|&k| (blocks[k].iter().zip(&dir).map(|(a, b)| a * b).sum(), k))
        .collect();
    proj.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for &(_, k) in &proj[proj.len() / 2..] {
        assignments[k] = empty;
    }
}

/// Relearns every non-empty learned cluster. A failed solve keeps the
/// current transform.
#[allow(clippy::too_many_arguments)]
fn relearn(
    blocks: &[Vec<f64>],
    n: usize,
    config: &RdotConfig,
    assignments: &[usize],
    n_fixed: usize,
    learned: &mut [SeparableTransform],
    params: &mut [Option<DttPlusParams>],
    solutions: &mut [Option<LearningSolution>],
) -> Result<()> {
    for j in 0..learned.len() {
        let members: Vec<usize> = (0..blocks.len()).filter(|&k| assignments[k] == n_fixed + j).collect();
        if members.is_empty() {
            continue;
        }
        let Ok(sol) = learn_cluster(blocks, &members, n, config.learning_base) else {
            continue;
        };
        let t = dtt_plus_transform(format!("dtt+{j}"), &sol.params, config.learning_base, config.learning_base, n)?;
        learned[j] = t;
        params[j] = Some(sol.params);
        solutions[j] = Some(sol);
    }
    Ok(())
}

/// Per block: cost under the current assignment, best candidate, best cost.
fn evaluate(
    blocks: &[Vec<f64>],
    fixed: &[SeparableTransform],
    learned: &[SeparableTransform],
    assignments: &[usize],
    q: &QuantizerSpec,
    lambda: f64,
) -> Vec<(f64, usize, f64)> {
    let candidates: Vec<&SeparableTransform> = fixed.iter().chain(learned.iter()).collect();
    let n_t = candidates.len();
    blocks
        .par_iter()
        .zip(assignments.par_iter())
        .map(|(b, &cur)| {
            let costs: Vec<f64> = candidates.iter().map(|t| rd_cost(b, t, q, lambda, n_t)).collect();
            let mut best = 0;
            for k in 1..n_t {
                if costs[k] < costs[best] {
                    best = k;
                }
            }
            (costs[cur], best, costs[best])
        })
        .collect()
}

/// Lloyd-type alternation between learning a DTT+ per cluster and RD-based
/// reassignment against the learned and fixed transforms.
pub fn rdot_design(
    blocks: &[Vec<f64>],
    n: usize,
    fixed: &[SeparableTransform],
    config: &RdotConfig,
) -> Result<RdotOutcome> {
    if blocks.is_empty() {
        return Err(Error::Empty("no training blocks"));
    }
    if config.n_learned == 0 {
        return Err(Error::InvalidParameter("n_learned must be >= 1".into()));
    }
    if let Some(b) = blocks.iter().find(|b| b.len() != n * n) {
        return Err(Error::DimensionMismatch { expected: n * n, found: b.len() });
    }
    if let Some(t) = fixed.iter().find(|t| t.n() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: t.n() });
    }
    config.quantizer.validate()?;
    if !(config.tol >= 0.0) || config.max_iters == 0 {
        return Err(Error::InvalidParameter("tol must be >= 0 and max_iters >= 1".into()));
    }

    let n_fixed = fixed.len();
    let n_l = config.n_learned;
    let n_t = n_fixed + n_l;
    let learned_range = n_fixed..n_t;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.shuffle(&mut rng);
    let mut assignments = vec![0usize; blocks.len()];
    for (pos, &k) in order.iter().enumerate() {
        assignments[k] = n_fixed + pos % n_l;
    }

    let fallback = {
        let id = DttPlusParams { alpha_r: 0.0, beta_r: 1.0, i_r: 1, alpha_c: 0.0, beta_c: 1.0, i_c: 1 };
        dtt_plus_transform("learned", &id, config.learning_base, config.learning_base, n)?
    };
    let mut learned: Vec<SeparableTransform> = vec![fallback; n_l];
    let mut params: Vec<Option<DttPlusParams>> = vec![None; n_l];
    let mut solutions: Vec<Option<LearningSolution>> = vec![None; n_l];
    let mut cost_trace = Vec::new();
    let mut steps = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let q = &config.quantizer;
    let lambda = config.lagrangian;
    for _ in 0..config.max_iters {
        iterations += 1;
        let snapshot = (assignments.clone(), learned.clone(), params.clone(), solutions.clone());
        for c in learned_range.clone() {
            if !assignments.contains(&c) {
                split_largest(blocks, &mut assignments, learned_range.clone(), c, &mut rng);
            }
        }
        relearn(blocks, n, config, &assignments, n_fixed, &mut learned, &mut params, &mut solutions)?;

        let mut evaluated = evaluate(blocks, fixed, &learned, &assignments, q, lambda);
        let mut after: f64 = evaluated.iter().map(|e| e.2).sum();
        let reverted = cost_trace.last().is_some_and(|&prev| after > prev);
        if reverted {
            // Relearning (or a split) that raises the cost is undone; the old
            // state is a fixed point, so the loop ends here.
            (assignments, learned, params, solutions) = snapshot;
            evaluated = evaluate(blocks, fixed, &learned, &assignments, q, lambda);
            after = evaluated.iter().map(|e| e.2).sum();
        }
        let before: f64 = evaluated.iter().map(|e| e.0).sum();
        for (a, e) in assignments.iter_mut().zip(&evaluated) {
            *a = e.1;
        }
        if cost_trace.is_empty() {
            cost_trace.push(before);
        }
        let prev = *cost_trace.last().expect("non-empty trace");
        cost_trace.push(after);
        steps.push((before, after));
        let rel = if prev > 0.0 { (prev - after) / prev } else { 0.0 };
        if reverted || rel < config.tol {
            converged = true;
            break;
        }
    }

    Ok(RdotOutcome {
        state: RdotState {
            format_version: 1,
            fixed_names: fixed.iter().map(|t| t.name.clone()).collect(),
            learned_params: params,
            learned_solutions: solutions,
            assignments,
            lagrangian: config.lagrangian,
            cost_trace,
            assignment_steps: steps,
            iterations,
            converged,
        },
        learned,
    })
}

/// Row-major flattening of a block matrix.
pub fn flatten_block(b: &DMatrix<f64>) -> Vec<f64> {
    (0..b.nrows()).flat_map(|r| (0..b.ncols()).map(move |c| (r, c))).map(|(r, c)| b[(r, c)]).collect()
}
