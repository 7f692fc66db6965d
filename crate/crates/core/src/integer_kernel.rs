//! INT-DTT+: integer approximation of a transition kernel.
//!
//! A kernel is split as `K = (I + F) K_d` with `K_d = diag(K)` and
//! `F = K_o K_d^-1`. The diagonal is quantized with precision `p_d` and the
//! off-diagonal factor with a coarser `p_f`; both are clipped to their bit
//! depths and entries of `F` that round to zero are dropped.
//!
//! # Integer arithmetic
//!
//! All divisions by a precision `p = 2^s` are done by [`round_shift`]:
//! `sign(v) * ((|v| + 2^(s-1)) >> s)`, i.e. round half away from zero. The
//! forward transform of base-DTT coefficients `y` is
//!
//! ```text
//! z_k = round_shift(d_k * y_k, s_d)
//! q_k = z_k + round_shift(Σ_j f_kj * z_j, s_f)
//! ```
//!
//! and the inverse applies the transposed factors in reverse order:
//!
//! ```text
//! w_k = q_k + round_shift(Σ_j f_jk * q_j, s_f)
//! y_k = round_shift(d_k * w_k, s_d)
//! ```
//!
//! Accumulation is 32-bit signed and checked. With 16-bit inputs, 8-bit
//! diagonal and 3-bit `F`, the largest intermediate is below `2^23` for
//! `n <= 32`, so [`Error::Overflow`] only fires on out-of-range inputs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::base_transforms::IntegerKernel;
use crate::graph_model::BaseGraphKind;
use crate::progressive::TransitionKernel;
use crate::{Error, Result};

/// Diagonal entries with smaller magnitude cannot be factored out.
pub const MIN_SPLIT_DIAGONAL: f64 = 1e-6;
/// On-disk format version of [`KernelRecord`].
pub const KERNEL_FORMAT_VERSION: u32 = 1;

/// `K = (I + F) K_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitKernel {
    pub diag: DVector<f64>,
    pub f: DMatrix<f64>,
}

pub fn split(kernel: &TransitionKernel) -> Result<SplitKernel> {
    split_matrix(&kernel.k_matrix)
}

pub fn split_matrix(k: &DMatrix<f64>) -> Result<SplitKernel> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: k.ncols() });
    }
    let diag = k.diagonal();
    if let Some((index, &value)) = diag.iter().enumerate().find(|(_, v)| v.abs() <= MIN_SPLIT_DIAGONAL) {
        return Err(Error::SplitFailure { index, value });
    }
    let f = DMatrix::from_fn(n, n, |r, c| if r == c { 0.0 } else { k[(r, c)] / diag[c] });
    Ok(SplitKernel { diag, f })
}

impl SplitKernel {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        (DMatrix::identity(n, n) + &self.f) * DMatrix::from_diagonal(&self.diag)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffDiagEntry {
    pub row: usize,
    pub col: usize,
    pub value: i32,
}

/// Quantized `(K'_dq, F'_q)` pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerTransitionKernel {
    pub base: BaseGraphKind,
    pub n: usize,
    /// Diagonal integers; value is `diag[k] / 2^diag_shift`.
    pub diag: Vec<i32>,
    pub diag_shift: u32,
    /// Nonzero entries of `F`, sorted by `(row, col)`; value is `value / 2^off_shift`.
    pub off_diag: Vec<OffDiagEntry>,
    pub off_shift: u32,
    pub bit_depth_d: u32,
    pub bit_depth_f: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub p_d: u32,
    pub p_f: u32,
    pub bit_depth_d: u32,
    pub bit_depth_f: u32,
    /// Weights of (orthogonality, closeness, norm deviation) during fine-tuning.
    pub weights: [f64; 3],
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self { p_d: 128, p_f: 4, bit_depth_d: 8, bit_depth_f: 3, weights: [1.0, 1.0, 1.0] }
    }
}

fn log2_exact(p: u32) -> Result<u32> {
    if p == 0 || !p.is_power_of_two() {
        Err(Error::NotPowerOfTwo(p))
    } else {
        Ok(p.trailing_zeros())
    }
}

fn signed_range(bits: u32) -> Result<(i64, i64)> {
    if !(2..=16).contains(&bits) {
        return Err(Error::InvalidParameter(format!("bit depth {bits} outside 2..=16")));
    }
    let max = (1i64 << (bits - 1)) - 1;
    Ok((-max - 1, max))
}

fn quantize_value(v: f64, scale: f64, range: (i64, i64)) -> i32 {
    ((v * scale).round() as i64).clamp(range.0, range.1) as i32
}

/// Rounds `p * K_d` and `p_f * F`, then clips to the declared bit depths.
pub fn quantize(
    split: &SplitKernel,
    p_d: u32,
    p_f: u32,
    bit_depth_d: u32,
    bit_depth_f: u32,
    base: BaseGraphKind,
) -> Result<IntegerTransitionKernel> {
    let diag_shift = log2_exact(p_d)?;
    let off_shift = log2_exact(p_f)?;
    let range_d = signed_range(bit_depth_d)?;
    let range_f = signed_range(bit_depth_f)?;
    let n = split.diag.len();
    let diag = split.diag.iter().map(|&v| quantize_value(v, p_d as f64, range_d)).collect();
    let mut off_diag = Vec::new();
    for row in 0..n {
        for col in 0..n {
            if row == col {
                continue;
            }
            let value = quantize_value(split.f[(row, col)], p_f as f64, range_f);
            if value != 0 {
                off_diag.push(OffDiagEntry { row, col, value });
            }
        }
    }
    Ok(IntegerTransitionKernel { base, n, diag, diag_shift, off_diag, off_shift, bit_depth_d, bit_depth_f })
}

impl IntegerTransitionKernel {
    /// Exact identity: unit diagonal at shift 0, no off-diagonal terms.
    pub fn identity(n: usize, base: BaseGraphKind, config: &QuantConfig) -> Self {
        Self {
            base,
            n,
            diag: vec![1; n],
            diag_shift: 0,
            off_diag: Vec::new(),
            off_shift: config.p_f.trailing_zeros(),
            bit_depth_d: config.bit_depth_d,
            bit_depth_f: config.bit_depth_f,
        }
    }

    pub fn nnz(&self) -> usize {
        self.off_diag.len()
    }

    pub fn diag_value(&self, k: usize) -> f64 {
        self.diag[k] as f64 / (1u64 << self.diag_shift) as f64
    }

    pub fn f_matrix(&self) -> DMatrix<f64> {
        let scale = (1u64 << self.off_shift) as f64;
        let mut f = DMatrix::zeros(self.n, self.n);
        for e in &self.off_diag {
            f[(e.row, e.col)] = e.value as f64 / scale;
        }
        f
    }

    /// Float kernel `(I + F'_q) K'_dq`.
    pub fn to_float(&self) -> DMatrix<f64> {
        let d = DVector::from_fn(self.n, |k, _| self.diag_value(k));
        (DMatrix::identity(self.n, self.n) + self.f_matrix()) * DMatrix::from_diagonal(&d)
    }

    fn check_invariants(&self) -> Result<()> {
        let (lo_d, hi_d) = signed_range(self.bit_depth_d)?;
        let (lo_f, hi_f) = signed_range(self.bit_depth_f)?;
        if self.diag.len() != self.n {
            return Err(Error::Format(format!("diagonal has {} entries, n = {}", self.diag.len(), self.n)));
        }
        if self.diag.iter().any(|&v| (v as i64) < lo_d || (v as i64) > hi_d) {
            return Err(Error::Format("diagonal entry outside its bit depth".into()));
        }
        let mut prev: Option<(usize, usize)> = None;
        for e in &self.off_diag {
            if e.row >= self.n || e.col >= self.n || e.row == e.col || e.value == 0 {
                return Err(Error::Format(format!("invalid off-diagonal entry {e:?}")));
            }
            if (e.value as i64) < lo_f || (e.value as i64) > hi_f {
                return Err(Error::Format("off-diagonal entry outside its bit depth".into()));
            }
            if prev.is_some_and(|p| p >= (e.row, e.col)) {
                return Err(Error::Format("off-diagonal entries not sorted".into()));
            }
            prev = Some((e.row, e.col));
        }
        if self.diag_shift > 24 || self.off_shift > 24 {
            return Err(Error::Format("shift too large".into()));
        }
        Ok(())
    }
}

/// HEVC-style kernel quality figures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelQuality {
    /// `max |T^T T - I|`.
    pub orthogonality: f64,
    /// `max |T - K|`.
    pub closeness: f64,
    /// `max_k | ||row_k|| - 1 |`.
    pub norm_dev: f64,
}

impl KernelQuality {
    pub fn combined(&self, weights: &[f64; 3]) -> f64 {
        weights[0] * self.orthogonality + weights[1] * self.closeness + weights[2] * self.norm_dev
    }
}

pub fn quality_of_matrix(t: &DMatrix<f64>, float_ref: &DMatrix<f64>) -> KernelQuality {
    let n = t.nrows();
    let orthogonality = (t.tr_mul(t) - DMatrix::identity(n, n)).amax();
    let closeness = (t - float_ref).amax();
    let norm_dev = t.row_iter().map(|r| (r.norm() - 1.0).abs()).fold(0.0, f64::max);
    KernelQuality { orthogonality, closeness, norm_dev }
}

pub fn quality(ik: &IntegerTransitionKernel, float_ref: &DMatrix<f64>) -> KernelQuality {
    quality_of_matrix(&ik.to_float(), float_ref)
}

/// Coordinate descent over the stored integers, trying `-1` and `+1` on each.
///
/// A change is kept only if it strictly lowers the weighted quality sum.
/// Sweeps repeat until one makes no change. Returns the tuned kernel and the
/// combined objective before the first sweep and after each sweep.
pub fn fine_tune(
    ik: &IntegerTransitionKernel,
    float_ref: &DMatrix<f64>,
    weights: &[f64; 3],
) -> Result<(IntegerTransitionKernel, Vec<f64>)> {
    let (lo_d, hi_d) = signed_range(ik.bit_depth_d)?;
    let (lo_f, hi_f) = signed_range(ik.bit_depth_f)?;
    let mut cur = ik.clone();
    let mut best = quality(&cur, float_ref).combined(weights);
    let mut trace = vec![best];
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let mut changed = false;
        for k in 0..cur.n {
            for delta in [-1i32, 1] {
                let v = cur.diag[k] + delta;
                if (v as i64) < lo_d || (v as i64) > hi_d {
                    continue;
                }
                let old = cur.diag[k];
                cur.diag[k] = v;
                let obj = quality(&cur, float_ref).combined(weights);
                if obj < best {
                    best = obj;
                    changed = true;
                } else {
                    cur.diag[k] = old;
                }
            }
        }
        for e in 0..cur.off_diag.len() {
            for delta in [-1i32, 1] {
                let v = cur.off_diag[e].value + delta;
                if (v as i64) < lo_f || (v as i64) > hi_f {
                    continue;
                }
                let old = cur.off_diag[e].value;
                cur.off_diag[e].value = v;
                let obj = quality(&cur, float_ref).combined(weights);
                if obj < best {
                    best = obj;
                    changed = true;
                } else {
                    cur.off_diag[e].value = old;
                }
            }
        }
        trace.push(best);
        if !changed {
            break;
        }
    }
    cur.off_diag.retain(|e| e.value != 0);
    Ok((cur, trace))
}

/// Integer payload of one axis transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum IntegerTransition {
    /// Factored `(I + F) K_d` form.
    Sparse(IntegerTransitionKernel),
    /// The split failed; `K` quantized densely to 8 bits.
    DenseFallback { base: BaseGraphKind, kernel: IntegerKernel },
}

impl IntegerTransition {
    pub fn to_float(&self) -> DMatrix<f64> {
        match self {
            IntegerTransition::Sparse(k) => k.to_float(),
            IntegerTransition::DenseFallback { kernel, .. } => kernel.to_f64(),
        }
    }

    pub fn base(&self) -> BaseGraphKind {
        match self {
            IntegerTransition::Sparse(k) => k.base,
            IntegerTransition::DenseFallback { base, .. } => *base,
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self, IntegerTransition::DenseFallback { .. })
    }

    pub fn count_ops(&self) -> OpCount {
        match self {
            IntegerTransition::Sparse(k) => count_ops(k),
            IntegerTransition::DenseFallback { kernel, .. } => count_ops_dense(kernel),
        }
    }
}

/// Split, quantize and fine-tune a transition kernel.
///
/// An identity transition is emitted as the exact unit diagonal. When the
/// split fails the kernel is quantized densely and flagged as a fallback.
pub fn build_integer_transition(
    kernel: &TransitionKernel,
    base: BaseGraphKind,
    config: &QuantConfig,
) -> Result<IntegerTransition> {
    let n = kernel.n();
    if kernel.alpha == 0.0 || (&kernel.k_matrix - DMatrix::identity(n, n)).amax() <= 1e-12 {
        return Ok(IntegerTransition::Sparse(IntegerTransitionKernel::identity(n, base, config)));
    }
    match split(kernel) {
        Ok(parts) => {
            let q = quantize(&parts, config.p_d, config.p_f, config.bit_depth_d, config.bit_depth_f, base)?;
            let (tuned, _) = fine_tune(&q, &kernel.k_matrix, &config.weights)?;
            Ok(IntegerTransition::Sparse(tuned))
        }
        Err(Error::SplitFailure { .. }) => Ok(IntegerTransition::DenseFallback {
            base,
            kernel: IntegerKernel::quantize(&kernel.k_matrix, 8)?,
        }),
        Err(e) => Err(e),
    }
}

/// Selects the base DTT whose first-node self-loop is closest to the learned one.
pub fn select_base(learned_self_loop_weight: f64) -> BaseGraphKind {
    if learned_self_loop_weight < 0.5 {
        BaseGraphKind::PathGraph
    } else {
        BaseGraphKind::PathWithUnitSelfLoop
    }
}

/// Divide by `2^s`, rounding half away from zero.
pub fn round_shift(v: i32, s: u32) -> i32 {
    if s == 0 {
        return v;
    }
    let half = 1i64 << (s - 1);
    let mag = ((v as i64).abs() + half) >> s;
    (if v < 0 { -mag } else { mag }) as i32
}

fn mul(a: i32, b: i32) -> Result<i32> {
    a.checked_mul(b).ok_or(Error::Overflow)
}

fn add(a: i32, b: i32) -> Result<i32> {
    a.checked_add(b).ok_or(Error::Overflow)
}

/// Forward INT-DTT+ on base-DTT coefficients.
pub fn forward(coeffs: &[i32], ik: &IntegerTransitionKernel) -> Result<Vec<i32>> {
    if coeffs.len() != ik.n {
        return Err(Error::DimensionMismatch { expected: ik.n, found: coeffs.len() });
    }
    let z = coeffs
        .iter()
        .zip(&ik.diag)
        .map(|(&y, &d)| Ok(round_shift(mul(d, y)?, ik.diag_shift)))
        .collect::<Result<Vec<i32>>>()?;
    let mut acc = vec![0i32; ik.n];
    for e in &ik.off_diag {
        acc[e.row] = add(acc[e.row], mul(e.value, z[e.col])?)?;
    }
    z.iter().zip(acc).map(|(&zk, a)| add(zk, round_shift(a, ik.off_shift))).collect()
}

/// Inverse INT-DTT+: the transposed factorization `K_d^T (I + F^T)`.
pub fn inverse(coeffs: &[i32], ik: &IntegerTransitionKernel) -> Result<Vec<i32>> {
    if coeffs.len() != ik.n {
        return Err(Error::DimensionMismatch { expected: ik.n, found: coeffs.len() });
    }
    let mut acc = vec![0i32; ik.n];
    for e in &ik.off_diag {
        acc[e.col] = add(acc[e.col], mul(e.value, coeffs[e.row])?)?;
    }
    let w = coeffs
        .iter()
        .zip(acc)
        .map(|(&q, a)| add(q, round_shift(a, ik.off_shift)))
        .collect::<Result<Vec<i32>>>()?;
    w.iter().zip(&ik.diag).map(|(&wk, &d)| Ok(round_shift(mul(d, wk)?, ik.diag_shift))).collect()
}

/// Arithmetic cost of one forward transform of an `n`-vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub multiplications: usize,
    pub additions: usize,
    pub shifts: usize,
}

/// Multiplies by a stored integer `v` at shift `s` are free when the
/// integer or its float value is `±1`.
fn is_unit(v: i32, shift: u32) -> bool {
    let m = v.unsigned_abs() as u64;
    m == 1 || m == 1u64 << shift
}

/// Counts operations of a forward INT-DTT+, grouping equal magnitudes within
/// each row of `F` into one product and ignoring products by one.
pub fn count_ops(ik: &IntegerTransitionKernel) -> OpCount {
    let mut ops = OpCount::default();
    for &d in &ik.diag {
        if d != 0 && !is_unit(d, ik.diag_shift) {
            ops.multiplications += 1;
            if ik.diag_shift > 0 {
                ops.shifts += 1;
            }
        }
    }
    for row in 0..ik.n {
        let entries: Vec<i32> = ik.off_diag.iter().filter(|e| e.row == row).map(|e| e.value).collect();
        if entries.is_empty() {
            continue;
        }
        ops.multiplications += distinct_non_unit_magnitudes(&entries, ik.off_shift);
        ops.additions += entries.len();
        if ik.off_shift > 0 {
            ops.shifts += 1;
        }
    }
    ops
}

/// Row-wise grouped count for a dense integer kernel applied to one vector.
pub fn count_ops_dense(kernel: &IntegerKernel) -> OpCount {
    let mut ops = OpCount::default();
    for r in 0..kernel.rows {
        let entries: Vec<i32> = (0..kernel.cols).map(|c| kernel.get(r, c)).filter(|&v| v != 0).collect();
        if entries.is_empty() {
            continue;
        }
        ops.multiplications += distinct_non_unit_magnitudes(&entries, kernel.shift);
        ops.additions += entries.len() - 1;
        if kernel.shift > 0 {
            ops.shifts += 1;
        }
    }
    ops
}

fn distinct_non_unit_magnitudes(entries: &[i32], shift: u32) -> usize {
    let mut mags: Vec<u32> = entries
        .iter()
        .filter(|&&v| v != 0 && !is_unit(v, shift))
        .map(|v| v.unsigned_abs())
        .collect();
    mags.sort_unstable();
    mags.dedup();
    mags.len()
}

/// Versioned serialization record for an integer transition kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub format_version: u32,
    pub kernel: IntegerTransitionKernel,
}

pub fn kernel_to_json(ik: &IntegerTransitionKernel) -> Result<String> {
    let rec = KernelRecord { format_version: KERNEL_FORMAT_VERSION, kernel: ik.clone() };
    serde_json::to_string_pretty(&rec).map_err(|e| Error::Format(e.to_string()))
}

pub fn kernel_from_json(s: &str) -> Result<IntegerTransitionKernel> {
    let rec: KernelRecord = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
    if rec.format_version != KERNEL_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported kernel format version {}", rec.format_version)));
    }
    rec.kernel.check_invariants()?;
    Ok(rec.kernel)
}
