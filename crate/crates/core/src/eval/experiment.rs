//! End-to-end experiment: train per mode, build integer kernels, encode the
//! test split under every transform-set configuration and compare RD curves.
//!
//! Configurations, each a candidate set competing per block in RD selection:
//!
//! | name | candidates |
//! |------|------------|
//! | `fixed` | the four row/column combinations of DCT-2 and DST-7 |
//! | `fixed+dtt+` | fixed plus the learned DTT+ of every cluster |
//! | `fixed+int-dtt+` | fixed plus the integer approximations of the same DTT+ |
//! | `fixed+sep-klt` | fixed plus a sep-KLT trained on every cluster |
//!
//! Dense kernels (fixed set, DTT+, sep-KLT, and the base DTTs under INT-DTT+)
//! are quantized to 8 bits. Reported rate is the empirical entropy of the
//! levels with one context per coefficient position, plus the empirical
//! entropy of the chosen transform indices, in bits per sample. PSNR uses a
//! peak of 255 against the unquantized residual.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bdrate::{bd_rate, RdCurve};
use super::dataset::ResidualDataset;
use super::sep_klt::{quantized_transform, sep_klt_train, DENSE_BIT_DEPTH};
use super::synth::{synth_modes, SynthModel};
use crate::base_transforms::{closed_form_dct2, closed_form_dst7, gft, IntegerKernel};
use crate::graph_learning::LearningSolution;
use crate::graph_model::{rank_one_update, BaseGraphKind, DttPlusParams};
use crate::integer_kernel::{
    build_integer_transition, count_ops_dense, quality_of_matrix, select_base, IntegerTransition, KernelQuality,
    OpCount, QuantConfig,
};
use crate::mode_clustering::{memory_bits, sep_klt_memory_bits};
use crate::progressive::{transition_kernel, transition_kernel_signed};
use crate::rdot::{encode_block, rd_select, rdot_design, EntropyEstimator, QuantizerSpec, RdotConfig, SeparableTransform};
use crate::{Error, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const CONFIG_NAMES: [&str; 4] = ["fixed", "fixed+dtt+", "fixed+int-dtt+", "fixed+sep-klt"];
const PEAK: f64 = 255.0;

fn default_seed() -> u64 {
    1
}
fn default_n() -> usize {
    8
}
fn default_train() -> usize {
    2000
}
fn default_test() -> usize {
    5000
}
fn default_steps() -> Vec<f64> {
    vec![3.0, 4.5, 6.5, 9.0, 13.0, 18.0]
}
fn default_lambda_factor() -> f64 {
    std::f64::consts::LN_2 / 6.0
}
fn default_train_step() -> f64 {
    8.0
}
fn default_n_learned() -> usize {
    1
}
fn default_tol() -> f64 {
    0.01
}
fn default_max_iters() -> usize {
    20
}
fn default_offset() -> f64 {
    crate::rdot::DEFAULT_DEADZONE_OFFSET
}

/// Statistics of one synthetic mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub label: String,
    pub rho_r: f64,
    pub rho_c: f64,
    pub boundary_decay_r: f64,
    pub boundary_decay_c: f64,
    pub sigma: f64,
}

/// Experiment configuration, read from TOML.
///
/// Either `modes` (synthetic data) or both dataset paths must be given.
/// The Lagrangian at quantizer step `D` is `lambda_factor * D²`, in training
/// and in evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_train")]
    pub train_per_mode: usize,
    #[serde(default = "default_test")]
    pub test_per_mode: usize,
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
    #[serde(default)]
    pub train_dataset: Option<PathBuf>,
    #[serde(default)]
    pub test_dataset: Option<PathBuf>,
    #[serde(default = "default_steps")]
    pub steps: Vec<f64>,
    #[serde(default = "default_lambda_factor")]
    pub lambda_factor: f64,
    #[serde(default = "default_train_step")]
    pub train_step: f64,
    #[serde(default = "default_offset")]
    pub deadzone_offset: f64,
    #[serde(default = "default_n_learned")]
    pub n_learned: usize,
    #[serde(default = "default_tol")]
    pub rdot_tol: f64,
    #[serde(default = "default_max_iters")]
    pub rdot_max_iters: usize,
    #[serde(default)]
    pub quant: QuantConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn lambda(&self, step: f64) -> f64 {
        self.lambda_factor * step * step
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(2..=64).contains(&self.n) {
            return bad(format!("n = {} outside 2..=64", self.n));
        }
        match (&self.train_dataset, &self.test_dataset) {
            (Some(_), Some(_)) => {}
            (None, None) => {
                if self.modes.is_empty() {
                    return bad("no modes and no datasets given".into());
                }
                if self.train_per_mode == 0 || self.test_per_mode == 0 {
                    return bad("train_per_mode and test_per_mode must be >= 1".into());
                }
            }
            _ => return bad("train_dataset and test_dataset must be given together".into()),
        }
        if self.steps.len() < 4 {
            return bad(format!("need at least 4 quantizer steps, got {}", self.steps.len()));
        }
        if self.steps.iter().any(|&s| !(s > 0.0 && s.is_finite())) || !(self.train_step > 0.0) {
            return bad("quantizer steps must be positive".into());
        }
        let mut sorted = self.steps.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("quantizer steps must be distinct".into());
        }
        if !(self.lambda_factor >= 0.0 && self.lambda_factor.is_finite()) {
            return bad(format!("lambda_factor = {}", self.lambda_factor));
        }
        if !(0.0..=0.5).contains(&self.deadzone_offset) {
            return bad(format!("deadzone_offset = {} outside [0, 0.5]", self.deadzone_offset));
        }
        if self.n_learned == 0 || self.rdot_max_iters == 0 || !(self.rdot_tol >= 0.0) {
            return bad("n_learned and rdot_max_iters must be >= 1, rdot_tol >= 0".into());
        }
        for m in &self.modes {
            model_of(m, self.n, 1, 0).validate()?;
        }
        Ok(())
    }
}

fn model_of(m: &ModeSpec, n: usize, count: usize, seed: u64) -> SynthModel {
    SynthModel {
        rho_r: m.rho_r,
        rho_c: m.rho_c,
        boundary_decay_r: m.boundary_decay_r,
        boundary_decay_c: m.boundary_decay_c,
        sigma: m.sigma,
        n,
        count,
        seed,
    }
}

fn split_seed(seed: u64, mode: usize, test: bool) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(2 * mode as u64 + test as u64 + 1)
}

/// Train and test datasets of an experiment.
pub fn experiment_data(config: &ExperimentConfig) -> Result<(ResidualDataset, ResidualDataset)> {
    if let (Some(tr), Some(te)) = (&config.train_dataset, &config.test_dataset) {
        let train = ResidualDataset::load(tr)?;
        let test = ResidualDataset::load(te)?;
        if train.n != config.n || test.n != config.n {
            return Err(Error::Config(format!("datasets have block size {}/{}, config n = {}", train.n, test.n, config.n)));
        }
        if train.labels != test.labels {
            return Err(Error::Config("train and test mode labels differ".into()));
        }
        return Ok((train, test));
    }
    let build = |test: bool, count: usize| {
        let models: Vec<(String, SynthModel)> = config
            .modes
            .iter()
            .enumerate()
            .map(|(k, m)| (m.label.clone(), model_of(m, config.n, count, split_seed(config.seed, k, test))))
            .collect();
        synth_modes(&models)
    };
    Ok((build(false, config.train_per_mode)?, build(true, config.test_per_mode)?))
}

/// Integer realization of one axis of a learned DTT+.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AxisIntegerTransform {
    pub transition: IntegerTransition,
    /// 8-bit integer base DTT.
    pub base_kernel: IntegerKernel,
    pub quality: KernelQuality,
    /// Effective analysis matrix: dequantized transition times dequantized base.
    #[serde(skip)]
    pub analysis: DMatrix<f64>,
}

/// Builds the INT-DTT+ of one axis of a graph learned on the path graph,
/// `beta * L_path + alpha * e_i e_i^T`.
///
/// The base DTT is chosen from the normalized self-loop `alpha / beta`. With
/// the DST-7 base the update becomes `beta * L_dst7 + (alpha - beta) e_1 e_1^T`;
/// a self-loop away from the first node always uses the DCT-2 base.
pub fn int_dtt_plus_axis(alpha: f64, beta: f64, i: usize, n: usize, quant: &QuantConfig) -> Result<AxisIntegerTransform> {
    let choice = select_base(alpha / beta);
    let (kind, delta) = match choice {
        BaseGraphKind::PathWithUnitSelfLoop if i == 1 => (choice, alpha - beta),
        _ => (BaseGraphKind::PathGraph, alpha),
    };
    let base_lap = kind.laplacian(n)?;
    let base_eig = gft(&base_lap)?;
    let kernel = if delta >= 0.0 {
        transition_kernel(&base_lap, &base_eig, delta, beta, i)?
    } else {
        transition_kernel_signed(&base_lap, &base_eig, delta, beta, i)?
    };
    let transition = build_integer_transition(&kernel, kind, quant)?;
    let base_kernel = IntegerKernel::quantize(&base_eig.analysis(), DENSE_BIT_DEPTH)?;
    let kq = transition.to_float();
    let quality = quality_of_matrix(&kq, &kernel.k_matrix);
    let analysis = &kq * base_kernel.to_f64();
    Ok(AxisIntegerTransform { transition, base_kernel, quality, analysis })
}

/// The four DCT-2/DST-7 row/column combinations, 8-bit quantized.
pub fn fixed_set(n: usize) -> Result<Vec<SeparableTransform>> {
    let dct = closed_form_dct2(n)?.analysis();
    let dst = closed_form_dst7(n)?.analysis();
    let mut out = Vec::new();
    for (rn, r) in [("dct2", &dct), ("dst7", &dst)] {
        for (cn, c) in [("dct2", &dct), ("dst7", &dst)] {
            out.push(quantized_transform(format!("{rn}-{cn}"), r, c, DENSE_BIT_DEPTH)?.0);
        }
    }
    Ok(out)
}

/// One row of the RD table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub config: String,
    pub mode: String,
    pub step: f64,
    pub lambda: f64,
    /// Bits per sample.
    pub rate: f64,
    pub psnr: f64,
    /// Blocks coded with each candidate, in candidate order.
    pub usage: Vec<usize>,
}

/// Codes `blocks` with RD selection among `candidates` at one operating point.
pub fn encode_set(
    blocks: &[Vec<f64>],
    candidates: &[SeparableTransform],
    spec: &QuantizerSpec,
    lambda: f64,
) -> Result<(f64, f64, Vec<usize>)> {
    let first = blocks.first().ok_or(Error::Empty("no blocks to encode"))?;
    let n2 = first.len();
    let coded: Vec<(usize, Vec<i32>, f64)> = blocks
        .par_iter()
        .map(|b| {
            let choice = rd_select(b, candidates, spec, lambda)?;
            let e = encode_block(b, &candidates[choice.index], spec);
            Ok((choice.index, e.levels, e.distortion))
        })
        .collect::<Result<_>>()?;
    let mut est = EntropyEstimator::new(n2);
    let mut usage = vec![0usize; candidates.len()];
    let mut distortion = 0.0;
    for (idx, levels, d) in &coded {
        est.add_block(levels);
        usage[*idx] += 1;
        distortion += d;
    }
    let count = blocks.len() as f64;
    let index_bits: f64 = usage
        .iter()
        .filter(|&&u| u > 0)
        .map(|&u| {
            let p = u as f64 / count;
            -(u as f64) * p.log2()
        })
        .sum();
    let samples = count * n2 as f64;
    let rate = (est.total_bits() + index_bits) / samples;
    let mse = (distortion / samples).max(1e-12);
    let psnr = 10.0 * (PEAK * PEAK / mse).log10();
    Ok((rate, psnr, usage))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RdotTrace {
    pub cost_trace: Vec<f64>,
    pub assignment_steps: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    /// Training blocks per candidate after the last reassignment.
    pub cluster_sizes: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnedKernel {
    pub cluster: usize,
    pub params: DttPlusParams,
    pub solution: LearningSolution,
    pub row: AxisIntegerTransform,
    pub col: AxisIntegerTransform,
    /// `n + nnz(F)` per axis, before grouping.
    pub raw_multiplications: [usize; 2],
    pub ops: [OpCount; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeSummary {
    pub label: String,
    pub train_blocks: usize,
    pub test_blocks: usize,
    pub rdot: RdotTrace,
    pub kernels: Vec<LearnedKernel>,
    /// BD-rate in percent of each configuration against `fixed`.
    pub bd_rate: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpSummary {
    /// Grouped count of the 8-bit integer DCT-2 applied to one vector.
    pub integer_dct2: OpCount,
    pub int_dtt_plus_median_multiplications: f64,
    pub int_dtt_plus_max_raw_multiplications: usize,
    pub dense_kernel_multiplications: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MemorySummary {
    pub kernels: usize,
    pub int_dtt_plus_bits: usize,
    pub sep_klt_bits: usize,
    pub sep_klt_bits_per_kernel: usize,
    pub dense_fallbacks: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub modes: Vec<ModeSummary>,
    /// Mean BD-rate over modes per configuration.
    pub average_bd_rate: Vec<(String, f64)>,
    pub ops: OpSummary,
    pub memory: MemorySummary,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub rows: Vec<RdRow>,
    pub summary: ExperimentSummary,
}

impl ExperimentReport {
    pub fn rd_csv(&self) -> String {
        let mut out = String::from("config,mode,step,lambda,rate,psnr\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{},{}\n", r.config, r.mode, r.step, r.lambda, r.rate, r.psnr));
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.summary).map_err(|e| Error::Format(e.to_string()))
    }

    /// BD-rate of `config` for mode `label`.
    pub fn bd_rate(&self, label: &str, config: &str) -> Option<f64> {
        let m = self.summary.modes.iter().find(|m| m.label == label)?;
        m.bd_rate.iter().find(|(c, _)| c == config).map(|(_, v)| *v)
    }

    /// Writes `rd_points.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let csv = dir.join("rd_points.csv");
        let json = dir.join("summary.json");
        std::fs::write(&csv, self.rd_csv())?;
        std::fs::write(&json, self.summary_json()? + "\n")?;
        Ok(vec![csv, json])
    }
}

struct ModeResult {
    summary: ModeSummary,
    rows: Vec<RdRow>,
    transitions: Vec<IntegerTransition>,
    sep_klts: usize,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn run_mode(
    config: &ExperimentConfig,
    mode: usize,
    label: &str,
    train: Vec<Vec<f64>>,
    test: Vec<Vec<f64>>,
    fixed: &[SeparableTransform],
) -> Result<ModeResult> {
    let n = config.n;
    let ctx = |e: Error| match e {
        Error::LearningFailed(m) => Error::LearningFailed(format!("mode {label}: {m}")),
        other => other,
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(format!("mode {label} has no train or test blocks")));
    }
    let rdot_cfg = RdotConfig {
        n_learned: config.n_learned,
        lagrangian: config.lambda(config.train_step),
        quantizer: QuantizerSpec { step: config.train_step, deadzone_offset: config.deadzone_offset },
        tol: config.rdot_tol,
        max_iters: config.rdot_max_iters,
        seed: split_seed(config.seed, mode, false) ^ 0x5EED,
        learning_base: BaseGraphKind::PathGraph,
    };
    let outcome = rdot_design(&train, n, fixed, &rdot_cfg).map_err(ctx)?;
    let state = &outcome.state;
    let n_t = fixed.len() + config.n_learned;

    let mut dtt = Vec::new();
    let mut int_dtt = Vec::new();
    let mut klt = Vec::new();
    let mut kernels = Vec::new();
    for j in 0..config.n_learned {
        let (Some(params), Some(solution)) = (state.learned_params[j], state.learned_solutions[j]) else {
            continue;
        };
        let lr = rank_one_update(&BaseGraphKind::PathGraph.laplacian(n)?, params.alpha_r, params.beta_r, params.i_r)?;
        let lc = rank_one_update(&BaseGraphKind::PathGraph.laplacian(n)?, params.alpha_c, params.beta_c, params.i_c)?;
        let (er, ec) = (gft(&lr)?, gft(&lc)?);
        dtt.push(quantized_transform(format!("dtt+{j}"), &er.analysis(), &ec.analysis(), DENSE_BIT_DEPTH)?.0);
        let row = int_dtt_plus_axis(params.alpha_r, params.beta_r, params.i_r, n, &config.quant)?;
        let col = int_dtt_plus_axis(params.alpha_c, params.beta_c, params.i_c, n, &config.quant)?;
        int_dtt.push(SeparableTransform::new(format!("int-dtt+{j}"), &row.analysis, &col.analysis)?);
        let members: Vec<Vec<f64>> = state.members(fixed.len() + j).into_iter().map(|k| train[k].clone()).collect();
        if !members.is_empty() {
            klt.push(sep_klt_train(&members, n)?.quantized(format!("sep-klt{j}"))?);
        }
        let raw = |a: &AxisIntegerTransform| match &a.transition {
            IntegerTransition::Sparse(k) => k.n + k.nnz(),
            IntegerTransition::DenseFallback { kernel, .. } => kernel.rows * kernel.cols,
        };
        kernels.push(LearnedKernel {
            cluster: j,
            params,
            solution,
            raw_multiplications: [raw(&row), raw(&col)],
            ops: [row.transition.count_ops(), col.transition.count_ops()],
            row,
            col,
        });
    }

    let sets: Vec<(&str, Vec<SeparableTransform>)> = CONFIG_NAMES
        .iter()
        .zip([Vec::new(), dtt, int_dtt, klt])
        .map(|(&name, extra)| (name, fixed.iter().cloned().chain(extra).collect()))
        .collect();
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (name, cands) in &sets {
        let mut pts = Vec::new();
        for &step in &config.steps {
            let spec = QuantizerSpec { step, deadzone_offset: config.deadzone_offset };
            let lambda = config.lambda(step);
            let (rate, psnr, usage) = encode_set(&test, cands, &spec, lambda)?;
            pts.push((rate, psnr));
            rows.push(RdRow { config: name.to_string(), mode: label.to_string(), step, lambda, rate, psnr, usage });
        }
        curves.push(RdCurve::new(pts)?);
    }
    let bd = sets
        .iter()
        .zip(&curves)
        .skip(1)
        .map(|((name, _), c)| Ok((name.to_string(), bd_rate(&curves[0], c)?)))
        .collect::<Result<Vec<_>>>()?;

    let transitions = kernels.iter().flat_map(|k| [k.row.transition.clone(), k.col.transition.clone()]).collect();
    let sep_klts = sets[3].1.len() - fixed.len();
    Ok(ModeResult {
        summary: ModeSummary {
            label: label.to_string(),
            train_blocks: train.len(),
            test_blocks: test.len(),
            rdot: RdotTrace {
                cost_trace: state.cost_trace.clone(),
                assignment_steps: state.assignment_steps.clone(),
                iterations: state.iterations,
                converged: state.converged,
                cluster_sizes: (0..n_t).map(|c| state.members(c).len()).collect(),
            },
            kernels,
            bd_rate: bd,
        },
        rows,
        transitions,
        sep_klts,
    })
}

/// Runs the full pipeline. Results depend only on the configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let (train, test) = experiment_data(config)?;
    let fixed = fixed_set(config.n)?;
    let results = (0..train.labels.len())
        .map(|m| {
            let label = &train.labels[m];
            run_mode(config, m, label, train.float_blocks(m as u16), test.float_blocks(m as u16), &fixed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut average = Vec::new();
    for name in &CONFIG_NAMES[1..] {
        let vals: Vec<f64> = results
            .iter()
            .filter_map(|r| r.summary.bd_rate.iter().find(|(c, _)| c == name).map(|(_, v)| *v))
            .collect();
        average.push((name.to_string(), vals.iter().sum::<f64>() / vals.len().max(1) as f64));
    }

    let dct_kernel = IntegerKernel::quantize(&closed_form_dct2(config.n)?.analysis(), DENSE_BIT_DEPTH)?;
    let transitions: Vec<IntegerTransition> = results.iter().flat_map(|r| r.transitions.iter().cloned()).collect();
    let mut mults: Vec<f64> = transitions.iter().map(|t| t.count_ops().multiplications as f64).collect();
    let max_raw = results
        .iter()
        .flat_map(|r| r.summary.kernels.iter().flat_map(|k| k.raw_multiplications))
        .max()
        .unwrap_or(0);
    let n_klt: usize = results.iter().map(|r| r.sep_klts).sum();
    let ops = OpSummary {
        integer_dct2: count_ops_dense(&dct_kernel),
        int_dtt_plus_median_multiplications: median(&mut mults),
        int_dtt_plus_max_raw_multiplications: max_raw,
        dense_kernel_multiplications: config.n * config.n,
    };
    let memory = MemorySummary {
        kernels: transitions.len() / 2,
        int_dtt_plus_bits: memory_bits(&transitions),
        sep_klt_bits: sep_klt_memory_bits(config.n, DENSE_BIT_DEPTH as usize, n_klt),
        sep_klt_bits_per_kernel: sep_klt_memory_bits(config.n, DENSE_BIT_DEPTH as usize, 1),
        dense_fallbacks: transitions.iter().filter(|t| t.is_fallback()).count(),
    };
    let mut rows = Vec::new();
    let mut modes = Vec::new();
    for r in results {
        rows.extend(r.rows);
        modes.push(r.summary);
    }
    Ok(ExperimentReport {
        rows,
        summary: ExperimentSummary {
            format_version: REPORT_FORMAT_VERSION,
            config: config.clone(),
            modes,
            average_bd_rate: average,
            ops,
            memory,
        },
    })
}
