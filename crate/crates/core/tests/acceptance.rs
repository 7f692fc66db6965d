//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits non-zero if any check fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dttplus::base_transforms::gft;
use dttplus::eval::{run_experiment, synth_residuals, ExperimentConfig, ExperimentReport, SynthModel};
use dttplus::graph_learning::{
    block_laplacian, cost, model_gradient, sample_covariance, solve, stationarity_residual, AxisBase,
    LearningProblem,
};
use dttplus::graph_model::{rank_one_update, BaseGraphKind, DttPlusParams};
use dttplus::integer_kernel::{
    build_integer_transition, fine_tune, forward, inverse, quantize, split, IntegerTransition,
    IntegerTransitionKernel, QuantConfig,
};
use dttplus::mode_clustering::sep_klt_memory_bits;
use dttplus::progressive::{check_interleaving, max_abs_diff_up_to_row_sign, transition_kernel};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Case {
    kind: BaseGraphKind,
    n: usize,
    alpha: f64,
    beta: f64,
    i: usize,
}

fn random_cases() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..200)
        .map(|k| {
            let n = [4, 8, 16, 32][rng.random_range(0..4)];
            Case {
                kind: if k % 2 == 0 { BaseGraphKind::PathGraph } else { BaseGraphKind::PathWithUnitSelfLoop },
                n,
                // (0, 5]
                alpha: 5.0 - rng.random_range(0.0..5.0),
                beta: rng.random_range(0.25..=4.0),
                i: rng.random_range(1..=n),
            }
        })
        .collect()
}

fn progressive_decomposition() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for c in random_cases() {
        let base = c.kind.laplacian(c.n).map_err(|e| e.to_string())?;
        let eig = gft(&base).map_err(|e| e.to_string())?;
        let t = transition_kernel(&base, &eig, c.alpha, c.beta, c.i).map_err(|e| e.to_string())?;
        let direct = gft(&rank_one_update(&base, c.alpha, c.beta, c.i).unwrap()).unwrap().analysis();
        worst = worst.max(max_abs_diff_up_to_row_sign(&direct, &t.composite()));
    }
    let elapsed = start.elapsed();
    ensure(
        worst <= 1e-8 && elapsed < Duration::from_secs(10),
        format!("200 cases, max error {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn sorted_eigs(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn interleaving() -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for c in random_cases() {
        let base = c.kind.laplacian(c.n).unwrap();
        let updated = rank_one_update(&base, c.alpha, c.beta, c.i).unwrap();
        let chain = check_interleaving(&sorted_eigs(base.matrix()), &sorted_eigs(updated.matrix()), c.beta);
        worst = worst.max(chain.max_violation);
        failures += usize::from(!chain.holds);
    }
    // alpha = 0: the updated spectrum is exactly the scaled base spectrum.
    let base = BaseGraphKind::PathWithUnitSelfLoop.laplacian(8).unwrap();
    let base_eigs = sorted_eigs(base.matrix());
    let upd = sorted_eigs(rank_one_update(&base, 0.0, 1.7, 3).unwrap().matrix());
    let eq = base_eigs.iter().zip(&upd).map(|(b, u)| (1.7 * b - u).abs()).fold(0.0, f64::max);
    let boundary = check_interleaving(&base_eigs, &upd, 1.7).holds && eq <= 1e-10;
    ensure(
        failures == 0 && boundary,
        format!("{failures} violations in 200 cases (max {worst:.1e}), alpha = 0 equality error {eq:.1e}"),
    )
}

fn learning_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let axis = AxisBase::new(BaseGraphKind::PathGraph, 8).unwrap();
    let (mut worst_rel, mut worst_stat, mut worst_fd) = (0.0f64, 0.0f64, 0.0f64);
    let mut wrong_index = 0;
    for _ in 0..50 {
        let truth = DttPlusParams {
            alpha_r: rng.random_range(0.2..3.0),
            beta_r: rng.random_range(0.5..3.0),
            i_r: rng.random_range(1..=8),
            alpha_c: rng.random_range(0.2..3.0),
            beta_c: rng.random_range(0.5..3.0),
            i_c: rng.random_range(1..=8),
        };
        let lg = block_laplacian(&truth, &axis.laplacian, &axis.laplacian).unwrap();
        let inv = lg.matrix().clone().try_inverse().ok_or("singular model")?;
        let s = (&inv + inv.transpose()) * 0.5;
        let problem = LearningProblem::with_ridge(s, axis.clone(), axis.clone(), 1e-8).map_err(|e| e.to_string())?;
        let sol = solve(&problem).map_err(|e| e.to_string())?;
        let p = sol.params;
        wrong_index += usize::from((p.i_r, p.i_c) != (truth.i_r, truth.i_c));
        for (got, want) in
            [(p.alpha_r, truth.alpha_r), (p.beta_r, truth.beta_r), (p.alpha_c, truth.alpha_c), (p.beta_c, truth.beta_c)]
        {
            worst_rel = worst_rel.max((got - want).abs() / want);
        }
        let r = stationarity_residual(&p, &problem).map_err(|e| e.to_string())?;
        worst_stat = r.iter().fold(worst_stat, |m, v| m.max(v.abs()));

        // Central differences at a perturbed point.
        let phi = DttPlusParams { alpha_r: p.alpha_r * 1.3, beta_c: p.beta_c * 0.8, ..p };
        let g = model_gradient(&phi, &problem).map_err(|e| e.to_string())?;
        for k in 0..4 {
            let h = 1e-6;
            let bump = |d: f64| {
                let mut q = phi;
                match k {
                    0 => q.alpha_r += d,
                    1 => q.beta_r += d,
                    2 => q.alpha_c += d,
                    _ => q.beta_c += d,
                }
                cost(&q, &problem).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            worst_fd = worst_fd.max((g[k] - fd).abs() / fd.abs().max(1.0));
        }
    }
    ensure(
        wrong_index == 0 && worst_rel <= 1e-2 && worst_stat <= 1e-8 && worst_fd <= 1e-5,
        format!(
            "50 models: {wrong_index} wrong indices, max rel error {worst_rel:.1e}, \
             max stationarity {worst_stat:.1e}, max gradient mismatch {worst_fd:.1e}"
        ),
    )
}

fn big_round_shift(v: BigInt, s: u32) -> BigInt {
    if s == 0 {
        return v;
    }
    let half = BigInt::from(1) << (s - 1);
    let neg = v < BigInt::from(0);
    let mag: BigInt = (if neg { -v } else { v } + half) >> s;
    if neg {
        -mag
    } else {
        mag
    }
}

fn oracle_forward(y: &[i32], ik: &IntegerTransitionKernel) -> Vec<BigInt> {
    let z: Vec<BigInt> =
        y.iter().zip(&ik.diag).map(|(&v, &d)| big_round_shift(BigInt::from(v) * d, ik.diag_shift)).collect();
    (0..ik.n)
        .map(|k| {
            let acc: BigInt =
                ik.off_diag.iter().filter(|e| e.row == k).map(|e| BigInt::from(e.value) * &z[e.col]).sum();
            &z[k] + big_round_shift(acc, ik.off_shift)
        })
        .collect()
}

fn oracle_inverse(q: &[i32], ik: &IntegerTransitionKernel) -> Vec<BigInt> {
    (0..ik.n)
        .map(|k| {
            let acc: BigInt =
                ik.off_diag.iter().filter(|e| e.col == k).map(|e| BigInt::from(e.value) * q[e.row]).sum();
            big_round_shift((BigInt::from(q[k]) + big_round_shift(acc, ik.off_shift)) * ik.diag[k], ik.diag_shift)
        })
        .collect()
}

fn integer_kernel() -> Outcome {
    let config = QuantConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut split_err = 0.0f64;
    let mut kernels = Vec::new();
    let mut monotone = true;
    for k in 0..16 {
        let kind = if k % 2 == 0 { BaseGraphKind::PathGraph } else { BaseGraphKind::PathWithUnitSelfLoop };
        let base = kind.laplacian(8).unwrap();
        let eig = gft(&base).unwrap();
        let t = transition_kernel(&base, &eig, rng.random_range(0.1..5.0), rng.random_range(0.25..4.0), 1).unwrap();
        let parts = split(&t).map_err(|e| e.to_string())?;
        split_err = split_err.max((parts.reconstruct() - &t.k_matrix).amax());
        let q = quantize(&parts, config.p_d, config.p_f, config.bit_depth_d, config.bit_depth_f, kind).unwrap();
        let (tuned, trace) = fine_tune(&q, &t.k_matrix, &config.weights).unwrap();
        monotone &= trace.windows(2).all(|w| w[1] <= w[0]);
        kernels.push(tuned);
    }
    let mut mismatches = 0;
    for trial in 0..1000 {
        let ik = &kernels[trial % kernels.len()];
        let y: Vec<i32> = (0..ik.n).map(|_| rng.random_range(-32768..=32767)).collect();
        let big = |v: Vec<i32>| v.into_iter().map(BigInt::from).collect::<Vec<_>>();
        mismatches += usize::from(big(forward(&y, ik).unwrap()) != oracle_forward(&y, ik));
        mismatches += usize::from(big(inverse(&y, ik).unwrap()) != oracle_inverse(&y, ik));
    }
    let id = IntegerTransitionKernel::identity(8, BaseGraphKind::PathGraph, &config);
    let y = [-32768, -300, -1, 0, 1, 2, 999, 32767];
    let base = BaseGraphKind::PathGraph.laplacian(8).unwrap();
    let eig = gft(&base).unwrap();
    let zero = transition_kernel(&base, &eig, 0.0, 1.0, 1).unwrap();
    let identity_ok = forward(&y, &id).unwrap() == y
        && inverse(&y, &id).unwrap() == y
        && build_integer_transition(&zero, BaseGraphKind::PathGraph, &config).unwrap()
            == IntegerTransition::Sparse(id);
    ensure(
        split_err <= 1e-12 && mismatches == 0 && monotone && identity_ok,
        format!(
            "split error {split_err:.1e}, {mismatches} oracle mismatches in 1000 inputs, \
             fine-tune monotone {monotone}, identity {identity_ok}"
        ),
    )
}

fn operation_counts(report: &ExperimentReport) -> Outcome {
    let ops = &report.summary.ops;
    let raw: Vec<usize> = report
        .summary
        .modes
        .iter()
        .flat_map(|m| m.kernels.iter().flat_map(|k| k.raw_multiplications))
        .collect();
    let worst = raw.iter().copied().max().unwrap_or(0);
    ensure(
        !raw.is_empty() && worst <= 64 && ops.int_dtt_plus_max_raw_multiplications == worst,
        format!(
            "max raw multiplications {worst} (dense {}), median grouped {}, integer DCT-2 {} mults / {} adds",
            ops.dense_kernel_multiplications,
            ops.int_dtt_plus_median_multiplications,
            ops.integer_dct2.multiplications,
            ops.integer_dct2.additions
        ),
    )
}

fn memory_accounting() -> Outcome {
    let bits: Vec<usize> = [8, 16, 32].iter().map(|&n| sep_klt_memory_bits(n, 8, 1)).collect();
    ensure(bits == [1024, 4096, 16384], format!("sep-KLT bits per kernel {bits:?}"))
}

fn coding_gain(report: &ExperimentReport, elapsed: Duration) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = elapsed < Duration::from_secs(600);
    for m in &report.summary.modes {
        let float = report.bd_rate(&m.label, "fixed+dtt+").ok_or("missing DTT+ BD-rate")?;
        let int = report.bd_rate(&m.label, "fixed+int-dtt+").ok_or("missing INT-DTT+ BD-rate")?;
        ok &= float < 0.0 && (int - float).abs() <= 0.5;
        lines.push(format!("{} DTT+ {float:.3}% INT-DTT+ {int:.3}% gap {:.3} pp", m.label, (int - float).abs()));
    }
    ensure(ok, format!("{}; {:.1} s", lines.join(", "), elapsed.as_secs_f64()))
}

fn rdot_behavior(report: &ExperimentReport) -> Outcome {
    let mut ok = true;
    let mut iters = Vec::new();
    for m in &report.summary.modes {
        let r = &m.rdot;
        ok &= r.assignment_steps.iter().all(|(before, after)| after <= before);
        ok &= r.cost_trace.windows(2).all(|w| w[1] <= w[0]);
        ok &= r.converged && r.iterations <= 20;
        iters.push(r.iterations);
    }
    ensure(ok, format!("iterations per mode {iters:?}"))
}

fn self_loop_placement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let axis = AxisBase::new(BaseGraphKind::PathGraph, 8).unwrap();
    let trials = 40;
    let mut on_boundary = 0;
    for t in 0..trials {
        let model = SynthModel {
            rho_r: rng.random_range(0.6..0.97),
            rho_c: rng.random_range(0.6..0.97),
            boundary_decay_r: rng.random_range(0.2..0.8),
            boundary_decay_c: rng.random_range(0.2..0.8),
            sigma: 6.0,
            n: 8,
            count: 2000,
            seed: 1000 + t,
        };
        let ds = synth_residuals(&model).map_err(|e| e.to_string())?;
        let blocks: Vec<DMatrix<f64>> =
            ds.float_blocks(0).iter().map(|b| DMatrix::from_row_slice(8, 8, b)).collect();
        let problem = LearningProblem::new(sample_covariance(&blocks).unwrap(), axis.clone(), axis.clone())
            .map_err(|e| e.to_string())?;
        let p = solve(&problem).map_err(|e| e.to_string())?.params;
        on_boundary += usize::from(p.i_r == 1 && p.i_c == 1);
    }
    ensure(10 * on_boundary >= 9 * trials as usize, format!("first-node self-loops in {on_boundary} of {trials} trials"))
}

fn determinism(config: &ExperimentConfig, first: &ExperimentReport) -> Outcome {
    let second = run_experiment(config).map_err(|e| e.to_string())?;
    let csv = first.rd_csv() == second.rd_csv();
    let json = first.summary_json().unwrap() == second.summary_json().unwrap();
    ensure(csv && json, format!("rd_points identical {csv}, summary identical {json}"))
}

fn main() -> ExitCode {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
    let config = ExperimentConfig::load(&path).expect("synthetic config");
    let start = Instant::now();
    let report = run_experiment(&config);
    let elapsed = start.elapsed();

    let with_report = |f: &dyn Fn(&ExperimentReport) -> Outcome| match &report {
        Ok(r) => f(r),
        Err(e) => Err(format!("experiment failed: {e}")),
    };
    let checks: Vec<(&str, Outcome)> = vec![
        ("progressive decomposition", progressive_decomposition()),
        ("eigenvalue interleaving", interleaving()),
        ("graph learning recovery", learning_recovery()),
        ("integer kernel", integer_kernel()),
        ("operation counts", with_report(&operation_counts)),
        ("memory accounting", memory_accounting()),
        ("coding gain", with_report(&|r| coding_gain(r, elapsed))),
        ("rdot behavior", with_report(&rdot_behavior)),
        ("self-loop placement", self_loop_placement()),
        ("determinism", with_report(&|r| determinism(&config, r))),
    ];
    let mut failed = 0;
    for (k, (name, outcome)) in checks.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} acceptance checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
