use dttplus::eval::experiment::fixed_set;
use dttplus::eval::{synth_modes, SynthModel};
use dttplus::graph_model::DttPlusParams;
use dttplus::rdot::{rd_cost, rd_select, rdot_design, QuantizerSpec, RdotConfig};
use proptest::prelude::*;

fn model(rho_r: f64, rho_c: f64, count: usize, seed: u64) -> SynthModel {
    SynthModel { rho_r, rho_c, boundary_decay_r: 0.3, boundary_decay_c: 0.3, sigma: 6.0, n: 8, count, seed }
}

fn config(n_learned: usize, tol: f64) -> RdotConfig {
    let step = 8.0;
    RdotConfig {
        n_learned,
        lagrangian: std::f64::consts::LN_2 / 6.0 * step * step,
        quantizer: QuantizerSpec::new(step).unwrap(),
        tol,
        max_iters: 20,
        ..RdotConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_is_the_brute_force_minimum(
        block in proptest::collection::vec(-60.0f64..60.0, 64),
        step in 1.0f64..20.0,
        lambda in 0.0f64..200.0,
    ) {
        let set = fixed_set(8).unwrap();
        let spec = QuantizerSpec::new(step).unwrap();
        let choice = rd_select(&block, &set, &spec, lambda).unwrap();
        let costs: Vec<f64> = set.iter().map(|t| rd_cost(&block, t, &spec, lambda, set.len())).collect();
        let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(choice.cost, min);
        prop_assert_eq!(choice.index, costs.iter().position(|&c| c == min).unwrap());
    }
}

#[test]
fn full_tolerance_stops_after_one_iteration() {
    let ds = synth_modes(&[("a".into(), model(0.9, 0.9, 300, 1))]).unwrap();
    let out = rdot_design(&ds.float_blocks(0), 8, &fixed_set(8).unwrap(), &config(1, 1.0)).unwrap();
    assert_eq!(out.state.iterations, 1);
    assert!(out.state.converged);
}

#[test]
fn costs_never_increase() {
    let ds = synth_modes(&[
        ("h".into(), model(0.95, 0.5, 400, 2)),
        ("v".into(), model(0.5, 0.95, 400, 3)),
    ])
    .unwrap();
    let blocks: Vec<Vec<f64>> = ds.float_blocks(0).into_iter().chain(ds.float_blocks(1)).collect();
    let out = rdot_design(&blocks, 8, &fixed_set(8).unwrap(), &config(2, 0.0)).unwrap();
    let s = &out.state;
    assert!(s.assignment_steps.iter().all(|(before, after)| after <= before));
    assert!(s.cost_trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", s.cost_trace);
    assert!(s.iterations <= 20);
}

#[test]
fn two_populations_land_in_separate_clusters() {
    let ds = synth_modes(&[
        ("h".into(), model(0.97, 0.2, 600, 4)),
        ("v".into(), model(0.2, 0.97, 600, 5)),
    ])
    .unwrap();
    let blocks: Vec<Vec<f64>> = ds.float_blocks(0).into_iter().chain(ds.float_blocks(1)).collect();
    let out = rdot_design(&blocks, 8, &[], &config(2, 0.0)).unwrap();
    let a = &out.state.assignments;
    let p: Vec<_> = out.state.learned_params.iter().map(|p| p.unwrap()).collect();
    let row_heavy = |q: &DttPlusParams| q.beta_r > q.beta_c;
    assert!(row_heavy(&p[0]) != row_heavy(&p[1]), "{p:?}");

    // The cluster holding most of the first population matches a model
    // learned from that population alone.
    let reference = rdot_design(&ds.float_blocks(0), 8, &[], &config(1, 1.0)).unwrap();
    let r = reference.state.learned_params[0].unwrap();
    let first_in = |c: usize| (0..600).filter(|&k| a[k] == c).count();
    let second_in = |c: usize| (600..1200).filter(|&k| a[k] == c).count();
    let major = if first_in(0) * second_in(1) >= first_in(1) * second_in(0) { 0 } else { 1 };
    assert_eq!(row_heavy(&p[major]), row_heavy(&r));
    assert!(first_in(major) > second_in(major));
}

#[test]
fn single_model_places_self_loops_on_the_boundary() {
    let ds = synth_modes(&[("a".into(), model(0.9, 0.9, 800, 6))]).unwrap();
    let out = rdot_design(&ds.float_blocks(0), 8, &fixed_set(8).unwrap(), &config(1, 0.01)).unwrap();
    let p = out.state.learned_params[0].unwrap();
    assert_eq!((p.i_r, p.i_c), (1, 1));
}

#[test]
fn single_cluster_recovers_generating_model() {
    use dttplus::graph_learning::block_laplacian;
    use dttplus::graph_model::BaseGraphKind;
    use dttplus::rdot::flatten_block;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    let truth = DttPlusParams { alpha_r: 0.02, beta_r: 0.01, i_r: 1, alpha_c: 0.005, beta_c: 0.02, i_c: 1 };
    let path = BaseGraphKind::PathGraph.laplacian(8).unwrap();
    let lg = block_laplacian(&truth, &path, &path).unwrap();
    let cov = lg.matrix().clone().try_inverse().unwrap();
    let chol = ((&cov + cov.transpose()) * 0.5).cholesky().unwrap().l();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let blocks: Vec<Vec<f64>> = (0..20000)
        .map(|_| {
            let e = DVector::from_fn(64, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            flatten_block(&DMatrix::from_column_slice(8, 8, (&chol * e).as_slice()))
        })
        .collect();
    let out = rdot_design(&blocks, 8, &[], &config(1, 0.01)).unwrap();
    let p = out.state.learned_params[0].unwrap();
    assert_eq!((p.i_r, p.i_c), (1, 1));
    for (got, want) in [(p.alpha_r, truth.alpha_r), (p.beta_r, truth.beta_r), (p.alpha_c, truth.alpha_c), (p.beta_c, truth.beta_c)] {
        assert!((got - want).abs() < 0.1 * want, "{p:?}");
    }
}
