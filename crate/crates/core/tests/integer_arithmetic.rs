use dttplus::base_transforms::gft;
use dttplus::graph_model::BaseGraphKind;
use dttplus::integer_kernel::{
    build_integer_transition, fine_tune, forward, inverse, kernel_from_json, kernel_to_json, quantize, round_shift,
    split, IntegerTransition, IntegerTransitionKernel, QuantConfig,
};
use dttplus::progressive::{transition_kernel, TransitionKernel};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kernel(kind: BaseGraphKind, n: usize, alpha: f64, beta: f64) -> TransitionKernel {
    let base = kind.laplacian(n).unwrap();
    let eig = gft(&base).unwrap();
    transition_kernel(&base, &eig, alpha, beta, 1).unwrap()
}

/// `v / 2^s` rounded half away from zero, in arbitrary precision.
fn big_round_shift(v: &BigInt, s: u32) -> BigInt {
    if s == 0 {
        return v.clone();
    }
    let p = BigInt::from(1u64) << s;
    let half = BigInt::from(1u64) << (s - 1);
    let mag = (v.magnitude().clone() + half.magnitude()) / p.magnitude();
    let mag = BigInt::from(mag);
    if *v < BigInt::from(0) {
        -mag
    } else {
        mag
    }
}

fn oracle_forward(y: &[i32], ik: &IntegerTransitionKernel) -> Vec<BigInt> {
    let z: Vec<BigInt> = y
        .iter()
        .zip(&ik.diag)
        .map(|(&v, &d)| big_round_shift(&(BigInt::from(v) * d), ik.diag_shift))
        .collect();
    (0..ik.n)
        .map(|k| {
            let acc: BigInt = ik.off_diag.iter().filter(|e| e.row == k).map(|e| BigInt::from(e.value) * &z[e.col]).sum();
            &z[k] + big_round_shift(&acc, ik.off_shift)
        })
        .collect()
}

fn oracle_inverse(q: &[i32], ik: &IntegerTransitionKernel) -> Vec<BigInt> {
    (0..ik.n)
        .map(|k| {
            let acc: BigInt = ik.off_diag.iter().filter(|e| e.col == k).map(|e| BigInt::from(e.value) * q[e.row]).sum();
            let w = BigInt::from(q[k]) + big_round_shift(&acc, ik.off_shift);
            big_round_shift(&(w * ik.diag[k]), ik.diag_shift)
        })
        .collect()
}

fn to_big(v: &[i32]) -> Vec<BigInt> {
    v.iter().map(|&x| BigInt::from(x)).collect()
}

#[test]
fn forward_and_inverse_match_arbitrary_precision_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let config = QuantConfig::default();
    let kernels: Vec<IntegerTransitionKernel> = (0..12)
        .filter_map(|k| {
            let kind = if k % 2 == 0 { BaseGraphKind::PathGraph } else { BaseGraphKind::PathWithUnitSelfLoop };
            let n = [4, 8, 16][k % 3];
            let t = kernel(kind, n, rng.random_range(0.5..5.0), rng.random_range(0.25..4.0));
            match build_integer_transition(&t, kind, &config).unwrap() {
                IntegerTransition::Sparse(ik) => Some(ik),
                IntegerTransition::DenseFallback { .. } => None,
            }
        })
        .collect();
    assert!(kernels.iter().any(|k| k.nnz() > 0));
    for trial in 0..1000 {
        let ik = &kernels[trial % kernels.len()];
        let y: Vec<i32> = (0..ik.n).map(|_| rng.random_range(-32768..=32767)).collect();
        assert_eq!(to_big(&forward(&y, ik).unwrap()), oracle_forward(&y, ik));
        assert_eq!(to_big(&inverse(&y, ik).unwrap()), oracle_inverse(&y, ik));
    }
}

proptest! {
    #[test]
    fn round_shift_matches_oracle(v in -(1i32 << 30)..(1i32 << 30), s in 0u32..20) {
        prop_assert_eq!(BigInt::from(round_shift(v, s)), big_round_shift(&BigInt::from(v), s));
    }

    #[test]
    fn split_reconstructs(alpha in 0.01f64..5.0, beta in 0.25f64..4.0, n in 2usize..=16) {
        let t = kernel(BaseGraphKind::PathGraph, n, alpha, beta);
        let s = split(&t).unwrap();
        prop_assert!((s.reconstruct() - &t.k_matrix).amax() < 1e-12);
    }

    #[test]
    fn coarser_precision_is_sparser(alpha in 0.05f64..5.0, beta in 0.25f64..4.0) {
        let t = kernel(BaseGraphKind::PathWithUnitSelfLoop, 8, alpha, beta);
        let s = split(&t).unwrap();
        let nnz: Vec<usize> = [2u32, 4, 8, 16, 32, 64]
            .iter()
            .map(|&p_f| quantize(&s, 128, p_f, 9, 12, BaseGraphKind::PathWithUnitSelfLoop).unwrap().nnz())
            .collect();
        prop_assert!(nnz.windows(2).all(|w| w[0] <= w[1]), "{:?}", nnz);
    }
}

#[test]
fn fine_tune_never_worsens() {
    let config = QuantConfig::default();
    for (alpha, beta) in [(0.3, 1.0), (2.0, 0.7), (4.5, 3.0), (1.0, 0.25)] {
        let t = kernel(BaseGraphKind::PathGraph, 8, alpha, beta);
        let q = quantize(&split(&t).unwrap(), 128, 4, 8, 3, BaseGraphKind::PathGraph).unwrap();
        let (_, trace) = fine_tune(&q, &t.k_matrix, &config.weights).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");
    }
}

#[test]
fn identity_kernel_passes_inputs_through() {
    let ik = IntegerTransitionKernel::identity(8, BaseGraphKind::PathGraph, &QuantConfig::default());
    assert_eq!(ik.to_float(), DMatrix::identity(8, 8));
    let y = [-32768, -5, -1, 0, 1, 7, 300, 32767];
    assert_eq!(forward(&y, &ik).unwrap(), y);
    assert_eq!(inverse(&y, &ik).unwrap(), y);
    let t = kernel(BaseGraphKind::PathGraph, 8, 0.0, 1.7);
    assert_eq!(
        build_integer_transition(&t, BaseGraphKind::PathGraph, &QuantConfig::default()).unwrap(),
        IntegerTransition::Sparse(ik)
    );
}

#[test]
fn kernel_json_round_trip() {
    let t = kernel(BaseGraphKind::PathWithUnitSelfLoop, 8, 2.5, 1.0);
    let IntegerTransition::Sparse(ik) =
        build_integer_transition(&t, BaseGraphKind::PathWithUnitSelfLoop, &QuantConfig::default()).unwrap()
    else {
        panic!("unexpected fallback");
    };
    let back = kernel_from_json(&kernel_to_json(&ik).unwrap()).unwrap();
    assert_eq!(back, ik);
    assert!(kernel_from_json("{\"format_version\": 99}").is_err());
}
