use dttplus::base_transforms::{apply_separable, gft};
use dttplus::graph_model::{cartesian_product, rank_one_update, BaseGraphKind};
use dttplus::progressive::{check_interleaving, interleaving_chain, max_abs_diff_up_to_row_sign, transition_kernel};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = BaseGraphKind> {
    prop_oneof![Just(BaseGraphKind::PathGraph), Just(BaseGraphKind::PathWithUnitSelfLoop)]
}

fn update_case() -> impl Strategy<Value = (BaseGraphKind, usize, f64, f64, usize)> {
    (kind(), 2usize..=16, 0.0f64..5.0, 0.25f64..4.0)
        .prop_flat_map(|(k, n, a, b)| (Just(k), Just(n), Just(a), Just(b), 1..=n))
}

fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rank_one_update_stays_psd((k, n, a, b, i) in update_case()) {
        let l = rank_one_update(&k.laplacian(n).unwrap(), a, b, i).unwrap();
        let m = l.matrix();
        prop_assert!(eigenvalues(m)[0] >= -1e-10);
        prop_assert!((m - m.transpose()).amax() == 0.0);
    }

    #[test]
    fn kronecker_sum_spectrum_is_minkowski_sum(
        (kr, nr, ar, br, ir) in update_case(),
        (kc, nc, ac, bc, ic) in update_case(),
    ) {
        prop_assume!(nr * nc <= 64);
        let lr = rank_one_update(&kr.laplacian(nr).unwrap(), ar, br, ir).unwrap();
        let lc = rank_one_update(&kc.laplacian(nc).unwrap(), ac, bc, ic).unwrap();
        let g = cartesian_product(&lr, &lc);
        let er = eigenvalues(lr.matrix());
        let ec = eigenvalues(lc.matrix());
        let mut sums: Vec<f64> = er.iter().flat_map(|x| ec.iter().map(move |y| x + y)).collect();
        sums.sort_by(f64::total_cmp);
        let direct = eigenvalues(g.matrix());
        for (s, d) in sums.iter().zip(&direct) {
            prop_assert!((s - d).abs() < 1e-9 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn gft_preserves_energy((k, n, a, b, i) in update_case(), seed in any::<u64>()) {
        let l = rank_one_update(&k.laplacian(n).unwrap(), a, b, i).unwrap();
        let e = gft(&l).unwrap();
        let x: Vec<f64> = (0..n).map(|j| ((seed.wrapping_add(j as u64 * 7919) % 1000) as f64) - 500.0).collect();
        let xv = nalgebra::DVector::from_vec(x);
        let y = e.analysis() * &xv;
        prop_assert!((y.norm_squared() - xv.norm_squared()).abs() <= 1e-9 * xv.norm_squared().max(1.0));
        let block = DMatrix::from_fn(n, n, |r, c| xv[(r + c) % n]);
        let coeffs = apply_separable(&block, &e, &e).unwrap();
        prop_assert!((coeffs.norm_squared() - block.norm_squared()).abs() <= 1e-9 * block.norm_squared().max(1.0));
    }

    #[test]
    fn transition_kernel_orthogonal_and_exact((k, n, a, b, i) in update_case()) {
        let base = k.laplacian(n).unwrap();
        let be = gft(&base).unwrap();
        let t = transition_kernel(&base, &be, a, b, i).unwrap();
        let kk = &t.k_matrix;
        prop_assert!((kk * kk.transpose() - DMatrix::identity(n, n)).amax() < 1e-8);
        let direct = gft(&rank_one_update(&base, a, b, i).unwrap()).unwrap().analysis();
        prop_assert!(max_abs_diff_up_to_row_sign(&direct, &t.composite()) < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn spectra_interleave((k, n, a, b, i) in update_case()) {
        let base = k.laplacian(n).unwrap();
        let base_eigs = eigenvalues(base.matrix());
        let upd = eigenvalues(rank_one_update(&base, a, b, i).unwrap().matrix());
        let chain = check_interleaving(&base_eigs, &upd, b);
        prop_assert!(chain.holds, "violation {}", chain.max_violation);
    }
}

#[test]
fn downdate_interleaves_with_roles_swapped() {
    let base = BaseGraphKind::PathWithUnitSelfLoop.laplacian(8).unwrap();
    let base_eigs = eigenvalues(base.matrix());
    let upd = eigenvalues(rank_one_update(&base, 0.0, 1.0, 1).unwrap().matrix());
    assert!(interleaving_chain(&upd, &base_eigs).holds);
    let down = eigenvalues(&(base.matrix() - DMatrix::from_fn(8, 8, |r, c| if r == 0 && c == 0 { 0.6 } else { 0.0 })));
    assert!(interleaving_chain(&down, &base_eigs).holds);
    assert!(!interleaving_chain(&base_eigs, &down).holds);
}
