//! Randomized invariants of the spectral helpers, the exact and approximate
//! decompositions, and the pruning step.

use faer::Mat;
use kspv::linalg::{distance_from_identity, truncated_eig_psd, truncated_svd};
use kspv::nystrom::ApproxContext;
use kspv::{
    fit_landmarks, gram, invariance_proximity, sample_centers, sample_uniform, spv_step, ApproxSettings,
    DictionaryCoefficients, DiscreteSystem, DomainBox, ExactContext, ExactSettings, KernelSpec, SnapshotData,
};
use kspv_testkit as tk;
use proptest::prelude::*;

fn to_dense(m: &Mat<f64>) -> tk::Dense {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Mat<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| Mat::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

fn duffing(n: usize, seed: u64) -> SnapshotData {
    let sys = DiscreteSystem::duffing(0.01).unwrap();
    sample_uniform(&sys, n, &DomainBox::cube(2, -2.0, 2.0), seed).unwrap()
}

fn kernels() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (1.0f64..3.0, 1u32..=2).prop_map(|(r, b)| KernelSpec::wendland(r, b).unwrap()),
        (0.5f64..2.0).prop_map(|s| KernelSpec::gaussian(s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eigenvalues_agree_with_jacobi((n, g) in (1usize..7).prop_flat_map(|n| (Just(n), matrix(n + 2, n)))) {
        let m = g.transpose() * &g;
        let eig = truncated_eig_psd(m.as_ref(), 0.0).unwrap();
        let (values, _) = tk::jacobi_eigen(&to_dense(&m));
        let scale = values[0].max(1e-300);
        prop_assert!(eig.rank() <= n);
        for (got, want) in eig.eigenvalues.iter().zip(&values) {
            prop_assert!((got - want).abs() <= 1e-12 * scale);
        }
        prop_assert!(distance_from_identity((eig.eigenvectors.transpose() * &eig.eigenvectors).as_ref()) < 1e-12);
    }

    #[test]
    fn singular_values_agree_with_one_sided_jacobi(z in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))) {
        let want = tk::singular_values(&to_dense(&z));
        match truncated_svd(z.as_ref(), 1e-12) {
            Ok(svd) => {
                for (got, w) in svd.singular_values.iter().zip(&want) {
                    prop_assert!((got - w).abs() <= 1e-12 * want[0]);
                }
                let back = svd.reconstruct();
                prop_assert!(tk::max_abs_diff(&to_dense(&back), &to_dense(&z)) < 1e-10);
            }
            Err(_) => prop_assert!(want[0] <= 1e-12),
        }
    }

    #[test]
    fn exact_decomposition_invariants(
        n in 20usize..120,
        s in 1usize..12,
        seed in 0u64..1000,
        kernel in kernels(),
    ) {
        let s = s.min(n);
        let data = duffing(n, seed);
        let w = DictionaryCoefficients::selection(n, &sample_centers(n, s, seed).unwrap()).unwrap();
        let ctx = ExactContext::new(&data, &kernel, &ExactSettings::default()).unwrap();
        let analysis = ctx.analyze(&w).unwrap();
        let pd = &analysis.decomposition;
        let g = &analysis.gram;
        prop_assert_eq!(pd.len(), pd.rank_v.min(pd.rank_kv));
        prop_assert!(pd.rank_v <= s && pd.rank_kv <= s);
        for pair in pd.angles.windows(2) {
            prop_assert!(pair[0] <= pair[1] + 1e-15);
        }
        for (theta, c) in pd.angles.iter().zip(&pd.cosines) {
            prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(theta));
            prop_assert!((theta.cos() - c).abs() < 1e-12);
        }
        let ov = pd.a_v.transpose() * &g.m_v * &pd.a_v;
        let okv = pd.a_kv.transpose() * &g.m_kv * &pd.a_kv;
        prop_assert!(distance_from_identity(ov.as_ref()) < 1e-6);
        prop_assert!(distance_from_identity(okv.as_ref()) < 1e-6);
        let cross = pd.a_v.transpose() * &g.m_cross * &pd.a_kv;
        let diag = Mat::from_fn(pd.len(), pd.len(), |i, j| if i == j { pd.cosines[i] } else { 0.0 });
        prop_assert!(tk::spectral_norm(&to_dense(&(&cross - &diag))) < 1e-6);
        let delta = invariance_proximity(pd).unwrap();
        prop_assert!((0.0..=1.0).contains(&delta));
    }

    #[test]
    fn pruning_step_keeps_orthonormal_principal_vectors(
        n in 40usize..100,
        s in 3usize..10,
        seed in 0u64..1000,
    ) {
        let kernel = KernelSpec::wendland(2.0, 2).unwrap();
        let data = duffing(n, seed);
        let w = DictionaryCoefficients::selection(n, &sample_centers(n, s, seed).unwrap()).unwrap();
        let ctx = ExactContext::new(&data, &kernel, &ExactSettings::default()).unwrap();
        let pd = ctx.principal(&w).unwrap();
        prop_assume!(pd.len() >= 2);
        let next = spv_step(&w, &pd).unwrap();
        prop_assert_eq!(next.len(), pd.len() - 1);
        let g = ctx.gram_triple(&next, &ctx.koopman_image(&next).unwrap()).unwrap();
        prop_assert!(distance_from_identity(g.m_v.as_ref()) < 1e-6);
        let again = ctx.principal(&next).unwrap();
        prop_assert_eq!(again.rank_v, pd.len() - 1);
    }

    #[test]
    fn nystrom_approximation_never_exceeds_the_kernel(
        n in 20usize..80,
        d in 5usize..20,
        seed in 0u64..1000,
        kernel in kernels(),
    ) {
        let data = duffing(n, seed);
        let model = fit_landmarks(&data, d.min(n), seed, &kernel).unwrap();
        let psi = model.feature_matrix(&data.x).unwrap();
        let k = gram(&kernel, &data.x, &data.x).unwrap().into_inner();
        // K − ΨᵀΨ is a Schur complement, hence PSD.
        let gap = &k - psi.transpose() * &psi;
        let (values, _) = tk::jacobi_eigen(&to_dense(&gap));
        let scale = tk::spectral_norm(&to_dense(&k));
        prop_assert!(*values.last().unwrap() >= -1e-8 * scale);
    }

    #[test]
    fn approximate_bases_are_orthonormal_in_feature_space(
        n in 40usize..120,
        s in 2usize..8,
        seed in 0u64..1000,
    ) {
        let kernel = KernelSpec::wendland(2.0, 2).unwrap();
        let data = duffing(n, seed);
        let w = DictionaryCoefficients::selection(n, &sample_centers(n, s, seed).unwrap()).unwrap();
        let model = fit_landmarks(&data, n / 2, seed, &kernel).unwrap();
        let settings = ApproxSettings { cosine_tolerance: None, ..ApproxSettings::default() };
        let ctx = ApproxContext::new(model, &data, &settings).unwrap();
        let a = ctx.analyze(&w).unwrap();
        let zv = a.targets.z_v.as_ref() * &a.factor_v.r_pinv;
        let zkv = a.targets.z_kv.as_ref() * &a.factor_kv.r_pinv;
        prop_assert!(distance_from_identity((zv.transpose() * &zv).as_ref()) < 1e-8);
        prop_assert!(distance_from_identity((zkv.transpose() * &zkv).as_ref()) < 1e-8);
        prop_assert!(a.peak_cosine >= a.decomposition.cosines[0] - 1e-15);
    }

    #[test]
    fn snapshot_generation_is_a_function_of_the_seed(n in 1usize..50, seed in any::<u64>()) {
        prop_assert_eq!(duffing(n, seed), duffing(n, seed));
        prop_assert_eq!(sample_centers(n, n.min(5), seed).unwrap(), sample_centers(n, n.min(5), seed).unwrap());
    }
}
