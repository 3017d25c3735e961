//! Parallel and sequential execution produce bit-identical results.

use kspv::kernels::gram_with;
use kspv::koopman::prediction_error_map_with;
use kspv::nystrom::ApproxContext;
use kspv::{
    eigenpairs, fit_landmarks, reduced_edmd_matrix, sample_centers, sample_uniform, ApproxSettings,
    DictionaryCoefficients, DiscreteSystem, DomainBox, Eigenfunction, ExactContext, ExactSettings, Execution,
    KernelSpec,
};

#[test]
fn execution_modes_agree_bitwise() {
    let kernel = KernelSpec::wendland(2.0, 2).unwrap();
    let sys = DiscreteSystem::duffing(0.01).unwrap();
    let data = sample_uniform(&sys, 700, &DomainBox::cube(2, -2.0, 2.0), 4).unwrap();

    let seq = gram_with(&kernel, &data.tx, &data.x, Execution::Sequential).unwrap();
    let par = gram_with(&kernel, &data.tx, &data.x, Execution::Parallel).unwrap();
    assert!(seq.as_ref() == par.as_ref());

    let model = fit_landmarks(&data, 90, 4, &kernel).unwrap();
    let fs = model.feature_matrix_with(&data.x, Execution::Sequential).unwrap();
    let fp = model.feature_matrix_with(&data.x, Execution::Parallel).unwrap();
    assert!(fs == fp);

    let w = DictionaryCoefficients::selection(700, &sample_centers(700, 20, 4).unwrap()).unwrap();
    let settings = ApproxSettings::default();
    let ds = ApproxContext::with_execution(model.clone(), &data, &settings, Execution::Sequential)
        .unwrap()
        .principal(&w)
        .unwrap();
    let dp = ApproxContext::with_execution(model, &data, &settings, Execution::Parallel)
        .unwrap()
        .principal(&w)
        .unwrap();
    assert_eq!(ds, dp);

    let ctx = ExactContext::new(&data, &kernel, &ExactSettings::default()).unwrap();
    let gram = ctx.gram_triple(&w, &ctx.koopman_image(&w).unwrap()).unwrap();
    let pair = &eigenpairs(&reduced_edmd_matrix(&gram, 1e-8).unwrap()).unwrap()[0];
    let phi = Eigenfunction::from_pair(pair, &w, &data, &kernel).unwrap();
    let es = prediction_error_map_with(&phi, &sys, &data.x, 5, Execution::Sequential).unwrap();
    let ep = prediction_error_map_with(&phi, &sys, &data.x, 5, Execution::Parallel).unwrap();
    assert_eq!(es, ep);
}
