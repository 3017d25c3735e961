//! Principal angles between a Koopman-invariant candidate subspace and its
//! image in a reproducing kernel Hilbert space, computed exactly or through a
//! Nyström feature map, and the pruning loops built on them.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kernels;
pub mod koopman;
pub mod linalg;
pub mod nystrom;
pub mod parallel;
pub mod pruning;
pub mod rng;
pub mod states;

pub use dynamics::{
    advance, duffing_step, linear_system, sample_uniform, DiscreteSystem, DomainBox, SnapshotData, SystemDescriptor,
};
pub use error::{Error, Result};
pub use geometry::{
    evaluate_function, exact_principal, gram_triple, implicit_qr, invariance_proximity, sample_centers,
    solve_koopman_image, DictionaryCoefficients, ExactContext, ExactSettings, GramTriple, ImplicitQr,
    PrincipalDecomposition, Regularization,
};
pub use kernels::{gram, kernel_eval, KernelFamily, KernelMatrix, KernelSpec};
pub use koopman::{
    dictionary_grams, eigenpairs, kedmd_matrix, prediction_error_map, reduced_edmd_from, reduced_edmd_matrix,
    EigenPair, Eigenfunction, ErrorSummary, KoopmanMatrix,
};
pub use nystrom::{
    approx_principal, fit_landmarks, target_matrices, ApproxContext, ApproxSettings, ApproxTargets, NystromModel,
    ThresholdSchedule,
};
pub use parallel::Execution;
pub use pruning::{approx_kernel_spv, kernel_spv, spv_step, PruneConfig, PruneMode, PruneReport};
pub use states::StateMatrix;
