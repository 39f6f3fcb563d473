//! Deterministic compressed sensing with Euler squares.
//!
//! The pipeline runs from finite fields ([`fields`]) to mutually orthogonal
//! Latin squares ([`euler`]), binary and ternary sensing matrices
//! ([`construct`]), exact coherence verification ([`props`]), sparse
//! recovery ([`recovery`]), benchmark harnesses ([`experiments`]) and
//! patch-based imaging with content-based retrieval ([`imaging`]).

pub mod construct;
pub mod error;
pub mod euler;
pub mod experiments;
pub mod fields;
pub mod imaging;
pub mod props;
pub mod recovery;

pub use construct::{
    build_binary_matrix, build_extended, build_for_row_size, build_hadamard, build_ternary, normalize, Alphabet,
    ExtensionPlan, HadamardMatrix, MatrixProvenance, Measurement, SensingMatrix,
};
pub use error::{Error, Result};
pub use euler::{euler_square, factorize, validate_euler_square, EulerSquare, PrimePowerFactorization};
pub use experiments::{
    run_patch_reconstruction, run_phase_transition, run_sweep, ExperimentReport, Family, MatrixSource, PhaseConfig,
    ReconConfig, SweepConfig,
};
pub use fields::GaloisField;
pub use imaging::{extract_features, haar_forward, haar_inverse, patchify, retrieve, score_retrieval, FeatureDb, Image, PatchGrid, RetrievalMetrics};
pub use props::{coherence, coherence_dense, CoherenceReport};
pub use recovery::{basis_pursuit, omp, snr, RecoveryResult, Solver, SparseSignal};
