//! Identification of the networks underlying a deterministic linear
//! dynamical process from input/output trajectories.
//!
//! The crate is organized along the processing pipeline:
//!
//! * [`graph`] — vertex/edge structures, shift operators and class
//!   constraints;
//! * [`spectral`] — eigendecomposition conventions and spectral
//!   reconstruction;
//! * [`mapping`] — scalar mappings, matrix functions and their inversion;
//! * [`lti`] — state-space simulation and structural tests;
//! * [`hankel`] / [`subspace`] — block-Hankel data matrices and the
//!   MOESP-style identification chain;
//! * [`recovery`] — the three graph-recovery routes;
//! * [`io`] — text formats for every artifact.

pub mod error;
pub mod graph;
pub mod hankel;
pub mod io;
pub mod linalg;
pub mod lti;
pub mod mapping;
pub mod recovery;
pub mod spectral;
pub mod subspace;

pub use error::{Error, Result};
pub use graph::{
    build_shift, random_graph, Graph, GraphClass, GraphClassConstraint, GraphFamily, ShiftOperator,
};
pub use hankel::{build_hankel, HankelBatch};
pub use lti::{
    controllability_matrix, generate_input, is_minimal, markov_toeplitz, observability_matrix,
    simulate, InputKind, InputSpec, Minimality, StateSpaceSystem, Trajectory,
};
pub use mapping::{
    apply_matrix_function, check_bijective, invert_spectrum, invert_spectrum_bracketed,
    InversionResult, ScalarMapping,
};
pub use recovery::{
    one_shot_state_graph, one_shot_sweep, recover_known_mapping, recover_sparsest,
    verify_commutation, OneShotResult, RecoveryConfig, RecoveryPath, SolverOptions,
};
pub use spectral::{reconstruct_from_spectrum, spectral_decompose, SpectralDecomposition};
pub use subspace::{
    detransform, estimate_order, extract_ct, extract_observability_basis, identify, rq_factorize,
    solve_bd_x0, solve_shift_invariance, IdentifiedSystem, IdentifyConfig, OrderPolicy, RQFactors,
};
