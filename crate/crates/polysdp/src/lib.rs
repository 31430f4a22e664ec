//! Training of two-layer neural networks with degree-two polynomial
//! activations to global optimality.
//!
//! The non-convex training problem for `f(x) = sum_j sigma(x'u_j) alpha_j`
//! with `sigma(u) = a u^2 + b u + c`, unit-norm first-layer weights and an
//! l1 penalty on the second layer is equivalent to a semidefinite program
//! over pairs of PSD block matrices tied by a trace-coupling constraint.
//! This crate builds those programs for the scalar, quadratic-activation,
//! vector-output, convolutional and average-pooling architectures, solves
//! them with a built-in ADMM splitting solver, and converts the matrix
//! solutions back into network weights through the neural decomposition
//! procedure. A momentum-SGD baseline and a brute-force restart oracle are
//! included so the equivalence can be checked numerically at desk scale.
//!
//! Typical flow:
//!
//! ```no_run
//! use polysdp::prelude::*;
//!
//! let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
//! let (data, _planted) =
//!     polysdp::cli::gen_planted(50, 6, 3, Transform::Gaussian, act, 7).unwrap();
//! let prog = ConvexProgram::build_scalar(&data, act, 0.1, Loss::Squared).unwrap();
//! let sol = solve(&prog, &SolverConfig::default()).unwrap();
//! let net = network_from_solution(&prog, &sol, 1e-6).unwrap();
//! ```

pub mod activation;
pub mod baseline;
pub mod cli;
pub mod decomposition;
mod error;
pub mod linalg;
pub mod model;
pub mod programs;
pub mod solver;

pub use error::{Error, Result};

/// Commonly used items re-exported in one place.
pub mod prelude {
    pub use crate::activation::{fit_activation, PolyActivation};
    pub use crate::baseline::{brute_force_oracle, train_nonconvex, TrainConfig};
    pub use crate::cli::Transform;
    pub use crate::decomposition::{
        eigen_weights_quadratic, expand_solutions, network_from_solution, neural_decompose,
        rescale_to_cubic, weights_from_pairs, OrthoSource,
    };
    pub use crate::error::{Error, Result};
    pub use crate::linalg::{
        eigen_sym, moreau_split, nuclear_norm_sym, numeric_rank, project_psd, SymBlockMatrix,
        SymMatrix,
    };
    pub use crate::model::{
        extract_patches, forward, objective, Arch, Dataset, ImageShape, Inputs, Loss,
        NetworkWeights, RegSpec,
    };
    pub use crate::programs::{
        gram_precompute, spectrahedron_member, ConvexProgram, ProgramArch, SpectrahedronQuery,
    };
    pub use crate::solver::{prox_loss, solve, solve_warm, ConvexSolution, SolverConfig};
}
