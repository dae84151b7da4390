//! Discretization and simulation of the strongly damped wave equation with
//! dynamic (Wentzell) boundary conditions.
//!
//! The numerical core is generic over the scalar type through [`Real`]; the
//! aliases below fix it to `f64` (the default everywhere) or `f32`.

// `!(x > 0)` is used on purpose so that NaN lands in the rejecting branch,
// and the dense kernels read more clearly with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod galerkin;
pub mod geometry;
pub mod linalg;
pub mod nonlinearity;
pub mod operator;
pub mod scalar;

pub use error::{Error, Result};
pub use galerkin::{
    build_modal_system, compute_energy, convergence_study, integrate, project_initial_data, step,
    verify_weak_residual, ConvergenceSetup, ConvergenceTable, EnergyReport, IntegrateOptions, ModalSystem, State,
    TrajectoryRecord,
};
pub use geometry::{build_geometry, compute_measures, quadrature_integrate, GeometryKind, GeometrySpec, Mesh, Region};
pub use nonlinearity::{
    check_balance, check_sign_growth, estimate_poincare_constant, eval_nonlinearity,
    probe_boundary_interior_inequality, BalanceInputs, BalanceReport, NonlinearitySpec, Polynomial, ProbeGrid,
    Verdict, Which,
};
pub use operator::{
    apply_fractional_power, assemble_blocks, assemble_wentzell, build_damping_matrix, discrete_norms,
    estimate_isomorphism_constant, solve_eigenproblem, solve_wentzell_bvp, Damping, EigenDecomposition,
    ExponentConvention, FractionalParams, OperatorBlocks, Realization, WentzellOperator,
};
pub use scalar::Real;

pub type Mesh64 = Mesh<f64>;
pub type Mesh32 = Mesh<f32>;
pub type WentzellOperator64 = WentzellOperator<f64>;
pub type WentzellOperator32 = WentzellOperator<f32>;
pub type ModalSystem64 = ModalSystem<f64>;
pub type ModalSystem32 = ModalSystem<f32>;
pub type State64 = State<f64>;
pub type TrajectoryRecord64 = TrajectoryRecord<f64>;
