//! Hardy–Poincaré quotients with a weight singular at a boundary point.
//!
//! The crate computes `μ_λ(Ω) = inf (∫|∇u|² − λ∫u²) / ∫|x|⁻²u²` over `H¹₀(Ω)`
//! with graded P1 finite elements, checks the closed-form barrier identities
//! used to prove (non-)attainment, and estimates the attainment threshold λ*.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod assembly;
pub mod closedform;
pub mod error;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use geometry::{ChartKind, DomainSpec, Extremum, FermiChart};
pub use mesh::{generate, generate_with, mesh_quality, refine, MeshOptions, MeshQuality, TriMesh};
pub use assembly::WeightKind;
pub use sparse::{DofMap, SparseSymMatrix};
pub use linalg::{cg_solve, dense_gen_eig, min_gen_eig, min_gen_eig_with, smallest_dirichlet_eigenvalue, EigOptions, EigenResult};
pub use closedform::{BarrierParams, OperatorSpec, ScanReport};
pub use problems::{compute_mu, lambda_star, mu_sweep, MeshParams, QuotientProblem, SolverParams, SweepResult};
