//! Numerical laboratory for periodic homogenization of two-phase power-law
//! composites.
//!
//! The crate solves the periodic cell problem for the constitutive law
//! `A(y, xi) = sigma(y) |xi|^(p(y)-2) xi`, evaluates and tabulates the
//! homogenized map `b`, solves the fine-scale and homogenized Dirichlet
//! problems on the unit square, and measures corrector convergence and the
//! per-phase field-fluctuation lower bounds at desk scale.

mod assembly;
pub mod audit;
pub mod cell;
pub mod corrector;
pub mod error;
pub mod field;
pub mod geometry;
pub mod homogenized;
pub mod io;
pub mod material;
mod newton;
pub mod quadrature;
pub mod vec2;

pub use audit::{audit_structure_conditions, AuditReport};
pub use cell::{
    cell_residual, corrector_value, solve_cell, solve_cell_grid, solve_cell_laminate, Backend,
    CellSolution,
};
pub use corrector::{
    amplification_lhs, amplification_rhs, assemble_corrector, bound_report, corrector_error,
    corrector_study, local_average, local_average_masked, BoundReport, CellAverages,
    CorrectorField, CorrectorReport, Region, StudySettings, XiCache,
};
pub use error::{Error, Result};
pub use field::{
    apriori_norms, higher_integrability_check, solve_epsilon, solve_macro, Epsilon, FieldKind,
    FieldSolution, Load, MacroProblem,
};
pub use geometry::{wrap_periodic, GeometryKind, MicroGeometry};
pub use homogenized::{
    audit_b_structure, audit_corrector_integrals, b_eval, tabulate, whom_energy, BStructureReport,
    CorrectorIntegralReport, HomogenizedMap,
};
pub use material::{Phase, PhaseParams};
pub use newton::{SolverSettings, LAMINATE_TOL};
pub use vec2::{Mat2, Vec2};
