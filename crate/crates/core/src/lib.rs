//! Convex relaxations and optimality-based bound tightening for AC optimal
//! power flow.

pub mod decomp;
pub mod error;
pub mod expr;
pub mod ipm;
pub mod linalg;
pub mod netmodel;
pub mod ordering;
pub mod relax;
pub mod report;
pub mod scalar;
pub mod sdpbt;

pub use error::{CaseError, DecompError, ModelError, TightenError};
pub use netmodel::{parse_case, Network};
pub use relax::Relaxation;

/// Models over `f64`, the precision the solver and driver run in.
pub type Model = relax::ModelSpec<f64>;
pub type Constraint = relax::Constraint<f64>;
pub type Expr = expr::Expr<f64>;
pub type Poly = expr::Poly<f64>;
