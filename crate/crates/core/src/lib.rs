//! Numerical certification of (g, φ_h)-convex dominance.
//!
//! The crate samples the pointwise convexity defects of user-supplied
//! functions, computes both sides of the Hermite-Hadamard-type midpoint and
//! endpoint bounds with adaptive quadrature, and searches for witnesses when
//! a claimed dominance fails. Every positive verdict is a sampled one.

pub mod cli;
pub mod convexity;
pub mod expr;
pub mod geometry;
pub mod hadamard;
pub mod kernels;
pub mod quadrature;
pub mod search;
pub mod serde_ext;

pub use convexity::{
    check_dominated, check_phi_h_convex, compose, decompose, dominance_gap, h_convex_defect,
    lemma2_report, phi_h_defect, CheckReport, FunctionPair, SamplePlan, Tolerance, Verdict,
};
pub use expr::{EvalError, Expr, ParseError};
pub use geometry::{AffineMap, ExprMap, Interval, Mapping, Phi};
pub use kernels::{Kernel, KernelIntegral, KernelKind};
pub use quadrature::{integrate, integrate_open01, OpenIntegral, QuadResult};
pub use hadamard::{
    corollary_report, hh_endpoint_report, hh_midpoint_report, BoundKind, Corollary, HHOptions,
    HHReport,
};
pub use search::{search_violations, ViolationRecord};
