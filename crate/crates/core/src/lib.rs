//! Principal spectrum points of nonlocal dispersal operators with
//! time-periodic indefinite weights.
//!
//! The continuous problem `−∂ₜu + Ku − bu + λ m(t, x) u = μ u` is discretized
//! by midpoint quadrature in space and classical RK4 in time. The principal
//! spectrum point `μ(λ)` is `ln ρ(Φ(T)) / T`, where `Φ(T)` is the period map of
//! the semi-discrete evolution. On top of that the crate locates the positive
//! root `λᵖ` of `μ(λ) = 0` and simulates the associated time-periodic KPP
//! equation.
//!
//! Module map:
//!
//! * [`geometry`]: kernels, grids, the periodic wrapped kernel
//! * [`weights`]: time-periodic weights and the existence conditions
//! * [`operator`]: the discrete dispersal operator `K − b`
//! * [`evolution`]: RK4 propagation, period maps, comparison checks
//! * [`spectrum`]: `μ(λ)`, essential interval, principal-eigenvalue tests
//! * [`solver`]: the weighted principal spectrum point `λᵖ`
//! * [`kpp`]: the nonlinear threshold application
//! * [`output`]: CSV / structured-text emission

use std::fmt;

use serde::Serialize;

pub mod error;
pub mod evolution;
pub mod expr;
pub mod geometry;
pub mod kpp;
pub mod operator;
pub mod output;
pub mod solver;
pub mod spectrum;
pub mod weights;

pub use error::{Error, Result};
pub use evolution::{period_map, propagate, PeriodMap, Trajectory};
pub use geometry::{build_grid, make_kernel, wrap_kernel, Boundary, Grid, Kernel, Profile};
pub use operator::{assemble, DispersalOperator};
pub use solver::{solve_lambda_p, LambdaPResult, RootStatus};
pub use spectrum::{principal_spectrum_point, SpectrumReport};
pub use weights::Weight;

/// Three-valued outcome of a numerical check; `Marginal` means the quantity
/// sits within tolerance of the decision boundary and `Unknown` that the
/// check could not be evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Yes,
    No,
    Marginal,
    Unknown,
}

impl Check {
    pub fn from_bool(b: bool) -> Check {
        if b {
            Check::Yes
        } else {
            Check::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Check::Yes
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::Yes => "yes",
            Check::No => "no",
            Check::Marginal => "marginal",
            Check::Unknown => "unknown",
        })
    }
}
