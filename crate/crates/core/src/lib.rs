//! Many-interacting-worlds (MIW) discretization of the one-dimensional
//! Coulomb potential in its first excited state.
//!
//! The half-line system holds `N` worlds at positions
//! `x_1 > x_2 > ... > x_N > 0`, with one extra world pinned at the node
//! `x_{N+1} = 0`. The positions follow the forward recursion
//!
//! ```text
//! x_{n+1}^2 = x_n^2 - 1 / (x_n * S_n),    S_n = sum_{i<=n} 1 / x_i^2
//! ```
//!
//! and `x_1` is chosen so that the recursion lands exactly on the node,
//! i.e. `x_N^3 * S_N = 1`. From a solved configuration this crate builds the
//! stepped empirical density, evaluates the interworld and Coulomb energies,
//! and compares everything against the exact density `P(x) = 2x^2 e^{-2|x|}`.
//!
//! Everything here is pure computation with no IO; the crate is `no_std`
//! and only needs `alloc`.
//!
//! ```
//! use miw_core::solver::{solve_configuration, SolverConfig};
//! use miw_core::density::{build_step_density, empirical_mass, BoundaryTerm};
//!
//! let cfg = solve_configuration(11, &SolverConfig::default()).unwrap();
//! let step = build_step_density(&cfg).unwrap();
//! let mass = empirical_mass(&step, BoundaryTerm::Exclude);
//! assert!((mass - 0.54).abs() < 0.005);
//! ```

#![no_std]
#![forbid(unsafe_code)]
// `!(a > b)` is used so that NaN fails ordering checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod density;
pub mod energy;
pub mod model;
pub mod quadrature;
pub mod solver;
pub mod sum;

pub use density::{GeneralizedStepDensity, StepDensity};
pub use energy::EnergyReport;
pub use model::{Endpoint, TargetDensity, WorldConfiguration};
pub use solver::{PrecisionMode, SolverConfig};
