//! Sweeps, reports and file formats on top of `miw-core`.
//!
//! The `miw` binary wraps these modules; everything it writes can also be
//! produced programmatically:
//!
//! ```
//! use miw::harness::{fit_xn_scaling, sweep};
//! use miw_core::SolverConfig;
//!
//! let entries = sweep(&[10, 20, 40, 80, 160], &SolverConfig::default(), 2).unwrap();
//! let records: Vec<_> = entries.into_iter().map(|e| e.outcome.unwrap()).collect();
//! let fit = fit_xn_scaling(&records).unwrap();
//! assert!(fit.exponent_a > 2.0 && fit.exponent_a < 3.0);
//! ```

#![forbid(unsafe_code)]
// `!(a > b)` is used so that NaN fails ordering checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod harness;
pub mod io;
pub mod manifest;

pub use miw_core;
