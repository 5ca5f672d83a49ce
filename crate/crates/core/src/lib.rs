//! Closed-loop battery state-of-charge estimation with an analytic
//! uncertainty carried alongside the estimate.
//!
//! Coulomb counting moves the estimate while current flows; at rest a
//! voltage reading inverted through the OCV curve is blended in with the
//! gain that minimizes the next uncertainty. [`harness`] drives the
//! estimator against an equivalent-circuit cell model and checks the
//! reported interval against Monte Carlo statistics.
//!
//! ```
//! use soc_uncertainty::harness::{run_single, RunConfig};
//!
//! let trace = run_single(&RunConfig::default())?;
//! assert_eq!(trace.records.len(), 3000);
//! # Ok::<(), soc_uncertainty::Error>(())
//! ```

pub mod ecm;
pub mod harness;
pub mod error;
pub mod estimator;
pub mod ident;
mod interp;
pub mod ocv;
pub mod profiles;
pub mod sensors;
mod table_io;

pub use error::{Error, Result};
