//! Replica-symmetric solution of the diluted random K-sat model.
//!
//! * [`model`]: parameters, the clause function and disorder sampling.
//! * [`exact`]: finite-size free energy and Gibbs overlaps by enumeration.
//! * [`cavity`]: the cavity map and population dynamics for its fixed point.
//! * [`rs`]: Monte Carlo evaluation of the replica-symmetric functional.
//! * [`metrics`]: 1-D Wasserstein distance and population summaries.
//! * [`regions`]: parameter-region predicates and bound verifiers.
//! * [`config`]: serializable run configurations used by the CLI.
//! * [`cli`]: the `ksat` command-line front end.

pub mod cavity;
pub mod cli;
pub mod config;
pub mod error;
pub mod exact;
pub mod metrics;
pub mod model;
pub mod regions;
pub mod rng;
pub mod rs;

pub use error::{Error, Result};
pub use model::ModelParams;
pub use rng::RngStream;
