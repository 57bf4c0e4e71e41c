//! Detecting coordination in a network of cognitive radars from revealed
//! preferences, and reconstructing the radars' utilities when it is found.
//!
//! The pipeline is: a [`Dataset`] of probes, aggregate responses and
//! per-radar lower bounds is handed to [`milp::decide`], which searches for a
//! split of each aggregate response that every radar could have chosen
//! rationally. When one exists, [`afriat`] produces a certificate per radar
//! and a piecewise-linear utility consistent with it.

pub mod afriat;
pub mod dataset;
pub mod harness;
pub mod io;
pub mod lp;
pub mod milp;
pub mod sim;

pub use afriat::{AfriatCertificate, AfriatError, PiecewiseLinearUtility};
pub use dataset::{Dataset, DatasetError, Observation, PersonalizedAllocation, Probe, Violation};
pub use milp::{decide, Decision, MilpError, MilpProblem, MilpVerdict};
pub use sim::{NetworkSpec, SimError, Utility};
