//! Blind multi-threshold stopping strategies for the prophet secretary problem.
//!
//! A blind strategy is a nonincreasing map `alpha: [0,1] -> [0,1]`. Given an
//! instance of independent nonnegative random variables presented in uniformly
//! random order, it sets the threshold of step `i` so that the maximum of the
//! instance lies below it with probability `alpha(u_[i])`, and the gambler
//! stops at the first value strictly above its threshold.
//!
//! The crate is split the same way the computations are:
//!
//! - [`model`]: distributions, instances and the law of the maximum.
//! - [`alpha`]: the [`AlphaStrategy`] family.
//! - [`thresholds`]: schedules, the time threshold algorithm and its
//!   stochastic tie-breaking variant for atomic distributions.
//! - [`simulator`]: seeded parallel Monte Carlo and exact enumeration.
//! - [`bounds`]: closed-form guarantee functionals.
//! - [`optimizer`]: maximin over step strategies, the equalizing ODE and the
//!   optimal-control family behind the blind upper bound.
//! - [`adversarial`]: the named hard instances and their exact values.
//! - [`reproduce`]: one-shot checks of the headline constants.

pub mod adversarial;
pub mod alpha;
pub mod bounds;
mod error;
pub mod model;
pub mod ode;
pub mod optimizer;
pub mod quad;
pub mod reproduce;
pub mod simulator;
pub mod thresholds;

pub use alpha::AlphaStrategy;
pub use error::{Error, Result};
pub use model::{Distribution, Instance, PermutationDraw, Quantile};
pub use simulator::{Mode, SimConfig, SimReport};
pub use thresholds::{StopOutcome, ThresholdSchedule};
