//! Searches over blind strategies.
//!
//! - [`piecewise`]: maximin of the piecewise-constant guarantee.
//! - [`equalizer`]: Picard iteration of the equalizing second-order ODE.
//! - [`control`]: the two-parameter control family behind the upper bound.

pub mod control;
pub mod equalizer;
pub mod piecewise;

pub use control::{solve_control_family, sweep_upper_bound, ControlFamilyPoint, SweepResult};
pub use equalizer::{solve_equalizing_ode, OdeSolution};
pub use piecewise::{optimize_piecewise, PiecewiseResult};

use crate::alpha::AlphaStrategy;

/// Whether `alpha` is nonincreasing with values in `[0, 1]` on `points + 1`
/// equispaced nodes.
pub fn is_feasible(alpha: &AlphaStrategy, points: usize) -> bool {
    let mut prev = f64::INFINITY;
    for k in 0..=points {
        let v = alpha.eval(k as f64 / points as f64);
        if !(0.0..=1.0).contains(&v) || v > prev {
            return false;
        }
        prev = v;
    }
    true
}
