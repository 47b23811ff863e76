//! Feedstock-import mix optimization.
//!
//! Minimizes the CES aggregate of import/transport cost and scarcity-weighted
//! water impact subject to a fixed commodity production target. Three
//! parameter regimes admit exact solutions (`analytic`); everything else is
//! handled numerically (`solver`) and can be checked against a brute-force
//! grid oracle (`oracle`).

pub mod analytic;
pub mod cli;
pub mod error;
pub mod model;
pub mod oracle;
pub mod solver;

#[doc(hidden)]
pub mod testutil;

pub use error::{Error, Result};
pub use model::{
    ces, existence_condition, feasible_point, objective, productive_potential, total_cost,
    water_impact, xi_bar, FeedstockRecord, Mix, Regime, Reservoir, Scenario, Solution, SolveStatus,
};
pub use solver::{gradient, kkt_residual, solve, SolverConfig};
