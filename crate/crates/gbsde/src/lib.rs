//! Numerical laboratory for reflected backward SDEs driven by G-Brownian
//! motion — backward equations whose expectation operator is a supremum over
//! a band of volatility laws rather than a single measure.
//!
//! The crate solves the reflected equation (value `Y`, hedge `Z`, reflection
//! increments `dA` keeping `Y` above an obstacle) on recombining trinomial
//! lattices, both by penalization ladders and by exact nodewise projection,
//! and cross-checks the Markovian case against an explicit monotone
//! finite-difference march of the equivalent fully nonlinear obstacle PDE.
//! On top of the solvers sit the optimal-stopping view (dynamic programming,
//! exercise policies, an exhaustive tiny-instance oracle) and an
//! uncertain-volatility market layer for American-claim superhedging prices.
//!
//! Entry points:
//! - [`lattice::rollback`] — backward trinomial solver (plain / penalized /
//!   projected), the workhorse.
//! - [`rbsde::run_ladder`] — increasing-penalty approximation with uniform
//!   bound diagnostics.
//! - [`pde::solve_obstacle_pde`] / [`pde::cross_validate`] — the independent
//!   finite-difference route and the route-agreement report.
//! - [`stopping::optimal_stopping_value`] — stopped dynamic program and
//!   exercise policy.
//! - [`market::price_american`] — superhedging prices under volatility
//!   uncertainty, with classical single-volatility oracles alongside.

pub mod band;
pub mod error;
pub mod gexp;
pub mod grid;
pub mod lattice;
pub mod market;
pub mod paths;
pub mod pde;
pub mod problem;
pub mod rbsde;
pub mod stopping;
pub mod surface;

pub use band::VolatilityBand;
pub use error::{Error, Result};
pub use grid::{SpaceGrid, TimeGrid};
pub use lattice::{complementarity_residual, monte_carlo_lower_bound, rollback, McLowerBound};
pub use market::{
    bs_closed_form, crr_american_oracle, extract_hedge, price_american, price_european,
    ClaimSpec, Hedge, MarketModel, PayoffKind, PricingMethod, PricingResult,
};
pub use paths::{simulate_control_paths, ControlPaths, VolatilityControl};
pub use pde::{cross_validate, solve_obstacle_pde, solve_penalized_pde, CrossReport};
pub use problem::MarkovianProblem;
pub use rbsde::{
    obstacle_deficit, run_ladder, uniform_bound_report, BoundReport, LadderConfig,
    PenalizationLadder,
};
pub use stopping::{
    brute_force_oracle, optimal_stopping_value, optional_stopping_check, StoppingPolicy,
};
pub use surface::{Field, Mode, Surface, SurfaceMeta};
