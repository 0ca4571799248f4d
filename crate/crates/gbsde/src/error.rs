//! Error type shared by all solvers in this crate.

use crate::rbsde::PenalizationLadder;

/// Errors reported by grid construction, scheme preconditions and solvers.
///
/// `ConfigurationError`-class variants (`InvalidInput`, `CflViolation`,
/// `PicardNonContraction`, `Unsupported`, `TooLarge`) mean the request can
/// never succeed as posed and the caller must change inputs.
/// `LadderExhausted` means the penalization ladder ran out of levels before
/// meeting its stop tolerance; the caller may refine grids or extend the
/// penalty schedule and retry.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A structural precondition on the inputs failed (bad band, bad grid,
    /// missing obstacle, ordering violations, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The explicit stencil is not monotone for these grid steps.
    ///
    /// Monotonicity requires nonnegative stencil weights at every admissible
    /// volatility endpoint: `sigma_eff^2*dt/dx^2 + |drift|*dt/dx <= 1` and
    /// `sigma_eff^2 >= |drift|*dx`.
    #[error(
        "CFL violation at t={t}, x={x}: sigma={sigma}, sigma_eff={sigma_eff}, drift={drift}, \
         dt={dt}, dx={dx} ({detail}); refine dt or coarsen dx"
    )]
    CflViolation {
        t: f64,
        x: f64,
        sigma: f64,
        sigma_eff: f64,
        drift: f64,
        dt: f64,
        dx: f64,
        detail: &'static str,
    },

    /// The implicit driver fixed point is not a contraction on this grid:
    /// the Picard map has Lipschitz factor `L*dt*(1 + sigma_high^2) >= 1`.
    #[error(
        "Picard non-contraction: L*dt*(1 + sigma_high^2) = {factor} >= 1 \
         (L={lipschitz}, dt={dt}, sigma_high={sigma_high}); refine dt"
    )]
    PicardNonContraction {
        lipschitz: f64,
        dt: f64,
        sigma_high: f64,
        factor: f64,
    },

    /// The request is outside the operation's documented domain
    /// (e.g. a z-dependent driver passed to the optimal-stopping solver).
    #[error("unsupported case: {0}")]
    Unsupported(String),

    /// A brute-force enumeration was asked for an instance too large to
    /// enumerate exactly.
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// The penalization ladder ran out of levels before the sup-norm gap
    /// between consecutive levels fell below `stop_tol`. The partial
    /// per-level statistics are attached so the caller can decide how to
    /// refine.
    #[error(
        "penalization ladder exhausted after {} levels without convergence: \
         last gap {} > stop_tol {stop_tol}",
        ladder.levels.len(),
        last_gap.map(|g| g.to_string()).unwrap_or_else(|| "n/a".into())
    )]
    LadderExhausted {
        ladder: PenalizationLadder,
        last_gap: Option<f64>,
        stop_tol: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
