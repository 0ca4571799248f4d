//! One-step worst-case (sublinear) expectation on a trinomial stencil.
//!
//! For a value layer `V` on a uniform grid with spacing `dx`, volatility
//! `sigma_eff` and drift `b`, the single-measure one-step expectation over a
//! time step `dt` is the monotone trinomial average
//!
//! ```text
//! E_sigma[V](j) = p_up * V[j+1] + p_mid * V[j] + p_down * V[j-1]
//! p_up/down     = sigma_eff^2 dt / (2 dx^2)  +/-  b dt / (2 dx)
//! p_mid         = 1 - sigma_eff^2 dt / dx^2
//! ```
//!
//! The worst-case step is `sup` of this average over the volatility band.
//! Because the average is affine in `sigma^2`, the supremum over the whole
//! band is attained at one of the two endpoints, so enumerating
//! `{sigma_low, sigma_high}` is exact; ties resolve to `sigma_high`.
//!
//! Boundary nodes use a zero-second-difference closure (linear
//! extrapolation): the missing neighbor is the ghost value `2 V[edge] -
//! V[inner]`, which kills the diffusion term and leaves a one-sided drift
//! difference.

use crate::band::VolatilityBand;
use crate::error::{Error, Result};

/// Stencil weights must stay nonnegative; tiny negative values from rounding
/// are tolerated up to this slack.
const WEIGHT_SLACK: f64 = 1e-12;

/// The three stencil values `(V[j-1], V[j], V[j+1])` for node `j`, with the
/// zero-second-difference ghost substituted at the two domain edges.
#[must_use]
pub fn stencil(values: &[f64], j: usize) -> (f64, f64, f64) {
    debug_assert!(values.len() >= 3 && j < values.len());
    let v0 = values[j];
    let vm = if j == 0 { 2.0 * values[0] - values[1] } else { values[j - 1] };
    let vp = if j + 1 == values.len() {
        2.0 * values[j] - values[j - 1]
    } else {
        values[j + 1]
    };
    (vm, v0, vp)
}

/// One-step trinomial expectation for a fixed effective volatility and drift.
///
/// `sigma_eff` is the diffusion coefficient actually multiplying the noise
/// (control volatility times any state-dependent coefficient); the caller is
/// responsible for the stencil weights being nonnegative (see
/// [`check_weights`]).
#[must_use]
pub fn trinomial_expectation(
    vm: f64,
    v0: f64,
    vp: f64,
    sigma_eff: f64,
    drift: f64,
    dt: f64,
    dx: f64,
) -> f64 {
    let diffusion = sigma_eff * sigma_eff * dt / (2.0 * dx * dx);
    let advection = drift * dt / (2.0 * dx);
    let p_up = diffusion + advection;
    let p_down = diffusion - advection;
    let p_mid = 1.0 - 2.0 * diffusion;
    p_up * vp + p_mid * v0 + p_down * vm
}

/// Verifies the trinomial weights are nonnegative (scheme monotonicity) for
/// one `(sigma_eff, drift)` pair; `t`, `x`, `sigma` only label the error.
pub fn check_weights(
    sigma: f64,
    sigma_eff: f64,
    drift: f64,
    dt: f64,
    dx: f64,
    t: f64,
    x: f64,
) -> Result<()> {
    let var = sigma_eff * sigma_eff;
    let err = |detail: &'static str| Error::CflViolation {
        t,
        x,
        sigma,
        sigma_eff,
        drift,
        dt,
        dx,
        detail,
    };
    if var * dt / (dx * dx) + drift.abs() * dt / dx > 1.0 + WEIGHT_SLACK {
        return Err(err("center weight negative: sigma_eff^2*dt/dx^2 + |drift|*dt/dx > 1"));
    }
    let side_min = (var / dx - drift.abs()) * dt / (2.0 * dx);
    if side_min < -WEIGHT_SLACK {
        return Err(err("side weight negative: sigma_eff^2 < |drift|*dx"));
    }
    Ok(())
}

/// Worst-case one-step expectation of `values` at node `j` over the band.
///
/// Returns `(value, sigma_star)` where `sigma_star` is the maximizing
/// endpoint volatility (ties resolve to `sigma_high`, so a constant layer
/// reports `sigma_high`).
///
/// # Errors
///
/// [`Error::CflViolation`] when the stencil is not monotone at one of the
/// endpoint volatilities.
pub fn step_sup_expectation(
    values: &[f64],
    j: usize,
    drift: f64,
    band: &VolatilityBand,
    dt: f64,
    dx: f64,
) -> Result<(f64, f64)> {
    if values.len() < 3 || j >= values.len() {
        return Err(Error::InvalidInput(format!(
            "step operator needs at least 3 nodes and j in range, got len={}, j={j}",
            values.len()
        )));
    }
    let (vm, v0, vp) = stencil(values, j);
    let mut best = f64::NEG_INFINITY;
    let mut sigma_star = band.sigma_high();
    // Low endpoint first so that an exact tie leaves sigma_high in place.
    for &sigma in &band.endpoints() {
        check_weights(sigma, sigma, drift, dt, dx, f64::NAN, f64::NAN)?;
        let e = trinomial_expectation(vm, v0, vp, sigma, drift, dt, dx);
        if e >= best {
            best = e;
            sigma_star = sigma;
        }
    }
    Ok((best, sigma_star))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band() -> VolatilityBand {
        VolatilityBand::new(0.2, 0.4).unwrap()
    }

    /// Independent evaluation: expectation under each endpoint computed
    /// directly from the probability weights, then maximized by hand.
    fn sup_by_hand(values: &[f64], j: usize, drift: f64, dt: f64, dx: f64) -> f64 {
        let (vm, v0, vp) = stencil(values, j);
        let mut best = f64::NEG_INFINITY;
        for sigma in [0.2f64, 0.4] {
            let d = sigma * sigma * dt / (2.0 * dx * dx);
            let a = drift * dt / (2.0 * dx);
            let e = (d + a) * vp + (1.0 - 2.0 * d) * v0 + (d - a) * vm;
            best = best.max(e);
        }
        best
    }

    #[test]
    fn quadratic_layer_gains_sigma_high_variance() {
        // values = x_j^2 on a symmetric grid: one worst-case step at the
        // center node gains exactly sigma_high^2 * dt (the trinomial is exact
        // on quadratics).
        let dx = 0.1;
        let dt = 0.01;
        let values: Vec<f64> = (-5..=5).map(|k| (k as f64 * dx).powi(2)).collect();
        let j = 5;
        let (v, sigma_star) = step_sup_expectation(&values, j, 0.0, &band(), dt, dx).unwrap();
        assert!((v - 0.4 * 0.4 * dt).abs() < 1e-15, "got {v}");
        assert_eq!(sigma_star, 0.4, "convex layer must select sigma_high");
        assert!((v - sup_by_hand(&values, j, 0.0, dt, dx)).abs() < 1e-15);
    }

    #[test]
    fn concave_layer_selects_sigma_low() {
        let dx = 0.1;
        let dt = 0.01;
        let values: Vec<f64> = (-5..=5).map(|k| -(k as f64 * dx).powi(2)).collect();
        let (v, sigma_star) = step_sup_expectation(&values, 5, 0.0, &band(), dt, dx).unwrap();
        assert!((v - (-0.2 * 0.2 * dt)).abs() < 1e-15, "got {v}");
        assert_eq!(sigma_star, 0.2, "concave layer must select sigma_low");
    }

    #[test]
    fn constant_layer_is_preserved_with_sigma_high_tie() {
        let values = vec![3.5; 9];
        let (v, sigma_star) = step_sup_expectation(&values, 4, 0.3, &band(), 0.01, 0.1).unwrap();
        assert_eq!(v, 3.5, "constants are preserved exactly");
        assert_eq!(sigma_star, 0.4, "ties resolve to sigma_high");
    }

    #[test]
    fn boundary_step_reduces_to_one_sided_drift() {
        // With the ghost closure the boundary step is
        // v0 + drift*dt*(v1 - v0)/dx, independent of sigma.
        let values = vec![1.0, 2.0, 4.0, 8.0];
        let drift = 0.1;
        let (dt, dx) = (0.01, 0.25);
        let (v, _) = step_sup_expectation(&values, 0, drift, &band(), dt, dx).unwrap();
        let expected = 1.0 + drift * dt * (2.0 - 1.0) / dx;
        assert!((v - expected).abs() < 1e-14, "got {v}, want {expected}");
        // Upper edge: one-sided difference (v_M - v_{M-1}) / dx.
        let (v, _) = step_sup_expectation(&values, 3, drift, &band(), dt, dx).unwrap();
        let expected = 8.0 + drift * dt * (8.0 - 4.0) / dx;
        assert!((v - expected).abs() < 1e-14, "got {v}, want {expected}");
    }

    #[test]
    fn violated_cfl_is_a_configuration_error() {
        let values = vec![0.0, 1.0, 0.0];
        // sigma_high^2 dt / dx^2 = 0.16 * 1.0 / 0.01 = 16 >> 1.
        let out = step_sup_expectation(&values, 1, 0.0, &band(), 1.0, 0.1);
        match out {
            Err(Error::CflViolation { detail, .. }) => {
                assert!(detail.contains("center weight"), "got detail {detail}")
            }
            other => panic!("expected CFL violation, got {other:?}"),
        }
        // Large drift against a small low volatility breaks the side weights.
        let narrow = VolatilityBand::new(0.05, 0.4).unwrap();
        let out = step_sup_expectation(&values, 1, 1.0, &narrow, 0.001, 0.1);
        match out {
            Err(Error::CflViolation { detail, sigma, .. }) => {
                assert!(detail.contains("side weight"), "got detail {detail}");
                assert_eq!(sigma, 0.05, "error must identify the offending sigma");
            }
            other => panic!("expected CFL violation, got {other:?}"),
        }
    }
}
