//! Backward worst-case trinomial solver for plain, penalized and reflected
//! (projected) problems.
//!
//! One backward step from layer `i+1` to layer `i` at node `j` computes, for
//! each endpoint volatility `sigma`,
//!
//! ```text
//! value(sigma) :  y = E_sigma[Y_{i+1}](j) + ( f(t,x,y,z) + g(t,x,y,z) sigma^2 ) dt   [+ penalty]
//! ```
//!
//! where `E_sigma` is the monotone trinomial expectation with effective
//! volatility `sigma * sigma_coef(t,x)` and drift `b(t,x) + l(t,x) sigma^2`,
//! and `z` is frozen before the fixed point as the diffusion-scaled centered
//! difference of the *continuation* layer `Y_{i+1}` (one-sided at the domain
//! edges via the ghost closure). The implicit `y` is resolved by Picard
//! iteration (tolerance 1e-12, at most 50 sweeps; the contraction gate is
//! checked upfront by `MarkovianProblem::validate`). The continuation value
//! is the maximum of the two endpoint values (ties to `sigma_high`); the
//! supremum over the whole band is attained there because each one-step
//! objective is affine in `sigma^2`.
//!
//! Obstacle handling per [`Mode`]:
//!
//! * `Plain` — no obstacle: `Y_i = C`.
//! * `Projected` — `Y_i = max(C, h(t_i, x_j))`, booking `da = (h - C)^+`;
//!   the complementarity product `(Y - h) * da` is then zero exactly.
//! * `Penalized(n)` — the penalty `n (y - h)^- ` joins the driver *inside*
//!   the fixed point and is solved exactly per node (testing the unpenalized
//!   branch first, else the damped branch `y = (rhs + n dt h) / (1 + n dt)`),
//!   which keeps the recursion stable for arbitrarily large `n dt`. The
//!   booked increment is `dl = n (Y_i - h)^- dt`; `dk` records the one-step
//!   identity residual recomputed with the emitted surface gradient `Z`
//!   instead of the frozen driver `z` (a consistency diagnostic for the
//!   z-freezing, not a solved-for process).

use crate::error::{Error, Result};
use crate::gexp;
use crate::grid::{SpaceGrid, TimeGrid};
use crate::paths::{simulate_control_paths, VolatilityControl};
use crate::problem::MarkovianProblem;
use crate::surface::{Field, Mode, PenaltyLayers, Surface, SurfaceMeta};

/// Absolute-plus-relative stopping tolerance of the driver fixed point.
pub const PICARD_TOL: f64 = 1e-12;
/// Iteration cap of the driver fixed point.
pub const PICARD_MAX_SWEEPS: usize = 50;

/// Picard iteration for `y = base + rhs(y) * dt` starting from `y0`.
fn picard<F: Fn(f64) -> f64>(base: f64, rhs: F, dt: f64, y0: f64) -> Result<f64> {
    let mut y = y0;
    for _ in 0..PICARD_MAX_SWEEPS {
        let y_next = base + rhs(y) * dt;
        if (y_next - y).abs() <= PICARD_TOL * (1.0 + y_next.abs()) {
            return Ok(y_next);
        }
        y = y_next;
    }
    Err(Error::InvalidInput(format!(
        "driver fixed point did not converge within {PICARD_MAX_SWEEPS} sweeps \
         (base={base}, last y={y}); is the declared Lipschitz constant right?"
    )))
}

/// Solves the per-node, per-sigma implicit value without penalty:
/// `y = e + (f(t,x,y,z) + g(t,x,y,z) sigma^2) dt`.
pub(crate) fn implicit_node_value(
    problem: &MarkovianProblem,
    t: f64,
    x: f64,
    e: f64,
    z: f64,
    sigma: f64,
    dt: f64,
) -> Result<f64> {
    let s2 = sigma * sigma;
    picard(e, |y| problem.f(t, x, y, z) + problem.g(t, x, y, z) * s2, dt, e)
}

/// Solves the per-node, per-sigma implicit value with the penalty term
/// `n (y - h)^-` in the driver. Returns the node value; the booked increment
/// is `n dt (h - y)^+` of the returned value.
#[allow(clippy::too_many_arguments)] // scheme knobs, not a config object
pub(crate) fn implicit_node_value_penalized(
    problem: &MarkovianProblem,
    t: f64,
    x: f64,
    e: f64,
    z: f64,
    sigma: f64,
    dt: f64,
    n: u64,
    h: f64,
) -> Result<f64> {
    // Branch 1: if the unpenalized solution clears the obstacle the penalty
    // vanishes and the plain fixed point is the answer.
    let free = implicit_node_value(problem, t, x, e, z, sigma, dt)?;
    if free >= h {
        return Ok(free);
    }
    // Branch 2: below the obstacle the node equation is
    //   y = e + (f(y) + g(y) sigma^2) dt + n dt (h - y)
    // i.e. y = (e + (f(y) + g(y) sigma^2) dt + n dt h) / (1 + n dt),
    // a contraction with factor L dt (1 + sigma^2) / (1 + n dt).
    let s2 = sigma * sigma;
    let n_dt = n as f64 * dt;
    let denom = 1.0 + n_dt;
    let mut y = h;
    for _ in 0..PICARD_MAX_SWEEPS {
        let y_next =
            (e + (problem.f(t, x, y, z) + problem.g(t, x, y, z) * s2) * dt + n_dt * h) / denom;
        if (y_next - y).abs() <= PICARD_TOL * (1.0 + y_next.abs()) {
            return Ok(y_next);
        }
        y = y_next;
    }
    Err(Error::InvalidInput(format!(
        "penalized fixed point did not converge within {PICARD_MAX_SWEEPS} sweeps at t={t}, x={x}"
    )))
}

/// The per-node continuation value: maximum over the endpoint volatilities of
/// the implicit one-step value. Returns `(value, sigma_star)`, ties to
/// `sigma_high`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn continuation(
    problem: &MarkovianProblem,
    next_layer: &[f64],
    j: usize,
    t: f64,
    x: f64,
    dt: f64,
    dx: f64,
    penalty: Option<(u64, f64)>,
) -> Result<(f64, f64)> {
    let (vm, v0, vp) = gexp::stencil(next_layer, j);
    let sigma_coef = problem.diffusion(t, x);
    let z = sigma_coef * (vp - vm) / (2.0 * dx);
    let b = problem.drift(t, x);
    let l = problem.qv_drift(t, x);
    let mut best = f64::NEG_INFINITY;
    let mut sigma_star = problem.band().sigma_high();
    for &sigma in &problem.band().endpoints() {
        let sigma_eff = sigma * sigma_coef.abs();
        let drift = b + l * sigma * sigma;
        gexp::check_weights(sigma, sigma_eff, drift, dt, dx, t, x)?;
        let e = gexp::trinomial_expectation(vm, v0, vp, sigma_eff, drift, dt, dx);
        let value = match penalty {
            None => implicit_node_value(problem, t, x, e, z, sigma, dt)?,
            Some((n, h)) => implicit_node_value_penalized(problem, t, x, e, z, sigma, dt, n, h)?,
        };
        if value >= best {
            best = value;
            sigma_star = sigma;
        }
    }
    Ok((best, sigma_star))
}

/// Diffusion-scaled space gradient of one solved layer (centered inside,
/// ghost-closed at the edges). Shared with the PDE solver so both routes
/// emit the same Z convention.
pub(crate) fn gradient_row(
    problem: &MarkovianProblem,
    layer: &[f64],
    t: f64,
    sg: &SpaceGrid,
) -> Vec<f64> {
    let dx = sg.dx();
    (0..layer.len())
        .map(|j| {
            let (vm, _, vp) = gexp::stencil(layer, j);
            problem.diffusion(t, sg.node(j)) * (vp - vm) / (2.0 * dx)
        })
        .collect()
}

/// Runs the backward solver over the full grid.
///
/// # Errors
///
/// Configuration errors from [`MarkovianProblem::validate`] (contraction
/// gate, obstacle consistency, Lipschitz sampling), missing obstacle for
/// `Projected`/`Penalized`, zero penalty, and [`Error::CflViolation`] naming
/// the offending `(t, x, sigma)` when the stencil is not monotone.
pub fn rollback(
    problem: &MarkovianProblem,
    tg: &TimeGrid,
    sg: &SpaceGrid,
    mode: Mode,
) -> Result<Surface> {
    problem.validate(tg, sg)?;
    match mode {
        Mode::Projected | Mode::Penalized(_) if !problem.has_obstacle() => {
            return Err(Error::InvalidInput(format!(
                "mode {mode} needs an obstacle but problem '{}' has none",
                problem.label()
            )));
        }
        Mode::Penalized(0) => {
            return Err(Error::InvalidInput("penalty level must be at least 1".into()));
        }
        _ => {}
    }

    let n_t = tg.steps();
    let cols = sg.nodes();
    let dt = tg.dt();
    let dx = sg.dx();
    let mut y = Field::new(n_t + 1, cols, 0.0);
    let mut z = Field::new(n_t + 1, cols, 0.0);
    let mut da = Field::new(n_t + 1, cols, 0.0);
    let mut sigma_star = Field::new(n_t + 1, cols, problem.band().sigma_high());
    let mut pen_layers = match mode {
        Mode::Penalized(n) => Some(PenaltyLayers {
            n,
            dl: Field::new(n_t + 1, cols, 0.0),
            dk: Field::new(n_t + 1, cols, 0.0),
        }),
        _ => None,
    };

    // Terminal layer: exact terminal values, gradient of the terminal row.
    let t_end = tg.t_end();
    for j in 0..cols {
        y.set(n_t, j, problem.terminal(sg.node(j)));
    }
    let term_grad = gradient_row(problem, y.row(n_t), t_end, sg);
    for (j, g) in term_grad.into_iter().enumerate() {
        z.set(n_t, j, g);
    }

    let mut next: Vec<f64> = y.row(n_t).to_vec();
    for i in (0..n_t).rev() {
        let t = tg.node(i);
        for j in 0..cols {
            let x = sg.node(j);
            let h = if problem.has_obstacle() && !matches!(mode, Mode::Plain) {
                Some(problem.obstacle(t, x)?)
            } else {
                None
            };
            let penalty = match (mode, h) {
                (Mode::Penalized(n), Some(hv)) => Some((n, hv)),
                _ => None,
            };
            let (c, s_star) = continuation(problem, &next, j, t, x, dt, dx, penalty)?;
            let value = match mode {
                Mode::Plain => c,
                Mode::Penalized(n) => {
                    let hv = h.expect("penalized mode has an obstacle");
                    let dl = n as f64 * dt * (hv - c).max(0.0);
                    let layers = pen_layers.as_mut().expect("penalty layers allocated");
                    layers.dl.set(i, j, dl);
                    da.set(i, j, dl);
                    c
                }
                Mode::Projected => {
                    let hv = h.expect("projected mode has an obstacle");
                    da.set(i, j, (hv - c).max(0.0));
                    c.max(hv)
                }
            };
            y.set(i, j, value);
            sigma_star.set(i, j, s_star);
        }
        let grad = gradient_row(problem, y.row(i), t, sg);
        for (j, g) in grad.iter().enumerate() {
            z.set(i, j, *g);
        }
        // Identity residual of the penalized step, recomputed with the
        // emitted gradient instead of the frozen driver z.
        if let Some(layers) = pen_layers.as_mut() {
            for j in 0..cols {
                let x = sg.node(j);
                let (vm, v0, vp) = gexp::stencil(&next, j);
                let s = sigma_star.at(i, j);
                let sigma_eff = s * problem.diffusion(t, x).abs();
                let drift = problem.drift(t, x) + problem.qv_drift(t, x) * s * s;
                let e = gexp::trinomial_expectation(vm, v0, vp, sigma_eff, drift, dt, dx);
                let yv = y.at(i, j);
                let zv = z.at(i, j);
                let recomputed = e
                    + (problem.f(t, x, yv, zv) + problem.g(t, x, yv, zv) * s * s) * dt
                    + layers.dl.at(i, j);
                layers.dk.set(i, j, yv - recomputed);
            }
        }
        next.copy_from_slice(y.row(i));
    }

    let meta = SurfaceMeta {
        label: problem.label().to_string(),
        mode: mode.to_string(),
        fingerprint: problem.fingerprint(tg, sg),
    };
    Ok(Surface {
        y,
        z,
        da,
        sigma_star,
        penalty: pen_layers,
        time: *tg,
        space: *sg,
        meta,
    })
}

/// Largest complementarity product `max_{i,j} (Y - h)(t_i, x_j) * da[i][j] / dt`.
///
/// Zero (to rounding) certifies that reflection mass is only booked on the
/// contact set `{Y = h}`.
pub fn complementarity_residual(surface: &Surface, problem: &MarkovianProblem) -> Result<f64> {
    if !problem.has_obstacle() {
        return Err(Error::InvalidInput(
            "complementarity residual needs an obstacle".into(),
        ));
    }
    let dt = surface.time.dt();
    let mut worst: f64 = 0.0;
    for i in 0..surface.y.rows() {
        let t = surface.time.node(i.min(surface.time.steps()));
        for j in 0..surface.y.cols() {
            let x = surface.space.node(j);
            let gap = surface.y.at(i, j) - problem.obstacle(t, x)?;
            worst = worst.max((gap * surface.da.at(i, j) / dt).abs());
        }
    }
    Ok(worst)
}

/// A Monte-Carlo lower bound for the plain worst-case value at `x0`.
///
/// Simulates the forward state under one fixed volatility control and
/// averages the pathwise functional; every control induces one admissible
/// measure, so the estimate lower-bounds the worst-case (supremum) value up
/// to sampling error.
#[derive(Debug, Clone, Copy)]
pub struct McLowerBound {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

/// # Errors
///
/// [`Error::Unsupported`] when the problem has an obstacle (the pathwise
/// functional below has no reflection term) or the driver depends on `(y,z)`
/// (detected by a sampled probe); grid/control mismatches from the path
/// simulator.
pub fn monte_carlo_lower_bound(
    problem: &MarkovianProblem,
    tg: &TimeGrid,
    x0: f64,
    control: &VolatilityControl,
    n_paths: usize,
    seed: u64,
) -> Result<McLowerBound> {
    if problem.has_obstacle() {
        return Err(Error::Unsupported(
            "Monte-Carlo lower bound is defined for plain problems only (no obstacle)".into(),
        ));
    }
    // Sampled probe: the pathwise functional needs a state-only driver.
    let t_probe = tg.t0() + 0.37 * (tg.t_end() - tg.t0());
    for &(y1, z1, y2, z2) in &[(0.0, 0.0, 1.0, 0.0), (0.0, 0.0, 0.0, 1.0), (-2.0, 3.0, 2.0, -3.0)] {
        let df = (problem.f(t_probe, x0, y1, z1) - problem.f(t_probe, x0, y2, z2)).abs();
        let dg = (problem.g(t_probe, x0, y1, z1) - problem.g(t_probe, x0, y2, z2)).abs();
        if df + dg > 1e-12 {
            return Err(Error::Unsupported(
                "Monte-Carlo lower bound needs a (y,z)-independent driver".into(),
            ));
        }
    }
    let paths = simulate_control_paths(control, tg, n_paths, seed)?;
    let dt = tg.dt();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for p in 0..n_paths {
        let noise = &paths.noise[p];
        let mut x = x0;
        let mut running = 0.0;
        for i in 0..tg.steps() {
            let t = tg.node(i);
            let s2 = control.sigma(i) * control.sigma(i);
            running += (problem.f(t, x, 0.0, 0.0) + problem.g(t, x, 0.0, 0.0) * s2) * dt;
            x += (problem.drift(t, x) + problem.qv_drift(t, x) * s2) * dt
                + problem.diffusion(t, x) * (noise[i + 1] - noise[i]);
        }
        let v = running + problem.terminal(x);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n_paths as f64;
    let var = (sum_sq / n_paths as f64 - mean * mean).max(0.0);
    let std_error = (var / n_paths as f64).sqrt();
    Ok(McLowerBound {
        mean,
        std_error,
        n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::VolatilityBand;

    fn band() -> VolatilityBand {
        VolatilityBand::new(0.2, 0.4).unwrap()
    }

    /// Terminal 0, driver f = -1, obstacle 0: the reflected solution is
    /// Y = 0 with reflection increment dt per step (A_T = T), and the
    /// projected recursion reproduces it exactly.
    fn remark_problem() -> MarkovianProblem {
        MarkovianProblem::new("flat-obstacle-drain", band())
            .with_driver_f(|_, _, _, _| -1.0)
            .with_obstacle(|_, _| 0.0)
    }

    fn grids() -> (TimeGrid, SpaceGrid) {
        (
            TimeGrid::new(0.0, 1.0, 200).unwrap(),
            SpaceGrid::new(-3.0, 3.0, 200).unwrap(),
        )
    }

    #[test]
    fn projected_mode_pins_the_drained_value_to_the_obstacle() {
        let (tg, sg) = grids();
        let s = rollback(&remark_problem(), &tg, &sg, Mode::Projected).unwrap();
        let mid = sg.nearest_node(0.0);
        assert_eq!(s.y.at(0, mid), 0.0, "Y_0 must sit exactly on the obstacle");
        let a_total = s.total_reflection_at(mid);
        assert!(
            (a_total - 1.0).abs() < 1e-12,
            "reflection mass must equal T exactly, got {a_total}"
        );
        // Every increment is exactly dt and complementarity is exact.
        assert!((s.da.at(57, mid) - tg.dt()).abs() < 1e-15);
        let res = complementarity_residual(&s, &remark_problem()).unwrap();
        assert!(res <= 1e-12, "complementarity residual {res}");
    }

    #[test]
    fn penalized_mode_approaches_the_obstacle_at_rate_one_over_n() {
        let (tg, sg) = grids();
        let mid = sg.nearest_node(0.0);
        let mut previous = f64::NEG_INFINITY;
        for n in [16u64, 64, 256, 1024] {
            let s = rollback(&remark_problem(), &tg, &sg, Mode::Penalized(n)).unwrap();
            let y0 = s.y.at(0, mid);
            // The node recursion has the closed-form steady state -1/n.
            let expected = -(1.0 - (1.0 + n as f64 * tg.dt()).powi(-(tg.steps() as i32))) / n as f64;
            assert!(
                (y0 - expected).abs() < 1e-12,
                "n={n}: Y_0 = {y0}, closed-form {expected}"
            );
            assert!(y0 > previous, "penalized values must increase in n");
            previous = y0;
            // Penalty mass approximates T - 1/n.
            let l_total = s.total_reflection_at(mid);
            assert!(
                (l_total - (1.0 - 1.0 / n as f64)).abs() < 2.0 * tg.dt(),
                "n={n}: L_T = {l_total}"
            );
            let layers = s.penalty.as_ref().expect("penalized surface carries layers");
            assert_eq!(layers.n, n);
            let dk_max = layers.dk.max_abs();
            assert!(dk_max <= 1e-12, "identity residual must vanish, got {dk_max}");
        }
    }

    #[test]
    fn quadratic_terminal_accumulates_sigma_high_variance() {
        // Y_0(0) for phi(x) = x^2 under zero drifts is sigma_high^2 * T; the
        // trinomial is exact on quadratics away from the boundary and the
        // boundary influence at the center is negligible on this domain.
        let p = MarkovianProblem::new("quadratic-terminal", band()).with_terminal(|x| x * x);
        let (tg, sg) = grids();
        let s = rollback(&p, &tg, &sg, Mode::Plain).unwrap();
        let y0 = s.value_at_start(0.0);
        assert!(
            (y0 - 0.16).abs() < 1e-10,
            "Y_0 should be sigma_high^2 * T = 0.16, got {y0}"
        );
        assert_eq!(s.sigma_star.at(100, sg.nearest_node(0.0)), 0.4);
        assert_eq!(s.da.max_abs(), 0.0, "no obstacle, no reflection");
    }

    #[test]
    fn constant_terminal_is_transported_unchanged() {
        let p = MarkovianProblem::new("constant-terminal", band()).with_terminal(|_| 7.0);
        let (tg, sg) = grids();
        let s = rollback(&p, &tg, &sg, Mode::Plain).unwrap();
        for j in 0..sg.nodes() {
            assert_eq!(s.y.at(0, j), 7.0, "constants are preserved exactly");
        }
        assert_eq!(s.sigma_star.at(0, 3), 0.4, "ties resolve to sigma_high");
        assert_eq!(s.z.max_abs(), 0.0, "flat layers have zero gradient");
    }

    #[test]
    fn projected_without_obstacle_is_rejected() {
        let p = MarkovianProblem::new("no-obstacle", band()).with_terminal(|x| x);
        let (tg, sg) = grids();
        match rollback(&p, &tg, &sg, Mode::Projected) {
            Err(Error::InvalidInput(msg)) => assert!(msg.contains("obstacle"), "got: {msg}"),
            other => panic!("expected invalid-input, got {other:?}"),
        }
    }

    #[test]
    fn cfl_violation_names_the_offending_node() {
        let p = MarkovianProblem::new("drifty", band())
            .with_drift(|_, _| 2.0)
            .with_terminal(|x| x);
        let tg = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let sg = SpaceGrid::new(-1.0, 1.0, 10).unwrap();
        match rollback(&p, &tg, &sg, Mode::Plain) {
            Err(Error::CflViolation { sigma, drift, .. }) => {
                assert_eq!(drift, 2.0);
                assert!(sigma > 0.0);
            }
            other => panic!("expected CFL violation, got {other:?}"),
        }
    }

    #[test]
    fn mc_bound_sits_below_the_rollback_value() {
        let p = MarkovianProblem::new("quadratic-terminal", band()).with_terminal(|x| x * x);
        let (tg, sg) = grids();
        let y0 = rollback(&p, &tg, &sg, Mode::Plain).unwrap().value_at_start(0.0);
        let control = VolatilityControl::constant(0.4, tg.steps(), &band()).unwrap();
        let mc = monte_carlo_lower_bound(&p, &tg, 0.0, &control, 4000, 99).unwrap();
        assert!(
            mc.mean <= y0 + 3.0 * mc.std_error,
            "MC mean {} must lower-bound rollback {y0} (SE {})",
            mc.mean,
            mc.std_error
        );
        // The sigma_high control is the worst case here, so it should also
        // come close from below.
        assert!(
            (mc.mean - y0).abs() <= 4.0 * mc.std_error,
            "sigma_high control should be near-optimal: mean {}, value {y0}, SE {}",
            mc.mean,
            mc.std_error
        );
        // Constant payoff: zero variance, estimate exact.
        let c = MarkovianProblem::new("constant-terminal", band()).with_terminal(|_| 3.25);
        let mc = monte_carlo_lower_bound(&c, &tg, 0.0, &control, 64, 1).unwrap();
        assert_eq!(mc.mean, 3.25);
        assert_eq!(mc.std_error, 0.0);
    }

    #[test]
    fn mc_bound_rejects_obstacles_and_state_dependent_drivers() {
        let (tg, _) = grids();
        let control = VolatilityControl::constant(0.3, tg.steps(), &band()).unwrap();
        let with_obstacle = remark_problem();
        assert!(matches!(
            monte_carlo_lower_bound(&with_obstacle, &tg, 0.0, &control, 10, 0),
            Err(Error::Unsupported(_))
        ));
        let y_driver = MarkovianProblem::new("y-driver", band())
            .with_driver_f(|_, _, y, _| 0.5 * y)
            .with_lipschitz(0.5);
        assert!(matches!(
            monte_carlo_lower_bound(&y_driver, &tg, 0.0, &control, 10, 0),
            Err(Error::Unsupported(_))
        ));
    }
}
