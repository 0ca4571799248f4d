//! Optimal-stopping view of the reflected solution.
//!
//! For drivers that do not read the `z` argument, the reflected value admits
//! the stopped representation
//!
//! ```text
//! Y_0 = sup_tau E^sup[ integral_0^tau f ds + h(tau, X_tau) 1{tau<T} + phi(X_T) 1{tau=T} ],
//! ```
//!
//! and its dynamic-programming recursion
//! `V_i = max(h(t_i, .), sup_sigma E_sigma[V_{i+1}] + driver dt)` is the same
//! arithmetic the projected rollback performs. This module runs that
//! recursion on its own (sharing the per-node kernels so the identity is
//! exact), extracts the exercise policy, checks the discrete
//! optional-stopping property (the reflection increment vanishes strictly
//! before the contact set), and carries an exhaustive brute-force oracle for
//! tiny instances that enumerates every stopping rule and — when small enough
//! — every volatility control outright.

use crate::error::{Error, Result};
use crate::gexp;
use crate::grid::{SpaceGrid, TimeGrid};
use crate::lattice;
use crate::problem::MarkovianProblem;
use crate::surface::{Field, Surface};

/// Scale factor for the contact-set tolerance `1e-10 * (1 + max|Y|)`.
const CONTACT_TOL_SCALE: f64 = 1e-10;

/// Exercise policy extracted from a value surface over an obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingPolicy {
    rows: usize,
    cols: usize,
    stop: Vec<bool>,
    /// Per time row, the smallest and largest exercise location `x` (None
    /// when the row has no exercise node). The final row always exercises.
    pub boundary: Vec<Option<(f64, f64)>>,
    /// Per space column `j`, the first grid time at which the column itself
    /// is in the exercise region (maturity when it never is) — a
    /// measure-free surrogate for the first hitting time of `{Y = h}` by a
    /// path started at that node.
    pub d_estimate: Vec<f64>,
    /// Tolerance actually used: `1e-10 * (1 + max|Y|)`.
    pub tol_used: f64,
}

impl StoppingPolicy {
    /// Number of time rows (steps + 1).
    #[must_use]
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of space columns.
    #[must_use]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Whether the policy exercises at time row `i`, space column `j`.
    #[must_use]
    pub fn stops_at(&self, i: usize, j: usize) -> bool {
        self.stop[i * self.cols + j]
    }

    fn from_values(
        values: &Field,
        tg: &TimeGrid,
        sg: &SpaceGrid,
        problem: &MarkovianProblem,
    ) -> Result<Self> {
        let rows = values.rows();
        let cols = values.cols();
        let tol = CONTACT_TOL_SCALE * (1.0 + values.max_abs());
        let mut stop = vec![false; rows * cols];
        let mut boundary = vec![None; rows];
        let mut d_estimate = vec![tg.t_end(); cols];
        for i in 0..rows {
            let t = tg.node(i);
            let mut lo: Option<f64> = None;
            let mut hi: Option<f64> = None;
            for j in 0..cols {
                let x = sg.node(j);
                let exercised = if i + 1 == rows {
                    true
                } else {
                    values.at(i, j) - problem.obstacle(t, x)? <= tol
                };
                if exercised {
                    stop[i * cols + j] = true;
                    lo.get_or_insert(x);
                    hi = Some(x);
                    if d_estimate[j] == tg.t_end() && i + 1 < rows {
                        d_estimate[j] = d_estimate[j].min(t);
                    }
                }
            }
            boundary[i] = lo.zip(hi);
        }
        Ok(StoppingPolicy {
            rows,
            cols,
            stop,
            boundary,
            d_estimate,
            tol_used: tol,
        })
    }

    /// Reads the policy off a solved (typically projected) surface.
    ///
    /// # Errors
    ///
    /// The problem must carry an obstacle.
    pub fn from_surface(surface: &Surface, problem: &MarkovianProblem) -> Result<Self> {
        Self::from_values(&surface.y, &surface.time, &surface.space, problem)
    }
}

/// Rejects drivers that read the `z` argument, pointing the caller to the
/// full solver. Sampled probe: `f` and `g` are evaluated at a handful of
/// state points with three different `z` values each.
fn require_z_free(problem: &MarkovianProblem) -> Result<()> {
    let probes = [
        (0.1, -0.7, 0.3),
        (0.5, 0.9, -1.1),
        (0.9, 0.0, 2.0),
    ];
    let zs = [-0.7, 0.3, 1.9];
    for &(t, x, y) in &probes {
        let f0 = problem.f(t, x, y, zs[0]);
        let g0 = problem.g(t, x, y, zs[0]);
        for &z in &zs[1..] {
            if (problem.f(t, x, y, z) - f0).abs() > 1e-12
                || (problem.g(t, x, y, z) - g0).abs() > 1e-12
            {
                return Err(Error::Unsupported(format!(
                    "the stopping recursion needs a z-free driver, but '{}' reads z; \
                     solve it with lattice::rollback instead",
                    problem.label()
                )));
            }
        }
    }
    Ok(())
}

/// Rejects drivers that read `y` or `z` (the brute-force functional
/// integrates the driver along the path, which is only rule-independent when
/// the driver ignores the value process).
fn require_state_free_driver(problem: &MarkovianProblem) -> Result<()> {
    require_z_free(problem)?;
    let probes = [(0.1, -0.7), (0.5, 0.9), (0.9, 0.0)];
    let ys = [-0.8, 0.4, 1.7];
    for &(t, x) in &probes {
        let f0 = problem.f(t, x, ys[0], 0.0);
        let g0 = problem.g(t, x, ys[0], 0.0);
        for &y in &ys[1..] {
            if (problem.f(t, x, y, 0.0) - f0).abs() > 1e-12
                || (problem.g(t, x, y, 0.0) - g0).abs() > 1e-12
            {
                return Err(Error::Unsupported(format!(
                    "the brute-force oracle needs a (y,z)-free driver, but '{}' reads y",
                    problem.label()
                )));
            }
        }
    }
    Ok(())
}

/// Dynamic-programming value of the stopped problem and the exercise policy.
///
/// Runs `V_N = phi`, `V_i = max(h(t_i,.), per-node continuation)` with the
/// same per-node kernel as the projected rollback, so the two agree exactly.
/// Returns the value at `(0, x0)` (nearest grid node) and the policy.
///
/// # Errors
///
/// Needs an obstacle and a z-free driver ([`Error::Unsupported`] otherwise,
/// directing to the lattice solver); grid/CFL errors as in the rollback.
pub fn optimal_stopping_value(
    problem: &MarkovianProblem,
    tg: &TimeGrid,
    sg: &SpaceGrid,
    x0: f64,
) -> Result<(f64, StoppingPolicy)> {
    if !problem.has_obstacle() {
        return Err(Error::InvalidInput(format!(
            "optimal stopping needs an obstacle; problem '{}' has none",
            problem.label()
        )));
    }
    require_z_free(problem)?;
    problem.validate(tg, sg)?;

    let n_t = tg.steps();
    let cols = sg.nodes();
    let dt = tg.dt();
    let dx = sg.dx();
    let mut values = Field::new(n_t + 1, cols, 0.0);
    for j in 0..cols {
        values.set(n_t, j, problem.terminal(sg.node(j)));
    }
    let mut next: Vec<f64> = values.row(n_t).to_vec();
    for i in (0..n_t).rev() {
        let t = tg.node(i);
        for j in 0..cols {
            let x = sg.node(j);
            let (cont, _) = lattice::continuation(problem, &next, j, t, x, dt, dx, None)?;
            values.set(i, j, cont.max(problem.obstacle(t, x)?));
        }
        next.copy_from_slice(values.row(i));
    }
    let policy = StoppingPolicy::from_values(&values, tg, sg, problem)?;
    Ok((values.at(0, sg.nearest_node(x0)), policy))
}

/// Exhaustive oracle for tiny instances: enumerates every stopping rule (a
/// boolean label per pre-maturity node on the recombining lattice; maturity
/// always stops) and maximizes over the volatility control.
///
/// For a fixed rule the control maximum is taken per node in a backward pass
/// (exact, by monotone induction on the nonnegative stencil weights). When
/// `steps * nodes <= 10` the rule/control double enumeration is also run
/// outright and cross-checked against the per-node maximization before the
/// value is returned.
///
/// # Errors
///
/// [`Error::TooLarge`] beyond 4 steps or 5 space nodes; needs an obstacle and
/// a `(y,z)`-free driver; grid/CFL errors as in the rollback.
pub fn brute_force_oracle(
    problem: &MarkovianProblem,
    tg: &TimeGrid,
    sg: &SpaceGrid,
    x0: f64,
) -> Result<f64> {
    if tg.steps() > 4 || sg.nodes() > 5 {
        return Err(Error::TooLarge(format!(
            "brute-force enumeration is exponential; got {} steps x {} nodes, limit 4 x 5",
            tg.steps(),
            sg.nodes()
        )));
    }
    if !problem.has_obstacle() {
        return Err(Error::InvalidInput(format!(
            "the stopping oracle needs an obstacle; problem '{}' has none",
            problem.label()
        )));
    }
    require_state_free_driver(problem)?;
    problem.validate(tg, sg)?;

    let steps = tg.steps();
    let cols = sg.nodes();
    let dt = tg.dt();
    let dx = sg.dx();
    let bits = steps * cols;
    let j0 = sg.nearest_node(x0);

    let terminal: Vec<f64> = (0..cols).map(|j| problem.terminal(sg.node(j))).collect();
    let mut obstacle = Field::new(steps, cols, 0.0);
    for i in 0..steps {
        for j in 0..cols {
            obstacle.set(i, j, problem.obstacle(tg.node(i), sg.node(j))?);
        }
    }
    // Since the driver is (y,z)-free, the one-step value under a fixed sigma
    // is an affine map of the stencil; tabulate its weights and constant per
    // (step, node, endpoint) once so the 2^(steps*cols) rule sweep is cheap.
    struct StepTab {
        up: f64,
        mid: f64,
        down: f64,
        add: f64,
    }
    let endpoints = problem.band().endpoints();
    let mut tab: Vec<StepTab> = Vec::with_capacity(steps * cols * 2);
    for i in 0..steps {
        let t = tg.node(i);
        for j in 0..cols {
            let x = sg.node(j);
            for &sigma in &endpoints {
                let sigma_coef = problem.diffusion(t, x);
                let sigma_eff = sigma * sigma_coef.abs();
                let drift = problem.drift(t, x) + problem.qv_drift(t, x) * sigma * sigma;
                gexp::check_weights(sigma, sigma_eff, drift, dt, dx, t, x)?;
                let diffusion = sigma_eff * sigma_eff * dt / (2.0 * dx * dx);
                let advection = drift * dt / (2.0 * dx);
                tab.push(StepTab {
                    up: diffusion + advection,
                    mid: 1.0 - 2.0 * diffusion,
                    down: diffusion - advection,
                    add: (problem.f(t, x, 0.0, 0.0) + problem.g(t, x, 0.0, 0.0) * sigma * sigma)
                        * dt,
                });
            }
        }
    }
    let one_step = |layer: &[f64], i: usize, j: usize, endpoint: usize| -> f64 {
        let vm = if j == 0 { 2.0 * layer[0] - layer[1] } else { layer[j - 1] };
        let vp = if j + 1 == cols {
            2.0 * layer[cols - 1] - layer[cols - 2]
        } else {
            layer[j + 1]
        };
        let w = &tab[(i * cols + j) * 2 + endpoint];
        w.up * vp + w.mid * layer[j] + w.down * vm + w.add
    };

    // Value of one rule with the control maximized per node.
    let rule_value = |rule: u32| -> f64 {
        let mut layer = terminal.clone();
        let mut scratch = vec![0.0; cols];
        for i in (0..steps).rev() {
            for (j, slot) in scratch.iter_mut().enumerate() {
                *slot = if rule & (1 << (i * cols + j)) != 0 {
                    obstacle.at(i, j)
                } else {
                    one_step(&layer, i, j, 0).max(one_step(&layer, i, j, 1))
                };
            }
            layer.copy_from_slice(&scratch);
        }
        layer[j0]
    };

    let mut best = f64::NEG_INFINITY;
    for rule in 0..(1u32 << bits) {
        best = best.max(rule_value(rule));
    }

    if bits <= 10 {
        // Small enough to also enumerate the volatility control outright and
        // cross-check the per-node maximization.
        let pair_value = |rule: u32, control: u32| -> f64 {
            let mut layer = terminal.clone();
            let mut scratch = vec![0.0; cols];
            for i in (0..steps).rev() {
                for (j, slot) in scratch.iter_mut().enumerate() {
                    let bit = 1 << (i * cols + j);
                    *slot = if rule & bit != 0 {
                        obstacle.at(i, j)
                    } else {
                        one_step(&layer, i, j, usize::from(control & bit != 0))
                    };
                }
                layer.copy_from_slice(&scratch);
            }
            layer[j0]
        };
        let mut slow_best = f64::NEG_INFINITY;
        for rule in 0..(1u32 << bits) {
            for control in 0..(1u32 << bits) {
                slow_best = slow_best.max(pair_value(rule, control));
            }
        }
        if (slow_best - best).abs() > 1e-12 * (1.0 + best.abs()) {
            return Err(Error::InvalidInput(format!(
                "oracle self-check failed: per-node control max {best} vs full enumeration {slow_best}"
            )));
        }
    }
    Ok(best)
}

/// One first-hitting layer of the approximate contact sets.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingLayer {
    /// Threshold index: the layer uses the band `Y - h < 1/n`.
    pub n: u64,
    /// Per space column, the first grid time the column enters the band
    /// (maturity when it never does).
    pub first_hit: Vec<f64>,
}

/// Report of the discrete optional-stopping check.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionalStoppingReport {
    /// Contact tolerance used (`1e-10 * (1 + max|Y|)`).
    pub tol: f64,
    /// Largest reflection increment found strictly off the contact set.
    pub max_da_off_contact: f64,
    /// Whether that maximum is within tolerance.
    pub pass: bool,
    /// First-hitting layers for the requested thresholds `1/n`.
    pub hitting_layers: Vec<HittingLayer>,
}

/// Verifies that the reflection increment vanishes wherever the surface sits
/// strictly above the obstacle (`dA = 0` on `{Y > h + tol}`), and reports the
/// first-hitting layers of the bands `{Y - h < 1/n}` for each requested `n`.
///
/// # Errors
///
/// The problem must carry an obstacle and the policy must match the surface
/// shape.
pub fn optional_stopping_check(
    surface: &Surface,
    problem: &MarkovianProblem,
    policy: &StoppingPolicy,
    ns: &[u64],
) -> Result<OptionalStoppingReport> {
    if policy.rows() != surface.y.rows() || policy.cols() != surface.y.cols() {
        return Err(Error::InvalidInput(format!(
            "policy shape {}x{} does not match surface {}x{}",
            policy.rows(),
            policy.cols(),
            surface.y.rows(),
            surface.y.cols()
        )));
    }
    if !problem.has_obstacle() {
        return Err(Error::InvalidInput(format!(
            "optional-stopping check needs an obstacle; problem '{}' has none",
            problem.label()
        )));
    }
    let tol = CONTACT_TOL_SCALE * (1.0 + surface.y.max_abs());
    let mut max_da_off_contact: f64 = 0.0;
    let rows = surface.y.rows();
    let cols = surface.y.cols();
    for i in 0..rows.saturating_sub(1) {
        let t = surface.time.node(i);
        for j in 0..cols {
            let off_contact =
                surface.y.at(i, j) - problem.obstacle(t, surface.space.node(j))? > tol;
            if off_contact {
                max_da_off_contact = max_da_off_contact.max(surface.da.at(i, j).abs());
            }
        }
    }
    let mut hitting_layers = Vec::with_capacity(ns.len());
    for &n in ns {
        if n == 0 {
            return Err(Error::InvalidInput("hitting threshold index must be >= 1".into()));
        }
        let threshold = 1.0 / n as f64;
        let mut first_hit = vec![surface.time.t_end(); cols];
        for (j, hit) in first_hit.iter_mut().enumerate() {
            for i in 0..rows {
                let t = surface.time.node(i);
                if surface.y.at(i, j) - problem.obstacle(t, surface.space.node(j))? < threshold {
                    *hit = t;
                    break;
                }
            }
        }
        hitting_layers.push(HittingLayer { n, first_hit });
    }
    Ok(OptionalStoppingReport {
        tol,
        max_da_off_contact,
        pass: max_da_off_contact <= tol,
        hitting_layers,
    })
}
