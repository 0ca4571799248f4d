//! Uncertain-volatility market layer: American claim superhedging prices,
//! hedge extraction, and the classical single-volatility oracles used to
//! pin the degenerate and convex/concave corners.
//!
//! The stock follows `dS = r S dt + S dB` under volatility uncertainty, and
//! the superhedging price of an American claim is the starting value of the
//! reflected backward equation whose obstacle is the exercise payoff. The
//! solvers run in log-price `x = log s`, where the diffusion band is
//! constant and the Ito correction `-sigma^2/2` rides the quadratic-variation
//! drift slot, staying inside the per-step volatility maximization.
//! Pricing runs use the discounted transform (zero driver, obstacle
//! `e^{-rt} payoff`): the price is read directly at `t = 0` where the
//! discount factor is one.

use std::fmt;
use std::sync::Arc;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::band::VolatilityBand;
use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::lattice;
use crate::pde;
use crate::problem::MarkovianProblem;
use crate::stopping::{self, StoppingPolicy};
use crate::surface::{Field, Mode, Surface};

/// Threshold scale under which the hedge fraction is reported as undefined.
const HEDGE_EPS_SCALE: f64 = 1e-8;

/// Center-weight budget targeted by the automatic space-grid choice. Kept
/// well under 1 so refined grids (twice the intervals, four times the steps)
/// stay monotone without re-tuning.
const CFL_TARGET: f64 = 0.45;

/// Market primitives: rate, spot, volatility band, and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketModel {
    rate: f64,
    spot: f64,
    band: VolatilityBand,
    maturity: f64,
}

impl MarketModel {
    /// # Errors
    ///
    /// Requires `rate >= 0`, `spot > 0`, `maturity > 0`, all finite.
    pub fn new(rate: f64, spot: f64, band: VolatilityBand, maturity: f64) -> Result<Self> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::InvalidInput(format!(
                "interest rate must be finite and nonnegative, got {rate}"
            )));
        }
        if !spot.is_finite() || spot <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "spot price must be finite and positive, got {spot}"
            )));
        }
        if !maturity.is_finite() || maturity <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "maturity must be finite and positive, got {maturity}"
            )));
        }
        Ok(Self {
            rate,
            spot,
            band,
            maturity,
        })
    }

    #[must_use]
    pub fn rate(&self) -> f64 {
        self.rate
    }

    #[must_use]
    pub fn spot(&self) -> f64 {
        self.spot
    }

    #[must_use]
    pub fn band(&self) -> VolatilityBand {
        self.band
    }

    #[must_use]
    pub fn maturity(&self) -> f64 {
        self.maturity
    }
}

/// Payoff shape of a claim.
#[derive(Clone)]
pub enum PayoffKind {
    Put,
    Call,
    /// Arbitrary payoff of the stock price.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for PayoffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PayoffKind::Put => "Put",
            PayoffKind::Call => "Call",
            PayoffKind::Custom(_) => "Custom(..)",
        })
    }
}

/// A claim: payoff kind plus strike. For American pricing the payoff doubles
/// as the exercise obstacle.
#[derive(Debug, Clone)]
pub struct ClaimSpec {
    kind: PayoffKind,
    strike: f64,
}

impl ClaimSpec {
    /// # Errors
    ///
    /// The strike must be finite and nonnegative.
    pub fn put(strike: f64) -> Result<Self> {
        Self::checked(PayoffKind::Put, strike)
    }

    /// # Errors
    ///
    /// The strike must be finite and nonnegative.
    pub fn call(strike: f64) -> Result<Self> {
        Self::checked(PayoffKind::Call, strike)
    }

    /// Custom payoff; the strike is kept as a magnitude reference (hedge
    /// cutoff scaling) and may be zero.
    ///
    /// # Errors
    ///
    /// The strike must be finite and nonnegative.
    pub fn custom<F>(strike: f64, payoff: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::checked(PayoffKind::Custom(Arc::new(payoff)), strike)
    }

    fn checked(kind: PayoffKind, strike: f64) -> Result<Self> {
        if !strike.is_finite() || strike < 0.0 {
            return Err(Error::InvalidInput(format!(
                "strike must be finite and nonnegative, got {strike}"
            )));
        }
        Ok(Self { kind, strike })
    }

    #[must_use]
    pub fn strike(&self) -> f64 {
        self.strike
    }

    #[must_use]
    pub fn kind_label(&self) -> &'static str {
        match self.kind {
            PayoffKind::Put => "put",
            PayoffKind::Call => "call",
            PayoffKind::Custom(_) => "custom",
        }
    }

    /// Payoff as a function of the stock price.
    #[must_use]
    pub fn payoff(&self, s: f64) -> f64 {
        match &self.kind {
            PayoffKind::Put => (self.strike - s).max(0.0),
            PayoffKind::Call => (s - self.strike).max(0.0),
            PayoffKind::Custom(f) => f(s),
        }
    }

    fn payoff_fn(&self) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        match &self.kind {
            PayoffKind::Put => {
                let k = self.strike;
                Arc::new(move |s| (k - s).max(0.0))
            }
            PayoffKind::Call => {
                let k = self.strike;
                Arc::new(move |s| (s - k).max(0.0))
            }
            PayoffKind::Custom(f) => f.clone(),
        }
    }

    fn is_custom(&self) -> bool {
        matches!(self.kind, PayoffKind::Custom(_))
    }
}

/// Builds the time grid and an automatically sized log-price grid.
///
/// The domain is `log(spot) +- (6 sigma_high sqrt(T) + drift_max T)`. When
/// `intervals` is `None` the spacing is chosen so the center stencil weight
/// uses at most [`CFL_TARGET`] of its budget at the top volatility (leaving
/// headroom for refinement studies), capped by the side-weight condition at
/// both band endpoints; the interval count is rounded up to even so the spot
/// sits on a grid node.
///
/// # Errors
///
/// Grid construction errors propagate.
pub fn build_grids(
    model: &MarketModel,
    steps: usize,
    intervals: Option<usize>,
) -> Result<(TimeGrid, SpaceGrid)> {
    let tg = TimeGrid::new(0.0, model.maturity(), steps)?;
    let sh = model.band().sigma_high();
    let drift_max = model.rate() + 0.5 * sh * sh;
    let half = 6.0 * sh * model.maturity().sqrt() + drift_max * model.maturity();
    let x0 = model.spot().ln();
    let m = match intervals {
        Some(m) => m,
        None => {
            let dt = tg.dt();
            let a = sh * sh * dt;
            let b = drift_max * dt;
            let mut dx = (b + (b * b + 4.0 * CFL_TARGET * a).sqrt()) / (2.0 * CFL_TARGET);
            for &s in &model.band().endpoints() {
                let drift = (model.rate() - 0.5 * s * s).abs();
                if drift > 0.0 {
                    dx = dx.min(0.8 * s * s / drift);
                }
            }
            // Round the interval count DOWN to even so the realized spacing
            // is at least the target (the budget usage only shrinks as dx
            // grows); extreme parameters that defeat the side cap are caught
            // by the solver's own weight check.
            (2 * (half / dx).floor() as usize).max(2)
        }
    };
    Ok((tg, SpaceGrid::centered(x0, half, m)?))
}

/// The American pricing problem in log-price, discounted form: zero driver,
/// terminal `e^{-rT} payoff(e^x)`, obstacle `e^{-rt} payoff(e^x)`.
#[must_use]
pub fn american_problem(model: &MarketModel, claim: &ClaimSpec) -> MarkovianProblem {
    let r = model.rate();
    let t_end = model.maturity();
    let pay_terminal = claim.payoff_fn();
    let pay_obstacle = pay_terminal.clone();
    MarkovianProblem::new(
        format!("american-{}-discounted", claim.kind_label()),
        model.band(),
    )
    .with_drift(move |_, _| r)
    .with_qv_drift(|_, _| -0.5)
    .with_terminal(move |x| (-r * t_end).exp() * pay_terminal(x.exp()))
    .with_obstacle(move |t, x| (-r * t).exp() * pay_obstacle(x.exp()))
}

/// The same American problem in raw (undiscounted) form: driver `-r y`,
/// obstacle and terminal equal to the bare payoff. Same starting value as
/// the discounted form; the interior surface differs by the discount factor.
/// Useful for exercising the implicit driver treatment.
#[must_use]
pub fn american_problem_raw(model: &MarketModel, claim: &ClaimSpec) -> MarkovianProblem {
    let r = model.rate();
    let pay_terminal = claim.payoff_fn();
    let pay_obstacle = pay_terminal.clone();
    MarkovianProblem::new(format!("american-{}-raw", claim.kind_label()), model.band())
        .with_drift(move |_, _| r)
        .with_qv_drift(|_, _| -0.5)
        .with_terminal(move |x| pay_terminal(x.exp()))
        .with_obstacle(move |_, x| pay_obstacle(x.exp()))
        .with_driver_f(move |_, _, y, _| -r * y)
        .with_lipschitz(r)
}

/// The European problem (no obstacle), discounted form.
#[must_use]
pub fn european_problem(model: &MarketModel, claim: &ClaimSpec) -> MarkovianProblem {
    let r = model.rate();
    let t_end = model.maturity();
    let pay = claim.payoff_fn();
    MarkovianProblem::new(
        format!("european-{}-discounted", claim.kind_label()),
        model.band(),
    )
    .with_drift(move |_, _| r)
    .with_qv_drift(|_, _| -0.5)
    .with_terminal(move |x| (-r * t_end).exp() * pay(x.exp()))
}

/// Computational route for a pricing call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PricingMethod {
    /// Trinomial rollback with exact projection.
    Lattice,
    /// Explicit finite-difference march of the obstacle equation.
    Pde,
    /// Dynamic-programming stopped recursion (same arithmetic as the
    /// lattice; also emits the projected surface for reporting).
    Stopping,
}

/// Result of an American pricing call.
#[derive(Debug, Clone)]
pub struct PricingResult {
    /// Superhedging price: the reflected value at `(0, spot)`.
    pub h_up: f64,
    /// Discounted solution surface in log-price coordinates.
    pub surface: Surface,
    /// Exercise policy extracted from the solve.
    pub policy: StoppingPolicy,
}

/// Prices an American claim under the model's volatility band.
///
/// # Errors
///
/// Model/claim/grid validation and solver (CFL) errors propagate.
pub fn price_american(
    model: &MarketModel,
    claim: &ClaimSpec,
    steps: usize,
    intervals: Option<usize>,
    method: PricingMethod,
) -> Result<PricingResult> {
    let problem = american_problem(model, claim);
    let (tg, sg) = build_grids(model, steps, intervals)?;
    let x0 = model.spot().ln();
    let surface = match method {
        PricingMethod::Lattice | PricingMethod::Stopping => {
            lattice::rollback(&problem, &tg, &sg, Mode::Projected)?
        }
        PricingMethod::Pde => pde::solve_obstacle_pde(&problem, &tg, &sg)?,
    };
    let (h_up, policy) = match method {
        PricingMethod::Stopping => stopping::optimal_stopping_value(&problem, &tg, &sg, x0)?,
        _ => (
            surface.value_at_start(x0),
            StoppingPolicy::from_surface(&surface, &problem)?,
        ),
    };
    Ok(PricingResult {
        h_up,
        surface,
        policy,
    })
}

/// Prices a European claim (plain solve, no obstacle). `Stopping` is not a
/// valid route here.
///
/// # Errors
///
/// Model/claim/grid validation and solver errors propagate.
pub fn price_european(
    model: &MarketModel,
    claim: &ClaimSpec,
    steps: usize,
    intervals: Option<usize>,
    method: PricingMethod,
) -> Result<(f64, Surface)> {
    let problem = european_problem(model, claim);
    let (tg, sg) = build_grids(model, steps, intervals)?;
    let surface = match method {
        PricingMethod::Lattice => lattice::rollback(&problem, &tg, &sg, Mode::Plain)?,
        PricingMethod::Pde => pde::solve_plain_pde(&problem, &tg, &sg)?,
        PricingMethod::Stopping => {
            return Err(Error::InvalidInput(
                "the stopping route needs an obstacle; European claims have none".into(),
            ));
        }
    };
    Ok((surface.value_at_start(model.spot().ln()), surface))
}

/// Hedge read off a pricing surface: portfolio fraction `pi = Z/Y` (NaN
/// marker where `|Y|` is below the cutoff) and consumption increments `dA`.
#[derive(Debug, Clone)]
pub struct Hedge {
    pub pi: Field,
    pub consumption: Field,
    /// Cutoff actually used: `1e-8 * (1 + strike)`.
    pub eps_used: f64,
    /// Number of nodes where the fraction was undefined.
    pub undefined_nodes: usize,
}

/// Extracts the hedge from a pricing surface. The fraction is undefined
/// where the value is (numerically) zero — those nodes are marked NaN and
/// counted, never extrapolated.
#[must_use]
pub fn extract_hedge(surface: &Surface, claim: &ClaimSpec) -> Hedge {
    let eps = HEDGE_EPS_SCALE * (1.0 + claim.strike().abs());
    let rows = surface.y.rows();
    let cols = surface.y.cols();
    let mut pi = Field::new(rows, cols, f64::NAN);
    let mut undefined = 0usize;
    for i in 0..rows {
        for j in 0..cols {
            let y = surface.y.at(i, j);
            if y.abs() > eps {
                pi.set(i, j, surface.z.at(i, j) / y);
            } else {
                undefined += 1;
            }
        }
    }
    Hedge {
        pi,
        consumption: surface.da.clone(),
        eps_used: eps,
        undefined_nodes: undefined,
    }
}

/// Classical recombining binomial American price at a single volatility,
/// risk-neutral, discounting at the model rate. The model's band is ignored.
///
/// # Errors
///
/// Needs `sigma > 0`, `steps >= 1`, and a resulting risk-neutral probability
/// inside (0, 1) (increase the step count otherwise).
pub fn crr_american_oracle(
    sigma: f64,
    model: &MarketModel,
    claim: &ClaimSpec,
    steps: usize,
) -> Result<f64> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "binomial oracle needs sigma > 0, got {sigma}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidInput("binomial oracle needs at least 1 step".into()));
    }
    let dt = model.maturity() / steps as f64;
    let up = (sigma * dt.sqrt()).exp();
    let down = 1.0 / up;
    let growth = (model.rate() * dt).exp();
    let p = (growth - down) / (up - down);
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!(
            "risk-neutral probability {p} outside (0,1); increase the step count"
        )));
    }
    let disc = (-model.rate() * dt).exp();
    let spot_at = |i: usize, j: usize| model.spot() * up.powi(2 * j as i32 - i as i32);
    let mut values: Vec<f64> = (0..=steps)
        .map(|j| claim.payoff(spot_at(steps, j)))
        .collect();
    for i in (0..steps).rev() {
        for j in 0..=i {
            let cont = disc * (p * values[j + 1] + (1.0 - p) * values[j]);
            values[j] = cont.max(claim.payoff(spot_at(i, j)));
        }
    }
    Ok(values[0])
}

/// Black–Scholes European price at a single volatility (put or call only).
///
/// # Errors
///
/// Custom payoffs are unsupported; `sigma` must be finite and nonnegative
/// (at `sigma sqrt(T) = 0` the discounted-intrinsic limit is returned).
pub fn bs_closed_form(sigma: f64, model: &MarketModel, claim: &ClaimSpec) -> Result<f64> {
    if claim.is_custom() {
        return Err(Error::Unsupported(
            "closed form covers puts and calls only; price custom payoffs numerically".into(),
        ));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidInput(format!(
            "volatility must be finite and nonnegative, got {sigma}"
        )));
    }
    let s0 = model.spot();
    let k = claim.strike();
    let df = (-model.rate() * model.maturity()).exp();
    let is_call = matches!(claim.kind, PayoffKind::Call);
    let vol = sigma * model.maturity().sqrt();
    if k == 0.0 {
        return Ok(if is_call { s0 } else { 0.0 });
    }
    if vol < 1e-12 {
        let fwd_gap = s0 - k * df;
        return Ok(if is_call {
            fwd_gap.max(0.0)
        } else {
            (-fwd_gap).max(0.0)
        });
    }
    let d1 = ((s0 / k).ln() + (model.rate() + 0.5 * sigma * sigma) * model.maturity()) / vol;
    let d2 = d1 - vol;
    let normal = Normal::new(0.0, 1.0).expect("unit normal is well formed");
    Ok(if is_call {
        s0 * normal.cdf(d1) - k * df * normal.cdf(d2)
    } else {
        k * df * normal.cdf(-d2) - s0 * normal.cdf(-d1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band() -> VolatilityBand {
        VolatilityBand::new(0.1, 0.3).unwrap()
    }

    fn model() -> MarketModel {
        MarketModel::new(0.05, 100.0, band(), 1.0).unwrap()
    }

    #[test]
    fn model_and_claim_validation() {
        assert!(MarketModel::new(-0.01, 100.0, band(), 1.0).is_err());
        assert!(MarketModel::new(0.05, 0.0, band(), 1.0).is_err());
        assert!(MarketModel::new(0.05, 100.0, band(), 0.0).is_err());
        assert!(ClaimSpec::put(-1.0).is_err());
        assert!(ClaimSpec::put(f64::NAN).is_err());
    }

    #[test]
    fn payoff_shapes() {
        let put = ClaimSpec::put(100.0).unwrap();
        let call = ClaimSpec::call(100.0).unwrap();
        let bond = ClaimSpec::custom(0.0, |_| 1.0).unwrap();
        assert_eq!(put.payoff(80.0), 20.0);
        assert_eq!(put.payoff(120.0), 0.0);
        assert_eq!(call.payoff(80.0), 0.0);
        assert_eq!(call.payoff(120.0), 20.0);
        assert_eq!(bond.payoff(55.0), 1.0);
    }

    #[test]
    fn closed_form_call_value_and_parity() {
        let flat = MarketModel::new(0.0, 100.0, band(), 1.0).unwrap();
        let call = bs_closed_form(0.2, &flat, &ClaimSpec::call(100.0).unwrap()).unwrap();
        assert!(
            (call - 7.9655674554058).abs() < 1e-9,
            "r=0 at-the-money call at sigma 0.2, got {call}"
        );
        let m = MarketModel::new(0.03, 100.0, band(), 2.0).unwrap();
        let c = bs_closed_form(0.25, &m, &ClaimSpec::call(90.0).unwrap()).unwrap();
        let p = bs_closed_form(0.25, &m, &ClaimSpec::put(90.0).unwrap()).unwrap();
        let parity = c - p - (100.0 - 90.0 * (-0.03f64 * 2.0).exp());
        assert!(parity.abs() < 1e-12, "put-call parity violated by {parity}");
    }

    #[test]
    fn closed_form_limits() {
        let m = MarketModel::new(0.0, 100.0, band(), 1.0).unwrap();
        assert_eq!(bs_closed_form(0.0, &m, &ClaimSpec::call(80.0).unwrap()).unwrap(), 20.0);
        assert_eq!(bs_closed_form(0.0, &m, &ClaimSpec::put(120.0).unwrap()).unwrap(), 20.0);
        assert_eq!(bs_closed_form(0.2, &m, &ClaimSpec::call(0.0).unwrap()).unwrap(), 100.0);
        assert!(bs_closed_form(0.2, &m, &ClaimSpec::custom(1.0, |s| s).unwrap()).is_err());
    }

    #[test]
    fn binomial_oracle_matches_the_closed_form_when_exercise_is_worthless() {
        let m = MarketModel::new(0.0, 100.0, band(), 1.0).unwrap();
        let claim = ClaimSpec::call(100.0).unwrap();
        let crr = crr_american_oracle(0.2, &m, &claim, 1000).unwrap();
        let bs = bs_closed_form(0.2, &m, &claim).unwrap();
        assert!(
            (crr - bs).abs() / bs < 1e-3,
            "no early exercise for the r=0 call: binomial {crr} vs closed form {bs}"
        );
    }

    #[test]
    fn binomial_oracle_limits() {
        let short = MarketModel::new(0.05, 90.0, band(), 1e-9).unwrap();
        let put = ClaimSpec::put(100.0).unwrap();
        let v = crr_american_oracle(0.2, &short, &put, 10).unwrap();
        assert!((v - 10.0).abs() < 1e-6, "tiny maturity collapses to intrinsic, got {v}");
        let sane = crr_american_oracle(0.2, &model(), &put, 500).unwrap();
        assert!(sane > 5.8 && sane < 6.4, "at-the-money put with 5% carry: {sane}");
        assert!(crr_american_oracle(0.0, &model(), &put, 10).is_err());
        assert!(crr_american_oracle(0.2, &model(), &put, 0).is_err());
    }

    #[test]
    fn auto_grid_puts_the_spot_on_a_node_and_respects_the_budget() {
        let (tg, sg) = build_grids(&model(), 100, None).unwrap();
        assert_eq!(tg.steps(), 100);
        assert_eq!(sg.intervals() % 2, 0);
        let x0 = 100.0f64.ln();
        let mid = sg.nearest_node(x0);
        assert!((sg.node(mid) - x0).abs() < 1e-12);
        let sh = band().sigma_high();
        let drift = 0.05 + 0.5 * sh * sh;
        let usage = sh * sh * tg.dt() / (sg.dx() * sg.dx()) + drift * tg.dt() / sg.dx();
        assert!(usage <= CFL_TARGET + 1e-9, "budget usage {usage}");
        // Enough headroom for one parabolic refinement (4x steps, 2x intervals).
        assert!(2.0 * usage <= 1.0);
    }

    #[test]
    fn american_put_dominates_the_european_and_its_own_intrinsic() {
        let m = model();
        let claim = ClaimSpec::put(100.0).unwrap();
        let result =
            price_american(&m, &claim, 60, None, PricingMethod::Lattice).unwrap();
        let (euro, _) = price_european(&m, &claim, 60, None, PricingMethod::Lattice).unwrap();
        assert!(result.h_up >= euro - 1e-12, "american {} vs european {euro}", result.h_up);
        assert!(result.h_up >= claim.payoff(m.spot()), "price under intrinsic");
        assert!(result.h_up > 0.0);
    }

    #[test]
    fn pricing_routes_agree_where_their_algebra_coincides() {
        let m = model();
        let claim = ClaimSpec::put(100.0).unwrap();
        let lat = price_american(&m, &claim, 40, None, PricingMethod::Lattice).unwrap();
        let stp = price_american(&m, &claim, 40, None, PricingMethod::Stopping).unwrap();
        assert_eq!(lat.h_up, stp.h_up, "stopping recursion is the projected rollback");
        let pde_r = price_american(&m, &claim, 40, None, PricingMethod::Pde).unwrap();
        assert!(
            (lat.h_up - pde_r.h_up).abs() < 5e-3 * (1.0 + lat.h_up),
            "routes differ: lattice {} vs pde {}",
            lat.h_up,
            pde_r.h_up
        );
    }

    #[test]
    fn widening_the_band_never_cheapens_the_claim() {
        let narrow = MarketModel::new(0.05, 100.0, VolatilityBand::new(0.15, 0.25).unwrap(), 1.0)
            .unwrap();
        let wide = MarketModel::new(0.05, 100.0, VolatilityBand::new(0.1, 0.3).unwrap(), 1.0)
            .unwrap();
        let claim = ClaimSpec::put(100.0).unwrap();
        // Same explicit grid so the surfaces are comparable nodewise.
        let (_, sg) = build_grids(&wide, 50, None).unwrap();
        let a = price_american(&narrow, &claim, 50, Some(sg.intervals()), PricingMethod::Lattice)
            .unwrap();
        let b = price_american(&wide, &claim, 50, Some(sg.intervals()), PricingMethod::Lattice)
            .unwrap();
        assert!(b.h_up >= a.h_up - 1e-12, "wide {} vs narrow {}", b.h_up, a.h_up);
    }

    #[test]
    fn worthless_put_prices_to_zero() {
        let claim = ClaimSpec::put(0.0).unwrap();
        let result = price_american(&model(), &claim, 30, None, PricingMethod::Lattice).unwrap();
        assert_eq!(result.h_up, 0.0);
    }

    #[test]
    fn hedge_of_a_constant_claim_is_flat_and_defined() {
        let m = MarketModel::new(0.0, 100.0, band(), 1.0).unwrap();
        let claim = ClaimSpec::custom(0.0, |_| 5.0).unwrap();
        let (value, surface) = price_european(&m, &claim, 20, None, PricingMethod::Lattice).unwrap();
        assert!((value - 5.0).abs() < 1e-12);
        let hedge = extract_hedge(&surface, &claim);
        assert_eq!(hedge.undefined_nodes, 0);
        assert!(hedge.pi.iter().all(|v| v.abs() < 1e-12));
        assert!(hedge.consumption.iter().all(|v| v == 0.0));
    }

    #[test]
    fn hedge_of_a_zero_value_surface_is_marked_undefined() {
        let m = MarketModel::new(0.0, 100.0, band(), 1.0).unwrap();
        let claim = ClaimSpec::custom(0.0, |_| 0.0).unwrap();
        let (_, surface) = price_european(&m, &claim, 10, None, PricingMethod::Lattice).unwrap();
        let hedge = extract_hedge(&surface, &claim);
        assert_eq!(
            hedge.undefined_nodes,
            surface.y.rows() * surface.y.cols(),
            "fraction of a zero value is everywhere undefined"
        );
        assert!(hedge.pi.iter().all(|v| v.is_nan()));
    }

    #[test]
    fn raw_and_discounted_formulations_price_alike() {
        let m = model();
        let claim = ClaimSpec::put(100.0).unwrap();
        let (tg, sg) = build_grids(&m, 80, None).unwrap();
        let x0 = m.spot().ln();
        let disc = lattice::rollback(&american_problem(&m, &claim), &tg, &sg, Mode::Projected)
            .unwrap()
            .value_at_start(x0);
        let raw = lattice::rollback(&american_problem_raw(&m, &claim), &tg, &sg, Mode::Projected)
            .unwrap()
            .value_at_start(x0);
        assert!(
            (disc - raw).abs() < 2e-2 * (1.0 + disc.abs()),
            "discounted {disc} vs raw {raw}"
        );
    }
}
