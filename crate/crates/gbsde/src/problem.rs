//! Markovian problem data: forward coefficients, driver, terminal value and
//! obstacle.
//!
//! The forward state follows
//!
//! ```text
//! dX = b(t,X) dt + l(t,X) d<B> + sigma_coef(t,X) dB
//! ```
//!
//! and the backward value carries the driver pair `f(t,x,y,z)` (dt-term) and
//! `g(t,x,y,z)` (d<B>-term), terminal value `phi(x)` and optional lower
//! obstacle `h(t,x)`. The declared Lipschitz constant bounds the joint
//! `(y,z)`-Lipschitz moduli of `f` and `g`; it gates the implicit driver
//! fixed point (`L*dt*(1+sigma_high^2) < 1`).

use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::band::VolatilityBand;
use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};

/// Coefficient of `(t, x)`.
pub type Coef = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Terminal value of `x`.
pub type Terminal = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Driver term of `(t, x, y, z)`.
pub type DriverFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

/// One reflected (or plain) backward problem in Markovian form.
#[derive(Clone)]
pub struct MarkovianProblem {
    label: String,
    band: VolatilityBand,
    drift: Coef,
    qv_drift: Coef,
    diffusion: Coef,
    terminal: Terminal,
    driver_f: DriverFn,
    driver_g: DriverFn,
    obstacle: Option<Coef>,
    lipschitz: f64,
}

impl std::fmt::Debug for MarkovianProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarkovianProblem")
            .field("label", &self.label)
            .field("band", &self.band)
            .field("obstacle", &self.obstacle.is_some())
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl MarkovianProblem {
    /// A problem with zero drifts, unit diffusion coefficient, zero driver,
    /// zero terminal value, no obstacle and Lipschitz constant 0; customize
    /// with the `with_*` builders.
    #[must_use]
    pub fn new(label: impl Into<String>, band: VolatilityBand) -> Self {
        Self {
            label: label.into(),
            band,
            drift: Arc::new(|_, _| 0.0),
            qv_drift: Arc::new(|_, _| 0.0),
            diffusion: Arc::new(|_, _| 1.0),
            terminal: Arc::new(|_| 0.0),
            driver_f: Arc::new(|_, _, _, _| 0.0),
            driver_g: Arc::new(|_, _, _, _| 0.0),
            obstacle: None,
            lipschitz: 0.0,
        }
    }

    /// dt-drift `b(t,x)` of the forward state.
    #[must_use]
    pub fn with_drift(mut self, b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(b);
        self
    }

    /// d<B>-drift `l(t,x)` of the forward state.
    #[must_use]
    pub fn with_qv_drift(mut self, l: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.qv_drift = Arc::new(l);
        self
    }

    /// Diffusion coefficient `sigma_coef(t,x)` multiplying the noise.
    #[must_use]
    pub fn with_diffusion(mut self, s: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.diffusion = Arc::new(s);
        self
    }

    /// Terminal value `phi(x)`.
    #[must_use]
    pub fn with_terminal(mut self, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Arc::new(phi);
        self
    }

    /// dt-driver `f(t,x,y,z)`; update the Lipschitz constant alongside.
    #[must_use]
    pub fn with_driver_f(
        mut self,
        f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.driver_f = Arc::new(f);
        self
    }

    /// d<B>-driver `g(t,x,y,z)`; update the Lipschitz constant alongside.
    #[must_use]
    pub fn with_driver_g(
        mut self,
        g: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.driver_g = Arc::new(g);
        self
    }

    /// Lower obstacle `h(t,x)`; must satisfy `h(T,x) <= phi(x)`.
    #[must_use]
    pub fn with_obstacle(mut self, h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.obstacle = Some(Arc::new(h));
        self
    }

    /// Joint `(y,z)`-Lipschitz bound for `f` and `g`.
    #[must_use]
    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = l;
        self
    }

    #[must_use]
    pub fn label(&self) -> &str {
        &self.label
    }

    #[must_use]
    pub fn band(&self) -> &VolatilityBand {
        &self.band
    }

    #[must_use]
    pub fn drift(&self, t: f64, x: f64) -> f64 {
        (self.drift)(t, x)
    }

    #[must_use]
    pub fn qv_drift(&self, t: f64, x: f64) -> f64 {
        (self.qv_drift)(t, x)
    }

    #[must_use]
    pub fn diffusion(&self, t: f64, x: f64) -> f64 {
        (self.diffusion)(t, x)
    }

    #[must_use]
    pub fn terminal(&self, x: f64) -> f64 {
        (self.terminal)(x)
    }

    #[must_use]
    pub fn f(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        (self.driver_f)(t, x, y, z)
    }

    #[must_use]
    pub fn g(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        (self.driver_g)(t, x, y, z)
    }

    #[must_use]
    pub fn has_obstacle(&self) -> bool {
        self.obstacle.is_some()
    }

    /// Obstacle value, or an error when the problem has none.
    pub fn obstacle(&self, t: f64, x: f64) -> Result<f64> {
        match &self.obstacle {
            Some(h) => Ok(h(t, x)),
            None => Err(Error::InvalidInput(format!(
                "problem '{}' has no obstacle but an obstacle-dependent operation was requested",
                self.label
            ))),
        }
    }

    #[must_use]
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Stable content hash of the problem description and grids, used to tag
    /// emitted surfaces. (FNV-1a over the label, band, Lipschitz constant and
    /// grid geometry; coefficient closures are identified by the label.)
    #[must_use]
    pub fn fingerprint(&self, tg: &TimeGrid, sg: &SpaceGrid) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.label.as_bytes());
        for v in [
            self.band.sigma_low(),
            self.band.sigma_high(),
            self.lipschitz,
            tg.t0(),
            tg.t_end(),
            tg.steps() as f64,
            sg.x_min(),
            sg.x_max(),
            sg.intervals() as f64,
            if self.obstacle.is_some() { 1.0 } else { 0.0 },
        ] {
            eat(&v.to_bits().to_le_bytes());
        }
        h
    }

    /// Validates the problem against grids before a solve:
    /// `h(T, x) <= phi(x)` at every node, the implicit driver fixed point is
    /// a contraction, and the declared Lipschitz constant is consistent with
    /// the driver on sampled argument pairs.
    pub fn validate(&self, tg: &TimeGrid, sg: &SpaceGrid) -> Result<()> {
        let factor = self.lipschitz * tg.dt() * (1.0 + self.band.sigma_high() * self.band.sigma_high());
        if factor >= 1.0 {
            return Err(Error::PicardNonContraction {
                lipschitz: self.lipschitz,
                dt: tg.dt(),
                sigma_high: self.band.sigma_high(),
                factor,
            });
        }
        if let Some(h) = &self.obstacle {
            let t_end = tg.t_end();
            for j in 0..sg.nodes() {
                let x = sg.node(j);
                let gap = h(t_end, x) - self.terminal(x);
                if gap > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "obstacle exceeds the terminal value at maturity: h(T,{x}) - phi({x}) = {gap} \
                         (problem '{}')",
                        self.label
                    )));
                }
            }
        }
        self.check_lipschitz_sampled(tg, sg)
    }

    /// Sampled consistency check of the declared Lipschitz constant: random
    /// `(t, x)` nodes and `(y,z)` pairs must satisfy
    /// `|f(..,y,z) - f(..,y',z')| + |g(..,y,z) - g(..,y',z')| <= L*(|y-y'| + |z-z'|)`,
    /// with a small relative slack for rounding.
    fn check_lipschitz_sampled(&self, tg: &TimeGrid, sg: &SpaceGrid) -> Result<()> {
        let mut rng = ChaCha12Rng::seed_from_u64(0x11ce_b00c);
        let mut unit = move || (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
        for _ in 0..64 {
            let t = tg.t0() + (tg.t_end() - tg.t0()) * unit();
            let x = sg.x_min() + (sg.x_max() - sg.x_min()) * unit();
            let y1 = 8.0 * unit() - 4.0;
            let z1 = 8.0 * unit() - 4.0;
            let y2 = 8.0 * unit() - 4.0;
            let z2 = 8.0 * unit() - 4.0;
            let df = (self.f(t, x, y1, z1) - self.f(t, x, y2, z2)).abs();
            let dg = (self.g(t, x, y1, z1) - self.g(t, x, y2, z2)).abs();
            let bound = self.lipschitz * ((y1 - y2).abs() + (z1 - z2).abs());
            if df + dg > bound + 1e-9 * (1.0 + bound) {
                return Err(Error::InvalidInput(format!(
                    "driver exceeds the declared Lipschitz constant L={} at t={t}, x={x}: \
                     |df|+|dg| = {} > {bound} (problem '{}')",
                    self.lipschitz,
                    df + dg,
                    self.label
                )));
            }
        }
        Ok(())
    }
}
