//! Volatility band and the generating function G of the sublinear expectation.
//!
//! The uncertainty model is a band `[sigma_low, sigma_high]` of admissible
//! volatilities, `0 < sigma_low <= sigma_high`. The associated generating
//! function (one-dimensional case) is
//!
//! ```text
//! G(p) = (1/2) * (sigma_high^2 * p^+  -  sigma_low^2 * p^-)
//! ```
//!
//! i.e. the worst-case second-order coefficient `sup_{sigma in band} (1/2) sigma^2 p`.
//! G is sublinear and non-degenerate:
//! `G(p) - G(q) >= (1/2) sigma_low^2 (p - q)` whenever `p >= q`.

use crate::error::{Error, Result};

/// A volatility uncertainty band `[sigma_low, sigma_high]`.
///
/// Degenerate bands (`sigma_low == sigma_high`) are allowed and recover the
/// classical single-measure model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolatilityBand {
    sigma_low: f64,
    sigma_high: f64,
}

impl VolatilityBand {
    /// Builds a band, requiring `0 < sigma_low <= sigma_high` and both finite.
    pub fn new(sigma_low: f64, sigma_high: f64) -> Result<Self> {
        if !sigma_low.is_finite() || !sigma_high.is_finite() {
            return Err(Error::InvalidInput(format!(
                "volatility band must be finite, got [{sigma_low}, {sigma_high}]"
            )));
        }
        if sigma_low <= 0.0 || sigma_low > sigma_high {
            return Err(Error::InvalidInput(format!(
                "volatility band requires 0 < sigma_low <= sigma_high, got [{sigma_low}, {sigma_high}]"
            )));
        }
        Ok(Self {
            sigma_low,
            sigma_high,
        })
    }

    #[must_use]
    pub fn sigma_low(&self) -> f64 {
        self.sigma_low
    }

    #[must_use]
    pub fn sigma_high(&self) -> f64 {
        self.sigma_high
    }

    /// Whether the band collapses to a single volatility.
    #[must_use]
    pub fn is_degenerate(&self) -> bool {
        self.sigma_low == self.sigma_high
    }

    /// The two endpoint volatilities `[sigma_low, sigma_high]`.
    ///
    /// One-step worst-case expectations are affine in `sigma^2`, so suprema
    /// over the whole band are attained at an endpoint; enumerating these two
    /// values is exact.
    #[must_use]
    pub fn endpoints(&self) -> [f64; 2] {
        [self.sigma_low, self.sigma_high]
    }

    /// The generating function `G(p) = (1/2)(sigma_high^2 p^+ - sigma_low^2 p^-)`.
    #[must_use]
    pub fn g(&self, p: f64) -> f64 {
        if p >= 0.0 {
            0.5 * self.sigma_high * self.sigma_high * p
        } else {
            0.5 * self.sigma_low * self.sigma_low * p
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_matches_closed_form_on_band_02_04() {
        let band = VolatilityBand::new(0.2, 0.4).unwrap();
        assert!((band.g(1.0) - 0.08).abs() < 1e-15, "G(1) = sigma_high^2 / 2");
        assert!((band.g(-1.0) + 0.02).abs() < 1e-15, "G(-1) = -sigma_low^2 / 2");
        assert_eq!(band.g(0.0), 0.0, "G(0) = 0");
    }

    #[test]
    fn g_is_positively_homogeneous_and_subadditive() {
        let band = VolatilityBand::new(0.15, 0.35).unwrap();
        for &(p, q) in &[(0.7, -1.3), (-0.2, -0.9), (2.0, 3.0), (1.5, -1.5)] {
            assert!(
                band.g(p + q) <= band.g(p) + band.g(q) + 1e-15,
                "G must be subadditive at p={p}, q={q}"
            );
        }
        for &p in &[-2.0, -0.3, 0.0, 0.4, 1.7] {
            for &lambda in &[0.0, 0.5, 2.0] {
                let diff = (band.g(lambda * p) - lambda * band.g(p)).abs();
                assert!(diff < 1e-15, "G must be positively homogeneous at p={p}");
            }
        }
    }

    #[test]
    fn g_is_nondegenerate() {
        // G(p) - G(q) >= (1/2) sigma_low^2 (p - q) for p >= q.
        let band = VolatilityBand::new(0.1, 0.5).unwrap();
        let probe = [-2.0, -1.0, -0.1, 0.0, 0.3, 1.0, 2.5];
        for &p in &probe {
            for &q in &probe {
                if p >= q {
                    let lhs = band.g(p) - band.g(q);
                    let rhs = 0.5 * 0.1 * 0.1 * (p - q);
                    assert!(lhs >= rhs - 1e-15, "non-degeneracy failed at p={p}, q={q}");
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_bands() {
        assert!(VolatilityBand::new(0.0, 0.2).is_err(), "zero lower edge");
        assert!(VolatilityBand::new(-0.1, 0.2).is_err(), "negative lower edge");
        assert!(VolatilityBand::new(0.3, 0.2).is_err(), "inverted band");
        assert!(VolatilityBand::new(0.1, f64::NAN).is_err(), "NaN edge");
        assert!(VolatilityBand::new(0.2, 0.2).is_ok(), "degenerate band is legal");
    }
}
