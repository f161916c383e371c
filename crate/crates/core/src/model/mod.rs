//! Economic parameters, claim-arrival and claim-size laws, and the
//! derived densities of the renewal machinery.

mod claims;
mod renewal;
mod waiting;

pub use claims::ClaimLaw;
pub use renewal::{
    closed_form_integrability_bound, integrability_check, last_jump_density, no_jump_mass,
    renewal_density, IntegrabilityReport,
};
pub use waiting::WaitingLaw;

use crate::error::{Error, Result};

/// Economic constants of the reserve model.
///
/// `p` premium rate, `r` risk-free rate, `mu`/`sigma` stock drift and
/// volatility, `c` discount rate, `max_dividend` the cap on the dividend
/// rate, `horizon` the terminal time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    pub premium: f64,
    pub interest: f64,
    pub drift: f64,
    pub volatility: f64,
    pub discount: f64,
    pub max_dividend: f64,
    pub horizon: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let ModelParams { premium, interest, drift, volatility, discount, max_dividend, horizon } =
            *self;
        if !(premium > 0.0 && interest > 0.0 && volatility > 0.0 && discount > 0.0 && horizon > 0.0)
        {
            return Err(Error::Config(
                "premium, interest, volatility, discount and horizon must all be positive".into(),
            ));
        }
        if drift <= interest {
            return Err(Error::Config(format!(
                "stock drift ({drift}) must exceed the risk-free rate ({interest})"
            )));
        }
        if max_dividend < premium {
            return Err(Error::Config(format!(
                "max dividend rate ({max_dividend}) must be at least the premium rate ({premium})"
            )));
        }
        Ok(())
    }

    /// Hard upper bound on any discounted dividend total over `[s, horizon]`:
    /// paying the cap continuously from time `s`.
    pub fn dividend_ceiling(&self, s: f64) -> f64 {
        self.max_dividend * (1.0 - (-self.discount * (self.horizon - s)).exp()) / self.discount
    }
}

/// A point of the state space: calendar time `s`, surplus `x`, and elapsed
/// time `w` since the last claim.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct State {
    pub s: f64,
    pub x: f64,
    pub w: f64,
}

impl State {
    pub fn new(s: f64, x: f64, w: f64) -> Self {
        State { s, x, w }
    }

    /// Membership in the physical domain: `0 <= s <= T`, `x >= 0`,
    /// `0 <= w <= s`.
    pub fn in_physical_domain(&self, horizon: f64) -> bool {
        let eps = 1e-12;
        self.s >= -eps
            && self.s <= horizon + eps
            && self.x >= -eps
            && self.w >= -eps
            && self.w <= self.s + eps
    }

    /// Membership in the collar-extended domain with half-width `delta`.
    pub fn in_extended_domain(&self, horizon: f64, delta: f64) -> bool {
        let eps = 1e-12;
        self.s > 0.0 - eps
            && self.s <= horizon + delta + eps
            && self.x >= -delta - eps
            && self.w >= -delta - eps
            && self.w <= self.s + delta + eps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelParams {
        ModelParams {
            premium: 1.5,
            interest: 0.03,
            drift: 0.08,
            volatility: 0.3,
            discount: 0.05,
            max_dividend: 2.0,
            horizon: 1.0,
        }
    }

    #[test]
    fn reference_params_validate() {
        reference().validate().unwrap();
    }

    #[test]
    fn dividend_cap_below_premium_rejected() {
        let mut p = reference();
        p.max_dividend = 1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn drift_must_exceed_interest() {
        let mut p = reference();
        p.drift = 0.03;
        assert!(p.validate().is_err());
    }

    #[test]
    fn domain_membership() {
        let t = 1.0;
        assert!(State::new(0.0, 2.0, 0.0).in_physical_domain(t));
        assert!(!State::new(0.5, 2.0, 0.7).in_physical_domain(t));
        assert!(!State::new(0.5, -0.1, 0.2).in_physical_domain(t));
        assert!(State::new(0.5, -0.04, -0.05).in_extended_domain(t, 0.05));
        assert!(!State::new(0.5, -0.06, 0.0).in_extended_domain(t, 0.05));
    }
}
