//! Error sources: current-sensor drift and noise, voltage-inversion noise,
//! and the relaxation error that shrinks with time at rest.
//!
//! Every `N(m, v)` here takes a variance as its second parameter. The
//! variance functions are what the estimator propagates; the samplers are
//! what the simulator injects.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// The five constants of the error model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorParams {
    /// Current-sensor drift `μ`, amps.
    pub mu_drift: f64,
    /// Current-noise variance floor `α`.
    pub alpha: f64,
    /// Current-noise variance growth with `i²`, `β`.
    pub beta: f64,
    /// Voltage-inversion noise coefficient `λ1`.
    pub lambda1: f64,
    /// Relaxation noise coefficient `λ2`.
    pub lambda2: f64,
}

impl Default for ErrorParams {
    fn default() -> Self {
        ErrorParams {
            mu_drift: 0.03,
            alpha: 1e-7,
            beta: 1.4e-4,
            lambda1: 1e-6,
            lambda2: 6e-7,
        }
    }
}

impl ErrorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::validation("error parameters", reason));
        if !self.mu_drift.is_finite() {
            return bad("mu must be finite");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be >= 0");
        }
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return bad("lambda1 must be > 0");
        }
        if !(self.lambda2 > 0.0 && self.lambda2.is_finite()) {
            return bad("lambda2 must be > 0");
        }
        Ok(())
    }

    /// `α + β·i²`.
    pub fn current_error_variance(&self, i: f64) -> f64 {
        self.alpha + self.beta * i * i
    }

    /// One draw of `ε_i ~ N(μ, α + β·i²)`.
    pub fn sample_current_error<R: Rng + ?Sized>(&self, i: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mu_drift + self.current_error_variance(i).sqrt() * z
    }

    /// `λ1 · dSOC/dOCV`.
    pub fn voltage_inversion_variance(&self, slope_dsoc_docv: f64) -> Result<f64> {
        if !(slope_dsoc_docv > 0.0) {
            return Err(Error::Precondition(format!(
                "dSOC/dOCV slope {slope_dsoc_docv} must be > 0"
            )));
        }
        Ok(self.lambda1 * slope_dsoc_docv)
    }

    /// `λ2 · R1·C1 / t_R`; only defined once a rest period has begun (`t_R > 0`).
    pub fn relaxation_variance(&self, r1: f64, c1: f64, t_r: f64) -> Result<f64> {
        if !(t_r > 0.0) {
            return Err(Error::Precondition(format!(
                "elapsed rest time {t_r} s must be > 0"
            )));
        }
        Ok(self.lambda2 * r1 * c1 / t_r)
    }
}

/// Unit in which the voltage-error formulas express SOC.
///
/// `λ1·dSOC/dOCV` and `λ2·R1C1/t_R` carry whatever SOC unit the slope is
/// measured in. With [`SocUnit::Percent`] the slope is taken in %/V and the
/// resulting variance is in %², then converted to fraction² for the
/// estimator, which always works in fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SocUnit {
    Fraction,
    #[default]
    Percent,
}

impl SocUnit {
    /// Units per SOC fraction.
    pub fn scale(self) -> f64 {
        match self {
            SocUnit::Fraction => 1.0,
            SocUnit::Percent => 100.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SocUnit::Fraction => "fraction",
            SocUnit::Percent => "percent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fraction" => Some(SocUnit::Fraction),
            "percent" => Some(SocUnit::Percent),
            _ => None,
        }
    }
}

/// The two voltage-channel error variances in SOC fraction², with the unit
/// convention applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageErrorModel {
    pub params: ErrorParams,
    pub unit: SocUnit,
}

impl VoltageErrorModel {
    pub fn new(params: ErrorParams, unit: SocUnit) -> Self {
        VoltageErrorModel { params, unit }
    }

    /// `Var[ε_V1]` in fraction²; `slope` is `dSOC/dOCV` in fraction per volt.
    pub fn inversion(&self, slope: f64) -> Result<f64> {
        let s = self.unit.scale();
        Ok(self.params.voltage_inversion_variance(slope * s)? / (s * s))
    }

    /// `Var[ε_V2]` in fraction²; `tau` is `R1·C1` in seconds.
    pub fn relaxation(&self, tau: f64, t_r: f64) -> Result<f64> {
        let s = self.unit.scale();
        Ok(self.params.relaxation_variance(tau, 1.0, t_r)? / (s * s))
    }

    /// Combined voltage-update variance `V` entering the gain.
    pub fn total(&self, slope: f64, tau: f64, t_r: f64) -> Result<f64> {
        Ok(self.inversion(slope)? + self.relaxation(tau, t_r)?)
    }
}

/// Tracks the start of the current rest period and the time elapsed in it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RestClock {
    t_rest: Option<f64>,
    t_r: Option<f64>,
}

impl RestClock {
    /// Rest is `|i| <= deadband` (inclusive).
    pub fn update(&mut self, i: f64, t_now: f64, deadband: f64) {
        self.update_with(i.abs() <= deadband, t_now);
    }

    /// Same as [`update`](Self::update) with the rest decision made by the caller.
    pub fn update_with(&mut self, at_rest: bool, t_now: f64) {
        if !at_rest {
            *self = RestClock::default();
            return;
        }
        let start = *self.t_rest.get_or_insert(t_now);
        self.t_r = Some(t_now - start);
    }

    pub fn is_resting(&self) -> bool {
        self.t_rest.is_some()
    }

    /// Timestamp that began the current rest period.
    pub fn rest_start(&self) -> Option<f64> {
        self.t_rest
    }

    /// Elapsed rest `t_R`; `None` while current flows.
    pub fn elapsed(&self) -> Option<f64> {
        self.t_r
    }
}
