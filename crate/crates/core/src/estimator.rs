//! Closed-loop SOC estimator with analytic uncertainty.
//!
//! While current flows the estimate is pure Coulomb counting on the measured
//! current and the squared uncertainty grows by the current-noise variance:
//!
//! ```text
//! ŜOC' = ŜOC − k·i_meas                     k = η·Δt / (3600·Q)
//! u'²  = u² + k²·(α + β·i_meas²)
//! ```
//!
//! At rest the estimate is pulled toward the voltage-inverted `S̃OC` with the
//! gain that minimizes the next-step variance:
//!
//! ```text
//! V    = Var[ε_V1] + Var[ε_V2]
//! δ    = u² / (u² + V)
//! ŜOC' = (1 − δ)·ŜOC − k·i_meas + δ·S̃OC
//! u'²  = (1 − δ)²·u² + k²·α + δ²·V
//! ```
//!
//! The reported interval is `center ± 2u`, centered on the estimate plus
//! the tracked bias.

use crate::ecm::{rc_relax, EcmParams};
use crate::error::{Error, Result};
use crate::ocv::OcvCurve;
use crate::sensors::{ErrorParams, RestClock, SocUnit, VoltageErrorModel};

/// How the bias is carried through rest periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasRestMode {
    /// Each gain-applying rest step multiplies the bias by `λ2·R1C1/t_R`.
    #[default]
    Literal,
    /// The bias is the mean of the error recursion: it shrinks by `(1 − δ)`
    /// and keeps accruing `k·μ` from the drift seen at zero current.
    ProportionalDecay,
}

impl BiasRestMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper-literal" => Some(Self::Literal),
            "proportional-decay" => Some(Self::ProportionalDecay),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Literal => "paper-literal",
            Self::ProportionalDecay => "proportional-decay",
        }
    }
}

/// Center of the confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiCenter {
    /// `ŜOC + bias`.
    #[default]
    AccumulatedBias,
    /// `ŜOC + μ`, with `μ` the constant drift taken as-is.
    ConstantMu,
}

impl CiCenter {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "accumulated-bias" => Some(Self::AccumulatedBias),
            "constant-mu" => Some(Self::ConstantMu),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::AccumulatedBias => "accumulated-bias",
            Self::ConstantMu => "constant-mu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Rest threshold on the measured current, amps, used when a
    /// measurement carries no explicit rest flag.
    pub deadband: f64,
    pub bias_rest_mode: BiasRestMode,
    pub ci_center: CiCenter,
    pub voltage_error_unit: SocUnit,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            deadband: 0.0,
            bias_rest_mode: BiasRestMode::default(),
            ci_center: CiCenter::default(),
            voltage_error_unit: SocUnit::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    pub soc_hat: f64,
    /// Squared uncertainty, SOC fraction².
    pub u_sq: f64,
    pub bias: f64,
    /// The estimator's own replica of `V_C1`, driven by measured current.
    pub v_c1_hat: f64,
    pub rest_clock: RestClock,
}

impl EstimatorState {
    /// Starts from a rested cell at a known SOC.
    pub fn new(soc_hat: f64, u0: f64) -> Self {
        EstimatorState {
            soc_hat,
            u_sq: u0 * u0,
            bias: 0.0,
            v_c1_hat: 0.0,
            rest_clock: RestClock::default(),
        }
    }

    pub fn u(&self) -> f64 {
        self.u_sq.sqrt()
    }
}

/// One sensor sample. `current` and `voltage` apply over `[time, time + dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub time: f64,
    pub current: f64,
    pub voltage: f64,
    pub dt: f64,
    /// Externally known rest flag; `None` applies the deadband to `current`.
    pub at_rest: Option<bool>,
}

/// Result of one estimator step (values after the step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Update {
    pub at_rest: bool,
    pub soc_tilde: Option<f64>,
    pub delta: f64,
    pub soc_hat: f64,
    pub u: f64,
    pub bias: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Diagnostics {
    pub steps: usize,
    /// Rest steps where `S̃OC` fell outside the curve and the gain was forced to 0.
    pub skipped_updates: usize,
    /// Steps where `ŜOC` was clamped onto `[0, 1]`.
    pub clamped: usize,
}

/// One row of a simulation trace.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepRecord {
    /// End of the step, seconds.
    pub time: f64,
    pub i_true: f64,
    pub i_measured: f64,
    pub v_measured: f64,
    pub soc_true: f64,
    pub soc_hat: f64,
    pub soc_tilde: Option<f64>,
    pub u: f64,
    pub delta: f64,
    pub bias: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// `S̃OC = OCV⁻¹(v + V_C1)`, only meaningful at rest.
pub fn soc_tilde(curve: &OcvCurve, v_measured: f64, v_c1_estimate: f64) -> Result<f64> {
    curve.soc_of_ocv(v_measured + v_c1_estimate)
}

/// Variance-minimizing gain `u² / (u² + V)`.
pub fn optimal_gain(u_sq: f64, voltage_variance: f64) -> f64 {
    let den = u_sq + voltage_variance;
    if den > 0.0 {
        u_sq / den
    } else {
        0.0
    }
}

/// [`optimal_gain`] with `V` built from the state's rest clock. Requires a
/// rest period with `t_R > 0`.
pub fn optimal_gain_at_rest(
    state: &EstimatorState,
    model: &VoltageErrorModel,
    slope: f64,
    r1c1: f64,
) -> Result<f64> {
    let t_r = state
        .rest_clock
        .elapsed()
        .filter(|t| *t > 0.0)
        .ok_or_else(|| Error::Precondition("gain requires elapsed rest t_R > 0".into()))?;
    Ok(optimal_gain(state.u_sq, model.total(slope, r1c1, t_r)?))
}

/// Next squared uncertainty for an arbitrary gain:
/// `(1 − δ)²·u² + current_term + δ²·V`.
pub fn propagate_uncertainty(u_sq: f64, delta: f64, current_term: f64, voltage_variance: f64) -> f64 {
    let keep = 1.0 - delta;
    keep * keep * u_sq + current_term + delta * delta * voltage_variance
}

/// Squared uncertainty that repeated rest steps converge to, for constant
/// `V` and per-step current term `c`: the positive root of
/// `u⁴ − c·u² − c·V = 0`.
pub fn rest_fixed_point(voltage_variance: f64, current_term: f64) -> f64 {
    let c = current_term;
    0.5 * (c + (c * c + 4.0 * c * voltage_variance).sqrt())
}

/// `center ± 2u`.
pub fn confidence_interval(center: f64, u_sq: f64) -> (f64, f64) {
    let half = 2.0 * u_sq.sqrt();
    (center - half, center + half)
}

/// Rest steps need at least one sample of elapsed rest before the voltage
/// update applies; half a step absorbs timestamp rounding.
fn gain_applies(t_r: f64, dt: f64) -> bool {
    t_r >= 0.5 * dt
}

#[derive(Debug, Clone)]
pub struct Estimator<'a> {
    params: &'a EcmParams,
    curve: &'a OcvCurve,
    errors: ErrorParams,
    voltage_model: VoltageErrorModel,
    config: EstimatorConfig,
    state: EstimatorState,
    diagnostics: Diagnostics,
}

impl<'a> Estimator<'a> {
    pub fn new(
        params: &'a EcmParams,
        curve: &'a OcvCurve,
        errors: ErrorParams,
        config: EstimatorConfig,
        initial: EstimatorState,
    ) -> Result<Self> {
        errors.validate()?;
        if !(config.deadband >= 0.0) {
            return Err(Error::validation("deadband", "must be >= 0"));
        }
        if !(initial.u_sq >= 0.0) {
            return Err(Error::validation("initial uncertainty", "must be >= 0"));
        }
        Ok(Estimator {
            params,
            curve,
            errors,
            voltage_model: VoltageErrorModel::new(errors, config.voltage_error_unit),
            config,
            state: initial,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    pub fn voltage_model(&self) -> &VoltageErrorModel {
        &self.voltage_model
    }

    pub fn confidence_interval(&self) -> (f64, f64) {
        confidence_interval(self.ci_center(), self.state.u_sq)
    }

    fn ci_center(&self) -> f64 {
        match self.config.ci_center {
            CiCenter::AccumulatedBias => self.state.soc_hat + self.state.bias,
            CiCenter::ConstantMu => self.state.soc_hat + self.errors.mu_drift,
        }
    }

    pub fn step(&mut self, m: &Measurement) -> Result<Update> {
        let step = self.diagnostics.steps;
        if !(m.dt > 0.0 && m.dt.is_finite()) {
            return Err(Error::Precondition(format!("time step {} s must be > 0", m.dt)));
        }
        if !m.current.is_finite() {
            return Err(Error::NonFinite { step, what: "measured current" });
        }
        let at_rest = m
            .at_rest
            .unwrap_or(m.current.abs() <= self.config.deadband);
        self.state.rest_clock.update_with(at_rest, m.time);

        let k = self.params.soc_per_amp_second() * m.dt;
        let rc = self.params.rc_at(self.state.soc_hat);
        let p = &self.errors;

        let mut delta = 0.0;
        let mut tilde = None;
        let mut voltage_variance = 0.0;
        let mut rest_t_r = None;
        let current_variance;
        if at_rest {
            current_variance = p.alpha;
            let t_r = self.state.rest_clock.elapsed().unwrap_or(0.0);
            if gain_applies(t_r, m.dt) {
                rest_t_r = Some(t_r);
                match soc_tilde(self.curve, m.voltage, self.state.v_c1_hat) {
                    Ok(s) => {
                        voltage_variance =
                            self.voltage_model
                                .total(self.curve.linear_slope(), rc.tau(), t_r)?;
                        delta = optimal_gain(self.state.u_sq, voltage_variance);
                        tilde = Some(s);
                    }
                    Err(Error::OutOfRange { .. }) => self.diagnostics.skipped_updates += 1,
                    Err(e) => return Err(e),
                }
            }
            self.state.v_c1_hat = rc_relax(self.state.v_c1_hat, rc.r1, rc.c1, 0.0, m.dt);
        } else {
            current_variance = p.current_error_variance(m.current);
            self.state.v_c1_hat = rc_relax(self.state.v_c1_hat, rc.r1, rc.c1, m.current, m.dt);
        }

        let s = &mut self.state;
        let mut soc_hat = (1.0 - delta) * s.soc_hat - k * m.current + delta * tilde.unwrap_or(0.0);
        if !soc_hat.is_finite() {
            return Err(Error::NonFinite { step, what: "SOC estimate" });
        }
        if !(0.0..=1.0).contains(&soc_hat) {
            soc_hat = soc_hat.clamp(0.0, 1.0);
            self.diagnostics.clamped += 1;
        }
        s.soc_hat = soc_hat;
        s.u_sq = propagate_uncertainty(s.u_sq, delta, k * k * current_variance, voltage_variance);
        let drift = k * p.mu_drift;
        s.bias = match (at_rest, self.config.bias_rest_mode) {
            (false, _) => s.bias + drift,
            (true, BiasRestMode::Literal) => match rest_t_r {
                Some(t_r) => s.bias * p.lambda2 * rc.tau() / t_r,
                None => s.bias,
            },
            (true, BiasRestMode::ProportionalDecay) => (1.0 - delta) * s.bias + drift,
        };
        if !s.u_sq.is_finite() {
            return Err(Error::NonFinite { step, what: "uncertainty" });
        }
        if !s.bias.is_finite() {
            return Err(Error::NonFinite { step, what: "bias" });
        }
        self.diagnostics.steps += 1;

        Ok(Update {
            at_rest,
            soc_tilde: tilde,
            delta,
            soc_hat: s.soc_hat,
            u: s.u(),
            bias: s.bias,
            ci: self.confidence_interval(),
        })
    }
}
