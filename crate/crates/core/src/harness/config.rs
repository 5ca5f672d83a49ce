//! Flat `key = value` run configuration.
//!
//! Every key has a default, so an empty file (or no file) is a valid
//! configuration. Lines starting with `#` and text after a `#` are ignored.
//! Relative paths are resolved against the working directory.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::ecm::EcmParams;
use crate::error::{Error, Result};
use crate::estimator::{BiasRestMode, CiCenter, EstimatorConfig};
use crate::ident::{GaConfig, HppcPulse};
use crate::ocv::OcvCurve;
use crate::profiles::{self, CurrentProfile, RegdSpec};
use crate::sensors::{ErrorParams, SocUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Constant discharge followed by rest.
    Rest,
    /// Concatenated frequency-regulation signals.
    Freq,
}

impl Experiment {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rest" => Some(Experiment::Rest),
            "freq" => Some(Experiment::Freq),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Rest => "rest",
            Experiment::Freq => "freq",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RestDetection {
    /// Rest whenever the commanded (true) current is within the deadband.
    #[default]
    TrueCurrent,
    /// Rest decided by the estimator from the measured current.
    MeasuredDeadband,
}

impl RestDetection {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "true-current" => Some(RestDetection::TrueCurrent),
            "measured-deadband" => Some(RestDetection::MeasuredDeadband),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RestDetection::TrueCurrent => "true-current",
            RestDetection::MeasuredDeadband => "measured-deadband",
        }
    }
}

/// How the simulated voltmeter reading is produced at rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoltageChannel {
    /// The reading is synthesized so that inverting it through the
    /// estimator's own relaxation replica yields the true SOC plus the
    /// modelled inversion and relaxation errors.
    #[default]
    InversionModel,
    /// True terminal voltage plus white voltmeter noise.
    Physical,
}

impl VoltageChannel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inversion-model" => Some(VoltageChannel::InversionModel),
            "physical" => Some(VoltageChannel::Physical),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VoltageChannel::InversionModel => "inversion-model",
            VoltageChannel::Physical => "physical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Replaces the generated profile (rest) or the single signal (freq).
    pub profile_csv: Option<PathBuf>,
    pub dt: f64,
    pub c_rate: f64,
    pub discharge_s: f64,
    pub rest_s: f64,
    pub c_rate_limit: f64,
    pub regd: RegdSpec,
    pub regd_copies: usize,
    pub regd_rest_s: f64,
    pub rest_sweep: Vec<f64>,
    pub soc0: f64,
    pub initial_u: f64,
    pub ocv_csv: Option<PathBuf>,
    pub ecm_csv: Option<PathBuf>,
    pub q_capacity_ah: f64,
    pub eta: f64,
    pub errors: ErrorParams,
    pub seed: u64,
    pub monte_carlo_n: usize,
    pub bias_rest_mode: BiasRestMode,
    pub ci_center: CiCenter,
    pub voltage_error_unit: SocUnit,
    pub rest_detection: RestDetection,
    pub deadband: f64,
    pub voltage_channel: VoltageChannel,
    pub hppc_csv: Option<PathBuf>,
    pub hppc_socs: Vec<f64>,
    pub hppc_pulse: HppcPulse,
    pub hppc_noise_v: f64,
    pub ga: GaConfig,
    /// Not part of the hash.
    pub out: Option<PathBuf>,
    /// Monte Carlo worker threads; 0 uses every core. Not part of the hash.
    pub workers: usize,
}

impl RunConfig {
    pub fn preset(experiment: Experiment) -> Self {
        let dt = 1.0;
        RunConfig {
            experiment,
            profile_csv: None,
            dt,
            c_rate: 1.0,
            discharge_s: 2500.0,
            rest_s: 500.0,
            c_rate_limit: 2.0,
            regd: RegdSpec::default(),
            regd_copies: 5,
            regd_rest_s: 0.0,
            rest_sweep: vec![0.0, 2.0, 5.0, 10.0, 30.0],
            soc0: match experiment {
                Experiment::Rest => 1.0,
                Experiment::Freq => 0.5,
            },
            initial_u: 0.0,
            ocv_csv: None,
            ecm_csv: None,
            q_capacity_ah: crate::ecm::DEFAULT_CAPACITY_AH,
            eta: crate::ecm::DEFAULT_EFFICIENCY,
            errors: ErrorParams::default(),
            seed: 1,
            monte_carlo_n: 1000,
            bias_rest_mode: BiasRestMode::default(),
            ci_center: CiCenter::default(),
            voltage_error_unit: SocUnit::default(),
            rest_detection: RestDetection::default(),
            deadband: 0.0,
            voltage_channel: VoltageChannel::default(),
            hppc_csv: None,
            hppc_socs: (2..=10).map(|k| k as f64 / 10.0).collect(),
            hppc_pulse: HppcPulse::default(),
            hppc_noise_v: 0.0,
            ga: GaConfig::default(),
            out: None,
            workers: 0,
        }
    }

    /// Parses config text. `experiment` (if given) overrides the file's
    /// `experiment` key and selects the preset the other keys modify.
    pub fn parse(text: &str, experiment: Option<Experiment>) -> Result<Self> {
        Self::parse_or(text, experiment, Experiment::Rest)
    }

    /// [`parse`](Self::parse) with `fallback` used when neither the override
    /// nor the text names an experiment.
    pub fn parse_or(text: &str, experiment: Option<Experiment>, fallback: Experiment) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::validation("config", format!("line {}: expected `key = value`", n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::validation(
                    "config",
                    format!("line {}: duplicate key `{key}`", n + 1),
                ));
            }
            entries.push((n + 1, key, value));
        }
        let from_file = entries
            .iter()
            .find(|(_, k, _)| *k == "experiment")
            .map(|(n, _, v)| {
                Experiment::parse(v).ok_or_else(|| {
                    Error::validation("config", format!("line {n}: unknown experiment `{v}`"))
                })
            })
            .transpose()?;
        let mut cfg = RunConfig::preset(experiment.or(from_file).unwrap_or(fallback));
        for (n, key, value) in entries {
            if key != "experiment" {
                cfg.set(key, value)
                    .map_err(|e| e.context(format!("config line {n}")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, experiment: Option<Experiment>) -> Result<Self> {
        Self::load_or(path, experiment, Experiment::Rest)
    }

    pub fn load_or(path: impl AsRef<Path>, experiment: Option<Experiment>, fallback: Experiment) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_or(&text, experiment, fallback).map_err(|e| e.context(path.display().to_string()))
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.errors;
        let g = &mut self.ga;
        match key {
            "experiment" => {
                self.experiment = parse_enum(key, value, Experiment::parse)?;
            }
            "profile_csv" => self.profile_csv = path(value),
            "dt" => {
                self.dt = num(key, value)?;
                self.regd.dt = self.dt;
                self.hppc_pulse.dt = self.dt;
            }
            "c_rate" => self.c_rate = num(key, value)?,
            "discharge_s" => self.discharge_s = num(key, value)?,
            "rest_s" => self.rest_s = num(key, value)?,
            "c_rate_limit" => self.c_rate_limit = num(key, value)?,
            "regd_duration_s" => self.regd.duration_s = num(key, value)?,
            "regd_step_s" => self.regd.step_s = num(key, value)?,
            "regd_max_c_rate" => self.regd.max_c_rate = num(key, value)?,
            "regd_zero_crossing_s" => self.regd.zero_crossing_s = num(key, value)?,
            "regd_seed" => self.regd.seed = num(key, value)?,
            "regd_correlation_s" => self.regd.correlation_s = num(key, value)?,
            "regd_copies" => self.regd_copies = num(key, value)?,
            "regd_rest_s" => self.regd_rest_s = num(key, value)?,
            "rest_sweep" => self.rest_sweep = list(key, value)?,
            "soc0" => self.soc0 = num(key, value)?,
            "initial_u" => self.initial_u = num(key, value)?,
            "ocv_csv" => self.ocv_csv = path(value),
            "ecm_csv" => self.ecm_csv = path(value),
            "q_ah" => {
                self.q_capacity_ah = num(key, value)?;
                self.regd.q_capacity_ah = self.q_capacity_ah;
            }
            "eta" => self.eta = num(key, value)?,
            "mu" => e.mu_drift = num(key, value)?,
            "alpha" => e.alpha = num(key, value)?,
            "beta" => e.beta = num(key, value)?,
            "lambda1" => e.lambda1 = num(key, value)?,
            "lambda2" => e.lambda2 = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "monte_carlo_n" => self.monte_carlo_n = num(key, value)?,
            "bias_rest_mode" => self.bias_rest_mode = parse_enum(key, value, BiasRestMode::parse)?,
            "ci_center_mode" => self.ci_center = parse_enum(key, value, CiCenter::parse)?,
            "voltage_error_unit" => self.voltage_error_unit = parse_enum(key, value, SocUnit::parse)?,
            "rest_detection" => self.rest_detection = parse_enum(key, value, RestDetection::parse)?,
            "deadband" => self.deadband = num(key, value)?,
            "voltage_channel" => self.voltage_channel = parse_enum(key, value, VoltageChannel::parse)?,
            "hppc_csv" => self.hppc_csv = path(value),
            "hppc_socs" => self.hppc_socs = list(key, value)?,
            "hppc_current" => self.hppc_pulse.current = num(key, value)?,
            "hppc_pulse_s" => self.hppc_pulse.pulse_s = num(key, value)?,
            "hppc_rest_s" => self.hppc_pulse.rest_s = num(key, value)?,
            "hppc_noise_v" => self.hppc_noise_v = num(key, value)?,
            "ga_population" => g.population = num(key, value)?,
            "ga_generations" => g.generations = num(key, value)?,
            "ga_crossover_rate" => g.crossover_rate = num(key, value)?,
            "ga_mutation_rate" => g.mutation_rate = num(key, value)?,
            "ga_mutation_scale" => g.mutation_scale = num(key, value)?,
            "ga_mutation_decay" => g.mutation_decay = num(key, value)?,
            "ga_tournament" => g.tournament_size = num(key, value)?,
            "ga_elitism" => g.elitism = num(key, value)?,
            "ga_seed" => g.seed = num(key, value)?,
            "ga_r0_lo" => g.bounds.lo.r0 = num(key, value)?,
            "ga_r0_hi" => g.bounds.hi.r0 = num(key, value)?,
            "ga_r1_lo" => g.bounds.lo.r1 = num(key, value)?,
            "ga_r1_hi" => g.bounds.hi.r1 = num(key, value)?,
            "ga_c1_lo" => g.bounds.lo.c1 = num(key, value)?,
            "ga_c1_hi" => g.bounds.hi.c1 = num(key, value)?,
            "out" => self.out = path(value),
            "workers" => self.workers = num(key, value)?,
            _ => return Err(Error::validation("config", format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every hashed key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let l = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let (e, g, b) = (&self.errors, &self.ga, &self.ga.bounds);
        vec![
            ("experiment", self.experiment.name().into()),
            ("profile_csv", p(&self.profile_csv)),
            ("dt", self.dt.to_string()),
            ("c_rate", self.c_rate.to_string()),
            ("discharge_s", self.discharge_s.to_string()),
            ("rest_s", self.rest_s.to_string()),
            ("c_rate_limit", self.c_rate_limit.to_string()),
            ("regd_duration_s", self.regd.duration_s.to_string()),
            ("regd_step_s", self.regd.step_s.to_string()),
            ("regd_max_c_rate", self.regd.max_c_rate.to_string()),
            ("regd_zero_crossing_s", self.regd.zero_crossing_s.to_string()),
            ("regd_seed", self.regd.seed.to_string()),
            ("regd_correlation_s", self.regd.correlation_s.to_string()),
            ("regd_copies", self.regd_copies.to_string()),
            ("regd_rest_s", self.regd_rest_s.to_string()),
            ("rest_sweep", l(&self.rest_sweep)),
            ("soc0", self.soc0.to_string()),
            ("initial_u", self.initial_u.to_string()),
            ("ocv_csv", p(&self.ocv_csv)),
            ("ecm_csv", p(&self.ecm_csv)),
            ("q_ah", self.q_capacity_ah.to_string()),
            ("eta", self.eta.to_string()),
            ("mu", e.mu_drift.to_string()),
            ("alpha", e.alpha.to_string()),
            ("beta", e.beta.to_string()),
            ("lambda1", e.lambda1.to_string()),
            ("lambda2", e.lambda2.to_string()),
            ("seed", self.seed.to_string()),
            ("monte_carlo_n", self.monte_carlo_n.to_string()),
            ("bias_rest_mode", self.bias_rest_mode.name().into()),
            ("ci_center_mode", self.ci_center.name().into()),
            ("voltage_error_unit", self.voltage_error_unit.name().into()),
            ("rest_detection", self.rest_detection.name().into()),
            ("deadband", self.deadband.to_string()),
            ("voltage_channel", self.voltage_channel.name().into()),
            ("hppc_csv", p(&self.hppc_csv)),
            ("hppc_socs", l(&self.hppc_socs)),
            ("hppc_current", self.hppc_pulse.current.to_string()),
            ("hppc_pulse_s", self.hppc_pulse.pulse_s.to_string()),
            ("hppc_rest_s", self.hppc_pulse.rest_s.to_string()),
            ("hppc_noise_v", self.hppc_noise_v.to_string()),
            ("ga_population", g.population.to_string()),
            ("ga_generations", g.generations.to_string()),
            ("ga_crossover_rate", g.crossover_rate.to_string()),
            ("ga_mutation_rate", g.mutation_rate.to_string()),
            ("ga_mutation_scale", g.mutation_scale.to_string()),
            ("ga_mutation_decay", g.mutation_decay.to_string()),
            ("ga_tournament", g.tournament_size.to_string()),
            ("ga_elitism", g.elitism.to_string()),
            ("ga_seed", g.seed.to_string()),
            ("ga_r0_lo", b.lo.r0.to_string()),
            ("ga_r0_hi", b.hi.r0.to_string()),
            ("ga_r1_lo", b.lo.r1.to_string()),
            ("ga_r1_hi", b.hi.r1.to_string()),
            ("ga_c1_lo", b.lo.c1.to_string()),
            ("ga_c1_hi", b.hi.c1.to_string()),
        ]
    }

    /// Canonical `key = value` text; parsing it reproduces this config
    /// (apart from `out` and `workers`).
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// First 16 hex digits of SHA-256 over the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &'static str, reason: String| Err(Error::validation(what, reason));
        self.errors.validate()?;
        self.ga.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("{} must be > 0", self.dt));
        }
        if !(0.0..=1.0).contains(&self.soc0) {
            return bad("soc0", format!("{} outside [0, 1]", self.soc0));
        }
        if !(self.initial_u >= 0.0 && self.initial_u.is_finite()) {
            return bad("initial_u", "must be >= 0".into());
        }
        if !(self.deadband >= 0.0) {
            return bad("deadband", "must be >= 0".into());
        }
        if !(self.c_rate_limit >= 0.0) {
            return bad("c_rate_limit", "must be >= 0".into());
        }
        if !(self.hppc_noise_v >= 0.0) {
            return bad("hppc_noise_v", "must be >= 0".into());
        }
        if self.monte_carlo_n == 0 {
            return bad("monte_carlo_n", "must be >= 1".into());
        }
        if self.regd_copies == 0 {
            return bad("regd_copies", "must be >= 1".into());
        }
        if self.rest_sweep.is_empty() || self.rest_sweep.iter().any(|r| !(*r >= 0.0)) {
            return bad("rest_sweep", "needs at least one value, all >= 0".into());
        }
        for (what, file) in [
            ("profile_csv", &self.profile_csv),
            ("ocv_csv", &self.ocv_csv),
            ("ecm_csv", &self.ecm_csv),
            ("hppc_csv", &self.hppc_csv),
        ] {
            if let Some(f) = file {
                if !f.is_file() {
                    return bad(what, format!("{} does not exist", f.display()));
                }
            }
        }
        Ok(())
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            deadband: self.deadband,
            bias_rest_mode: self.bias_rest_mode,
            ci_center: self.ci_center,
            voltage_error_unit: self.voltage_error_unit,
        }
    }

    pub fn load_model(&self) -> Result<Model> {
        let curve = match &self.ocv_csv {
            Some(p) => OcvCurve::load_csv(p)?,
            None => OcvCurve::default_nmc(),
        };
        let params = match &self.ecm_csv {
            Some(p) => EcmParams::load_csv(p, self.q_capacity_ah, self.eta)?,
            None => EcmParams::default_nmc().with_capacity(self.q_capacity_ah, self.eta)?,
        };
        Ok(Model { curve, params })
    }

    /// One frequency-regulation signal: the CSV profile if given, else the
    /// synthetic generator.
    pub fn signal(&self) -> Result<CurrentProfile> {
        match &self.profile_csv {
            Some(p) => profiles::load_profile_csv(p),
            None => profiles::synth_regd(&self.regd),
        }
    }

    /// The full drive profile for the configured experiment.
    pub fn profile(&self) -> Result<CurrentProfile> {
        let profile = match self.experiment {
            Experiment::Rest => match &self.profile_csv {
                Some(p) => profiles::load_profile_csv(p)?,
                None => profiles::constant_discharge_rest(
                    self.c_rate,
                    self.discharge_s,
                    self.rest_s,
                    self.dt,
                    self.q_capacity_ah,
                )?,
            },
            Experiment::Freq => self.freq_profile(self.regd_rest_s)?,
        };
        profile.check_c_rate(self.c_rate_limit, self.q_capacity_ah)?;
        Ok(profile)
    }

    /// `regd_copies` signals separated by `rest_s` seconds of rest.
    pub fn freq_profile(&self, rest_s: f64) -> Result<CurrentProfile> {
        profiles::concatenate_with_rest(&self.signal()?, self.regd_copies, rest_s)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Experiment::Rest)
    }
}

/// Cell model shared by every run of a configuration.
#[derive(Debug, Clone)]
pub struct Model {
    pub curve: OcvCurve,
    pub params: EcmParams,
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::validation("config", format!("`{key}`: `{value}`: {e}")))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn parse_enum<T>(key: &str, value: &str, f: impl Fn(&str) -> Option<T>) -> Result<T> {
    f(value).ok_or_else(|| Error::validation("config", format!("`{key}`: unknown value `{value}`")))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}
