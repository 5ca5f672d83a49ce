//! Closed-loop simulation: the cell model supplies ground truth, noisy
//! sensors feed the estimator, and every step is recorded.

mod config;
mod monte_carlo;
mod sweep;

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use config::{Experiment, Model, RestDetection, RunConfig, VoltageChannel};
pub use monte_carlo::{run_monte_carlo, simulate_ensemble, CoverageReport, StepStats};
pub use sweep::{run_rest_sweep, SweepEntry, SweepReport};

use crate::ecm::{terminal_voltage, CellState, EcmParams};
use crate::ident::{self, Identifier, PulseSegment, SegmentFit};
use crate::error::{Error, Result};
use crate::estimator::{Diagnostics, Estimator, EstimatorState, Measurement, StepRecord};
use crate::profiles::CurrentProfile;
use crate::sensors::VoltageErrorModel;

pub const TRACE_HEADER: &str = "t,i_true,i_meas,v_meas,soc_true,soc_hat,soc_tilde,u,delta,bias,ci_lo,ci_hi";

/// Random stream for run `index` under `seed`.
pub fn run_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    /// Record `k` holds the state after step `k`, stamped with the end of
    /// that step, and the inputs applied during it.
    pub records: Vec<StepRecord>,
    pub config_hash: String,
    pub seed: u64,
    pub diagnostics: Diagnostics,
}

impl SimTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# config_hash = {}", self.config_hash)?;
        writeln!(out, "# seed = {}", self.seed)?;
        writeln!(out, "# skipped_updates = {}", self.diagnostics.skipped_updates)?;
        writeln!(out, "# clamped = {}", self.diagnostics.clamped)?;
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            let tilde = r.soc_tilde.map(|s| s.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.time,
                r.i_true,
                r.i_measured,
                r.v_measured,
                r.soc_true,
                r.soc_hat,
                tilde,
                r.u,
                r.delta,
                r.bias,
                r.ci_lo,
                r.ci_hi
            )?;
        }
        out.flush()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| io_error(path, source))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|source| io_error(path, source))
    }
}

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads the model and profile named by `cfg` and runs stream 0 of its seed.
pub fn run_single(cfg: &RunConfig) -> Result<SimTrace> {
    let model = cfg.load_model()?;
    let profile = cfg.profile()?;
    let (records, diagnostics) = simulate(cfg, &model, &profile, cfg.seed, 0)?;
    Ok(SimTrace {
        records,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        diagnostics,
    })
}

/// Runs truth and estimator in lockstep over `profile`.
pub fn simulate(
    cfg: &RunConfig,
    model: &Model,
    profile: &CurrentProfile,
    seed: u64,
    stream: u64,
) -> Result<(Vec<StepRecord>, Diagnostics)> {
    let mut records = Vec::with_capacity(profile.len());
    let diagnostics = simulate_with(cfg, model, profile, seed, stream, |r| records.push(*r))?;
    Ok((records, diagnostics))
}

/// [`simulate`] streaming each record to `sink` instead of collecting.
pub fn simulate_with(
    cfg: &RunConfig,
    model: &Model,
    profile: &CurrentProfile,
    seed: u64,
    stream: u64,
    mut sink: impl FnMut(&StepRecord),
) -> Result<Diagnostics> {
    let (curve, params) = (&model.curve, &model.params);
    let errors = cfg.errors;
    let mut rng = run_rng(seed, stream);
    let mut cell = CellState::rested(cfg.soc0);
    let mut est = Estimator::new(
        params,
        curve,
        errors,
        cfg.estimator_config(),
        EstimatorState::new(cfg.soc0, cfg.initial_u),
    )?;
    let vmodel = VoltageErrorModel::new(errors, cfg.voltage_error_unit);
    let slope = curve.linear_slope();
    let var_inversion = vmodel.inversion(slope)?;
    // voltmeter noise equivalent to the inversion error
    let volt_noise = gaussian(var_inversion.sqrt() / slope)?;
    let mut truth_rest = crate::sensors::RestClock::default();

    let dt = profile.dt();
    for (k, (&t, &i)) in profile.timestamps().iter().zip(profile.currents()).enumerate() {
        let at_step = |e: Error| e.context(format!("step {k} (t = {t} s)"));
        cell.time = t;
        let at_rest = i.abs() <= cfg.deadband;
        truth_rest.update_with(at_rest, t);
        let i_meas = i + errors.sample_current_error(i, &mut rng);
        let v_true = terminal_voltage(&cell, params, curve, i).map_err(at_step)?;
        let v_meas = match cfg.voltage_channel {
            VoltageChannel::InversionModel if at_rest => {
                let tau = params.rc_at(cell.soc).tau();
                let t_r = truth_rest.elapsed().unwrap_or(0.0);
                let mut err = gaussian(var_inversion.sqrt())?.sample(&mut rng);
                if t_r > 0.0 {
                    let var = vmodel.relaxation(tau, t_r).map_err(at_step)?;
                    err += gaussian(var.sqrt())?.sample(&mut rng);
                }
                curve.ocv_of_soc_extrapolated(cell.soc + err) - est.state().v_c1_hat
            }
            _ => v_true + volt_noise.sample(&mut rng),
        };
        let m = Measurement {
            time: t,
            current: i_meas,
            voltage: v_meas,
            dt,
            at_rest: match cfg.rest_detection {
                RestDetection::TrueCurrent => Some(at_rest),
                RestDetection::MeasuredDeadband => None,
            },
        };
        let up = est.step(&m).map_err(at_step)?;
        cell.advance(params, i, dt).map_err(at_step)?;
        sink(&StepRecord {
            time: t + dt,
            i_true: i,
            i_measured: i_meas,
            v_measured: v_meas,
            soc_true: cell.soc,
            soc_hat: up.soc_hat,
            soc_tilde: up.soc_tilde,
            u: up.u,
            delta: up.delta,
            bias: up.bias,
            ci_lo: up.ci.0,
            ci_hi: up.ci.1,
        });
    }
    Ok(est.diagnostics())
}

/// HPPC segments from `hppc_csv`, or synthesized from the configured cell
/// tables at `hppc_socs` with `hppc_noise_v` of white voltage noise.
pub fn hppc_segments(cfg: &RunConfig) -> Result<Vec<PulseSegment>> {
    if let Some(p) = &cfg.hppc_csv {
        return ident::load_hppc_csv(p);
    }
    let model = cfg.load_model()?;
    let noise = gaussian(cfg.hppc_noise_v)?;
    let mut rng = run_rng(cfg.seed, 0);
    cfg.hppc_socs
        .iter()
        .map(|&soc| {
            let mut seg = ident::synth_segment(&model.params, &model.curve, soc, &cfg.hppc_pulse)?;
            for v in &mut seg.voltages {
                *v += noise.sample(&mut rng);
            }
            Ok(seg)
        })
        .collect()
}

/// Identifies ECM tables from [`hppc_segments`] with the configured GA.
pub fn fit_params(cfg: &RunConfig) -> Result<(EcmParams, Vec<SegmentFit>)> {
    let segments = hppc_segments(cfg)?;
    let curve = cfg.load_model()?.curve;
    Identifier::new(&curve, cfg.q_capacity_ah, cfg.eta, cfg.ga)?.fit_tables(&segments)
}

fn gaussian(std: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std).map_err(|e| Error::validation("noise level", e.to_string()))
}
