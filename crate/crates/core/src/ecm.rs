//! Ground-truth cell: Coulomb-counted SOC, one RC pair, and terminal voltage.
//!
//! Discharge current is positive. `Q` is in amp-hours, so one amp for one
//! second moves SOC by `η / (3600·Q)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::interp::{lerp_clamped, strictly_increasing};
use crate::ocv::OcvCurve;
use crate::table_io;

const CSV_HEADER: [&str; 4] = ["soc", "r0", "r1", "c1"];
const DEFAULT_NMC: &str = include_str!("../data/nmc_ecm.csv");

/// Capacity of the bundled cell, amp-hours.
pub const DEFAULT_CAPACITY_AH: f64 = 4.85;
pub const DEFAULT_EFFICIENCY: f64 = 1.0;

/// Slack allowed on the [0, 1] SOC rails before a step counts as saturated;
/// absorbs rounding from summing many small increments.
const SOC_RAIL_SLACK: f64 = 1e-9;

/// Series resistance and RC pair at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcParams {
    /// Series resistance, ohms.
    pub r0: f64,
    /// RC-pair resistance, ohms.
    pub r1: f64,
    /// RC-pair capacitance, farads.
    pub c1: f64,
}

impl RcParams {
    /// Time constant `R1·C1` in seconds.
    pub fn tau(&self) -> f64 {
        self.r1 * self.c1
    }
}

/// SOC-indexed ECM parameter tables plus capacity and coulombic efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct EcmParams {
    q_capacity_ah: f64,
    eta: f64,
    soc_breakpoints: Vec<f64>,
    r0_table: Vec<f64>,
    r1_table: Vec<f64>,
    c1_table: Vec<f64>,
}

impl EcmParams {
    pub fn new(
        q_capacity_ah: f64,
        eta: f64,
        soc_breakpoints: Vec<f64>,
        r0_table: Vec<f64>,
        r1_table: Vec<f64>,
        c1_table: Vec<f64>,
    ) -> Result<Self> {
        if !(q_capacity_ah > 0.0 && q_capacity_ah.is_finite()) {
            return Err(Error::validation("capacity", format!("{q_capacity_ah} Ah must be > 0")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::validation("coulombic efficiency", format!("{eta} not in (0, 1]")));
        }
        let n = soc_breakpoints.len();
        if n == 0 {
            return Err(Error::validation("ECM tables", "no breakpoints"));
        }
        if [&r0_table, &r1_table, &c1_table].iter().any(|t| t.len() != n) {
            return Err(Error::validation("ECM tables", "table lengths differ from breakpoints"));
        }
        if !strictly_increasing(&soc_breakpoints) {
            return Err(Error::validation("ECM tables", "SOC breakpoints not strictly increasing"));
        }
        let positive = |t: &[f64]| t.iter().all(|v| *v > 0.0 && v.is_finite());
        if !positive(&r0_table) || !positive(&r1_table) {
            return Err(Error::validation("ECM tables", "resistances must be > 0"));
        }
        if !positive(&c1_table) {
            return Err(Error::validation("ECM tables", "capacitances must be > 0"));
        }
        Ok(EcmParams {
            q_capacity_ah,
            eta,
            soc_breakpoints,
            r0_table,
            r1_table,
            c1_table,
        })
    }

    /// Single-row table: the same parameters at every SOC.
    pub fn constant(q_capacity_ah: f64, eta: f64, soc: f64, rc: RcParams) -> Result<Self> {
        Self::new(q_capacity_ah, eta, vec![soc], vec![rc.r0], vec![rc.r1], vec![rc.c1])
    }

    /// Bundled NMC-like tables with `Q = 4.85 Ah`, `η = 1`.
    pub fn default_nmc() -> Self {
        let path = table_io::embedded("nmc_ecm.csv");
        let rows = table_io::read(DEFAULT_NMC.as_bytes(), &path, &CSV_HEADER)
            .expect("bundled ECM table parses");
        Self::from_rows(&rows, DEFAULT_CAPACITY_AH, DEFAULT_EFFICIENCY)
            .expect("bundled ECM table is valid")
    }

    /// Reads a `soc,r0,r1,c1` CSV. Capacity and efficiency are not part of
    /// the file.
    pub fn load_csv(path: impl AsRef<Path>, q_capacity_ah: f64, eta: f64) -> Result<Self> {
        let path = path.as_ref();
        let rows = table_io::read_path(path, &CSV_HEADER)?;
        Self::from_rows(&rows, q_capacity_ah, eta)
            .map_err(|e| e.context(format!("{}", path.display())))
    }

    fn from_rows(rows: &[table_io::Row], q: f64, eta: f64) -> Result<Self> {
        let mut cols = table_io::columns(rows, 4).into_iter();
        let mut next = || cols.next().unwrap_or_default();
        let (soc, r0, r1, c1) = (next(), next(), next(), next());
        Self::new(q, eta, soc, r0, r1, c1)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write_to(table_io::create(path)?, path)
    }

    /// Writes the `soc,r0,r1,c1` table to any sink.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        self.write_to(out, Path::new("<output>"))
    }

    fn write_to<W: std::io::Write>(&self, out: W, path: &Path) -> Result<()> {
        table_io::write_columns(
            out,
            &CSV_HEADER,
            &[
                &self.soc_breakpoints,
                &self.r0_table,
                &self.r1_table,
                &self.c1_table,
            ],
            path,
        )
    }

    /// Same tables with a different capacity/efficiency.
    pub fn with_capacity(&self, q_capacity_ah: f64, eta: f64) -> Result<Self> {
        Self::new(
            q_capacity_ah,
            eta,
            self.soc_breakpoints.clone(),
            self.r0_table.clone(),
            self.r1_table.clone(),
            self.c1_table.clone(),
        )
    }

    pub fn q_capacity_ah(&self) -> f64 {
        self.q_capacity_ah
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn soc_breakpoints(&self) -> &[f64] {
        &self.soc_breakpoints
    }

    pub fn r0_table(&self) -> &[f64] {
        &self.r0_table
    }

    pub fn r1_table(&self) -> &[f64] {
        &self.r1_table
    }

    pub fn c1_table(&self) -> &[f64] {
        &self.c1_table
    }

    /// Parameters interpolated at `soc`; end rows are held outside the table.
    pub fn rc_at(&self, soc: f64) -> RcParams {
        let s = &self.soc_breakpoints;
        RcParams {
            r0: lerp_clamped(s, &self.r0_table, soc),
            r1: lerp_clamped(s, &self.r1_table, soc),
            c1: lerp_clamped(s, &self.c1_table, soc),
        }
    }

    /// SOC change per amp-second, `η / (3600·Q)`.
    pub fn soc_per_amp_second(&self) -> f64 {
        self.eta / (3600.0 * self.q_capacity_ah)
    }
}

/// Ground-truth cell state at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    pub soc: f64,
    /// Voltage across `C1`, volts.
    pub v_c1: f64,
    /// Seconds.
    pub time: f64,
}

impl CellState {
    /// A cell at equilibrium.
    pub fn rested(soc: f64) -> Self {
        CellState {
            soc,
            v_c1: 0.0,
            time: 0.0,
        }
    }

    /// Advances SOC, `V_C1` and time by one zero-order-hold step. Both
    /// updates use parameters looked up at the current SOC.
    pub fn advance(&mut self, params: &EcmParams, i: f64, dt: f64) -> Result<()> {
        let soc = step_true_soc(self, params, i, dt)?;
        let v_c1 = step_rc_voltage(self, params, i, dt)?;
        self.soc = soc;
        self.v_c1 = v_c1;
        self.time += dt;
        Ok(())
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("time step {dt} s must be > 0")))
    }
}

/// Coulomb counting: `SOC − η·dt·i / (3600·Q)`.
///
/// Leaving `[0, 1]` returns [`Error::Saturated`]; the caller should treat the
/// run as invalid.
pub fn step_true_soc(state: &CellState, params: &EcmParams, i: f64, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    let soc = state.soc - params.soc_per_amp_second() * dt * i;
    if !(-SOC_RAIL_SLACK..=1.0 + SOC_RAIL_SLACK).contains(&soc) {
        return Err(Error::Saturated { soc });
    }
    Ok(soc.clamp(0.0, 1.0))
}

/// Exact zero-order-hold update of the RC-pair voltage.
pub fn rc_relax(v_c1: f64, r1: f64, c1: f64, i: f64, dt: f64) -> f64 {
    let decay = (-dt / (r1 * c1)).exp();
    v_c1 * decay + r1 * (1.0 - decay) * i
}

/// `V_C1` after one step, with `R1`, `C1` taken at the state's SOC.
pub fn step_rc_voltage(state: &CellState, params: &EcmParams, i: f64, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    let rc = params.rc_at(state.soc);
    Ok(rc_relax(state.v_c1, rc.r1, rc.c1, i, dt))
}

/// `OCV(SOC) − V_C1 − R0·i`.
pub fn terminal_voltage(
    state: &CellState,
    params: &EcmParams,
    curve: &OcvCurve,
    i: f64,
) -> Result<f64> {
    let ocv = curve.ocv_of_soc(state.soc)?;
    Ok(ocv - state.v_c1 - params.rc_at(state.soc).r0 * i)
}
