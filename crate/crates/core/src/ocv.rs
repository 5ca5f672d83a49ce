//! Open-circuit voltage as a function of state of charge.
//!
//! The curve is a monotone breakpoint table evaluated by piecewise-linear
//! interpolation in both directions. On construction it also fits a single
//! straight line `SOC ≈ slope · OCV + intercept` over the upper SOC range;
//! that constant `dSOC/dOCV` is what the voltage-inversion error model uses.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::interp::{lerp, strictly_increasing};
use crate::table_io;

/// SOC window over which the linearization is fitted and over which the
/// uncertainty model is considered valid.
pub const LINEAR_FIT_RANGE: (f64, f64) = (0.2, 1.0);

const CSV_HEADER: [&str; 2] = ["soc", "ocv"];
const DEFAULT_NMC: &str = include_str!("../data/nmc_ocv.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct OcvCurve {
    soc_grid: Vec<f64>,
    ocv_values: Vec<f64>,
    linear_slope_dsoc_docv: f64,
    linear_intercept: f64,
}

impl OcvCurve {
    /// Validates the table and fits the linearization.
    pub fn new(soc_grid: Vec<f64>, ocv_values: Vec<f64>) -> Result<Self> {
        if soc_grid.len() != ocv_values.len() {
            return Err(Error::validation(
                "OCV curve",
                format!(
                    "{} SOC breakpoints but {} voltages",
                    soc_grid.len(),
                    ocv_values.len()
                ),
            ));
        }
        if soc_grid.len() < 2 {
            return Err(Error::validation("OCV curve", "need at least two breakpoints"));
        }
        if soc_grid.iter().chain(&ocv_values).any(|v| !v.is_finite()) {
            return Err(Error::validation("OCV curve", "non-finite entry"));
        }
        if !strictly_increasing(&soc_grid) {
            return Err(Error::validation("OCV curve", "SOC grid is not strictly increasing"));
        }
        if !strictly_increasing(&ocv_values) {
            return Err(Error::validation(
                "OCV curve",
                "OCV values are not strictly increasing; the curve cannot be inverted",
            ));
        }
        let (lo, hi) = LINEAR_FIT_RANGE;
        if soc_grid[0] > lo || soc_grid[soc_grid.len() - 1] < hi {
            return Err(Error::validation(
                "OCV curve",
                format!("SOC grid must span at least [{lo}, {hi}]"),
            ));
        }
        let (slope, intercept) = fit_linearization(&soc_grid, &ocv_values)?;
        if !(slope > 0.0) {
            return Err(Error::Fit(format!("non-positive slope {slope}")));
        }
        Ok(OcvCurve {
            soc_grid,
            ocv_values,
            linear_slope_dsoc_docv: slope,
            linear_intercept: intercept,
        })
    }

    /// The bundled 21-point NMC-like table (3.0 V empty, 4.2 V full).
    pub fn default_nmc() -> Self {
        Self::read_csv(DEFAULT_NMC.as_bytes(), &table_io::embedded("nmc_ocv.csv"))
            .expect("bundled OCV table is valid")
    }

    /// Reads a `soc,ocv` CSV.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = table_io::read_path(path, &CSV_HEADER)?;
        Self::from_rows(&rows).map_err(|e| e.context(format!("{}", path.display())))
    }

    fn read_csv<R: Read>(reader: R, path: &Path) -> Result<Self> {
        let rows = table_io::read(reader, path, &CSV_HEADER)?;
        Self::from_rows(&rows)
    }

    fn from_rows(rows: &[table_io::Row]) -> Result<Self> {
        let mut cols = table_io::columns(rows, 2);
        let ocv = cols.pop().unwrap_or_default();
        let soc = cols.pop().unwrap_or_default();
        Self::new(soc, ocv)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let out = table_io::create(path)?;
        table_io::write_columns(out, &CSV_HEADER, &[&self.soc_grid, &self.ocv_values], path)
    }

    pub fn soc_grid(&self) -> &[f64] {
        &self.soc_grid
    }

    pub fn ocv_values(&self) -> &[f64] {
        &self.ocv_values
    }

    pub fn soc_span(&self) -> (f64, f64) {
        (self.soc_grid[0], self.soc_grid[self.soc_grid.len() - 1])
    }

    pub fn ocv_span(&self) -> (f64, f64) {
        (self.ocv_values[0], self.ocv_values[self.ocv_values.len() - 1])
    }

    /// Constant `dSOC/dOCV` of the fitted line, in SOC fraction per volt.
    pub fn linear_slope(&self) -> f64 {
        self.linear_slope_dsoc_docv
    }

    pub fn linear_intercept(&self) -> f64 {
        self.linear_intercept
    }

    pub fn ocv_of_soc(&self, soc: f64) -> Result<f64> {
        let (lo, hi) = self.soc_span();
        if !(lo..=hi).contains(&soc) {
            return Err(Error::OutOfRange {
                what: "SOC",
                value: soc,
                lo,
                hi,
            });
        }
        Ok(lerp(&self.soc_grid, &self.ocv_values, soc))
    }

    pub fn soc_of_ocv(&self, ocv: f64) -> Result<f64> {
        let (lo, hi) = self.ocv_span();
        if !(lo..=hi).contains(&ocv) {
            return Err(Error::OutOfRange {
                what: "OCV",
                value: ocv,
                lo,
                hi,
            });
        }
        Ok(lerp(&self.ocv_values, &self.soc_grid, ocv))
    }

    /// Like [`ocv_of_soc`](Self::ocv_of_soc) but continues the end segments
    /// linearly past the table. Used to synthesize readings that are
    /// deliberately out of range.
    pub fn ocv_of_soc_extrapolated(&self, soc: f64) -> f64 {
        let n = self.soc_grid.len();
        let (lo, hi) = self.soc_span();
        let (j, anchor) = if soc < lo {
            (0, lo)
        } else if soc > hi {
            (n - 2, hi)
        } else {
            return lerp(&self.soc_grid, &self.ocv_values, soc);
        };
        let s = (self.ocv_values[j + 1] - self.ocv_values[j])
            / (self.soc_grid[j + 1] - self.soc_grid[j]);
        lerp(&self.soc_grid, &self.ocv_values, anchor) + s * (soc - anchor)
    }

    /// SOC predicted by the fitted line.
    pub fn linear_soc(&self, ocv: f64) -> f64 {
        self.linear_slope_dsoc_docv * ocv + self.linear_intercept
    }

    /// Largest |linear SOC − table SOC| over the fit range, checked at the
    /// breakpoints and on a fine grid between them.
    pub fn linearization_residual(&self) -> f64 {
        let (lo, hi) = LINEAR_FIT_RANGE;
        let n = 1000;
        (0..=n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .chain(self.soc_grid.iter().copied().filter(|s| (lo..=hi).contains(s)))
            .map(|s| {
                let v = lerp(&self.soc_grid, &self.ocv_values, s);
                (self.linear_soc(v) - s).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Least-squares line of SOC against OCV over the breakpoints inside
/// [`LINEAR_FIT_RANGE`]. Returns `(slope, intercept)`.
pub fn fit_linearization(soc_grid: &[f64], ocv_values: &[f64]) -> Result<(f64, f64)> {
    let (lo, hi) = LINEAR_FIT_RANGE;
    // Breakpoints typed as 0.2 may sit a rounding error below the bound.
    let eps = 1e-12;
    let pts: Vec<(f64, f64)> = soc_grid
        .iter()
        .zip(ocv_values)
        .filter(|(s, _)| **s >= lo - eps && **s <= hi + eps)
        .map(|(s, v)| (*v, *s))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Fit(format!(
            "{} breakpoint(s) in SOC [{lo}, {hi}], need at least 2",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all OCV samples in range are equal".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, mean_y - slope * mean_x))
}
