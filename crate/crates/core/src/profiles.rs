//! Current profiles: constant discharge then rest, synthetic frequency
//! regulation signals, concatenation with inter-signal rest, and CSV replay.
//!
//! Discharge current is positive. Every profile has a uniform sample
//! interval.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::table_io;

const CSV_HEADER: [&str; 2] = ["t", "i"];

/// Tolerance on sample-interval uniformity, seconds.
pub const DT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileMeta {
    pub label: String,
    /// Generator parameters as `(name, value)` pairs, for provenance.
    pub params: Vec<(String, String)>,
}

impl ProfileMeta {
    fn new(label: &str, params: &[(&str, String)]) -> Self {
        ProfileMeta {
            label: label.to_owned(),
            params: params
                .iter()
                .map(|(k, v)| ((*k).to_owned(), v.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentProfile {
    timestamps: Vec<f64>,
    currents: Vec<f64>,
    dt: f64,
    pub meta: ProfileMeta,
}

impl CurrentProfile {
    pub fn new(timestamps: Vec<f64>, currents: Vec<f64>, meta: ProfileMeta) -> Result<Self> {
        if timestamps.len() != currents.len() {
            return Err(Error::validation("profile", "timestamp and current counts differ"));
        }
        if timestamps.is_empty() {
            return Err(Error::validation("profile", "empty profile"));
        }
        if timestamps.iter().chain(&currents).any(|v| !v.is_finite()) {
            return Err(Error::validation("profile", "non-finite entry"));
        }
        let dt = if timestamps.len() > 1 {
            timestamps[1] - timestamps[0]
        } else {
            1.0
        };
        if !(dt > 0.0) {
            return Err(Error::validation("profile", "timestamps must strictly increase"));
        }
        if let Some(k) = uniformity_violation(&timestamps, dt) {
            return Err(Error::validation(
                "profile",
                format!("non-uniform sample interval at sample {k}"),
            ));
        }
        Ok(CurrentProfile {
            timestamps,
            currents,
            dt,
            meta,
        })
    }

    /// Samples at `0, dt, 2·dt, …`.
    pub fn from_currents(currents: Vec<f64>, dt: f64, meta: ProfileMeta) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::validation("profile", format!("dt {dt} must be > 0")));
        }
        let timestamps = (0..currents.len()).map(|k| k as f64 * dt).collect();
        let mut p = Self::new(timestamps, currents, meta)?;
        p.dt = dt;
        Ok(p)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn currents(&self) -> &[f64] {
        &self.currents
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.currents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.currents.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    /// `Σ i·dt`, amp-seconds.
    pub fn total_charge(&self) -> f64 {
        self.currents.iter().map(|i| i * self.dt).sum()
    }

    pub fn max_abs_current(&self) -> f64 {
        self.currents.iter().fold(0.0, |m, i| m.max(i.abs()))
    }

    pub fn mean_current(&self) -> f64 {
        self.currents.iter().sum::<f64>() / self.len() as f64
    }

    /// Errors if any sample exceeds `c_rate_limit · q` in magnitude.
    pub fn check_c_rate(&self, c_rate_limit: f64, q_capacity_ah: f64) -> Result<()> {
        let limit = c_rate_limit * q_capacity_ah;
        let peak = self.max_abs_current();
        if peak > limit * (1.0 + 1e-12) {
            return Err(Error::validation(
                "profile",
                format!("peak current {peak} A exceeds {c_rate_limit}C = {limit} A"),
            ));
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write_to(table_io::create(path)?, path)
    }

    /// Writes the `t,i` table, preceded by `#` metadata lines, to any sink.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_to(out, Path::new("<output>"))
    }

    fn write_to<W: Write>(&self, mut out: W, path: &Path) -> Result<()> {
        let mut head = format!("# profile: {}\n", self.meta.label);
        for (k, v) in &self.meta.params {
            head.push_str(&format!("# {k} = {v}\n"));
        }
        out.write_all(head.as_bytes()).map_err(table_io::io_err(path))?;
        table_io::write_columns(out, &CSV_HEADER, &[&self.timestamps, &self.currents], path)
    }
}

fn uniformity_violation(timestamps: &[f64], dt: f64) -> Option<usize> {
    let t0 = timestamps[0];
    timestamps
        .iter()
        .enumerate()
        .find(|(k, t)| (*t - (t0 + *k as f64 * dt)).abs() > DT_TOLERANCE)
        .map(|(k, _)| k)
}

/// Number of `dt` steps in `span`; errors unless `span` is a whole multiple.
fn whole_steps(what: &'static str, span: f64, dt: f64) -> Result<usize> {
    if !(span >= 0.0 && span.is_finite()) {
        return Err(Error::validation(what, format!("{span} s must be >= 0")));
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > DT_TOLERANCE * span.max(1.0) {
        return Err(Error::validation(
            what,
            format!("{span} s is not a multiple of the {dt} s step"),
        ));
    }
    Ok(n as usize)
}

/// Reads a `t,i` CSV and checks the interval is uniform within
/// [`DT_TOLERANCE`].
pub fn load_profile_csv(path: impl AsRef<Path>) -> Result<CurrentProfile> {
    let path = path.as_ref();
    let rows = table_io::read_path(path, &CSV_HEADER)?;
    if rows.is_empty() {
        return Err(Error::validation("profile", format!("{} has no samples", path.display())));
    }
    if rows.len() > 1 {
        let t0 = rows[0].values[0];
        let dt = rows[1].values[0] - t0;
        if !(dt > 0.0) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: rows[1].line,
                reason: "timestamps must strictly increase".into(),
            });
        }
        for (k, row) in rows.iter().enumerate() {
            if (row.values[0] - (t0 + k as f64 * dt)).abs() > DT_TOLERANCE {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: row.line,
                    reason: format!("non-uniform sample interval (expected dt = {dt} s)"),
                });
            }
        }
    }
    let mut cols = table_io::columns(&rows, 2);
    let i = cols.pop().unwrap_or_default();
    let t = cols.pop().unwrap_or_default();
    let meta = ProfileMeta::new("csv", &[("path", path.display().to_string())]);
    CurrentProfile::new(t, i, meta)
}

/// `c_rate·q` amps for `discharge_s`, then zero for `rest_s`.
pub fn constant_discharge_rest(
    c_rate: f64,
    discharge_s: f64,
    rest_s: f64,
    dt: f64,
    q_capacity_ah: f64,
) -> Result<CurrentProfile> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation("profile", format!("dt {dt} must be > 0")));
    }
    if !(q_capacity_ah > 0.0) {
        return Err(Error::validation("capacity", "must be > 0"));
    }
    let n_on = whole_steps("discharge duration", discharge_s, dt)?;
    let n_off = whole_steps("rest duration", rest_s, dt)?;
    if n_on + n_off == 0 {
        return Err(Error::validation("profile", "zero total duration"));
    }
    let i = c_rate * q_capacity_ah;
    let mut currents = vec![i; n_on];
    currents.resize(n_on + n_off, 0.0);
    let meta = ProfileMeta::new(
        "constant-discharge-rest",
        &[
            ("c_rate", c_rate.to_string()),
            ("discharge_s", discharge_s.to_string()),
            ("rest_s", rest_s.to_string()),
            ("dt", dt.to_string()),
            ("q_ah", q_capacity_ah.to_string()),
        ],
    );
    CurrentProfile::from_currents(currents, dt, meta)
}

/// Parameters of the synthetic regulation signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegdSpec {
    pub duration_s: f64,
    /// Hold time of each signal value.
    pub step_s: f64,
    pub max_c_rate: f64,
    pub q_capacity_ah: f64,
    /// Length of the single zero-current window placed near mid-signal.
    pub zero_crossing_s: f64,
    pub seed: u64,
    /// Sample interval; `step_s` must be a whole multiple of it.
    pub dt: f64,
    /// Correlation time of the underlying mean-reverting walk, seconds.
    pub correlation_s: f64,
}

impl Default for RegdSpec {
    fn default() -> Self {
        RegdSpec {
            duration_s: 2400.0,
            step_s: 2.0,
            max_c_rate: 2.0,
            q_capacity_ah: 4.85,
            zero_crossing_s: 4.0,
            seed: 7,
            dt: 1.0,
            correlation_s: 40.0,
        }
    }
}

/// Seeded regulation-like signal: a discrete Ornstein–Uhlenbeck walk held
/// for `step_s`, made zero-mean, with one zero window near the middle, and
/// rescaled so the peak magnitude is exactly `max_c_rate · q`.
pub fn synth_regd(spec: &RegdSpec) -> Result<CurrentProfile> {
    let RegdSpec {
        duration_s,
        step_s,
        max_c_rate,
        q_capacity_ah,
        zero_crossing_s,
        seed,
        dt,
        correlation_s,
    } = *spec;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation("regulation signal", format!("dt {dt} must be > 0")));
    }
    if !(max_c_rate >= 0.0 && q_capacity_ah > 0.0 && correlation_s > 0.0) {
        return Err(Error::validation(
            "regulation signal",
            "C-rate must be >= 0; capacity and correlation time > 0",
        ));
    }
    let per_step = whole_steps("regulation hold time", step_s, dt)?;
    if per_step == 0 {
        return Err(Error::validation("regulation hold time", "must be > 0"));
    }
    let n_steps = whole_steps("regulation duration", duration_s, step_s)?;
    let n_zero = whole_steps("zero-crossing window", zero_crossing_s, dt)?;
    let n = n_steps * per_step;
    if n == 0 {
        return Err(Error::validation("regulation duration", "must be > 0"));
    }
    if n_zero >= n {
        return Err(Error::validation(
            "zero-crossing window",
            format!("{zero_crossing_s} s must be shorter than the {duration_s} s signal"),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = (-step_s / correlation_s).exp();
    let kick = (1.0 - rho * rho).sqrt();
    let mut x: f64 = StandardNormal.sample(&mut rng);
    let mut currents = Vec::with_capacity(n);
    for _ in 0..n_steps {
        currents.extend(std::iter::repeat_n(x, per_step));
        let z: f64 = StandardNormal.sample(&mut rng);
        x = rho * x + kick * z;
    }

    // Window aligned to a hold boundary, centered as closely as possible.
    let start = ((n - n_zero) / 2) / per_step * per_step;
    let window = start..start + n_zero;
    let outside = n - n_zero;
    let mean = currents
        .iter()
        .enumerate()
        .filter(|(k, _)| !window.contains(k))
        .map(|(_, v)| v)
        .sum::<f64>()
        / outside as f64;
    for (k, v) in currents.iter_mut().enumerate() {
        *v = if window.contains(&k) { 0.0 } else { *v - mean };
    }
    let peak = currents.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target = max_c_rate * q_capacity_ah;
    let scale = if peak > 0.0 { target / peak } else { 0.0 };
    for v in &mut currents {
        *v *= scale;
        // keep the rescaled peak exactly on the limit
        if v.abs() > target {
            *v = target.copysign(*v);
        }
    }

    let meta = ProfileMeta::new(
        "synthetic-regd",
        &[
            ("duration_s", duration_s.to_string()),
            ("step_s", step_s.to_string()),
            ("max_c_rate", max_c_rate.to_string()),
            ("q_ah", q_capacity_ah.to_string()),
            ("zero_crossing_s", zero_crossing_s.to_string()),
            ("zero_window_start_s", (start as f64 * dt).to_string()),
            ("seed", seed.to_string()),
            ("dt", dt.to_string()),
            ("correlation_s", correlation_s.to_string()),
        ],
    );
    CurrentProfile::from_currents(currents, dt, meta)
}

/// `copies` of `signal`, each followed by `rest_s` of zero current, with
/// timestamps re-based to run contiguously from the signal's start.
pub fn concatenate_with_rest(
    signal: &CurrentProfile,
    copies: usize,
    rest_s: f64,
) -> Result<CurrentProfile> {
    if copies == 0 {
        return Err(Error::validation("concatenation", "need at least one copy"));
    }
    let dt = signal.dt();
    let n_rest = whole_steps("inter-signal rest", rest_s, dt)?;
    let mut currents = Vec::with_capacity(copies * (signal.len() + n_rest));
    for _ in 0..copies {
        currents.extend_from_slice(signal.currents());
        currents.resize(currents.len() + n_rest, 0.0);
    }
    let t0 = signal.timestamps()[0];
    let timestamps = (0..currents.len()).map(|k| t0 + k as f64 * dt).collect();
    let mut meta = signal.meta.clone();
    meta.label = format!("{} x{copies}", meta.label);
    meta.params.push(("copies".into(), copies.to_string()));
    meta.params.push(("inter_signal_rest_s".into(), rest_s.to_string()));
    let mut out = CurrentProfile::new(timestamps, currents, meta)?;
    out.dt = dt;
    Ok(out)
}

/// Appends `b` after `a`; both must share the sample interval.
pub fn append(a: &CurrentProfile, b: &CurrentProfile) -> Result<CurrentProfile> {
    if (a.dt() - b.dt()).abs() > DT_TOLERANCE {
        return Err(Error::validation(
            "profile",
            format!("sample intervals differ ({} s vs {} s)", a.dt(), b.dt()),
        ));
    }
    let mut currents = a.currents().to_vec();
    currents.extend_from_slice(b.currents());
    let meta = ProfileMeta {
        label: format!("{} + {}", a.meta.label, b.meta.label),
        params: Vec::new(),
    };
    CurrentProfile::from_currents(currents, a.dt(), meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_windows(p: &CurrentProfile) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (k, i) in p.currents().iter().enumerate() {
            match (start, *i == 0.0) {
                (None, true) => start = Some(k),
                (Some(s), false) => {
                    out.push((s, k - s));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, p.len() - s));
        }
        out
    }

    #[test]
    fn rest_experiment_profile() {
        let p = constant_discharge_rest(1.0, 2500.0, 500.0, 1.0, 4.85).unwrap();
        assert_eq!(p.len(), 3000);
        assert!(p.currents()[..2500].iter().all(|i| *i == 4.85));
        assert!(p.currents()[2500..].iter().all(|i| *i == 0.0));
        assert!((p.total_charge() - 4.85 * 2500.0).abs() < 1e-9);
        assert_eq!(p.timestamps()[2999], 2999.0);
    }

    #[test]
    fn rest_free_and_misaligned_profiles() {
        let p = constant_discharge_rest(0.5, 100.0, 0.0, 1.0, 4.85).unwrap();
        assert_eq!(p.len(), 100);
        assert!(p.currents().iter().all(|i| *i > 0.0));
        assert!(constant_discharge_rest(1.0, 10.5, 5.0, 1.0, 4.85).is_err());
        assert!(constant_discharge_rest(1.0, 10.0, 5.0, 2.0, 4.85).is_err());
    }

    #[test]
    fn regd_defaults() {
        let p = synth_regd(&RegdSpec::default()).unwrap();
        assert_eq!(p.len(), 2400);
        assert_eq!(p.dt(), 1.0);
        assert!((p.max_abs_current() - 9.7).abs() < 1e-12);
        assert_eq!(zero_windows(&p), vec![(1198, 4)]);
        // values hold for two samples
        for pair in p.currents().chunks(2) {
            assert_eq!(pair[0], pair[1]);
        }
        assert!(p.mean_current().abs() <= 0.05 * p.max_abs_current());
    }

    #[test]
    fn regd_is_deterministic() {
        let a = synth_regd(&RegdSpec::default()).unwrap();
        let b = synth_regd(&RegdSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = synth_regd(&RegdSpec {
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a.currents(), c.currents());
    }

    #[test]
    fn regd_degenerate_cases() {
        let p = synth_regd(&RegdSpec {
            max_c_rate: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert!(p.currents().iter().all(|i| *i == 0.0));
        let err = synth_regd(&RegdSpec {
            zero_crossing_s: 2400.0,
            ..Default::default()
        });
        assert!(err.is_err());
        assert!(synth_regd(&RegdSpec {
            duration_s: 2401.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn concatenation() {
        let s = synth_regd(&RegdSpec::default()).unwrap();
        let five = concatenate_with_rest(&s, 5, 0.0).unwrap();
        assert_eq!(five.duration(), 5.0 * 2400.0);
        assert!((five.total_charge() - 5.0 * s.total_charge()).abs() < 1e-9);
        let one = concatenate_with_rest(&s, 1, 30.0).unwrap();
        assert_eq!(one.len(), 2430);
        assert_eq!(&one.currents()[..2400], s.currents());
        assert!(one.currents()[2400..].iter().all(|i| *i == 0.0));
        assert_eq!(one.timestamps()[2429], 2429.0);
        assert!(concatenate_with_rest(&s, 0, 0.0).is_err());
        assert!(concatenate_with_rest(&s, 2, 0.5).is_err());
    }

    #[test]
    fn append_requires_matching_dt() {
        let a = constant_discharge_rest(1.0, 10.0, 0.0, 1.0, 4.85).unwrap();
        let b = constant_discharge_rest(1.0, 10.0, 0.0, 2.0, 4.85).unwrap();
        assert!(append(&a, &b).is_err());
        assert_eq!(append(&a, &a).unwrap().len(), 20);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = synth_regd(&RegdSpec::default()).unwrap();
        p.save_csv(&path).unwrap();
        let back = load_profile_csv(&path).unwrap();
        assert_eq!(back.timestamps(), p.timestamps());
        assert_eq!(back.currents(), p.currents());
        assert_eq!(back.dt(), p.dt());

        std::fs::write(&path, "t,i\n").unwrap();
        assert!(load_profile_csv(&path).is_err());

        std::fs::write(&path, "t,i\n0,1\n1,2\n2,abc\n3,1\n").unwrap();
        let err = load_profile_csv(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        assert!(err.to_string().contains("abc"));

        std::fs::write(&path, "t,i\n0,1\n1,2\n2.5,1\n").unwrap();
        let err = load_profile_csv(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn generated_regd_satisfies_invariants(
                steps in 10usize..400,
                hold in 1usize..4,
                zero in 0usize..6,
                c_rate in 0.1f64..3.0,
                seed in any::<u64>(),
            ) {
                let spec = RegdSpec {
                    duration_s: (steps * hold) as f64,
                    step_s: hold as f64,
                    max_c_rate: c_rate,
                    zero_crossing_s: zero as f64,
                    seed,
                    ..Default::default()
                };
                let p = synth_regd(&spec).unwrap();
                prop_assert_eq!(p.len(), steps * hold);
                prop_assert!(p.check_c_rate(c_rate, 4.85).is_ok());
                prop_assert!((p.max_abs_current() - c_rate * 4.85).abs() < 1e-9);
                prop_assert!(p.mean_current().abs() <= 0.05 * p.max_abs_current());
                for w in p.timestamps().windows(2) {
                    prop_assert!((w[1] - w[0] - 1.0).abs() < DT_TOLERANCE);
                }
            }

            #[test]
            fn generated_rest_profiles_valid(
                c_rate in 0.0f64..3.0,
                on in 0usize..500,
                off in 1usize..500,
            ) {
                let p = constant_discharge_rest(c_rate, on as f64, off as f64, 1.0, 4.85).unwrap();
                prop_assert_eq!(p.len(), on + off);
                prop_assert!(p.check_c_rate(c_rate, 4.85).is_ok());
            }
        }
    }
}
