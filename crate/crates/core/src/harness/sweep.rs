//! Inter-signal rest sweep over concatenated regulation signals.

use std::io::Write;
use std::path::Path;

use super::{io_error, simulate, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub rest_s: f64,
    /// `u` just before each signal starts.
    pub signal_start_u: Vec<f64>,
    /// Largest `u` reached during each signal.
    pub signal_max_u: Vec<f64>,
    /// Smallest `u` reached during each signal.
    pub signal_min_u: Vec<f64>,
    /// `u` after every step of the final signal.
    pub final_signal_u: Vec<f64>,
}

impl SweepEntry {
    /// `u` at the start of the final signal.
    pub fn start_u(&self) -> f64 {
        *self.signal_start_u.last().expect("at least one signal")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub config_hash: String,
    pub seed: u64,
    /// Samples per signal.
    pub signal_len: usize,
    pub dt: f64,
}

impl SweepReport {
    /// Long format: one row per (rest length, step of the final signal),
    /// `t` measured from the start of that signal.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# config_hash = {}", self.config_hash)?;
        writeln!(out, "# seed = {}", self.seed)?;
        for e in &self.entries {
            writeln!(out, "# rest_s = {} start_u = {}", e.rest_s, e.start_u())?;
        }
        writeln!(out, "rest_s,t,u")?;
        for e in &self.entries {
            for (k, u) in e.final_signal_u.iter().enumerate() {
                writeln!(out, "{},{},{}", e.rest_s, (k + 1) as f64 * self.dt, u)?;
            }
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

/// For each rest length, simulates `cfg.regd_copies` signals separated by
/// that rest, all on stream 0 of `cfg.seed`.
pub fn run_rest_sweep(cfg: &RunConfig, rest_values: &[f64]) -> Result<SweepReport> {
    if rest_values.is_empty() {
        return Err(Error::validation("rest sweep", "no rest lengths given"));
    }
    let model = cfg.load_model()?;
    let signal = cfg.signal()?;
    let signal_len = signal.len();
    let mut entries = Vec::with_capacity(rest_values.len());
    for &rest in rest_values {
        let profile = crate::profiles::concatenate_with_rest(&signal, cfg.regd_copies, rest)?;
        profile.check_c_rate(cfg.c_rate_limit, cfg.q_capacity_ah)?;
        let (records, _) = simulate(cfg, &model, &profile, cfg.seed, 0)
            .map_err(|e| e.context(format!("rest sweep at {rest} s")))?;
        let period = profile.len() / cfg.regd_copies;
        let mut entry = SweepEntry {
            rest_s: rest,
            signal_start_u: Vec::new(),
            signal_max_u: Vec::new(),
            signal_min_u: Vec::new(),
            final_signal_u: Vec::new(),
        };
        for s in 0..cfg.regd_copies {
            let start = s * period;
            let us: Vec<f64> = records[start..start + signal_len].iter().map(|r| r.u).collect();
            entry
                .signal_start_u
                .push(if start == 0 { cfg.initial_u } else { records[start - 1].u });
            entry.signal_max_u.push(us.iter().copied().fold(f64::MIN, f64::max));
            entry.signal_min_u.push(us.iter().copied().fold(f64::MAX, f64::min));
            if s + 1 == cfg.regd_copies {
                entry.final_signal_u = us;
            }
        }
        entries.push(entry);
    }
    Ok(SweepReport {
        entries,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        signal_len,
        dt: signal.dt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Experiment;

    #[test]
    fn short_sweep_structure() {
        let mut cfg = RunConfig::preset(Experiment::Freq);
        cfg.regd.duration_s = 200.0;
        cfg.regd_copies = 3;
        let rep = run_rest_sweep(&cfg, &[0.0, 6.0]).unwrap();
        assert_eq!(rep.entries.len(), 2);
        for e in &rep.entries {
            assert_eq!(e.signal_start_u.len(), 3);
            assert_eq!(e.final_signal_u.len(), 200);
            assert_eq!(e.signal_start_u[0], 0.0);
        }
        assert!(rep.entries[1].start_u() < rep.entries[0].start_u());
        assert!(run_rest_sweep(&cfg, &[]).is_err());
    }
}
