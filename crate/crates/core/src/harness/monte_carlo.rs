//! Ensembles of independent seeded runs and their per-step error statistics.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::{io_error, simulate_with, Model, RunConfig};
use crate::error::{Error, Result};
use crate::estimator::StepRecord;
use crate::profiles::CurrentProfile;

/// Runs are grouped into at most this many chunks; each chunk is reduced
/// sequentially and chunks are merged in index order, so results do not
/// depend on the number of worker threads.
const MAX_CHUNKS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub t: f64,
    /// Fraction of runs whose interval contains the true SOC.
    pub coverage: f64,
    /// Mean of `SOC − ŜOC`.
    pub err_mean: f64,
    /// Sample standard deviation of `SOC − ŜOC`.
    pub err_std: f64,
    /// Sample standard deviation of `SOC − ŜOC − bias`.
    pub debiased_std: f64,
    pub u_mean: f64,
    pub bias_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub n_runs: usize,
    pub steps: Vec<StepStats>,
    pub config_hash: String,
    pub seed: u64,
    /// Set when the ensemble is a single run.
    pub single_run_contained: Option<bool>,
    pub skipped_updates: usize,
    pub clamped: usize,
}

impl CoverageReport {
    pub fn final_step(&self) -> &StepStats {
        self.steps.last().expect("profiles are non-empty")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let f = self.final_step();
        writeln!(out, "# config_hash = {}", self.config_hash)?;
        writeln!(out, "# seed = {}", self.seed)?;
        writeln!(out, "# n_runs = {}", self.n_runs)?;
        writeln!(out, "# final_coverage = {}", f.coverage)?;
        writeln!(out, "# final_err_mean = {}", f.err_mean)?;
        writeln!(out, "# final_bias_mean = {}", f.bias_mean)?;
        writeln!(out, "# final_debiased_std = {}", f.debiased_std)?;
        writeln!(out, "# final_u_mean = {}", f.u_mean)?;
        if let Some(c) = self.single_run_contained {
            writeln!(out, "# contained = {c}")?;
        }
        writeln!(out, "# skipped_updates = {}", self.skipped_updates)?;
        writeln!(out, "# clamped = {}", self.clamped)?;
        writeln!(out, "t,coverage,err_mean,bias_mean,err_std,debiased_std,u_mean")?;
        for s in &self.steps {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.t, s.coverage, s.err_mean, s.bias_mean, s.err_std, s.debiased_std, s.u_mean
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

/// Running sums for one time step (Welford form for the two spreads).
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    inside: f64,
    mean_e: f64,
    m2_e: f64,
    mean_d: f64,
    m2_d: f64,
    sum_u: f64,
    sum_bias: f64,
}

impl Moments {
    fn push(&mut self, r: &StepRecord) {
        let e = r.soc_true - r.soc_hat;
        let d = e - r.bias;
        self.n += 1.0;
        if r.ci_lo <= r.soc_true && r.soc_true <= r.ci_hi {
            self.inside += 1.0;
        }
        let de = e - self.mean_e;
        self.mean_e += de / self.n;
        self.m2_e += de * (e - self.mean_e);
        let dd = d - self.mean_d;
        self.mean_d += dd / self.n;
        self.m2_d += dd * (d - self.mean_d);
        self.sum_u += r.u;
        self.sum_bias += r.bias;
    }

    /// Pairwise combination of two disjoint sets of runs.
    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let de = o.mean_e - self.mean_e;
        let dd = o.mean_d - self.mean_d;
        self.m2_e += o.m2_e + de * de * self.n * o.n / n;
        self.m2_d += o.m2_d + dd * dd * self.n * o.n / n;
        self.mean_e += de * o.n / n;
        self.mean_d += dd * o.n / n;
        self.n = n;
        self.inside += o.inside;
        self.sum_u += o.sum_u;
        self.sum_bias += o.sum_bias;
    }

    fn stats(&self, t: f64) -> StepStats {
        let var = |m2: f64| if self.n > 1.0 { m2 / (self.n - 1.0) } else { 0.0 };
        StepStats {
            t,
            coverage: self.inside / self.n,
            err_mean: self.mean_e,
            err_std: var(self.m2_e).sqrt(),
            debiased_std: var(self.m2_d).sqrt(),
            u_mean: self.sum_u / self.n,
            bias_mean: self.sum_bias / self.n,
        }
    }
}

struct Chunk {
    steps: Vec<Moments>,
    skipped: usize,
    clamped: usize,
}

/// `cfg.monte_carlo_n` runs of the configured profile.
pub fn run_monte_carlo(cfg: &RunConfig) -> Result<CoverageReport> {
    let model = cfg.load_model()?;
    let profile = cfg.profile()?;
    if cfg.monte_carlo_n < 100 {
        log::warn!("coverage from {} runs is coarse; use at least 100", cfg.monte_carlo_n);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::validation("workers", e.to_string()))?;
    pool.install(|| simulate_ensemble(cfg, &model, &profile, cfg.monte_carlo_n))
}

/// `n` runs on streams `0..n` of `cfg.seed`, on the current rayon pool.
pub fn simulate_ensemble(
    cfg: &RunConfig,
    model: &Model,
    profile: &CurrentProfile,
    n: usize,
) -> Result<CoverageReport> {
    if n == 0 {
        return Err(Error::validation("monte_carlo_n", "must be >= 1"));
    }
    let per_chunk = n.div_ceil(MAX_CHUNKS);
    let chunks: Vec<Chunk> = (0..n.div_ceil(per_chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = Chunk {
                steps: vec![Moments::default(); profile.len()],
                skipped: 0,
                clamped: 0,
            };
            for run in c * per_chunk..((c + 1) * per_chunk).min(n) {
                let mut k = 0;
                let d = simulate_with(cfg, model, profile, cfg.seed, run as u64, |r| {
                    acc.steps[k].push(r);
                    k += 1;
                })
                .map_err(|e| e.context(format!("Monte Carlo run {run}")))?;
                acc.skipped += d.skipped_updates;
                acc.clamped += d.clamped;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut total = Chunk {
        steps: vec![Moments::default(); profile.len()],
        skipped: 0,
        clamped: 0,
    };
    for c in &chunks {
        for (a, b) in total.steps.iter_mut().zip(&c.steps) {
            a.merge(b);
        }
        total.skipped += c.skipped;
        total.clamped += c.clamped;
    }
    let dt = profile.dt();
    let steps: Vec<StepStats> = total
        .steps
        .iter()
        .zip(profile.timestamps())
        .map(|(m, t)| m.stats(t + dt))
        .collect();
    let single_run_contained = (n == 1).then(|| steps.last().is_some_and(|s| s.coverage == 1.0));
    Ok(CoverageReport {
        n_runs: n,
        steps,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        single_run_contained,
        skipped_updates: total.skipped,
        clamped: total.clamped,
    })
}
