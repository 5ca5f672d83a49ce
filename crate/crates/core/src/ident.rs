//! Genetic-algorithm identification of SOC-dependent `R0`, `R1`, `C1` from
//! pulse/rest (HPPC-style) data.
//!
//! Each segment holds one current pulse at a nominal SOC followed by a rest
//! long enough to watch the RC pair relax. The GA searches the three
//! parameters in log space, minimizing the RMS difference between measured
//! voltage and the voltage the cell model predicts for the same current.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::ecm::{rc_relax, CellState, EcmParams, RcParams};
use crate::error::{Error, Result};
use crate::interp::strictly_increasing;
use crate::ocv::OcvCurve;
use crate::table_io;

const CSV_HEADER: [&str; 4] = ["t", "i", "v", "soc_nominal"];

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSegment {
    pub soc_nominal: f64,
    pub times: Vec<f64>,
    pub currents: Vec<f64>,
    pub voltages: Vec<f64>,
}

impl PulseSegment {
    pub fn new(soc_nominal: f64, times: Vec<f64>, currents: Vec<f64>, voltages: Vec<f64>) -> Result<Self> {
        if times.len() != currents.len() || times.len() != voltages.len() {
            return Err(Error::validation("pulse segment", "column lengths differ"));
        }
        if times.len() < 3 {
            return Err(Error::validation("pulse segment", "need at least three samples"));
        }
        if !strictly_increasing(&times) {
            return Err(Error::validation("pulse segment", "times must strictly increase"));
        }
        if !(0.0..=1.0).contains(&soc_nominal) {
            return Err(Error::validation("pulse segment", format!("nominal SOC {soc_nominal}")));
        }
        Ok(PulseSegment {
            soc_nominal,
            times,
            currents,
            voltages,
        })
    }

    /// Seconds of zero current at the end of the segment.
    pub fn trailing_rest(&self) -> f64 {
        let last = self.times[self.times.len() - 1];
        match self.currents.iter().rposition(|i| *i != 0.0) {
            Some(k) if k + 1 < self.times.len() => last - self.times[k + 1],
            Some(_) => 0.0,
            None => last - self.times[0],
        }
    }
}

/// Inclusive search box for the three parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds {
    pub lo: RcParams,
    pub hi: RcParams,
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            lo: RcParams {
                r0: 1e-3,
                r1: 1e-3,
                c1: 100.0,
            },
            hi: RcParams {
                r0: 0.2,
                r1: 0.2,
                c1: 1e5,
            },
        }
    }
}

impl ParamBounds {
    fn pairs(&self) -> [(f64, f64); 3] {
        [
            (self.lo.r0, self.hi.r0),
            (self.lo.r1, self.hi.r1),
            (self.lo.c1, self.hi.c1),
        ]
    }

    /// Maps a gene in `[0, 1]³` to parameters, log-uniformly.
    fn decode(&self, genes: &[f64; 3]) -> RcParams {
        let [r0, r1, c1] = std::array::from_fn(|j| {
            let (lo, hi) = self.pairs()[j];
            if genes[j] <= 0.0 {
                lo
            } else if genes[j] >= 1.0 {
                hi
            } else {
                lo * (hi / lo).powf(genes[j])
            }
        });
        RcParams { r0, r1, c1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of the (log) range.
    pub mutation_scale: f64,
    /// Geometric shrink of `mutation_scale` per generation.
    pub mutation_decay: f64,
    pub tournament_size: usize,
    pub elitism: usize,
    pub bounds: ParamBounds,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 50,
            generations: 200,
            crossover_rate: 0.9,
            mutation_rate: 0.3,
            mutation_scale: 0.1,
            mutation_decay: 0.98,
            tournament_size: 3,
            elitism: 1,
            bounds: ParamBounds::default(),
            seed: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::validation("GA config", r));
        if self.population < 4 {
            return bad("population must be >= 4");
        }
        for rate in [self.crossover_rate, self.mutation_rate] {
            if !(0.0..=1.0).contains(&rate) {
                return bad("rates must be in [0, 1]");
            }
        }
        if !(self.mutation_scale > 0.0) || !(self.mutation_decay > 0.0 && self.mutation_decay <= 1.0) {
            return bad("mutation scale must be > 0 and decay in (0, 1]");
        }
        if self.tournament_size == 0 || self.elitism == 0 || self.elitism >= self.population {
            return bad("tournament size >= 1 and 1 <= elitism < population");
        }
        for (lo, hi) in self.bounds.pairs() {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return bad("bounds need 0 < lo < hi");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFit {
    pub soc_nominal: f64,
    pub rc: RcParams,
    /// Volts.
    pub rms_error: f64,
    /// Best RMS error after each generation (generation 0 = initial population).
    pub history: Vec<f64>,
}

/// Predicted terminal voltage for a segment under constant parameters,
/// starting from a rested cell at the nominal SOC.
pub fn simulate_segment(
    seg: &PulseSegment,
    rc: RcParams,
    curve: &OcvCurve,
    q_capacity_ah: f64,
    eta: f64,
) -> Result<Vec<f64>> {
    let params = EcmParams::constant(q_capacity_ah, eta, seg.soc_nominal, rc)?;
    let ocv = ocv_path(seg, curve, &params)?;
    Ok(predict(seg, &ocv, rc))
}

/// OCV along the Coulomb-counted SOC path; independent of the RC parameters.
fn ocv_path(seg: &PulseSegment, curve: &OcvCurve, params: &EcmParams) -> Result<Vec<f64>> {
    let mut cell = CellState::rested(seg.soc_nominal);
    let mut out = Vec::with_capacity(seg.times.len());
    for k in 0..seg.times.len() {
        out.push(curve.ocv_of_soc(cell.soc)?);
        if k + 1 < seg.times.len() {
            let dt = seg.times[k + 1] - seg.times[k];
            cell.soc = crate::ecm::step_true_soc(&cell, params, seg.currents[k], dt)?;
        }
    }
    Ok(out)
}

fn predict(seg: &PulseSegment, ocv: &[f64], rc: RcParams) -> Vec<f64> {
    let mut v_c1 = 0.0;
    let n = seg.times.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        out.push(ocv[k] - v_c1 - rc.r0 * seg.currents[k]);
        if k + 1 < n {
            let dt = seg.times[k + 1] - seg.times[k];
            v_c1 = rc_relax(v_c1, rc.r1, rc.c1, seg.currents[k], dt);
        }
    }
    out
}

fn rms(seg: &PulseSegment, ocv: &[f64], rc: RcParams) -> f64 {
    let pred = predict(seg, ocv, rc);
    let sse: f64 = pred
        .iter()
        .zip(&seg.voltages)
        .map(|(p, v)| (p - v) * (p - v))
        .sum();
    (sse / pred.len() as f64).sqrt()
}

/// Fits segments against a fixed OCV curve with known capacity and
/// efficiency.
#[derive(Debug, Clone)]
pub struct Identifier<'a> {
    pub curve: &'a OcvCurve,
    pub q_capacity_ah: f64,
    pub eta: f64,
    pub config: GaConfig,
}

impl<'a> Identifier<'a> {
    pub fn new(curve: &'a OcvCurve, q_capacity_ah: f64, eta: f64, config: GaConfig) -> Result<Self> {
        config.validate()?;
        // validates q and eta
        EcmParams::constant(q_capacity_ah, eta, 0.5, config.bounds.lo)?;
        Ok(Identifier {
            curve,
            q_capacity_ah,
            eta,
            config,
        })
    }

    pub fn fit_segment(&self, seg: &PulseSegment) -> Result<SegmentFit> {
        if seg.currents.iter().all(|i| *i == 0.0) {
            return Err(Error::Unidentifiable {
                soc_nominal: seg.soc_nominal,
                reason: "no current flows in the segment".into(),
            });
        }
        let params =
            EcmParams::constant(self.q_capacity_ah, self.eta, seg.soc_nominal, self.config.bounds.lo)?;
        let ocv = ocv_path(seg, self.curve, &params)?;
        let cfg = &self.config;
        let bounds = cfg.bounds;
        let fitness = |g: &[f64; 3]| rms(seg, &ocv, bounds.decode(g));

        // Per-segment stream so fits are independent of segment order.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(seg.soc_nominal.to_bits());

        let mut pop: Vec<[f64; 3]> = (0..cfg.population)
            .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
            .collect();
        let mut scores: Vec<f64> = pop.par_iter().map(fitness).collect();
        let mut history = Vec::with_capacity(cfg.generations + 1);
        let mut sigma = cfg.mutation_scale;

        for _ in 0..cfg.generations {
            let order = ranking(&scores);
            history.push(scores[order[0]]);
            let mut next: Vec<[f64; 3]> = order[..cfg.elitism].iter().map(|&j| pop[j]).collect();
            while next.len() < cfg.population {
                let a = pop[tournament(&scores, cfg.tournament_size, &mut rng)];
                let b = pop[tournament(&scores, cfg.tournament_size, &mut rng)];
                let mut child = a;
                if rng.random::<f64>() < cfg.crossover_rate {
                    for j in 0..3 {
                        let w: f64 = rng.random();
                        child[j] = w * a[j] + (1.0 - w) * b[j];
                    }
                }
                for gene in &mut child {
                    if rng.random::<f64>() < cfg.mutation_rate {
                        let z: f64 = rng.sample(StandardNormal);
                        *gene = (*gene + sigma * z).clamp(0.0, 1.0);
                    }
                }
                next.push(child);
            }
            // elites keep their scores; only offspring are evaluated
            let fresh: Vec<f64> = next[cfg.elitism..].par_iter().map(fitness).collect();
            scores = order[..cfg.elitism]
                .iter()
                .map(|&j| scores[j])
                .chain(fresh)
                .collect();
            pop = next;
            sigma *= cfg.mutation_decay;
        }
        let best = ranking(&scores)[0];
        history.push(scores[best]);
        let rc = bounds.decode(&pop[best]);
        let fit = SegmentFit {
            soc_nominal: seg.soc_nominal,
            rc,
            rms_error: scores[best],
            history,
        };
        if seg.trailing_rest() < 3.0 * rc.tau() {
            log::warn!(
                "segment at SOC {}: trailing rest {} s is shorter than three fitted time constants ({} s)",
                seg.soc_nominal,
                seg.trailing_rest(),
                3.0 * rc.tau()
            );
        }
        Ok(fit)
    }

    /// One fit per segment, assembled into SOC-indexed tables.
    pub fn fit_tables(&self, segments: &[PulseSegment]) -> Result<(EcmParams, Vec<SegmentFit>)> {
        if segments.is_empty() {
            return Err(Error::validation("HPPC segments", "none supplied"));
        }
        let socs: Vec<f64> = segments.iter().map(|s| s.soc_nominal).collect();
        if !strictly_increasing(&socs) {
            return Err(Error::validation(
                "HPPC segments",
                "nominal SOCs must be distinct and ascending",
            ));
        }
        let fits = segments
            .iter()
            .map(|s| self.fit_segment(s))
            .collect::<Result<Vec<_>>>()?;
        let params = EcmParams::new(
            self.q_capacity_ah,
            self.eta,
            socs,
            fits.iter().map(|f| f.rc.r0).collect(),
            fits.iter().map(|f| f.rc.r1).collect(),
            fits.iter().map(|f| f.rc.c1).collect(),
        )?;
        Ok((params, fits))
    }
}

/// Indices sorted by ascending score; ties keep index order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    idx
}

fn tournament(scores: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    (0..size)
        .map(|_| rng.random_range(0..scores.len()))
        .min_by(|a, b| scores[*a].total_cmp(&scores[*b]))
        .unwrap_or(0)
}

/// Pulse/rest schedule for synthetic HPPC data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HppcPulse {
    /// Pulse current, amps (discharge positive).
    pub current: f64,
    pub pulse_s: f64,
    pub rest_s: f64,
    pub dt: f64,
}

impl Default for HppcPulse {
    fn default() -> Self {
        HppcPulse {
            current: 4.85,
            pulse_s: 30.0,
            rest_s: 400.0,
            dt: 1.0,
        }
    }
}

/// Generates a noise-free segment by running the cell model with the
/// parameters `params` gives at `soc`, held constant over the segment.
pub fn synth_segment(
    params: &EcmParams,
    curve: &OcvCurve,
    soc: f64,
    pulse: &HppcPulse,
) -> Result<PulseSegment> {
    let rc = params.rc_at(soc);
    let fixed = EcmParams::constant(params.q_capacity_ah(), params.eta(), soc, rc)?;
    let n_on = (pulse.pulse_s / pulse.dt).round() as usize;
    let n_off = (pulse.rest_s / pulse.dt).round() as usize;
    let mut cell = CellState::rested(soc);
    let (mut times, mut currents, mut voltages) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..n_on + n_off + 1 {
        let i = if k < n_on { pulse.current } else { 0.0 };
        times.push(cell.time);
        currents.push(i);
        voltages.push(crate::ecm::terminal_voltage(&cell, &fixed, curve, i)?);
        cell.advance(&fixed, i, pulse.dt)?;
    }
    PulseSegment::new(soc, times, currents, voltages)
}

/// Reads `t,i,v,soc_nominal`; consecutive rows sharing a nominal SOC form
/// one segment.
pub fn load_hppc_csv(path: impl AsRef<Path>) -> Result<Vec<PulseSegment>> {
    let path = path.as_ref();
    let rows = table_io::read_path(path, &CSV_HEADER)?;
    if rows.is_empty() {
        return Err(Error::validation("HPPC data", format!("{} has no rows", path.display())));
    }
    let mut segments = Vec::new();
    let mut start = 0;
    for k in 1..=rows.len() {
        if k == rows.len() || rows[k].values[3] != rows[start].values[3] {
            let chunk = &rows[start..k];
            let col = |c: usize| chunk.iter().map(|r| r.values[c]).collect::<Vec<_>>();
            let seg = PulseSegment::new(chunk[0].values[3], col(0), col(1), col(2))
                .map_err(|e| e.context(format!("{}:{}", path.display(), chunk[0].line)))?;
            segments.push(seg);
            start = k;
        }
    }
    Ok(segments)
}

pub fn save_hppc_csv(segments: &[PulseSegment], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut cols: [Vec<f64>; 4] = Default::default();
    for s in segments {
        cols[0].extend_from_slice(&s.times);
        cols[1].extend_from_slice(&s.currents);
        cols[2].extend_from_slice(&s.voltages);
        cols[3].extend(std::iter::repeat_n(s.soc_nominal, s.times.len()));
    }
    let out = table_io::create(path)?;
    table_io::write_columns(out, &CSV_HEADER, &[&cols[0], &cols[1], &cols[2], &cols[3]], path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn setup() -> (EcmParams, OcvCurve) {
        (EcmParams::default_nmc(), OcvCurve::default_nmc())
    }

    #[test]
    fn recovers_known_parameters() {
        let (p, c) = setup();
        let seg = synth_segment(&p, &c, 0.5, &HppcPulse::default()).unwrap();
        let id = Identifier::new(&c, 4.85, 1.0, GaConfig::default()).unwrap();
        let fit = id.fit_segment(&seg).unwrap();
        let truth = p.rc_at(0.5);
        assert!(rel(fit.rc.r0, truth.r0) < 0.05, "{fit:?}");
        assert!(rel(fit.rc.r1, truth.r1) < 0.05, "{fit:?}");
        assert!(rel(fit.rc.c1, truth.c1) < 0.05, "{fit:?}");
        // elitism: best fitness never gets worse
        assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(fit.history.len(), GaConfig::default().generations + 1);
    }

    #[test]
    fn model_prediction_matches_generator() {
        let (p, c) = setup();
        let seg = synth_segment(&p, &c, 0.7, &HppcPulse::default()).unwrap();
        let pred = simulate_segment(&seg, p.rc_at(0.7), &c, 4.85, 1.0).unwrap();
        for (a, b) in pred.iter().zip(&seg.voltages) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (p, c) = setup();
        let seg = synth_segment(&p, &c, 0.3, &HppcPulse::default()).unwrap();
        let cfg = GaConfig {
            generations: 30,
            ..Default::default()
        };
        let id = Identifier::new(&c, 4.85, 1.0, cfg).unwrap();
        assert_eq!(id.fit_segment(&seg).unwrap(), id.fit_segment(&seg).unwrap());
    }

    #[test]
    fn excluded_truth_pins_to_bound() {
        let (p, c) = setup();
        let seg = synth_segment(&p, &c, 0.5, &HppcPulse::default()).unwrap();
        let mut cfg = GaConfig::default();
        cfg.bounds.lo.r0 = 0.035; // true R0 is 0.0255
        let id = Identifier::new(&c, 4.85, 1.0, cfg).unwrap();
        let fit = id.fit_segment(&seg).unwrap();
        assert!(rel(fit.rc.r0, 0.035) < 0.01, "{fit:?}");
        let free = Identifier::new(&c, 4.85, 1.0, GaConfig::default())
            .unwrap()
            .fit_segment(&seg)
            .unwrap();
        assert!(fit.rms_error > 10.0 * free.rms_error.max(1e-9));
    }

    #[test]
    fn zero_current_is_unidentifiable() {
        let c = OcvCurve::default_nmc();
        let v = c.ocv_of_soc(0.5).unwrap();
        let seg = PulseSegment::new(0.5, vec![0.0, 1.0, 2.0], vec![0.0; 3], vec![v; 3]).unwrap();
        let id = Identifier::new(&c, 4.85, 1.0, GaConfig::default()).unwrap();
        assert!(matches!(id.fit_segment(&seg), Err(Error::Unidentifiable { .. })));
    }

    #[test]
    fn table_assembly_rules() {
        let (p, c) = setup();
        let cfg = GaConfig {
            generations: 40,
            ..Default::default()
        };
        let id = Identifier::new(&c, 4.85, 1.0, cfg).unwrap();
        let seg = |s| synth_segment(&p, &c, s, &HppcPulse::default()).unwrap();
        let (single, fits) = id.fit_tables(&[seg(0.6)]).unwrap();
        assert_eq!(single.soc_breakpoints(), &[0.6]);
        assert_eq!(single.rc_at(0.1), single.rc_at(0.9));
        assert_eq!(fits.len(), 1);
        assert!(id.fit_tables(&[seg(0.6), seg(0.4)]).is_err());
        assert!(id.fit_tables(&[seg(0.6), seg(0.6)]).is_err());
        assert!(id.fit_tables(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = GaConfig::default();
        assert!(ok.validate().is_ok());
        assert!(GaConfig { population: 3, ..ok }.validate().is_err());
        assert!(GaConfig { crossover_rate: 1.5, ..ok }.validate().is_err());
        let mut b = ok;
        b.bounds.lo.c1 = 2e5;
        assert!(b.validate().is_err());
    }

    #[test]
    fn trailing_rest() {
        let seg = PulseSegment::new(
            0.5,
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![1.0, 1.0, 0.0, 0.0, 0.0],
            vec![3.7; 5],
        )
        .unwrap();
        assert_eq!(seg.trailing_rest(), 2.0);
    }

    #[test]
    fn hppc_csv_round_trip() {
        let (p, c) = setup();
        let pulse = HppcPulse {
            rest_s: 20.0,
            pulse_s: 5.0,
            ..Default::default()
        };
        let segs: Vec<_> = [0.3, 0.6]
            .iter()
            .map(|s| synth_segment(&p, &c, *s, &pulse).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hppc.csv");
        save_hppc_csv(&segs, &path).unwrap();
        assert_eq!(load_hppc_csv(&path).unwrap(), segs);
    }
}
