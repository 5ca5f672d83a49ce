//! Acceptance criteria, one line each. Runs as a plain binary so the
//! verdicts are printed even when every criterion passes.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use soc_uncertainty::ecm::EcmParams;
use soc_uncertainty::estimator::{
    optimal_gain, propagate_uncertainty, rest_fixed_point, BiasRestMode, StepRecord,
};
use soc_uncertainty::harness::{self, Experiment, RunConfig};
use soc_uncertainty::ident::{GaConfig, HppcPulse, Identifier};
use soc_uncertainty::ocv::OcvCurve;
use soc_uncertainty::profiles::{self, RegdSpec};
use soc_uncertainty::sensors::{ErrorParams, SocUnit, VoltageErrorModel};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

/// SOC change per amp over one 1 s step of the default cell.
const K: f64 = 1.0 / (3600.0 * 4.85);

fn rest_experiment() -> Verdict {
    let cfg = RunConfig::default();
    let start = Instant::now();
    let trace = harness::run_single(&cfg).expect("rest run");
    let elapsed = start.elapsed();
    let r = &trace.records;

    let soc_end = r[2999].soc_true;
    let a = (soc_end - (1.0 - 2500.0 / 3600.0)).abs() <= 1e-9;

    let mut prev = cfg.initial_u;
    let mut b = true;
    for rec in &r[..2500] {
        b &= rec.u > prev;
        prev = rec.u;
    }

    let (u_2500, u_3000) = (r[2499].u, r[2999].u);
    // the last rest step saw t_R = 499 s with the gain evaluated at the prior estimate
    let curve = OcvCurve::default_nmc();
    let tau = EcmParams::default_nmc().rc_at(r[2998].soc_hat).tau();
    let v = VoltageErrorModel::new(ErrorParams::default(), SocUnit::Percent)
        .total(curve.linear_slope(), tau, 499.0)
        .unwrap();
    let floor = rest_fixed_point(v, K * K * ErrorParams::default().alpha).sqrt();
    let c = u_3000 < 0.2 * u_2500 && u_3000 > floor;
    let fast = within(elapsed, 1.0);
    verdict(
        a && b && c && fast,
        format!(
            "(a) SOC_end {soc_end:.12} {}; (b) u increasing over discharge {}; \
             (c) u(3000)/u(2500) = {:.4}, u(3000) = {u_3000:.3e} > floor {floor:.3e} {}; {:.2?}",
            ok(a),
            ok(b),
            u_3000 / u_2500,
            ok(c),
            elapsed
        ),
    )
}

fn coverage(mode: BiasRestMode) -> (f64, f64, Duration) {
    let mut cfg = RunConfig::default();
    cfg.monte_carlo_n = 1000;
    cfg.bias_rest_mode = mode;
    let start = Instant::now();
    let rep = harness::run_monte_carlo(&cfg).expect("monte carlo");
    let f = *rep.final_step();
    (f.coverage, f.err_mean, start.elapsed())
}

fn ci_coverage() -> Verdict {
    let (cov, err_mean, elapsed) = coverage(BiasRestMode::Literal);
    let pass = (0.92..=0.98).contains(&cov) && within(elapsed, 30.0);
    verdict(
        pass,
        format!(
            "literal rest bias: final coverage {cov:.3} (need [0.92, 0.98]), \
             mean error {err_mean:.3e}; {elapsed:.2?}"
        ),
    )
}

fn variance_exactness() -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.monte_carlo_n = 10_000;
    let start = Instant::now();
    let rep = harness::run_monte_carlo(&cfg).expect("monte carlo");
    let elapsed = start.elapsed();
    let f = rep.final_step();
    let rel = (f.debiased_std - f.u_mean).abs() / f.u_mean;
    verdict(
        rel < 0.05 && within(elapsed, 300.0),
        format!(
            "N = 10000: empirical std {:.4e} vs analytic u {:.4e} (rel diff {:.2}%, sampling se {:.2}%); {elapsed:.2?}",
            f.debiased_std,
            f.u_mean,
            100.0 * rel,
            100.0 / (2.0f64 * 10_000.0).sqrt()
        ),
    )
}

fn gain_optimality() -> Verdict {
    let model = VoltageErrorModel::new(ErrorParams::default(), SocUnit::Percent);
    let c = K * K * ErrorParams::default().alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let u_sq = 10f64.powf(rng.random_range(-12.0..-3.0));
        let slope = rng.random_range(0.2..5.0);
        let tau = rng.random_range(5.0..1000.0);
        let t_r = rng.random_range(1.0..3600.0);
        let v = model.total(slope, tau, t_r).unwrap();
        let closed = propagate_uncertainty(u_sq, optimal_gain(u_sq, v), c, v);
        let grid = (0..=100)
            .map(|j| propagate_uncertainty(u_sq, j as f64 / 100.0, c, v))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(closed - grid);
    }
    verdict(
        worst <= 1e-15,
        format!("1000 tuples: max(closed form - grid optimum) = {worst:.3e} (limit 1e-15)"),
    )
}

fn per_signal_spread(max_u: &[f64]) -> f64 {
    let hi = max_u.iter().copied().fold(f64::MIN, f64::max);
    let lo = max_u.iter().copied().fold(f64::MAX, f64::min);
    (hi - lo) / lo
}

fn frequency_regulation() -> Verdict {
    let cfg = RunConfig::preset(Experiment::Freq);
    let rests = [0.0, 2.0, 5.0, 10.0, 30.0];
    let start = Instant::now();
    let sweep = harness::run_rest_sweep(&cfg, &rests).expect("sweep");

    let zero = &sweep.entries[0];
    let spread = per_signal_spread(&zero.signal_max_u[1..]);
    let floor = zero.signal_min_u.iter().copied().fold(f64::MAX, f64::min);
    let a = spread < 0.05 && floor > 0.0;

    let starts: Vec<f64> = sweep.entries.iter().map(|e| e.start_u()).collect();
    let b = starts.windows(2).all(|w| w[1] < w[0]);

    let trace = harness::run_single(&cfg).expect("freq run");
    let (n_dyn, sum) = dynamic_bias(&trace.records);
    let expect = n_dyn as f64 * K * cfg.errors.mu_drift;
    let rel = (sum - expect).abs() / expect;
    let c = rel <= n_dyn as f64 * f64::EPSILON;
    verdict(
        a && b && c,
        format!(
            "(a) signals 2-5 max-u spread {:.3}%, min u {floor:.3e} {}; \
             (b) start-of-final-signal u over rest {rests:?}: {} {}; \
             (c) {n_dyn} dynamic steps, summed bias increments rel err {rel:.1e} {}; {:.2?}",
            100.0 * spread,
            ok(a),
            starts.iter().map(|u| format!("{u:.3e}")).collect::<Vec<_>>().join(" > "),
            ok(b),
            ok(c),
            start.elapsed()
        ),
    )
}

/// Count of nonzero-current steps and the sum of bias changes over them.
fn dynamic_bias(records: &[StepRecord]) -> (usize, f64) {
    let mut prev = 0.0;
    let (mut n, mut sum) = (0, 0.0);
    for r in records {
        if r.i_true != 0.0 {
            n += 1;
            sum += r.bias - prev;
        }
        prev = r.bias;
    }
    (n, sum)
}

fn ga_identifiability() -> Verdict {
    let params = EcmParams::default_nmc();
    let curve = OcvCurve::default_nmc();
    let socs: Vec<f64> = (2..=10).map(|k| k as f64 / 10.0).collect();
    let segments: Vec<_> = socs
        .iter()
        .map(|&s| soc_uncertainty::ident::synth_segment(&params, &curve, s, &HppcPulse::default()).unwrap())
        .collect();
    let start = Instant::now();
    let id = Identifier::new(&curve, 4.85, 1.0, GaConfig::default()).unwrap();
    let (_, fits) = id.fit_tables(&segments).expect("fit");
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    for f in &fits {
        let t = params.rc_at(f.soc_nominal);
        for (a, b) in [(f.rc.r0, t.r0), (f.rc.r1, t.r1), (f.rc.c1, t.c1)] {
            worst = worst.max(((a - b) / b).abs());
        }
    }
    verdict(
        worst < 0.05 && within(elapsed, 120.0),
        format!("9 segments: worst parameter error {:.3}% (limit 5%); {elapsed:.2?}", 100.0 * worst),
    )
}

fn quiet(mut cfg: RunConfig) -> RunConfig {
    cfg.errors = ErrorParams {
        mu_drift: 0.0,
        alpha: 1e-20,
        beta: 0.0,
        lambda1: 1e-20,
        lambda2: 1e-20,
    };
    cfg
}

fn noiseless_tracking() -> Verdict {
    let model = RunConfig::default().load_model().unwrap();
    let mut cases: Vec<(String, RunConfig, profiles::CurrentProfile)> = Vec::new();
    let rest = quiet(RunConfig::default());
    cases.push(("rest".into(), rest.clone(), rest.profile().unwrap()));
    let freq = quiet(RunConfig::preset(Experiment::Freq));
    cases.push(("freq".into(), freq.clone(), freq.profile().unwrap()));
    for r in [2.0, 30.0] {
        cases.push((format!("freq rest {r}"), freq.clone(), freq.freq_profile(r).unwrap()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..6 {
        let c_rate = rng.random_range(0.1..2.0);
        let on = rng.random_range(1..=1500) as f64;
        let off = rng.random_range(0..=600) as f64;
        cases.push((
            format!("discharge {c_rate:.2}C {on}s + {off}s"),
            rest.clone(),
            profiles::constant_discharge_rest(c_rate, on, off, 1.0, 4.85).unwrap(),
        ));
        let spec = RegdSpec {
            seed: rng.random(),
            max_c_rate: rng.random_range(0.0..2.0),
            ..Default::default()
        };
        cases.push((
            format!("regd seed {}", spec.seed),
            freq.clone(),
            profiles::synth_regd(&spec).unwrap(),
        ));
    }
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (name, cfg, profile) in &cases {
        match harness::simulate(cfg, &model, profile, cfg.seed, 0) {
            Ok((recs, _)) => {
                for r in &recs {
                    worst = worst.max((r.soc_hat - r.soc_true).abs());
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    verdict(
        worst < 1e-6 && failures.is_empty(),
        format!(
            "{} profiles: max |SOC_hat - SOC| = {worst:.2e} (limit 1e-6){}",
            cases.len(),
            if failures.is_empty() { String::new() } else { format!("; errors: {failures:?}") }
        ),
    )
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "monte_carlo_n = 200\nhppc_socs = 0.4, 0.9\nhppc_noise_v = 0.001\nga_generations = 60\n",
    )
    .unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for (sub, exp) in [
        ("simulate", "rest"),
        ("simulate", "freq"),
        ("monte-carlo", "rest"),
        ("rest-sweep", "freq"),
        ("fit-params", "rest"),
        ("gen-profile", "freq"),
    ] {
        let outs: Vec<Vec<u8>> = (0..2)
            .map(|j| {
                let out = dir.path().join(format!("{sub}-{exp}-{j}.csv"));
                run_cli(sub, exp, &cfg_path, &out);
                std::fs::read(&out).unwrap_or_default()
            })
            .collect();
        let same = !outs[0].is_empty() && outs[0] == outs[1];
        pass &= same;
        notes.push(format!("{sub}/{exp} {}", if same { "identical" } else { "DIFFER" }));
    }
    verdict(pass, notes.join(", "))
}

fn run_cli(sub: &str, exp: &str, cfg: &Path, out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_soc-uq"))
        .args([sub, "--experiment", exp, "--seed", "11", "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .status()
        .expect("spawn soc-uq");
    assert!(status.success(), "{sub} exited with {status}");
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 rest-experiment shape", rest_experiment),
        ("2 CI coverage", ci_coverage),
        ("3 variance propagation", variance_exactness),
        ("4 gain optimality", gain_optimality),
        ("5 frequency regulation", frequency_regulation),
        ("6 GA identifiability", ga_identifiability),
        ("7 noiseless tracking", noiseless_tracking),
        ("8 determinism", cli_determinism),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let v = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|p| verdict(false, format!("panicked: {}", panic_text(&p))));
        println!("criterion {name:<26} {}  {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(name);
        }
    }

    // Not a criterion: the same coverage test with the bias relaxed in
    // proportion to the voltage-update gain instead of the literal shrink.
    let (cov, _, elapsed) = coverage(BiasRestMode::ProportionalDecay);
    println!(
        "supplementary proportional-decay bias: final coverage {cov:.3} {} ({elapsed:.2?})",
        if (0.92..=0.98).contains(&cov) { "inside [0.92, 0.98]" } else { "outside [0.92, 0.98]" }
    );

    if failed.is_empty() {
        println!("acceptance: all 8 criteria pass");
    } else {
        println!("acceptance: {} of 8 criteria fail: {}", failed.len(), failed.join("; "));
        std::process::exit(1);
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}
