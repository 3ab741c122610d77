//! Acceptance suite. Every criterion prints one `PASS` or `FAIL` line and
//! then asserts, so `cargo test --test acceptance -- --nocapture` doubles as
//! a report.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use sbos::cli::{to_csv, ResultRow};
use sbos::harness::{run_experiment, ExperimentPlan, PfsEstimate, Policy};
use sbos::inner::{run_sgd_phase, FeasibleBox};
use sbos::problems::dosage::DosageInstance;
use sbos::problems::newsvendor::{empirical_profit, poisson_optimum, saa_order_quantity, NewsvendorInstance};
use sbos::problems::queueing::{audit_event_log, QueueingInstance};
use sbos::problems::synthetic::QuadraticSystem;
use sbos::problems::{GradientSample, SimulationProblem};
use sbos::rng::{derive_stream, SimRng};
use sbos::selection::{phase_count, run_seo_sgd, SeoConfig};

// Criteria run one at a time so their wall-clock limits measure only themselves.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, title: &str, ok: bool, detail: &str) {
    println!("criterion {id} {}: {title}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn plan(text: &str) -> ExperimentPlan {
    toml::from_str(text).expect("plan literal parses")
}

fn pcs_list(e: &[PfsEstimate]) -> String {
    e.iter().map(|e| format!("{}:{:.3}", e.budget, e.pcs)).collect::<Vec<_>>().join(" ")
}

/// Noiseless increasing objective; the suite only inspects the bookkeeping.
/// (A bowl would drive iterates into subnormal floats and slow every step.)
struct Ramp;

impl SimulationProblem for Ramp {
    fn feasible(&self) -> FeasibleBox {
        FeasibleBox::new(-1.0, 1.0).unwrap()
    }
    fn evals_per_sample(&self) -> u64 {
        1
    }
    fn sample(&self, x: f64, _rng: &mut SimRng) -> sbos::Result<GradientSample> {
        Ok(GradientSample {
            value: x,
            gradient: 1.0,
            evaluations: 1,
        })
    }
    fn evaluate(&self, x: f64, _rng: &mut SimRng) -> sbos::Result<f64> {
        Ok(x)
    }
}

#[test]
fn criterion_1_budget_and_halving() {
    let _g = serial();
    let clock = Instant::now();
    let mut draws = derive_stream(1, 0, "acceptance/budgets");
    let problems: Vec<Ramp> = (0..256).map(|_| Ramp).collect();
    let mut failures = Vec::new();
    let (mut runs, mut rejected) = (0, 0);
    for k in 2..=256usize {
        let phases = phase_count(k);
        for _ in 0..100 {
            let total: u64 = draws.random_range(1..=(4 * phases * k) as u64);
            let cfg = SeoConfig::new(total, 1.0, 0.5);
            let result = run_seo_sgd(&problems[..k], &cfg, &mut draws);
            if total < (phases * k) as u64 {
                // the first phase cannot give every system a sample
                match result {
                    Err(sbos::Error::Config(_)) => rejected += 1,
                    other => failures.push(format!("K={k} T={total}: expected config error, got {other:?}")),
                }
                continue;
            }
            let out = match result {
                Ok(o) => o,
                Err(e) => {
                    failures.push(format!("K={k} T={total}: {e}"));
                    continue;
                }
            };
            runs += 1;
            let mut active = k;
            let mut spent = 0;
            for (l, rec) in out.trace.iter().enumerate() {
                let expected = total / (phases * active) as u64;
                if rec.phase != l + 1 || rec.active.len() != active || rec.phase_budget != expected {
                    failures.push(format!(
                        "K={k} T={total} phase {}: |A|={} T_l={}, expected |A|={active} T_l={expected}",
                        l + 1,
                        rec.active.len(),
                        rec.phase_budget
                    ));
                }
                if rec.eliminated.len() != active - active / 2 {
                    failures.push(format!("K={k} T={total}: phase {} eliminated {}", l + 1, rec.eliminated.len()));
                }
                spent += expected * active as u64;
                active /= 2;
            }
            if out.trace.len() != phases || active != 1 {
                failures.push(format!("K={k} T={total}: {} phases ending with {active}", out.trace.len()));
            }
            if out.evaluations_used > total || out.evaluations_used != spent {
                failures.push(format!("K={k} T={total}: used {} of {total}, schedule {spent}", out.evaluations_used));
            }
        }
    }
    let elapsed = clock.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(1);
    let detail = format!(
        "{runs} runs checked, {rejected} undersized budgets rejected, {} mismatches, {:.3}s{}",
        failures.len(),
        elapsed.as_secs_f64(),
        failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
    );
    report(1, "phase budgets, halving and budget cap for K in 2..=256", ok, &detail);
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn criterion_2_sgd_value_rate() {
    let _g = serial();
    let clock = Instant::now();
    let problem = QuadraticSystem {
        optimum_value: 0.0,
        optimum_point: 0.0,
        curvature: 1.0,
        noise_sd: 1.0,
        feasible: FeasibleBox::new(-2.0, 2.0).unwrap(),
    };
    let horizons = [100u64, 1000, 10000];
    let mut medians = Vec::new();
    for &t in &horizons {
        let errors: Vec<f64> = (0..200)
            .map(|seed| {
                let mut rng = derive_stream(seed, t, "acceptance/sgd-rate");
                let phase = run_sgd_phase(&problem, -1.0, t, 1.0, &mut rng).unwrap();
                (phase.estimate.v_hat - problem.optimum_value).abs()
            })
            .collect();
        medians.push(median(errors));
    }
    let xs: Vec<f64> = horizons.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let s = slope(&xs, &ys);
    let elapsed = clock.elapsed();
    let ok = (-0.65..=-0.35).contains(&s) && elapsed < Duration::from_secs(30);
    let detail = format!(
        "median errors {:?}, log-log slope {s:.3}, {:.2}s",
        medians.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(),
        elapsed.as_secs_f64()
    );
    report(2, "value estimator error shrinks like 1/sqrt(T)", ok, &detail);
}

/// `max_q p E[min(q, D)] - c q` for Poisson demand by scanning every q up
/// to `rate + 10 sqrt(rate)`, with `E[min(q, D)] = sum_{k<q} P(D > k)`.
fn newsvendor_brute_force(price: f64, cost: f64, rate: f64) -> (u64, f64) {
    let q_max = (rate + 10.0 * rate.sqrt()).ceil() as u64;
    let mut pmf = (-rate).exp();
    let mut cdf = 0.0;
    let mut sales = 0.0;
    let mut best = (0u64, 0.0f64);
    for q in 1..=q_max {
        let k = q - 1;
        if k > 0 {
            pmf *= rate / k as f64;
        }
        cdf += pmf;
        sales += 1.0 - cdf;
        let value = price * sales - cost * q as f64;
        if value > best.1 {
            best = (q, value);
        }
    }
    best
}

#[test]
fn criterion_3_oracles() {
    let _g = serial();
    let clock = Instant::now();
    let mut notes = Vec::new();

    // dosage: vertex formula against a 1e-3 grid over the dose range
    let mut worst_dosage = 0.0f64;
    let mut rng = derive_stream(3, 0, "acceptance/dosage-instances");
    for _ in 0..100 {
        let inst = DosageInstance::generate(16, &mut rng).unwrap();
        for sys in inst.systems().unwrap() {
            let (lo, hi) = inst.dose_range;
            let steps = ((hi - lo) / 1e-3).round() as usize;
            let grid_best = (0..=steps).map(|j| sys.mean(lo + j as f64 * 1e-3)).fold(f64::MIN, f64::max);
            worst_dosage = worst_dosage.max((sys.true_value().unwrap() - grid_best).abs());
        }
    }
    let dosage_ok = worst_dosage <= 1e-6;
    notes.push(format!("dosage max |diff| {worst_dosage:.2e}"));

    // newsvendor: Poisson optimum against brute force, i = 1..16
    let inst = NewsvendorInstance::standard(16).unwrap();
    let mut news_ok = true;
    let mut worst_news = 0.0f64;
    for p in &inst.products {
        let (q, v) = poisson_optimum(p.price, p.cost, p.rate);
        let (bq, bv) = newsvendor_brute_force(p.price, p.cost, p.rate);
        worst_news = worst_news.max((v - bv).abs());
        if q != bq || (v - bv).abs() >= 1e-10 {
            news_ok = false;
            notes.push(format!("rate {}: q* {q} vs {bq}, v {v} vs {bv}", p.rate));
        }
    }
    notes.push(format!("newsvendor max |dv| {worst_news:.2e}"));

    // SAA: order-statistic solution against every candidate order quantity.
    // Integer prices and demands make n times the empirical profit an exact
    // integer, so optimality is checked without rounding.
    let mut rng = derive_stream(3, 1, "acceptance/saa-samples");
    let mut saa_mismatch = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=12usize);
        let demand: Vec<i64> = (0..n).map(|_| rng.random_range(0..=40i64)).collect();
        let cost = rng.random_range(1..=9i64);
        let price = cost + rng.random_range(1..=9i64);
        let scaled = |q: i64| price * demand.iter().map(|&x| q.min(x)).sum::<i64>() - cost * q * n as i64;
        let draws: Vec<f64> = demand.iter().map(|&x| x as f64).collect();
        let (q, v) = saa_order_quantity(price as f64, cost as f64, &draws).unwrap();
        let exhaustive = (0..=40i64).map(scaled).max().unwrap();
        let float_best = (0..=40)
            .map(|q| empirical_profit(price as f64, cost as f64, q as f64, &draws))
            .fold(f64::MIN, f64::max);
        let exact = q.fract() == 0.0 && scaled(q as i64) == exhaustive;
        if !exact || (v - float_best).abs() > 1e-12 * float_best.abs().max(1.0) {
            saa_mismatch += 1;
            if saa_mismatch == 1 {
                notes.push(format!("SAA {demand:?} p={price} c={cost}: q={q} v={v}, best {exhaustive}/{n}"));
            }
        }
    }
    notes.push(format!("SAA mismatches {saa_mismatch}/1000"));

    let elapsed = clock.elapsed();
    let ok = dosage_ok && news_ok && saa_mismatch == 0 && elapsed < Duration::from_secs(10);
    notes.push(format!("{:.2}s", elapsed.as_secs_f64()));
    report(3, "closed-form oracles match brute force", ok, &notes.join("; "));
}

#[test]
fn criterion_4_queueing_statistics() {
    let _g = serial();
    let clock = Instant::now();
    let inst = QueueingInstance::standard(16);
    let reps = 10_000u64;
    let counts: Vec<f64> = (0..reps)
        .map(|r| {
            let mut rng = derive_stream(4, r, "acceptance/entrants");
            inst.simulate(8, 0.0, &mut rng).unwrap().entrants as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / reps as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    let target = inst.arrival_scale * inst.horizon / 6.0;
    let mean_ok = (mean - target).abs() <= 3.0 * se;

    let closed_ok = (0..reps).all(|r| {
        let mut rng = derive_stream(4, r, "acceptance/closed");
        inst.simulate(8, 1.0, &mut rng).unwrap().entrants == 0
    });

    let mut small = QueueingInstance::standard(4);
    small.horizon = 200.0;
    let mut audit_failures = Vec::new();
    for r in 0..100u64 {
        let mut rng = derive_stream(4, r, "acceptance/audit");
        let x = rng.random_range(1..=4usize);
        let p = rng.random_range(0.0..0.8);
        let (out, log) = small.simulate_logged(x, p, &mut rng).unwrap();
        if let Err(e) = audit_event_log(&log, &out) {
            audit_failures.push(format!("run {r}: {e}"));
        } else if out.entrants != out.completed + out.abandoned {
            audit_failures.push(format!("run {r}: {} entrants, {} done, {} left", out.entrants, out.completed, out.abandoned));
        }
    }
    let elapsed = clock.elapsed();
    let ok = mean_ok && closed_ok && audit_failures.is_empty() && elapsed < Duration::from_secs(120);
    let detail = format!(
        "mean entrants {mean:.2} vs {target:.2} (se {se:.3}, {:.1} se); p=1 empty: {closed_ok}; audit failures {}{}; {:.1}s",
        (mean - target).abs() / se,
        audit_failures.len(),
        audit_failures.first().map(|f| format!(" ({f})")).unwrap_or_default(),
        elapsed.as_secs_f64()
    );
    report(4, "queueing arrivals, closed shop and event-log conservation", ok, &detail);
}

// Pilot: instance_seed 20240601, base_seed 1, R = 500 gave SEO-SGD PCS 500/500
// at T = 256000. Wilson lower bound at z = 3: 500 / 509 = 0.982.
const DOSAGE_LARGEST_BUDGET_FLOOR: f64 = 0.98;

#[test]
fn criterion_5_dosage_seo_beats_uniform() {
    let _g = serial();
    let clock = Instant::now();
    let make = |policy: &str| {
        plan(&format!(
            r#"
policy = "{policy}"
budgets = [8000, 16000, 32000, 64000, 128000, 256000]
replications = 500
base_seed = 2024
instance_seed = 20240601
[instance]
family = "dosage"
systems = 16
"#
        ))
    };
    let seo = run_experiment(&make("seo-sgd"), 0).unwrap().estimates;
    let uni = run_experiment(&make("uniform-sgd"), 0).unwrap().estimates;
    let mut within = true;
    let mut strictly = 0;
    for (s, u) in seo.iter().zip(&uni) {
        let combined = (s.stderr.powi(2) + u.stderr.powi(2)).sqrt();
        within &= s.pcs >= u.pcs - 2.0 * combined;
        strictly += usize::from(s.pcs > u.pcs);
    }
    let largest = seo.last().unwrap().pcs;
    let elapsed = clock.elapsed();
    let ok = within && strictly >= 3 && largest >= DOSAGE_LARGEST_BUDGET_FLOOR && elapsed < Duration::from_secs(600);
    let detail = format!(
        "seo [{}] uniform [{}]; no point below 2 se: {within}; strictly greater at {strictly}/6; largest {largest:.3} vs floor {DOSAGE_LARGEST_BUDGET_FLOOR}; {:.1}s",
        pcs_list(&seo),
        pcs_list(&uni),
        elapsed.as_secs_f64()
    );
    report(5, "dosage K=16, SEO dominates uniform allocation", ok, &detail);
}

// Pilot: base_seed 12, R = 1000, same instance: SEO-SGD PCS 1000/1000 at
// T = 2000, 4000 and 8000. Wilson lower bound at z = 3: 1000 / 1009 = 0.991.
const GRID_TRAP_SEO_FLOOR: f64 = 0.99;

#[test]
fn criterion_6_grid_trap() {
    let _g = serial();
    let clock = Instant::now();
    let make = |policy: &str| {
        plan(&format!(
            r#"
policy = "{policy}"
budgets = [4000]
replications = 1000
base_seed = 606
[instance]
family = "grid-trap"
systems = 4
grid = [0.0, 0.25, 0.5, 0.75, 1.0]
lower = 0.0
upper = 1.0
slope = 4.0
noise_sd = 1.0
"#
        ))
    };
    let ocba = run_experiment(&make("ocba"), 0).unwrap().estimates[0].pcs;
    let seo = run_experiment(&make("seo-sgd"), 0).unwrap().estimates[0].pcs;
    let elapsed = clock.elapsed();
    let ok = ocba <= 0.55 && seo >= 0.9 && seo >= GRID_TRAP_SEO_FLOOR && elapsed < Duration::from_secs(300);
    let detail = format!(
        "ocba {ocba:.3} (limit 0.55), seo-sgd {seo:.3} (floor {GRID_TRAP_SEO_FLOOR}); {:.1}s",
        elapsed.as_secs_f64()
    );
    report(6, "discretization trap defeats OCBA but not SEO", ok, &detail);
}

#[test]
fn criterion_7_pfs_decay() {
    let _g = serial();
    let clock = Instant::now();
    let p = plan(
        r#"
policy = "seo-sgd"
budgets = [200, 400, 800]
replications = 2000
base_seed = 707
[instance]
family = "synthetic"
gaps = [0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6]
noise_sd = 1.0
"#,
    );
    let est = run_experiment(&p, 0).unwrap().estimates;
    let ok_pairs = est.windows(2).all(|w| {
        let combined = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[1].pfs() <= w[0].pfs() + 2.0 * combined
    });
    let elapsed = clock.elapsed();
    let ok = ok_pairs && elapsed < Duration::from_secs(300);
    let detail = format!(
        "pfs {}; {:.1}s",
        est.iter().map(|e| format!("{}:{:.4}", e.budget, e.pfs())).collect::<Vec<_>>().join(" "),
        elapsed.as_secs_f64()
    );
    report(7, "PFS does not grow across budget doublings", ok, &detail);
}

fn csv_without_wall_time(p: &ExperimentPlan, threads: usize) -> Vec<u8> {
    let report = run_experiment(p, threads).unwrap();
    let rows: Vec<ResultRow> = report
        .estimates
        .iter()
        .map(|e| ResultRow {
            wall_time_s: 0.0,
            ..ResultRow::from_estimate("determinism", p, e)
        })
        .collect();
    to_csv(&rows).unwrap()
}

#[test]
fn criterion_8_thread_count_invariance() {
    let _g = serial();
    let plans = [
        r#"
policy = "seo-sgd"
budgets = [2000, 4000]
replications = 64
base_seed = 81
[instance]
family = "dosage"
systems = 8
"#,
        r#"
policy = "ocba"
budgets = [2000]
replications = 64
base_seed = 82
regenerate_instance = true
[instance]
family = "dosage"
systems = 4
"#,
        r#"
policy = "seo-saa"
budgets = [500, 1000]
replications = 64
base_seed = 83
[instance]
family = "newsvendor"
systems = 16
"#,
        r#"
policy = "uniform-saa"
budgets = [500]
replications = 64
base_seed = 84
[instance]
family = "newsvendor"
systems = 8
"#,
        r#"
policy = "uniform-sgd"
budgets = [100, 200]
replications = 64
base_seed = 85
[instance]
family = "synthetic"
gaps = [0.2, 0.4, 0.6]
noise_sd = 1.0
"#,
        r#"
policy = "ocba"
budgets = [400]
replications = 64
base_seed = 86
[instance]
family = "grid-trap"
systems = 3
grid = [0.0, 0.5, 1.0]
lower = 0.0
upper = 1.0
slope = 2.0
noise_sd = 1.0
"#,
        r#"
policy = "seo-sgd"
budgets = [16]
replications = 8
base_seed = 87
[instance]
family = "queueing"
systems = 4
reference_best = 2
"#,
    ];
    let mut differing = Vec::new();
    for text in plans {
        let p = plan(text);
        if csv_without_wall_time(&p, 1) != csv_without_wall_time(&p, 8) {
            differing.push(format!("{} on {}", p.policy, p.instance.family()));
        }
    }
    let ok = differing.is_empty();
    let detail = format!("{} plans compared serial vs 8 threads, differing: {differing:?}", plans.len());
    report(8, "results independent of thread count", ok, &detail);
}

#[test]
fn policy_names_round_trip() {
    for p in Policy::ALL {
        assert_eq!(p.name().parse::<Policy>().unwrap(), p);
    }
}
