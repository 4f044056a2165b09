//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskalloc_cli::delay::{poa_in_mode, solve_in_mode, thresholds_in_mode, DelayMode};
use taskalloc_cli::ScenarioFile;
use taskalloc_core::{
    activation_thresholds, asymptotic_poa, default_grid, poa_at, poa_sweep, simulate, solve,
    solve_nep, solve_optimal, validate, worst_case_poa, AllocationKind, CandidateLocation, Horizon,
    NumericConfig, Scenario, ServerSpec, SimulationConfig,
};
use taskalloc_oracle::{best_response_nep, brute_force_optimal, mean_latency, OracleConfig};

const CORPUS_SEED: u64 = 7;
const CORPUS_SIZE: usize = 100;
const LOADS_PER_SCENARIO: usize = 5;
const CONVEXITY_TOL: f64 = 1e-9;
const SEGMENT_SAMPLES: usize = 41;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn scenario_file(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    ScenarioFile::read(&path).unwrap().to_scenario().unwrap()
}

fn mm1(servers: &[(f64, f64)]) -> Scenario {
    Scenario::with_servers(
        servers
            .iter()
            .map(|&(d_ms, mu)| ServerSpec::mm1(d_ms / 1000.0, mu).unwrap())
            .collect(),
    )
    .unwrap()
}

struct Case {
    sc: Scenario,
    loads: Vec<f64>,
}

fn corpus() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    (0..CORPUS_SIZE)
        .map(|_| {
            let n = rng.random_range(2..=4);
            let servers = (0..n)
                .map(|_| {
                    let d = rng.random_range(0.0..=200.0) / 1000.0;
                    let mu = rng.random_range(1.0..=300.0);
                    if rng.random_bool(0.5) {
                        ServerSpec::mm1(d, mu).unwrap()
                    } else {
                        ServerSpec::mg1(d, mu, rng.random_range(0.0..=3.0)).unwrap()
                    }
                })
                .collect();
            let sc = Scenario::with_servers(servers).unwrap();
            let max = sc.max_load();
            let loads = (0..LOADS_PER_SCENARIO)
                .map(|_| rng.random_range(1e-3..1.0) * max)
                .collect();
            Case { sc, loads }
        })
        .collect()
}

/// Open load intervals between consecutive equilibrium activation thresholds,
/// the last one running to `rho_end` of capacity.
fn nep_segments(sc: &Scenario, rho_end: f64) -> Vec<(f64, f64)> {
    let table = activation_thresholds(sc, AllocationKind::Nep);
    let end = rho_end * sc.capacity();
    let mut bounds: Vec<f64> = table.loads.iter().copied().filter(|&l| l < end).collect();
    bounds.push(end);
    bounds
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Violation {
    segment: usize,
    last_segment: bool,
    load: f64,
    excess: f64,
}

/// Midpoint-convexity violations of `eta` on evenly spaced interior triples of
/// each segment.
fn convexity_violations<F>(segments: &[(f64, f64)], mut eta: F) -> Vec<Violation>
where
    F: FnMut(f64) -> f64,
{
    let mut found = Vec::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        let h = (b - a) / (SEGMENT_SAMPLES + 1) as f64;
        let values: Vec<(f64, f64)> = (1..=SEGMENT_SAMPLES)
            .map(|k| {
                let x = a + h * k as f64;
                (x, eta(x))
            })
            .collect();
        for w in values.windows(3) {
            let excess = w[1].1 - 0.5 * (w[0].1 + w[2].1);
            if excess > CONVEXITY_TOL {
                found.push(Violation {
                    segment: s,
                    last_segment: s + 1 == segments.len(),
                    load: w[1].0,
                    excess,
                });
            }
        }
    }
    found
}

fn scenario1_worst_case() -> Outcome {
    let sc = scenario_file("scenario1.toml");
    let wc = worst_case_poa(&sc).unwrap();
    let limit = asymptotic_poa(&sc).unwrap();
    let at_third = matches!(
        wc.max.location,
        CandidateLocation::NepActivation { rank: 3, .. }
    );
    let in_range = (1.05..=1.15).contains(&wc.max.eta);
    let limit_ok = (limit - 1.0256).abs() <= 0.0005;
    outcome(
        at_third && in_range && limit_ok,
        format!(
            "eta_max {:.5} at {:?} (load {:.4}); full-load limit {:.6}",
            wc.max.eta,
            wc.max.location,
            wc.max.load.unwrap_or(f64::NAN),
            limit
        ),
    )
}

fn scenario2_activation_order() -> Outcome {
    let sc = scenario_file("scenario2.toml");
    let opt = activation_thresholds(&sc, AllocationKind::Optimal);
    let nep = activation_thresholds(&sc, AllocationKind::Nep);
    let second = nep.for_server(1).unwrap();
    let all_before = opt.loads.iter().all(|&l| l < second);
    // Left and right of the activation at growing distances.
    let at = poa_at(&sc, second).unwrap().eta;
    let mut monotone = true;
    let mut probes = Vec::new();
    for rel in [1e-6, 1e-4, 1e-3, 1e-2] {
        let left = poa_at(&sc, second * (1.0 - rel)).unwrap().eta;
        let right = poa_at(&sc, second * (1.0 + rel)).unwrap().eta;
        monotone &= left <= at && at <= right;
        probes.push(format!("{left:.6}/{right:.6}"));
    }
    outcome(
        all_before && monotone,
        format!(
            "Opt thresholds {:?} vs NEP server-2 threshold {:.3}; eta at activation {:.6}, left/right {}",
            opt.loads.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>(),
            second,
            at,
            probes.join(" ")
        ),
    )
}

fn scenario3_variance() -> Outcome {
    let mut peaks = Vec::new();
    for cv in [0, 1, 3, 10] {
        let sc = scenario_file(&format!("scenario3-cv{cv}.toml"));
        let curve = poa_sweep(&sc, &default_grid(&sc)).unwrap();
        let peak = *curve.peak().unwrap();
        peaks.push((cv, peak.eta, peak.load));
    }
    let decreasing = peaks.windows(2).all(|w| w[1].1 < w[0].1);
    let moving_left = peaks.windows(2).all(|w| w[1].2 <= w[0].2);
    outcome(
        decreasing && moving_left,
        peaks
            .iter()
            .map(|(cv, eta, load)| format!("cv={cv}: peak {eta:.5} at load {load:.3}"))
            .collect::<Vec<_>>()
            .join("; "),
    )
}

fn scenario4_ignoring_delays() -> Outcome {
    let sc = scenario_file("scenario1.toml");
    let mid = 0.5 * sc.capacity();
    let right = solve_in_mode(&sc, mid, AllocationKind::Optimal, DelayMode::WithDelays).unwrap();
    let wrong =
        solve_in_mode(&sc, mid, AllocationKind::Optimal, DelayMode::IgnoringDelays).unwrap();
    let margin = wrong.evaluated_latency - right.evaluated_latency;

    let solved_on = DelayMode::IgnoringDelays.apply(&sc).unwrap().solve;
    let segments = nep_segments(&solved_on, 0.999);
    let violations = convexity_violations(&segments, |load| {
        poa_in_mode(&sc, load, DelayMode::IgnoringDelays)
            .unwrap()
            .eta
    });
    let thresholds =
        thresholds_in_mode(&sc, AllocationKind::Nep, DelayMode::IgnoringDelays).unwrap();
    outcome(
        margin > 0.0 && !violations.is_empty(),
        format!(
            "U at rho=0.5: {:.6} ignoring vs {:.6} optimal (margin {:.3e}); {} convexity violations over {} segments (NEP thresholds {:?})",
            wrong.evaluated_latency,
            right.evaluated_latency,
            margin,
            violations.len(),
            segments.len(),
            thresholds.loads
        ),
    )
}

fn oracle_equivalence(corpus: &[Case]) -> Outcome {
    let cfg = OracleConfig::default();
    let mut worst_u: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    let mut failures = 0;
    for case in corpus {
        for &load in &case.loads {
            let opt = solve_optimal(&case.sc, load).unwrap();
            let p = brute_force_optimal(&case.sc, load, &cfg).unwrap();
            let u = mean_latency(&case.sc, &p, load).unwrap();
            let du = (opt.mean_latency - u).abs() / u;

            let nep = solve_nep(&case.sc, load).unwrap();
            let br = best_response_nep(&case.sc, load, &cfg).unwrap();
            let dp = nep
                .p
                .iter()
                .zip(&br)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);

            worst_u = worst_u.max(du);
            worst_p = worst_p.max(dp);
            if du > 1e-6 || dp > 1e-5 {
                failures += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!(
            "{} cases; max relative U gap {:.2e} (limit 1e-6), max |p - p_BR| {:.2e} (limit 1e-5), {failures} failures",
            corpus.len() * LOADS_PER_SCENARIO,
            worst_u,
            worst_p
        ),
    )
}

fn theorem_suite(corpus: &[Case]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED + 1);
    let (mut lemma, mut bound, mut ordering, mut corollary) = (0, 0, 0, 0);
    let mut convexity: Vec<(usize, Violation)> = Vec::new();
    for (idx, case) in corpus.iter().enumerate() {
        let sc = &case.sc;
        for &load in &case.loads {
            let opt = solve_optimal(sc, load).unwrap();
            let nep = solve_nep(sc, load).unwrap();
            if opt.multiplier <= nep.multiplier || opt.multiplier.is_nan() {
                lemma += 1;
            }
            if opt.mean_latency > opt.multiplier {
                bound += 1;
            }
        }

        let t_opt = activation_thresholds(sc, AllocationKind::Optimal);
        let t_nep = activation_thresholds(sc, AllocationKind::Nep);
        for (&o, &e) in t_opt.loads.iter().zip(&t_nep.loads) {
            let ok = if o == 0.0 { e == 0.0 } else { e > o };
            if !ok {
                ordering += 1;
            }
        }

        let segments = nep_segments(sc, 0.999);
        for v in convexity_violations(&segments, |load| poa_at(sc, load).unwrap().eta) {
            convexity.push((idx, v));
        }

        let wc = worst_case_poa(sc).unwrap().max.eta;
        for _ in 0..200 {
            let load = rng.random_range(1e-3..1.0) * sc.max_load();
            if wc < poa_at(sc, load).unwrap().eta - 1e-6 {
                corollary += 1;
            }
        }
    }
    let scenarios_hit = {
        let mut ids: Vec<usize> = convexity.iter().map(|(i, _)| *i).collect();
        ids.dedup();
        ids.len()
    };
    let interior = convexity.iter().filter(|(_, v)| !v.last_segment).count();
    let largest = convexity.iter().map(|(_, v)| v.excess).fold(0.0, f64::max);
    let example = convexity
        .iter()
        .max_by(|a, b| a.1.excess.total_cmp(&b.1.excess))
        .map(|(i, v)| {
            format!(
                ", largest in scenario {i} segment {} near load {:.3}",
                v.segment, v.load
            )
        })
        .unwrap_or_default();
    outcome(
        lemma + bound + ordering + corollary + convexity.len() == 0,
        format!(
            "violations: gamma>alpha {lemma}, U<=gamma {bound}, threshold order {ordering}, worst case >= samples {corollary}, \
             segment convexity {} ({} in inner segments, {} scenarios, max excess {:.2e}{})",
            convexity.len(),
            interior,
            scenarios_hit,
            largest,
            example
        ),
    )
}

fn sim_config(load: f64, p: Vec<f64>, jobs: u64) -> SimulationConfig {
    let mut cfg = SimulationConfig::new(load, p);
    cfg.horizon = Horizon::Jobs(jobs);
    cfg.replications = 5;
    cfg.seed = 1;
    cfg
}

fn simulator_fidelity() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mu = 10.0;
    // 5 x 250k jobs with 20% warmup leaves 1e6 measured jobs.
    for rho in [0.3, 0.6, 0.9] {
        let sc = mm1(&[(0.0, mu)]);
        let report = simulate(&sc, &sim_config(rho * mu, vec![1.0], 250_000)).unwrap();
        let exact = 1.0 / (mu - rho * mu);
        let gap = (report.servers[0].mean_sojourn - exact) / exact;
        ok &= gap.abs() <= 0.03;
        notes.push(format!("MM1 rho={rho} {:+.2}%", 100.0 * gap));
    }
    for cv in [0.0, 1.0, 3.0] {
        for rho in [0.5, 0.8] {
            let server = ServerSpec::mg1(0.0, mu, cv).unwrap();
            let exact = server.latency(rho * mu).unwrap();
            let sc = Scenario::with_servers(vec![server]).unwrap();
            let report = simulate(&sc, &sim_config(rho * mu, vec![1.0], 250_000)).unwrap();
            let gap = (report.servers[0].mean_sojourn - exact) / exact;
            ok &= gap.abs() <= 0.05;
            notes.push(format!("MG1 cv={cv} rho={rho} {:+.2}%", 100.0 * gap));
        }
    }

    let sc = scenario_file("scenario0.toml");
    let t = activation_thresholds(&sc, AllocationKind::Nep);
    let cap = sc.capacity();
    let loads = [
        0.5 * t.loads[1],
        0.5 * (t.loads[1] + t.loads[2]),
        0.5 * (t.loads[2] + 0.9 * cap),
    ];
    for load in loads {
        let v = validate(
            &sc,
            load,
            AllocationKind::Nep,
            &sim_config(load, vec![], 400_000),
            0.05,
        )
        .unwrap();
        ok &= v.within_ci;
        notes.push(format!(
            "Scenario 0 load {load:.3}: analytic {:.5} simulated {:.5} ± {:.5}",
            v.analytic,
            v.empirical,
            v.half_width.unwrap_or(f64::NAN)
        ));
    }
    outcome(ok, notes.join("; "))
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn vector_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

fn closed_form_reductions() -> Outcome {
    let cfg = NumericConfig::default();
    let params = [(0.040, 15.0), (0.030, 9.0), (0.150, 20.0)];
    let mut worst: f64 = 0.0;
    let mut checks = 0usize;
    let mut record = |g: f64| {
        worst = worst.max(g);
        checks += 1;
    };

    for (general, special) in [
        (
            params.map(|(d, mu)| ServerSpec::mg1(d, mu, 1.0).unwrap()),
            params.map(|(d, mu)| ServerSpec::mm1(d, mu).unwrap()),
        ),
        (
            params.map(|(d, mu)| ServerSpec::mg1(d, mu, 0.0).unwrap()),
            params.map(|(d, mu)| ServerSpec::md1(d, mu).unwrap()),
        ),
    ] {
        for (g, s) in general.iter().zip(&special) {
            for i in 0..50 {
                let x = 0.98 * s.mu() * (i + 1) as f64 / 50.0;
                record(relative_gap(g.latency(x).unwrap(), s.latency(x).unwrap()));
                record(relative_gap(
                    g.marginal_cost(x).unwrap(),
                    s.marginal_cost(x).unwrap(),
                ));
                let t = s.latency(x).unwrap();
                record(relative_gap(
                    g.invert_latency(t, &cfg).unwrap(),
                    s.invert_latency(t, &cfg).unwrap(),
                ));
                let h = s.marginal_cost(x).unwrap();
                record(relative_gap(
                    g.invert_marginal(h, &cfg).unwrap(),
                    s.invert_marginal(h, &cfg).unwrap(),
                ));
            }
        }
        let sg = Scenario::with_servers(general.to_vec()).unwrap();
        let ss = Scenario::with_servers(special.to_vec()).unwrap();
        for kind in [AllocationKind::Optimal, AllocationKind::Nep] {
            let tg = activation_thresholds(&sg, kind);
            let ts = activation_thresholds(&ss, kind);
            record(if tg.order == ts.order {
                vector_gap(&tg.loads, &ts.loads)
            } else {
                f64::INFINITY
            });
            for i in 0..50 {
                let load = 0.98 * sg.capacity() * (i + 1) as f64 / 50.0;
                let rg = solve(&sg, load, kind).unwrap();
                let rs = solve(&ss, load, kind).unwrap();
                record(vector_gap(&rg.p, &rs.p));
                record(relative_gap(rg.multiplier, rs.multiplier));
                record(relative_gap(rg.mean_latency, rs.mean_latency));
                record(if rg.active_count == rs.active_count {
                    0.0
                } else {
                    f64::INFINITY
                });
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{checks} comparisons, largest relative difference {worst:.2e} (limit 1e-12)"),
    )
}

fn main() -> ExitCode {
    let corpus_start = Instant::now();
    let corpus = corpus();
    let corpus_time = corpus_start.elapsed();

    type Criterion<'a> = (&'a str, Option<Duration>, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (
            "1 Scenario 1 worst case and full-load limit",
            Some(Duration::from_secs(1)),
            Box::new(scenario1_worst_case),
        ),
        (
            "2 Scenario 2 activation order",
            Some(Duration::from_secs(1)),
            Box::new(scenario2_activation_order),
        ),
        (
            "3 Scenario 3 peak vs variance",
            Some(Duration::from_secs(5)),
            Box::new(scenario3_variance),
        ),
        (
            "4 Scenario 4 ignoring delays",
            Some(Duration::from_secs(2)),
            Box::new(scenario4_ignoring_delays),
        ),
        (
            "5 oracle equivalence",
            Some(Duration::from_secs(60)),
            Box::new(|| oracle_equivalence(&corpus)),
        ),
        ("6 theorem suite", None, Box::new(|| theorem_suite(&corpus))),
        (
            "7 simulator fidelity",
            Some(Duration::from_secs(120)),
            Box::new(simulator_fidelity),
        ),
        (
            "8 closed-form reductions",
            None,
            Box::new(closed_form_reductions),
        ),
    ];

    println!();
    println!("acceptance criteria (random corpus: {CORPUS_SIZE} scenarios, seed {CORPUS_SEED}, built in {corpus_time:.2?})");
    let mut failed = 0;
    for (name, budget, run) in &criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let passed = result.passed && in_time;
        if !passed {
            failed += 1;
        }
        let timing = match budget {
            Some(b) => format!(
                "{elapsed:.2?} of {b:?}{}",
                if in_time { "" } else { " EXCEEDED" }
            ),
            None => format!("{elapsed:.2?}"),
        };
        println!(
            "criterion {name}: {} [{timing}] {}",
            if passed { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
