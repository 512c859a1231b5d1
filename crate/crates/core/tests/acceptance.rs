//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances are fixed here and never tuned per run.

use std::time::{Duration, Instant};

use plaquette_mipt::circuit::{self, CircuitConfig, InitialState, RecordSchedule, TrajectoryRecord};
use plaquette_mipt::experiment::{random_system, BottomBoundary};
use plaquette_mipt::glassy::{self, Disorder, KmcState, QuenchConfig, StepOutcome};
use plaquette_mipt::kw::{self, Capacity};
use plaquette_mipt::plaquette::{self, build_parity_checks, DisorderGrid, InitialCondition};
use plaquette_mipt::replica::{renyi2_via_groups, renyi2_via_replicas};
use plaquette_mipt::stats::{linear_fit, mean_stderr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, title: &str, elapsed: Duration, outcome: &Outcome) {
    println!(
        "criterion {id:>2} [{}] {title}: {} ({:.1} s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64()
    );
}

/// Criteria 1 and 2 share their instances.
fn exactness() -> (Outcome, Outcome, Duration) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let (mut quantum_ok, mut groups_ok) = (0, 0);
    let instances = 120;
    for k in 0..instances {
        let l = rng.random_range(3..=10);
        // The classical grid has t_max + 2 rows.
        let t_max = rng.random_range(1..=8);
        let p = [0.1, 0.3, 0.5][k % 3];
        let init = [InitialState::UniformX, InitialState::UniformZ, InitialState::Staggered, InitialState::Random { p_x: 0.5 }]
            [rng.random_range(0..4)];
        let cfg = CircuitConfig::new(l, t_max, p, init, rng.random());
        let (_, mask) = circuit::run(&cfg).unwrap();
        let tableau = circuit::final_tableau(&cfg).unwrap();
        let (grid, ic) = circuit::export_classical(&cfg, &mask).unwrap();
        let sys = build_parity_checks(&grid, &ic).unwrap();
        let region = sys.half_region();
        let qubits: Vec<usize> = (0..2 * (l / 2)).collect();
        let quantum = tableau.entanglement_entropy(&qubits).unwrap();
        let replica = renyi2_via_replicas(&sys, &region).unwrap().s2;
        let groups = renyi2_via_groups(&sys, &region).unwrap().s2;
        quantum_ok += usize::from(quantum == replica);
        groups_ok += usize::from(groups == replica);
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(60);
    (
        Outcome {
            pass: quantum_ok == instances && fast,
            detail: format!("{quantum_ok}/{instances} tableau = replica, runtime < 60 s: {fast}"),
        },
        Outcome {
            pass: groups_ok == instances,
            detail: format!("{groups_ok}/{instances} groups = replica"),
        },
        elapsed,
    )
}

fn kw_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let mut worst: f64 = 0.0;
    let mut systems = 0;
    while systems < 50 {
        let (l, t) = (rng.random_range(3..=4), rng.random_range(3..=5));
        let p = rng.random_range(0.0..0.6);
        let sys = random_system(l, t, p, BottomBoundary::FixedZero, rng.random()).unwrap();
        if sys.n_columns() > 16 {
            continue;
        }
        systems += 1;
        for beta in [0.3, 1.0, 3.0] {
            worst = worst.max(kw::kw_identity_check(&sys, beta, Capacity::default()).unwrap().residual);
        }
    }
    let fast = start.elapsed() < Duration::from_secs(60);
    Outcome {
        pass: worst < 1e-10 && fast,
        detail: format!("max residual {worst:.2e} < 1e-10 over {systems} systems x 3 beta, runtime < 60 s: {fast}"),
    }
}

/// Per-p ensemble slopes; records are kept for the bound check.
fn log_slopes(records: &mut Vec<TrajectoryRecord>) -> Outcome {
    const L: usize = 100;
    const T_MAX: usize = 10_000;
    const MEMBERS: usize = 200;
    let mut rows = Vec::new();
    let mut slow = false;
    for (k, p) in [0.05, 0.1, 0.15].into_iter().enumerate() {
        let start = Instant::now();
        let mut cfg = CircuitConfig::new(L, T_MAX, p, InitialState::UniformX, 0xC4 + k as u64);
        cfg.schedule = RecordSchedule::LogSpaced { per_decade: 20 };
        let recs = circuit::run_ensemble(&cfg, MEMBERS).unwrap();
        let slopes: Vec<f64> = recs.iter().map(|r| r.log_slope(100, T_MAX).unwrap().slope).collect();
        rows.push((p, mean_stderr(&slopes).unwrap()));
        slow |= start.elapsed() > Duration::from_secs(600);
        records.extend(recs);
    }
    let in_band = rows.iter().all(|(_, m)| (m.mean - 3.7).abs() <= 0.5);
    let mut independent = true;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (a, b) = (&rows[i].1, &rows[j].1);
            independent &= (a.mean - b.mean).abs() <= 2.0 * a.stderr.hypot(b.stderr);
        }
    }
    let listed: Vec<String> = rows.iter().map(|(p, m)| format!("p={p}: {:.3}±{:.3}", m.mean, m.stderr)).collect();
    Outcome {
        pass: in_band && independent && !slow,
        detail: format!(
            "slopes {} (band 3.7±0.5: {in_band}, pairwise within 2σ: {independent}, each p ≤ 600 s: {})",
            listed.join(", "),
            !slow
        ),
    }
}

fn volume_law(records: &mut Vec<TrajectoryRecord>) -> Outcome {
    const MEMBERS: usize = 40;
    let start = Instant::now();
    let sizes = [100usize, 150, 200, 250];
    let mut means = Vec::new();
    for (k, &l) in sizes.iter().enumerate() {
        let cfg = CircuitConfig::new(l, 4 * l, 0.1, InitialState::Staggered, 0xC5 + k as u64);
        let recs = circuit::run_ensemble(&cfg, MEMBERS).unwrap();
        let steady: Vec<f64> = recs
            .iter()
            .map(|r| {
                let window: Vec<f64> = r.t.iter().zip(&r.s_quarter).filter(|(t, _)| **t >= 2 * l).map(|(_, s)| *s as f64).collect();
                window.iter().sum::<f64>() / window.len() as f64
            })
            .collect();
        means.push(mean_stderr(&steady).unwrap().mean);
        records.extend(recs);
    }
    let xs: Vec<f64> = sizes.iter().map(|&l| l as f64).collect();
    let fit = linear_fit(&xs, &means).unwrap();
    let fast = start.elapsed() <= Duration::from_secs(1200);
    Outcome {
        pass: (fit.slope - 0.23).abs() <= 0.05 && fast,
        detail: format!(
            "S_quarter = {:.3} L + {:.2} (means {:?}), slope within 0.23±0.05, runtime ≤ 1200 s: {fast}",
            fit.slope,
            fit.intercept,
            means.iter().map(|m| (m * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    }
}

fn pe_bound(records: &[TrajectoryRecord]) -> Outcome {
    let violations: usize = records.iter().map(TrajectoryRecord::bound_violations).sum();
    let steps: usize = records.iter().map(TrajectoryRecord::len).sum();
    Outcome {
        pass: violations == 0 && !records.is_empty(),
        detail: format!("{violations} violations over {steps} recorded steps in {} trajectories", records.len()),
    }
}

fn structural_transition() -> Outcome {
    let fraction = |p: f64| {
        let values: Vec<f64> = (0..20u64)
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(0xC7_000 + r);
                let grid = DisorderGrid::random(40, 80, p, &mut rng);
                let sys = build_parity_checks(&grid, &InitialCondition::FixedZero).unwrap();
                let report = plaquette::boundary_quotient_generators(&sys, &plaquette::symmetry_basis(&sys));
                plaquette::support_statistics(&report).extensive_fraction
            })
            .collect();
        mean_stderr(&values).unwrap().mean
    };
    let (low, high) = (fraction(0.1), fraction(0.4));
    Outcome {
        pass: low > 0.5 && high < 0.05,
        detail: format!("extensive fraction {low:.3} at p=0.1 (> 0.5), {high:.3} at p=0.4 (< 0.05)"),
    }
}

/// The ordering is checked per realization; it holds on most but not all
/// instances, because systems whose zero-temperature entropy vanishes pass
/// through a small entropy maximum near β ≈ 1.
fn finite_beta_ordering() -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let realizations = 20usize;
    let (mut ordered, mut converged) = (0, 0);
    let mut worst_limit: f64 = 0.0;
    let (mut hot, mut cold) = (Vec::new(), Vec::new());
    for r in 0..realizations {
        let sys = random_system(8, 8, 0.1, BottomBoundary::FixedZero, 0xC8_000 + r as u64).unwrap();
        let region = sys.half_region();
        let s = |beta: f64| kw::finite_beta_renyi2(&sys, &region, beta, Capacity::default()).unwrap().s2_nats;
        let integer = renyi2_via_replicas(&sys, &region).unwrap().s2 as f64 * ln2;
        let limit = (s(30.0) - integer).abs();
        worst_limit = worst_limit.max(limit);
        ordered += usize::from(s(2.0) > s(0.5));
        converged += usize::from(limit < 1e-6);
        cold.push(s(2.0));
        hot.push(s(0.5));
    }
    let (cold, hot) = (mean_stderr(&cold).unwrap(), mean_stderr(&hot).unwrap());
    Outcome {
        pass: ordered >= 10 && cold.mean > hot.mean && converged == realizations,
        detail: format!(
            "S(2) > S(0.5) on {ordered}/{realizations} realizations (≥ 10), mean {:.3} vs {:.3} nats; |S(30) - S_int ln 2| < 1e-6 in {converged}/{realizations} (max {worst_limit:.1e})",
            cold.mean, hot.mean
        ),
    }
}

fn glassy_collapse() -> Outcome {
    let start = Instant::now();
    let traces: Vec<_> = [4.0, 6.0]
        .into_iter()
        .map(|beta| {
            let mut cfg = QuenchConfig::new(128, 0.0, beta, 1e9, 0xC9);
            cfg.samples = 100;
            cfg.t_min = 1.0;
            glassy::run_quench(&cfg).unwrap()
        })
        .collect();
    let plateaus: Vec<usize> = traces.iter().map(|t| glassy::detect_plateaus(t, 0.1).len()).collect();
    let collapse = glassy::collapse_transform(&traces).unwrap();
    let ratio = collapse.raw_score / collapse.score;
    let fast = start.elapsed() <= Duration::from_secs(1800);
    Outcome {
        pass: plateaus.iter().all(|&n| n >= 2) && ratio >= 3.0 && fast,
        detail: format!(
            "plateaus beta=4: {}, beta=6: {} (each ≥ 2); collapse score {:.4} vs raw {:.4}, ratio {ratio:.2} ≥ 3; runtime ≤ 1800 s: {fast}",
            plateaus[0], plateaus[1], collapse.score, collapse.raw_score
        ),
    }
}

fn mcmc_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC10);
    for (k, beta) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let initial: Vec<bool> = (0..9).map(|_| rng.random()).collect();
        let r = glassy::stationary_check(&Disorder::uniform(3, false), &initial, beta, 10_000_000, k as u64).unwrap();
        worst = worst.max(r.tv_distance);
    }
    // Incremental energy against a full recount along a long run.
    let mut state = KmcState::random(32, 0.2, 1.0, &mut rng).unwrap();
    let mut mismatches = 0;
    let mut audits = 0;
    for event in 1..=2_000_000u64 {
        if let StepOutcome::Completed = state.step(&mut rng) {
            break;
        }
        if event % 50_000 == 0 {
            audits += 1;
            mismatches += usize::from(state.energy() != state.recount_energy());
        }
    }
    Outcome {
        pass: worst < 0.01 && mismatches == 0 && audits > 0,
        detail: format!("max TV distance {worst:.4} < 0.01 at L=3; energy recount mismatches {mismatches}/{audits}"),
    }
}

fn main() {
    let mut passed = 0;
    let mut run = |id: usize, title: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        report(id, title, start.elapsed(), &outcome);
        passed += usize::from(outcome.pass);
    };

    let (c1, c2, elapsed) = exactness();
    report(1, "quantum/classical exactness", elapsed, &c1);
    report(2, "group formula equals replica formula", elapsed, &c2);
    let mut preset = usize::from(c1.pass) + usize::from(c2.pass);

    let mut records = Vec::new();
    run(3, "dual identity", &mut kw_identity);
    run(4, "logarithmic growth slope", &mut || log_slopes(&mut records));
    run(5, "volume-law coefficient", &mut || volume_law(&mut records));
    run(6, "participation-entropy bound", &mut || pe_bound(&records));
    run(7, "structural transition", &mut structural_transition);
    run(8, "finite-temperature ordering", &mut finite_beta_ordering);
    run(9, "glassy plateaus and collapse", &mut glassy_collapse);
    run(10, "kinetic Monte Carlo correctness", &mut mcmc_correctness);

    preset += passed;
    println!("acceptance: {preset}/10 criteria passed");
    if preset != 10 {
        std::process::exit(1);
    }
}
