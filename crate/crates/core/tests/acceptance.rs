//! Acceptance criteria 1 to 9. Each test prints one `criterion N: PASS|FAIL`
//! line before asserting.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use predtrig::control::GainSet;
use predtrig::harness::compare::{compare_modes_with_gains, ComparisonReport};
use predtrig::harness::config::ControllerKind;
use predtrig::harness::sim::summarize;
use predtrig::harness::trace::{read_trace_file, write_trace_file};
use predtrig::harness::{synthesize, Scenario, ScenarioConfig};
use predtrig::linalg::{spectral_radius, Matrix, Vector};
use predtrig::netsim::{
    aggregate_size, aggregate_size_full, aggregate_size_top, control_bandwidth, priority_exchange, BandwidthParams,
    Mode,
};
use predtrig::scheduler::compute_schedule;
use predtrig::stability::{drift_bound_check, Verdict};
use predtrig::triggering::{priority, priority_chernoff, quantize};

const SEEDS: [u64; 3] = [1, 2, 3];

/// Written straight to the stdout handle so the line shows without `--nocapture`.
fn verdict(n: u32, ok: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

fn within(n: u32, started: Instant, limit: Duration) -> bool {
    let elapsed = started.elapsed();
    if elapsed > limit {
        verdict(n, false, &format!("took {elapsed:?}, limit {limit:?}"));
    }
    elapsed <= limit
}

fn reference_gains() -> &'static GainSet<f64> {
    static GAINS: OnceLock<GainSet<f64>> = OnceLock::new();
    GAINS.get_or_init(|| synthesize(&ScenarioConfig::reference()).expect("reference synthesis"))
}

fn comparison() -> &'static ComparisonReport {
    static REPORT: OnceLock<ComparisonReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        compare_modes_with_gains(&ScenarioConfig::reference(), &SEEDS, reference_gains()).expect("comparison runs")
    })
}

#[test]
fn criterion_1_bandwidth() {
    let t = Instant::now();
    let cases = [
        (Mode::Periodic, 18, 3, None),
        (Mode::Predictive, 18, 2, Some(5)),
        (Mode::Periodic, 10, 11, None),
        (Mode::Predictive, 10, 9, Some(10)),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (mode, m_a, m_c, s) in cases {
        let bw = control_bandwidth(&BandwidthParams::reference(m_a), 20, 4, mode).unwrap();
        let hit = bw.m_c == m_c && s.is_none_or(|s| bw.aggregate_bytes == s);
        ok &= hit;
        detail.push(format!("{mode}/{m_a}->{}({}B)", bw.m_c, bw.aggregate_bytes));
    }
    ok &= within(1, t, Duration::from_secs(1));
    verdict(1, ok, &detail.join(" "));
    assert!(ok);
}

fn bits_for(n: usize) -> usize {
    // smallest b with 2^b >= n, by counting
    let mut b = 0;
    while (1usize << b) < n {
        b += 1;
    }
    b
}

#[test]
#[allow(clippy::manual_div_ceil)]
fn criterion_2_aggregate_size() {
    let t = Instant::now();
    let mut ok = aggregate_size(20, 4, 2) == 5 && aggregate_size(20, 4, 9) == 10;
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=128usize);
        let w = rng.random_range(1..=16usize);
        let m_c = rng.random_range(1..=n);
        let full = (n * w + 7) / 8;
        let top = (m_c * w + m_c * bits_for(n) + n + 7) / 8;
        let expected = full.min(top);
        let consistent = aggregate_size_full(n, w) == full
            && aggregate_size_top(n, w, m_c) == top
            && aggregate_size(n, w, m_c) == expected;
        if !consistent {
            mismatches += 1;
        }
    }
    ok &= mismatches == 0;
    ok &= within(2, t, Duration::from_secs(1));
    verdict(
        2,
        ok,
        &format!("sizes 5/10 at N=20 W=4, sweep mismatches {mismatches}/200"),
    );
    assert!(ok);
}

/// Split score from a sampled chi-square tail, independent of the gamma routines.
fn monte_carlo_priority(rng: &mut ChaCha20Rng, delta: f64, d2: f64, n: usize, samples: usize) -> f64 {
    let gap = (delta - d2).abs();
    let below = (0..samples)
        .filter(|_| {
            (0..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                .sum::<f64>()
                <= gap
        })
        .count() as f64
        / samples as f64;
    if d2 <= delta {
        0.5 * (1.0 - below)
    } else {
        0.5 + 0.5 * below
    }
}

#[test]
fn criterion_3_priority_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let n = if case % 2 == 0 { 2 } else { 4 };
        let delta = rng.random_range(0.5..20.0);
        let d2 = rng.random_range(0.0..2.0 * delta + 10.0);
        let exact: f64 = priority(delta, d2, n);
        let mc = monte_carlo_priority(&mut rng, delta, d2, n, 100_000);
        worst = worst.max((exact - mc).abs());
    }
    let mut rank_violations = 0;
    for _ in 0..1000 {
        let n = if rng.random_bool(0.5) { 2 } else { 4 };
        let delta = rng.random_range(0.5..20.0);
        let (a, b): (f64, f64) = (rng.random_range(0.0..60.0), rng.random_range(0.0..60.0));
        let exact = priority(delta, a, n).partial_cmp(&priority(delta, b, n));
        let approx = priority_chernoff(delta, a, n).partial_cmp(&priority_chernoff(delta, b, n));
        if exact != approx {
            rank_violations += 1;
        }
    }
    let ok = worst <= 0.02 && rank_violations == 0 && within(3, t, Duration::from_secs(60));
    verdict(
        3,
        ok,
        &format!("max |exact - MC| = {worst:.4} over 50 cases, ranking disagreements {rank_violations}/1000"),
    );
    assert!(ok);
}

fn random_stable(rng: &mut ChaCha20Rng, n: usize) -> Matrix<f64> {
    let m = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let target = rng.random_range(0.3..0.95);
    &m * (target / spectral_radius(&m))
}

#[test]
fn criterion_4_drift_bound() {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut passes = 0;
    let mut min_margin = f64::INFINITY;
    for sys in 0..5 {
        let n = 4;
        let a = random_stable(&mut rng, n);
        let sigma = Matrix::identity(n, n);
        let grid: Vec<Vector<f64>> = (0..10)
            .map(|g| Vector::from_fn(n, |_, _| g as f64 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let report = drift_bound_check(&a, &sigma, &grid, 100_000, 40 + sys).unwrap();
        min_margin = report.points.iter().map(|p| p.margin).fold(min_margin, f64::min);
        passes += (report.verdict == Verdict::Pass && report.points.len() == 10) as usize;
    }
    let ok = passes == 5 && within(4, t, Duration::from_secs(120));
    verdict(
        4,
        ok,
        &format!("{passes}/5 systems pass at all 10 points, min margin {min_margin:.4}"),
    );
    assert!(ok);
}

#[test]
fn criterion_5_scheduler_safety() {
    let t = Instant::now();
    let scenario = Scenario::with_gains(ScenarioConfig::reference(), reference_gains().clone()).unwrap();
    let m_c = scenario.m_c();
    let out = scenario.run().unwrap();
    let max_sent = out
        .records
        .iter()
        .map(|r| r.agents.iter().filter(|a| a.sent).count())
        .max()
        .unwrap();
    let blind_sends = out
        .records
        .iter()
        .flat_map(|r| r.agents.iter())
        .filter(|a| !a.has_agg && a.sent)
        .count();
    let blind_rounds = out
        .records
        .iter()
        .flat_map(|r| r.agents.iter())
        .filter(|a| !a.has_agg)
        .count();

    let p_delta_q = quantize(0.5, 4);
    let tie = compute_schedule(&priority_exchange(&[12, 12, 12], 2), 2, p_delta_q, 1).unwrap();
    let mixed = compute_schedule(&priority_exchange(&[5, 12, 12, 0], 2), 2, 7, 1).unwrap();
    let low = compute_schedule(&priority_exchange(&[3, 8, 8, 8, 1], 3), 3, 8, 1).unwrap();
    let ties_ok = tie.agents() == vec![0, 1] && mixed.agents() == vec![1, 2] && low.agents().is_empty();

    let ok = out.records.len() == 10_000
        && max_sent <= m_c
        && blind_sends == 0
        && out.summary.sent_without_aggregate == 0
        && out.summary.conservation_violations == 0
        && ties_ok
        && within(5, t, Duration::from_secs(60));
    verdict(
        5,
        ok,
        &format!(
            "max sent {max_sent} <= M_C {m_c}, sends without aggregate {blind_sends} (of {blind_rounds} agent-rounds lacking it), tie rule {ties_ok}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_mean_square_boundedness() {
    let t = Instant::now();
    let base = ScenarioConfig::reference().without_disturbances();
    let run = |cfg: ScenarioConfig, gains: GainSet<f64>| {
        let out = Scenario::with_gains(cfg, gains).unwrap().run().unwrap();
        out.summary.msb.expect("long enough for a verdict")
    };
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in SEEDS {
        let msb = run(base.with_seed(seed), reference_gains().clone());
        ok &= msb.bounded;
        lines.push(format!(
            "seed {seed} {:.3e}/{:.3e}",
            msb.sup_first_half, msb.sup_second_half
        ));
    }
    let mut lossy = base.clone();
    lossy.network.p_loss = 0.1;
    let msb = run(lossy, reference_gains().clone());
    ok &= msb.bounded;
    lines.push(format!(
        "p_loss 0.1 {}",
        if msb.bounded { "bounded" } else { "unbounded" }
    ));

    let mut sanity = base.clone();
    sanity.controller = ControllerKind::OpenLoop;
    let open_gains = synthesize(&sanity).unwrap();
    let msb = run(sanity, open_gains);
    ok &= !msb.bounded;
    lines.push(format!(
        "open loop {}",
        if msb.bounded { "bounded" } else { "unbounded" }
    ));

    ok &= within(6, t, Duration::from_secs(300));
    verdict(6, ok, &lines.join(", "));
    assert!(ok);
}

#[test]
fn criterion_7_control_performance() {
    let t = Instant::now();
    let report = comparison();
    let during: Vec<f64> = report.runs.iter().map(|r| r.rel_during.unwrap()).collect();
    let pre: Vec<f64> = report.runs.iter().map(|r| r.rel_pre.unwrap()).collect();
    let mean_during = during.iter().sum::<f64>() / during.len() as f64;
    let ok = during.iter().all(|&d| d < 0.0)
        && mean_during <= -0.10
        && pre.iter().all(|&p| (-0.15..=0.05).contains(&p))
        && within(7, t, Duration::from_secs(300));
    let pct = |xs: &[f64]| {
        xs.iter()
            .map(|x| format!("{:+.1}%", 100.0 * x))
            .collect::<Vec<_>>()
            .join(" ")
    };
    verdict(
        7,
        ok,
        &format!(
            "during {} (mean {:+.1}%), pre {}",
            pct(&during),
            100.0 * mean_during,
            pct(&pre)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_8_allocation() {
    let t = Instant::now();
    let report = comparison();
    let disturbed = ScenarioConfig::reference().disturbances[0].agent_id;
    let mut ok = true;
    let mut lines = Vec::new();
    for r in &report.runs {
        let g = &r.predictive.grants_during;
        let top = g
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != disturbed)
            .map(|(_, c)| *c)
            .max()
            .unwrap();
        ok &= g[disturbed] > top;
        let per = &r.periodic.grants;
        let spread = per.iter().max().unwrap() - per.iter().min().unwrap();
        ok &= spread <= 1;
        lines.push(format!(
            "seed {}: agent {disturbed} {} vs next {top}, periodic spread {spread}",
            r.seed, g[disturbed]
        ));
    }
    ok &= within(8, t, Duration::from_secs(120));
    verdict(8, ok, &lines.join("; "));
    assert!(ok);
}

#[test]
fn criterion_9_determinism_and_audit() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::reference().with_seed(7);
    let mut bytes = Vec::new();
    let mut summaries = Vec::new();
    for run in 0..2 {
        let out = Scenario::with_gains(cfg.clone(), reference_gains().clone())
            .unwrap()
            .run()
            .unwrap();
        let path = dir.path().join(format!("trace{run}.csv"));
        write_trace_file(&path, &out.records).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
        summaries.push(out.summary);
    }
    let identical = bytes[0] == bytes[1];
    let records = read_trace_file(&dir.path().join("trace0.csv")).unwrap();
    let fresh = summarize(&cfg, &records).unwrap();
    let diffs = fresh.differences(&summaries[0].to_value());
    let ok = identical && diffs.is_empty() && within(9, t, Duration::from_secs(60));
    verdict(
        9,
        ok,
        &format!(
            "traces identical {identical} ({} bytes), summary mismatches {diffs:?}",
            bytes[0].len()
        ),
    );
    assert!(ok);
}
