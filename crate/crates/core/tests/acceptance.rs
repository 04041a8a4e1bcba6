//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p rsp-game --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsp_game::equilibrium::*;
use rsp_game::experiment::{default_q_grid, run_sweep, ExperimentConfig, Segment, SweepOutput};
use rsp_game::fixtures::{self, UNCAPACITATED};
use rsp_game::network::{build_two_cluster_instance, ProblemInstance, SlotTable, TwoClusterParams};
use rsp_game::programs::objectives::{potential, surrogate_profit};
use rsp_game::programs::{ScenarioSet, Strategy};
use rsp_game::qp::SolverSettings;

const SEED: u64 = 0x5eed_0001;

struct Outcome {
    pass: bool,
    detail: String,
    sub: Vec<(String, bool, String)>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
            sub: Vec::new(),
        }
    }

    fn error(err: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {err}"))
    }
}

/// Fleet accounts of every solve, checked together by the conservation criterion.
#[derive(Default)]
struct Ledger {
    accounts: Vec<(String, FleetAccount)>,
}

impl Ledger {
    fn gne(&mut self, label: &str, inst: &ProblemInstance, sol: &GneSolution) {
        let scenarios = ScenarioSet::deterministic(inst);
        self.gne_with(label, inst, sol, &scenarios);
    }

    fn gne_with(&mut self, label: &str, inst: &ProblemInstance, sol: &GneSolution, scenarios: &ScenarioSet) {
        for (i, acc) in sol.fleet_accounts(inst, scenarios).into_iter().enumerate() {
            self.accounts.push((format!("{label} RSP {}", i + 1), acc));
        }
    }

    fn monopoly(&mut self, label: &str, inst: &ProblemInstance, sol: &MonopolySolution) {
        self.accounts
            .push((format!("{label} monopoly"), sol.fleet_account(inst)));
    }
}

fn settings() -> SolverSettings {
    SolverSettings::default()
}

fn cluster(n: usize, q: f64, capacity: f64) -> ProblemInstance {
    build_two_cluster_instance(&TwoClusterParams {
        n,
        q,
        capacity,
        ..Default::default()
    })
    .unwrap()
}

fn max_abs(a: &SlotTable<f64>, b: &SlotTable<f64>) -> f64 {
    common::max_abs_diff(a, b)
}

/// Random strategy pulled toward the idle strategy (`p_max`, no rerouting) by `s`.
fn shrunk_strategy(inst: &ProblemInstance, prices: &[f64], routing: &[f64], s: f64) -> Strategy {
    let (e, h) = (inst.network.edge_count(), inst.horizon);
    let pm = inst.p_max;
    Strategy {
        prices: SlotTable::from_fn(e, h, |r, t| pm + s * (prices[r * h + t] - pm)),
        routing: SlotTable::from_fn(e, h, |r, t| s * routing[r * h + t]),
    }
}

fn random_parts(inst: &ProblemInstance, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let len = inst.network.edge_count() * inst.horizon;
    let prices = (0..len).map(|_| rng.gen_range(0.0..inst.p_max)).collect();
    let routing = (0..len).map(|_| rng.gen_range(0.0..2.0)).collect();
    (prices, routing)
}

/// Random feasible profile: both strategies are shrunk toward idle until feasible.
fn feasible_profile(inst: &ProblemInstance, rng: &mut ChaCha8Rng) -> [Strategy; 2] {
    let parts = [random_parts(inst, rng), random_parts(inst, rng)];
    let mut s = 1.0;
    loop {
        let profile = [0, 1].map(|i| shrunk_strategy(inst, &parts[i].0, &parts[i].1, s));
        // s = 0 is the idle profile, which is always feasible
        if s == 0.0 || check_profile_feasibility(inst, &profile).is_ok() {
            return profile;
        }
        s = if s < 1e-3 { 0.0 } else { s / 2.0 };
    }
}

/// Random feasible unilateral deviation of `who`, if one is found.
fn feasible_deviation(
    inst: &ProblemInstance,
    rng: &mut ChaCha8Rng,
    profile: &[Strategy; 2],
    who: usize,
) -> Option<[Strategy; 2]> {
    for _ in 0..20 {
        let (prices, routing) = random_parts(inst, rng);
        let mut s = 1.0;
        while s >= 1e-3 {
            let mut deviated = profile.clone();
            deviated[who] = shrunk_strategy(inst, &prices, &routing, s);
            if check_profile_feasibility(inst, &deviated).is_ok() {
                return Some(deviated);
            }
            s /= 2.0;
        }
    }
    None
}

fn potential_identity() -> Outcome {
    let inst = cluster(3, 0.25, 200.0);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut served = 0usize;
    let mut checked = 0usize;
    while checked < 50 {
        let profile = feasible_profile(&inst, &mut rng);
        let who = checked % 2;
        let Some(deviated) = feasible_deviation(&inst, &mut rng, &profile, who) else {
            continue;
        };
        checked += 1;
        let demand = affine_demand_table(&inst, &inst.demand, &profile[0].prices, &profile[1].prices);
        if demand.values().iter().any(|&d| d > 0.0) {
            served += 1;
        }
        let phi = potential(&inst, &inst.demand, &profile);
        let d_phi = potential(&inst, &inst.demand, &deviated) - phi;
        let rival = &profile[1 - who].prices;
        let d_f = surrogate_profit(&inst, &inst.demand, &deviated[who], rival)
            - surrogate_profit(&inst, &inst.demand, &profile[who], rival);
        worst = worst.max((d_phi - d_f).abs() / phi.abs().max(1.0));
    }
    Outcome::new(
        worst <= 1e-9 && served == checked,
        format!("worst |dPhi - dF| / max(1,|Phi|) = {worst:.2e} over {checked} feasible profiles ({served} with positive demand)"),
    )
}

fn gne_verification(ledger: &mut Ledger) -> Outcome {
    let inst = cluster(3, 0.25, 200.0);
    let sol = match solve_gne(&inst, &settings()) {
        Ok(s) => s,
        Err(e) => return Outcome::error(e),
    };
    ledger.gne("n=3", &inst, &sol);
    let dev = match verify_gne(&inst, &sol, &settings(), DEFAULT_GAIN_TOL) {
        Ok(d) => d,
        Err(e) => return Outcome::error(e),
    };
    let s = sol
        .solver
        .as_ref()
        .expect("deterministic solves carry a solver summary");
    let kkt = s
        .primal_residual
        .max(s.stationarity_residual)
        .max(s.complementarity_residual);
    let gain = dev.relative_gain[0].max(dev.relative_gain[1]);
    Outcome::new(
        dev.is_gne && gain <= 1e-4 && kkt <= 1e-6,
        format!(
            "n=3, T={}: relative gains {:.2e} {:.2e}, KKT residual {kkt:.2e}",
            inst.horizon, dev.relative_gain[0], dev.relative_gain[1]
        ),
    )
}

fn closed_form_equilibrium(ledger: &mut Ledger) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (c, expected) in [(0.0, 1.0 / 3.0), (0.1, 0.4)] {
        let (ga, gb) = common::grid_equilibrium_price(c, 1.0);
        let oracle_ok = (ga - expected).abs() <= common::GRID_STEP && (gb - expected).abs() <= common::GRID_STEP;
        let inst = fixtures::single_pair(40.0, c, UNCAPACITATED).unwrap();
        let sol = match solve_gne(&inst, &settings()) {
            Ok(s) => s,
            Err(e) => return Outcome::error(e),
        };
        ledger.gne(&format!("pair c={c}"), &inst, &sol);
        let err = sol
            .rsp
            .iter()
            .flat_map(|r| r.prices.values())
            .map(|p| (p - expected).abs())
            .fold(0.0, f64::max);
        pass &= oracle_ok && err <= 1e-4;
        parts.push(format!("c={c}: |p - {expected:.4}| = {err:.1e}"));
    }
    Outcome::new(pass, parts.join(", "))
}

fn closed_form_monopoly(ledger: &mut Ledger) -> Outcome {
    let inst = fixtures::single_pair(40.0, 0.1, UNCAPACITATED).unwrap();
    let oracle_ok = (common::grid_monopoly_price(0.1, 1.0) - 0.55).abs() <= common::GRID_STEP;
    let sol = match solve_monopoly(&inst, true, &settings()) {
        Ok(s) => s,
        Err(e) => return Outcome::error(e),
    };
    ledger.monopoly("pair c=0.1", &inst, &sol);
    let err = sol.prices.values().iter().map(|p| (p - 0.55).abs()).fold(0.0, f64::max);
    Outcome::new(oracle_ok && err <= 1e-4, format!("|p - 0.55| = {err:.1e}"))
}

/// Mean of `table` over trips of `segments` (all slots).
fn mean_over(inst: &ProblemInstance, n: usize, table: &SlotTable<f64>, segments: &[Segment]) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for (e, &(j, l)) in inst.network.edges().iter().enumerate() {
        if segments.contains(&Segment::of(j, l, n)) {
            for t in 0..inst.horizon {
                sum += table.get(e, t);
                count += 1;
            }
        }
    }
    sum / count as f64
}

fn max_over(inst: &ProblemInstance, n: usize, segments: &[Segment], mut f: impl FnMut(usize, usize) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for (e, &(j, l)) in inst.network.edges().iter().enumerate() {
        if segments.contains(&Segment::of(j, l, n)) {
            for t in 0..inst.horizon {
                worst = worst.max(f(e, t));
            }
        }
    }
    worst
}

fn sweep(n: usize, capacity: f64, ledger: &mut Ledger) -> rsp_game::Result<SweepOutput> {
    let config = ExperimentConfig {
        cluster: TwoClusterParams {
            n,
            capacity,
            ..Default::default()
        },
        q_values: default_q_grid(),
        ..Default::default()
    };
    let out = run_sweep(&config)?;
    for p in &out.points {
        let label = format!("n={n} C={capacity} q={}", p.q);
        ledger.gne(&label, &p.instance, &p.gne);
        ledger.monopoly(&label, &p.instance, &p.monopoly);
    }
    Ok(out)
}

fn trends(ledger: &mut Ledger, balanced: &mut Option<ProblemInstance>) -> Outcome {
    const N: usize = 10;
    const INTRA1: &[Segment] = &[Segment::IntraCluster1];
    const INTRA: &[Segment] = &[Segment::IntraCluster1, Segment::IntraCluster2];
    const INTER: &[Segment] = &[Segment::Inter12, Segment::Inter21];
    const ALL: &[Segment] = &[
        Segment::IntraCluster1,
        Segment::IntraCluster2,
        Segment::Inter12,
        Segment::Inter21,
    ];
    let base = match sweep(N, 200.0, ledger) {
        Ok(o) => o,
        Err(e) => return Outcome::error(e),
    };
    let high = match sweep(N, 800.0, ledger) {
        Ok(o) => o,
        Err(e) => return Outcome::error(e),
    };
    let at = |out: &SweepOutput, q: f64| out.points.iter().position(|p| p.q == q).unwrap();
    let (lo, hi, half) = (at(&base, 0.05), at(&base, 0.45), at(&base, 0.5));
    *balanced = Some(base.points[half].instance.clone());
    let pm = base.points[0].instance.p_max;
    let mut sub = Vec::new();

    let p = &base.points;
    let a: Vec<(f64, f64)> = (0..2)
        .map(|i| {
            (
                mean_over(&p[lo].instance, N, &p[lo].gne.rsp[i].prices, INTRA1),
                mean_over(&p[hi].instance, N, &p[hi].gne.rsp[i].prices, INTRA1),
            )
        })
        .collect();
    sub.push((
        "5a".to_string(),
        a.iter().all(|(l, h)| h < l),
        format!(
            "intra-cluster-1 mean price q=0.05 -> q=0.45: RSP 1 {:.4} -> {:.4}, RSP 2 {:.4} -> {:.4}",
            a[0].0, a[0].1, a[1].0, a[1].1
        ),
    ));

    let pt = &p[lo];
    let gap_m = max_over(&pt.instance, N, INTRA1, |e, t| {
        (pt.gne.rsp[0].prices.get(e, t) - pt.monopoly.prices.get(e, t)).abs()
    });
    sub.push((
        "5b".to_string(),
        gap_m <= 0.05 * pm,
        format!("q=0.05: max intra-cluster-1 |p1 - pm| = {gap_m:.4}"),
    ));

    let pt = &p[half];
    let gap_12 = max_over(&pt.instance, N, ALL, |e, t| {
        (pt.gne.rsp[0].prices.get(e, t) - pt.gne.rsp[1].prices.get(e, t)).abs()
    });
    sub.push((
        "5c".to_string(),
        gap_12 <= 1e-3 * pm,
        format!("q=0.5: max |p1 - p2| = {gap_12:.1e}"),
    ));

    let mut d_pass = true;
    let mut d_margin = f64::INFINITY;
    for pt in p {
        for r in &pt.gne.rsp {
            let diff = mean_over(&pt.instance, N, &r.prices, INTER) - mean_over(&pt.instance, N, &r.prices, INTRA);
            d_pass &= diff >= 0.0;
            d_margin = d_margin.min(diff);
        }
    }
    sub.push((
        "5d".to_string(),
        d_pass,
        format!("smallest inter minus intra mean price over q and RSPs = {d_margin:.4}"),
    ));

    let mut e_pass = true;
    let mut ranges = Vec::new();
    let mut headroom = f64::INFINITY;
    for i in 0..2 {
        let means: Vec<f64> = high
            .points
            .iter()
            .map(|pt| mean_over(&pt.instance, N, &pt.gne.rsp[i].prices, INTRA1))
            .collect();
        let range = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - means.iter().cloned().fold(f64::INFINITY, f64::min);
        ranges.push(range);
        e_pass &= range <= 0.02 * pm;
        for (pt, m) in high.points.iter().zip(&means) {
            let pm_mean = mean_over(&pt.instance, N, &pt.monopoly.prices, INTRA1);
            headroom = headroom.min(pm_mean - m);
            e_pass &= *m < pm_mean;
        }
    }
    sub.push((
        "5e".to_string(),
        e_pass,
        format!(
            "C=800: intra-cluster-1 mean price range over q {:.4} / {:.4}, smallest gap below pm {headroom:.4}",
            ranges[0], ranges[1]
        ),
    ));

    let pass = sub.iter().all(|s| s.1);
    let failed: Vec<&str> = sub.iter().filter(|s| !s.1).map(|s| s.0.as_str()).collect();
    let mut out = Outcome::new(
        pass,
        if failed.is_empty() {
            "all trend checks hold".to_string()
        } else {
            format!("failing: {}", failed.join(", "))
        },
    );
    out.sub = sub;
    out
}

fn separable_checker(balanced: Option<&ProblemInstance>) -> Outcome {
    let inst = fixtures::separable_clusters([20.0, 20.0]).unwrap();
    let report = match monopoly_duopoly_equivalence(&inst, default_eps_zero(&inst), &settings(), DEFAULT_GAIN_TOL) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let gain = report
        .deviation
        .as_ref()
        .map_or(f64::INFINITY, |d| d.relative_gain[0].max(d.relative_gain[1]));
    let balanced = match balanced {
        Some(b) => b.clone(),
        None => cluster(10, 0.5, 200.0),
    };
    let other =
        match monopoly_duopoly_equivalence(&balanced, default_eps_zero(&balanced), &settings(), DEFAULT_GAIN_TOL) {
            Ok(r) => r,
            Err(e) => return Outcome::error(e),
        };
    Outcome::new(
        report.verdict && gain <= 1e-4 && !other.verdict,
        format!(
            "separable verdict {} (gain {gain:.1e}), balanced q=0.5 verdict {} (overlap {:.2})",
            report.verdict, other.verdict, other.max_overlap
        ),
    )
}

fn conservation(ledger: &Ledger) -> Outcome {
    let failing: Vec<&str> = ledger
        .accounts
        .iter()
        .filter(|(_, acc)| !acc.passes(1e-6, 1e-7))
        .map(|(label, _)| label.as_str())
        .collect();
    let worst_rel = ledger
        .accounts
        .iter()
        .map(|(_, a)| a.conservation_error / a.capacity.max(1.0))
        .fold(0.0, f64::max);
    let worst_neg = ledger
        .accounts
        .iter()
        .map(|(_, a)| a.min_state.min(a.min_routing).min(a.min_demand))
        .fold(0.0, f64::min);
    Outcome::new(
        failing.is_empty() && !ledger.accounts.is_empty(),
        format!(
            "{} fleet accounts, worst error / C = {worst_rel:.1e}, most negative quantity {worst_neg:.1e}{}",
            ledger.accounts.len(),
            if failing.is_empty() {
                String::new()
            } else {
                format!(", failing: {}", failing.join("; "))
            }
        ),
    )
}

fn stochastic_degeneracy(ledger: &mut Ledger) -> Outcome {
    let inst = cluster(3, 0.25, 200.0);
    let scenarios = ScenarioSet::deterministic(&inst);
    let det = solve_gne(&inst, &settings());
    let stoc = solve_stochastic_gne(&inst, &scenarios, &settings());
    let (det, stoc) = match (det, stoc) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::error(e),
    };
    ledger.gne_with("n=3 single scenario", &inst, &stoc, &scenarios);
    let stoc_gap = (0..2)
        .map(|i| max_abs(&det.rsp[i].prices, &stoc.rsp[i].prices))
        .fold(0.0, f64::max);

    let pair = fixtures::single_pair(40.0, 0.1, UNCAPACITATED).unwrap();
    let base = match solve_gne(&pair, &settings()) {
        Ok(s) => s,
        Err(e) => return Outcome::error(e),
    };
    let mut scale_gap = 0.0f64;
    for lambda in [0.1, 0.5, 2.0, 10.0] {
        let scaled_inst = pair.with_demand_scaled(lambda);
        let scaled = match solve_gne(&scaled_inst, &settings()) {
            Ok(s) => s,
            Err(e) => return Outcome::error(e),
        };
        ledger.gne(&format!("pair x{lambda}"), &scaled_inst, &scaled);
        for i in 0..2 {
            scale_gap = scale_gap.max(max_abs(&base.rsp[i].prices, &scaled.rsp[i].prices));
        }
    }
    Outcome::new(
        stoc_gap <= 1e-5 && scale_gap <= 1e-4,
        format!("single scenario price gap {stoc_gap:.1e}, demand-scale price gap {scale_gap:.1e}"),
    )
}

/// Runs one criterion; returns its id, its printed lines and whether it passed.
fn report(
    id: &'static str,
    name: &str,
    budget: Duration,
    run: impl FnOnce() -> Outcome,
) -> (&'static str, String, bool) {
    let start = Instant::now();
    let outcome = run();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = outcome.pass && in_time;
    let timing = if in_time {
        format!("{:.2} s", elapsed.as_secs_f64())
    } else {
        format!("{:.2} s, over the {} s budget", elapsed.as_secs_f64(), budget.as_secs())
    };
    let mut text = format!(
        "{} {id} {name}: {} ({timing})",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail
    );
    for (sid, ok, detail) in &outcome.sub {
        text.push_str(&format!("\n    {} {sid}: {detail}", if *ok { "pass" } else { "fail" }));
    }
    (id, text, pass)
}

fn main() -> ExitCode {
    let mut ledger = Ledger::default();
    let mut balanced = None;
    let secs = Duration::from_secs;
    // conservation runs last so it sees every solve
    let mut results = [
        report("1", "potential identity", secs(10), potential_identity),
        report("2", "equilibrium verification", secs(30), || {
            gne_verification(&mut ledger)
        }),
        report("3", "closed-form duopoly prices", secs(30), || {
            closed_form_equilibrium(&mut ledger)
        }),
        report("4", "closed-form monopoly price", secs(30), || {
            closed_form_monopoly(&mut ledger)
        }),
        report("5", "two-cluster trends", secs(600), || {
            trends(&mut ledger, &mut balanced)
        }),
        report("6", "partition checker", secs(60), || {
            separable_checker(balanced.as_ref())
        }),
        report("8", "stochastic degeneracy", secs(60), || {
            stochastic_degeneracy(&mut ledger)
        }),
        report("7", "fleet conservation", secs(10), || conservation(&ledger)),
    ];
    results.sort_by_key(|r| r.0);
    for (_, text, _) in &results {
        println!("{text}");
    }
    let failed = results.iter().filter(|r| !r.2).count();
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
