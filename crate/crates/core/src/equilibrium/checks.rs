use serde::{Deserialize, Serialize};

use crate::equilibrium::gne::GneSolution;
use crate::network::ProblemInstance;

/// Demand level below which a provider counts as not serving a trip.
pub fn default_eps_zero(instance: &ProblemInstance) -> f64 {
    1e-6 * instance.demand.max_value()
}

/// Outcome of the symmetric-equilibrium check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// Each failed precondition, e.g. `"precondition failed: capacities differ"`.
    pub failed_preconditions: Vec<String>,
    pub max_price_gap: f64,
    pub max_demand_gap: f64,
    /// `None` when a precondition failed and nothing was asserted.
    pub symmetric: Option<bool>,
}

/// With equal fleets, equal placements and every trip served by both or
/// neither provider, the two providers must post equal prices and see equal
/// demand.
pub fn check_symmetry(instance: &ProblemInstance, solution: &GneSolution, eps_zero: f64, tol: f64) -> SymmetryReport {
    let mut failed = Vec::new();
    let [c1, c2] = instance.fleets.capacity;
    if (c1 - c2).abs() > 1e-12 * c1.abs().max(c2.abs()).max(1.0) {
        failed.push("precondition failed: capacities differ".to_string());
    }
    let [x1, x2] = &instance.fleets.initial_placement;
    if x1
        .iter()
        .zip(x2)
        .any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0))
    {
        failed.push("precondition failed: initial placements differ".to_string());
    }
    let (d1, d2) = (&solution.rsp[0].demand, &solution.rsp[1].demand);
    let one_sided = d1
        .values()
        .iter()
        .zip(d2.values())
        .position(|(a, b)| (*a > eps_zero) != (*b > eps_zero));
    if let Some(pos) = one_sided {
        let (e, t) = (pos / instance.horizon, pos % instance.horizon);
        let (j, l) = instance.network.edge(e);
        failed.push(format!("precondition failed: one-sided service at ({j},{l},{})", t + 1));
    }
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let max_price_gap = gap(solution.rsp[0].prices.values(), solution.rsp[1].prices.values());
    let max_demand_gap = gap(d1.values(), d2.values());
    let symmetric = failed.is_empty().then_some(
        max_price_gap <= tol * instance.p_max && max_demand_gap <= tol * instance.demand.max_value().max(1.0),
    );
    SymmetryReport {
        failed_preconditions: failed,
        max_price_gap,
        max_demand_gap,
        symmetric,
    }
}

/// Trips where neither provider serves must carry the mutual deterrence
/// price `p_max` for both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterrenceReport {
    /// Trips with both demands at most `eps_zero`.
    pub unserved_trips: usize,
    /// Largest `|p_i − p_max|` over those trips.
    pub max_deviation: f64,
    pub holds: bool,
}

/// A demand of at most `eps_zero` lets each price sit up to
/// `eps_zero·p_max/D` below its zero-demand threshold, so the fixed point
/// `p_max` is matched within twice that plus `tol·p_max`.
pub fn check_deterrence(
    instance: &ProblemInstance,
    solution: &GneSolution,
    eps_zero: f64,
    tol: f64,
) -> DeterrenceReport {
    let pm = instance.p_max;
    let mut report = DeterrenceReport {
        unserved_trips: 0,
        max_deviation: 0.0,
        holds: true,
    };
    let (d1, d2) = (&solution.rsp[0].demand, &solution.rsp[1].demand);
    for e in 0..instance.network.edge_count() {
        for t in 0..instance.horizon {
            if d1.get(e, t) > eps_zero || d2.get(e, t) > eps_zero {
                continue;
            }
            report.unserved_trips += 1;
            let base = instance.demand.get(e, t);
            let slack = if base > 0.0 { 2.0 * eps_zero * pm / base } else { 0.0 };
            for i in 0..2 {
                let dev = (solution.rsp[i].prices.get(e, t) - pm).abs();
                report.max_deviation = report.max_deviation.max(dev);
                if dev > slack + tol * pm {
                    report.holds = false;
                }
            }
        }
    }
    report
}
