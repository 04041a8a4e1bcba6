use serde::{Deserialize, Serialize};

use crate::equilibrium::accounting::{monopoly_demand_table, FleetAccount};
use crate::equilibrium::gne::{require_optimal, verify_profile, DeviationReport, SolveSummary};
use crate::error::{Error, Result};
use crate::network::{ProblemInstance, SlotTable, RSP_COUNT};
use crate::programs::{assemble_monopoly, assemble_partitioned_monopoly, AssembledGame, Owner, Strategy, VarKind};
use crate::qp::{solve_qp, SolverSettings};

/// Per-set tables of the partitioned monopoly.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub served: [SlotTable<f64>; RSP_COUNT],
    pub routing: [SlotTable<f64>; RSP_COUNT],
    pub states: [SlotTable<f64>; RSP_COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonopolySolution {
    pub prices: SlotTable<f64>,
    /// Total rerouting (summed over sets when partitioned).
    pub routing: SlotTable<f64>,
    /// `D(1 − p/p_max)` at the optimal prices.
    pub demand: SlotTable<f64>,
    pub states: SlotTable<f64>,
    pub profit: f64,
    /// Whether both fleets were pooled; otherwise only the first fleet serves.
    pub merged: bool,
    pub partition: Option<Partition>,
    pub solver: SolveSummary,
}

impl MonopolySolution {
    pub fn capacity(&self, instance: &ProblemInstance) -> f64 {
        if self.merged {
            instance.fleets.capacity.iter().sum()
        } else {
            instance.fleets.capacity[0]
        }
    }

    pub fn fleet_account(&self, instance: &ProblemInstance) -> FleetAccount {
        FleetAccount::new(
            instance,
            self.capacity(instance),
            std::slice::from_ref(&self.demand),
            &self.routing,
            std::slice::from_ref(&self.states),
        )
    }
}

fn tie_break_prices(instance: &ProblemInstance, game: &AssembledGame, x: &[f64]) -> SlotTable<f64> {
    let mut p = game.index.table(Owner::Monopoly, VarKind::Price, None, x);
    for e in 0..instance.network.edge_count() {
        for t in 0..instance.horizon {
            if instance.demand.get(e, t) == 0.0 {
                p.set(e, t, instance.p_max);
            }
        }
    }
    p
}

/// Single-provider optimum. `merged` pools both fleets; otherwise the first
/// fleet alone serves the market.
pub fn solve_monopoly(instance: &ProblemInstance, merged: bool, settings: &SolverSettings) -> Result<MonopolySolution> {
    let game = assemble_monopoly(instance, merged)?;
    let solution = solve_qp(&game.program, settings)?;
    require_optimal(&solution, "monopoly")?;
    let x = &solution.x;
    let prices = tie_break_prices(instance, &game, x);
    Ok(MonopolySolution {
        demand: monopoly_demand_table(instance, &prices),
        prices,
        routing: game.index.table(Owner::Monopoly, VarKind::Routing, None, x),
        states: game.index.table(Owner::Monopoly, VarKind::State, None, x),
        profit: solution.objective,
        merged,
        partition: None,
        solver: SolveSummary::from(&solution),
    })
}

/// Monopoly over both fleets that keeps track of which fleet serves each
/// trip. Aggregate tables are sums over the two sets.
pub fn solve_partitioned_monopoly(instance: &ProblemInstance, settings: &SolverSettings) -> Result<MonopolySolution> {
    let game = assemble_partitioned_monopoly(instance)?;
    let solution = solve_qp(&game.program, settings)?;
    require_optimal(&solution, "partitioned monopoly")?;
    let x = &solution.x;
    let prices = tie_break_prices(instance, &game, x);
    let table = |s: usize, kind: VarKind| game.index.table(Owner::Set(s), kind, None, x);
    let partition = Partition {
        served: [0, 1].map(|s| table(s, VarKind::Served)),
        routing: [0, 1].map(|s| table(s, VarKind::Routing)),
        states: [0, 1].map(|s| table(s, VarKind::State)),
    };
    let add = |a: &SlotTable<f64>, b: &SlotTable<f64>| {
        SlotTable::from_fn(a.edges(), a.horizon(), |r, t| a.get(r, t) + b.get(r, t))
    };
    Ok(MonopolySolution {
        demand: monopoly_demand_table(instance, &prices),
        prices,
        routing: add(&partition.routing[0], &partition.routing[1]),
        states: add(&partition.states[0], &partition.states[1]),
        profit: solution.objective,
        merged: true,
        partition: Some(partition),
        solver: SolveSummary::from(&solution),
    })
}

/// Whether the partitioned monopoly optimum also yields a duopoly
/// equilibrium once each set is handed to its own provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// Every trip is served by at most one set (the smaller share is at most `eps_zero`).
    pub partition_condition_holds: bool,
    /// Largest `d̂¹·d̂²` over trips.
    pub max_product: f64,
    /// Largest `min(d̂¹, d̂²)` over trips.
    pub max_overlap: f64,
    pub eps_zero: f64,
    pub monopoly_profit: f64,
    pub deviation: Option<DeviationReport>,
    /// Why no deviation test was run, if it was not.
    pub note: Option<String>,
    pub verdict: bool,
    #[serde(skip)]
    pub profile: Option<[Strategy; RSP_COUNT]>,
}

/// Duopoly profile built from a partitioned optimum: provider `i` posts the
/// monopoly price where its set serves (more than `eps_zero`) and `p_max`
/// elsewhere, and reroutes exactly as its set did.
pub fn construct_duopoly_profile(
    instance: &ProblemInstance,
    monopoly: &MonopolySolution,
    eps_zero: f64,
) -> Result<[Strategy; RSP_COUNT]> {
    let part = monopoly
        .partition
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("monopoly solution has no partition".into()))?;
    Ok([0, 1].map(|i| {
        let prices = SlotTable::from_fn(instance.network.edge_count(), instance.horizon, |e, t| {
            if part.served[i].get(e, t) > eps_zero {
                monopoly.prices.get(e, t)
            } else {
                instance.p_max
            }
        });
        Strategy {
            prices,
            routing: part.routing[i].clone(),
        }
    }))
}

/// Solves the partitioned monopoly, tests the partition condition and, when
/// it holds, checks the constructed duopoly profile for profitable deviations.
pub fn monopoly_duopoly_equivalence(
    instance: &ProblemInstance,
    eps_zero: f64,
    settings: &SolverSettings,
    tol: f64,
) -> Result<EquivalenceReport> {
    let monopoly = solve_partitioned_monopoly(instance, settings)?;
    let part = monopoly.partition.as_ref().expect("partitioned solve");
    let mut max_product = 0.0f64;
    let mut max_overlap = 0.0f64;
    for (a, b) in part.served[0].values().iter().zip(part.served[1].values()) {
        max_product = max_product.max(a.max(0.0) * b.max(0.0));
        max_overlap = max_overlap.max(a.min(*b));
    }
    let holds = max_overlap <= eps_zero;
    let mut report = EquivalenceReport {
        partition_condition_holds: holds,
        max_product,
        max_overlap,
        eps_zero,
        monopoly_profit: monopoly.profit,
        deviation: None,
        note: None,
        verdict: false,
        profile: None,
    };
    if !holds {
        report.note = Some(format!("both vehicle sets serve some trip (overlap {max_overlap:.3e})"));
        return Ok(report);
    }
    let profile = construct_duopoly_profile(instance, &monopoly, eps_zero)?;
    match verify_profile(instance, &profile, settings, tol) {
        Ok(dev) => {
            report.verdict = dev.is_gne;
            report.deviation = Some(dev);
        }
        Err(Error::InfeasibleProfile(msg)) => report.note = Some(format!("constructed profile infeasible: {msg}")),
        Err(e) => return Err(e),
    }
    report.profile = Some(profile);
    Ok(report)
}
