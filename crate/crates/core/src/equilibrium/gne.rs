use serde::{Deserialize, Serialize};

use crate::equilibrium::accounting::{affine_demand_table, propagate_states, FleetAccount};
use crate::error::{Error, Result};
use crate::network::{ProblemInstance, SlotTable, RSP_COUNT};
use crate::programs::objectives::{potential, true_profit};
use crate::programs::{
    assemble_best_response, assemble_potential_game, assemble_stochastic_game, tags, AssembledGame, Owner, ScenarioSet,
    Strategy, VarKind,
};
use crate::qp::{solve_qp, QpSolution, SolveStatus, SolverSettings};

/// Default bound on a provider's relative deviation gain.
pub const DEFAULT_GAIN_TOL: f64 = 1e-4;

/// Relative slack allowed when a supplied profile is checked for feasibility.
pub const PROFILE_FEAS_TOL: f64 = 1e-6;

/// Solver outcome carried along with a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub stationarity_residual: f64,
    pub complementarity_residual: f64,
    pub polished: bool,
}

impl From<&QpSolution> for SolveSummary {
    fn from(s: &QpSolution) -> Self {
        Self {
            status: s.status,
            iterations: s.iterations,
            primal_residual: s.primal_residual,
            stationarity_residual: s.stationarity_residual,
            complementarity_residual: s.complementarity_residual,
            polished: s.polished,
        }
    }
}

pub(crate) fn require_optimal(solution: &QpSolution, context: &str) -> Result<()> {
    if solution.status == SolveStatus::Optimal {
        Ok(())
    } else {
        Err(Error::Solver {
            context: context.to_string(),
            status: solution.status,
        })
    }
}

/// One provider's part of an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct RspOutcome {
    pub prices: SlotTable<f64>,
    pub routing: SlotTable<f64>,
    /// Demand at the equilibrium prices (expected over scenarios).
    pub demand: SlotTable<f64>,
    /// Vehicles available per node and slot, one table per scenario.
    pub states: Vec<SlotTable<f64>>,
    /// Profit with clipped demand (expected over scenarios).
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GneSolution {
    pub rsp: [RspOutcome; RSP_COUNT],
    pub potential: f64,
    /// One weight per scenario; a single weight of 1 for deterministic games.
    pub scenario_weights: Vec<f64>,
    pub solver: Option<SolveSummary>,
    pub deviation: Option<DeviationReport>,
}

impl GneSolution {
    pub fn strategies(&self) -> [Strategy; RSP_COUNT] {
        [0, 1].map(|i| Strategy {
            prices: self.rsp[i].prices.clone(),
            routing: self.rsp[i].routing.clone(),
        })
    }

    pub fn prices(&self, rsp: usize) -> &SlotTable<f64> {
        &self.rsp[rsp].prices
    }

    /// Fleet accounting per provider; scenario states are checked against
    /// their own scenario's demand.
    pub fn fleet_accounts(&self, instance: &ProblemInstance, scenarios: &ScenarioSet) -> [FleetAccount; RSP_COUNT] {
        [0, 1].map(|i| {
            let served: Vec<SlotTable<f64>> = scenarios
                .scenarios()
                .iter()
                .map(|s| affine_demand_table(instance, &s.demand, &self.rsp[i].prices, &self.rsp[1 - i].prices))
                .collect();
            FleetAccount::new(
                instance,
                instance.fleets.capacity[i],
                &served,
                &self.rsp[i].routing,
                &self.rsp[i].states,
            )
        })
    }
}

/// Outcome of the unilateral-deviation test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// Best-response profit minus profile profit.
    pub gain: [f64; RSP_COUNT],
    /// `gain / max(1, |profile profit|)`.
    pub relative_gain: [f64; RSP_COUNT],
    pub profile_profit: [f64; RSP_COUNT],
    pub best_response_profit: [f64; RSP_COUNT],
    pub tol: f64,
    pub is_gne: bool,
}

/// Price on trips without base demand, where every price is optimal.
fn apply_tie_rule(instance: &ProblemInstance, base: &SlotTable<f64>, prices: &mut SlotTable<f64>) {
    for e in 0..instance.network.edge_count() {
        for t in 0..instance.horizon {
            if base.get(e, t) == 0.0 {
                prices.set(e, t, instance.p_max);
            }
        }
    }
}

fn extract(
    instance: &ProblemInstance,
    game: &AssembledGame,
    x: &[f64],
    scenarios: &ScenarioSet,
    stochastic: bool,
) -> GneSolution {
    let expected = scenarios.expected_demand();
    let mut prices = [0, 1].map(|i| game.index.table(Owner::Rsp(i), VarKind::Price, None, x));
    for p in &mut prices {
        apply_tie_rule(instance, &expected, p);
    }
    let routing = [0, 1].map(|i| game.index.table(Owner::Rsp(i), VarKind::Routing, None, x));
    let strategies = [0, 1].map(|i| Strategy {
        prices: prices[i].clone(),
        routing: routing[i].clone(),
    });
    let rsp = [0, 1].map(|i| {
        let states = (0..scenarios.len())
            .map(|m| {
                let scenario = stochastic.then_some(m);
                game.index.table(Owner::Rsp(i), VarKind::State, scenario, x)
            })
            .collect();
        let profit = scenarios
            .scenarios()
            .iter()
            .map(|s| s.weight * true_profit(instance, &s.demand, &strategies[i], &prices[1 - i]))
            .sum();
        RspOutcome {
            demand: affine_demand_table(instance, &expected, &prices[i], &prices[1 - i]),
            prices: prices[i].clone(),
            routing: routing[i].clone(),
            states,
            profit,
        }
    });
    let potential = scenarios
        .scenarios()
        .iter()
        .map(|s| s.weight * potential(instance, &s.demand, &strategies))
        .sum();
    GneSolution {
        rsp,
        potential,
        scenario_weights: scenarios.scenarios().iter().map(|s| s.weight).collect(),
        solver: None,
        deviation: None,
    }
}

/// Variational equilibrium: the maximizer of the potential over both
/// providers' joint constraints, checked by unilateral deviation.
pub fn solve_gne(instance: &ProblemInstance, settings: &SolverSettings) -> Result<GneSolution> {
    let game = assemble_potential_game(instance)?;
    let solution = solve_qp(&game.program, settings)?;
    require_optimal(&solution, "potential game")?;
    let mut out = extract(
        instance,
        &game,
        &solution.x,
        &ScenarioSet::deterministic(instance),
        false,
    );
    out.solver = Some(SolveSummary::from(&solution));
    out.deviation = Some(verify_gne(instance, &out, settings, DEFAULT_GAIN_TOL)?);
    Ok(out)
}

/// Equilibrium of the expected-potential game over demand scenarios. Profits
/// are expectations; no deviation test is attached.
pub fn solve_stochastic_gne(
    instance: &ProblemInstance,
    scenarios: &ScenarioSet,
    settings: &SolverSettings,
) -> Result<GneSolution> {
    let game = assemble_stochastic_game(instance, scenarios)?;
    let solution = solve_qp(&game.program, settings)?;
    require_optimal(&solution, "stochastic potential game")?;
    let mut out = extract(instance, &game, &solution.x, scenarios, true);
    out.solver = Some(SolveSummary::from(&solution));
    Ok(out)
}

/// Checks that a profile lies in the game's strategy sets: prices within
/// bounds, nonnegative routing, and nonnegative states when the clipped
/// demand and routing are propagated from the initial placement.
pub fn check_profile_feasibility(instance: &ProblemInstance, strategies: &[Strategy; RSP_COUNT]) -> Result<()> {
    let pm = instance.p_max;
    let shape = (instance.network.edge_count(), instance.horizon);
    for (i, s) in strategies.iter().enumerate() {
        for table in [&s.prices, &s.routing] {
            if (table.edges(), table.horizon()) != shape {
                return Err(Error::DimensionMismatch(format!(
                    "strategy of RSP {} has the wrong shape",
                    i + 1
                )));
            }
        }
    }
    for (i, s) in strategies.iter().enumerate() {
        let cap = instance.fleets.capacity[i].max(1.0);
        for e in 0..shape.0 {
            for t in 0..shape.1 {
                let (j, l) = instance.network.edge(e);
                let p = s.prices.get(e, t);
                if !(p >= -PROFILE_FEAS_TOL * pm && p <= pm * (1.0 + PROFILE_FEAS_TOL)) {
                    return Err(Error::InfeasibleProfile(format!(
                        "{}: p[{},{j},{l},{}] = {p} outside [0, {pm}]",
                        tags::PRICE_BOUNDS,
                        i + 1,
                        t + 1
                    )));
                }
                let u = s.routing.get(e, t);
                if u.is_nan() || u < -PROFILE_FEAS_TOL * cap {
                    return Err(Error::InfeasibleProfile(format!(
                        "{}: u[{},{j},{l},{}] = {u}",
                        tags::ROUTING_NONNEGATIVITY,
                        i + 1,
                        t + 1
                    )));
                }
            }
        }
        let served =
            affine_demand_table(instance, &instance.demand, &s.prices, &strategies[1 - i].prices).map(|d| d.max(0.0));
        let states = propagate_states(instance, &instance.fleets.initial_placement[i], &served, &s.routing);
        for j in 0..instance.network.node_count() {
            for t in 0..instance.horizon {
                let x = states.get(j, t);
                if x < -PROFILE_FEAS_TOL * cap {
                    return Err(Error::InfeasibleProfile(format!(
                        "{}: x[{},{j},{}] = {x}",
                        tags::FLEET_NONNEGATIVITY,
                        i + 1,
                        t + 1
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Solves each provider's best response against the rival's prices in the
/// profile and compares objectives with the profile's own profit.
pub fn verify_profile(
    instance: &ProblemInstance,
    strategies: &[Strategy; RSP_COUNT],
    settings: &SolverSettings,
    tol: f64,
) -> Result<DeviationReport> {
    check_profile_feasibility(instance, strategies)?;
    let pm = instance.p_max;
    let best = |i: usize| -> Result<f64> {
        let rival = strategies[1 - i].prices.map(|p| p.clamp(0.0, pm));
        let game = assemble_best_response(instance, i, &rival)?;
        let solution = solve_qp(&game.program, settings)?;
        require_optimal(&solution, &format!("best response of RSP {}", i + 1))?;
        Ok(solution.objective)
    };
    let (b0, b1) = rayon::join(|| best(0), || best(1));
    let best_response_profit = [b0?, b1?];
    let profile_profit =
        [0, 1].map(|i| true_profit(instance, &instance.demand, &strategies[i], &strategies[1 - i].prices));
    let gain = [0, 1].map(|i| best_response_profit[i] - profile_profit[i]);
    let relative_gain = [0, 1].map(|i| gain[i] / profile_profit[i].abs().max(1.0));
    Ok(DeviationReport {
        gain,
        relative_gain,
        profile_profit,
        best_response_profit,
        tol,
        is_gne: relative_gain.iter().all(|&g| g <= tol),
    })
}

pub fn verify_gne(
    instance: &ProblemInstance,
    profile: &GneSolution,
    settings: &SolverSettings,
    tol: f64,
) -> Result<DeviationReport> {
    verify_profile(instance, &profile.strategies(), settings, tol)
}
