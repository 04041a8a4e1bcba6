//! Payoff functions written out term by term over strategy tables. They are
//! independent of program assembly and serve as the reference the assembled
//! objectives are checked against.

use crate::network::{ProblemInstance, SlotTable};

/// Prices and free-vehicle routing of one provider, per edge and slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub prices: SlotTable<f64>,
    pub routing: SlotTable<f64>,
}

impl Strategy {
    /// Every price at `price`, no rerouting.
    pub fn uniform(instance: &ProblemInstance, price: f64) -> Self {
        let edges = instance.network.edge_count();
        Self {
            prices: SlotTable::filled(edges, instance.horizon, price),
            routing: SlotTable::filled(edges, instance.horizon, 0.0),
        }
    }
}

fn affine_demand(base: f64, own: f64, rival: f64, p_max: f64) -> f64 {
    base * (0.5 - own / p_max + rival / (2.0 * p_max))
}

fn reroute_cost(instance: &ProblemInstance, routing: &SlotTable<f64>) -> f64 {
    let mut total = 0.0;
    for e in 0..instance.network.edge_count() {
        for t in 0..instance.horizon {
            total += instance.costs.reroute.get(e, t) * routing.get(e, t);
        }
    }
    total
}

/// Profit with the unclipped (affine) demand, as used inside the programs.
pub fn surrogate_profit(
    instance: &ProblemInstance,
    demand: &SlotTable<f64>,
    own: &Strategy,
    rival_prices: &SlotTable<f64>,
) -> f64 {
    let pm = instance.p_max;
    let mut total = 0.0;
    for e in 0..instance.network.edge_count() {
        for t in 0..instance.horizon {
            let p = own.prices.get(e, t);
            let d = affine_demand(demand.get(e, t), p, rival_prices.get(e, t), pm);
            total += (p - instance.costs.ride.get(e, t)) * d;
        }
    }
    total - reroute_cost(instance, &own.routing)
}

/// Profit with demand clipped at zero.
pub fn true_profit(
    instance: &ProblemInstance,
    demand: &SlotTable<f64>,
    own: &Strategy,
    rival_prices: &SlotTable<f64>,
) -> f64 {
    let pm = instance.p_max;
    let mut total = 0.0;
    for e in 0..instance.network.edge_count() {
        for t in 0..instance.horizon {
            let p = own.prices.get(e, t);
            let d = affine_demand(demand.get(e, t), p, rival_prices.get(e, t), pm).max(0.0);
            total += (p - instance.costs.ride.get(e, t)) * d;
        }
    }
    total - reroute_cost(instance, &own.routing)
}

/// The potential including its decision-independent constant
/// `−Σ_i Σ c·D/2`.
pub fn potential(instance: &ProblemInstance, demand: &SlotTable<f64>, strategies: &[Strategy; 2]) -> f64 {
    let pm = instance.p_max;
    let mut total = 0.0;
    for e in 0..instance.network.edge_count() {
        for t in 0..instance.horizon {
            let d = demand.get(e, t);
            let c = instance.costs.ride.get(e, t);
            let p1 = strategies[0].prices.get(e, t);
            let p2 = strategies[1].prices.get(e, t);
            total += p1 * p2 * d / (2.0 * pm);
            for p in [p1, p2] {
                total += p * d * (0.5 - p / pm) + c * d * p / pm - c * d / 2.0;
            }
        }
    }
    total - reroute_cost(instance, &strategies[0].routing) - reroute_cost(instance, &strategies[1].routing)
}

/// Part of [`potential`] that does not depend on any decision.
pub fn potential_constant(instance: &ProblemInstance, demand: &SlotTable<f64>) -> f64 {
    let mut total = 0.0;
    for e in 0..instance.network.edge_count() {
        for t in 0..instance.horizon {
            total -= instance.costs.ride.get(e, t) * demand.get(e, t);
        }
    }
    total
}

/// Single-provider profit with demand `D(1 − p/p_max)`.
pub fn monopoly_profit(instance: &ProblemInstance, prices: &SlotTable<f64>, routing: &[&SlotTable<f64>]) -> f64 {
    let pm = instance.p_max;
    let mut total = 0.0;
    for e in 0..instance.network.edge_count() {
        for t in 0..instance.horizon {
            let p = prices.get(e, t);
            total += (p - instance.costs.ride.get(e, t)) * instance.demand.get(e, t) * (1.0 - p / pm);
        }
    }
    for r in routing {
        total -= reroute_cost(instance, r);
    }
    total
}
