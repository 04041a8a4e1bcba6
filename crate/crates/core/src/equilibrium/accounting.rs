//! Vehicle bookkeeping: state propagation and fleet conservation.

use serde::{Deserialize, Serialize};

use crate::network::{ProblemInstance, SlotTable};

/// `D(1/2 − p_i/p_max + p_k/(2 p_max))` per trip, not clipped.
pub fn affine_demand_table(
    instance: &ProblemInstance,
    base: &SlotTable<f64>,
    own: &SlotTable<f64>,
    rival: &SlotTable<f64>,
) -> SlotTable<f64> {
    let pm = instance.p_max;
    SlotTable::from_fn(base.edges(), base.horizon(), |e, t| {
        base.get(e, t) * (0.5 - own.get(e, t) / pm + rival.get(e, t) / (2.0 * pm))
    })
}

/// `D(1 − p/p_max)` per trip.
pub fn monopoly_demand_table(instance: &ProblemInstance, prices: &SlotTable<f64>) -> SlotTable<f64> {
    let pm = instance.p_max;
    SlotTable::from_fn(prices.edges(), prices.horizon(), |e, t| {
        instance.demand.get(e, t) * (1.0 - prices.get(e, t) / pm)
    })
}

/// Vehicles available at each node after each slot when `served + routing`
/// vehicles leave on every trip.
pub fn propagate_states(
    instance: &ProblemInstance,
    initial: &[f64],
    served: &SlotTable<f64>,
    routing: &SlotTable<f64>,
) -> SlotTable<f64> {
    let net = &instance.network;
    let horizon = instance.horizon;
    let mut states = SlotTable::filled(net.node_count(), horizon, 0.0);
    let mut level = initial.to_vec();
    let mut incoming = SlotTable::filled(net.node_count(), horizon, 0.0);
    for t in 0..horizon {
        for e in 0..net.edge_count() {
            let (j, l) = net.edge(e);
            let moving = served.get(e, t) + routing.get(e, t);
            level[j] -= moving;
            if let Some(a) = instance.travel.arrival(e, t) {
                incoming.set(l, a, incoming.get(l, a) + moving);
            }
        }
        for (j, v) in level.iter_mut().enumerate() {
            *v += incoming.get(j, t);
            states.set(j, t, *v);
        }
    }
    states
}

/// Vehicles on the road at the end of each slot: departures at or before
/// the slot that arrive later, including trips that end beyond the horizon.
pub fn in_transit(instance: &ProblemInstance, served: &SlotTable<f64>, routing: &SlotTable<f64>) -> Vec<f64> {
    let horizon = instance.horizon;
    let mut out = vec![0.0; horizon];
    for e in 0..instance.network.edge_count() {
        for tau in 0..horizon {
            let moving = served.get(e, tau) + routing.get(e, tau);
            let arrive = tau + instance.travel.get(e, tau) as usize;
            for slot in out.iter_mut().take(arrive.min(horizon)).skip(tau) {
                *slot += moving;
            }
        }
    }
    out
}

/// Largest `|Σ_j x(j,t) + in_transit(t) − capacity|` over slots.
pub fn conservation_error(
    instance: &ProblemInstance,
    capacity: f64,
    served: &SlotTable<f64>,
    routing: &SlotTable<f64>,
    states: &SlotTable<f64>,
) -> f64 {
    let transit = in_transit(instance, served, routing);
    (0..instance.horizon)
        .map(|t| {
            let parked: f64 = (0..instance.network.node_count()).map(|j| states.get(j, t)).sum();
            (parked + transit[t] - capacity).abs()
        })
        .fold(0.0, f64::max)
}

/// Fleet accounting of one vehicle pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetAccount {
    pub capacity: f64,
    /// Largest absolute conservation error over slots (and scenarios).
    pub conservation_error: f64,
    pub min_state: f64,
    pub min_routing: f64,
    pub min_demand: f64,
}

impl FleetAccount {
    pub fn new(
        instance: &ProblemInstance,
        capacity: f64,
        served: &[SlotTable<f64>],
        routing: &SlotTable<f64>,
        states: &[SlotTable<f64>],
    ) -> Self {
        let min = |t: &SlotTable<f64>| t.values().iter().copied().fold(f64::INFINITY, f64::min);
        let mut account = Self {
            capacity,
            conservation_error: 0.0,
            min_state: f64::INFINITY,
            min_routing: min(routing),
            min_demand: f64::INFINITY,
        };
        for (d, x) in served.iter().zip(states) {
            account.conservation_error = account
                .conservation_error
                .max(conservation_error(instance, capacity, d, routing, x));
            account.min_state = account.min_state.min(min(x));
            account.min_demand = account.min_demand.min(min(d));
        }
        account
    }

    /// Conservation within `rel·max(1, C)` and every quantity at least `−floor`.
    pub fn passes(&self, rel: f64, floor: f64) -> bool {
        self.conservation_error <= rel * self.capacity.max(1.0)
            && self.min_state >= -floor
            && self.min_routing >= -floor
            && self.min_demand >= -floor
    }
}
