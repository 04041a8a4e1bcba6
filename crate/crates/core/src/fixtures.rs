//! Small reference instances with known equilibria, used by tests, benches
//! and the CLI's self checks.

use crate::error::Result;
use crate::network::{CostSchedule, FleetConfig, Network, ProblemInstance, SlotTable, TravelTimes};

/// Two nodes, one trip in each direction, one slot. Each fleet has
/// `capacity` vehicles split evenly over the nodes, which makes the fleet
/// non-binding once `capacity >= 2·base_demand`.
pub fn single_pair(base_demand: f64, ride_cost: f64, capacity: f64) -> Result<ProblemInstance> {
    single_pair_with(base_demand, ride_cost, 0.0, [capacity, capacity])
}

pub fn single_pair_with(
    base_demand: f64,
    ride_cost: f64,
    reroute_cost: f64,
    capacity: [f64; 2],
) -> Result<ProblemInstance> {
    let network = Network::new(2, vec![(0, 1), (1, 0)])?;
    let instance = ProblemInstance {
        network,
        horizon: 1,
        p_max: 1.0,
        travel: TravelTimes(SlotTable::filled(2, 1, 1)),
        demand: SlotTable::filled(2, 1, base_demand),
        costs: CostSchedule {
            ride: SlotTable::filled(2, 1, ride_cost),
            reroute: SlotTable::filled(2, 1, reroute_cost),
        },
        fleets: FleetConfig {
            capacity,
            initial_placement: [
                vec![capacity[0] / 2.0, capacity[0] / 2.0],
                vec![capacity[1] / 2.0, capacity[1] / 2.0],
            ],
        },
    };
    instance.ensure_valid()?;
    Ok(instance)
}

/// Fleet large enough that no single-pair flow constraint binds.
pub const UNCAPACITATED: f64 = 1.0e4;

/// Two 2-node clusters. Trips between clusters have no demand and take longer
/// than the horizon, and fleet `i` starts entirely in cluster `i`, so each
/// fleet can only ever serve its own cluster.
pub fn separable_clusters(capacity: [f64; 2]) -> Result<ProblemInstance> {
    let horizon = 3;
    let network = Network::complete(4);
    let edges = network.edge_count();
    let cluster = |j: usize| j / 2;
    let same: Vec<bool> = network.edges().iter().map(|&(j, l)| cluster(j) == cluster(l)).collect();
    let travel = TravelTimes(SlotTable::from_fn(edges, horizon, |e, _| {
        if same[e] {
            1
        } else {
            horizon as u32 + 1
        }
    }));
    let profile = [30.0, 12.0, 24.0];
    let demand = SlotTable::from_fn(edges, horizon, |e, t| if same[e] { profile[t] } else { 0.0 });
    let ride = SlotTable::from_fn(edges, horizon, |e, _| if same[e] { 0.1 } else { 0.2 });
    let reroute = SlotTable::from_fn(edges, horizon, |e, _| if same[e] { 0.05 } else { 0.1 });
    let placement = |i: usize| -> Vec<f64> {
        (0..4)
            .map(|j| if cluster(j) == i { capacity[i] / 2.0 } else { 0.0 })
            .collect()
    };
    let instance = ProblemInstance {
        network,
        horizon,
        p_max: 1.0,
        travel,
        demand,
        costs: CostSchedule { ride, reroute },
        fleets: FleetConfig {
            capacity,
            initial_placement: [placement(0), placement(1)],
        },
    };
    instance.ensure_valid()?;
    Ok(instance)
}
