//! Transportation network, travel times, demand field, costs and fleets.
//!
//! Every per-trip quantity is stored densely over `edges × slots`. Slots are
//! 0-based internally (`slot = t - 1`); serialized documents use the 1-based
//! `t` of the model. Node ids are 0-based everywhere.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Number of ride service providers in the game.
pub const RSP_COUNT: usize = 2;

/// Directed graph over `node_count` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    lookup: HashMap<(usize, usize), usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl Network {
    /// Builds the network; edge ids follow the order of `edges`.
    ///
    /// Out-of-range endpoints and duplicate edges are rejected here. Self
    /// loops and connectivity are reported by [`ProblemInstance::validate`].
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(edges.len());
        let mut out_edges = vec![Vec::new(); node_count];
        let mut in_edges = vec![Vec::new(); node_count];
        for (e, &(j, l)) in edges.iter().enumerate() {
            if j >= node_count || l >= node_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({j},{l}) references a node outside 0..{node_count}"
                )));
            }
            if lookup.insert((j, l), e).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate edge ({j},{l})")));
            }
            out_edges[j].push(e);
            in_edges[l].push(e);
        }
        Ok(Self {
            node_count,
            edges,
            lookup,
            out_edges,
            in_edges,
        })
    }

    /// Complete directed graph without self loops, edges in lexicographic order.
    pub fn complete(node_count: usize) -> Self {
        let edges = (0..node_count)
            .flat_map(|j| (0..node_count).filter(move |&l| l != j).map(move |l| (j, l)))
            .collect();
        Self::new(node_count, edges).expect("complete graph is well formed")
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn edge_index(&self, j: usize, l: usize) -> Option<usize> {
        self.lookup.get(&(j, l)).copied()
    }

    pub fn out_edges(&self, j: usize) -> &[usize] {
        &self.out_edges[j]
    }

    pub fn in_edges(&self, j: usize) -> &[usize] {
        &self.in_edges[j]
    }

    pub fn is_strongly_connected(&self) -> bool {
        if self.node_count == 0 {
            return false;
        }
        let reach = |forward: bool| {
            let mut seen = vec![false; self.node_count];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(v) = queue.pop_front() {
                let adjacent = if forward { &self.out_edges[v] } else { &self.in_edges[v] };
                for &e in adjacent {
                    let (j, l) = self.edges[e];
                    let w = if forward { l } else { j };
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

/// Dense table over `(edge, slot)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTable<T> {
    edges: usize,
    horizon: usize,
    values: Vec<T>,
}

impl<T: Copy> SlotTable<T> {
    pub fn filled(edges: usize, horizon: usize, value: T) -> Self {
        Self {
            edges,
            horizon,
            values: vec![value; edges * horizon],
        }
    }

    pub fn from_fn(edges: usize, horizon: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(edges * horizon);
        for e in 0..edges {
            for s in 0..horizon {
                values.push(f(e, s));
            }
        }
        Self { edges, horizon, values }
    }

    pub fn edges(&self) -> usize {
        self.edges
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn get(&self, edge: usize, slot: usize) -> T {
        self.values[edge * self.horizon + slot]
    }

    #[inline]
    pub fn set(&mut self, edge: usize, slot: usize, value: T) {
        self.values[edge * self.horizon + slot] = value;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> SlotTable<U> {
        SlotTable {
            edges: self.edges,
            horizon: self.horizon,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl SlotTable<f64> {
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Integer number of slots a trip occupies, per departure slot. Holds the
/// single nonzero of the 0/1 travel indicator for each `(j, l, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimes(pub SlotTable<u32>);

impl TravelTimes {
    #[inline]
    pub fn get(&self, edge: usize, slot: usize) -> u32 {
        self.0.get(edge, slot)
    }

    /// Indicator form: 1 when a trip on `edge` departing at `slot` takes
    /// exactly `tau` slots.
    pub fn indicator(&self, edge: usize, slot: usize, tau: u32) -> u8 {
        u8::from(self.get(edge, slot) == tau)
    }

    /// Arrival slot of a departure, if it lands inside the horizon.
    #[inline]
    pub fn arrival(&self, edge: usize, slot: usize) -> Option<usize> {
        let arrive = slot + self.get(edge, slot) as usize;
        (arrive < self.0.horizon()).then_some(arrive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSchedule {
    pub ride: SlotTable<f64>,
    pub reroute: SlotTable<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetConfig {
    pub capacity: [f64; RSP_COUNT],
    /// `initial_placement[i][j]` vehicles of RSP `i` at node `j` before slot 1.
    pub initial_placement: [Vec<f64>; RSP_COUNT],
}

impl FleetConfig {
    /// Both fleets combined into one, as used by the merged monopoly.
    pub fn merged_placement(&self) -> Vec<f64> {
        self.initial_placement[0]
            .iter()
            .zip(&self.initial_placement[1])
            .map(|(a, b)| a + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub network: Network,
    pub horizon: usize,
    pub p_max: f64,
    pub travel: TravelTimes,
    /// Base demand `D(j,l,t)` per edge and slot.
    pub demand: SlotTable<f64>,
    pub costs: CostSchedule,
    pub fleets: FleetConfig,
}

impl ProblemInstance {
    /// Reports every violated invariant; an empty list means the instance is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.network.node_count();
        let edges = self.network.edge_count();
        let horizon = self.horizon;

        if n == 0 {
            out.push(Violation::new("network.node_count", "must be positive"));
        }
        if horizon == 0 {
            out.push(Violation::new("horizon", "must be positive"));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            out.push(Violation::new("p_max", "must be a positive real"));
        }
        for &(j, l) in self.network.edges() {
            if j == l {
                out.push(Violation::new(
                    "network.edges",
                    format!("self loop ({j},{j}) is not allowed"),
                ));
            }
        }
        if n > 0 && !self.network.is_strongly_connected() {
            out.push(Violation::new("network", "graph is not strongly connected"));
        }

        let shape_ok = |table_edges: usize, table_horizon: usize| table_edges == edges && table_horizon == horizon;
        if !shape_ok(self.travel.0.edges(), self.travel.0.horizon()) {
            out.push(Violation::new("travel", "must be defined on every edge for t in 1..T"));
        } else {
            for e in 0..edges {
                for s in 0..horizon {
                    if self.travel.get(e, s) < 1 {
                        let (j, l) = self.network.edge(e);
                        out.push(Violation::new(
                            "travel",
                            format!("travel time must be >= 1 at ({j},{l},{})", s + 1),
                        ));
                    }
                }
            }
        }
        let mut check_table = |name: &str, table: &SlotTable<f64>| {
            if !shape_ok(table.edges(), table.horizon()) {
                out.push(Violation::new(name, "must be defined on every edge for t in 1..T"));
                return;
            }
            for e in 0..edges {
                for s in 0..horizon {
                    let v = table.get(e, s);
                    if !(v.is_finite() && v >= 0.0) {
                        let (j, l) = self.network.edge(e);
                        out.push(Violation::new(
                            name,
                            format!("entry ({j},{l},{}) must be nonnegative, got {v}", s + 1),
                        ));
                    }
                }
            }
        };
        check_table("demand", &self.demand);
        check_table("costs.ride", &self.costs.ride);
        check_table("costs.reroute", &self.costs.reroute);

        for i in 0..RSP_COUNT {
            let capacity = self.fleets.capacity[i];
            if !(capacity.is_finite() && capacity >= 0.0) {
                out.push(Violation::new(
                    format!("fleets.capacity[{}]", i + 1),
                    "must be nonnegative",
                ));
            }
            let placement = &self.fleets.initial_placement[i];
            if placement.len() != n {
                out.push(Violation::new(
                    format!("fleets.initial_placement[{}]", i + 1),
                    format!("expected {n} entries, got {}", placement.len()),
                ));
                continue;
            }
            if placement.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                out.push(Violation::new(
                    format!("fleets.initial_placement[{}]", i + 1),
                    "entries must be nonnegative",
                ));
            }
            let total: f64 = placement.iter().sum();
            if (total - capacity).abs() > 1e-9 * capacity.abs().max(1.0) {
                out.push(Violation::new(
                    format!("fleets.initial_placement[{}]", i + 1),
                    format!("sums to {total}, capacity is {capacity}"),
                ));
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(violations))
        }
    }

    /// Copy whose two fleets are swapped; used by symmetry checks.
    pub fn with_fleets_swapped(&self) -> Self {
        let mut out = self.clone();
        out.fleets.capacity.swap(0, 1);
        out.fleets.initial_placement.swap(0, 1);
        out
    }

    /// Copy with every base demand multiplied by `factor`.
    pub fn with_demand_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.demand = self.demand.map(|d| d * factor);
        out
    }

    /// Copy with node `j` renamed to `perm[j]`. Edge ids are renumbered in the
    /// order of the relabelled edge list sorted lexicographically.
    pub fn relabel_nodes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.network.node_count();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&v| v >= n || std::mem::replace(&mut seen[v], true)) {
            return Err(Error::InvalidArgument("node relabelling must be a permutation".into()));
        }
        let mut edges: Vec<(usize, usize)> = self.network.edges().iter().map(|&(j, l)| (perm[j], perm[l])).collect();
        edges.sort_unstable();
        let network = Network::new(n, edges)?;
        // new edge id -> old edge id
        let mut inverse = vec![0; n];
        for (j, &p) in perm.iter().enumerate() {
            inverse[p] = j;
        }
        let source: Vec<usize> = network
            .edges()
            .iter()
            .map(|&(j, l)| self.network.edge_index(inverse[j], inverse[l]).expect("edge exists"))
            .collect();
        let remap = |t: &SlotTable<f64>| SlotTable::from_fn(source.len(), self.horizon, |e, s| t.get(source[e], s));
        let placement = |i: usize| (0..n).map(|j| self.fleets.initial_placement[i][inverse[j]]).collect();
        Ok(Self {
            travel: TravelTimes(SlotTable::from_fn(source.len(), self.horizon, |e, s| {
                self.travel.get(source[e], s)
            })),
            demand: remap(&self.demand),
            costs: CostSchedule {
                ride: remap(&self.costs.ride),
                reroute: remap(&self.costs.reroute),
            },
            fleets: FleetConfig {
                capacity: self.fleets.capacity,
                initial_placement: [placement(0), placement(1)],
            },
            network,
            horizon: self.horizon,
            p_max: self.p_max,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDocument = serde_json::from_str(text)?;
        doc.into_instance()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// `"j,l,t"` key with a 1-based slot.
pub fn trip_key(j: usize, l: usize, slot: usize) -> String {
    format!("{j},{l},{}", slot + 1)
}

pub(crate) fn parse_trip_key(key: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = key.split(',').collect();
    let bad = || Error::Format(format!("expected key \"j,l,t\", got {key:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let j = parts[0].trim().parse().map_err(|_| bad())?;
    let l = parts[1].trim().parse().map_err(|_| bad())?;
    let t: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if t == 0 {
        return Err(bad());
    }
    Ok((j, l, t - 1))
}

/// On-disk form of a [`ProblemInstance`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub node_count: usize,
    pub horizon: usize,
    pub p_max: f64,
    pub edges: Vec<(usize, usize)>,
    pub travel_time: BTreeMap<String, u32>,
    pub demand: BTreeMap<String, f64>,
    pub ride_cost: BTreeMap<String, f64>,
    pub reroute_cost: BTreeMap<String, f64>,
    pub capacity: [f64; RSP_COUNT],
    pub initial_placement: [Vec<f64>; RSP_COUNT],
}

impl From<&ProblemInstance> for InstanceDocument {
    fn from(inst: &ProblemInstance) -> Self {
        fn keyed<T: Copy>(inst: &ProblemInstance, table: &SlotTable<T>) -> BTreeMap<String, T> {
            let mut out = BTreeMap::new();
            for (e, &(j, l)) in inst.network.edges().iter().enumerate() {
                for s in 0..inst.horizon {
                    out.insert(trip_key(j, l, s), table.get(e, s));
                }
            }
            out
        }
        Self {
            node_count: inst.network.node_count(),
            horizon: inst.horizon,
            p_max: inst.p_max,
            edges: inst.network.edges().to_vec(),
            travel_time: keyed(inst, &inst.travel.0),
            demand: keyed(inst, &inst.demand),
            ride_cost: keyed(inst, &inst.costs.ride),
            reroute_cost: keyed(inst, &inst.costs.reroute),
            capacity: inst.fleets.capacity,
            initial_placement: inst.fleets.initial_placement.clone(),
        }
    }
}

impl InstanceDocument {
    pub fn into_instance(self) -> Result<ProblemInstance> {
        let network = Network::new(self.node_count, self.edges)?;
        let horizon = self.horizon;
        fn table<T: Copy + Default>(
            name: &str,
            network: &Network,
            horizon: usize,
            map: &BTreeMap<String, T>,
        ) -> Result<SlotTable<T>> {
            let mut out = SlotTable::filled(network.edge_count(), horizon, T::default());
            let mut seen = SlotTable::filled(network.edge_count(), horizon, false);
            for (key, &value) in map {
                let (j, l, s) = parse_trip_key(key)?;
                let e = network
                    .edge_index(j, l)
                    .ok_or_else(|| Error::Format(format!("{name}: key {key:?} is not an edge")))?;
                if s >= horizon {
                    return Err(Error::Format(format!("{name}: key {key:?} is beyond the horizon")));
                }
                out.set(e, s, value);
                seen.set(e, s, true);
            }
            if let Some(pos) = seen.values().iter().position(|&b| !b) {
                let (e, s) = (pos / horizon, pos % horizon);
                let (j, l) = network.edge(e);
                return Err(Error::Format(format!("{name}: missing entry {:?}", trip_key(j, l, s))));
            }
            Ok(out)
        }
        let travel = TravelTimes(table("travel_time", &network, horizon, &self.travel_time)?);
        let demand = table("demand", &network, horizon, &self.demand)?;
        let ride = table("ride_cost", &network, horizon, &self.ride_cost)?;
        let reroute = table("reroute_cost", &network, horizon, &self.reroute_cost)?;
        Ok(ProblemInstance {
            network,
            horizon,
            p_max: self.p_max,
            travel,
            demand,
            costs: CostSchedule { ride, reroute },
            fleets: FleetConfig {
                capacity: self.capacity,
                initial_placement: self.initial_placement,
            },
        })
    }
}

/// Parameters of the two-cluster benchmark network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoClusterParams {
    /// Nodes per cluster.
    pub n: usize,
    /// Share of each node's outgoing demand (and of each fleet) assigned to the other cluster.
    pub q: f64,
    /// Total outgoing demand per node for each slot; its length is the horizon.
    pub demand_profile: Vec<f64>,
    /// Per-RSP fleet size.
    pub capacity: f64,
    pub intra_ride_cost: f64,
    pub intra_reroute_cost: f64,
    pub inter_ride_cost: f64,
    pub inter_reroute_cost: f64,
    pub p_max: f64,
}

impl Default for TwoClusterParams {
    fn default() -> Self {
        Self {
            n: 10,
            q: 0.25,
            demand_profile: vec![40.0, 20.0, 40.0, 40.0],
            // Repo choice: the baseline fleet size is not given in the source
            // experiments (only the high-capacity value 800 is).
            capacity: 200.0,
            intra_ride_cost: 0.1,
            intra_reroute_cost: 0.05,
            inter_ride_cost: 0.2,
            inter_reroute_cost: 0.1,
            p_max: 1.0,
        }
    }
}

/// Travel time between nodes of different clusters.
pub const INTER_CLUSTER_TRAVEL: u32 = 2;

/// Cluster of a node in a two-cluster instance with `n` nodes per cluster.
pub fn cluster_of(node: usize, n: usize) -> usize {
    usize::from(node >= n)
}

/// Two cliques of `n` nodes fully cross-connected. Travel takes one slot inside a
/// cluster and two between clusters. Node `j` sends `(1-q)·D_t/(n-1)` to each
/// cluster-mate and `q·D_t/n` to each node of the other cluster. RSP `i` starts
/// with `(1-q)·C/n` vehicles on each node of cluster `i` and `q·C/n` elsewhere.
pub fn build_two_cluster_instance(params: &TwoClusterParams) -> Result<ProblemInstance> {
    let TwoClusterParams { n, q, .. } = *params;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cluster size n must be >= 2, got {n}")));
    }
    if !(q > 0.0 && q <= 0.5) {
        return Err(Error::InvalidArgument(format!("q must lie in (0, 0.5], got {q}")));
    }
    if params.demand_profile.is_empty() {
        return Err(Error::InvalidArgument("demand profile must be nonempty".into()));
    }
    if params.demand_profile.iter().any(|&d| !(d.is_finite() && d >= 0.0)) {
        return Err(Error::InvalidArgument("demand profile entries must be >= 0".into()));
    }
    let horizon = params.demand_profile.len();
    let network = Network::complete(2 * n);
    let edges = network.edge_count();
    let same = |e: usize| {
        let (j, l) = network.edge(e);
        cluster_of(j, n) == cluster_of(l, n)
    };
    let nf = n as f64;
    let travel = TravelTimes(SlotTable::from_fn(edges, horizon, |e, _| {
        if same(e) {
            1
        } else {
            INTER_CLUSTER_TRAVEL
        }
    }));
    let demand = SlotTable::from_fn(edges, horizon, |e, s| {
        let d = params.demand_profile[s];
        if same(e) {
            (1.0 - q) * d / (nf - 1.0)
        } else {
            q * d / nf
        }
    });
    let pick = |intra: f64, inter: f64| SlotTable::from_fn(edges, horizon, |e, _| if same(e) { intra } else { inter });
    let costs = CostSchedule {
        ride: pick(params.intra_ride_cost, params.inter_ride_cost),
        reroute: pick(params.intra_reroute_cost, params.inter_reroute_cost),
    };
    let placement = |rsp: usize| -> Vec<f64> {
        (0..2 * n)
            .map(|j| {
                if cluster_of(j, n) == rsp {
                    (1.0 - q) * params.capacity / nf
                } else {
                    q * params.capacity / nf
                }
            })
            .collect()
    };
    let instance = ProblemInstance {
        network,
        horizon,
        p_max: params.p_max,
        travel,
        demand,
        costs,
        fleets: FleetConfig {
            capacity: [params.capacity; RSP_COUNT],
            initial_placement: [placement(0), placement(1)],
        },
    };
    instance.ensure_valid()?;
    Ok(instance)
}
