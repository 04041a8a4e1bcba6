//! JSON and CSV forms of solutions. Table keys are `"i,j,l,t"` for trip
//! tables and `"i,j,t"` (or `"i,j,t,m"` with scenarios) for states, with
//! 1-based provider, slot and scenario indices and 0-based node ids.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::equilibrium::gne::{DeviationReport, GneSolution, RspOutcome, SolveSummary};
use crate::equilibrium::monopoly::MonopolySolution;
use crate::error::{Error, Result};
use crate::network::{ProblemInstance, SlotTable, RSP_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GneDocument {
    pub node_count: usize,
    pub horizon: usize,
    pub p_max: f64,
    /// Position-weighted sum over the instance data, used to reject solutions
    /// checked against a different instance of the same shape.
    pub instance_fingerprint: f64,
    pub scenario_weights: Vec<f64>,
    pub prices: BTreeMap<String, f64>,
    pub routing: BTreeMap<String, f64>,
    pub demand: BTreeMap<String, f64>,
    pub states: BTreeMap<String, f64>,
    pub profits: [f64; RSP_COUNT],
    pub potential: f64,
    #[serde(default)]
    pub solver: Option<SolveSummary>,
    #[serde(default)]
    pub deviation: Option<DeviationReport>,
}

fn trip_entries<'a>(
    instance: &'a ProblemInstance,
    prefix: Option<usize>,
    table: &'a SlotTable<f64>,
) -> impl Iterator<Item = (String, f64)> + 'a {
    instance
        .network
        .edges()
        .iter()
        .enumerate()
        .flat_map(move |(e, &(j, l))| {
            (0..instance.horizon).map(move |t| {
                let key = match prefix {
                    Some(i) => format!("{},{j},{l},{}", i + 1, t + 1),
                    None => format!("{j},{l},{}", t + 1),
                };
                (key, table.get(e, t))
            })
        })
}

fn state_entries<'a>(
    instance: &'a ProblemInstance,
    prefix: Option<usize>,
    scenario: Option<usize>,
    table: &'a SlotTable<f64>,
) -> impl Iterator<Item = (String, f64)> + 'a {
    (0..instance.network.node_count()).flat_map(move |j| {
        (0..instance.horizon).map(move |t| {
            let mut key = match prefix {
                Some(i) => format!("{},{j},{}", i + 1, t + 1),
                None => format!("{j},{}", t + 1),
            };
            if let Some(m) = scenario {
                key.push_str(&format!(",{}", m + 1));
            }
            (key, table.get(j, t))
        })
    })
}

fn fingerprint(instance: &ProblemInstance) -> f64 {
    let travel = instance.travel.0.values().iter().map(|&v| f64::from(v));
    let fleets = instance.fleets.initial_placement.iter().flatten().copied();
    instance
        .demand
        .values()
        .iter()
        .chain(instance.costs.ride.values())
        .chain(instance.costs.reroute.values())
        .copied()
        .chain(travel)
        .chain(fleets)
        .chain(instance.fleets.capacity)
        .enumerate()
        .map(|(k, v)| (1.0 + (k % 7) as f64 / 7.0) * v)
        .sum()
}

/// Reads a trip table for provider `prefix`, requiring every entry.
fn read_trip_table(
    instance: &ProblemInstance,
    name: &str,
    map: &BTreeMap<String, f64>,
    prefix: Option<usize>,
) -> Result<SlotTable<f64>> {
    let mut out = SlotTable::filled(instance.network.edge_count(), instance.horizon, 0.0);
    for (e, t) in (0..instance.network.edge_count()).flat_map(|e| (0..instance.horizon).map(move |t| (e, t))) {
        let (j, l) = instance.network.edge(e);
        let key = match prefix {
            Some(i) => format!("{},{j},{l},{}", i + 1, t + 1),
            None => format!("{j},{l},{}", t + 1),
        };
        let v = map
            .get(&key)
            .ok_or_else(|| Error::Format(format!("{name}: missing entry {key:?}")))?;
        out.set(e, t, *v);
    }
    Ok(out)
}

fn read_state_table(
    instance: &ProblemInstance,
    map: &BTreeMap<String, f64>,
    prefix: usize,
    scenario: Option<usize>,
) -> Result<SlotTable<f64>> {
    let mut out = SlotTable::filled(instance.network.node_count(), instance.horizon, 0.0);
    for j in 0..instance.network.node_count() {
        for t in 0..instance.horizon {
            let mut key = format!("{},{j},{}", prefix + 1, t + 1);
            if let Some(m) = scenario {
                key.push_str(&format!(",{}", m + 1));
            }
            let v = map
                .get(&key)
                .ok_or_else(|| Error::Format(format!("states: missing entry {key:?}")))?;
            out.set(j, t, *v);
        }
    }
    Ok(out)
}

impl GneSolution {
    pub fn to_document(&self, instance: &ProblemInstance) -> GneDocument {
        let scenarios = self.scenario_weights.len();
        let mut doc = GneDocument {
            node_count: instance.network.node_count(),
            horizon: instance.horizon,
            p_max: instance.p_max,
            instance_fingerprint: fingerprint(instance),
            scenario_weights: self.scenario_weights.clone(),
            prices: BTreeMap::new(),
            routing: BTreeMap::new(),
            demand: BTreeMap::new(),
            states: BTreeMap::new(),
            profits: [self.rsp[0].profit, self.rsp[1].profit],
            potential: self.potential,
            solver: self.solver.clone(),
            deviation: self.deviation.clone(),
        };
        for (i, r) in self.rsp.iter().enumerate() {
            doc.prices.extend(trip_entries(instance, Some(i), &r.prices));
            doc.routing.extend(trip_entries(instance, Some(i), &r.routing));
            doc.demand.extend(trip_entries(instance, Some(i), &r.demand));
            for (m, x) in r.states.iter().enumerate() {
                let scenario = (scenarios > 1).then_some(m);
                doc.states.extend(state_entries(instance, Some(i), scenario, x));
            }
        }
        doc
    }

    /// Rebuilds a solution; every table entry of the instance must be present.
    pub fn from_document(instance: &ProblemInstance, doc: &GneDocument) -> Result<Self> {
        if doc.node_count != instance.network.node_count() || doc.horizon != instance.horizon {
            return Err(Error::Format(format!(
                "solution is for {} nodes and {} slots, instance has {} and {}",
                doc.node_count,
                doc.horizon,
                instance.network.node_count(),
                instance.horizon
            )));
        }
        if doc.p_max != instance.p_max {
            return Err(Error::Format(format!(
                "solution uses p_max {}, instance has {}",
                doc.p_max, instance.p_max
            )));
        }
        let expected = fingerprint(instance);
        if (doc.instance_fingerprint - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::Format(format!(
                "solution was computed for a different instance (fingerprint {} vs {expected})",
                doc.instance_fingerprint
            )));
        }
        if doc.scenario_weights.is_empty() {
            return Err(Error::Format("scenario_weights must not be empty".into()));
        }
        let scenarios = doc.scenario_weights.len();
        let read = |i: usize| -> Result<RspOutcome> {
            let states = (0..scenarios)
                .map(|m| read_state_table(instance, &doc.states, i, (scenarios > 1).then_some(m)))
                .collect::<Result<Vec<_>>>()?;
            Ok(RspOutcome {
                prices: read_trip_table(instance, "prices", &doc.prices, Some(i))?,
                routing: read_trip_table(instance, "routing", &doc.routing, Some(i))?,
                demand: read_trip_table(instance, "demand", &doc.demand, Some(i))?,
                states,
                profit: doc.profits[i],
            })
        };
        Ok(GneSolution {
            rsp: [read(0)?, read(1)?],
            potential: doc.potential,
            scenario_weights: doc.scenario_weights.clone(),
            solver: doc.solver.clone(),
            deviation: doc.deviation.clone(),
        })
    }

    pub fn to_json(&self, instance: &ProblemInstance) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document(instance))?)
    }

    pub fn from_json(instance: &ProblemInstance, text: &str) -> Result<Self> {
        let doc: GneDocument = serde_json::from_str(text)?;
        Self::from_document(instance, &doc)
    }

    /// Flat CSV, one row per table entry: `table,i,j,l,t,m,value`. Columns
    /// that do not apply are empty.
    pub fn write_csv<W: Write>(&self, instance: &ProblemInstance, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["table", "i", "j", "l", "t", "m", "value"])?;
        for (i, r) in self.rsp.iter().enumerate() {
            for (name, table) in [("price", &r.prices), ("routing", &r.routing), ("demand", &r.demand)] {
                write_trip_rows(&mut w, instance, name, Some(i), table)?;
            }
            for (m, x) in r.states.iter().enumerate() {
                write_state_rows(
                    &mut w,
                    instance,
                    Some(i),
                    (self.scenario_weights.len() > 1).then_some(m),
                    x,
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn write_trip_rows<W: Write>(
    w: &mut csv::Writer<W>,
    instance: &ProblemInstance,
    name: &str,
    owner: Option<usize>,
    table: &SlotTable<f64>,
) -> Result<()> {
    let owner = owner.map_or(String::new(), |i| (i + 1).to_string());
    for (e, &(j, l)) in instance.network.edges().iter().enumerate() {
        for t in 0..instance.horizon {
            w.write_record([
                name,
                &owner,
                &j.to_string(),
                &l.to_string(),
                &(t + 1).to_string(),
                "",
                &table.get(e, t).to_string(),
            ])?;
        }
    }
    Ok(())
}

fn write_state_rows<W: Write>(
    w: &mut csv::Writer<W>,
    instance: &ProblemInstance,
    owner: Option<usize>,
    scenario: Option<usize>,
    table: &SlotTable<f64>,
) -> Result<()> {
    let owner = owner.map_or(String::new(), |i| (i + 1).to_string());
    let scenario = scenario.map_or(String::new(), |m| (m + 1).to_string());
    for j in 0..instance.network.node_count() {
        for t in 0..instance.horizon {
            w.write_record([
                "state",
                &owner,
                &j.to_string(),
                "",
                &(t + 1).to_string(),
                &scenario,
                &table.get(j, t).to_string(),
            ])?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDocument {
    /// Keys `"s,j,l,t"` with 1-based vehicle set `s`.
    pub served: BTreeMap<String, f64>,
    pub routing: BTreeMap<String, f64>,
    /// Keys `"s,j,t"`.
    pub states: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonopolyDocument {
    pub p_max: f64,
    pub merged: bool,
    pub prices: BTreeMap<String, f64>,
    pub routing: BTreeMap<String, f64>,
    pub demand: BTreeMap<String, f64>,
    pub states: BTreeMap<String, f64>,
    pub profit: f64,
    pub solver: SolveSummary,
    pub partition: Option<PartitionDocument>,
}

impl MonopolySolution {
    pub fn to_document(&self, instance: &ProblemInstance) -> MonopolyDocument {
        MonopolyDocument {
            p_max: instance.p_max,
            merged: self.merged,
            prices: trip_entries(instance, None, &self.prices).collect(),
            routing: trip_entries(instance, None, &self.routing).collect(),
            demand: trip_entries(instance, None, &self.demand).collect(),
            states: state_entries(instance, None, None, &self.states).collect(),
            profit: self.profit,
            solver: self.solver.clone(),
            partition: self.partition.as_ref().map(|p| PartitionDocument {
                served: (0..RSP_COUNT)
                    .flat_map(|s| trip_entries(instance, Some(s), &p.served[s]).collect::<Vec<_>>())
                    .collect(),
                routing: (0..RSP_COUNT)
                    .flat_map(|s| trip_entries(instance, Some(s), &p.routing[s]).collect::<Vec<_>>())
                    .collect(),
                states: (0..RSP_COUNT)
                    .flat_map(|s| state_entries(instance, Some(s), None, &p.states[s]).collect::<Vec<_>>())
                    .collect(),
            }),
        }
    }

    pub fn to_json(&self, instance: &ProblemInstance) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document(instance))?)
    }

    /// Flat CSV in the same layout as [`GneSolution::write_csv`]; the `i`
    /// column holds the vehicle set for partition tables.
    pub fn write_csv<W: Write>(&self, instance: &ProblemInstance, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["table", "i", "j", "l", "t", "m", "value"])?;
        for (name, table) in [
            ("price", &self.prices),
            ("routing", &self.routing),
            ("demand", &self.demand),
        ] {
            write_trip_rows(&mut w, instance, name, None, table)?;
        }
        write_state_rows(&mut w, instance, None, None, &self.states)?;
        if let Some(p) = &self.partition {
            for s in 0..RSP_COUNT {
                write_trip_rows(&mut w, instance, "served", Some(s), &p.served[s])?;
                write_trip_rows(&mut w, instance, "set_routing", Some(s), &p.routing[s])?;
                write_state_rows(&mut w, instance, Some(s), None, &p.states[s])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
